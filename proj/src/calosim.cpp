#include "calopt/calosim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "calopt/rng.hpp"

namespace calopt {

void DesignVector::validate() const {
  const std::size_t f = thickness_cm.size();
  if (f % 2 != 0 || f < 2 || f > 6)
    throw std::invalid_argument(
        "DesignVector: feature count must be even and in {2,4,6}");
  for (double t : thickness_cm)
    if (!(t >= 0.0))
      throw std::invalid_argument("DesignVector: thickness must be >= 0");
}

double DesignVector::scintillator_sum() const {
  double s = 0.0;
  for (std::size_t i = 1; i < thickness_cm.size(); i += 2) s += thickness_cm[i];
  return s;
}

double DesignVector::absorber_sum() const {
  double s = 0.0;
  for (std::size_t i = 0; i < thickness_cm.size(); i += 2) s += thickness_cm[i];
  return s;
}

double DesignVector::total() const {
  double s = 0.0;
  for (double t : thickness_cm) s += t;
  return s;
}

void ShowerModel::validate() const {
  if (x0_absorber_cm <= 0 || x0_scintillator_cm <= 0 ||
      critical_energy_gev <= 0 || profile_b <= 0 || conversion_mean_x0 <= 0 ||
      stochastic_term <= 0 || constant_term <= 0)
    throw std::invalid_argument("ShowerModel: constants must be positive");
}

std::vector<double> sample_energies(double range_min_gev, double range_max_gev,
                                    std::size_t count, std::uint64_t seed) {
  if (!(range_min_gev > 0.0) || !(range_min_gev < range_max_gev))
    throw std::invalid_argument("sample_energies: need 0 < min < max");
  if (count < 1) throw std::invalid_argument("sample_energies: count >= 1");
  Rng rng(derive_seed(seed, {0x656e6572ULL}));
  std::vector<double> out(count);
  for (auto& e : out) e = rng.uniform(range_min_gev, range_max_gev);
  return out;
}

namespace {

// Series expansion; converges for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-16)
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw std::runtime_error("regularized_lower_gamma: series did not converge");
}

// Lentz continued fraction for Q(a, x); converges for x >= a + 1.
double gamma_q_contfrac(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16)
      return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw std::runtime_error(
      "regularized_lower_gamma: continued fraction did not converge");
}

}  // namespace

double regularized_lower_gamma(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0))
    throw std::domain_error("regularized_lower_gamma: need a > 0, x >= 0");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_contfrac(a, x);
}

std::vector<double> ideal_deposits(const DesignVector& design,
                                   double energy_gev, double t0_x0,
                                   const ShowerModel& model) {
  const double b = model.profile_b;
  const double a =
      1.0 + b * (std::log(energy_gev / model.critical_energy_gev) +
                 model.photon_offset);
  std::vector<double> deposits;
  deposits.reserve(design.pairs());
  double depth_x0 = 0.0;  // cumulative radiation-length coordinate
  for (std::size_t i = 0; i < design.thickness_cm.size(); ++i) {
    const bool scint = (i % 2 == 1);
    const double x0 = scint ? model.x0_scintillator_cm : model.x0_absorber_cm;
    const double t_start = depth_x0;
    depth_x0 += design.thickness_cm[i] / x0;
    if (!scint) continue;
    const double lo = std::max(0.0, t_start - t0_x0);
    const double hi = std::max(0.0, depth_x0 - t0_x0);
    double frac = 0.0;
    if (hi > lo)
      frac = regularized_lower_gamma(a, b * hi) -
             regularized_lower_gamma(a, b * lo);
    deposits.push_back(energy_gev * std::max(0.0, frac));
  }
  return deposits;
}

EventBatch simulate(const DesignVector& design,
                    const std::vector<double>& energies_gev,
                    const ShowerModel& model, std::uint64_t seed) {
  design.validate();
  model.validate();
  for (double e : energies_gev)
    if (!(e > 0.0))
      throw std::invalid_argument("simulate: energies must be positive");

  Rng rng(derive_seed(seed, {0x73696d75ULL}));
  EventBatch batch;
  batch.energies_gev = energies_gev;
  batch.deposits.reserve(energies_gev.size());
  for (double energy : energies_gev) {
    const double t0 = rng.exponential(model.conversion_mean_x0);
    std::vector<double> dep = ideal_deposits(design, energy, t0, model);
    if (model.smearing) {
      const double rel = std::sqrt(model.stochastic_term * model.stochastic_term / energy +
                                   model.constant_term * model.constant_term);
      double factor = std::max(0.0, 1.0 + rng.normal() * rel);
      double total = 0.0;
      for (double d : dep) total += d;
      // Conservation: the smeared sum may never exceed the event energy.
      if (total > 0.0 && factor * total > energy) factor = energy / total;
      for (double& d : dep) d = std::max(0.0, d * factor);
    }
    batch.deposits.push_back(std::move(dep));
  }
  return batch;
}

void dump_events_csv(const EventBatch& batch, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("dump_events_csv: cannot open " + path);
  f << "event,energy_gev";
  for (std::size_t j = 0; j < batch.segments(); ++j) f << ",dep_" << j + 1;
  f << "\n";
  char buf[64];
  for (std::size_t m = 0; m < batch.events(); ++m) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g", m, batch.energies_gev[m]);
    f << buf;
    for (double d : batch.deposits[m]) {
      std::snprintf(buf, sizeof buf, ",%.17g", d);
      f << buf;
    }
    f << "\n";
  }
}

}  // namespace calopt
