// Parametric calorimeter response: photons on alternating lead absorber /
// lead-tungstate scintillator segments. Longitudinal development follows a
// Gamma profile in radiation-length units; only energy deposited in the
// scintillator segments is recorded.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace calopt {

// Thicknesses in cm, ordered [absorber_1, scintillator_1, absorber_2, ...].
struct DesignVector {
  std::vector<double> thickness_cm;

  std::size_t features() const { return thickness_cm.size(); }
  std::size_t pairs() const { return thickness_cm.size() / 2; }
  void validate() const;

  double scintillator_sum() const;
  double absorber_sum() const;
  double total() const;
};

struct EventBatch {
  std::vector<double> energies_gev;            // M
  std::vector<std::vector<double>> deposits;   // M x V, GeV
  std::size_t events() const { return energies_gev.size(); }
  std::size_t segments() const {
    return deposits.empty() ? 0 : deposits[0].size();
  }
};

struct ShowerModel {
  double x0_absorber_cm = 0.5612;
  double x0_scintillator_cm = 0.8904;
  double critical_energy_gev = 0.0096;
  double profile_b = 0.5;
  double photon_offset = 0.5;
  double conversion_mean_x0 = 9.0 / 7.0;
  double stochastic_term = 0.10;   // / sqrt(E)
  double constant_term = 0.01;
  bool smearing = true;

  void validate() const;
};

// M independent uniform draws in [range_min, range_max], deterministic in seed.
std::vector<double> sample_energies(double range_min_gev, double range_max_gev,
                                    std::size_t count, std::uint64_t seed);

// Regularized lower incomplete gamma P(a, x): series for x < a+1, continued
// fraction otherwise. Absolute error below 1e-10.
double regularized_lower_gamma(double a, double x);

// Ideal (noise-free) per-segment deposits for one event with a fixed
// conversion depth t0 (radiation-length units). Exposed for the quadrature
// oracle and used internally by simulate().
std::vector<double> ideal_deposits(const DesignVector& design,
                                   double energy_gev, double t0_x0,
                                   const ShowerModel& model);

EventBatch simulate(const DesignVector& design,
                    const std::vector<double>& energies_gev,
                    const ShowerModel& model, std::uint64_t seed);

// CSV dump: header `event,energy_gev,dep_1,...,dep_V`.
void dump_events_csv(const EventBatch& batch, const std::string& path);

}  // namespace calopt
