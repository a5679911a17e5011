#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "calopt/calosim.hpp"
#include "calopt/rng.hpp"

using namespace calopt;

TEST_CASE("sample_energies stays in range and is deterministic") {
  auto e1 = sample_energies(1.0, 20.0, 700, 5);
  auto e2 = sample_energies(1.0, 20.0, 700, 5);
  CHECK(e1.size() == 700);
  CHECK(e1 == e2);
  for (double e : e1) {
    CHECK(e >= 1.0);
    CHECK(e <= 20.0);
  }
  auto wide = sample_energies(1.0, 100.0, 700, 6);
  CHECK(*std::max_element(wide.begin(), wide.end()) > 20.0);

  auto tiny = sample_energies(5.0, 5.000001, 3, 7);
  for (double e : tiny) CHECK(e == doctest::Approx(5.0).epsilon(1e-6));

  CHECK_THROWS(sample_energies(20.0, 1.0, 10, 0));
  CHECK_THROWS(sample_energies(-1.0, 5.0, 10, 0));
}

TEST_CASE("regularized lower incomplete gamma against analytic values") {
  CHECK(regularized_lower_gamma(1.0, 1.0) ==
        doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-9));
  CHECK(regularized_lower_gamma(1.0, 0.0) == doctest::Approx(0.0));
  CHECK(regularized_lower_gamma(3.7, 0.0) == doctest::Approx(0.0));
  // P(0.5, x) = erf(sqrt(x))
  CHECK(regularized_lower_gamma(0.5, 2.0) ==
        doctest::Approx(std::erf(std::sqrt(2.0))).epsilon(1e-9));
  CHECK(regularized_lower_gamma(0.5, 2.0) == doctest::Approx(0.954500).epsilon(1e-5));
  CHECK(regularized_lower_gamma(4.0, 200.0) == doctest::Approx(1.0).epsilon(1e-12));
  // Monotone in x.
  double prev = 0.0;
  for (double x = 0.0; x <= 30.0; x += 0.25) {
    double v = regularized_lower_gamma(4.7237, x);
    CHECK(v >= prev);
    prev = v;
  }
  CHECK_THROWS(regularized_lower_gamma(-1.0, 1.0));
  CHECK_THROWS(regularized_lower_gamma(1.0, -0.5));
}

TEST_CASE("zero-thickness detector deposits nothing") {
  DesignVector d{{0.0, 0.0}};
  auto batch = simulate(d, sample_energies(1.0, 20.0, 50, 1), ShowerModel{}, 2);
  for (const auto& row : batch.deposits)
    for (double v : row) CHECK(v == 0.0);
}

TEST_CASE("deep single-scintillator detector contains the shower") {
  // 25 cm of scintillator, no absorber: with the shower starting at the
  // front face, depth ~ 28 radiation lengths contains > 99% at 10 GeV.
  DesignVector d{{0.0, 25.0}};
  ShowerModel m;
  auto dep = ideal_deposits(d, 10.0, 0.0, m);
  REQUIRE(dep.size() == 1);
  CHECK(dep[0] > 0.99 * 10.0);
  CHECK(dep[0] <= 10.0);
}

TEST_CASE("ideal deposits match independent quadrature of the profile") {
  ShowerModel m;
  DesignVector d{{1.3, 4.0, 0.5, 7.5}};
  double energy = 10.0;
  double t0 = 0.8;
  double a = 1.0 + m.profile_b *
                       (std::log(energy / m.critical_energy_gev) + m.photon_offset);
  // Segment boundaries in radiation-length units.
  std::vector<double> edges = {0.0};
  for (std::size_t i = 0; i < d.thickness_cm.size(); ++i) {
    double x0 = (i % 2 == 0) ? m.x0_absorber_cm : m.x0_scintillator_cm;
    edges.push_back(edges.back() + d.thickness_cm[i] / x0);
  }
  auto gamma_pdf = [&](double s) {
    return s <= 0.0 ? 0.0
                    : std::exp((a - 1.0) * std::log(s) - s - std::lgamma(a));
  };
  auto dep = ideal_deposits(d, energy, t0, m);
  REQUIRE(dep.size() == 2);
  for (std::size_t j = 0; j < 2; ++j) {
    double lo = m.profile_b * std::max(0.0, edges[2 * j + 1] - t0);
    double hi = m.profile_b * std::max(0.0, edges[2 * j + 2] - t0);
    // Simpson quadrature of the Gamma(a,1) density over [lo, hi].
    std::size_t n = 20000;
    double h = (hi - lo) / n;
    double sum = gamma_pdf(lo) + gamma_pdf(hi);
    for (std::size_t i = 1; i < n; ++i)
      sum += gamma_pdf(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    double integral = sum * h / 3.0;
    CHECK(dep[j] == doctest::Approx(energy * integral).epsilon(1e-6));
  }
}

TEST_CASE("larger scintillator never decreases its own ideal deposit") {
  ShowerModel m;
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> th = {rng.uniform(0.0, 3.0), rng.uniform(0.1, 8.0),
                              rng.uniform(0.0, 3.0), rng.uniform(0.1, 8.0)};
    double e = rng.uniform(1.0, 20.0);
    double t0 = rng.uniform(0.0, 2.0);
    std::size_t which = rng.uniform() < 0.5 ? 1 : 3;
    auto base = ideal_deposits(DesignVector{th}, e, t0, m);
    th[which] += rng.uniform(0.1, 2.0);
    auto bigger = ideal_deposits(DesignVector{th}, e, t0, m);
    CHECK(bigger[which / 2] >= base[which / 2] - 1e-12);
  }
}

TEST_CASE("energy conservation holds per event") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> th(6);
    for (auto& v : th) v = rng.uniform(0.0, 6.0);
    auto batch = simulate(DesignVector{th}, sample_energies(1.0, 20.0, 200, trial),
                          ShowerModel{}, 1000 + trial);
    for (std::size_t i = 0; i < batch.events(); ++i) {
      double sum = 0.0;
      for (double v : batch.deposits[i]) {
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(sum <= batch.energies_gev[i] * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("simulation is deterministic in seed") {
  DesignVector d{{1.0, 1.0}};
  auto e = sample_energies(1.0, 20.0, 100, 3);
  auto b1 = simulate(d, e, ShowerModel{}, 9);
  auto b2 = simulate(d, e, ShowerModel{}, 9);
  CHECK(b1.deposits == b2.deposits);
  auto b3 = simulate(d, e, ShowerModel{}, 10);
  CHECK(b1.deposits != b3.deposits);
}

TEST_CASE("containment grows with scintillator depth") {
  auto containment = [](double scint_cm) {
    DesignVector d{{0.5, scint_cm}};
    auto e = sample_energies(5.0, 5.0001, 4000, 17);
    auto b = simulate(d, e, ShowerModel{}, 18);
    double frac = 0.0;
    for (std::size_t i = 0; i < b.events(); ++i)
      frac += b.deposits[i][0] / b.energies_gev[i];
    return frac / static_cast<double>(b.events());
  };
  double c2 = containment(2.0), c8 = containment(8.0), c20 = containment(20.0);
  CHECK(c8 > c2);
  CHECK(c20 > c8);
  CHECK(c20 > 0.85);
}

TEST_CASE("design vector validation") {
  CHECK_THROWS(DesignVector{{1.0}}.validate());
  CHECK_THROWS(DesignVector{{1.0, -0.1}}.validate());
  CHECK_THROWS(DesignVector{{1, 1, 1, 1, 1, 1, 1, 1}}.validate());
  DesignVector d{{0.3, 1.5, 0.7, 2.5}};
  d.validate();
  CHECK(d.scintillator_sum() == doctest::Approx(4.0));
  CHECK(d.absorber_sum() == doctest::Approx(1.0));
  CHECK(d.total() == doctest::Approx(5.0));
}

TEST_CASE("event dump has the documented header") {
  DesignVector d{{1.0, 2.0, 1.0, 2.0}};
  auto b = simulate(d, sample_energies(1.0, 20.0, 5, 1), ShowerModel{}, 2);
  auto path =
      (std::filesystem::temp_directory_path() / "calopt_events.csv").string();
  dump_events_csv(b, path);
  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  CHECK(header == "event,energy_gev,dep_1,dep_2");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(f, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 5);
  std::remove(path.c_str());
}
