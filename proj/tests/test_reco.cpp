#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "calopt/calosim.hpp"
#include "calopt/reco_objective.hpp"
#include "calopt/rng.hpp"

using namespace calopt;

namespace {

CandidateSet make_candidates(const std::vector<std::vector<double>>& thetas,
                             std::size_t events, std::uint64_t seed) {
  CandidateSet set;
  for (std::size_t k = 0; k < thetas.size(); ++k) {
    Candidate c;
    c.design = DesignVector{thetas[k]};
    c.batch = simulate(c.design, sample_energies(1.0, 20.0, events, seed + k),
                       ShowerModel{}, seed + 1000 + k);
    set.push_back(std::move(c));
  }
  return set;
}

}  // namespace

TEST_CASE("near-optimal detector reconstructs energy accurately") {
  // 24 cm scintillator contains the shower; deposits track energy up to the
  // resolution smear, so a trained model gets within a few percent.
  std::vector<std::vector<double>> thetas;
  Rng rng(3);
  for (int k = 0; k < 6; ++k)
    thetas.push_back({rng.uniform(0.0, 0.3), 24.0 + rng.uniform(-1.0, 1.0)});
  CandidateSet set = make_candidates(thetas, 250, 11);
  RecoTrainOptions opt;
  opt.epoch_scale = 0.5;
  auto res = train_reco(set, opt, nullptr, nullptr, 5);

  double rel = 0.0;
  std::size_t n = 0;
  for (const auto& c : set) {
    auto deltas = per_event_delta(res.model, c.batch, c.design.thickness_cm);
    for (double d : deltas) {
      rel += std::sqrt(d);
      ++n;
    }
  }
  CHECK(rel / static_cast<double>(n) < 0.05);
}

TEST_CASE("zero-thickness detector collapses to the mean energy") {
  CandidateSet set = make_candidates({{0.0, 0.0}, {0.0, 0.0}}, 300, 21);
  RecoTrainOptions opt;
  opt.epoch_scale = 0.5;
  auto res = train_reco(set, opt, nullptr, nullptr, 6);
  // All deposits are zero, so predictions cannot depend on the event.
  double first = res.model.predict(set[0].batch.deposits[0],
                                   set[0].design.thickness_cm);
  for (std::size_t i = 1; i < 10; ++i)
    CHECK(res.model.predict(set[0].batch.deposits[i],
                            set[0].design.thickness_cm) ==
          doctest::Approx(first).epsilon(1e-9));
  // The constant should sit near the energy mean (10.5 for uniform 1-20).
  CHECK(first > 7.0);
  CHECK(first < 14.0);
}

TEST_CASE("per-event delta is the squared relative error") {
  CandidateSet set = make_candidates({{0.5, 3.0}}, 50, 31);
  RecoTrainOptions opt;
  opt.epoch_scale = 0.05;
  auto res = train_reco(set, opt, nullptr, nullptr, 7);
  auto deltas =
      per_event_delta(res.model, set[0].batch, set[0].design.thickness_cm);
  REQUIRE(deltas.size() == 50);
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    CHECK(deltas[i] >= 0.0);
    double xhat = res.model.predict(set[0].batch.deposits[i],
                                    set[0].design.thickness_cm);
    double x = set[0].batch.energies_gev[i];
    CHECK(deltas[i] == doctest::Approx(((xhat - x) / x) * ((xhat - x) / x))
                           .epsilon(1e-9));
  }
}

TEST_CASE("warm start does not hurt on identical data") {
  CandidateSet set = make_candidates({{1.0, 6.0}, {0.3, 10.0}}, 150, 41);
  RecoTrainOptions opt;
  opt.epoch_scale = 0.25;
  auto cold = train_reco(set, opt, nullptr, nullptr, 8);
  auto warm = train_reco(set, opt, &cold.model.psi, &cold.model.stats, 8);
  CHECK(warm.trace.epoch_loss.front() <= cold.trace.epoch_loss.front());
}

TEST_CASE("warm start with mismatched shapes is rejected") {
  CandidateSet one_pair = make_candidates({{1.0, 6.0}}, 60, 51);
  CandidateSet two_pair = make_candidates({{1.0, 6.0, 1.0, 6.0}}, 60, 52);
  RecoTrainOptions opt;
  opt.epoch_scale = 0.05;
  auto small = train_reco(one_pair, opt, nullptr, nullptr, 9);
  CHECK_THROWS(train_reco(two_pair, opt, &small.model.psi, nullptr, 9));
}

TEST_CASE("frozen statistics are carried through unchanged") {
  CandidateSet set = make_candidates({{1.0, 4.0}}, 80, 61);
  RecoTrainOptions opt;
  opt.epoch_scale = 0.05;
  auto first = train_reco(set, opt, nullptr, nullptr, 10);
  RecoStats stats = first.model.stats;
  auto second = train_reco(set, opt, &first.model.psi, &stats, 11);
  CHECK(second.model.stats.in_mean == stats.in_mean);
  CHECK(second.model.stats.target_mean == stats.target_mean);
}
