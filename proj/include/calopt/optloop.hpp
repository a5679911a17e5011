// Outer optimization loop: candidate sampling, simulation dispatch,
// objective/surrogate training, constrained inner gradient descent on the
// design vector, and transfer-learning state between iterations.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "calopt/calosim.hpp"
#include "calopt/candidates.hpp"
#include "calopt/flow1d.hpp"
#include "calopt/mi_surrogate.hpp"
#include "calopt/mine.hpp"
#include "calopt/reco_objective.hpp"
#include "calopt/rng.hpp"

namespace calopt {

enum class Variant { MiOpt, RecoOpt };

std::string variant_name(Variant v);

struct LoopConfig {
  Variant variant = Variant::RecoOpt;
  std::size_t pairs = 1;       // layers; F = 2 * pairs
  std::size_t candidates = 0;  // K; 0 resolves to the variant default (30/117)
  std::size_t events = 700;    // M per candidate
  double sigma_cm = 1.5;       // candidate sampling width
  double epsilon_cm = 1.5;     // inner-descent locality radius
  std::size_t iterations = 50;
  double energy_min_gev = 1.0, energy_max_gev = 20.0;
  std::vector<double> theta0;  // empty => 1.0 cm everywhere
  double thickness_cap_cm = 25.0;
  double penalty_weight = 10.0;  // per (cm over cap)^2
  double inner_lr = 0.05;
  std::size_t inner_steps = 200;
  bool transfer_learning = true;
  std::uint64_t master_seed = 0;

  // Training budgets; defaults follow the full-scale settings, presets may
  // scale them down for desk-sized studies.
  std::size_t mine_epochs = 2000;
  std::size_t mine_hidden = 64;
  double reco_epoch_scale = 1.0;
  double flow_epoch_scale = 1.0;
  std::size_t mi_surrogate_epochs = 150;
  std::size_t grad_samples = 0;  // z draws for the flow gradient; 0 => events

  ShowerModel shower;
  std::string checkpoint_dir;  // non-empty: persist TL state to disk

  std::size_t features() const { return 2 * pairs; }
  std::size_t resolved_candidates() const;
  std::vector<double> resolved_theta0() const;
  void validate() const;
};

struct IterationRecord {
  std::size_t iteration = 0;
  std::vector<double> theta;
  double objective = 0.0;       // MI in nats, or mean reconstruction loss
  double surrogate_pred = 0.0;  // surrogate metric at the updated theta
  double scint_sum = 0.0, abs_sum = 0.0;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  bool aborted = false;
  bool initial = false;
};

struct EvolutionRecord {
  std::vector<IterationRecord> rows;
  bool failed = false;
  std::string failure;
};

// Transfer-learning state carried between iterations. The MINE network is
// never part of it; it is re-initialized on every estimate.
struct IterationState {
  std::vector<double> theta;
  std::size_t iteration = 0;
  std::optional<RecoModel> reco;      // RECO-OPT objective model
  std::optional<FlowModel> flow;      // RECO-OPT surrogate
  std::optional<MiSurrogate> mi_surr; // MI-OPT surrogate
  RunningStats theta_stats, delta_stats;
};

std::vector<std::vector<double>> sample_candidates(
    const std::vector<double>& theta, double sigma, std::size_t k, Rng& rng);

using GradientSource =
    std::function<std::vector<double>(const std::vector<double>&)>;

// Penalized projected gradient steps confined to an epsilon-ball around the
// start; `sign` is +1 to descend the surrogate metric, -1 to ascend it.
// Returns the last in-region iterate.
std::vector<double> inner_descent(const GradientSource& surrogate_grad,
                                  const std::vector<double>& theta_start,
                                  double sign, const LoopConfig& config);

IterationRecord run_iteration(IterationState& state, const LoopConfig& config);

using RowCallback = std::function<void(const IterationRecord&)>;

EvolutionRecord run_study(const LoopConfig& config,
                          const RowCallback& on_row = nullptr);

}  // namespace calopt
