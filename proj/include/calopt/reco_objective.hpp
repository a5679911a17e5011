// Reconstruction objective model: an MLP mapping (deposits, design) to the
// true energy; the per-event objective is the relative squared error.
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "calopt/autodiff.hpp"
#include "calopt/candidates.hpp"
#include "calopt/nn.hpp"

namespace calopt {

// Standardization statistics for inputs (V deposits then F thicknesses) and
// the energy target. Frozen across iterations when transfer learning is on.
struct RecoStats {
  std::vector<double> in_mean, in_inv_std;
  double target_mean = 0.0, target_inv_std = 1.0;
};

struct RecoModel {
  ParamSet psi;
  std::size_t v = 1, f = 2;
  RecoStats stats;

  double predict(const std::vector<double>& deposits,
                 const std::vector<double>& theta) const;
};

struct RecoTrainOptions {
  // Stage epochs scale with epoch_scale; rates are fixed.
  double epoch_scale = 1.0;  // 1.0 => 200 + 200 epochs at 4e-4 / 1e-5
  std::size_t batch_size = 128;
};

struct RecoTrainResult {
  RecoModel model;
  TrainResult trace;
};

// Trains on the pooled K*M rows of a candidate set. `warm_start` (transfer
// learning) and `frozen_stats` both come from the previous iteration when
// present.
RecoTrainResult train_reco(const CandidateSet& candidates,
                           const RecoTrainOptions& options,
                           const ParamSet* warm_start,
                           const RecoStats* frozen_stats, std::uint64_t seed);

// delta_m = ((xhat_m - x_m) / x_m)^2 for each event of the batch.
std::vector<double> per_event_delta(const RecoModel& model,
                                    const EventBatch& batch,
                                    const std::vector<double>& theta);

}  // namespace calopt
