// Deterministic MLP surrogate from design parameters to the mutual
// information metric.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "calopt/autodiff.hpp"
#include "calopt/nn.hpp"

namespace calopt {

// Per-column running moments accumulated across transfer-learning
// iterations, so warm-started weights stay calibrated.
struct RunningStats {
  std::vector<double> mean, m2;
  double count = 0.0;

  void resize(std::size_t d) {
    mean.assign(d, 0.0);
    m2.assign(d, 0.0);
    count = 0.0;
  }
  void update(const std::vector<double>& row) {
    count += 1.0;
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double d = row[i] - mean[i];
      mean[i] += d / count;
      m2[i] += d * (row[i] - mean[i]);
    }
  }
  double std_dev(std::size_t i) const {
    if (count < 2.0) return 1.0;
    const double s = std::sqrt(m2[i] / count);
    return s > 1e-12 ? s : 1.0;
  }
};

struct MiSurrogate {
  ParamSet omega;  // 4-layer MLP: F -> 64 -> 64 -> 64 -> 1
  std::size_t f = 2;
  std::vector<double> th_mean, th_inv_std;
  double d_mean = 0.0, d_inv_std = 1.0;

  double predict(const std::vector<double>& theta) const;
};

struct MiSurrogateOptions {
  std::size_t epochs = 150;
  double lr_init = 5e-2;
};

struct MiSurrogateResult {
  MiSurrogate model;
  double final_mse = 0.0;  // on standardized targets
};

// MSE fit of delta on theta over K rows. Requires K >= F + 1 and
// non-degenerate inputs. `theta_stats`/`delta_stats` supply the (running)
// standardization; warm_start continues from previous weights.
MiSurrogateResult train_mi_surrogate(
    const std::vector<std::vector<double>>& thetas,
    const std::vector<double>& deltas, const RunningStats& theta_stats,
    const RunningStats& delta_stats, const ParamSet* warm_start,
    const MiSurrogateOptions& options, std::uint64_t seed);

// Gradient of the predicted metric with respect to theta.
std::vector<double> mi_surrogate_grad(const MiSurrogate& model,
                                      const std::vector<double>& theta);

}  // namespace calopt
