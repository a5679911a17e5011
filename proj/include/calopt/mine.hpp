// Mutual information neural estimation via the Donsker-Varadhan bound, plus
// an independent Kraskov k-NN estimator used only for cross-checks.
#pragma once

#include <cstdint>
#include <vector>

#include "calopt/autodiff.hpp"
#include "calopt/nn.hpp"

namespace calopt {

// Statistics network T(x, y): two 3-layer encoders feeding a 2-layer joint
// head. `ema` tracks the exp-term denominator for the bias-corrected gradient.
struct MineNetwork {
  ParamSet x_encoder, y_encoder, head;
  std::size_t x_dim = 1, y_dim = 1;
  std::size_t hidden = 64;
  double ema = 0.0;
  double ema_decay = 0.99;
  bool ema_ready = false;

  static MineNetwork make(std::size_t x_dim, std::size_t y_dim,
                          std::uint64_t seed, std::size_t hidden = 64);
};

struct MiEstimate {
  double value_nats = 0.0;
  std::vector<double> trace;  // epoch-wise bound
};

struct MineConfig {
  std::size_t epochs = 2000;
  double lr_init = 1e-2;
  std::size_t batch_size = 128;
  std::size_t hidden = 64;
};

// Donsker-Varadhan bound for a fixed network:
// mean(T over joint) - log-mean-exp(T over marginal).
// `joint_*` and `marginal_*` are row-major M x dim batches.
double dv_bound(const MineNetwork& net, const std::vector<double>& joint_x,
                const std::vector<double>& joint_y,
                const std::vector<double>& marginal_x,
                const std::vector<double>& marginal_y, std::size_t m_joint,
                std::size_t m_marginal);

// Trains a freshly initialized network by gradient ascent on the DV bound.
// x is M x U, y is M x V (row-major, flattened). Inputs are standardized
// per dimension before training. Deterministic in seed.
MiEstimate estimate_mi(const std::vector<double>& x,
                       const std::vector<double>& y, std::size_t m,
                       std::size_t u, std::size_t v, std::uint64_t seed,
                       const MineConfig& config = {});

// Kraskov-Stoegbauer-Grassberger estimator (algorithm 1, max-norm).
// Validation oracle only; never used in the optimization path.
double knn_mi(const std::vector<double>& x, const std::vector<double>& y,
              std::size_t m, std::size_t u, std::size_t v, std::size_t k = 3);

}  // namespace calopt
