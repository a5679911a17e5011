// Conditional one-dimensional piecewise-linear normalizing flow over the
// log reconstruction loss. A conditioner MLP maps (energy, design) to bin
// masses; the resulting piecewise-linear CDF, with exponential leak tails,
// is composed with the standard-normal quantile function.
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "calopt/autodiff.hpp"
#include "calopt/nn.hpp"

namespace calopt {

struct FlowSpec {
  double w_min = -10.0, w_max = 2.0;  // support of log delta
  std::size_t n_bins = 32;
  double tail_slope = 1e-3;  // boundary density of the leak tails
  std::size_t cond_dim = 3;  // 1 (energy) + F
  std::size_t hidden = 64;
  std::uint64_t seed = 0;

  void validate() const;
  double width() const { return w_max - w_min; }
  // Total unnormalized mass: interior 1 plus two exponential tails of mass
  // tail_slope each.
  double norm() const { return 1.0 + 2.0 * tail_slope; }
};

struct FlowModel {
  FlowSpec spec;
  ParamSet conditioner;  // 3-layer MLP: cond_dim -> hidden -> hidden -> n_bins
  std::vector<double> cond_mean, cond_inv_std;

  static FlowModel make(FlowSpec spec);
  // Bin masses q (softmax over conditioner scores) for one raw condition.
  std::vector<double> bin_masses(const std::vector<double>& condition) const;
};

struct FlowForwardResult {
  double u = 0.0;
  double logdet = 0.0;  // log |du/dw|
};

FlowForwardResult flow_forward(const FlowModel& model, double w,
                               const std::vector<double>& condition);
double flow_inverse(const FlowModel& model, double u,
                    const std::vector<double>& condition);

// Model log-density of w given the condition (the NLL integrand).
double flow_log_density(const FlowModel& model, double w,
                        const std::vector<double>& condition);

// Mean negative log-likelihood over rows of (log delta, condition).
double flow_nll(const FlowModel& model, const std::vector<double>& w,
                const std::vector<std::vector<double>>& conditions);

struct FlowTrainOptions {
  double epoch_scale = 1.0;  // 1.0 => 3 x 200 epochs at 3e-4 / 1e-4 / 1e-5
  std::size_t batch_size = 128;
};

// Trains the conditioner by NLL minimization. Support [w_min, w_max] and the
// condition standardization come from the supplied spec/model state; pass
// warm_start to continue from a previous iteration's weights.
TrainResult train_flow(FlowModel& model, const std::vector<double>& w,
                       const std::vector<std::vector<double>>& conditions,
                       const FlowTrainOptions& options, std::uint64_t seed);

// Support selection: [min(w), max(w)] widened by 3 median-absolute-deviations.
std::pair<double, double> flow_support(const std::vector<double>& w);

// Condition standardization from data (mean / std per column).
void fit_condition_stats(FlowModel& model,
                         const std::vector<std::vector<double>>& conditions);

struct SurrogateGradient {
  std::vector<double> grad_theta;  // d mean(delta_hat) / d theta
  double mean_delta = 0.0;
};

// Gradient of (1/M) sum_m exp(flow_inverse(z_m; x_m, theta)) with respect to
// theta, for fixed flow weights.
SurrogateGradient surrogate_grad_theta(const FlowModel& model,
                                       const std::vector<double>& x_batch,
                                       const std::vector<double>& theta,
                                       const std::vector<double>& z_batch);

// log(max(delta, 1e-12)) applied elementwise.
std::vector<double> log_clipped(const std::vector<double>& delta);

}  // namespace calopt
