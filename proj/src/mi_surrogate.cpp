#include "calopt/mi_surrogate.hpp"

#include <cmath>
#include <stdexcept>

#include "calopt/rng.hpp"

namespace calopt {

double MiSurrogate::predict(const std::vector<double>& theta) const {
  if (theta.size() != f)
    throw std::invalid_argument("MiSurrogate::predict: width mismatch");
  std::vector<double> row(f);
  for (std::size_t i = 0; i < f; ++i)
    row[i] = (theta[i] - th_mean[i]) * th_inv_std[i];
  Tape tape;
  auto bound = tape.bind(omega);
  NodeId out = mlp_apply(tape, bound, tape.constant(Tensor::row(row)), 4);
  return tape.value(out).values[0] / d_inv_std + d_mean;
}

MiSurrogateResult train_mi_surrogate(
    const std::vector<std::vector<double>>& thetas,
    const std::vector<double>& deltas, const RunningStats& theta_stats,
    const RunningStats& delta_stats, const ParamSet* warm_start,
    const MiSurrogateOptions& options, std::uint64_t seed) {
  const std::size_t k = thetas.size();
  if (k == 0 || k != deltas.size())
    throw std::invalid_argument("train_mi_surrogate: row mismatch");
  const std::size_t f = thetas.front().size();
  if (k < f + 1)
    throw std::invalid_argument(
        "train_mi_surrogate: need at least F+1 rows, got " +
        std::to_string(k));
  bool degenerate = true;
  for (std::size_t i = 1; i < k && degenerate; ++i)
    if (thetas[i] != thetas[0]) degenerate = false;
  if (degenerate)
    throw std::invalid_argument("train_mi_surrogate: all designs identical");

  MiSurrogateResult result;
  MiSurrogate& m = result.model;
  m.f = f;
  m.th_mean.resize(f);
  m.th_inv_std.resize(f);
  for (std::size_t i = 0; i < f; ++i) {
    m.th_mean[i] = theta_stats.mean[i];
    m.th_inv_std[i] = 1.0 / theta_stats.std_dev(i);
  }
  m.d_mean = delta_stats.mean[0];
  m.d_inv_std = 1.0 / delta_stats.std_dev(0);

  MlpSpec spec{{f, 64, 64, 64, 1}, derive_seed(seed, {0x6d697375ULL})};
  if (warm_start) {
    ParamSet fresh = mlp_init(spec);
    for (const auto& [name, t] : fresh.params) {
      auto it = warm_start->params.find(name);
      if (it == warm_start->params.end() || it->second.shape != t.shape)
        throw ShapeError("train_mi_surrogate: warm-start shape mismatch");
    }
    m.omega = *warm_start;
    m.omega.zero_grads();
  } else {
    m.omega = mlp_init(spec);
  }

  Tensor xb = Tensor::zeros({k, f});
  Tensor yb = Tensor::zeros({k, 1});
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t c = 0; c < f; ++c)
      xb.at(r, c) = (thetas[r][c] - m.th_mean[c]) * m.th_inv_std[c];
    yb.values[r] = (deltas[r] - m.d_mean) * m.d_inv_std;
  }

  // Full batch: at most the candidate count (<= 117 rows).
  LrSchedule sched = LrSchedule::exp_decay(options.lr_init, options.epochs);
  auto loss = [&](Tape& tape, const std::map<std::string, NodeId>& bound,
                  std::span<const std::size_t>) {
    NodeId pred = mlp_apply(tape, bound, tape.constant(xb), 4);
    NodeId neg_y = tape.affine(tape.constant(yb), -1.0, 0.0);
    return tape.mean_all(tape.square(tape.add(pred, neg_y)));
  };
  TrainResult tr = train(m.omega, loss, k, sched, k,
                         derive_seed(seed, {0x6d74ULL}));
  result.final_mse = tr.final_loss();
  return result;
}

std::vector<double> mi_surrogate_grad(const MiSurrogate& model,
                                      const std::vector<double>& theta) {
  if (theta.size() != model.f)
    throw std::invalid_argument("mi_surrogate_grad: width mismatch");
  Tape tape;
  auto bound = tape.bind(model.omega);
  NodeId th = tape.input(Tensor::row(theta), /*requires_grad=*/true, "theta");
  std::vector<double> neg_mean(model.f);
  for (std::size_t i = 0; i < model.f; ++i) neg_mean[i] = -model.th_mean[i];
  NodeId th_std = tape.mul(
      tape.add(th, tape.constant(Tensor::row(neg_mean))),
      tape.constant(Tensor::row(model.th_inv_std)));
  NodeId out = mlp_apply(tape, bound, th_std, 4);
  // Undo target standardization so the gradient is in metric units.
  NodeId pred = tape.affine(out, 1.0 / model.d_inv_std, model.d_mean);
  tape.backward(pred);
  const Tensor& g = tape.grad(th);
  return g.values.empty() ? std::vector<double>(model.f, 0.0) : g.values;
}

}  // namespace calopt
