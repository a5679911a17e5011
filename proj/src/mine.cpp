#include "calopt/mine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "calopt/mathutil.hpp"
#include "calopt/rng.hpp"

namespace calopt {

namespace {

// Column-wise standardization statistics over an M x d row-major batch.
struct ColumnStats {
  std::vector<double> mean, inv_std;
};

ColumnStats column_stats(const std::vector<double>& data, std::size_t m,
                         std::size_t d) {
  ColumnStats st;
  st.mean.assign(d, 0.0);
  st.inv_std.assign(d, 1.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c = 0; c < d; ++c) st.mean[c] += data[i * d + c];
  for (auto& v : st.mean) v /= static_cast<double>(m);
  std::vector<double> var(d, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      const double e = data[i * d + c] - st.mean[c];
      var[c] += e * e;
    }
  for (std::size_t c = 0; c < d; ++c) {
    const double s = std::sqrt(var[c] / static_cast<double>(m));
    st.inv_std[c] = s > 1e-12 ? 1.0 / s : 1.0;
  }
  return st;
}

std::vector<double> standardize(const std::vector<double>& data, std::size_t m,
                                std::size_t d, const ColumnStats& st) {
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c = 0; c < d; ++c)
      out[i * d + c] = (data[i * d + c] - st.mean[c]) * st.inv_std[c];
  return out;
}

// Statistic network forward: T = head(concat(enc_x(x), enc_y(y))), M x 1.
NodeId statistic(Tape& tape, const std::map<std::string, NodeId>& bx,
                 const std::map<std::string, NodeId>& by,
                 const std::map<std::string, NodeId>& bh, NodeId x, NodeId y) {
  NodeId ex = mlp_apply(tape, bx, x, 3);
  NodeId ey = mlp_apply(tape, by, y, 3);
  return mlp_apply(tape, bh, tape.concat_cols(ex, ey), 2);
}

Tensor rows_tensor(const std::vector<double>& data, std::size_t d,
                   std::span<const std::size_t> rows) {
  Tensor t = Tensor::zeros({rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < d; ++c)
      t.at(r, c) = data[rows[r] * d + c];
  return t;
}

}  // namespace

MineNetwork MineNetwork::make(std::size_t x_dim, std::size_t y_dim,
                              std::uint64_t seed, std::size_t hidden) {
  MineNetwork net;
  net.x_dim = x_dim;
  net.y_dim = y_dim;
  net.hidden = hidden;
  net.x_encoder = mlp_init({{x_dim, hidden, hidden, hidden},
                            derive_seed(seed, {1})});
  net.y_encoder = mlp_init({{y_dim, hidden, hidden, hidden},
                            derive_seed(seed, {2})});
  net.head = mlp_init({{2 * hidden, hidden, 1}, derive_seed(seed, {3})});
  return net;
}

double dv_bound(const MineNetwork& net, const std::vector<double>& joint_x,
                const std::vector<double>& joint_y,
                const std::vector<double>& marginal_x,
                const std::vector<double>& marginal_y, std::size_t m_joint,
                std::size_t m_marginal) {
  if (m_joint == 0 || m_marginal == 0)
    throw std::invalid_argument("dv_bound: empty batch");
  Tape tape;
  auto bx = tape.bind(net.x_encoder);
  auto by = tape.bind(net.y_encoder);
  auto bh = tape.bind(net.head);
  NodeId xj = tape.constant(Tensor({m_joint, net.x_dim}, joint_x));
  NodeId yj = tape.constant(Tensor({m_joint, net.y_dim}, joint_y));
  NodeId xm = tape.constant(Tensor({m_marginal, net.x_dim}, marginal_x));
  NodeId ym = tape.constant(Tensor({m_marginal, net.y_dim}, marginal_y));
  NodeId tj = statistic(tape, bx, by, bh, xj, yj);
  NodeId tm = statistic(tape, bx, by, bh, xm, ym);
  const double joint_term = tape.value(tape.mean_all(tj)).values[0];
  const double lme = tape.value(tape.logsumexp_all(tm)).values[0] -
                     std::log(static_cast<double>(m_marginal));
  return joint_term - lme;
}

MiEstimate estimate_mi(const std::vector<double>& x,
                       const std::vector<double>& y, std::size_t m,
                       std::size_t u, std::size_t v, std::uint64_t seed,
                       const MineConfig& config) {
  if (m < 32)
    throw std::invalid_argument(
        "estimate_mi: need at least 32 samples, got " + std::to_string(m));
  if (x.size() != m * u || y.size() != m * v)
    throw std::invalid_argument("estimate_mi: batch size mismatch");

  const auto sx = column_stats(x, m, u);
  const auto sy = column_stats(y, m, v);
  const std::vector<double> xs = standardize(x, m, u, sx);
  const std::vector<double> ys = standardize(y, m, v, sy);

  // Fresh network on every call.
  MineNetwork net = MineNetwork::make(u, v, derive_seed(seed, {0x6d696e65ULL}),
                                      config.hidden);
  LrSchedule sched = LrSchedule::exp_decay(config.lr_init, config.epochs);
  AdamState adam_x(net.x_encoder);
  AdamState adam_y(net.y_encoder);
  AdamState adam_h(net.head);

  MiEstimate est;
  est.trace.reserve(config.epochs);
  const std::size_t batch = std::min(config.batch_size, m);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(derive_seed(seed, {0x65706fULL, epoch}));
    auto perm = rng.permutation(m);       // joint batch order
    auto marg = rng.permutation(m);       // y-shuffle for the marginal batch
    const double rate = sched.rate_at(epoch);
    double bound_sum = 0.0;
    std::size_t n_batches = 0;

    for (std::size_t start = 0; start < m; start += batch) {
      const std::size_t end = std::min(start + batch, m);
      std::span<const std::size_t> rows(perm.data() + start, end - start);
      std::vector<std::size_t> marg_rows(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i)
        marg_rows[i] = marg[rows[i]];

      Tape tape;
      auto bx = tape.bind(net.x_encoder);
      auto by = tape.bind(net.y_encoder);
      auto bh = tape.bind(net.head);
      NodeId xj = tape.constant(rows_tensor(xs, u, rows));
      NodeId yj = tape.constant(rows_tensor(ys, v, rows));
      NodeId ym = tape.constant(rows_tensor(ys, v, marg_rows));
      NodeId tj = statistic(tape, bx, by, bh, xj, yj);
      NodeId tm = statistic(tape, bx, by, bh, xj, ym);

      // Batch-level bound for the trace.
      const double joint_term = tape.value(tape.mean_all(tj)).values[0];
      const double lme =
          tape.value(tape.logsumexp_all(tm)).values[0] -
          std::log(static_cast<double>(rows.size()));
      bound_sum += joint_term - lme;
      ++n_batches;

      // EMA of the exp-term denominator (bias-corrected gradient).
      const double batch_exp_mean = std::exp(lme);
      net.ema = net.ema_ready
                    ? net.ema_decay * net.ema + (1.0 - net.ema_decay) * batch_exp_mean
                    : batch_exp_mean;
      net.ema_ready = true;

      // Surrogate loss whose gradient is the bias-corrected DV gradient:
      // -mean(T_joint) + mean(exp(T_marg)) / ema, with ema held constant.
      NodeId neg_joint = tape.affine(tape.mean_all(tj), -1.0, 0.0);
      NodeId exp_term = tape.mean_all(tape.exp(tape.affine(
          tm, 1.0, -std::log(net.ema))));
      NodeId loss = tape.add(neg_joint, exp_term);
      tape.backward(loss);
      net.x_encoder.zero_grads();
      net.y_encoder.zero_grads();
      net.head.zero_grads();
      tape.accumulate_grads(net.x_encoder, bx);
      tape.accumulate_grads(net.y_encoder, by);
      tape.accumulate_grads(net.head, bh);
      adam_x.step(net.x_encoder, rate);
      adam_y.step(net.y_encoder, rate);
      adam_h.step(net.head, rate);
    }
    est.trace.push_back(bound_sum / static_cast<double>(n_batches));
  }

  // Readout: maximum of the 5-epoch moving average over the last 10% of
  // epochs. The raw final-epoch bound is noisy.
  const std::size_t n = est.trace.size();
  const std::size_t window = std::max<std::size_t>(1, n / 10);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t e = n - window; e < n; ++e) {
    const std::size_t lo = e >= 4 ? e - 4 : 0;
    double s = 0.0;
    for (std::size_t j = lo; j <= e; ++j) s += est.trace[j];
    best = std::max(best, s / static_cast<double>(e - lo + 1));
  }
  est.value_nats = best;
  if (!std::isfinite(est.value_nats))
    throw NumericError("estimate_mi: non-finite bound");
  return est;
}

double knn_mi(const std::vector<double>& x, const std::vector<double>& y,
              std::size_t m, std::size_t u, std::size_t v, std::size_t k) {
  if (m < 50) throw std::invalid_argument("knn_mi: need at least 50 samples");
  if (k < 1) throw std::invalid_argument("knn_mi: k >= 1");
  if (x.size() != m * u || y.size() != m * v)
    throw std::invalid_argument("knn_mi: batch size mismatch");

  const auto sx = column_stats(x, m, u);
  const auto sy = column_stats(y, m, v);
  const std::vector<double> xs = standardize(x, m, u, sx);
  const std::vector<double> ys = standardize(y, m, v, sy);

  auto dist_x = [&](std::size_t i, std::size_t j) {
    double d = 0.0;
    for (std::size_t c = 0; c < u; ++c)
      d = std::max(d, std::abs(xs[i * u + c] - xs[j * u + c]));
    return d;
  };
  auto dist_y = [&](std::size_t i, std::size_t j) {
    double d = 0.0;
    for (std::size_t c = 0; c < v; ++c)
      d = std::max(d, std::abs(ys[i * v + c] - ys[j * v + c]));
    return d;
  };

  // Degeneracy guard: too many exact duplicates break the rank statistics.
  std::size_t duplicates = 0;
  std::vector<double> kth(m);
  std::vector<double> joint(m);
  double psi_sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j)
      joint[j] = j == i ? std::numeric_limits<double>::infinity()
                        : std::max(dist_x(i, j), dist_y(i, j));
    std::vector<double> tmp = joint;
    std::nth_element(tmp.begin(), tmp.begin() + static_cast<long>(k - 1),
                     tmp.end());
    const double eps = tmp[k - 1];
    if (eps == 0.0) ++duplicates;
    std::size_t nx = 0, ny = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      if (dist_x(i, j) < eps) ++nx;
      if (dist_y(i, j) < eps) ++ny;
    }
    psi_sum += digamma(static_cast<double>(nx + 1)) +
               digamma(static_cast<double>(ny + 1));
  }
  if (duplicates * 2 > m)
    throw std::runtime_error("knn_mi: degenerate sample (too many duplicates)");

  return digamma(static_cast<double>(k)) + digamma(static_cast<double>(m)) -
         psi_sum / static_cast<double>(m);
}

}  // namespace calopt
