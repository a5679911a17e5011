#include "calopt/flow1d.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "calopt/mathutil.hpp"
#include "calopt/rng.hpp"

namespace calopt {

void FlowSpec::validate() const {
  if (!(w_min < w_max)) throw std::invalid_argument("FlowSpec: w_min < w_max");
  if (n_bins < 2) throw std::invalid_argument("FlowSpec: n_bins >= 2");
  if (!(tail_slope > 0.0))
    throw std::invalid_argument("FlowSpec: tail_slope > 0");
}

FlowModel FlowModel::make(FlowSpec spec) {
  spec.validate();
  FlowModel m;
  m.spec = spec;
  m.conditioner = mlp_init(
      {{spec.cond_dim, spec.hidden, spec.hidden, spec.n_bins},
       derive_seed(spec.seed, {0x666c6f77ULL})});
  m.cond_mean.assign(spec.cond_dim, 0.0);
  m.cond_inv_std.assign(spec.cond_dim, 1.0);
  return m;
}

namespace {

// Softmax masses can underflow to exactly zero for extreme conditioner
// outputs, which breaks invertibility and the log in the likelihood. Mix in
// a small uniform floor; the map keeps masses summing to one and leaves a
// uniform distribution unchanged.
constexpr double kMassFloor = 1e-6;

std::vector<double> standardize_condition(const FlowModel& model,
                                          const std::vector<double>& c) {
  if (c.size() != model.spec.cond_dim)
    throw std::invalid_argument("flow: condition width mismatch");
  std::vector<double> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i)
    out[i] = (c[i] - model.cond_mean[i]) * model.cond_inv_std[i];
  return out;
}

// CDF (and density) of w for fixed bin masses q.
struct CdfValue {
  double p;        // in (0, 1)
  double density;  // dp/dw
};

CdfValue piecewise_cdf(const FlowSpec& spec, const std::vector<double>& q,
                       double w) {
  const double lam = spec.tail_slope;
  const double Z = spec.norm();
  const double delta = spec.width();
  const double n = static_cast<double>(spec.n_bins);
  CdfValue r;
  if (w < spec.w_min) {
    const double t = lam * std::exp(w - spec.w_min);
    r.p = t / Z;
    r.density = t / Z;
  } else if (w > spec.w_max) {
    const double t = lam * std::exp(-(w - spec.w_max));
    r.p = (lam + 1.0 + lam - t) / Z;
    r.density = t / Z;
  } else {
    std::size_t i = static_cast<std::size_t>((w - spec.w_min) / delta * n);
    i = std::min(i, spec.n_bins - 1);
    double cum = 0.0;
    for (std::size_t j = 0; j < i; ++j) cum += q[j];
    const double w_lo = spec.w_min + static_cast<double>(i) * delta / n;
    r.p = (lam + cum + q[i] * (w - w_lo) * n / delta) / Z;
    r.density = q[i] * n / (delta * Z);
  }
  return r;
}

}  // namespace

std::vector<double> FlowModel::bin_masses(
    const std::vector<double>& condition) const {
  Tape tape;
  auto bound = tape.bind(conditioner);
  NodeId c = tape.constant(Tensor::row(standardize_condition(*this, condition)));
  NodeId q = tape.softmax_rows(mlp_apply(tape, bound, c, 3));
  std::vector<double> out = tape.value(q).values;
  const double scale = 1.0 / (1.0 + static_cast<double>(spec.n_bins) * kMassFloor);
  for (double& v : out) v = (v + kMassFloor) * scale;
  return out;
}

FlowForwardResult flow_forward(const FlowModel& model, double w,
                               const std::vector<double>& condition) {
  if (!std::isfinite(w)) throw NumericError("flow_forward: non-finite w");
  const auto q = model.bin_masses(condition);
  const CdfValue c = piecewise_cdf(model.spec, q, w);
  FlowForwardResult r;
  r.u = normal_quantile(c.p);
  r.logdet = std::log(c.density) - normal_log_pdf(r.u);
  return r;
}

double flow_inverse(const FlowModel& model, double u,
                    const std::vector<double>& condition) {
  if (!std::isfinite(u)) throw NumericError("flow_inverse: non-finite u");
  const auto q = model.bin_masses(condition);
  const FlowSpec& spec = model.spec;
  const double lam = spec.tail_slope;
  const double Z = spec.norm();
  const double delta = spec.width();
  const double n = static_cast<double>(spec.n_bins);

  double p = normal_cdf(u);
  p = std::clamp(p, 1e-300, 1.0 - 1e-16);
  const double pz = p * Z;
  if (pz < lam) return spec.w_min + std::log(pz / lam);
  if (pz > lam + 1.0) {
    const double rem = pz - lam - 1.0;
    return spec.w_max - std::log(std::max((lam - rem) / lam, 1e-300));
  }
  const double s = pz - lam;
  double cum = 0.0;
  std::size_t i = 0;
  for (; i + 1 < spec.n_bins; ++i) {
    if (cum + q[i] > s) break;
    cum += q[i];
  }
  return spec.w_min + (static_cast<double>(i) + (s - cum) / q[i]) * delta / n;
}

double flow_log_density(const FlowModel& model, double w,
                        const std::vector<double>& condition) {
  const auto q = model.bin_masses(condition);
  const CdfValue c = piecewise_cdf(model.spec, q, w);
  return std::log(c.density);
}

double flow_nll(const FlowModel& model, const std::vector<double>& w,
                const std::vector<std::vector<double>>& conditions) {
  if (w.empty() || w.size() != conditions.size())
    throw std::invalid_argument("flow_nll: row mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i)
    s -= flow_log_density(model, w[i], conditions[i]);
  return s / static_cast<double>(w.size());
}

std::pair<double, double> flow_support(const std::vector<double>& w) {
  if (w.empty()) throw std::invalid_argument("flow_support: empty data");
  std::vector<double> sorted = w;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];
  std::vector<double> dev(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i)
    dev[i] = std::abs(sorted[i] - median);
  std::sort(dev.begin(), dev.end());
  double mad = dev[dev.size() / 2];
  if (mad < 1e-6) mad = 1e-6;
  return {sorted.front() - 3.0 * mad, sorted.back() + 3.0 * mad};
}

void fit_condition_stats(FlowModel& model,
                         const std::vector<std::vector<double>>& conditions) {
  const std::size_t d = model.spec.cond_dim;
  const std::size_t m = conditions.size();
  if (m == 0) throw std::invalid_argument("fit_condition_stats: empty data");
  model.cond_mean.assign(d, 0.0);
  model.cond_inv_std.assign(d, 1.0);
  for (const auto& c : conditions)
    for (std::size_t i = 0; i < d; ++i) model.cond_mean[i] += c[i];
  for (auto& v : model.cond_mean) v /= static_cast<double>(m);
  std::vector<double> var(d, 0.0);
  for (const auto& c : conditions)
    for (std::size_t i = 0; i < d; ++i) {
      const double e = c[i] - model.cond_mean[i];
      var[i] += e * e;
    }
  for (std::size_t i = 0; i < d; ++i) {
    const double s = std::sqrt(var[i] / static_cast<double>(m));
    model.cond_inv_std[i] = s > 1e-12 ? 1.0 / s : 1.0;
  }
}

TrainResult train_flow(FlowModel& model, const std::vector<double>& w,
                       const std::vector<std::vector<double>>& conditions,
                       const FlowTrainOptions& options, std::uint64_t seed) {
  const std::size_t rows = w.size();
  if (rows == 0 || rows != conditions.size())
    throw std::invalid_argument("train_flow: row mismatch");
  const FlowSpec& spec = model.spec;
  const double lam = spec.tail_slope;
  const double Z = spec.norm();
  const double delta = spec.width();
  const double n = static_cast<double>(spec.n_bins);

  // Precompute standardized conditions, bin indices and per-row constants.
  // Bin boundaries are fixed in w, so indices never change during training.
  std::vector<double> cond_flat(rows * spec.cond_dim);
  std::vector<std::size_t> idx(rows);
  std::vector<double> mask(rows), constant(rows);
  const double interior_const = -std::log(n / (delta * Z));
  for (std::size_t r = 0; r < rows; ++r) {
    const auto cs = standardize_condition(model, conditions[r]);
    std::copy(cs.begin(), cs.end(), cond_flat.begin() + r * spec.cond_dim);
    if (w[r] < spec.w_min) {
      idx[r] = 0;
      mask[r] = 0.0;
      constant[r] = -std::log(lam / Z) + (spec.w_min - w[r]);
    } else if (w[r] > spec.w_max) {
      idx[r] = 0;
      mask[r] = 0.0;
      constant[r] = -std::log(lam / Z) + (w[r] - spec.w_max);
    } else {
      std::size_t i =
          static_cast<std::size_t>((w[r] - spec.w_min) / delta * n);
      idx[r] = std::min(i, spec.n_bins - 1);
      mask[r] = 1.0;
      constant[r] = interior_const;
    }
  }

  const std::size_t e = static_cast<std::size_t>(200 * options.epoch_scale);
  LrSchedule sched = LrSchedule::staged({{3e-4, e}, {1e-4, e}, {1e-5, e}});

  auto loss = [&](Tape& tape, const std::map<std::string, NodeId>& bound,
                  std::span<const std::size_t> batch_rows) {
    const std::size_t b = batch_rows.size();
    Tensor cb = Tensor::zeros({b, spec.cond_dim});
    Tensor maskb = Tensor::zeros({b, 1});
    Tensor constb = Tensor::zeros({b, 1});
    std::vector<std::size_t> idxb(b);
    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t r = batch_rows[i];
      for (std::size_t c = 0; c < spec.cond_dim; ++c)
        cb.at(i, c) = cond_flat[r * spec.cond_dim + c];
      maskb.values[i] = mask[r];
      constb.values[i] = constant[r];
      idxb[i] = idx[r];
    }
    const double fs = 1.0 / (1.0 + n * kMassFloor);
    NodeId q = tape.affine(
        tape.softmax_rows(
            mlp_apply(tape, bound, tape.constant(std::move(cb)), 3)),
        fs, kMassFloor * fs);
    NodeId g = tape.gather_cols(q, std::move(idxb));
    NodeId nll_rows = tape.mul(tape.affine(tape.log(g), -1.0, 0.0),
                               tape.constant(std::move(maskb)));
    return tape.mean_all(tape.add(nll_rows, tape.constant(std::move(constb))));
  };

  return train(model.conditioner, loss, rows, sched, options.batch_size,
               derive_seed(seed, {0x6674ULL}));
}

SurrogateGradient surrogate_grad_theta(const FlowModel& model,
                                       const std::vector<double>& x_batch,
                                       const std::vector<double>& theta,
                                       const std::vector<double>& z_batch) {
  const FlowSpec& spec = model.spec;
  const std::size_t m = z_batch.size();
  if (m == 0 || x_batch.size() != m)
    throw std::invalid_argument("surrogate_grad_theta: batch mismatch");
  const std::size_t f = theta.size();
  if (1 + f != spec.cond_dim)
    throw std::invalid_argument("surrogate_grad_theta: condition width");

  const double lam = spec.tail_slope;
  const double Z = spec.norm();
  const double delta = spec.width();
  const double n = static_cast<double>(spec.n_bins);

  Tape tape;
  auto bound = tape.bind(model.conditioner);

  // Standardized theta row, repeated across the batch; gradients flow back
  // through the standardization into the raw design vector.
  NodeId theta_in = tape.input(Tensor::row(theta), /*requires_grad=*/true,
                               "theta");
  std::vector<double> neg_mean(f), inv_std(f);
  for (std::size_t i = 0; i < f; ++i) {
    neg_mean[i] = -model.cond_mean[1 + i];
    inv_std[i] = model.cond_inv_std[1 + i];
  }
  NodeId theta_std = tape.mul(
      tape.add(theta_in, tape.constant(Tensor::row(neg_mean))),
      tape.constant(Tensor::row(inv_std)));
  Tensor x_std = Tensor::zeros({m, 1});
  for (std::size_t i = 0; i < m; ++i)
    x_std.values[i] = (x_batch[i] - model.cond_mean[0]) * model.cond_inv_std[0];
  NodeId cond = tape.concat_cols(tape.constant(std::move(x_std)),
                                 tape.repeat_row(theta_std, m));
  const double fs = 1.0 / (1.0 + n * kMassFloor);
  NodeId q = tape.affine(tape.softmax_rows(mlp_apply(tape, bound, cond, 3)),
                         fs, kMassFloor * fs);
  const Tensor& qv = tape.value(q);

  // Locate each sample's bin from the forward-evaluated masses; the bin
  // choice is piecewise-constant in theta, so it is held fixed in backward.
  std::vector<std::size_t> idx(m);
  Tensor s_vals = Tensor::zeros({m, 1});
  Tensor mask = Tensor::zeros({m, 1});
  Tensor offs = Tensor::zeros({m, 1});  // w_min + i*delta/n, or full tail w
  for (std::size_t r = 0; r < m; ++r) {
    double p = normal_cdf(z_batch[r]);
    p = std::clamp(p, 1e-300, 1.0 - 1e-16);
    const double pz = p * Z;
    if (pz < lam) {
      idx[r] = 0;
      offs.values[r] = spec.w_min + std::log(pz / lam);
    } else if (pz > lam + 1.0) {
      idx[r] = spec.n_bins - 1;
      offs.values[r] =
          spec.w_max - std::log(std::max((lam - (pz - lam - 1.0)) / lam, 1e-300));
    } else {
      const double s = pz - lam;
      double cum = 0.0;
      std::size_t i = 0;
      for (; i + 1 < spec.n_bins; ++i) {
        if (cum + qv.at(r, i) > s) break;
        cum += qv.at(r, i);
      }
      idx[r] = i;
      s_vals.values[r] = s;
      mask.values[r] = 1.0;
      offs.values[r] = spec.w_min + static_cast<double>(i) * delta / n;
    }
  }

  NodeId g_prefix = tape.gather_prefix(q, idx);
  NodeId g_bin = tape.gather_cols(q, std::move(idx));
  NodeId frac = tape.divide(
      tape.add(tape.constant(std::move(s_vals)),
               tape.affine(g_prefix, -1.0, 0.0)),
      g_bin);
  NodeId w_interior = tape.affine(frac, delta / n, 0.0);
  // Tail rows: mask kills the interior term; offs carries the full value.
  NodeId w_rows = tape.add(tape.mul(w_interior, tape.constant(std::move(mask))),
                           tape.constant(std::move(offs)));
  NodeId mean_delta = tape.mean_all(tape.exp(w_rows));
  tape.backward(mean_delta);

  SurrogateGradient out;
  out.mean_delta = tape.value(mean_delta).values[0];
  const Tensor& g = tape.grad(theta_in);
  out.grad_theta = g.values.empty() ? std::vector<double>(f, 0.0) : g.values;
  for (double v : out.grad_theta)
    if (!std::isfinite(v))
      throw NumericError("surrogate_grad_theta: non-finite gradient");
  return out;
}

std::vector<double> log_clipped(const std::vector<double>& delta) {
  std::vector<double> out(delta.size());
  for (std::size_t i = 0; i < delta.size(); ++i)
    out[i] = std::log(std::max(delta[i], 1e-12));
  return out;
}

}  // namespace calopt
