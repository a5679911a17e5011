#include "calopt/validation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "calopt/autodiff.hpp"
#include "calopt/flow1d.hpp"
#include "calopt/mine.hpp"
#include "calopt/nn.hpp"
#include "calopt/rng.hpp"

namespace calopt {
namespace {

std::string describe(double value, const std::string& extra = "") {
  std::ostringstream ss;
  ss << "measured " << value;
  if (!extra.empty()) ss << " (" << extra << ")";
  return ss.str();
}

// Analytic gradient (tape backward) vs central finite differences on every
// parameter coordinate of a ParamSet-driven scalar loss.
using ParamLoss = std::function<double(const ParamSet&, Tape*, ParamSet*)>;

double paramset_grad_error(const ParamLoss& loss, ParamSet& ps,
                           double step = 1e-5) {
  Tape tape;
  ps.zero_grads();
  loss(ps, &tape, &ps);
  double worst = 0.0;
  for (auto& [name, tensor] : ps.params) {
    const Tensor& g = ps.grads.at(name);
    for (std::size_t i = 0; i < tensor.values.size(); ++i) {
      double saved = tensor.values[i];
      tensor.values[i] = saved + step;
      double hi = loss(ps, nullptr, nullptr);
      tensor.values[i] = saved - step;
      double lo = loss(ps, nullptr, nullptr);
      tensor.values[i] = saved;
      double numeric = (hi - lo) / (2.0 * step);
      double analytic = g.values[i];
      double denom =
          std::max({std::fabs(numeric), std::fabs(analytic), 1e-8});
      worst = std::max(worst, std::fabs(numeric - analytic) / denom);
    }
  }
  return worst;
}

CheckResult check_gradients(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x67726164ULL}));
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t in_dim = 1 + static_cast<std::size_t>(rng.uniform() * 4);
    std::size_t hidden = 2 + static_cast<std::size_t>(rng.uniform() * 4);
    std::size_t out_dim = 1 + static_cast<std::size_t>(rng.uniform() * 3);
    std::size_t depth = 1 + static_cast<std::size_t>(rng.uniform() * 2);
    std::size_t rows = 2 + static_cast<std::size_t>(rng.uniform() * 5);
    MlpSpec spec;
    spec.widths = {in_dim};
    for (std::size_t l = 0; l < depth; ++l) spec.widths.push_back(hidden);
    spec.widths.push_back(out_dim);
    spec.seed = derive_seed(seed, {0x6d6c70ULL, static_cast<std::uint64_t>(trial)});
    ParamSet ps = mlp_init(spec);

    Tensor x({rows, in_dim});
    for (auto& v : x.values) v = rng.uniform(-1.5, 1.5);
    Tensor target({rows, out_dim});
    for (auto& v : target.values) v = rng.uniform(-1.0, 1.0);
    int flavor = trial % 6;
    std::size_t n_layers = spec.widths.size() - 1;
    std::vector<std::size_t> idx(rows);
    for (auto& v : idx)
      v = static_cast<std::size_t>(rng.uniform() * out_dim);

    ParamLoss loss = [&, flavor, n_layers](const ParamSet& p, Tape* ext,
                                           ParamSet* grads_into) {
      Tape local;
      Tape& t = ext ? *ext : local;
      auto bound = t.bind(p);
      NodeId xc = t.constant(x, "x");
      NodeId h = mlp_apply(t, bound, xc, n_layers);
      NodeId root;
      switch (flavor) {
        case 0: {
          NodeId neg = t.affine(t.constant(target, "target"), -1.0, 0.0);
          root = t.mean_all(t.square(t.add(h, neg)));
          break;
        }
        case 1:
          root = t.logsumexp_all(h);
          break;
        case 2:
          root = t.mean_all(t.normal_log_pdf(t.affine(h, 0.3, 0.1)));
          break;
        case 3: {
          NodeId denom = t.add(
              t.square(h), t.constant(Tensor::full(t.value(h).shape, 1.0), "ones"));
          root = t.mean_all(t.divide(t.exp(t.affine(h, 0.2, 0.0)), denom));
          break;
        }
        case 4: {
          NodeId sm = t.softmax_rows(h);
          NodeId picked = t.gather_cols(sm, idx);
          root = t.mean_all(t.log(picked));
          break;
        }
        default: {
          NodeId sm = t.softmax_rows(h);
          NodeId prefix = t.gather_prefix(sm, idx);
          NodeId both = t.concat_cols(prefix, t.gather_cols(sm, idx));
          root = t.sum_all(t.mul(both, both));
          break;
        }
      }
      if (ext) {
        t.backward(root);
        t.accumulate_grads(*grads_into, bound);
      }
      return t.value(root).values[0];
    };
    worst = std::max(worst, paramset_grad_error(loss, ps));
  }
  CheckResult r;
  r.name = "autodiff gradient check (100 random network losses)";
  r.value = worst;
  r.threshold = 1e-4;
  r.passed = worst < r.threshold;
  r.detail = describe(worst, "worst relative error vs finite differences");
  return r;
}

FlowModel random_flow(Rng& rng, std::uint64_t seed, std::size_t cond_dim) {
  FlowSpec spec;
  spec.w_min = rng.uniform(-12.0, -6.0);
  spec.w_max = rng.uniform(0.0, 3.0);
  spec.cond_dim = cond_dim;
  spec.seed = seed;
  FlowModel model = FlowModel::make(spec);
  // Perturb the conditioner so bin masses are non-uniform.
  for (auto& [k, tensor] : model.conditioner.params)
    for (auto& v : tensor.values) v += rng.uniform(-0.4, 0.4);
  model.cond_mean.assign(cond_dim, 0.0);
  model.cond_inv_std.assign(cond_dim, 1.0);
  return model;
}

CheckResult check_flow_round_trip(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x666c6f77ULL, 1}));
  double worst = 0.0;
  for (int m = 0; m < 10; ++m) {
    FlowModel model = random_flow(rng, derive_seed(seed, {0x666c6f77ULL, 2,
                                  static_cast<std::uint64_t>(m)}), 3);
    for (int i = 0; i < 100; ++i) {
      std::vector<double> cond = {rng.uniform(1.0, 20.0),
                                  rng.uniform(0.0, 5.0),
                                  rng.uniform(0.0, 5.0)};
      // Cover interior and both tails.
      double span = model.spec.width();
      double w = model.spec.w_min + rng.uniform(-0.3, 1.3) * span;
      double u = flow_forward(model, w, cond).u;
      double w2 = flow_inverse(model, u, cond);
      worst = std::max(worst, std::fabs(w - w2));
    }
  }
  CheckResult r;
  r.name = "flow forward/inverse round trip (1000 points)";
  r.value = worst;
  r.threshold = 1e-9;
  r.passed = worst < r.threshold;
  r.detail = describe(worst, "worst |w - inverse(forward(w))|");
  return r;
}

CheckResult check_flow_normalization(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x666c6f77ULL, 3}));
  double worst = 0.0;
  for (int m = 0; m < 5; ++m) {
    FlowModel model = random_flow(rng, derive_seed(seed, {0x666c6f77ULL, 4,
                                  static_cast<std::uint64_t>(m)}), 3);
    std::vector<double> cond = {rng.uniform(1.0, 20.0), rng.uniform(0.0, 5.0),
                                rng.uniform(0.0, 5.0)};
    const auto& sp = model.spec;
    double integral = 0.0;
    // Interior: the density is constant within each bin, so midpoint
    // sampling on a per-bin grid integrates it exactly.
    std::size_t per_bin = 16;
    double bin_w = sp.width() / static_cast<double>(sp.n_bins);
    double h = bin_w / static_cast<double>(per_bin);
    for (std::size_t b = 0; b < sp.n_bins; ++b)
      for (std::size_t s = 0; s < per_bin; ++s) {
        double w = sp.w_min + b * bin_w + (s + 0.5) * h;
        integral += std::exp(flow_log_density(model, w, cond)) * h;
      }
    // Tails: exponential decay, fine trapezoid over 40 decay lengths.
    std::size_t n_tail = 4000;
    double tail_len = 40.0, ht = tail_len / n_tail;
    for (int side = 0; side < 2; ++side) {
      double edge = side == 0 ? sp.w_min : sp.w_max;
      double dir = side == 0 ? -1.0 : 1.0;
      double prev = std::exp(flow_log_density(model, edge, cond));
      for (std::size_t i = 1; i <= n_tail; ++i) {
        double w = edge + dir * i * ht;
        double cur = std::exp(flow_log_density(model, w, cond));
        integral += 0.5 * (prev + cur) * ht;
        prev = cur;
      }
    }
    worst = std::max(worst, std::fabs(integral - 1.0));
  }
  CheckResult r;
  r.name = "flow density integrates to one";
  r.value = worst;
  r.threshold = 1e-3;
  r.passed = worst < r.threshold;
  r.detail = describe(worst, "worst |quadrature - 1|");
  return r;
}

void gaussian_pair(Rng& rng, double rho, std::size_t m, std::vector<double>& x,
                   std::vector<double>& y) {
  x.resize(m);
  y.resize(m);
  double s = std::sqrt(1.0 - rho * rho);
  for (std::size_t i = 0; i < m; ++i) {
    x[i] = rng.normal();
    y[i] = rho * x[i] + s * rng.normal();
  }
}

// -0.5 * ln(1 - rho^2) for a bivariate standard-normal pair.
constexpr double kTrueMiRho09 = 0.83035106217400169;

CheckResult check_mine_correlated(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x6d696e76ULL, 1}));
  std::vector<double> x, y;
  gaussian_pair(rng, 0.9, 5000, x, y);
  MineConfig cfg;
  cfg.epochs = 180;
  cfg.batch_size = 512;
  MiEstimate est = estimate_mi(x, y, 5000, 1, 1,
                               derive_seed(seed, {0x6d696e76ULL, 2}), cfg);
  CheckResult r;
  r.name = "neural MI estimate, correlated Gaussians (rho=0.9, M=5000)";
  r.value = est.value_nats;
  r.threshold = 0.15 * kTrueMiRho09;
  r.passed = std::fabs(est.value_nats - kTrueMiRho09) <= r.threshold;
  r.detail = describe(est.value_nats,
                      "true value 0.8304 nats, tolerance +-15%");
  return r;
}

CheckResult check_mine_independent(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x6d696e76ULL, 3}));
  std::vector<double> x, y;
  gaussian_pair(rng, 0.0, 5000, x, y);
  MineConfig cfg;
  cfg.epochs = 180;
  cfg.batch_size = 512;
  MiEstimate est = estimate_mi(x, y, 5000, 1, 1,
                               derive_seed(seed, {0x6d696e76ULL, 4}), cfg);
  CheckResult r;
  r.name = "neural MI estimate, independent Gaussians (M=5000)";
  r.value = est.value_nats;
  r.threshold = 0.10;
  r.passed = est.value_nats >= -0.05 && est.value_nats <= 0.10;
  r.detail = describe(est.value_nats, "expected in [-0.05, 0.10] nats");
  return r;
}

CheckResult check_knn(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x6b6e6eULL, 1}));
  std::vector<double> x, y;
  gaussian_pair(rng, 0.9, 5000, x, y);
  double v = knn_mi(x, y, 5000, 1, 1, 3);
  std::vector<double> xi, yi;
  gaussian_pair(rng, 0.0, 5000, xi, yi);
  double vi = knn_mi(xi, yi, 5000, 1, 1, 3);
  CheckResult r;
  r.name = "k-NN MI estimate, Gaussian cross-check (M=5000)";
  r.value = v;
  r.threshold = 0.10 * kTrueMiRho09;
  bool corr_ok = std::fabs(v - kTrueMiRho09) <= r.threshold;
  bool indep_ok = std::fabs(vi) <= 0.05;
  r.passed = corr_ok && indep_ok;
  std::ostringstream ss;
  ss << "correlated " << v << " (true 0.8304, tolerance +-10%), independent "
     << vi << " (|.| <= 0.05)";
  r.detail = ss.str();
  return r;
}

}  // namespace

std::vector<CheckResult> run_validation_suite(std::uint64_t seed) {
  std::vector<CheckResult> results;
  results.push_back(check_gradients(seed));
  results.push_back(check_flow_round_trip(seed));
  results.push_back(check_flow_normalization(seed));
  results.push_back(check_mine_correlated(seed));
  results.push_back(check_mine_independent(seed));
  results.push_back(check_knn(seed));
  return results;
}

}  // namespace calopt
