#include "calopt/reco_objective.hpp"

#include <cmath>
#include <stdexcept>

#include "calopt/rng.hpp"

namespace calopt {

namespace {

struct Pooled {
  std::vector<double> features;  // rows x (v + f)
  std::vector<double> targets;   // rows
  std::size_t rows = 0, width = 0;
};

Pooled pool_rows(const CandidateSet& candidates) {
  Pooled p;
  if (candidates.empty())
    throw std::invalid_argument("train_reco: empty candidate set");
  const std::size_t v = candidates.front().batch.segments();
  const std::size_t f = candidates.front().design.features();
  p.width = v + f;
  for (const auto& c : candidates) {
    for (std::size_t m = 0; m < c.batch.events(); ++m) {
      for (double d : c.batch.deposits[m]) p.features.push_back(d);
      for (double t : c.design.thickness_cm) p.features.push_back(t);
      p.targets.push_back(c.batch.energies_gev[m]);
      ++p.rows;
    }
  }
  if (p.rows == 0) throw std::invalid_argument("train_reco: no events");
  return p;
}

RecoStats compute_stats(const Pooled& p) {
  RecoStats st;
  st.in_mean.assign(p.width, 0.0);
  st.in_inv_std.assign(p.width, 1.0);
  for (std::size_t r = 0; r < p.rows; ++r)
    for (std::size_t c = 0; c < p.width; ++c)
      st.in_mean[c] += p.features[r * p.width + c];
  for (auto& m : st.in_mean) m /= static_cast<double>(p.rows);
  std::vector<double> var(p.width, 0.0);
  for (std::size_t r = 0; r < p.rows; ++r)
    for (std::size_t c = 0; c < p.width; ++c) {
      const double e = p.features[r * p.width + c] - st.in_mean[c];
      var[c] += e * e;
    }
  for (std::size_t c = 0; c < p.width; ++c) {
    const double s = std::sqrt(var[c] / static_cast<double>(p.rows));
    st.in_inv_std[c] = s > 1e-12 ? 1.0 / s : 1.0;
  }
  double tm = 0.0;
  for (double t : p.targets) tm += t;
  tm /= static_cast<double>(p.rows);
  double tv = 0.0;
  for (double t : p.targets) tv += (t - tm) * (t - tm);
  const double ts = std::sqrt(tv / static_cast<double>(p.rows));
  st.target_mean = tm;
  st.target_inv_std = ts > 1e-12 ? 1.0 / ts : 1.0;
  return st;
}

}  // namespace

double RecoModel::predict(const std::vector<double>& deposits,
                          const std::vector<double>& theta) const {
  if (deposits.size() != v || theta.size() != f)
    throw std::invalid_argument("RecoModel::predict: input width mismatch");
  std::vector<double> row(v + f);
  for (std::size_t i = 0; i < v; ++i) row[i] = deposits[i];
  for (std::size_t i = 0; i < f; ++i) row[v + i] = theta[i];
  for (std::size_t i = 0; i < row.size(); ++i)
    row[i] = (row[i] - stats.in_mean[i]) * stats.in_inv_std[i];
  Tape tape;
  auto bound = tape.bind(psi);
  NodeId x = tape.constant(Tensor::row(row));
  NodeId out = mlp_apply(tape, bound, x, 3);
  return tape.value(out).values[0] / stats.target_inv_std + stats.target_mean;
}

RecoTrainResult train_reco(const CandidateSet& candidates,
                           const RecoTrainOptions& options,
                           const ParamSet* warm_start,
                           const RecoStats* frozen_stats, std::uint64_t seed) {
  Pooled p = pool_rows(candidates);
  const std::size_t v = candidates.front().batch.segments();
  const std::size_t f = candidates.front().design.features();

  RecoTrainResult result;
  result.model.v = v;
  result.model.f = f;
  result.model.stats = frozen_stats ? *frozen_stats : compute_stats(p);
  const RecoStats& st = result.model.stats;
  if (st.in_mean.size() != p.width)
    throw ShapeError("train_reco: frozen stats width mismatch");

  MlpSpec spec{{v + f, 64, 64, 1}, derive_seed(seed, {0x7265636fULL})};
  if (warm_start) {
    ParamSet fresh = mlp_init(spec);
    for (const auto& [name, t] : fresh.params) {
      auto it = warm_start->params.find(name);
      if (it == warm_start->params.end() || it->second.shape != t.shape)
        throw ShapeError("train_reco: warm-start shape mismatch at " + name);
    }
    result.model.psi = *warm_start;
    result.model.psi.zero_grads();
  } else {
    result.model.psi = mlp_init(spec);
  }

  // Pre-standardized rows.
  std::vector<double> feat(p.features.size());
  for (std::size_t r = 0; r < p.rows; ++r)
    for (std::size_t c = 0; c < p.width; ++c)
      feat[r * p.width + c] =
          (p.features[r * p.width + c] - st.in_mean[c]) * st.in_inv_std[c];
  std::vector<double> targ(p.rows);
  for (std::size_t r = 0; r < p.rows; ++r)
    targ[r] = (p.targets[r] - st.target_mean) * st.target_inv_std;

  const std::size_t e1 = static_cast<std::size_t>(200 * options.epoch_scale);
  const std::size_t e2 = static_cast<std::size_t>(200 * options.epoch_scale);
  LrSchedule sched = LrSchedule::staged({{4e-4, e1}, {1e-5, e2}});

  auto loss = [&](Tape& tape, const std::map<std::string, NodeId>& bound,
                  std::span<const std::size_t> rows) {
    Tensor xb = Tensor::zeros({rows.size(), p.width});
    Tensor yb = Tensor::zeros({rows.size(), 1});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t c = 0; c < p.width; ++c)
        xb.at(i, c) = feat[rows[i] * p.width + c];
      yb.values[i] = targ[rows[i]];
    }
    NodeId pred = mlp_apply(tape, bound, tape.constant(std::move(xb)), 3);
    NodeId neg_y = tape.affine(tape.constant(std::move(yb)), -1.0, 0.0);
    return tape.mean_all(tape.square(tape.add(pred, neg_y)));
  };

  result.trace = train(result.model.psi, loss, p.rows, sched,
                       options.batch_size, derive_seed(seed, {0x7274ULL}));
  return result;
}

std::vector<double> per_event_delta(const RecoModel& model,
                                    const EventBatch& batch,
                                    const std::vector<double>& theta) {
  std::vector<double> delta;
  delta.reserve(batch.events());
  // One tape for the whole batch.
  const std::size_t width = model.v + model.f;
  Tensor xb = Tensor::zeros({batch.events(), width});
  for (std::size_t m = 0; m < batch.events(); ++m) {
    for (std::size_t c = 0; c < model.v; ++c)
      xb.at(m, c) = (batch.deposits[m][c] - model.stats.in_mean[c]) *
                    model.stats.in_inv_std[c];
    for (std::size_t c = 0; c < model.f; ++c)
      xb.at(m, model.v + c) =
          (theta[c] - model.stats.in_mean[model.v + c]) *
          model.stats.in_inv_std[model.v + c];
  }
  Tape tape;
  auto bound = tape.bind(model.psi);
  NodeId out = mlp_apply(tape, bound, tape.constant(std::move(xb)), 3);
  const Tensor& pred = tape.value(out);
  for (std::size_t m = 0; m < batch.events(); ++m) {
    const double xhat = pred.values[m] / model.stats.target_inv_std +
                        model.stats.target_mean;
    const double x = batch.energies_gev[m];
    const double rel = (xhat - x) / x;
    delta.push_back(rel * rel);
  }
  return delta;
}

}  // namespace calopt
