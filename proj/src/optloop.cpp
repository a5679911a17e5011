#include "calopt/optloop.hpp"

#include <cstdio>
#include <cstdlib>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "calopt/nn.hpp"

namespace calopt {

std::string variant_name(Variant v) {
  return v == Variant::MiOpt ? "mi" : "reco";
}

std::size_t LoopConfig::resolved_candidates() const {
  if (candidates > 0) return candidates;
  return variant == Variant::MiOpt ? 117 : 30;
}

std::vector<double> LoopConfig::resolved_theta0() const {
  if (!theta0.empty()) return theta0;
  return std::vector<double>(features(), 1.0);
}

void LoopConfig::validate() const {
  if (pairs < 1 || pairs > 3)
    throw std::invalid_argument("LoopConfig: pairs must be 1, 2 or 3");
  if (!(sigma_cm > 0.0)) throw std::invalid_argument("LoopConfig: sigma > 0");
  if (!(epsilon_cm > 0.0))
    throw std::invalid_argument("LoopConfig: epsilon > 0");
  if (!(thickness_cap_cm > 0.0))
    throw std::invalid_argument("LoopConfig: thickness cap > 0");
  if (!(energy_min_gev > 0.0) || !(energy_min_gev < energy_max_gev))
    throw std::invalid_argument("LoopConfig: need 0 < e_min < e_max");
  if (events < 1) throw std::invalid_argument("LoopConfig: events >= 1");
  if (variant == Variant::MiOpt && events < 32)
    throw std::invalid_argument(
        "LoopConfig: mutual-information objective needs >= 32 events");
  const auto t0 = resolved_theta0();
  if (t0.size() != features())
    throw std::invalid_argument("LoopConfig: theta0 width mismatch");
  for (double t : t0)
    if (!(t >= 0.0))
      throw std::invalid_argument("LoopConfig: theta0 must be >= 0");
}

std::vector<std::vector<double>> sample_candidates(
    const std::vector<double>& theta, double sigma, std::size_t k, Rng& rng) {
  if (k < 1) throw std::invalid_argument("sample_candidates: k >= 1");
  std::vector<std::vector<double>> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<double> cand(theta.size());
    for (std::size_t j = 0; j < theta.size(); ++j)
      cand[j] = std::max(0.0, theta[j] + sigma * rng.normal());
    out.push_back(std::move(cand));
  }
  return out;
}

namespace {

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double vec_sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

std::vector<double> inner_descent(const GradientSource& surrogate_grad,
                                  const std::vector<double>& theta_start,
                                  double sign, const LoopConfig& config) {
  std::vector<double> theta = theta_start;
  for (std::size_t step = 0; step < config.inner_steps; ++step) {
    std::vector<double> g = surrogate_grad(theta);
    for (double v : g)
      if (!std::isfinite(v))
        throw NumericError("inner_descent: non-finite surrogate gradient");
    // Quadratic penalty on the total-thickness cap, always added to the
    // minimized quantity.
    const double over = std::max(0.0, vec_sum(theta) - config.thickness_cap_cm);
    std::vector<double> next(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double step_grad =
          sign * g[i] + 2.0 * config.penalty_weight * over;
      next[i] = std::max(0.0, theta[i] - config.inner_lr * step_grad);
    }
    if (distance(next, theta_start) >= config.epsilon_cm) break;
    theta = std::move(next);
  }
  return theta;
}

namespace {

CandidateSet simulate_candidates(const std::vector<std::vector<double>>& designs,
                                 const LoopConfig& config,
                                 std::uint64_t iter_seed) {
  CandidateSet set;
  set.reserve(designs.size());
  for (std::size_t k = 0; k < designs.size(); ++k) {
    Candidate c;
    c.design.thickness_cm = designs[k];
    const auto energies =
        sample_energies(config.energy_min_gev, config.energy_max_gev,
                        config.events, derive_seed(iter_seed, {0x78ULL, k}));
    c.batch = simulate(c.design, energies, config.shower,
                       derive_seed(iter_seed, {0x79ULL, k}));
    set.push_back(std::move(c));
  }
  return set;
}

// Optional on-disk persistence of TL state; the loaded copy replaces the
// in-memory one (round-trip is bitwise, so this only exercises the file path).
void persist(ParamSet& ps, const std::string& dir, const std::string& name) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  const std::string path = dir + "/" + name + ".ckpt";
  checkpoint_save(ps, path);
  ps = checkpoint_load(path);
}

void run_reco_iteration(IterationState& state, const LoopConfig& config,
                        const CandidateSet& candidates,
                        std::uint64_t iter_seed, IterationRecord& row) {
  const bool tl = config.transfer_learning;
  RecoTrainOptions reco_opts;
  reco_opts.epoch_scale = config.reco_epoch_scale;
  const ParamSet* warm = tl && state.reco ? &state.reco->psi : nullptr;
  const RecoStats* frozen = tl && state.reco ? &state.reco->stats : nullptr;
  RecoTrainResult reco = train_reco(candidates, reco_opts, warm, frozen,
                                    derive_seed(iter_seed, {0x52ULL}));

  // Per-event objective scores over all candidates.
  std::vector<double> deltas;
  std::vector<std::vector<double>> conditions;
  for (const auto& c : candidates) {
    const auto d =
        per_event_delta(reco.model, c.batch, c.design.thickness_cm);
    for (std::size_t m = 0; m < d.size(); ++m) {
      deltas.push_back(d[m]);
      std::vector<double> cond;
      cond.reserve(1 + config.features());
      cond.push_back(c.batch.energies_gev[m]);
      for (double t : c.design.thickness_cm) cond.push_back(t);
      conditions.push_back(std::move(cond));
    }
  }
  row.objective = vec_sum(deltas) / static_cast<double>(deltas.size());
  const std::vector<double> w = log_clipped(deltas);

  FlowModel flow = [&] {
    if (tl && state.flow) return *state.flow;  // frozen support + stats
    FlowSpec spec;
    const auto [lo, hi] = flow_support(w);
    spec.w_min = lo;
    spec.w_max = hi;
    spec.cond_dim = 1 + config.features();
    spec.seed = derive_seed(iter_seed, {0x46ULL});
    FlowModel m = FlowModel::make(spec);
    fit_condition_stats(m, conditions);
    return m;
  }();

  FlowTrainOptions flow_opts;
  flow_opts.epoch_scale = config.flow_epoch_scale;
  train_flow(flow, w, conditions, flow_opts, derive_seed(iter_seed, {0x53ULL}));

  // Fixed z and x draws for the whole inner descent.
  const std::size_t m_grad =
      config.grad_samples > 0 ? config.grad_samples : config.events;
  const auto x_grad =
      sample_energies(config.energy_min_gev, config.energy_max_gev, m_grad,
                      derive_seed(iter_seed, {0x7aULL}));
  Rng zrng(derive_seed(iter_seed, {0x7a7aULL}));
  std::vector<double> z_grad(m_grad);
  for (auto& z : z_grad) z = zrng.normal();

  GradientSource grad = [&](const std::vector<double>& theta) {
    return surrogate_grad_theta(flow, x_grad, theta, z_grad).grad_theta;
  };
  state.theta = inner_descent(grad, state.theta, +1.0, config);
  row.surrogate_pred =
      surrogate_grad_theta(flow, x_grad, state.theta, z_grad).mean_delta;

  if (tl) {
    persist(reco.model.psi, config.checkpoint_dir, "reco");
    persist(flow.conditioner, config.checkpoint_dir, "surrogate");
    state.reco = std::move(reco.model);
    state.flow = std::move(flow);
  } else {
    state.reco.reset();
    state.flow.reset();
  }
}

void run_mi_iteration(IterationState& state, const LoopConfig& config,
                      const CandidateSet& candidates, std::uint64_t iter_seed,
                      IterationRecord& row) {
  const bool tl = config.transfer_learning;
  const std::size_t f = config.features();

  MineConfig mine_cfg;
  mine_cfg.epochs = config.mine_epochs;
  mine_cfg.hidden = config.mine_hidden;

  std::vector<std::vector<double>> thetas;
  std::vector<double> deltas;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const auto& c = candidates[k];
    const std::size_t m = c.batch.events();
    const std::size_t v = c.batch.segments();
    std::vector<double> y;
    y.reserve(m * v);
    for (const auto& dep : c.batch.deposits)
      for (double d : dep) y.push_back(d);
    const MiEstimate est =
        estimate_mi(c.batch.energies_gev, y, m, 1, v,
                    derive_seed(iter_seed, {0x4dULL, k}), mine_cfg);
    thetas.push_back(c.design.thickness_cm);
    deltas.push_back(est.value_nats);
  }
  row.objective = vec_sum(deltas) / static_cast<double>(deltas.size());

  if (!tl || state.theta_stats.mean.size() != f) {
    state.theta_stats.resize(f);
    state.delta_stats.resize(1);
  }
  for (std::size_t k = 0; k < thetas.size(); ++k) {
    state.theta_stats.update(thetas[k]);
    state.delta_stats.update({deltas[k]});
  }

  MiSurrogateOptions opts;
  opts.epochs = config.mi_surrogate_epochs;
  const ParamSet* warm = tl && state.mi_surr ? &state.mi_surr->omega : nullptr;
  MiSurrogateResult surr =
      train_mi_surrogate(thetas, deltas, state.theta_stats, state.delta_stats,
                         warm, opts, derive_seed(iter_seed, {0x54ULL}));

  GradientSource grad = [&](const std::vector<double>& theta) {
    return mi_surrogate_grad(surr.model, theta);
  };
  // MI is maximized: ascend the surrogate (sign -1 in the minimizing loop).
  state.theta = inner_descent(grad, state.theta, -1.0, config);
  row.surrogate_pred = surr.model.predict(state.theta);

  if (tl) {
    persist(surr.model.omega, config.checkpoint_dir, "surrogate");
    state.mi_surr = std::move(surr.model);
  } else {
    state.mi_surr.reset();
  }
}

}  // namespace

IterationRecord run_iteration(IterationState& state, const LoopConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t iter_seed =
      derive_seed(config.master_seed, {0x69746572ULL, state.iteration});

  IterationRecord row;
  row.iteration = state.iteration + 1;
  row.seed = iter_seed;

  try {
    Rng cand_rng(derive_seed(iter_seed, {0x63616e64ULL}));
    const auto designs = sample_candidates(
        state.theta, config.sigma_cm, config.resolved_candidates(), cand_rng);
    const CandidateSet candidates =
        simulate_candidates(designs, config, iter_seed);
    if (config.variant == Variant::RecoOpt)
      run_reco_iteration(state, config, candidates, iter_seed, row);
    else
      run_mi_iteration(state, config, candidates, iter_seed, row);
  } catch (const std::exception& e) {
    if (std::getenv("CALOPT_DEBUG_ABORT")) std::fprintf(stderr, "abort: %s\n", e.what());
    // Aborted iteration: nominal theta stays put.
    row.aborted = true;
    row.objective = std::nan("");
    row.surrogate_pred = std::nan("");
  }

  DesignVector d{state.theta};
  row.theta = state.theta;
  row.scint_sum = d.scintillator_sum();
  row.abs_sum = d.absorber_sum();
  row.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  ++state.iteration;
  return row;
}

EvolutionRecord run_study(const LoopConfig& config, const RowCallback& on_row) {
  config.validate();
  EvolutionRecord record;

  IterationState state;
  state.theta = config.resolved_theta0();

  IterationRecord initial;
  initial.iteration = 0;
  initial.initial = true;
  initial.theta = state.theta;
  DesignVector d{state.theta};
  initial.scint_sum = d.scintillator_sum();
  initial.abs_sum = d.absorber_sum();
  initial.objective = std::nan("");
  initial.surrogate_pred = std::nan("");
  initial.seed = config.master_seed;
  record.rows.push_back(initial);
  if (on_row) on_row(initial);

  for (std::size_t i = 0; i < config.iterations; ++i) {
    IterationRecord row = run_iteration(state, config);
    record.rows.push_back(row);
    if (on_row) on_row(row);
  }
  return record;
}

}  // namespace calopt
