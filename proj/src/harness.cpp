#include "calopt/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace calopt {

std::string study_name(StudyKind k) {
  switch (k) {
    case StudyKind::Base: return "base";
    case StudyKind::Transfer: return "transfer";
    case StudyKind::Energy: return "energy";
    case StudyKind::Custom: return "custom";
  }
  return "?";
}

std::size_t StudyConfig::resolved_runs() const {
  if (runs != 0) return runs;
  if (study == StudyKind::Transfer && loop.events == 5) return 10;
  return 3;
}

void StudyConfig::resolve_and_validate() {
  loop.pairs = layers;
  switch (study) {
    case StudyKind::Base:
      if (loop.energy_min_gev != 1.0 || loop.energy_max_gev != 20.0)
        throw ConfigError("energy_min/energy_max: the base study uses the "
                          "1-20 GeV beam; use study=custom to change it");
      break;
    case StudyKind::Energy:
      loop.energy_min_gev = 1.0;
      loop.energy_max_gev = 100.0;
      break;
    case StudyKind::Transfer:
    case StudyKind::Custom:
      break;
  }
  if (loop.events == 5 && loop.variant == Variant::MiOpt)
    throw ConfigError(
        "events: 5-event studies are only defined for variant=reco (mutual "
        "information cannot be estimated from 5 samples)");
  try {
    loop.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_key(const std::string& path, const std::string& why) {
  throw ConfigError("config key '" + path + "': " + why);
}

double parse_double(const std::string& path, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    bad_key(path, "expected a number, got '" + v + "'");
  }
}

std::size_t parse_count(const std::string& path, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long n = std::stoll(v, &pos);
    if (pos != v.size() || n < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    bad_key(path, "expected a non-negative integer, got '" + v + "'");
  }
}

bool parse_flag(const std::string& path, const std::string& v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  bad_key(path, "expected on/off, got '" + v + "'");
}

}  // namespace

void apply_config_key(StudyConfig& cfg, const std::string& path,
                      const std::string& value) {
  // Section prefixes are namespacing only; the leaf name decides the field.
  std::string key = path;
  if (auto dot = key.rfind('.'); dot != std::string::npos)
    key = key.substr(dot + 1);
  const std::string v = trim(value);

  if (key == "study") {
    if (v == "base") cfg.study = StudyKind::Base;
    else if (v == "transfer") cfg.study = StudyKind::Transfer;
    else if (v == "energy") cfg.study = StudyKind::Energy;
    else if (v == "custom") cfg.study = StudyKind::Custom;
    else bad_key(path, "expected base|transfer|energy|custom, got '" + v + "'");
  } else if (key == "variant") {
    if (v == "reco") cfg.loop.variant = Variant::RecoOpt;
    else if (v == "mi") cfg.loop.variant = Variant::MiOpt;
    else bad_key(path, "expected reco|mi, got '" + v + "'");
  } else if (key == "layers") {
    std::size_t n = parse_count(path, v);
    if (n < 1 || n > 3) bad_key(path, "expected 1, 2 or 3");
    cfg.layers = n;
  } else if (key == "events") {
    cfg.loop.events = parse_count(path, v);
  } else if (key == "candidates") {
    cfg.loop.candidates = parse_count(path, v);
  } else if (key == "iterations") {
    cfg.loop.iterations = parse_count(path, v);
  } else if (key == "runs") {
    cfg.runs = parse_count(path, v);
  } else if (key == "seed") {
    cfg.loop.master_seed = parse_count(path, v);
  } else if (key == "out") {
    cfg.out_dir = v;
  } else if (key == "tl" || key == "transfer_learning") {
    cfg.loop.transfer_learning = parse_flag(path, v);
  } else if (key == "energy_min") {
    cfg.loop.energy_min_gev = parse_double(path, v);
  } else if (key == "energy_max") {
    cfg.loop.energy_max_gev = parse_double(path, v);
  } else if (key == "theta0") {
    cfg.loop.theta0.assign(2 * cfg.layers, parse_double(path, v));
  } else if (key == "sigma") {
    cfg.loop.sigma_cm = parse_double(path, v);
  } else if (key == "epsilon") {
    cfg.loop.epsilon_cm = parse_double(path, v);
  } else if (key == "sum_cap") {
    cfg.loop.thickness_cap_cm = parse_double(path, v);
  } else if (key == "penalty") {
    cfg.loop.penalty_weight = parse_double(path, v);
  } else if (key == "inner_lr") {
    cfg.loop.inner_lr = parse_double(path, v);
  } else if (key == "inner_steps") {
    cfg.loop.inner_steps = parse_count(path, v);
  } else if (key == "mine_epochs") {
    cfg.loop.mine_epochs = parse_count(path, v);
  } else if (key == "mine_hidden") {
    cfg.loop.mine_hidden = parse_count(path, v);
  } else if (key == "reco_epoch_scale") {
    cfg.loop.reco_epoch_scale = parse_double(path, v);
  } else if (key == "flow_epoch_scale") {
    cfg.loop.flow_epoch_scale = parse_double(path, v);
  } else if (key == "mi_surrogate_epochs") {
    cfg.loop.mi_surrogate_epochs = parse_count(path, v);
  } else if (key == "grad_samples") {
    cfg.loop.grad_samples = parse_count(path, v);
  } else if (key == "smearing") {
    cfg.loop.shower.smearing = parse_flag(path, v);
  } else if (key == "checkpoint_dir") {
    cfg.loop.checkpoint_dir = v;
  } else {
    bad_key(path, "unknown key");
  }
}

StudyConfig parse_config_text(const std::string& text) {
  StudyConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  // Order-independence for layers/theta0 pairs: apply layers first.
  std::vector<std::pair<std::string, std::string>> entries;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError("line " + std::to_string(line_no) +
                          ": unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key=value, got '" + t + "'");
    std::string key = trim(t.substr(0, eq));
    std::string path = section.empty() ? key : section + "." + key;
    entries.emplace_back(path, trim(t.substr(eq + 1)));
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) {
                     auto rank = [](const std::string& p) {
                       return p.ends_with("layers") ? 0 : 1;
                     };
                     return rank(a.first) < rank(b.first);
                   });
  for (const auto& [path, value] : entries) apply_config_key(cfg, path, value);
  return cfg;
}

StudyConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_row(std::ofstream& out, std::size_t run,
               const IterationRecord& row) {
  out << row.iteration << ',' << run;
  for (double t : row.theta) out << ',' << fmt(t);
  out << ',' << fmt(row.objective) << ',' << fmt(row.surrogate_pred) << ','
      << fmt(row.scint_sum) << ',' << fmt(row.abs_sum) << ',' << row.seed
      << '\n';
  out.flush();
}

struct Welford {
  std::size_t n = 0;
  double mean = 0.0, m2 = 0.0;
  void add(double x) {
    if (!std::isfinite(x)) return;
    ++n;
    double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }
  double std_dev() const { return n > 1 ? std::sqrt(m2 / (n - 1)) : 0.0; }
};

}  // namespace

AggregateTrace aggregate_runs(const std::vector<EvolutionRecord>& runs) {
  AggregateTrace agg;
  std::size_t max_iters = 0;
  for (const auto& r : runs)
    if (!r.failed) {
      ++agg.completed_runs;
      max_iters = std::max(max_iters, r.rows.size());
    } else {
      agg.warnings.push_back("run failed: " + r.failure);
    }
  for (std::size_t i = 0; i < max_iters; ++i) {
    AggregateRow row;
    std::vector<Welford> th;
    Welford obj, surr, sc, ab;
    for (const auto& r : runs) {
      if (r.failed || i >= r.rows.size()) continue;
      const auto& it = r.rows[i];
      row.iteration = it.iteration;
      ++row.run_count;
      if (th.empty()) th.resize(it.theta.size());
      for (std::size_t j = 0; j < it.theta.size(); ++j) th[j].add(it.theta[j]);
      obj.add(it.objective);
      surr.add(it.surrogate_pred);
      sc.add(it.scint_sum);
      ab.add(it.abs_sum);
    }
    for (const auto& w : th) {
      row.theta_mean.push_back(w.mean);
      row.theta_std.push_back(w.std_dev());
    }
    row.objective_mean = obj.n ? obj.mean : std::nan("");
    row.objective_std = obj.std_dev();
    row.surrogate_mean = surr.n ? surr.mean : std::nan("");
    row.surrogate_std = surr.std_dev();
    row.scint_mean = sc.mean;
    row.scint_std = sc.std_dev();
    row.abs_mean = ab.mean;
    row.abs_std = ab.std_dev();
    agg.rows.push_back(std::move(row));
  }
  return agg;
}

namespace {

// ---------------------------------------------------------------------------
// SVG report: thickness evolution (left axis, cm) with +-1 std bands and the
// objective trace (right axis), 1200x800.
// ---------------------------------------------------------------------------

struct AxisMap {
  double lo = 0.0, hi = 1.0, px0 = 0.0, px1 = 1.0;
  double operator()(double v) const {
    return px0 + (v - lo) / (hi - lo) * (px1 - px0);
  }
};

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

const char* kPalette[6] = {"#1f77b4", "#ff7f0e", "#2ca02c",
                           "#d62728", "#9467bd", "#8c564b"};

void write_svg(const std::string& path, const AggregateTrace& agg,
               const StudyConfig& config) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  const double W = 1200, H = 800, ml = 90, mr = 90, mt = 60, mb = 70;
  const auto& rows = agg.rows;
  std::size_t F = rows.empty() ? 0 : rows.front().theta_mean.size();

  double th_hi = 1.0, obj_lo = 0.0, obj_hi = 1.0;
  bool obj_init = false;
  double it_hi = 1.0;
  for (const auto& r : rows) {
    it_hi = std::max(it_hi, static_cast<double>(r.iteration));
    for (std::size_t j = 0; j < r.theta_mean.size(); ++j)
      th_hi = std::max(th_hi, r.theta_mean[j] + r.theta_std[j]);
    th_hi = std::max(th_hi, r.scint_mean + r.scint_std);
    th_hi = std::max(th_hi, r.abs_mean + r.abs_std);
    for (double v : {r.objective_mean, r.surrogate_mean}) {
      if (!std::isfinite(v)) continue;
      if (!obj_init) { obj_lo = obj_hi = v; obj_init = true; }
      obj_lo = std::min(obj_lo, v);
      obj_hi = std::max(obj_hi, v);
    }
  }
  if (!obj_init) { obj_lo = 0.0; obj_hi = 1.0; }
  if (obj_hi - obj_lo < 1e-12) { obj_hi += 0.5; obj_lo -= 0.5; }
  double pad = 0.05 * (obj_hi - obj_lo);
  obj_lo -= pad;
  obj_hi += pad;
  th_hi *= 1.05;

  AxisMap xm{0.0, it_hi, ml, W - mr};
  AxisMap ym{0.0, th_hi, H - mb, mt};          // left: thickness, cm
  AxisMap om{obj_lo, obj_hi, H - mb, mt};      // right: objective

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' ' << H
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"30\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"20\">"
      << study_name(config.study) << " study, " << variant_name(config.loop.variant)
      << ", " << agg.completed_runs << " runs</text>\n";

  // Axes and grid.
  auto line = [&](double x1, double y1, double x2, double y2,
                  const char* style) {
    out << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2
        << "\" y2=\"" << y2 << "\" " << style << "/>\n";
  };
  line(ml, mt, ml, H - mb, "stroke=\"black\"");
  line(W - mr, mt, W - mr, H - mb, "stroke=\"black\"");
  line(ml, H - mb, W - mr, H - mb, "stroke=\"black\"");
  for (int i = 0; i <= 8; ++i) {
    double ty = mt + i * (H - mb - mt) / 8.0;
    double tv = th_hi * (1.0 - i / 8.0);
    double ov = obj_hi - (obj_hi - obj_lo) * i / 8.0;
    line(ml, ty, W - mr, ty, "stroke=\"#eeeeee\"");
    out << "<text x=\"" << ml - 8 << "\" y=\"" << ty + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"12\">" << tick_label(tv) << "</text>\n";
    out << "<text x=\"" << W - mr + 8 << "\" y=\"" << ty + 4
        << "\" text-anchor=\"start\" font-family=\"sans-serif\" "
           "font-size=\"12\">" << tick_label(ov) << "</text>\n";
  }
  int n_xticks = std::min<std::size_t>(10, static_cast<std::size_t>(it_hi));
  for (int i = 0; i <= n_xticks && n_xticks > 0; ++i) {
    double v = it_hi * i / n_xticks;
    double tx = xm(v);
    line(tx, H - mb, tx, H - mb + 5, "stroke=\"black\"");
    out << "<text x=\"" << tx << "\" y=\"" << H - mb + 20
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"12\">" << tick_label(std::round(v)) << "</text>\n";
  }
  out << "<text x=\"" << W / 2 << "\" y=\"" << H - 25
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"14\">iteration</text>\n";
  out << "<text x=\"22\" y=\"" << H / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"14\" transform=\"rotate(-90 22 " << H / 2
      << ")\">thickness [cm]</text>\n";
  out << "<text x=\"" << W - 22 << "\" y=\"" << H / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"14\" transform=\"rotate(90 " << W - 22 << ' ' << H / 2
      << ")\">objective</text>\n";

  auto band = [&](auto mean_of, auto std_of, const char* color) {
    out << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" "
           "stroke=\"none\" points=\"";
    for (const auto& r : rows)
      out << xm(static_cast<double>(r.iteration)) << ','
          << ym(mean_of(r) + std_of(r)) << ' ';
    for (auto it = rows.rbegin(); it != rows.rend(); ++it)
      out << xm(static_cast<double>(it->iteration)) << ','
          << ym(std::max(0.0, mean_of(*it) - std_of(*it))) << ' ';
    out << "\"/>\n";
  };
  auto polyline = [&](auto value_of, const AxisMap& ax, const char* color,
                      const char* dash) {
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\"" << dash << " points=\"";
    bool last_ok = false;
    std::string pts;
    for (const auto& r : rows) {
      double v = value_of(r);
      if (!std::isfinite(v)) { last_ok = false; continue; }
      pts += std::to_string(xm(static_cast<double>(r.iteration))) + "," +
             std::to_string(ax(v)) + " ";
      last_ok = true;
    }
    (void)last_ok;
    out << pts << "\"/>\n";
  };

  double lx = ml + 14, ly = mt + 14;
  auto legend = [&](const char* color, const std::string& label,
                    const char* dash) {
    out << "<line x1=\"" << lx << "\" y1=\"" << ly << "\" x2=\"" << lx + 26
        << "\" y2=\"" << ly << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"" << dash << "/>\n";
    out << "<text x=\"" << lx + 32 << "\" y=\"" << ly + 4
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << label
        << "</text>\n";
    ly += 18;
  };

  for (std::size_t j = 0; j < F; ++j) {
    const char* color = kPalette[j % 6];
    band([j](const AggregateRow& r) { return r.theta_mean[j]; },
         [j](const AggregateRow& r) { return r.theta_std[j]; }, color);
    polyline([j](const AggregateRow& r) { return r.theta_mean[j]; }, ym, color,
             "");
    std::string label = (j % 2 == 0 ? "absorber " : "scintillator ") +
                        std::to_string(j / 2 + 1) + " [cm]";
    legend(color, label, "");
  }
  band([](const AggregateRow& r) { return r.scint_mean; },
       [](const AggregateRow& r) { return r.scint_std; }, "#17becf");
  polyline([](const AggregateRow& r) { return r.scint_mean; }, ym, "#17becf",
           " stroke-dasharray=\"2,3\"");
  legend("#17becf", "scintillator total [cm]", " stroke-dasharray=\"2,3\"");

  polyline([](const AggregateRow& r) { return r.objective_mean; }, om,
           "#444444", " stroke-dasharray=\"6,4\"");
  legend("#444444", "objective (right axis)", " stroke-dasharray=\"6,4\"");
  polyline([](const AggregateRow& r) { return r.surrogate_mean; }, om,
           "#999999", " stroke-dasharray=\"2,4\"");
  legend("#999999", "surrogate prediction (right axis)",
         " stroke-dasharray=\"2,4\"");

  out << "</svg>\n";
}

void write_sums_csv(const std::string& path, const AggregateTrace& agg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "iter,runs,scint_sum_mean,scint_sum_std,abs_sum_mean,abs_sum_std,"
         "objective_mean,objective_std\n";
  for (const auto& r : agg.rows)
    out << r.iteration << ',' << r.run_count << ',' << fmt(r.scint_mean) << ','
        << fmt(r.scint_std) << ',' << fmt(r.abs_mean) << ',' << fmt(r.abs_std)
        << ',' << fmt(r.objective_mean) << ',' << fmt(r.objective_std) << '\n';
}

void write_metadata(const std::string& path, const StudyConfig& cfg,
                    const AggregateTrace& agg,
                    const std::vector<EvolutionRecord>& runs) {
  json j;
  j["study"] = study_name(cfg.study);
  j["variant"] = variant_name(cfg.loop.variant);
  j["layers"] = cfg.layers;
  j["events"] = cfg.loop.events;
  j["candidates"] = cfg.loop.resolved_candidates();
  j["iterations"] = cfg.loop.iterations;
  j["runs"] = cfg.resolved_runs();
  j["transfer_learning"] = cfg.loop.transfer_learning;
  j["master_seed"] = cfg.loop.master_seed;
  j["energy_min_gev"] = cfg.loop.energy_min_gev;
  j["energy_max_gev"] = cfg.loop.energy_max_gev;
  j["sigma_cm"] = cfg.loop.sigma_cm;
  j["epsilon_cm"] = cfg.loop.epsilon_cm;
  j["thickness_cap_cm"] = cfg.loop.thickness_cap_cm;
  j["penalty_weight"] = cfg.loop.penalty_weight;
  j["inner_lr"] = cfg.loop.inner_lr;
  j["inner_steps"] = cfg.loop.inner_steps;
  j["smearing"] = cfg.loop.shower.smearing;
  j["budgets"] = {{"mine_epochs", cfg.loop.mine_epochs},
                  {"mine_hidden", cfg.loop.mine_hidden},
                  {"reco_epoch_scale", cfg.loop.reco_epoch_scale},
                  {"flow_epoch_scale", cfg.loop.flow_epoch_scale},
                  {"mi_surrogate_epochs", cfg.loop.mi_surrogate_epochs},
                  {"grad_samples", cfg.loop.grad_samples}};
  j["completed_runs"] = agg.completed_runs;
  j["warnings"] = agg.warnings;
  json seeds = json::array();
  json failures = json::array();
  for (std::size_t r = 0; r < runs.size(); ++r) {
    seeds.push_back(cfg.loop.master_seed + r);
    if (runs[r].failed)
      failures.push_back({{"run", r}, {"error", runs[r].failure}});
  }
  j["run_seeds"] = seeds;
  j["run_failures"] = failures;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace

void emit_report(const StudyConfig& config,
                 const std::vector<EvolutionRecord>& runs,
                 const AggregateTrace& aggregate, const std::string& out_dir) {
  fs::create_directories(out_dir);
  if (!runs.empty()) {
    std::ofstream out(out_dir + "/evolution.csv");
    if (!out) throw std::runtime_error("cannot write evolution.csv");
    out << "iter,run";
    std::size_t F = config.loop.features();
    for (std::size_t j = 1; j <= F; ++j) out << ",theta_" << j;
    out << ",objective,surrogate_pred,scint_sum,abs_sum,seed\n";
    for (std::size_t r = 0; r < runs.size(); ++r)
      for (const auto& row : runs[r].rows) write_row(out, r, row);
  }
  write_sums_csv(out_dir + "/evolution_sum.csv", aggregate);
  write_svg(out_dir + "/evolution.svg", aggregate, config);
  write_metadata(out_dir + "/metadata.json", config, aggregate, runs);
}

StudyOutput run_replicas(const StudyConfig& input) {
  StudyConfig config = input;
  config.resolve_and_validate();
  const std::size_t n_runs = config.resolved_runs();

  fs::create_directories(config.out_dir);
  std::ofstream csv(config.out_dir + "/evolution.csv");
  if (!csv)
    throw std::runtime_error("cannot write '" + config.out_dir +
                             "/evolution.csv'");
  csv << "iter,run";
  for (std::size_t j = 1; j <= config.loop.features(); ++j)
    csv << ",theta_" << j;
  csv << ",objective,surrogate_pred,scint_sum,abs_sum,seed\n";
  csv.flush();

  StudyOutput out;
  std::size_t survivors = 0;
  for (std::size_t r = 0; r < n_runs; ++r) {
    LoopConfig lc = config.loop;
    lc.master_seed = config.loop.master_seed + r;
    if (!config.loop.checkpoint_dir.empty())
      lc.checkpoint_dir =
          config.loop.checkpoint_dir + "/run_" + std::to_string(r);
    EvolutionRecord rec =
        run_study(lc, [&](const IterationRecord& row) { write_row(csv, r, row); });
    if (!rec.failed) ++survivors;
    out.runs.push_back(std::move(rec));
  }
  out.aggregate = aggregate_runs(out.runs);
  if (survivors < n_runs && (survivors < 2))
    throw std::runtime_error(
        "study failed: only " + std::to_string(survivors) + " of " +
        std::to_string(n_runs) + " runs completed (" +
        (out.aggregate.warnings.empty() ? std::string("no detail")
                                        : out.aggregate.warnings.front()) +
        ")");
  write_sums_csv(config.out_dir + "/evolution_sum.csv", out.aggregate);
  write_svg(config.out_dir + "/evolution.svg", out.aggregate, config);
  write_metadata(config.out_dir + "/metadata.json", config, out.aggregate,
                 out.runs);
  return out;
}

void reemit_report(const std::string& dir) {
  const std::string csv_path = dir + "/evolution.csv";
  std::ifstream in(csv_path);
  if (!in) throw ConfigError("cannot open '" + csv_path + "'");
  std::string header;
  if (!std::getline(in, header))
    throw ConfigError("'" + csv_path + "' is empty");
  // Count theta columns from the header.
  std::size_t F = 0;
  {
    std::istringstream hs(header);
    std::string col;
    while (std::getline(hs, col, ','))
      if (col.rfind("theta_", 0) == 0) ++F;
  }
  if (F == 0) throw ConfigError("'" + csv_path + "': no theta columns");

  std::vector<EvolutionRecord> runs;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 2 + F + 5)
      throw ConfigError(csv_path + ":" + std::to_string(line_no) +
                        ": expected " + std::to_string(2 + F + 5) +
                        " columns, got " + std::to_string(cells.size()));
    IterationRecord row;
    row.iteration = parse_count("iter", cells[0]);
    std::size_t run = parse_count("run", cells[1]);
    for (std::size_t j = 0; j < F; ++j)
      row.theta.push_back(parse_double("theta", cells[2 + j]));
    row.objective = parse_double("objective", cells[2 + F]);
    row.surrogate_pred = parse_double("surrogate_pred", cells[3 + F]);
    row.scint_sum = parse_double("scint_sum", cells[4 + F]);
    row.abs_sum = parse_double("abs_sum", cells[5 + F]);
    row.seed = parse_count("seed", cells[6 + F]);
    if (run >= runs.size()) runs.resize(run + 1);
    runs[run].rows.push_back(std::move(row));
  }

  StudyConfig cfg;
  cfg.study = StudyKind::Custom;
  cfg.layers = F / 2;
  // Recover what metadata.json knows, if present, for the chart title.
  std::ifstream meta(dir + "/metadata.json");
  if (meta) {
    try {
      json j = json::parse(meta);
      std::string s = j.value("study", "custom");
      if (s == "base") cfg.study = StudyKind::Base;
      else if (s == "transfer") cfg.study = StudyKind::Transfer;
      else if (s == "energy") cfg.study = StudyKind::Energy;
      if (j.value("variant", "") == std::string("mi"))
        cfg.loop.variant = Variant::MiOpt;
    } catch (const json::exception&) {
      // Leave the defaults; the chart title is cosmetic.
    }
  }
  AggregateTrace agg = aggregate_runs(runs);
  write_sums_csv(dir + "/evolution_sum.csv", agg);
  write_svg(dir + "/evolution.svg", agg, cfg);
}

}  // namespace calopt
