// calo-opt: detector-layout optimization studies from the command line.
//
//   calo-opt run [--config FILE] [--key value overrides...]
//   calo-opt validate
//   calo-opt report DIR
//
// Exit codes: 0 success, 2 configuration error, 3 run failure,
// 4 validation failure.
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "calopt/harness.hpp"
#include "calopt/validation.hpp"

namespace {

int cmd_run(const std::string& config_path,
            const std::vector<std::pair<std::string, std::string>>& overrides) {
  calopt::StudyConfig cfg;
  try {
    if (!config_path.empty()) cfg = calopt::parse_config_file(config_path);
    for (const auto& [key, value] : overrides)
      calopt::apply_config_key(cfg, key, value);
    cfg.resolve_and_validate();
  } catch (const calopt::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  }
  try {
    calopt::StudyOutput out = calopt::run_replicas(cfg);
    std::printf("study complete: %zu/%zu runs, report in %s\n",
                out.aggregate.completed_runs, out.runs.size(),
                cfg.out_dir.c_str());
    for (const auto& w : out.aggregate.warnings)
      std::printf("warning: %s\n", w.c_str());
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "run failure: %s\n", e.what());
    return 3;
  }
}

int cmd_validate(std::uint64_t seed) {
  bool all_ok = true;
  try {
    for (const auto& r : calopt::run_validation_suite(seed)) {
      std::printf("[%s] %s: %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                  r.detail.c_str());
      all_ok = all_ok && r.passed;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "validation aborted: %s\n", e.what());
    return 4;
  }
  return all_ok ? 0 : 4;
}

int cmd_report(const std::string& dir) {
  try {
    calopt::reemit_report(dir);
    std::printf("report refreshed in %s\n", dir.c_str());
    return 0;
  } catch (const calopt::ConfigError& e) {
    std::fprintf(stderr, "report error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "report error: %s\n", e.what());
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Calorimeter layout optimization studies"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a study and write its report");
  std::string config_path;
  run->add_option("--config", config_path, "key=value configuration file");
  std::vector<std::string> set_args;
  run->add_option("--set", set_args,
                  "override a configuration key, e.g. --set events=100");
  // Common keys as first-class flags.
  std::vector<std::pair<std::string, std::string>> overrides;
  auto capture = [&overrides](const std::string& key) {
    return [&overrides, key](const std::string& v) {
      overrides.emplace_back(key, v);
    };
  };
  for (const char* key :
       {"study", "variant", "layers", "events", "candidates", "iterations",
        "runs", "seed", "out", "tl", "energy_min", "energy_max", "theta0",
        "mine_epochs", "mine_hidden", "reco_epoch_scale", "flow_epoch_scale",
        "mi_surrogate_epochs", "grad_samples", "smearing", "checkpoint_dir"})
    run->add_option_function<std::string>(std::string("--") + key,
                                          capture(key));

  auto* validate = app.add_subcommand(
      "validate", "Run the numerical validation suite (exit 4 on failure)");
  std::uint64_t vseed = 20260826;
  validate->add_option("--seed", vseed, "validation seed");

  auto* report =
      app.add_subcommand("report", "Rebuild the SVG/summary from evolution.csv");
  std::string report_dir;
  report->add_option("dir", report_dir, "study output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (run->parsed()) {
    for (const auto& s : set_args) {
      auto eq = s.find('=');
      if (eq == std::string::npos) {
        std::fprintf(stderr, "configuration error: --set expects key=value, got '%s'\n",
                     s.c_str());
        return 2;
      }
      overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    return cmd_run(config_path, overrides);
  }
  if (validate->parsed()) return cmd_validate(vseed);
  return cmd_report(report_dir);
}
