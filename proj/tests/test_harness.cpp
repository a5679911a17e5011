#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "calopt/harness.hpp"

using namespace calopt;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

StudyConfig desk_config(const std::string& out) {
  StudyConfig cfg;
  cfg.study = StudyKind::Custom;
  cfg.loop.variant = Variant::RecoOpt;
  cfg.layers = 1;
  cfg.loop.events = 30;
  cfg.loop.candidates = 5;
  cfg.loop.iterations = 2;
  cfg.runs = 2;
  cfg.loop.master_seed = 91;
  cfg.loop.reco_epoch_scale = 0.05;
  cfg.loop.flow_epoch_scale = 0.05;
  cfg.loop.grad_samples = 30;
  cfg.out_dir = out;
  return cfg;
}

}  // namespace

TEST_CASE("defaults resolve for a plain base study") {
  StudyConfig cfg = parse_config_text("study = base\nvariant = reco\n");
  cfg.resolve_and_validate();
  CHECK(cfg.layers == 1);
  CHECK(cfg.loop.features() == 2);
  CHECK(cfg.loop.events == 700);
  CHECK(cfg.loop.resolved_candidates() == 30);
  CHECK(cfg.loop.energy_min_gev == 1.0);
  CHECK(cfg.loop.energy_max_gev == 20.0);
  CHECK(cfg.resolved_runs() == 3);
}

TEST_CASE("sections, comments, and overrides parse") {
  StudyConfig cfg = parse_config_text(
      "# comment\n[study]\nstudy = custom\nlayers = 2\n\n[loop]\nevents = 50\n"
      "iterations = 7\ntl = off\nseed = 123\n");
  CHECK(cfg.layers == 2);
  CHECK(cfg.loop.events == 50);
  CHECK(cfg.loop.iterations == 7);
  CHECK_FALSE(cfg.loop.transfer_learning);
  CHECK(cfg.loop.master_seed == 123);
}

TEST_CASE("unknown keys and bad values name the offending key") {
  CHECK_THROWS_WITH_AS(parse_config_text("bogus = 1\n"),
                       doctest::Contains("bogus"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config_text("events = many\n"),
                       doctest::Contains("events"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("layers = 4\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("no_equals_sign\n"), ConfigError);
}

TEST_CASE("five-event studies are limited to the reconstruction variant") {
  StudyConfig cfg = parse_config_text(
      "study = transfer\nvariant = mi\nevents = 5\n");
  CHECK_THROWS_AS(cfg.resolve_and_validate(), ConfigError);
  StudyConfig ok =
      parse_config_text("study = transfer\nvariant = reco\nevents = 5\n");
  ok.resolve_and_validate();
  CHECK(ok.resolved_runs() == 10);
}

TEST_CASE("base study rejects a custom energy range") {
  StudyConfig cfg =
      parse_config_text("study = base\nvariant = reco\nenergy_max = 55\n");
  CHECK_THROWS_AS(cfg.resolve_and_validate(), ConfigError);
}

TEST_CASE("energy preset pins the 1-100 GeV range") {
  StudyConfig cfg = parse_config_text("study = energy\nvariant = reco\n");
  cfg.resolve_and_validate();
  CHECK(cfg.loop.energy_min_gev == 1.0);
  CHECK(cfg.loop.energy_max_gev == 100.0);
}

TEST_CASE("replicated study writes the full report and aggregates") {
  std::string out =
      (fs::temp_directory_path() / "calopt_harness_test").string();
  fs::remove_all(out);
  StudyConfig cfg = desk_config(out);
  StudyOutput res = run_replicas(cfg);

  CHECK(res.runs.size() == 2);
  CHECK(res.aggregate.completed_runs == 2);
  REQUIRE(!res.aggregate.rows.empty());
  CHECK(res.aggregate.rows.front().run_count == 2);

  CHECK(fs::exists(out + "/evolution.csv"));
  CHECK(fs::exists(out + "/evolution_sum.csv"));
  CHECK(fs::exists(out + "/evolution.svg"));
  CHECK(fs::exists(out + "/metadata.json"));

  std::ifstream csv(out + "/evolution.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header ==
        "iter,run,theta_1,theta_2,objective,surrogate_pred,scint_sum,abs_sum,"
        "seed");
  // Per-row sums are consistent with the thetas.
  std::string line;
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    ++rows;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(std::stod(cell));
    REQUIRE(cells.size() == 9);
    CHECK(cells[6] == doctest::Approx(cells[3]));  // scint_sum = theta_2
    CHECK(cells[7] == doctest::Approx(cells[2]));  // abs_sum = theta_1
  }
  CHECK(rows == 2 * 3);  // 2 runs x (initial + 2 iterations)

  SUBCASE("rerun reproduces the evolution byte for byte") {
    std::string bytes = slurp(out + "/evolution.csv");
    fs::remove_all(out);
    run_replicas(cfg);
    CHECK(slurp(out + "/evolution.csv") == bytes);
  }

  SUBCASE("the svg is a pure view of the csv") {
    std::string svg = slurp(out + "/evolution.svg");
    reemit_report(out);
    CHECK(slurp(out + "/evolution.svg") == svg);
  }
  fs::remove_all(out);
}

TEST_CASE("single run yields zero standard deviations") {
  std::string out = (fs::temp_directory_path() / "calopt_single_run").string();
  fs::remove_all(out);
  StudyConfig cfg = desk_config(out);
  cfg.runs = 1;
  StudyOutput res = run_replicas(cfg);
  for (const auto& row : res.aggregate.rows) {
    CHECK(row.scint_std == 0.0);
    CHECK(row.abs_std == 0.0);
    for (double s : row.theta_std) CHECK(s == 0.0);
  }
  fs::remove_all(out);
}

TEST_CASE("aggregation tolerates a failed run when two survive") {
  std::vector<EvolutionRecord> runs(3);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t i = 0; i < 3; ++i) {
      IterationRecord row;
      row.iteration = i;
      row.theta = {1.0 + static_cast<double>(r), 2.0};
      row.objective = 0.5;
      row.scint_sum = 2.0;
      row.abs_sum = row.theta[0];
      runs[r].rows.push_back(row);
    }
  runs[2].failed = true;
  runs[2].failure = "synthetic failure";
  AggregateTrace agg = aggregate_runs(runs);
  CHECK(agg.completed_runs == 2);
  REQUIRE(agg.rows.size() == 3);
  CHECK(agg.rows[0].theta_mean[0] == doctest::Approx(1.5));
  REQUIRE(agg.warnings.size() == 1);
  CHECK(agg.warnings[0].find("synthetic failure") != std::string::npos);
}
