// Study configuration, presets, replica aggregation and report emission.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "calopt/optloop.hpp"

namespace calopt {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class StudyKind { Base, Transfer, Energy, Custom };

std::string study_name(StudyKind k);

struct StudyConfig {
  StudyKind study = StudyKind::Base;
  std::size_t layers = 1;
  std::size_t runs = 0;  // 0 => default: 3combined; 10 for 5-event transfer
  std::string out_dir = "out";
  LoopConfig loop;

  std::size_t resolved_runs() const;
  // Applies preset defaults and checks the study invariants.
  void resolve_and_validate();
};

// Flat key=value configuration text with optional [section] headers.
// Unknown keys, type mismatches and invariant violations raise ConfigError
// with the offending key path.
StudyConfig parse_config_text(const std::string& text);
StudyConfig parse_config_file(const std::string& path);
// Applies a single key=value override (CLI flags reuse the file keys).
void apply_config_key(StudyConfig& cfg, const std::string& key,
                      const std::string& value);

struct AggregateRow {
  std::size_t iteration = 0;
  std::size_t run_count = 0;
  std::vector<double> theta_mean, theta_std;
  double objective_mean = 0.0, objective_std = 0.0;
  double surrogate_mean = 0.0, surrogate_std = 0.0;
  double scint_mean = 0.0, scint_std = 0.0;
  double abs_mean = 0.0, abs_std = 0.0;
};

struct AggregateTrace {
  std::vector<AggregateRow> rows;
  std::size_t completed_runs = 0;
  std::vector<std::string> warnings;
};

struct StudyOutput {
  std::vector<EvolutionRecord> runs;
  AggregateTrace aggregate;
};

// Runs replicas with seeds master+0..runs-1, writes evolution.csv rows
// incrementally, aggregates over completed runs and emits the report files.
StudyOutput run_replicas(const StudyConfig& config);

// Report files: evolution.csv (if records supplied), evolution_sum.csv,
// evolution.svg, metadata.json.
void emit_report(const StudyConfig& config,
                 const std::vector<EvolutionRecord>& runs,
                 const AggregateTrace& aggregate, const std::string& out_dir);

// Rebuilds the SVG (and sums) from an existing evolution.csv.
void reemit_report(const std::string& dir);

AggregateTrace aggregate_runs(const std::vector<EvolutionRecord>& runs);

}  // namespace calopt
