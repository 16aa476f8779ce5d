#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pipeline/config.hpp"

namespace pbcnn::pipeline {

enum class Stage { synth, preprocess, train, calibrate, inject, evaluate, report };

inline constexpr Stage kAllStages[] = {Stage::synth,    Stage::preprocess, Stage::train,
                                       Stage::calibrate, Stage::inject,    Stage::evaluate,
                                       Stage::report};

std::string stage_id(Stage s);
Stage parse_stage(const std::string& id);

/// Paths of everything a full run emits, relative layout fixed by the config.
struct ReportBundle {
  std::filesystem::path root;
  std::filesystem::path manifest;
  std::vector<std::filesystem::path> uncertainty_dumps;
  std::vector<std::filesystem::path> risk_coverage;  // one per calibrated measure
  std::filesystem::path threshold_table;
  std::vector<std::filesystem::path> roc_curves;
  std::filesystem::path in_distribution_summary;
  std::vector<std::filesystem::path> summaries;  // uniform, unknown_class, sensor_faults (when enabled)
  std::filesystem::path report;

  std::vector<std::filesystem::path> all() const;
};

ReportBundle bundle_for(const ExperimentConfig& config, const std::filesystem::path& out);

using LogFn = std::function<void(const std::string&)>;

class Pipeline {
public:
  Pipeline(ExperimentConfig config, std::filesystem::path out, LogFn log = {});

  const ExperimentConfig& config() const { return config_; }
  const std::filesystem::path& out() const { return out_; }

  /// Runs one stage unconditionally; inputs must exist from earlier stages.
  /// Failures surface as StageError carrying the stage name.
  void run_stage(Stage stage);

  /// Runs every stage in order. With `resume`, stages whose completion marker
  /// matches the current config hash are skipped.
  ReportBundle run_all(bool resume = true);

  bool stage_complete(Stage stage) const;

private:
  void write_manifest() const;
  void mark_complete(Stage stage) const;
  void log(const std::string& msg) const;

  void synth();
  void preprocess();
  void train();
  void calibrate();
  void inject();
  void evaluate();
  void report();

  ExperimentConfig config_;
  std::filesystem::path out_;
  std::string hash_;
  LogFn log_;
};

/// Renders the bundle as text. Throws Error naming the first missing artifact.
std::string emit_report(const ReportBundle& bundle);

ReportBundle run_pipeline(const ExperimentConfig& config, const std::filesystem::path& out,
                          LogFn log = {});

}  // namespace pbcnn::pipeline
