#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bayes/network.hpp"
#include "bayes/train.hpp"
#include "signals/faults.hpp"
#include "signals/spectrogram.hpp"
#include "uq/uncertainty.hpp"

namespace pbcnn::pipeline {

struct SyntheticSource {
  std::size_t classes = 5;
  std::size_t signals_per_class = 21;
  double duration_s = 0.5;
  double sample_rate = signals::kDefaultSampleRate;
};

/// A recorded signal on disk: either a .f32 stem with JSON sidecar or a CSV.
struct SignalFile {
  std::string path;
  std::string format = "f32";  // "f32" | "csv"
  std::int64_t class_label = 0;
  double sample_rate = signals::kDefaultSampleRate;  // csv only
  std::string condition;
};

struct DataSection {
  std::string source = "synthetic";  // "synthetic" | "files"
  SyntheticSource synthetic;
  std::vector<SignalFile> files;
  signals::SpectrogramConfig spectrogram;
  std::size_t healthy_class = 0;
};

struct SplitSection {
  double train_ratio = 0.7;  // train+validation share of the whole set
  double fit_ratio = 0.7;    // share of that portion used for fitting
};

struct ModelSection {
  std::vector<bayes::LayerSpec> layers;  // empty: the standard architecture
  bayes::PriorSpec prior;
  bayes::InitConfig init;
  bayes::TrainConfig train;
};

struct CalibrationSection {
  std::vector<uq::Measure> measures{std::begin(uq::kAllMeasures), std::end(uq::kAllMeasures)};
  std::vector<double> risk_levels{0.005, 0.01, 0.015, 0.02, 0.025, 0.03, 0.035};
  std::size_t mc_passes = 100;
  std::size_t max_examples = 0;  // 0 keeps the whole validation split
};

struct UniformSource {
  bool enabled = true;
  std::size_t count = 0;  // 0: same size as the evaluated test set
};

struct HeldOutSource {
  std::optional<std::size_t> class_label = 3;
};

struct FaultSource {
  std::vector<signals::FaultSpec> faults;  // p2p_reference is filled in by the pipeline
};

struct EvaluationSection {
  std::size_t mc_passes = 100;
  std::size_t max_examples = 0;  // per evaluated set; 0 keeps all
  UniformSource uniform;
  HeldOutSource held_out;
  FaultSource sensor_faults;
};

struct ExperimentConfig {
  std::uint64_t seed = 2024;
  DataSection data;
  SplitSection split;
  ModelSection model;
  CalibrationSection calibration;
  EvaluationSection evaluation;

  /// Throws ValidationError naming the offending field.
  void validate() const;

  /// Original class labels that feed the classifier, ascending.
  std::vector<std::size_t> known_classes() const;
  std::size_t total_classes() const;
  bayes::NetworkSpec network() const;
};

inline constexpr const char* kSeedEnvVar = "PBCNN_SEED";

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);

/// Parses and validates; PBCNN_SEED in the environment replaces `seed`.
ExperimentConfig load_config(const std::filesystem::path& path);

/// FNV-1a 64 over the canonical JSON dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

}  // namespace pbcnn::pipeline
