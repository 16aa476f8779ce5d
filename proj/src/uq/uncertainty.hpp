#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bayes/network.hpp"

namespace pbcnn::uq {

using diffcore::Array;

/// p_i^m: row m holds the class probabilities of stochastic pass m.
struct PredictiveSamples {
  Array probs;  // [M, N]

  std::size_t passes() const { return probs.extent(0); }
  std::size_t classes() const { return probs.extent(1); }

  /// Checks extents, nonnegativity and row sums (within 1e-9).
  void validate(std::size_t min_passes = 2) const;
};

enum class Measure { entropy = 0, total_std = 1, classwise_std = 2, classwise_range = 3 };

inline constexpr Measure kAllMeasures[] = {Measure::entropy, Measure::total_std,
                                           Measure::classwise_std, Measure::classwise_range};

std::string measure_id(Measure m);          // "entropy", "total_std", ...
std::string measure_title(Measure m);       // "Predictive entropy", ...
Measure parse_measure(const std::string& id);

struct UncertaintySummary {
  std::vector<double> mean_prob;
  double entropy = 0.0;  // bits
  double total_std = 0.0;
  double classwise_std_max = 0.0;
  double classwise_range_max = 0.0;
  std::size_t predicted_class = 0;

  double value(Measure m) const;
};

/// M stochastic forward passes of one image [h,w,c]. Pass m draws a full
/// weight sample from a stream derived from (seed, m).
PredictiveSamples predict_mc(const bayes::PbcnnModel& model, const Array& image, std::size_t passes,
                             std::uint64_t seed);

/// Same passes for a batch [n,h,w,c]; each pass shares one weight draw across
/// the batch, so row i equals predict_mc on image i with the same seed.
std::vector<PredictiveSamples> predict_mc_batch(const bayes::PbcnnModel& model,
                                                const Array& images, std::size_t passes,
                                                std::uint64_t seed);

std::vector<double> mean_probability(const PredictiveSamples& samples);
/// Shannon entropy in bits, 0 log 0 = 0.
double predictive_entropy(std::span<const double> p_star);
double total_std(const PredictiveSamples& samples);
double classwise_std_max(const PredictiveSamples& samples);
double classwise_range_max(const PredictiveSamples& samples);

UncertaintySummary summarize(const PredictiveSamples& samples);

/// Rows for the uncertainty dump CSV.
struct UncertaintyRecord {
  std::size_t example_id = 0;
  std::int64_t true_label = -1;  // -1 when unknown (OOD)
  UncertaintySummary summary;
};

void write_uncertainty_csv(const std::filesystem::path& path,
                           const std::vector<UncertaintyRecord>& records, std::size_t classes);
std::vector<UncertaintyRecord> read_uncertainty_csv(const std::filesystem::path& path);

}  // namespace pbcnn::uq
