#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "uq/uncertainty.hpp"

namespace pbcnn::gate {

struct RiskCoveragePoint {
  double coverage = 0.0;
  double risk = 0.0;
  double threshold = 0.0;
};

/// Classification risk of the examples with uncertainty <= threshold versus
/// the fraction of examples they cover, ascending in coverage. Tied
/// uncertainties enter together, so each point is exactly the trusted set of
/// an inclusive gate at its threshold.
struct RiskCoverageCurve {
  uq::Measure measure = uq::Measure::entropy;
  std::vector<RiskCoveragePoint> points;
};

RiskCoverageCurve risk_coverage_curve(std::span<const double> uncertainties,
                                      const std::vector<bool>& correct, uq::Measure measure);

struct ThresholdSelection {
  double threshold = 0.0;
  double coverage = 0.0;  // 0 when no point meets the target
  double risk = 0.0;
  bool qualified = false;
};

/// Maximum-coverage point with risk <= target_risk. With no qualifying point
/// the smallest threshold is returned with zero coverage.
ThresholdSelection select_threshold(const RiskCoverageCurve& curve, double target_risk);

/// Selected thresholds: rows are measures, columns are target risk levels.
struct ThresholdTable {
  std::vector<uq::Measure> measures;
  std::vector<double> risk_levels;
  std::vector<std::vector<double>> thresholds;  // [measure][risk level]

  double at(uq::Measure m, std::size_t level) const;
};

ThresholdTable build_threshold_table(const std::vector<RiskCoverageCurve>& curves,
                                     const std::vector<double>& risk_levels);

void write_risk_coverage_csv(const std::filesystem::path& path, const RiskCoverageCurve& curve);
RiskCoverageCurve read_risk_coverage_csv(const std::filesystem::path& path, uq::Measure measure);

void write_threshold_table_csv(const std::filesystem::path& path, const ThresholdTable& table);
ThresholdTable read_threshold_table_csv(const std::filesystem::path& path);

/// Shortest round-trip decimal text for a double.
std::string format_number(double value);

}  // namespace pbcnn::gate
