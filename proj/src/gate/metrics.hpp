#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "uq/uncertainty.hpp"

namespace pbcnn::gate {

/// Trusted examples receive the argmax class of the mean prediction;
/// flagged ones are deferred to an expert.
struct GateDecision {
  bool trusted = false;
  std::size_t predicted_class = 0;  // meaningful only when trusted
  double value = 0.0;
  double threshold = 0.0;
};

/// Trusted iff the measure value is <= threshold.
GateDecision gate_decision(const uq::UncertaintySummary& summary, uq::Measure measure,
                           double threshold);

/// In-distribution examples are the positives.
struct OodConfusion {
  std::size_t tp = 0, fn = 0, fp = 0, tn = 0;
  double tpr = 0.0, fpr = 0.0;
};

OodConfusion ood_confusion(const std::vector<GateDecision>& decisions,
                           const std::vector<bool>& is_in_distribution);

struct RocPoint {
  double threshold = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
};

struct RocResult {
  std::vector<RocPoint> curve;  // ascending threshold, from (0,0) to (1,1)
  double auroc = 0.0;
};

/// ROC of the inclusive gate swept over every distinct uncertainty value,
/// with a -inf sentinel at the origin; AUROC by trapezoidal integration.
RocResult roc_auroc(std::span<const double> uncertainties,
                    const std::vector<bool>& is_in_distribution);

struct DiagnosisReport {
  std::vector<std::size_t> fault_classes;
  std::vector<std::size_t> tp, fp_id, fp_ood, fn;  // per fault class
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
};

/// Micro-averaged Precision/Recall/F over trusted decisions. Every class
/// other than `healthy_class` is a fault class. `true_labels` entries of OOD
/// examples are ignored.
DiagnosisReport micro_prf(const std::vector<GateDecision>& decisions,
                          std::span<const std::int64_t> true_labels,
                          const std::vector<bool>& is_in_distribution, std::size_t healthy_class,
                          std::size_t num_classes);

void write_roc_csv(const std::filesystem::path& path, const RocResult& roc);

}  // namespace pbcnn::gate
