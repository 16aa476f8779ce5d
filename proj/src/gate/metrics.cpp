#include "gate/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "common/errors.hpp"
#include "gate/calibration.hpp"

namespace pbcnn::gate {

namespace {
double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }
}  // namespace

GateDecision gate_decision(const uq::UncertaintySummary& summary, uq::Measure measure,
                           double threshold) {
  if (!std::isfinite(threshold)) throw ContractError("gate_decision: threshold must be finite");
  const double v = summary.value(measure);
  GateDecision d;
  d.value = v;
  d.threshold = threshold;
  d.trusted = v <= threshold;
  d.predicted_class = summary.predicted_class;
  return d;
}

OodConfusion ood_confusion(const std::vector<GateDecision>& decisions,
                           const std::vector<bool>& is_in_distribution) {
  if (decisions.size() != is_in_distribution.size()) {
    throw ContractError("ood_confusion: length mismatch");
  }
  OodConfusion c;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const bool trusted = decisions[i].trusted;
    if (is_in_distribution[i]) {
      (trusted ? c.tp : c.fn)++;
    } else {
      (trusted ? c.fp : c.tn)++;
    }
  }
  c.tpr = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  c.fpr = ratio(static_cast<double>(c.fp), static_cast<double>(c.fp + c.tn));
  return c;
}

RocResult roc_auroc(std::span<const double> uncertainties,
                    const std::vector<bool>& is_in_distribution) {
  const std::size_t n = uncertainties.size();
  if (is_in_distribution.size() != n) throw ContractError("roc_auroc: length mismatch");
  const auto positives = static_cast<std::size_t>(
      std::count(is_in_distribution.begin(), is_in_distribution.end(), true));
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw ContractError("roc_auroc: both in-distribution and OOD examples are required");
  }
  for (double u : uncertainties) {
    if (std::isnan(u)) throw NumericError("roc_auroc: NaN uncertainty");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return uncertainties[a] < uncertainties[b];
  });
  RocResult r;
  r.curve.push_back({-std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  double area = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (is_in_distribution[order[k]]) ++tp;
    else ++fp;
    const double u = uncertainties[order[k]];
    if (k + 1 < n && uncertainties[order[k + 1]] == u) continue;
    const RocPoint next{u, static_cast<double>(tp) / static_cast<double>(positives),
                        static_cast<double>(fp) / static_cast<double>(negatives)};
    const RocPoint& prev = r.curve.back();
    area += (next.fpr - prev.fpr) * (next.tpr + prev.tpr) * 0.5;
    r.curve.push_back(next);
  }
  r.auroc = area;
  return r;
}

DiagnosisReport micro_prf(const std::vector<GateDecision>& decisions,
                          std::span<const std::int64_t> true_labels,
                          const std::vector<bool>& is_in_distribution, std::size_t healthy_class,
                          std::size_t num_classes) {
  const std::size_t n = decisions.size();
  if (true_labels.size() != n || is_in_distribution.size() != n) {
    throw ContractError("micro_prf: length mismatch");
  }
  if (healthy_class >= num_classes) throw ContractError("micro_prf: unknown healthy class");
  DiagnosisReport rep;
  std::vector<std::ptrdiff_t> slot(num_classes, -1);
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (c == healthy_class) continue;
    slot[c] = static_cast<std::ptrdiff_t>(rep.fault_classes.size());
    rep.fault_classes.push_back(c);
  }
  const std::size_t g = rep.fault_classes.size();
  rep.tp.assign(g, 0);
  rep.fp_id.assign(g, 0);
  rep.fp_ood.assign(g, 0);
  rep.fn.assign(g, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const GateDecision& d = decisions[i];
    if (is_in_distribution[i] &&
        (true_labels[i] < 0 || static_cast<std::size_t>(true_labels[i]) >= num_classes)) {
      throw ContractError("micro_prf: unknown class index " + std::to_string(true_labels[i]));
    }
    if (!d.trusted) continue;
    if (d.predicted_class >= num_classes) {
      throw ContractError("micro_prf: unknown predicted class " + std::to_string(d.predicted_class));
    }
    const std::ptrdiff_t pred = slot[d.predicted_class];
    if (!is_in_distribution[i]) {
      if (pred >= 0) rep.fp_ood[static_cast<std::size_t>(pred)]++;
      continue;
    }
    const auto truth = static_cast<std::size_t>(true_labels[i]);
    const std::ptrdiff_t true_slot = slot[truth];
    if (pred >= 0) {
      if (truth == d.predicted_class) rep.tp[static_cast<std::size_t>(pred)]++;
      else rep.fp_id[static_cast<std::size_t>(pred)]++;
    } else if (true_slot >= 0) {
      rep.fn[static_cast<std::size_t>(true_slot)]++;
    }
  }
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t k = 0; k < g; ++k) {
    tp += static_cast<double>(rep.tp[k]);
    fp += static_cast<double>(rep.fp_id[k] + rep.fp_ood[k]);
    fn += static_cast<double>(rep.fn[k]);
  }
  rep.precision = ratio(tp, tp + fp);
  rep.recall = ratio(tp, tp + fn);
  rep.f_measure = ratio(2.0 * rep.precision * rep.recall, rep.precision + rep.recall);
  return rep;
}

void write_roc_csv(const std::filesystem::path& path, const RocResult& roc) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os << "threshold,tpr,fpr\n";
  for (const auto& p : roc.curve) {
    os << format_number(p.threshold) << ',' << format_number(p.tpr) << ','
       << format_number(p.fpr) << '\n';
  }
}

}  // namespace pbcnn::gate
