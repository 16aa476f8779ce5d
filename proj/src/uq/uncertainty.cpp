#include "uq/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "common/errors.hpp"
#include "common/random.hpp"

namespace pbcnn::uq {

namespace {
constexpr double kProbabilityFloor = 1e-12;
constexpr double kRowSumTolerance = 1e-9;

void require_passes(const PredictiveSamples& s, std::size_t min_passes, const char* what) {
  if (s.probs.rank() != 2) throw ContractError(std::string(what) + ": samples must be [M,N]");
  if (s.passes() < min_passes) {
    throw ContractError(std::string(what) + ": needs M >= " + std::to_string(min_passes));
  }
}

std::vector<double> class_variances(const PredictiveSamples& s, const std::vector<double>& mean) {
  const std::size_t m = s.passes();
  const std::size_t n = s.classes();
  std::vector<double> var(n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = s.probs.data() + r * n;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = row[i] - mean[i];
      var[i] += d * d;
    }
  }
  for (double& v : var) v /= static_cast<double>(m - 1);
  return var;
}
}  // namespace

void PredictiveSamples::validate(std::size_t min_passes) const {
  require_passes(*this, min_passes, "PredictiveSamples");
  const std::size_t n = classes();
  for (std::size_t r = 0; r < passes(); ++r) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = probs[r * n + i];
      if (!(p >= 0.0)) throw ContractError("PredictiveSamples: negative or NaN probability");
      total += p;
    }
    if (std::abs(total - 1.0) > kRowSumTolerance) {
      throw ContractError("PredictiveSamples: row " + std::to_string(r) + " does not sum to 1");
    }
  }
}

std::string measure_id(Measure m) {
  switch (m) {
    case Measure::entropy: return "entropy";
    case Measure::total_std: return "total_std";
    case Measure::classwise_std: return "classwise_std_max";
    case Measure::classwise_range: return "classwise_range_max";
  }
  return "unknown";
}

std::string measure_title(Measure m) {
  switch (m) {
    case Measure::entropy: return "Predictive entropy";
    case Measure::total_std: return "Total standard deviation";
    case Measure::classwise_std: return "Class-wise standard deviation";
    case Measure::classwise_range: return "Class-wise range";
  }
  return "unknown";
}

Measure parse_measure(const std::string& id) {
  for (Measure m : kAllMeasures) {
    if (measure_id(m) == id) return m;
  }
  throw ContractError("unknown uncertainty measure '" + id + "'");
}

double UncertaintySummary::value(Measure m) const {
  switch (m) {
    case Measure::entropy: return entropy;
    case Measure::total_std: return total_std;
    case Measure::classwise_std: return classwise_std_max;
    case Measure::classwise_range: return classwise_range_max;
  }
  throw ContractError("unknown measure");
}

std::vector<PredictiveSamples> predict_mc_batch(const bayes::PbcnnModel& model,
                                                const Array& images, std::size_t passes,
                                                std::uint64_t seed) {
  if (!model.trained()) throw ContractError("predict_mc: model is not trained");
  if (passes < 2) throw ContractError("predict_mc: needs M >= 2");
  const std::size_t n = images.extent(0);
  const std::size_t classes = model.spec().num_classes();
  std::vector<PredictiveSamples> out(n, PredictiveSamples{Array({passes, classes})});
  for (std::size_t m = 0; m < passes; ++m) {
    Rng rng(derive_seed(seed, m));
    const auto weights = bayes::sample_weights(model, rng);
    const Array probs = bayes::predict_with_weights(model.spec(), weights, images);
    for (std::size_t e = 0; e < n; ++e) {
      std::copy_n(probs.data() + e * classes, classes, out[e].probs.data() + m * classes);
    }
  }
  return out;
}

PredictiveSamples predict_mc(const bayes::PbcnnModel& model, const Array& image,
                             std::size_t passes, std::uint64_t seed) {
  if (image.rank() != 3) throw ShapeError("predict_mc: image must be [h,w,c]");
  diffcore::Extents e = image.extents();
  e.insert(e.begin(), 1);
  return std::move(predict_mc_batch(model, image.reshaped(e), passes, seed).front());
}

std::vector<double> mean_probability(const PredictiveSamples& samples) {
  require_passes(samples, 1, "mean_probability");
  const std::size_t m = samples.passes();
  const std::size_t n = samples.classes();
  std::vector<double> mean(n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t i = 0; i < n; ++i) mean[i] += samples.probs[r * n + i];
  }
  for (double& v : mean) v /= static_cast<double>(m);
  return mean;
}

double predictive_entropy(std::span<const double> p_star) {
  double h = 0.0;
  for (double p : p_star) {
    if (p > 0.0) h -= p * std::log2(std::max(p, kProbabilityFloor));
  }
  return std::max(h, 0.0);
}

double total_std(const PredictiveSamples& samples) {
  require_passes(samples, 2, "total_std");
  const auto var = class_variances(samples, mean_probability(samples));
  double total = 0.0;
  for (double v : var) total += v;
  return std::sqrt(total);
}

double classwise_std_max(const PredictiveSamples& samples) {
  require_passes(samples, 2, "classwise_std_max");
  const auto var = class_variances(samples, mean_probability(samples));
  return std::sqrt(*std::max_element(var.begin(), var.end()));
}

double classwise_range_max(const PredictiveSamples& samples) {
  require_passes(samples, 1, "classwise_range_max");
  const std::size_t m = samples.passes();
  const std::size_t n = samples.classes();
  double best = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double lo = samples.probs[i];
    double hi = lo;
    for (std::size_t r = 1; r < m; ++r) {
      lo = std::min(lo, samples.probs[r * n + i]);
      hi = std::max(hi, samples.probs[r * n + i]);
    }
    best = std::max(best, hi - lo);
  }
  return best;
}

UncertaintySummary summarize(const PredictiveSamples& samples) {
  require_passes(samples, 2, "summarize");
  UncertaintySummary s;
  s.mean_prob = mean_probability(samples);
  s.entropy = predictive_entropy(s.mean_prob);
  const auto var = class_variances(samples, s.mean_prob);
  double total = 0.0;
  double peak = 0.0;
  for (double v : var) {
    total += v;
    peak = std::max(peak, v);
  }
  s.total_std = std::sqrt(total);
  s.classwise_std_max = std::sqrt(peak);
  s.classwise_range_max = classwise_range_max(samples);
  s.predicted_class = static_cast<std::size_t>(
      std::max_element(s.mean_prob.begin(), s.mean_prob.end()) - s.mean_prob.begin());
  return s;
}

void write_uncertainty_csv(const std::filesystem::path& path,
                           const std::vector<UncertaintyRecord>& records, std::size_t classes) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os << "example_id,true_label,predicted_class";
  for (std::size_t i = 0; i < classes; ++i) os << ",p" << i;
  os << ",entropy,total_std,classwise_std_max,classwise_range_max\n";
  os << std::setprecision(17);
  for (const auto& r : records) {
    if (r.summary.mean_prob.size() != classes) throw ContractError("uncertainty dump: class count");
    os << r.example_id << ',' << r.true_label << ',' << r.summary.predicted_class;
    for (double p : r.summary.mean_prob) os << ',' << p;
    os << ',' << r.summary.entropy << ',' << r.summary.total_std << ','
       << r.summary.classwise_std_max << ',' << r.summary.classwise_range_max << '\n';
  }
}

std::vector<UncertaintyRecord> read_uncertainty_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path.string());
  std::string line;
  std::getline(is, line);
  const std::size_t columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 8 || line.rfind("example_id,true_label,predicted_class", 0) != 0) {
    throw Error(path.string() + ": not an uncertainty dump");
  }
  const std::size_t classes = columns - 7;
  std::vector<UncertaintyRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != columns) throw Error(path.string() + ": ragged row");
    UncertaintyRecord r;
    r.example_id = static_cast<std::size_t>(v[0]);
    r.true_label = static_cast<std::int64_t>(v[1]);
    r.summary.predicted_class = static_cast<std::size_t>(v[2]);
    r.summary.mean_prob.assign(v.begin() + 3, v.begin() + 3 + static_cast<std::ptrdiff_t>(classes));
    r.summary.entropy = v[3 + classes];
    r.summary.total_std = v[4 + classes];
    r.summary.classwise_std_max = v[5 + classes];
    r.summary.classwise_range_max = v[6 + classes];
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace pbcnn::uq
