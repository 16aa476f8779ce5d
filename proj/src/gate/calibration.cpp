#include "gate/calibration.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "common/errors.hpp"

namespace pbcnn::gate {

std::string format_number(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, r.ptr);
}

RiskCoverageCurve risk_coverage_curve(std::span<const double> uncertainties,
                                      const std::vector<bool>& correct, uq::Measure measure) {
  const std::size_t n = uncertainties.size();
  if (n == 0) throw ContractError("risk_coverage_curve: empty input");
  if (correct.size() != n) throw ContractError("risk_coverage_curve: length mismatch");
  for (double u : uncertainties) {
    if (std::isnan(u)) throw NumericError("risk_coverage_curve: NaN uncertainty");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return uncertainties[a] < uncertainties[b];
  });
  RiskCoverageCurve curve{measure, {}};
  std::size_t errors = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!correct[order[k]]) ++errors;
    const double u = uncertainties[order[k]];
    const bool group_end = k + 1 == n || uncertainties[order[k + 1]] != u;
    if (!group_end) continue;
    const double covered = static_cast<double>(k + 1);
    curve.points.push_back({covered / static_cast<double>(n),
                            static_cast<double>(errors) / covered, u});
  }
  return curve;
}

ThresholdSelection select_threshold(const RiskCoverageCurve& curve, double target_risk) {
  if (curve.points.empty()) throw ContractError("select_threshold: empty curve");
  if (!(target_risk >= 0.0 && target_risk <= 1.0)) {
    throw ContractError("select_threshold: target risk outside [0,1]");
  }
  ThresholdSelection best{curve.points.front().threshold, 0.0, 0.0, false};
  for (const auto& p : curve.points) {
    if (p.risk <= target_risk) best = {p.threshold, p.coverage, p.risk, true};
  }
  return best;
}

double ThresholdTable::at(uq::Measure m, std::size_t level) const {
  for (std::size_t i = 0; i < measures.size(); ++i) {
    if (measures[i] == m) return thresholds.at(i).at(level);
  }
  throw ContractError("threshold table has no row for " + uq::measure_id(m));
}

ThresholdTable build_threshold_table(const std::vector<RiskCoverageCurve>& curves,
                                     const std::vector<double>& risk_levels) {
  ThresholdTable t;
  t.risk_levels = risk_levels;
  for (const auto& c : curves) {
    t.measures.push_back(c.measure);
    std::vector<double> row;
    for (double r : risk_levels) row.push_back(select_threshold(c, r).threshold);
    t.thresholds.push_back(std::move(row));
  }
  return t;
}

void write_risk_coverage_csv(const std::filesystem::path& path, const RiskCoverageCurve& curve) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os << "coverage,risk,threshold\n";
  for (const auto& p : curve.points) {
    os << format_number(p.coverage) << ',' << format_number(p.risk) << ','
       << format_number(p.threshold) << '\n';
  }
}

RiskCoverageCurve read_risk_coverage_csv(const std::filesystem::path& path, uq::Measure measure) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != "coverage,risk,threshold") throw Error(path.string() + ": unexpected header");
  RiskCoverageCurve c{measure, {}};
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    RiskCoveragePoint p;
    std::istringstream ss(line);
    std::string a, b, d;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, d);
    p.coverage = std::stod(a);
    p.risk = std::stod(b);
    p.threshold = std::stod(d);
    c.points.push_back(p);
  }
  return c;
}

void write_threshold_table_csv(const std::filesystem::path& path, const ThresholdTable& table) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os << "measure";
  for (double r : table.risk_levels) os << ',' << format_number(r);
  os << '\n';
  for (std::size_t i = 0; i < table.measures.size(); ++i) {
    os << uq::measure_id(table.measures[i]);
    for (double t : table.thresholds[i]) os << ',' << format_number(t);
    os << '\n';
  }
}

ThresholdTable read_threshold_table_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  std::string line;
  std::getline(is, line);
  auto header = split(line);
  if (header.empty() || header[0] != "measure") throw Error(path.string() + ": unexpected header");
  ThresholdTable t;
  for (std::size_t i = 1; i < header.size(); ++i) t.risk_levels.push_back(std::stod(header[i]));
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != header.size()) throw Error(path.string() + ": ragged row");
    t.measures.push_back(uq::parse_measure(cells[0]));
    std::vector<double> row;
    for (std::size_t i = 1; i < cells.size(); ++i) row.push_back(std::stod(cells[i]));
    t.thresholds.push_back(std::move(row));
  }
  return t;
}

}  // namespace pbcnn::gate
