#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "common/errors.hpp"
#include "common/random.hpp"
#include "gate/calibration.hpp"
#include "gate/metrics.hpp"
#include "support/oracles.hpp"

using namespace pbcnn;
using namespace pbcnn::gate;
using uq::Measure;

namespace {

uq::UncertaintySummary summary_with(double value, std::vector<double> p) {
  uq::UncertaintySummary s;
  s.mean_prob = std::move(p);
  s.predicted_class = static_cast<std::size_t>(std::max_element(s.mean_prob.begin(), s.mean_prob.end()) -
                                               s.mean_prob.begin());
  s.entropy = s.total_std = s.classwise_std_max = s.classwise_range_max = value;
  return s;
}

GateDecision trusted(std::size_t cls) { return {true, cls, 0.0, 1.0}; }
GateDecision flagged() { return {false, 0, 2.0, 1.0}; }

/// Scores on a coarse grid so that ties are common.
std::vector<double> tied_scores(std::size_t n, Rng& rng) {
  std::vector<double> s(n);
  for (double& v : s) v = std::floor(rng.uniform(0, 8)) / 8.0;
  return s;
}

}  // namespace

TEST_SUITE("risk_coverage_curve") {
  TEST_CASE("hand-worked example") {
    const std::vector<double> u{0.1, 0.2, 0.3, 0.4};
    const auto c = risk_coverage_curve(u, {true, true, false, true}, Measure::entropy);
    REQUIRE(c.points.size() == 4);
    CHECK(c.points[0].coverage == 0.25);
    CHECK(c.points[0].risk == 0.0);
    CHECK(c.points[1].risk == 0.0);
    CHECK(c.points[2].risk == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(c.points[3].risk == 0.25);
    CHECK(c.points[3].coverage == 1.0);
    CHECK(c.points[2].threshold == 0.3);
  }

  TEST_CASE("all correct means zero risk everywhere") {
    const auto c = risk_coverage_curve(std::vector<double>{0.5, 0.1, 0.3}, {true, true, true}, Measure::total_std);
    for (const auto& p : c.points) CHECK(p.risk == 0.0);
  }

  TEST_CASE("unsorted input and ties match brute force") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 1 + rng.next_u64() % 60;
      const auto u = tied_scores(n, rng);
      std::vector<bool> correct(n);
      for (std::size_t i = 0; i < n; ++i) correct[i] = rng.uniform(0, 1) < 0.8;
      const auto c = risk_coverage_curve(u, correct, Measure::entropy);
      double prev = 0.0;
      for (const auto& p : c.points) {
        double cov = 0.0;
        const double risk = oracle::risk_at(u, correct, p.threshold, &cov);
        CHECK(p.risk == risk);
        CHECK(p.coverage == cov);
        CHECK(p.coverage > prev);
        prev = p.coverage;
      }
      CHECK(c.points.back().coverage == 1.0);
      double wrong = 0.0;
      for (bool ok : correct) wrong += ok ? 0.0 : 1.0;
      CHECK(c.points.back().risk == wrong / static_cast<double>(n));
    }
  }

  TEST_CASE("bad input") {
    CHECK_THROWS_AS(risk_coverage_curve(std::vector<double>{}, {}, Measure::entropy), ContractError);
    CHECK_THROWS_AS(risk_coverage_curve(std::vector<double>{0.1}, {true, false}, Measure::entropy), ContractError);
  }
}

TEST_SUITE("select_threshold") {
  const std::vector<double> u{0.1, 0.2, 0.3, 0.4};

  TEST_CASE("maximum coverage at the target risk") {
    const auto c = risk_coverage_curve(u, {true, true, false, true}, Measure::entropy);
    const auto zero = select_threshold(c, 0.0);
    CHECK(zero.threshold == 0.2);
    CHECK(zero.coverage == 0.5);
    CHECK(zero.qualified);
    const auto full = select_threshold(c, 0.25);
    CHECK(full.threshold == 0.4);
    CHECK(full.coverage == 1.0);
    CHECK(select_threshold(c, 0.9).threshold == 0.4);
  }

  TEST_CASE("no qualifying point") {
    const auto c = risk_coverage_curve(u, {false, false, true, true}, Measure::entropy);
    const auto s = select_threshold(c, 0.1);
    CHECK_FALSE(s.qualified);
    CHECK(s.coverage == 0.0);
    CHECK(s.threshold == 0.1);
  }

  TEST_CASE("monotone in the target risk") {
    Rng rng(2);
    const std::vector<double> levels{0.005, 0.01, 0.015, 0.02, 0.025, 0.03, 0.035};
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> scores(400);
      std::vector<bool> correct(400);
      for (std::size_t i = 0; i < 400; ++i) {
        scores[i] = rng.uniform(0, 1);
        correct[i] = rng.uniform(0, 1) > 0.05 * scores[i];
      }
      const auto table = build_threshold_table({risk_coverage_curve(scores, correct, Measure::entropy)}, levels);
      for (std::size_t r = 1; r < levels.size(); ++r) CHECK(table.thresholds[0][r] >= table.thresholds[0][r - 1]);
    }
  }

  TEST_CASE("target outside [0,1]") {
    const auto c = risk_coverage_curve(u, {true, true, true, true}, Measure::entropy);
    CHECK_THROWS_AS(select_threshold(c, -0.1), ContractError);
    CHECK_THROWS_AS(select_threshold(c, 1.5), ContractError);
  }
}

TEST_SUITE("calibration files") {
  TEST_CASE("risk-coverage csv round trip") {
    const auto c = risk_coverage_curve(std::vector<double>{0.3, 0.1, 0.2}, {true, false, true}, Measure::classwise_range);
    const auto path = std::filesystem::temp_directory_path() / "pbcnn_rc.csv";
    write_risk_coverage_csv(path, c);
    const auto back = read_risk_coverage_csv(path, Measure::classwise_range);
    REQUIRE(back.points.size() == c.points.size());
    for (std::size_t i = 0; i < c.points.size(); ++i) {
      CHECK(back.points[i].coverage == c.points[i].coverage);
      CHECK(back.points[i].risk == c.points[i].risk);
      CHECK(back.points[i].threshold == c.points[i].threshold);
    }
    std::filesystem::remove(path);
  }

  TEST_CASE("threshold table csv round trip") {
    ThresholdTable t{{Measure::entropy, Measure::total_std}, {0.01, 0.02}, {{0.1, 0.2}, {1.0 / 3.0, 0.5}}};
    const auto path = std::filesystem::temp_directory_path() / "pbcnn_thr.csv";
    write_threshold_table_csv(path, t);
    std::ifstream is(path);
    std::string header;
    std::getline(is, header);
    CHECK(header == "measure,0.01,0.02");
    const auto back = read_threshold_table_csv(path);
    CHECK(back.measures == t.measures);
    CHECK(back.risk_levels == t.risk_levels);
    CHECK(back.thresholds == t.thresholds);
    CHECK(back.at(Measure::total_std, 0) == 1.0 / 3.0);
    CHECK_THROWS_AS(back.at(Measure::classwise_std, 0), ContractError);
    std::filesystem::remove(path);
  }
}

TEST_SUITE("gate_decision") {
  TEST_CASE("flagged above the threshold") {
    CHECK_FALSE(gate_decision(summary_with(0.5, {0.7, 0.1, 0.1, 0.1}), Measure::entropy, 0.25).trusted);
  }

  TEST_CASE("trusted with the argmax class") {
    const auto d = gate_decision(summary_with(0.1, {0.7, 0.1, 0.1, 0.1}), Measure::total_std, 0.25);
    CHECK(d.trusted);
    CHECK(d.predicted_class == 0);
  }

  TEST_CASE("boundary is inclusive") {
    CHECK(gate_decision(summary_with(0.25, {0.2, 0.8}), Measure::classwise_std, 0.25).trusted);
  }

  TEST_CASE("non-finite threshold") {
    CHECK_THROWS_AS(gate_decision(summary_with(0.1, {1.0}), Measure::entropy, NAN), ContractError);
  }
}

TEST_SUITE("ood_confusion") {
  TEST_CASE("perfect separation") {
    const auto c = ood_confusion({trusted(0), trusted(1), flagged()}, {true, true, false});
    CHECK(c.tpr == 1.0);
    CHECK(c.fpr == 0.0);
    CHECK(c.tp + c.fn == 2);
    CHECK(c.fp + c.tn == 1);
  }

  TEST_CASE("ninety of a hundred") {
    std::vector<GateDecision> d(90, trusted(0));
    d.resize(100, flagged());
    const auto c = ood_confusion(d, std::vector<bool>(100, true));
    CHECK(c.tpr == 0.9);
    CHECK(c.fpr == 0.0);
  }

  TEST_CASE("raising the threshold never lowers TP or FP") {
    Rng rng(6);
    std::vector<double> v(200);
    std::vector<bool> id(200);
    for (std::size_t i = 0; i < 200; ++i) {
      id[i] = i % 3 != 0;
      v[i] = rng.uniform(0, 1) + (id[i] ? 0.0 : 0.5);
    }
    std::size_t prev_tp = 0, prev_fp = 0;
    for (double t = 0.0; t <= 1.6; t += 0.05) {
      std::vector<GateDecision> d;
      for (double x : v) d.push_back(gate_decision(summary_with(x, {1.0}), Measure::entropy, t));
      const auto c = ood_confusion(d, id);
      CHECK(c.tp >= prev_tp);
      CHECK(c.fp >= prev_fp);
      prev_tp = c.tp;
      prev_fp = c.fp;
    }
  }
}

TEST_SUITE("roc_auroc") {
  TEST_CASE("perfect separation") {
    CHECK(roc_auroc(std::vector<double>{0, 0, 1, 1}, {true, true, false, false}).auroc == 1.0);
  }

  TEST_CASE("three of four pairs ordered") {
    CHECK(roc_auroc(std::vector<double>{0.1, 0.4, 0.3, 0.9}, {true, true, false, false}).auroc == 0.75);
  }

  TEST_CASE("identical populations give one half") {
    CHECK(roc_auroc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, {true, false, true, false}).auroc == 0.5);
    Rng rng(1);
    std::vector<double> s(4000);
    std::vector<bool> id(4000);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = rng.uniform(0, 1);
      id[i] = i % 2 == 0;
    }
    CHECK(std::abs(roc_auroc(s, id).auroc - 0.5) < 0.03);
  }

  TEST_CASE("equals the pairwise statistic with ties") {
    Rng rng(44);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 2 + rng.next_u64() % 80;
      auto s = tied_scores(n, rng);
      std::vector<bool> id(n);
      for (std::size_t i = 0; i < n; ++i) id[i] = rng.uniform(0, 1) < 0.5;
      id[0] = true;
      id[1] = false;
      const auto r = roc_auroc(s, id);
      CHECK(std::abs(r.auroc - oracle::mann_whitney(s, id)) < 1e-9);
      CHECK(r.curve.front().tpr == 0.0);
      CHECK(r.curve.back().tpr == 1.0);
      CHECK(r.curve.back().fpr == 1.0);
    }
  }

  TEST_CASE("invariant under increasing transforms") {
    Rng rng(5);
    std::vector<double> s(50), t(50);
    std::vector<bool> id(50);
    for (std::size_t i = 0; i < 50; ++i) {
      s[i] = rng.uniform(-2, 2);
      t[i] = std::exp(3.0 * s[i]) + 1.0;
      id[i] = rng.uniform(0, 1) < 0.4;
    }
    id[0] = true;
    id[1] = false;
    CHECK(roc_auroc(s, id).auroc == doctest::Approx(roc_auroc(t, id).auroc).epsilon(1e-15));
  }

  TEST_CASE("a population is missing") {
    CHECK_THROWS_AS(roc_auroc(std::vector<double>{0.1, 0.2}, {true, true}), ContractError);
    CHECK_THROWS_AS(roc_auroc(std::vector<double>{0.1, 0.2}, {false, false}), ContractError);
  }
}

TEST_SUITE("micro_prf") {
  TEST_CASE("perfect diagnosis") {
    const std::vector<std::int64_t> labels{0, 1, 2, 1};
    const auto r = micro_prf({trusted(0), trusted(1), trusted(2), trusted(1)}, labels,
                             {true, true, true, true}, 0, 3);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.f_measure == 1.0);
    CHECK(r.fault_classes == std::vector<std::size_t>{1, 2});
  }

  TEST_CASE("hand-worked counts") {
    // fault class 1: 8 hits, 2 healthy examples predicted as fault, 1 fault predicted healthy
    std::vector<GateDecision> d;
    std::vector<std::int64_t> labels;
    for (int i = 0; i < 8; ++i) d.push_back(trusted(1)), labels.push_back(1);
    for (int i = 0; i < 2; ++i) d.push_back(trusted(1)), labels.push_back(0);
    d.push_back(trusted(0)), labels.push_back(1);
    const auto r = micro_prf(d, labels, std::vector<bool>(d.size(), true), 0, 2);
    CHECK(r.tp[0] == 8);
    CHECK(r.fp_id[0] == 2);
    CHECK(r.fn[0] == 1);
    CHECK(r.precision == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(r.recall == doctest::Approx(8.0 / 9.0).epsilon(1e-15));
    CHECK(r.f_measure == doctest::Approx(2 * 0.8 * (8.0 / 9.0) / (0.8 + 8.0 / 9.0)).epsilon(1e-15));
    CHECK(r.f_measure == doctest::Approx(0.8421).epsilon(1e-4));
  }

  TEST_CASE("OOD leaks lower precision and leave recall alone") {
    std::vector<GateDecision> d{trusted(1), trusted(2), trusted(0)};
    std::vector<std::int64_t> labels{1, 2, 1};
    std::vector<bool> id{true, true, true};
    const auto clean = micro_prf(d, labels, id, 0, 3);
    d.push_back(trusted(2));
    labels.push_back(-1);
    id.push_back(false);
    const auto leaky = micro_prf(d, labels, id, 0, 3);
    CHECK(leaky.precision < clean.precision);
    CHECK(leaky.recall == clean.recall);
    CHECK(leaky.fp_ood[1] == 1);
  }

  TEST_CASE("flagged examples do not count") {
    const auto r = micro_prf({flagged(), trusted(1)}, std::vector<std::int64_t>{1, 1}, {true, true}, 0, 2);
    CHECK(r.recall == 1.0);
  }

  TEST_CASE("F lies between precision and recall") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<GateDecision> d;
      std::vector<std::int64_t> labels;
      std::vector<bool> id;
      for (int i = 0; i < 40; ++i) {
        const bool in = rng.uniform(0, 1) < 0.8;
        id.push_back(in);
        labels.push_back(in ? static_cast<std::int64_t>(rng.next_u64() % 4) : -1);
        d.push_back(rng.uniform(0, 1) < 0.8 ? trusted(rng.next_u64() % 4) : flagged());
      }
      const auto r = micro_prf(d, labels, id, 0, 4);
      if (r.precision > 0 && r.recall > 0) {
        CHECK(r.f_measure <= std::max(r.precision, r.recall) + 1e-15);
        CHECK(r.f_measure >= std::min(r.precision, r.recall) - 1e-15);
      }
    }
  }

  TEST_CASE("unknown classes") {
    CHECK_THROWS_AS(micro_prf({trusted(0)}, std::vector<std::int64_t>{0}, {true}, 3, 2), ContractError);
    CHECK_THROWS_AS(micro_prf({trusted(0)}, std::vector<std::int64_t>{5}, {true}, 0, 2), ContractError);
  }
}
