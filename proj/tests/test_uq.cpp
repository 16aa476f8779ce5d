#include <doctest.h>

#include <cmath>
#include <fstream>
#include <filesystem>

#include "bayes/network.hpp"
#include "common/errors.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "uq/uncertainty.hpp"

using namespace pbcnn;
using namespace pbcnn::uq;
using diffcore::Array;

namespace {

PredictiveSamples rows(std::vector<std::vector<double>> r) {
  Array a({r.size(), r[0].size()});
  for (std::size_t m = 0; m < r.size(); ++m)
    for (std::size_t i = 0; i < r[m].size(); ++i) a.at({m, i}) = r[m][i];
  return {a};
}

/// Random probability matrix; some rows are pushed to near one-hot.
std::vector<std::vector<double>> random_probs(std::size_t m, std::size_t n, Rng& rng) {
  std::vector<std::vector<double>> p(m, std::vector<double>(n));
  const double sharp = rng.uniform(0.2, 6.0);
  for (auto& row : p) {
    double s = 0.0;
    for (double& v : row) {
      v = std::exp(sharp * rng.normal());
      s += v;
    }
    for (double& v : row) v /= s;
  }
  return p;
}

bayes::PbcnnModel trained_small_model(double sigma) {
  auto model = bayes::build_pbcnn(gradcheck::small_network(), bayes::PriorSpec{}, 4, bayes::InitConfig{0.3, sigma});
  model.set_trained(true);
  return model;
}

}  // namespace

TEST_SUITE("uncertainty measures") {
  TEST_CASE("mean probability") {
    CHECK(mean_probability(rows({{1, 0}, {0, 1}})) == std::vector<double>{0.5, 0.5});
    CHECK(mean_probability(rows({{0.3, 0.7}, {0.3, 0.7}, {0.3, 0.7}}))[1] == doctest::Approx(0.7));
    const auto a = mean_probability(rows({{0.1, 0.9}, {0.6, 0.4}, {0.2, 0.8}}));
    const auto b = mean_probability(rows({{0.2, 0.8}, {0.1, 0.9}, {0.6, 0.4}}));
    CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-15));
  }

  TEST_CASE("entropy reference values in bits") {
    const std::vector<double> uniform{0.25, 0.25, 0.25, 0.25};
    CHECK(predictive_entropy(uniform) == 2.0);
    CHECK(predictive_entropy(std::vector<double>{1, 0, 0, 0}) == 0.0);
    CHECK(predictive_entropy(std::vector<double>{0.5, 0.5, 0, 0}) == 1.0);
  }

  TEST_CASE("two disagreeing samples") {
    const auto s = rows({{1, 0}, {0, 1}});
    CHECK(total_std(s) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(classwise_std_max(s) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
    CHECK(classwise_range_max(rows({{0.9, 0.1}, {0.2, 0.8}})) == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(classwise_range_max(s) == 1.0);
  }

  TEST_CASE("identical one-hot rows give zero everywhere") {
    const auto u = summarize(rows({{0, 1, 0}, {0, 1, 0}, {0, 1, 0}}));
    CHECK(u.entropy == 0.0);
    CHECK(u.total_std == 0.0);
    CHECK(u.classwise_std_max == 0.0);
    CHECK(u.classwise_range_max == 0.0);
    CHECK(u.predicted_class == 1);
  }

  TEST_CASE("brute-force oracle on random matrices") {
    Rng rng(99);
    for (int trial = 0; trial < 300; ++trial) {
      const std::size_t m = 2 + rng.next_u64() % 30, n = 2 + rng.next_u64() % 8;
      const auto p = random_probs(m, n, rng);
      const auto u = summarize(rows(p));
      CHECK(std::abs(u.entropy - oracle::entropy_bits(p)) < 1e-12);
      CHECK(std::abs(u.total_std - oracle::total_std(p)) < 1e-12);
      CHECK(std::abs(u.classwise_std_max - oracle::classwise_std_max(p)) < 1e-12);
      CHECK(std::abs(u.classwise_range_max - oracle::classwise_range_max(p)) < 1e-12);
      CHECK(u.classwise_std_max <= u.total_std);
      CHECK(u.entropy <= std::log2(static_cast<double>(n)) + 1e-12);
      CHECK(u.classwise_range_max <= 1.0);
    }
  }

  TEST_CASE("entropy is permutation invariant") {
    const std::vector<double> p{0.1, 0.2, 0.3, 0.4}, q{0.4, 0.1, 0.3, 0.2};
    CHECK(predictive_entropy(p) == doctest::Approx(predictive_entropy(q)).epsilon(1e-15));
  }

  TEST_CASE("sample validation") {
    CHECK_THROWS_AS(total_std(rows({{0.5, 0.5}})), ContractError);
    CHECK_THROWS_AS(classwise_std_max(rows({{0.5, 0.5}})), ContractError);
    CHECK(classwise_range_max(rows({{0.5, 0.5}})) == 0.0);
    CHECK_THROWS_AS(rows({{0.5, 0.6}, {0.5, 0.5}}).validate(2), ContractError);
    CHECK_THROWS_AS(rows({{1.5, -0.5}, {0.5, 0.5}}).validate(2), ContractError);
  }

  TEST_CASE("measure ids") {
    for (auto m : kAllMeasures) CHECK(parse_measure(measure_id(m)) == m);
    CHECK(measure_id(Measure::classwise_std) == "classwise_std_max");
    CHECK_THROWS_AS(parse_measure("variance"), ContractError);
  }
}

TEST_SUITE("predict_mc") {
  TEST_CASE("shape, normalization and determinism") {
    const auto model = trained_small_model(0.3);
    Rng rng(1);
    Array img({6, 6, 1});
    for (double& v : img.values()) v = rng.uniform(-1, 1);
    const auto a = predict_mc(model, img, 12, 42);
    REQUIRE(a.probs.extents() == diffcore::Extents{12, 3});
    for (std::size_t m = 0; m < 12; ++m) {
      double s = 0.0;
      for (std::size_t i = 0; i < 3; ++i) s += a.probs.at({m, i});
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
    CHECK(predict_mc(model, img, 12, 42).probs == a.probs);
    CHECK_FALSE(predict_mc(model, img, 12, 43).probs == a.probs);
  }

  TEST_CASE("zero sigma makes every pass identical") {
    auto model = trained_small_model(0.3);
    for (auto& l : model.mutable_layers()) {
      if (!l.spec.parametric()) continue;
      l.kernel.rho.fill(-1e4);
      l.bias.rho.fill(-1e4);
    }
    Array img({6, 6, 1}, 0.3);
    const auto s = predict_mc(model, img, 5, 7);
    for (std::size_t m = 1; m < 5; ++m)
      for (std::size_t i = 0; i < 3; ++i) CHECK(s.probs.at({m, i}) == s.probs.at({0, i}));
    CHECK(summarize(s).total_std == 0.0);
  }

  TEST_CASE("batch rows equal single-image calls") {
    const auto model = trained_small_model(0.2);
    Rng rng(5);
    Array batch({4, 6, 6, 1});
    for (double& v : batch.values()) v = rng.uniform(-1, 1);
    const auto all = predict_mc_batch(model, batch, 6, 11);
    REQUIRE(all.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      Array one({6, 6, 1}, std::vector<double>(batch.data() + i * 36, batch.data() + (i + 1) * 36));
      const auto single = predict_mc(model, one, 6, 11);
      for (std::size_t k = 0; k < single.probs.size(); ++k) {
        CHECK(single.probs[k] == doctest::Approx(all[i].probs[k]).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("preconditions") {
    auto model = bayes::build_pbcnn(gradcheck::small_network(), bayes::PriorSpec{}, 4);
    Array img({6, 6, 1});
    CHECK_THROWS_AS(predict_mc(model, img, 4, 1), ContractError);
    model.set_trained(true);
    CHECK_THROWS_AS(predict_mc(model, img, 1, 1), ContractError);
    CHECK_THROWS_AS(predict_mc(model, Array({5, 5, 1}), 4, 1), ShapeError);
  }
}

TEST_SUITE("uncertainty dump") {
  TEST_CASE("csv round trip") {
    Rng rng(3);
    std::vector<UncertaintyRecord> recs;
    for (std::size_t i = 0; i < 5; ++i) {
      recs.push_back({i, i == 4 ? -1 : static_cast<std::int64_t>(i % 3), summarize(rows(random_probs(4, 3, rng)))});
    }
    const auto path = std::filesystem::temp_directory_path() / "pbcnn_uq_dump.csv";
    write_uncertainty_csv(path, recs, 3);
    const auto back = read_uncertainty_csv(path);
    REQUIRE(back.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(back[i].example_id == recs[i].example_id);
      CHECK(back[i].true_label == recs[i].true_label);
      CHECK(back[i].summary.predicted_class == recs[i].summary.predicted_class);
      CHECK(back[i].summary.mean_prob == recs[i].summary.mean_prob);
      CHECK(back[i].summary.entropy == recs[i].summary.entropy);
      CHECK(back[i].summary.total_std == recs[i].summary.total_std);
      CHECK(back[i].summary.classwise_std_max == recs[i].summary.classwise_std_max);
      CHECK(back[i].summary.classwise_range_max == recs[i].summary.classwise_range_max);
    }
    std::ifstream is(path);
    std::string header;
    std::getline(is, header);
    CHECK(header ==
          "example_id,true_label,predicted_class,p0,p1,p2,entropy,total_std,classwise_std_max,classwise_range_max");
    std::filesystem::remove(path);
  }
}
