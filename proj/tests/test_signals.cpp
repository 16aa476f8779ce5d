#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "common/errors.hpp"
#include "common/random.hpp"
#include "signals/faults.hpp"
#include "signals/io.hpp"
#include "signals/spectrogram.hpp"
#include "signals/synth.hpp"
#include "support/oracles.hpp"

using namespace pbcnn;
using namespace pbcnn::signals;
using diffcore::Extents;

namespace {

Array random_segment(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Array a({n});
  for (double& v : a.values()) v = scale * rng.normal();
  return a;
}

SignalRecord record_of(std::size_t n) {
  SignalRecord r;
  r.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.samples[i] = static_cast<double>(i);
  return r;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "pbcnn_signals_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("segment_signal") {
  TEST_CASE("remainder is dropped") {
    const auto segs = segment_signal(record_of(2'000'000), 1024);
    CHECK(segs.size() == 1953);
    CHECK(2'000'000 - segs.size() * 1024 == 128);
    CHECK(segment_signal(record_of(2048), 1024).size() == 2);
    CHECK(segment_signal(record_of(1000), 1024).empty());
  }

  TEST_CASE("concatenation reproduces a prefix") {
    const auto rec = record_of(5000);
    const auto segs = segment_signal(rec, 700);
    std::size_t k = 0;
    for (const auto& s : segs) {
      REQUIRE(s.extents() == Extents{700});
      for (double v : s.values()) CHECK(v == rec.samples[k++]);
    }
    CHECK(k == 4900);
  }

  TEST_CASE("too short a segment length") {
    CHECK_THROWS_AS(segment_signal(record_of(10), 1), ContractError);
  }
}

TEST_SUITE("scale_to_unit_range") {
  TEST_CASE("endpoints and midpoint") {
    const auto out = scale_to_unit_range(Array::vector({0, 5, 10}));
    CHECK(out.storage() == std::vector<double>{-1, 0, 1});
  }

  TEST_CASE("constant input maps to zeros") {
    const auto out = scale_to_unit_range(Array({4}, 3.5));
    for (double v : out.values()) CHECK(v == 0.0);
  }

  TEST_CASE("exact extremes for random input") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto out = scale_to_unit_range(random_segment(97, seed, 13.0));
      CHECK(*std::min_element(out.values().begin(), out.values().end()) == -1.0);
      CHECK(*std::max_element(out.values().begin(), out.values().end()) == 1.0);
    }
  }

  TEST_CASE("empty input") { CHECK_THROWS_AS(scale_to_unit_range(Array({0})), ContractError); }
}

TEST_SUITE("stft_image") {
  TEST_CASE("default geometry") {
    SpectrogramConfig c;
    CHECK(c.frequency_bins() == 33);
    CHECK(c.time_frames() == 33);
    CHECK(stft_image(random_segment(1024, 1)).extents() == Extents{33, 33, 1});
  }

  TEST_CASE("values stay in [-1,1]") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto img = stft_image(random_segment(1024, seed, std::pow(10.0, static_cast<double>(seed % 5) - 2)));
      for (double v : img.values()) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
      }
    }
  }

  TEST_CASE("all-zero segment gives an all-zero image") {
    const auto img = stft_image(Array({1024}));
    for (double v : img.values()) CHECK(v == 0.0);
  }

  TEST_CASE("magnitudes agree with a Goertzel filter") {
    const SpectrogramConfig c;
    const auto seg = random_segment(1024, 3);
    const auto mag = stft_magnitude(seg, c);
    REQUIRE(mag.extents() == Extents{33, 33});
    for (std::size_t f = 0; f < 33; f += 4) {
      std::vector<double> frame(seg.storage().begin() + static_cast<std::ptrdiff_t>(f * 30),
                                seg.storage().begin() + static_cast<std::ptrdiff_t>(f * 30 + 64));
      for (std::size_t k = 0; k < 33; ++k) {
        CHECK(mag.at({k, f}) == doctest::Approx(oracle::goertzel_hann(frame, k)).epsilon(1e-9));
      }
    }
  }

  TEST_CASE("a bin-centred tone peaks in its own row") {
    const std::size_t bin = 7;
    Array seg({1024});
    for (std::size_t i = 0; i < 1024; ++i) {
      seg[i] = std::sin(2.0 * std::numbers::pi * static_cast<double>(bin * i) / 64.0 + 0.3);
    }
    const auto mag = stft_magnitude(seg);
    for (std::size_t f = 0; f < 33; ++f) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < 33; ++k)
        if (mag.at({k, f}) > mag.at({best, f})) best = k;
      CHECK(best == bin);
    }
  }

  TEST_CASE("wrong segment length") {
    CHECK_THROWS_AS(stft_image(Array({1000})), ShapeError);
    CHECK_THROWS_AS(stft_image(Array({32, 32})), ShapeError);
  }
}

TEST_SUITE("peak_to_peak") {
  TEST_CASE("single segment") {
    const std::vector<Array> s{Array::vector({-1, 2})};
    CHECK(peak_to_peak(s) == 3.0);
  }

  TEST_CASE("global over segments and order independent") {
    std::vector<Array> s{Array::vector({0, 1}), Array::vector({-4, 0.5}), Array::vector({2, 2})};
    CHECK(peak_to_peak(s) == 6.0);
    std::reverse(s.begin(), s.end());
    CHECK(peak_to_peak(s) == 6.0);
  }

  TEST_CASE("empty collection") { CHECK_THROWS_AS(peak_to_peak(std::vector<Array>{}), ContractError); }
}

TEST_SUITE("inject_fault") {
  const double inf = std::numeric_limits<double>::infinity();

  TEST_CASE("bias without noise") {
    const auto x = random_segment(1024, 4, 0.01);
    Rng rng(1);
    const auto y = inject_fault(x, {FaultKind::bias, 0.5, inf, 0.0753}, 200000, rng);
    for (std::size_t k = 0; k < x.size(); ++k) {
      CHECK(y[k] - x[k] == doctest::Approx(0.03765).epsilon(1e-12));
      CHECK(std::abs((y[k] - 0.5 * 0.0753) - x[k]) < 1e-12);
    }
  }

  TEST_CASE("drift without noise") {
    const Array x({1024});
    Rng rng(1);
    const auto y = inject_fault(x, {FaultKind::drift, 8.0, inf, 0.0}, 200000, rng);
    CHECK(y[0] == 0.0);
    CHECK(y[1023] == doctest::Approx(0.04092).epsilon(1e-12));
    const auto x2 = random_segment(1024, 8);
    const auto y2 = inject_fault(x2, {FaultKind::drift, 8.0, inf, 0.0}, 200000, rng);
    for (std::size_t k = 0; k < x2.size(); ++k)
      CHECK(std::abs(y2[k] - 8.0 * static_cast<double>(k) / 200000 - x2[k]) < 1e-12);
  }

  TEST_CASE("scaling without noise") {
    const auto x = random_segment(1024, 5);
    Rng rng(1);
    const auto y = inject_fault(x, {FaultKind::scaling, 3.0, inf, 0.0}, 200000, rng);
    for (std::size_t k = 0; k < x.size(); ++k) {
      CHECK(y[k] == 3.0 * x[k]);
      CHECK(std::abs(y[k] / 3.0 - x[k]) < 1e-12);
    }
  }

  TEST_CASE("precision noise std") {
    const Array x({200000});
    Rng rng(11);
    const auto y = inject_fault(x, {FaultKind::precision, 1.0, 5.0, 0.0753}, 200000, rng);
    double ss = 0.0, mean = 0.0;
    for (double v : y.values()) mean += v;
    mean /= static_cast<double>(y.size());
    for (double v : y.values()) ss += (v - mean) * (v - mean);
    CHECK(std::abs(std::sqrt(ss / static_cast<double>(y.size() - 1)) / 0.0753 - 1.0) < 0.01);
  }

  TEST_CASE("parameter noise follows the SNR") {
    const Array ones({200000}, 1.0);
    for (double snr : {0.0, 5.0, 20.0}) {
      Rng rng(21);
      const auto y = inject_fault(ones, {FaultKind::scaling, 3.0, snr, 0.0}, 200000, rng);
      double mean = 0.0, ss = 0.0;
      for (double v : y.values()) mean += v;
      mean /= static_cast<double>(y.size());
      for (double v : y.values()) ss += (v - mean) * (v - mean);
      const double var = ss / static_cast<double>(y.size() - 1);
      CHECK(std::abs(var / (9.0 / std::pow(10.0, snr / 10.0)) - 1.0) < 0.02);
      CHECK(std::abs(mean - 3.0) < 0.01);
    }
  }

  TEST_CASE("same seed, same output") {
    const auto x = random_segment(1024, 6);
    for (auto kind : {FaultKind::bias, FaultKind::drift, FaultKind::scaling, FaultKind::precision}) {
      const FaultSpec spec{kind, 0.7, 5.0, 0.1};
      Rng a(99), b(99);
      CHECK(inject_fault(x, spec, 200000, a) == inject_fault(x, spec, 200000, b));
    }
  }

  TEST_CASE("invalid specs") {
    Rng rng(1);
    const Array x({8});
    CHECK_THROWS_AS(inject_fault(x, {FaultKind::bias, 0.5, 5.0, 0.0}, 200000, rng), ContractError);
    CHECK_THROWS_AS(inject_fault(x, {FaultKind::precision, 1.0, 5.0, -1.0}, 200000, rng), ContractError);
    CHECK_THROWS_AS(inject_fault(x, {FaultKind::scaling, 3.0, NAN, 0.0}, 200000, rng), ContractError);
    CHECK_THROWS_AS(parse_fault_kind("stuck"), ContractError);
    CHECK(parse_fault_kind(fault_kind_id(FaultKind::drift)) == FaultKind::drift);
  }
}

TEST_SUITE("synthetic data") {
  TEST_CASE("record counts and lengths") {
    const auto fleet = generate_synthetic_fleet(4, 12, 0.5, 3);
    CHECK(fleet.size() == 48);
    for (const auto& r : fleet) {
      CHECK(r.samples.size() == 100000);
      CHECK(r.sample_rate == 200000.0);
      CHECK(r.class_label >= 0);
      CHECK(r.class_label < 4);
    }
  }

  TEST_CASE("deterministic per seed") {
    const auto a = generate_synthetic_fleet(3, 2, 0.02, 8);
    const auto b = generate_synthetic_fleet(3, 2, 0.02, 8);
    const auto c = generate_synthetic_fleet(3, 2, 0.02, 9);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].samples == b[i].samples);
    CHECK(a[0].samples != c[0].samples);
  }

  TEST_CASE("fault repetition rates are well separated") {
    for (std::size_t i = 1; i < 8; ++i) {
      for (std::size_t j = i + 1; j < 8; ++j) {
        const double ri = fault_signature(i).impulse_rate_hz, rj = fault_signature(j).impulse_rate_hz;
        CHECK(std::abs(ri - rj) >= 0.2 * std::min(ri, rj));
      }
    }
    CHECK(fault_signature(0).impulse_rate_hz == 0.0);
  }

  TEST_CASE("bad requests") {
    CHECK_THROWS_AS(generate_synthetic_fleet(1, 2, 0.1, 0), ContractError);
    CHECK_THROWS_AS(generate_synthetic_fleet(3, 2, 0.0, 0), ContractError);
    CHECK_THROWS_AS(generate_synthetic_fleet(3, 2, -1.0, 0), ContractError);
  }

  TEST_CASE("uniform OOD images") {
    const auto u = generate_uniform_ood(1000, 5);
    CHECK(u.extents() == Extents{1000, 33, 33, 1});
    double mean = 0.0;
    for (double v : u.values()) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
      mean += v;
    }
    CHECK(std::abs(mean / static_cast<double>(u.size())) < 0.005);
    CHECK(u == generate_uniform_ood(1000, 5));
    CHECK_THROWS_AS(generate_uniform_ood(0, 5), ContractError);
  }
}

TEST_SUITE("signal files") {
  TEST_CASE("raw record round trip") {
    SignalRecord r;
    r.samples = {0.25, -1.5, 3.0, 0.125};
    r.sample_rate = 48000;
    r.class_label = 2;
    r.condition = "fault-increasing";
    const auto stem = scratch("rec");
    write_signal_record(stem, r);
    const auto back = read_signal_record(stem);
    CHECK(back.samples == r.samples);  // float32-exact values
    CHECK(back.sample_rate == 48000);
    CHECK(back.class_label == 2);
    CHECK(back.condition == "fault-increasing");
  }

  TEST_CASE("csv ingestion") {
    const auto path = scratch("sig.csv");
    {
      std::ofstream os(path);
      os << "# header\n0.5\n\n-1.25\n2\n";
    }
    const auto r = read_signal_csv(path, 1000, 1, "x");
    CHECK(r.samples == std::vector<double>{0.5, -1.25, 2});
    CHECK(r.class_label == 1);
    {
      std::ofstream os(path);
      os << "0.5\nabc\n";
    }
    CHECK_THROWS_AS(read_signal_csv(path, 1000, 1), Error);
  }

  TEST_CASE("dataset round trip") {
    LabeledArrays set{Array({3, 2, 2, 1}), {0, 4, 2}};
    for (std::size_t i = 0; i < set.data.size(); ++i) set.data[i] = static_cast<double>(i) * 0.5 - 1.0;
    const auto path = scratch("set.spg");
    write_dataset_file(path, set);
    const auto back = read_dataset_file(path);
    CHECK(back.data == set.data);
    CHECK(back.labels == set.labels);
    std::ifstream is(path, std::ios::binary);
    char magic[8];
    is.read(magic, 8);
    CHECK(std::string(magic, 8) == "PBCNNSPG");
  }

  TEST_CASE("mismatched labels and missing files") {
    CHECK_THROWS_AS(write_dataset_file(scratch("bad.spg"), {Array({2, 3}), {1}}), ContractError);
    CHECK_THROWS_AS(read_dataset_file(scratch("absent.spg")), Error);
    CHECK_THROWS_AS(read_signal_record(scratch("absent")), Error);
  }
}
