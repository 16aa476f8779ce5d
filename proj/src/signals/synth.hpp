#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffcore/array.hpp"

namespace pbcnn::signals {

using diffcore::Array;

inline constexpr double kDefaultSampleRate = 200000.0;

struct SignalRecord {
  std::vector<double> samples;
  double sample_rate = kDefaultSampleRate;
  std::int64_t class_label = 0;
  std::string condition;

  void validate() const;
};

/// Per-class generator parameters of the synthetic fleet.
struct FaultSignature {
  double impulse_rate_hz = 0.0;  // nominal repetition rate; 0 for the healthy class
  double resonance_hz = 0.0;     // ringing frequency excited by each impulse
};

/// Class 0 is healthy; fault class c >= 1 repeats impulses 1.5x faster than
/// class c-1 and rings at its own resonance.
FaultSignature fault_signature(std::size_t class_label);

/// Desk-scale stand-in for a bearing vibration test rig. Healthy records are
/// broadband noise plus a shaft tone whose frequency sweeps linearly (time-
/// varying speed); fault records add exponentially ringing impulse trains
/// whose rate follows the shaft speed. Deterministic per seed.
std::vector<SignalRecord> generate_synthetic_fleet(std::size_t n_classes,
                                                   std::size_t signals_per_class,
                                                   double duration_s, std::uint64_t seed,
                                                   double sample_rate = kDefaultSampleRate);

/// Images [count,33,33,1] of i.i.d. uniform pixels in [-1,1].
Array generate_uniform_ood(std::size_t count, std::uint64_t seed, std::size_t height = 33,
                           std::size_t width = 33);

}  // namespace pbcnn::signals
