#include "signals/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "common/errors.hpp"
#include "common/random.hpp"

namespace pbcnn::signals {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kNoiseStd = 0.0004;      // white sensor floor
constexpr double kStructureStd = 0.004;   // per structural mode
constexpr double kShaftAmplitude = 0.004;
constexpr double kImpulseAmplitude = 0.025;
constexpr double kRingDecay_s = 2.0e-4;
constexpr double kNominalShaftHz = 20.0;

// Housing modes excited by the broadband forcing: centre frequency, bandwidth.
constexpr double kModes[][2] = {{8000.0, 4000.0}, {30000.0, 8000.0}, {66000.0, 12000.0}};

/// Four-pole band resonance (two cascaded two-pole sections) driven by white
/// noise, scaled to unit output variance.
struct Resonator {
  double a1 = 0.0, a2 = 0.0, gain = 1.0;
  double s[4] = {0.0, 0.0, 0.0, 0.0};

  Resonator(double centre_hz, double bandwidth_hz, double sample_rate) {
    const double r = std::exp(-std::numbers::pi * bandwidth_hz / sample_rate);
    a1 = 2.0 * r * std::cos(kTwoPi * centre_hz / sample_rate);
    a2 = -r * r;
    // output variance for unit white input is the energy of the impulse response
    double energy = 0.0;
    for (int k = 0; k < 20000; ++k) {
      const double h = step(k == 0 ? 1.0 : 0.0);
      energy += h * h;
    }
    gain = 1.0 / std::sqrt(energy);
    std::fill(std::begin(s), std::end(s), 0.0);
  }

  double step(double e) {
    const double u = a1 * s[0] + a2 * s[1] + e;
    s[1] = s[0];
    s[0] = u;
    const double y = a1 * s[2] + a2 * s[3] + u;
    s[3] = s[2];
    s[2] = y;
    return gain * y;
  }
};
}  // namespace

void SignalRecord::validate() const {
  if (samples.empty()) throw ContractError("signal record has no samples");
  if (!(sample_rate > 0.0)) throw ContractError("signal record sample rate must be positive");
}

FaultSignature fault_signature(std::size_t class_label) {
  if (class_label == 0) return {};
  const double k = static_cast<double>(class_label - 1);
  return {500.0 * std::pow(1.5, k), 12000.0 * static_cast<double>(class_label)};
}

std::vector<SignalRecord> generate_synthetic_fleet(std::size_t n_classes,
                                                   std::size_t signals_per_class,
                                                   double duration_s, std::uint64_t seed,
                                                   double sample_rate) {
  if (n_classes < 2) throw ContractError("synthetic fleet needs at least 2 classes");
  if (!(duration_s > 0.0)) throw ContractError("synthetic fleet duration must be positive");
  if (!(sample_rate > 0.0)) throw ContractError("synthetic fleet sample rate must be positive");
  const auto length = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  if (length == 0) throw ContractError("synthetic fleet duration shorter than one sample");
  const double dt = 1.0 / sample_rate;

  std::vector<SignalRecord> fleet;
  fleet.reserve(n_classes * signals_per_class);
  for (std::size_t c = 0; c < n_classes; ++c) {
    const FaultSignature sig = fault_signature(c);
    for (std::size_t j = 0; j < signals_per_class; ++j) {
      Rng rng(derive_seed(seed, c * 1000003ULL + j));
      SignalRecord rec;
      rec.sample_rate = sample_rate;
      rec.class_label = static_cast<std::int64_t>(c);
      // Linear speed sweep, either accelerating or decelerating.
      const double f_lo = rng.uniform(15.0, 25.0);
      const double f_hi = f_lo * rng.uniform(1.2, 1.6);
      const bool rising = rng.rademacher() > 0.0;
      const double f_start = rising ? f_lo : f_hi;
      const double f_end = rising ? f_hi : f_lo;
      rec.condition = std::string(c == 0 ? "healthy" : "fault") + (rising ? "-increasing" : "-decreasing");
      const double sweep = (f_end - f_start) / duration_s;
      const double phase0 = rng.uniform(0.0, kTwoPi);
      const double amp_scale = rng.uniform(0.9, 1.1);

      rec.samples.resize(length);
      double next_impulse = sig.impulse_rate_hz > 0.0 ? rng.uniform(0.0, 1.0 / sig.impulse_rate_hz) : 0.0;
      // Active ring-downs: (start time, amplitude, resonance)
      struct Ring { double start, amplitude, freq; };
      std::vector<Ring> rings;
      std::vector<Resonator> modes;
      std::vector<double> mode_gain;
      for (const auto& m : kModes) {
        modes.emplace_back(m[0] * rng.uniform(0.95, 1.05), m[1], sample_rate);
        mode_gain.push_back(kStructureStd * rng.uniform(0.8, 1.2));
      }
      // let the resonators settle before the record starts
      for (int k = 0; k < 2000; ++k)
        for (auto& m : modes) m.step(rng.normal());
      for (std::size_t k = 0; k < length; ++k) {
        const double t = static_cast<double>(k) * dt;
        const double shaft_hz = f_start + sweep * t;
        const double shaft_phase = phase0 + kTwoPi * (f_start * t + 0.5 * sweep * t * t);
        double x = kNoiseStd * rng.normal();
        for (std::size_t i = 0; i < modes.size(); ++i) x += mode_gain[i] * modes[i].step(rng.normal());
        x += amp_scale * kShaftAmplitude * std::sin(shaft_phase);
        x += 0.4 * amp_scale * kShaftAmplitude * std::sin(2.0 * shaft_phase + 0.3);
        if (sig.impulse_rate_hz > 0.0) {
          while (t >= next_impulse) {
            rings.push_back({next_impulse, amp_scale * kImpulseAmplitude * rng.uniform(0.8, 1.2),
                             sig.resonance_hz * rng.uniform(0.97, 1.03)});
            const double rate = sig.impulse_rate_hz * shaft_hz / kNominalShaftHz;
            // Slip: +-5% jitter on the inter-impulse period.
            next_impulse += rng.uniform(0.95, 1.05) / rate;
          }
          std::size_t keep = 0;
          for (const Ring& r : rings) {
            const double age = t - r.start;
            if (age > 10.0 * kRingDecay_s) continue;
            x += r.amplitude * std::exp(-age / kRingDecay_s) * std::sin(kTwoPi * r.freq * age);
            rings[keep++] = r;
          }
          rings.resize(keep);
        }
        rec.samples[k] = x;
      }
      fleet.push_back(std::move(rec));
    }
  }
  return fleet;
}

Array generate_uniform_ood(std::size_t count, std::uint64_t seed, std::size_t height,
                           std::size_t width) {
  if (count < 1) throw ContractError("uniform OOD count must be >= 1");
  Rng rng(seed);
  Array out({count, height, width, 1});
  for (double& v : out.values()) v = rng.uniform(-1.0, 1.0);
  return out;
}

}  // namespace pbcnn::signals
