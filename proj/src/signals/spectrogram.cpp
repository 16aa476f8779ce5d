#include "signals/spectrogram.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "common/errors.hpp"

namespace pbcnn::signals {

void SpectrogramConfig::validate() const {
  if (fft_length < 2 || segment_length < fft_length || hop == 0) {
    throw ContractError("spectrogram config needs 2 <= fft_length <= segment_length and hop > 0");
  }
}

std::vector<Array> segment_signal(const SignalRecord& record, std::size_t segment_length) {
  if (segment_length < 2) throw ContractError("segment length must be >= 2");
  std::vector<Array> out;
  const std::size_t count = record.samples.size() / segment_length;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    auto first = record.samples.begin() + static_cast<std::ptrdiff_t>(s * segment_length);
    out.emplace_back(diffcore::Extents{segment_length},
                     std::vector<double>(first, first + static_cast<std::ptrdiff_t>(segment_length)));
  }
  return out;
}

Array stft_magnitude(const Array& segment, const SpectrogramConfig& config) {
  config.validate();
  if (segment.rank() != 1 || segment.size() != config.segment_length) {
    throw ShapeError("stft: segment must have " + std::to_string(config.segment_length) +
                     " samples, got " + diffcore::describe(segment.extents()));
  }
  const std::size_t n = config.fft_length;
  const std::size_t bins = config.frequency_bins();
  const std::size_t frames = config.time_frames();
  // Periodic Hann window and DFT twiddles.
  std::vector<double> window(n), cos_t(bins * n), sin_t(bins * n);
  for (std::size_t i = 0; i < n; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(n));
  }
  for (std::size_t k = 0; k < bins; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>((k * i) % n) /
                       static_cast<double>(n);
      cos_t[k * n + i] = std::cos(a);
      sin_t[k * n + i] = std::sin(a);
    }
  }
  Array mag({bins, frames});
  std::vector<double> frame(n);
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t start = f * config.hop;
    for (std::size_t i = 0; i < n; ++i) frame[i] = segment[start + i] * window[i];
    for (std::size_t k = 0; k < bins; ++k) {
      double re = 0.0, im = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        re += frame[i] * cos_t[k * n + i];
        im -= frame[i] * sin_t[k * n + i];
      }
      mag[k * frames + f] = std::hypot(re, im);
    }
  }
  return mag;
}

Array stft_image(const Array& segment, const SpectrogramConfig& config) {
  Array compressed = stft_magnitude(segment, config);
  for (double& v : compressed.values()) v = std::log1p(v);
  return scale_to_unit_range(compressed)
      .reshaped({config.frequency_bins(), config.time_frames(), 1});
}

Array scale_to_unit_range(const Array& values) {
  if (values.empty()) throw ContractError("scale_to_unit_range: empty input");
  diffcore::require_finite(values, "scale_to_unit_range");
  const auto [lo_it, hi_it] = std::minmax_element(values.values().begin(), values.values().end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  Array out(values.extents());
  if (hi == lo) return out;
  const double span = hi - lo;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    // Endpoints are pinned so min/max land on exactly -1/+1.
    out[i] = v == lo ? -1.0 : v == hi ? 1.0 : std::clamp(2.0 * (v - lo) / span - 1.0, -1.0, 1.0);
  }
  return out;
}

double peak_to_peak(std::span<const Array> segments) {
  if (segments.empty()) throw ContractError("peak_to_peak: no segments");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const Array& s : segments) {
    for (double v : s.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (lo > hi) throw ContractError("peak_to_peak: segments are empty");
  return hi - lo;
}

}  // namespace pbcnn::signals
