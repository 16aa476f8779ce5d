#pragma once

#include <span>
#include <vector>

#include "signals/synth.hpp"

namespace pbcnn::signals {

/// Hann-windowed STFT settings. The defaults turn a 1024-sample segment into
/// 33 frequency bins x 33 frames.
struct SpectrogramConfig {
  std::size_t segment_length = 1024;
  std::size_t fft_length = 64;
  std::size_t hop = 30;

  std::size_t frequency_bins() const { return fft_length / 2 + 1; }
  std::size_t time_frames() const { return (segment_length - fft_length) / hop + 1; }
  void validate() const;
};

/// Non-overlapping consecutive segments; the trailing remainder is dropped.
std::vector<Array> segment_signal(const SignalRecord& record, std::size_t segment_length);

/// One-sided STFT magnitude, [frequency bins, frames]; row k is bin k.
Array stft_magnitude(const Array& segment, const SpectrogramConfig& config = {});

/// log1p-compressed magnitude scaled per image to [-1,1]: [bins, frames, 1].
Array stft_image(const Array& segment, const SpectrogramConfig& config = {});

/// Affine map min -> -1, max -> +1; a constant input maps to zeros.
Array scale_to_unit_range(const Array& values);

/// Global max minus global min over every sample of every segment.
double peak_to_peak(std::span<const Array> segments);

}  // namespace pbcnn::signals
