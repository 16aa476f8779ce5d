#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "signals/synth.hpp"

namespace pbcnn::signals {

// Raw signal: <stem>.f32 holds little-endian float32 samples; <stem>.json is
// the sidecar {"sample_rate", "class_label", "condition"}.
void write_signal_record(const std::filesystem::path& stem, const SignalRecord& record);
SignalRecord read_signal_record(const std::filesystem::path& stem);

/// One sample per line; blank lines and lines starting with '#' are skipped.
SignalRecord read_signal_csv(const std::filesystem::path& path, double sample_rate,
                             std::int64_t class_label, std::string condition = {});

// Spectrogram/segment dataset file:
//   "PBCNNSPG", u32 version (= 1), u64 count, u32 rank, rank x u32 extents
//   (per item), count x product(extents) float32 values, count x u32 labels.
inline constexpr std::uint32_t kDatasetVersion = 1;

struct LabeledArrays {
  Array data;  // [count, extents...]
  std::vector<std::uint32_t> labels;

  std::size_t size() const { return labels.size(); }
};

void write_dataset_file(const std::filesystem::path& path, const LabeledArrays& set);
LabeledArrays read_dataset_file(const std::filesystem::path& path);

}  // namespace pbcnn::signals
