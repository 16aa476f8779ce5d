#pragma once

#include <filesystem>

#include "bayes/network.hpp"

namespace pbcnn::bayes {

// Checkpoint layout (all integers and floats little-endian):
//   "PBCNNMDL"                       8-byte magic
//   u32 version (= 1), u32 trained flag
//   f64 prior mean, f64 prior std
//   u32 input height, width, channels
//   u32 layer count, then per layer: u32 kind, u32 units, u32 kernel
//   per parametric layer, in order: kernel mu, kernel rho, bias mu, bias rho,
//     each as u64 element count followed by f64 values
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const PbcnnModel& model, const std::filesystem::path& path);
PbcnnModel load_checkpoint(const std::filesystem::path& path);

}  // namespace pbcnn::bayes
