#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "spyflow/spynet.hpp"

namespace spyflow {

// Little-endian layout:
//   "SPYN"  u32 version=1  u32 level_count
//   per level: u32 layer_count
//     per layer: u32 out, u32 in, u32 7, u32 7, f32 weights[out*in*49],
//                u32 bias_length, f32 bias[bias_length]
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const PyramidModel& model);
PyramidModel deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const PyramidModel& model, const std::filesystem::path& path);
PyramidModel load_checkpoint(const std::filesystem::path& path);

/// Exact byte size of the serialized form of `model`.
std::size_t checkpoint_size(const PyramidModel& model);

}  // namespace spyflow
