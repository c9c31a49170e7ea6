#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "spyflow/flow_field.hpp"
#include "spyflow/tensor.hpp"

namespace spyflow {

/// Middlebury .flo tag, stored as a little-endian float ("PIEH").
inline constexpr float kFloTag = 202021.25f;

std::vector<std::uint8_t> encode_flo(const FlowField& flow);
FlowField decode_flo(const std::vector<std::uint8_t>& bytes);

void write_flo(const FlowField& flow, const std::filesystem::path& path);
FlowField read_flo(const std::filesystem::path& path);

/// 8-bit RGB images: .png or binary .ppm (P6). Values map to [0,1].
Tensor read_image(const std::filesystem::path& path);
/// Clamps to [0,1] and quantizes to 8 bits.
void write_image(const Tensor& image, const std::filesystem::path& path);

/// Direction as hue, magnitude / max_mag as saturation, value 1. When
/// max_mag is absent the field's own maximum is used (1 for a zero field).
Tensor flow_to_color(const FlowField& flow, std::optional<float> max_mag = std::nullopt);

}  // namespace spyflow
