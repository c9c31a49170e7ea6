#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace spyflow {

inline void append_le_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void append_le_i32(std::vector<std::uint8_t>& out, std::int32_t v) {
    append_le_u32(out, static_cast<std::uint32_t>(v));
}

inline void append_le_f32(std::vector<std::uint8_t>& out, float v) {
    append_le_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline std::uint32_t read_le_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

inline std::int32_t read_le_i32(const std::uint8_t* p) { return static_cast<std::int32_t>(read_le_u32(p)); }

inline float read_le_f32(const std::uint8_t* p) { return std::bit_cast<float>(read_le_u32(p)); }

/// Whole-file helpers; throw FormatError naming the path on failure.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace spyflow
