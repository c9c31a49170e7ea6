#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spyflow/flow_field.hpp"
#include "spyflow/spynet.hpp"

namespace spyflow {

/// Mean Euclidean norm of pred - gt (exact, no smoothing).
double average_epe(const FlowField& pred, const FlowField& gt);

struct BinStat {
    std::string label;
    std::size_t count = 0;
    std::optional<double> epe;  // absent for empty bins
};

struct EvalReport {
    double mean_epe = 0.0;
    std::size_t pixel_count = 0;
    std::vector<BinStat> bins;  // d0-10, d10-60, d60-140, s0-10, s10-40, s40+
    double boundary_threshold = 1.0;
    std::optional<double> runtime_ms;
    std::optional<std::size_t> param_count;

    const BinStat& bin(const std::string& label) const;

    /// Aligned human-readable table.
    std::string to_table() const;
    /// One key=value per line.
    std::string to_records() const;
};

struct SegmentOptions {
    /// Pixels whose combined flow-difference magnitude exceeds this many
    /// px/px are motion-boundary pixels.
    double boundary_threshold = 1.0;
};

/// Motion-boundary mask (row-major). A pixel is on a boundary when the
/// magnitude of its forward differences, or of its backward differences,
/// over both flow channels exceeds the threshold, so both sides of a
/// discontinuity are marked.
std::vector<std::uint8_t> motion_boundaries(const FlowField& gt, double threshold);

/// Exact squared Euclidean distance from every pixel to the nearest marked
/// pixel; a large sentinel when nothing is marked.
std::vector<std::int64_t> squared_distance_transform(const std::vector<std::uint8_t>& mask, int height, int width);

inline constexpr std::int64_t kNoBoundary = std::int64_t{1} << 60;

/// EPE segmented by ground-truth speed and by distance to motion boundaries.
EvalReport segmented_report(const FlowField& pred, const FlowField& gt, const SegmentOptions& options = {});

struct RuntimeStats {
    double min_ms = 0.0;
    double median_ms = 0.0;
    double mean_ms = 0.0;
    int repetitions = 0;
    std::size_t param_count = 0;
};

/// Wall-clock inference time with images already in memory.
RuntimeStats benchmark_inference(const PyramidModel& model, const Tensor& frame1, const Tensor& frame2,
                                 int repetitions);

}  // namespace spyflow
