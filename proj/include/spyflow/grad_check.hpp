#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace spyflow {

/// A contiguous named range of the flat input vector (e.g. one layer's weights).
struct ParamBlock {
    std::string name;
    std::size_t offset = 0;
    std::size_t length = 0;
};

/// Scalar objective over a flat double-precision vector together with its
/// claimed analytic gradient.
struct DifferentiableMap {
    std::function<double(const std::vector<double>&)> value;
    std::function<std::vector<double>(const std::vector<double>&)> gradient;
    std::vector<ParamBlock> blocks;  // empty = one block covering everything
};

struct GradCheckOptions {
    double perturbation = 1e-3;
    /// Coordinates probed per block; 0 probes every coordinate.
    std::size_t max_probes_per_block = 0;
    /// Also compare the directional derivative along a random direction
    /// spanning the whole block.
    bool directional = true;
    std::uint64_t seed = 1;
    /// Coordinates the caller knows to sit on a kink; skipped when probing.
    std::function<bool(std::size_t)> skip;
    /// True when the segment between two evaluation points crosses a
    /// non-differentiable point of the map. Such probes are discarded; a
    /// directional probe is redrawn (up to 8 times).
    std::function<bool(const std::vector<double>&, const std::vector<double>&)> crosses_kink;
};

struct BlockResult {
    std::string name;
    std::size_t probes = 0;
    std::size_t discarded = 0;  // probes rejected by crosses_kink
    /// max |analytic - numeric| / max(|analytic|, |numeric|) over the probed
    /// coordinates, where the denominator is the block's largest magnitude.
    double max_relative_error = 0.0;
    double directional_relative_error = 0.0;
    bool passed = true;
    std::string failure;  // non-empty on non-finite output, with location
};

struct GradCheckReport {
    double tolerance = 0.0;
    std::vector<BlockResult> blocks;
    bool passed = true;

    double worst_error() const;
    std::string summary() const;
};

/// Compares `map.gradient` against central finite differences of `map.value`.
GradCheckReport grad_check(const DifferentiableMap& map, const std::vector<double>& input, double tolerance,
                           const GradCheckOptions& options = {});

}  // namespace spyflow
