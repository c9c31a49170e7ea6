#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "spyflow/flow_field.hpp"
#include "spyflow/grad_check.hpp"
#include "spyflow/spynet.hpp"
#include "spyflow/tensor.hpp"

namespace spyflow::testing {

template <typename T>
BasicTensor<T> random_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    BasicTensor<T> t(std::move(shape));
    for (T& v : t.data()) v = static_cast<T>(dist(rng));
    return t;
}

template <typename T>
BasicFlowField<T> random_flow(int h, int w, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    return BasicFlowField<T>(random_tensor<T>({2, h, w}, rng, lo, hi));
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// A differentiable scalar map together with the point to check it at.
struct GradCase {
    DifferentiableMap map;
    std::vector<double> point;
    GradCheckOptions options;
};

// Each case reduces the kernel output to a scalar with a fixed random
// weighting, so the checked gradient is the backward pass fed with that
// weighting as the upstream gradient.
GradCase conv_case(int in_ch, int out_ch, int h, int w, std::uint64_t seed);
GradCase relu_case(int c, int h, int w, std::uint64_t seed);
GradCase epe_case(int h, int w, std::uint64_t seed);
GradCase warp_flow_case(int c, int h, int w, std::uint64_t seed);
GradCase warp_image_case(int c, int h, int w, std::uint64_t seed);
/// EPE(G(X), target) over all 240,050 parameters of one level network.
GradCase level_case(int h, int w, std::uint64_t seed, std::size_t probes_per_block);

/// Gradient of the level composite with one layer's weight gradient doubled.
GradCase corrupted_level_case(int h, int w, std::uint64_t seed, std::size_t probes_per_block);

/// Per-bin EPE computed pixel by pixel: boundary pixels from the flow
/// differences to each 4-neighbour, distances by scanning every boundary
/// pixel. Keys are the report's bin labels.
struct OracleBin {
    std::size_t count = 0;
    double sum = 0.0;
};
std::map<std::string, OracleBin> brute_force_bins(const FlowField& pred, const FlowField& gt, double threshold);

/// Piecewise-constant flow: a random grid of blocks, each with its own
/// vector, so boundaries and flat regions both occur.
FlowField blocky_flow(int h, int w, int blocks, double max_speed, std::mt19937_64& rng);

}  // namespace spyflow::testing
