#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "spyflow/flow_field.hpp"
#include "spyflow/nn.hpp"
#include "spyflow/tensor.hpp"

namespace spyflow {

inline constexpr int kLevelLayers = 5;
inline constexpr std::array<int, kLevelLayers + 1> kLevelChannels{8, 32, 64, 32, 16, 2};
inline constexpr std::size_t kLevelParamCount = 240050;

/// Residual flow estimator G_k: five 7x7 convolutions 8->32->64->32->16->2,
/// ReLU after all but the last.
template <typename T>
struct BasicLevelNetwork {
    std::array<BasicConvLayer<T>, kLevelLayers> layers;

    static BasicLevelNetwork zeros();
    /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], zero bias.
    static BasicLevelNetwork fresh(std::uint64_t seed);

    std::size_t param_count() const;
    /// Throws unless the layer shapes follow the fixed architecture.
    void validate() const;

    template <typename U>
    BasicLevelNetwork<U> cast() const {
        BasicLevelNetwork<U> out;
        for (int l = 0; l < kLevelLayers; ++l) out.layers[l] = layers[l].template cast<U>();
        return out;
    }

    /// Parameters flattened layer by layer (weights then bias).
    std::vector<T> flatten() const;
    void unflatten(const std::vector<T>& values);

    friend bool operator==(const BasicLevelNetwork&, const BasicLevelNetwork&) = default;
};

using LevelNetwork = BasicLevelNetwork<float>;
using LevelNetworkD = BasicLevelNetwork<double>;

/// Activations kept from a forward pass for the backward pass.
template <typename T>
struct LevelTrace {
    std::array<BasicTensor<T>, kLevelLayers> layer_inputs;
    std::array<BasicTensor<T>, kLevelLayers - 1> pre_activations;
};

template <typename T>
struct LevelGradients {
    BasicLevelNetwork<T> params;
    BasicTensor<T> input;  // empty unless requested
};

/// Stacks (I1 RGB, warped I2 RGB, flow u, flow v) into an 8-channel tensor.
template <typename T>
BasicTensor<T> stack_level_input(const BasicTensor<T>& frame1, const BasicTensor<T>& frame2_warped,
                                 const BasicFlowField<T>& flow_up);

template <typename T>
BasicFlowField<T> run_level(const BasicLevelNetwork<T>& net, const BasicTensor<T>& input,
                            LevelTrace<T>* trace = nullptr);

template <typename T>
LevelGradients<T> run_level_backward(const BasicLevelNetwork<T>& net, const LevelTrace<T>& trace,
                                     const BasicFlowField<T>& grad_output, bool want_input_grad = false);

/// Residual flow v_k = G_k(I1, w(I2, u(V_{k-1})), u(V_{k-1})).
template <typename T>
BasicFlowField<T> level_forward(const BasicLevelNetwork<T>& net, const BasicTensor<T>& frame1,
                                const BasicTensor<T>& frame2_warped, const BasicFlowField<T>& flow_up);

/// Networks G_0..G_K, coarse to fine. Levels beyond K reuse G_K.
struct PyramidModel {
    std::vector<LevelNetwork> networks;
    int inference_levels = 0;  // 0 = number of stored networks

    int levels() const;
    const LevelNetwork& network_for_level(int level) const;
    void validate() const;
};

struct InferenceTrace {
    std::vector<FlowField> flows;      // V_k per level, coarse to fine
    std::vector<FlowField> residuals;  // v_k per level
};

/// Coarse-to-fine inference on normalized images. H and W must be divisible
/// by 2^(levels-1).
FlowField infer(const PyramidModel& model, const Tensor& frame1, const Tensor& frame2,
                InferenceTrace* trace = nullptr);

/// Runs the given networks over pre-built pyramids (coarsest first) and
/// returns V at the last level. Used by training to evaluate frozen levels.
FlowField infer_pyramid(const std::vector<const LevelNetwork*>& networks, const std::vector<Tensor>& pyramid1,
                        const std::vector<Tensor>& pyramid2, InferenceTrace* trace = nullptr);

struct ParamCounts {
    std::vector<std::size_t> per_level;
    std::size_t total = 0;
};

ParamCounts count_params(const PyramidModel& model);

/// First-layer filters: one row per output channel with three 7x7 RGB tiles
/// (frame-1 filter, warped-frame-2 filter, their difference), each min-max
/// normalised to [0,1]; constant tiles become 0.5. Tiles are separated by
/// `gap` pixels of value 1.
Tensor first_layer_filters(const LevelNetwork& net, int gap = 1);

}  // namespace spyflow
