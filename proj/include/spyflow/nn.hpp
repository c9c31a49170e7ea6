#pragma once

#include <cstdint>
#include <utility>

#include "spyflow/flow_field.hpp"
#include "spyflow/tensor.hpp"

namespace spyflow {

inline constexpr int kKernelSize = 7;
inline constexpr int kKernelTaps = kKernelSize * kKernelSize;
inline constexpr int kPadding = kKernelSize / 2;

/// 7x7 same-size convolution. weights: [out, in, 7, 7]; bias: [out].
template <typename T>
struct BasicConvLayer {
    BasicTensor<T> weights;
    BasicTensor<T> bias;

    static BasicConvLayer zeros(int out_channels, int in_channels) {
        return {BasicTensor<T>({out_channels, in_channels, kKernelSize, kKernelSize}),
                BasicTensor<T>({out_channels})};
    }

    int out_channels() const { return weights.dim(0); }
    int in_channels() const { return weights.dim(1); }
    std::size_t param_count() const { return weights.size() + bias.size(); }

    /// Throws unless weights are [out,in,7,7] and bias is [out].
    void validate() const;

    template <typename U>
    BasicConvLayer<U> cast() const {
        return {weights.template cast<U>(), bias.template cast<U>()};
    }

    friend bool operator==(const BasicConvLayer&, const BasicConvLayer&) = default;
};

using ConvLayer = BasicConvLayer<float>;
using ConvLayerD = BasicConvLayer<double>;

template <typename T>
struct ConvGradients {
    BasicTensor<T> input;  // empty unless requested
    BasicTensor<T> weights;
    BasicTensor<T> bias;
};

/// output[o,y,x] = bias[o] + sum_{i,dy,dx} w[o,i,dy,dx] * in_pad[i,y+dy,x+dx],
/// zero padding of 3, stride 1.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicConvLayer<T>& layer);

template <typename T>
ConvGradients<T> conv2d_backward(const BasicTensor<T>& input, const BasicConvLayer<T>& layer,
                                 const BasicTensor<T>& grad_output, bool want_input_grad = true);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

/// Passes gradient where input > 0; zero elsewhere, including exactly 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output);

inline constexpr double kEpeEpsilon = 1e-8;

template <typename T>
struct EpeLoss {
    T loss;
    BasicFlowField<T> gradient;  // d loss / d pred
};

/// Mean over pixels of sqrt(du^2 + dv^2 + eps^2).
template <typename T>
EpeLoss<T> epe_loss(const BasicFlowField<T>& pred, const BasicFlowField<T>& target);

struct AdamState {
    std::uint64_t step_count = 0;
    Tensor first_moment;
    Tensor second_moment;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double learning_rate = 1e-4;

    /// Fresh state with zero moments shaped like `params`.
    static AdamState for_params(const Tensor& params, double learning_rate = 1e-4);
};

/// One bias-corrected Adam update, in place.
void adam_step(Tensor& params, const Tensor& grad, AdamState& state);

}  // namespace spyflow
