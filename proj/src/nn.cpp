#include "spyflow/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace spyflow {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// The convolution is evaluated as 49 shifted matrix products over a
// zero-padded copy of the input. Output rows are computed on the padded
// width (W + 6); the 6 trailing columns of each row are discarded. A
// channel-major view at offset (dy * Wp + dx) of the padded buffer is then a
// plain strided matrix [C_in, H * Wp], so no im2col buffer is needed.
struct PaddedGeometry {
    int height;
    int width;
    int padded_height;
    int padded_width;
    std::size_t plane;    // padded_height * padded_width
    std::size_t columns;  // height * padded_width

    PaddedGeometry(int h, int w)
        : height(h),
          width(w),
          padded_height(h + 2 * kPadding),
          padded_width(w + 2 * kPadding),
          plane(static_cast<std::size_t>(padded_height) * padded_width),
          columns(static_cast<std::size_t>(h) * padded_width) {}

    // The shifted view for the last tap reads 2 * kPadding elements past the
    // last plane.
    std::size_t buffer_size(int channels) const {
        return plane * static_cast<std::size_t>(channels) + 2 * kPadding;
    }

    std::ptrdiff_t tap_offset(int tap) const {
        return static_cast<std::ptrdiff_t>(tap / kKernelSize) * padded_width + tap % kKernelSize;
    }
};

template <typename T>
std::vector<T> pad_input(const BasicTensor<T>& input, const PaddedGeometry& g) {
    const int channels = input.channels();
    std::vector<T> buf(g.buffer_size(channels), T(0));
    for (int c = 0; c < channels; ++c) {
        for (int y = 0; y < g.height; ++y) {
            const T* src = &input.at(c, y, 0);
            T* dst = buf.data() + c * g.plane + static_cast<std::size_t>(y + kPadding) * g.padded_width + kPadding;
            std::copy(src, src + g.width, dst);
        }
    }
    return buf;
}

// Repacks [out,in,7,7] weights into 49 contiguous [out,in] tap matrices.
template <typename T>
std::vector<RowMatrix<T>> tap_matrices(const BasicConvLayer<T>& layer) {
    const int co = layer.out_channels();
    const int ci = layer.in_channels();
    std::vector<RowMatrix<T>> taps(kKernelTaps, RowMatrix<T>(co, ci));
    const T* w = layer.weights.data().data();
    for (int o = 0; o < co; ++o) {
        for (int i = 0; i < ci; ++i) {
            const T* k = w + (static_cast<std::size_t>(o) * ci + i) * kKernelTaps;
            for (int t = 0; t < kKernelTaps; ++t) taps[t](o, i) = k[t];
        }
    }
    return taps;
}

template <typename T>
void check_conv_input(const BasicTensor<T>& input, const BasicConvLayer<T>& layer) {
    layer.validate();
    require_chw(input, "conv2d input");
    if (input.channels() != layer.in_channels()) {
        throw ShapeError("conv2d: expected " + std::to_string(layer.in_channels()) +
                         " input channels, got " + std::to_string(input.channels()));
    }
}

}  // namespace

template <typename T>
void BasicConvLayer<T>::validate() const {
    if (weights.rank() != 4 || weights.dim(2) != kKernelSize || weights.dim(3) != kKernelSize) {
        throw ShapeError("conv layer weights must be [out,in,7,7], got " + shape_to_string(weights.shape()));
    }
    if (bias.rank() != 1 || bias.dim(0) != weights.dim(0)) {
        throw ShapeError("conv layer bias must be [" + std::to_string(weights.dim(0)) + "], got " +
                         shape_to_string(bias.shape()));
    }
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicConvLayer<T>& layer) {
    check_conv_input(input, layer);
    const PaddedGeometry g(input.height(), input.width());
    const int ci = layer.in_channels();
    const int co = layer.out_channels();

    const std::vector<T> padded = pad_input(input, g);
    const auto taps = tap_matrices(layer);

    using Strided = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;
    RowMatrix<T> ext = RowMatrix<T>::Zero(co, static_cast<Eigen::Index>(g.columns));
    for (int t = 0; t < kKernelTaps; ++t) {
        Strided shifted(padded.data() + g.tap_offset(t), ci, static_cast<Eigen::Index>(g.columns),
                        Eigen::OuterStride<>(static_cast<Eigen::Index>(g.plane)));
        ext.noalias() += taps[t] * shifted;
    }

    BasicTensor<T> out({co, g.height, g.width});
    for (int o = 0; o < co; ++o) {
        const T b = layer.bias[static_cast<std::size_t>(o)];
        for (int y = 0; y < g.height; ++y) {
            const T* row = ext.data() + static_cast<std::size_t>(o) * g.columns +
                           static_cast<std::size_t>(y) * g.padded_width;
            T* dst = &out.at(o, y, 0);
            for (int x = 0; x < g.width; ++x) dst[x] = row[x] + b;
        }
    }
    return out;
}

template <typename T>
ConvGradients<T> conv2d_backward(const BasicTensor<T>& input, const BasicConvLayer<T>& layer,
                                 const BasicTensor<T>& grad_output, bool want_input_grad) {
    check_conv_input(input, layer);
    const PaddedGeometry g(input.height(), input.width());
    const int ci = layer.in_channels();
    const int co = layer.out_channels();
    if (grad_output.shape() != std::vector<int>{co, g.height, g.width}) {
        throw ShapeError("conv2d_backward: gradient shape " + shape_to_string(grad_output.shape()) +
                         " does not match output shape " +
                         shape_to_string(std::vector<int>{co, g.height, g.width}));
    }

    // Output gradient laid out on the padded width, zero in the discarded columns.
    RowMatrix<T> grad_ext = RowMatrix<T>::Zero(co, static_cast<Eigen::Index>(g.columns));
    ConvGradients<T> grads;
    grads.bias = BasicTensor<T>({co});
    for (int o = 0; o < co; ++o) {
        T sum = T(0);
        for (int y = 0; y < g.height; ++y) {
            const T* src = &grad_output.at(o, y, 0);
            T* dst = grad_ext.data() + static_cast<std::size_t>(o) * g.columns +
                     static_cast<std::size_t>(y) * g.padded_width;
            for (int x = 0; x < g.width; ++x) {
                dst[x] = src[x];
                sum += src[x];
            }
        }
        grads.bias[static_cast<std::size_t>(o)] = sum;
    }

    const std::vector<T> padded = pad_input(input, g);
    using Strided = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;
    grads.weights = BasicTensor<T>({co, ci, kKernelSize, kKernelSize});
    T* gw = grads.weights.data().data();
    for (int t = 0; t < kKernelTaps; ++t) {
        Strided shifted(padded.data() + g.tap_offset(t), ci, static_cast<Eigen::Index>(g.columns),
                        Eigen::OuterStride<>(static_cast<Eigen::Index>(g.plane)));
        const RowMatrix<T> tap_grad = grad_ext * shifted.transpose();
        for (int o = 0; o < co; ++o) {
            for (int i = 0; i < ci; ++i) {
                gw[(static_cast<std::size_t>(o) * ci + i) * kKernelTaps + t] = tap_grad(o, i);
            }
        }
    }

    if (want_input_grad) {
        const auto taps = tap_matrices(layer);
        std::vector<T> grad_padded(g.buffer_size(ci), T(0));
        using StridedMut = Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>>;
        for (int t = 0; t < kKernelTaps; ++t) {
            StridedMut shifted(grad_padded.data() + g.tap_offset(t), ci, static_cast<Eigen::Index>(g.columns),
                               Eigen::OuterStride<>(static_cast<Eigen::Index>(g.plane)));
            shifted.noalias() += taps[t].transpose() * grad_ext;
        }
        grads.input = BasicTensor<T>({ci, g.height, g.width});
        for (int c = 0; c < ci; ++c) {
            for (int y = 0; y < g.height; ++y) {
                const T* src = grad_padded.data() + c * g.plane +
                               static_cast<std::size_t>(y + kPadding) * g.padded_width + kPadding;
                std::copy(src, src + g.width, &grads.input.at(c, y, 0));
            }
        }
    }
    return grads;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
    BasicTensor<T> out = input;
    for (T& v : out.data()) v = v > T(0) ? v : T(0);
    return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output) {
    if (input.shape() != grad_output.shape()) {
        throw ShapeError("relu_backward: shape mismatch " + shape_to_string(input.shape()) + " vs " +
                         shape_to_string(grad_output.shape()));
    }
    BasicTensor<T> out = grad_output;
    auto x = input.data();
    auto g = out.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(x[i] > T(0))) g[i] = T(0);
    }
    return out;
}

template <typename T>
EpeLoss<T> epe_loss(const BasicFlowField<T>& pred, const BasicFlowField<T>& target) {
    require_same_resolution(pred, target, "epe_loss");
    const std::size_t n = pred.pixel_count();
    const double inv_n = 1.0 / static_cast<double>(n);
    const double eps2 = kEpeEpsilon * kEpeEpsilon;

    EpeLoss<T> result{T(0), BasicFlowField<T>(pred.height(), pred.width())};
    auto p = pred.tensor().data();
    auto q = target.tensor().data();
    auto g = result.gradient.tensor().data();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double du = static_cast<double>(p[i]) - static_cast<double>(q[i]);
        const double dv = static_cast<double>(p[n + i]) - static_cast<double>(q[n + i]);
        const double r = std::sqrt(du * du + dv * dv + eps2);
        total += r;
        g[i] = static_cast<T>(du / r * inv_n);
        g[n + i] = static_cast<T>(dv / r * inv_n);
    }
    result.loss = static_cast<T>(total * inv_n);
    return result;
}

AdamState AdamState::for_params(const Tensor& params, double learning_rate) {
    AdamState s;
    s.first_moment = Tensor(params.shape());
    s.second_moment = Tensor(params.shape());
    s.learning_rate = learning_rate;
    return s;
}

void adam_step(Tensor& params, const Tensor& grad, AdamState& state) {
    if (params.shape() != grad.shape() || params.shape() != state.first_moment.shape() ||
        params.shape() != state.second_moment.shape()) {
        throw ShapeError("adam_step: parameter shape " + shape_to_string(params.shape()) + ", gradient " +
                         shape_to_string(grad.shape()) + ", moments " +
                         shape_to_string(state.first_moment.shape()) + "/" +
                         shape_to_string(state.second_moment.shape()));
    }
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);

    auto p = params.data();
    auto g = grad.data();
    auto m = state.first_moment.data();
    auto v = state.second_moment.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i];
        const double mi = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
        const double vi = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
        m[i] = static_cast<float>(mi);
        v[i] = static_cast<float>(vi);
        const double m_hat = mi / correction1;
        const double v_hat = vi / correction2;
        p[i] = static_cast<float>(p[i] - state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon));
    }
}

template struct BasicConvLayer<float>;
template struct BasicConvLayer<double>;
template BasicTensor<float> conv2d(const BasicTensor<float>&, const BasicConvLayer<float>&);
template BasicTensor<double> conv2d(const BasicTensor<double>&, const BasicConvLayer<double>&);
template ConvGradients<float> conv2d_backward(const BasicTensor<float>&, const BasicConvLayer<float>&,
                                              const BasicTensor<float>&, bool);
template ConvGradients<double> conv2d_backward(const BasicTensor<double>&, const BasicConvLayer<double>&,
                                               const BasicTensor<double>&, bool);
template BasicTensor<float> relu(const BasicTensor<float>&);
template BasicTensor<double> relu(const BasicTensor<double>&);
template BasicTensor<float> relu_backward(const BasicTensor<float>&, const BasicTensor<float>&);
template BasicTensor<double> relu_backward(const BasicTensor<double>&, const BasicTensor<double>&);
template EpeLoss<float> epe_loss(const BasicFlowField<float>&, const BasicFlowField<float>&);
template EpeLoss<double> epe_loss(const BasicFlowField<double>&, const BasicFlowField<double>&);

}  // namespace spyflow
