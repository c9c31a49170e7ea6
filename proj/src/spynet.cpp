#include "spyflow/spynet.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "spyflow/pyramid.hpp"

namespace spyflow {

template <typename T>
BasicLevelNetwork<T> BasicLevelNetwork<T>::zeros() {
    BasicLevelNetwork net;
    for (int l = 0; l < kLevelLayers; ++l) {
        net.layers[l] = BasicConvLayer<T>::zeros(kLevelChannels[l + 1], kLevelChannels[l]);
    }
    return net;
}

template <typename T>
BasicLevelNetwork<T> BasicLevelNetwork<T>::fresh(std::uint64_t seed) {
    BasicLevelNetwork net = zeros();
    std::mt19937_64 rng(seed);
    for (auto& layer : net.layers) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in_channels() * kKernelTaps));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (T& w : layer.weights.data()) w = static_cast<T>(dist(rng));
    }
    return net;
}

template <typename T>
std::size_t BasicLevelNetwork<T>::param_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers) n += layer.param_count();
    return n;
}

template <typename T>
void BasicLevelNetwork<T>::validate() const {
    for (int l = 0; l < kLevelLayers; ++l) {
        const auto& layer = layers[l];
        layer.validate();
        if (layer.in_channels() != kLevelChannels[l] || layer.out_channels() != kLevelChannels[l + 1]) {
            throw ShapeError("level network layer " + std::to_string(l + 1) + ": expected " +
                             std::to_string(kLevelChannels[l]) + "->" + std::to_string(kLevelChannels[l + 1]) +
                             " channels, got " + std::to_string(layer.in_channels()) + "->" +
                             std::to_string(layer.out_channels()));
        }
    }
}

template <typename T>
std::vector<T> BasicLevelNetwork<T>::flatten() const {
    std::vector<T> out;
    out.reserve(param_count());
    for (const auto& layer : layers) {
        out.insert(out.end(), layer.weights.data().begin(), layer.weights.data().end());
        out.insert(out.end(), layer.bias.data().begin(), layer.bias.data().end());
    }
    return out;
}

template <typename T>
void BasicLevelNetwork<T>::unflatten(const std::vector<T>& values) {
    if (values.size() != param_count()) {
        throw ShapeError("unflatten: expected " + std::to_string(param_count()) + " values, got " +
                         std::to_string(values.size()));
    }
    auto it = values.begin();
    for (auto& layer : layers) {
        for (T& w : layer.weights.data()) w = *it++;
        for (T& b : layer.bias.data()) b = *it++;
    }
}

template <typename T>
BasicTensor<T> stack_level_input(const BasicTensor<T>& frame1, const BasicTensor<T>& frame2_warped,
                                 const BasicFlowField<T>& flow_up) {
    require_chw(frame1, "level input frame1", 3);
    require_chw(frame2_warped, "level input frame2", 3);
    require_same_resolution(frame1, frame2_warped, "level input frames");
    require_same_resolution(frame1, flow_up, "level input flow");
    const std::size_t plane = static_cast<std::size_t>(frame1.height()) * frame1.width();
    BasicTensor<T> input({kLevelChannels[0], frame1.height(), frame1.width()});
    auto dst = input.data().begin();
    std::copy(frame1.data().begin(), frame1.data().end(), dst);
    std::copy(frame2_warped.data().begin(), frame2_warped.data().end(), dst + static_cast<std::ptrdiff_t>(3 * plane));
    std::copy(flow_up.tensor().data().begin(), flow_up.tensor().data().end(),
              dst + static_cast<std::ptrdiff_t>(6 * plane));
    return input;
}

template <typename T>
BasicFlowField<T> run_level(const BasicLevelNetwork<T>& net, const BasicTensor<T>& input, LevelTrace<T>* trace) {
    BasicTensor<T> x = input;
    for (int l = 0; l < kLevelLayers; ++l) {
        BasicTensor<T> y = conv2d(x, net.layers[l]);
        if (trace) trace->layer_inputs[l] = std::move(x);
        if (l + 1 < kLevelLayers) {
            x = relu(y);
            if (trace) trace->pre_activations[l] = std::move(y);
        } else {
            x = std::move(y);
        }
    }
    return BasicFlowField<T>(std::move(x));
}

template <typename T>
LevelGradients<T> run_level_backward(const BasicLevelNetwork<T>& net, const LevelTrace<T>& trace,
                                     const BasicFlowField<T>& grad_output, bool want_input_grad) {
    LevelGradients<T> grads;
    BasicTensor<T> g = grad_output.tensor();
    for (int l = kLevelLayers - 1; l >= 0; --l) {
        const bool need_input = l > 0 || want_input_grad;
        ConvGradients<T> cg = conv2d_backward(trace.layer_inputs[l], net.layers[l], g, need_input);
        grads.params.layers[l] = {std::move(cg.weights), std::move(cg.bias)};
        if (l > 0) {
            g = relu_backward(trace.pre_activations[l - 1], cg.input);
        } else if (want_input_grad) {
            grads.input = std::move(cg.input);
        }
    }
    return grads;
}

template <typename T>
BasicFlowField<T> level_forward(const BasicLevelNetwork<T>& net, const BasicTensor<T>& frame1,
                                const BasicTensor<T>& frame2_warped, const BasicFlowField<T>& flow_up) {
    return run_level(net, stack_level_input(frame1, frame2_warped, flow_up));
}

int PyramidModel::levels() const {
    return inference_levels > 0 ? inference_levels : static_cast<int>(networks.size());
}

const LevelNetwork& PyramidModel::network_for_level(int level) const {
    const int last = static_cast<int>(networks.size()) - 1;
    return networks.at(static_cast<std::size_t>(std::min(level, last)));
}

void PyramidModel::validate() const {
    if (networks.empty()) throw ShapeError("pyramid model has no networks");
    if (inference_levels != 0 && inference_levels < static_cast<int>(networks.size())) {
        throw ShapeError("inference levels (" + std::to_string(inference_levels) +
                         ") must be at least the number of stored networks (" + std::to_string(networks.size()) +
                         ")");
    }
    for (const auto& net : networks) net.validate();
}

FlowField infer_pyramid(const std::vector<const LevelNetwork*>& networks, const std::vector<Tensor>& pyramid1,
                        const std::vector<Tensor>& pyramid2, InferenceTrace* trace) {
    const std::size_t levels = networks.size();
    if (levels == 0 || pyramid1.size() < levels || pyramid2.size() < levels) {
        throw ShapeError("infer_pyramid: need " + std::to_string(levels) + " pyramid levels, got " +
                         std::to_string(pyramid1.size()) + "/" + std::to_string(pyramid2.size()));
    }
    FlowField flow;
    for (std::size_t k = 0; k < levels; ++k) {
        const Tensor& f1 = pyramid1[k];
        const Tensor& f2 = pyramid2[k];
        FlowField flow_up = k == 0 ? FlowField(f1.height(), f1.width()) : upsample_flow(flow);
        // At the coarsest level the flow is zero and the warp is the identity.
        Tensor warped = k == 0 ? f2 : warp(f2, flow_up);
        FlowField residual = level_forward(*networks[k], f1, warped, flow_up);
        flow = flow_up;
        auto acc = flow.tensor().data();
        auto res = residual.tensor().data();
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += res[i];
        if (trace) {
            trace->flows.push_back(flow);
            trace->residuals.push_back(std::move(residual));
        }
    }
    return flow;
}

FlowField infer(const PyramidModel& model, const Tensor& frame1, const Tensor& frame2, InferenceTrace* trace) {
    model.validate();
    require_chw(frame1, "infer frame1", 3);
    require_chw(frame2, "infer frame2", 3);
    require_same_resolution(frame1, frame2, "infer");
    const int levels = model.levels();
    const int factor = 1 << (levels - 1);
    if (frame1.height() % factor != 0 || frame1.width() % factor != 0) {
        const int ph = (frame1.height() + factor - 1) / factor * factor;
        const int pw = (frame1.width() + factor - 1) / factor * factor;
        throw ShapeError("infer: " + resolution_string(frame1.height(), frame1.width()) +
                         " is not divisible by " + std::to_string(factor) + " for " + std::to_string(levels) +
                         " levels; pad or resize to " + resolution_string(ph, pw));
    }
    const auto p1 = build_image_pyramid(frame1, levels);
    const auto p2 = build_image_pyramid(frame2, levels);
    std::vector<const LevelNetwork*> nets;
    for (int k = 0; k < levels; ++k) nets.push_back(&model.network_for_level(k));
    return infer_pyramid(nets, p1, p2, trace);
}

ParamCounts count_params(const PyramidModel& model) {
    ParamCounts counts;
    for (const auto& net : model.networks) {
        counts.per_level.push_back(net.param_count());
        counts.total += counts.per_level.back();
    }
    return counts;
}

Tensor first_layer_filters(const LevelNetwork& net, int gap) {
    const ConvLayer& layer = net.layers[0];
    const int rows = layer.out_channels();
    constexpr int kTiles = 3;
    const int height = rows * kKernelSize + (rows - 1) * gap;
    const int width = kTiles * kKernelSize + (kTiles - 1) * gap;
    Tensor grid({3, height, width}, 1.0f);

    for (int o = 0; o < rows; ++o) {
        for (int tile = 0; tile < kTiles; ++tile) {
            std::array<float, 3 * kKernelTaps> values{};
            for (int c = 0; c < 3; ++c) {
                for (int t = 0; t < kKernelTaps; ++t) {
                    const std::size_t base = static_cast<std::size_t>(o) * layer.in_channels() * kKernelTaps;
                    const float a = layer.weights[base + static_cast<std::size_t>(c) * kKernelTaps + t];
                    const float b = layer.weights[base + static_cast<std::size_t>(c + 3) * kKernelTaps + t];
                    values[c * kKernelTaps + t] = tile == 0 ? a : tile == 1 ? b : a - b;
                }
            }
            const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
            const float range = *hi - *lo;
            const int top = o * (kKernelSize + gap);
            const int left = tile * (kKernelSize + gap);
            for (int c = 0; c < 3; ++c) {
                for (int t = 0; t < kKernelTaps; ++t) {
                    const float v = range > 0.0f ? (values[c * kKernelTaps + t] - *lo) / range : 0.5f;
                    grid.at(c, top + t / kKernelSize, left + t % kKernelSize) = v;
                }
            }
        }
    }
    return grid;
}

template struct BasicLevelNetwork<float>;
template struct BasicLevelNetwork<double>;
template BasicTensor<float> stack_level_input(const BasicTensor<float>&, const BasicTensor<float>&,
                                              const BasicFlowField<float>&);
template BasicTensor<double> stack_level_input(const BasicTensor<double>&, const BasicTensor<double>&,
                                               const BasicFlowField<double>&);
template BasicFlowField<float> run_level(const BasicLevelNetwork<float>&, const BasicTensor<float>&,
                                         LevelTrace<float>*);
template BasicFlowField<double> run_level(const BasicLevelNetwork<double>&, const BasicTensor<double>&,
                                          LevelTrace<double>*);
template LevelGradients<float> run_level_backward(const BasicLevelNetwork<float>&, const LevelTrace<float>&,
                                                  const BasicFlowField<float>&, bool);
template LevelGradients<double> run_level_backward(const BasicLevelNetwork<double>&, const LevelTrace<double>&,
                                                   const BasicFlowField<double>&, bool);
template BasicFlowField<float> level_forward(const BasicLevelNetwork<float>&, const BasicTensor<float>&,
                                             const BasicTensor<float>&, const BasicFlowField<float>&);
template BasicFlowField<double> level_forward(const BasicLevelNetwork<double>&, const BasicTensor<double>&,
                                              const BasicTensor<double>&, const BasicFlowField<double>&);

}  // namespace spyflow
