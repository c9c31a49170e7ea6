#include "support.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>

#include "spyflow/nn.hpp"
#include "spyflow/pyramid.hpp"

namespace spyflow::testing {
namespace {

using LevelTraceD = LevelTrace<double>;

template <typename T>
double dot(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

void append(std::vector<double>& out, const TensorD& t) { out.insert(out.end(), t.storage().begin(), t.storage().end()); }

TensorD take(const std::vector<double>& flat, std::size_t& offset, const std::vector<int>& shape) {
    const std::size_t n = TensorD::element_count(shape);
    std::vector<double> data(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                             flat.begin() + static_cast<std::ptrdiff_t>(offset + n));
    offset += n;
    return TensorD(shape, std::move(data));
}

}  // namespace

TempDir::TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("spyflow_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

GradCase conv_case(int in_ch, int out_ch, int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const TensorD input = random_tensor<double>({in_ch, h, w}, rng);
    const ConvLayerD layer{random_tensor<double>({out_ch, in_ch, kKernelSize, kKernelSize}, rng, -0.3, 0.3),
                           random_tensor<double>({out_ch}, rng)};
    const auto weighting = std::make_shared<TensorD>(random_tensor<double>({out_ch, h, w}, rng));
    const std::vector<int> in_shape{in_ch, h, w};
    const std::vector<int> w_shape = layer.weights.shape();
    const std::vector<int> b_shape = layer.bias.shape();

    auto unpack = [=](const std::vector<double>& x) {
        std::size_t off = 0;
        TensorD in = take(x, off, in_shape);
        ConvLayerD l{take(x, off, w_shape), take(x, off, b_shape)};
        return std::make_pair(in, l);
    };

    GradCase c;
    append(c.point, input);
    append(c.point, layer.weights);
    append(c.point, layer.bias);
    c.map.value = [=](const std::vector<double>& x) {
        auto [in, l] = unpack(x);
        return dot(conv2d(in, l), *weighting);
    };
    c.map.gradient = [=](const std::vector<double>& x) {
        auto [in, l] = unpack(x);
        const ConvGradients<double> g = conv2d_backward(in, l, *weighting, true);
        std::vector<double> out;
        append(out, g.input);
        append(out, g.weights);
        append(out, g.bias);
        return out;
    };
    c.map.blocks = {{"input", 0, input.size()},
                    {"weights", input.size(), layer.weights.size()},
                    {"bias", input.size() + layer.weights.size(), layer.bias.size()}};
    return c;
}

GradCase relu_case(int ch, int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const TensorD input = random_tensor<double>({ch, h, w}, rng);
    const auto weighting = std::make_shared<TensorD>(random_tensor<double>({ch, h, w}, rng));
    const std::vector<int> shape{ch, h, w};
    GradCase c;
    append(c.point, input);
    c.map.value = [=](const std::vector<double>& x) { return dot(relu(TensorD(shape, x)), *weighting); };
    c.map.gradient = [=](const std::vector<double>& x) {
        return relu_backward(TensorD(shape, x), *weighting).storage();
    };
    const std::vector<double> point = c.point;
    c.options.skip = [point](std::size_t i) { return std::abs(point[i]) < 1e-2; };
    return c;
}

GradCase epe_case(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const FlowFieldD pred = random_flow<double>(h, w, rng, -3.0, 3.0);
    const auto target = std::make_shared<FlowFieldD>(random_flow<double>(h, w, rng, -3.0, 3.0));
    const std::vector<int> shape{2, h, w};
    GradCase c;
    append(c.point, pred.tensor());
    c.map.value = [=](const std::vector<double>& x) {
        return static_cast<double>(epe_loss(FlowFieldD(TensorD(shape, x)), *target).loss);
    };
    c.map.gradient = [=](const std::vector<double>& x) {
        return epe_loss(FlowFieldD(TensorD(shape, x)), *target).gradient.tensor().storage();
    };
    return c;
}

GradCase warp_flow_case(int ch, int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto image = std::make_shared<TensorD>(random_tensor<double>({ch, h, w}, rng, 0.0, 1.0));
    const FlowFieldD flow = random_flow<double>(h, w, rng, -2.5, 2.5);
    const auto weighting = std::make_shared<TensorD>(random_tensor<double>({ch, h, w}, rng));
    const std::vector<int> shape{2, h, w};
    GradCase c;
    append(c.point, flow.tensor());
    c.map.value = [=](const std::vector<double>& x) { return dot(warp(*image, FlowFieldD(TensorD(shape, x))), *weighting); };
    c.map.gradient = [=](const std::vector<double>& x) {
        return warp_backward(*image, FlowFieldD(TensorD(shape, x)), *weighting).flow.tensor().storage();
    };
    // Bilinear kinks sit on integer sample coordinates (the border included).
    const std::vector<double> point = c.point;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    c.options.skip = [point, plane, w](std::size_t i) {
        const std::size_t p = i % plane;
        const double base = i < plane ? static_cast<double>(p % static_cast<std::size_t>(w))
                                      : static_cast<double>(p / static_cast<std::size_t>(w));
        const double coord = base + point[i];
        return std::abs(coord - std::round(coord)) < 1e-2;
    };
    return c;
}

GradCase warp_image_case(int ch, int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const TensorD image = random_tensor<double>({ch, h, w}, rng, 0.0, 1.0);
    const auto flow = std::make_shared<FlowFieldD>(random_flow<double>(h, w, rng, -2.5, 2.5));
    const auto weighting = std::make_shared<TensorD>(random_tensor<double>({ch, h, w}, rng));
    const std::vector<int> shape{ch, h, w};
    GradCase c;
    append(c.point, image);
    c.map.value = [=](const std::vector<double>& x) { return dot(warp(TensorD(shape, x), *flow), *weighting); };
    c.map.gradient = [=](const std::vector<double>& x) {
        return warp_backward(TensorD(shape, x), *flow, *weighting).image.storage();
    };
    return c;
}

namespace {

bool same_relu_masks(const LevelTraceD& a, const LevelTraceD& b) {
    for (std::size_t l = 0; l < a.pre_activations.size(); ++l) {
        const auto& x = a.pre_activations[l];
        const auto& y = b.pre_activations[l];
        for (std::size_t i = 0; i < x.size(); ++i) {
            if ((x[i] > 0.0) != (y[i] > 0.0)) return false;
        }
    }
    return true;
}

GradCase make_level_case(int h, int w, std::uint64_t seed, std::size_t probes, double corrupt_layer0_weights) {
    std::mt19937_64 rng(seed);
    // Pre-activation spreads grow by 30x per ReLU layer so a 1e-3 step in
    // any parameter is tiny next to the spread it feeds, and few probes
    // straddle a ReLU kink. The output keeps the last spread so the EPE
    // curvature seen by a final-layer step stays small while round-off in
    // the differences stays below 1e-5. Biases are drawn relative to each
    // layer's spread to keep signs mixed.
    constexpr std::array<double, kLevelLayers> kSpread{1e2, 1e3, 1e4, 1e5, 1e5};
    const auto input = std::make_shared<TensorD>(random_tensor<double>({kLevelChannels[0], h, w}, rng));
    LevelNetworkD net = LevelNetwork::fresh(seed).cast<double>();
    TensorD activation = *input;
    for (int l = 0; l < kLevelLayers; ++l) {
        auto& layer = net.layers[l];
        layer.bias.fill(0.0);
        const TensorD z = conv2d(activation, layer);
        double sq = 0.0;
        for (double v : z.data()) sq += v * v;
        const double gain = kSpread[l] / std::sqrt(sq / static_cast<double>(z.size()));
        for (double& v : layer.weights.data()) v *= gain;
        layer.bias = random_tensor<double>(layer.bias.shape(), rng, -0.5 * kSpread[l], 0.5 * kSpread[l]);
        activation = l + 1 < kLevelLayers ? relu(conv2d(activation, layer)) : conv2d(activation, layer);
    }
    double sq = 0.0;
    for (double v : activation.data()) sq += v * v;
    const double out_spread = std::sqrt(sq / static_cast<double>(activation.size()));
    const auto target = std::make_shared<FlowFieldD>(random_flow<double>(h, w, rng, -out_spread, out_spread));
    auto network_at = [](const std::vector<double>& x) {
        LevelNetworkD n = LevelNetworkD::zeros();
        n.unflatten(x);
        return n;
    };

    GradCase c;
    c.point = net.flatten();
    c.map.value = [=](const std::vector<double>& x) {
        return static_cast<double>(epe_loss(run_level(network_at(x), *input), *target).loss);
    };
    c.map.gradient = [=](const std::vector<double>& x) {
        const LevelNetworkD n = network_at(x);
        LevelTraceD trace;
        const FlowFieldD out = run_level(n, *input, &trace);
        LevelGradients<double> g = run_level_backward(n, trace, epe_loss(out, *target).gradient);
        for (double& v : g.params.layers[0].weights.data()) v *= corrupt_layer0_weights;
        return g.params.flatten();
    };
    std::size_t offset = 0;
    for (int l = 0; l < kLevelLayers; ++l) {
        const std::string name = "layer" + std::to_string(l + 1);
        c.map.blocks.push_back({name + ".weights", offset, net.layers[l].weights.size()});
        offset += net.layers[l].weights.size();
        c.map.blocks.push_back({name + ".bias", offset, net.layers[l].bias.size()});
        offset += net.layers[l].bias.size();
    }
    c.options.max_probes_per_block = probes;
    c.options.seed = seed;
    c.options.crosses_kink = [=](const std::vector<double>& a, const std::vector<double>& b) {
        LevelTraceD ta, tb;
        run_level(network_at(a), *input, &ta);
        run_level(network_at(b), *input, &tb);
        return !same_relu_masks(ta, tb);
    };
    return c;
}

}  // namespace

std::map<std::string, OracleBin> brute_force_bins(const FlowField& pred, const FlowField& gt, double threshold) {
    const int h = gt.height();
    const int w = gt.width();
    auto jump = [&](int x0, int y0, int x1, int y1) {
        const double du = static_cast<double>(gt.u(x1, y1)) - gt.u(x0, y0);
        const double dv = static_cast<double>(gt.v(x1, y1)) - gt.v(x0, y0);
        return du * du + dv * dv;
    };
    std::vector<std::pair<int, int>> marked;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double right = x + 1 < w ? jump(x, y, x + 1, y) : 0.0;
            const double down = y + 1 < h ? jump(x, y, x, y + 1) : 0.0;
            const double left = x > 0 ? jump(x - 1, y, x, y) : 0.0;
            const double up = y > 0 ? jump(x, y - 1, x, y) : 0.0;
            if (std::sqrt(right + down) > threshold || std::sqrt(left + up) > threshold) marked.emplace_back(x, y);
        }
    }
    std::map<std::string, OracleBin> bins;
    for (const char* label : {"d0-10", "d10-60", "d60-140", "s0-10", "s10-40", "s40+"}) bins[label] = {};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double e = std::hypot(static_cast<double>(pred.u(x, y)) - gt.u(x, y),
                                        static_cast<double>(pred.v(x, y)) - gt.v(x, y));
            const double speed = std::hypot(static_cast<double>(gt.u(x, y)), static_cast<double>(gt.v(x, y)));
            OracleBin& s = bins[speed < 10 ? "s0-10" : speed < 40 ? "s10-40" : "s40+"];
            ++s.count;
            s.sum += e;
            if (marked.empty()) continue;
            double best = 1e300;
            for (auto [mx, my] : marked) best = std::min(best, std::hypot(double(mx - x), double(my - y)));
            const char* label = best < 10 ? "d0-10" : best < 60 ? "d10-60" : best < 140 ? "d60-140" : nullptr;
            if (!label) continue;
            ++bins[label].count;
            bins[label].sum += e;
        }
    }
    return bins;
}

FlowField blocky_flow(int h, int w, int blocks, double max_speed, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> speed(-max_speed, max_speed);
    std::uniform_int_distribution<int> cut_y(1, h - 1), cut_x(1, w - 1);
    std::vector<int> ys{0, h}, xs{0, w};
    for (int i = 1; i < blocks; ++i) {
        ys.push_back(cut_y(rng));
        xs.push_back(cut_x(rng));
    }
    std::sort(ys.begin(), ys.end());
    std::sort(xs.begin(), xs.end());
    FlowField f(h, w);
    for (std::size_t by = 0; by + 1 < ys.size(); ++by) {
        for (std::size_t bx = 0; bx + 1 < xs.size(); ++bx) {
            const float u = static_cast<float>(speed(rng));
            const float v = static_cast<float>(speed(rng));
            for (int y = ys[by]; y < ys[by + 1]; ++y) {
                for (int x = xs[bx]; x < xs[bx + 1]; ++x) {
                    f.u(x, y) = u;
                    f.v(x, y) = v;
                }
            }
        }
    }
    return f;
}

GradCase level_case(int h, int w, std::uint64_t seed, std::size_t probes_per_block) {
    return make_level_case(h, w, seed, probes_per_block, 1.0);
}

GradCase corrupted_level_case(int h, int w, std::uint64_t seed, std::size_t probes_per_block) {
    return make_level_case(h, w, seed, probes_per_block, 2.0);
}

}  // namespace spyflow::testing
