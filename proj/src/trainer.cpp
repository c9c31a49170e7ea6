#include "spyflow/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

#include "spyflow/nn.hpp"
#include "spyflow/parallel.hpp"
#include "spyflow/pyramid.hpp"

namespace spyflow {
namespace {

struct PreparedSample {
    Tensor input;      // 8-channel level input
    FlowField target;  // residual target
};

struct AugmentGeometry {
    int crop_height;
    int crop_width;
};

AugmentGeometry crop_for(const Sample& sample, const AugmentConfig& cfg) {
    return {cfg.crop_height > 0 ? cfg.crop_height : sample.height(),
            cfg.crop_width > 0 ? cfg.crop_width : sample.width()};
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(c)};
    return std::mt19937_64(seq);
}

void jitter_frame(Tensor& frame, const AugmentDraw& d) {
    const std::size_t plane = static_cast<std::size_t>(frame.height()) * frame.width();
    auto px = frame.data();
    if (d.brightness != 0.0) {
        for (float& v : px) v += static_cast<float>(d.brightness);
    }
    if (d.contrast != 0.0) {
        const double mean = std::accumulate(px.begin(), px.end(), 0.0) / static_cast<double>(px.size());
        const double gain = std::max(0.0, 1.0 + d.contrast);
        for (float& v : px) v = static_cast<float>(mean + gain * (v - mean));
    }
    if (d.saturation != 0.0) {
        for (std::size_t i = 0; i < plane; ++i) {
            const double lum = 0.299 * px[i] + 0.587 * px[plane + i] + 0.114 * px[2 * plane + i];
            for (int c = 0; c < 3; ++c) {
                float& v = px[c * plane + i];
                v = static_cast<float>(v + d.saturation * (lum - v));
            }
        }
    }
}

// Builds the level-k training input for one (already augmented and
// normalized) sample at the finest resolution.
PreparedSample prepare_level(const Sample& s, int level, int total_levels, const std::vector<LevelNetwork>& lower) {
    const auto p1 = build_image_pyramid(s.frame1, total_levels);
    const auto p2 = build_image_pyramid(s.frame2, total_levels);
    const auto gt = build_flow_pyramid(s.gt_flow, total_levels);
    const Tensor& f1 = p1[static_cast<std::size_t>(level)];
    const Tensor& f2 = p2[static_cast<std::size_t>(level)];

    FlowField flow_up(f1.height(), f1.width());
    Tensor warped = f2;
    if (level > 0) {
        std::vector<const LevelNetwork*> nets;
        for (int k = 0; k < level; ++k) nets.push_back(&lower[static_cast<std::size_t>(k)]);
        flow_up = upsample_flow(infer_pyramid(nets, p1, p2));
        warped = warp(f2, flow_up);
    }
    return {stack_level_input(f1, warped, flow_up), residual_target(gt[static_cast<std::size_t>(level)], flow_up)};
}

struct SampleGradient {
    double loss = 0.0;
    LevelNetwork grads;
};

SampleGradient sample_gradient(const LevelNetwork& net, const PreparedSample& p) {
    LevelTrace<float> trace;
    const FlowField out = run_level(net, p.input, &trace);
    EpeLoss<float> loss = epe_loss(out, p.target);
    LevelGradients<float> g = run_level_backward(net, trace, loss.gradient);
    return {static_cast<double>(loss.loss), std::move(g.params)};
}

void check_dataset(const std::vector<Sample>& dataset, const AugmentConfig& aug, int total_levels) {
    if (dataset.empty()) throw std::invalid_argument("training dataset is empty");
    const int factor = 1 << (total_levels - 1);
    for (const auto& s : dataset) {
        s.validate();
        const AugmentGeometry g = crop_for(s, aug);
        if (g.crop_height > s.height() || g.crop_width > s.width()) {
            throw std::invalid_argument("crop size " + resolution_string(g.crop_height, g.crop_width) +
                                        " exceeds dataset resolution " + resolution_string(s.height(), s.width()));
        }
        if (g.crop_height % factor != 0 || g.crop_width % factor != 0) {
            throw std::invalid_argument("crop size " + resolution_string(g.crop_height, g.crop_width) +
                                        " is not divisible by " + std::to_string(factor) + " for " +
                                        std::to_string(total_levels) + " levels");
        }
    }
}

bool cacheable(const std::vector<Sample>& dataset, const AugmentConfig& aug) {
    if (!aug.is_identity()) return false;
    return std::all_of(dataset.begin(), dataset.end(), [&](const Sample& s) {
        const AugmentGeometry g = crop_for(s, aug);
        return g.crop_height == s.height() && g.crop_width == s.width();
    });
}

Sample normalized_copy(const Sample& s, const AugmentConfig& aug) {
    return {normalize_image(s.frame1, aug.rgb_mean, aug.rgb_std), normalize_image(s.frame2, aug.rgb_mean, aug.rgb_std),
            s.gt_flow, s.seed};
}

}  // namespace

TrainConfig TrainConfig::full_schedule(int epochs) {
    TrainConfig cfg;
    cfg.batch_size = 32;
    cfg.iterations_per_epoch = 4000;
    cfg.lr_initial = 1e-4;
    cfg.lr_final = 1e-5;
    cfg.lr_switch_epoch = 60;
    cfg.epochs = epochs;
    cfg.log_interval = 100;
    return cfg;
}

int TrainConfig::epochs_for_level(int level) const {
    if (level >= 0 && static_cast<std::size_t>(level) < level_epochs.size()) {
        return level_epochs[static_cast<std::size_t>(level)];
    }
    return epochs;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
    if (!(lr_initial > 0.0) || !(lr_final > 0.0)) throw std::invalid_argument("learning rates must be positive");
    if (iterations_per_epoch < 0 || epochs < 0 || lr_switch_epoch < 0) {
        throw std::invalid_argument("epoch and iteration counts must be non-negative");
    }
    for (int e : level_epochs) {
        if (e < 0) throw std::invalid_argument("level_epochs entries must be non-negative");
    }
    if (log_interval < 1) throw std::invalid_argument("log_interval must be at least 1");
}

AugmentConfig AugmentConfig::identity() {
    AugmentConfig cfg;
    cfg.scale_range = {1.0, 1.0};
    cfg.rotation_range_deg = {0.0, 0.0};
    cfg.noise_sigma_max = 0.0;
    cfg.jitter_sigma = 0.0;
    return cfg;
}

bool AugmentConfig::is_identity() const {
    return scale_range[0] == 1.0 && scale_range[1] == 1.0 && rotation_range_deg[0] == 0.0 &&
           rotation_range_deg[1] == 0.0 && noise_sigma_max == 0.0 && jitter_sigma == 0.0;
}

void AugmentConfig::validate() const {
    if (scale_range[0] < 1.0 || scale_range[1] < scale_range[0]) {
        throw std::invalid_argument("scale_range must satisfy 1 <= min <= max");
    }
    if (rotation_range_deg[1] < rotation_range_deg[0]) throw std::invalid_argument("rotation range is inverted");
    if (noise_sigma_max < 0.0 || jitter_sigma < 0.0) throw std::invalid_argument("noise and jitter must be >= 0");
    if (crop_height < 0 || crop_width < 0) throw std::invalid_argument("crop size must be non-negative");
    for (float s : rgb_std) {
        if (!(s > 0.0f)) throw std::invalid_argument("rgb_std entries must be positive");
    }
}

FlowField residual_target(const FlowField& gt_flow_at_level, const FlowField& flow_up) {
    require_same_resolution(gt_flow_at_level, flow_up, "residual_target");
    FlowField out = gt_flow_at_level;
    auto o = out.tensor().data();
    auto u = flow_up.tensor().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= u[i];
    return out;
}

AugmentDraw draw_augmentation(const AugmentConfig& cfg, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    AugmentDraw d;
    d.scale = uniform(cfg.scale_range[0], cfg.scale_range[1]);
    d.rotation_deg = uniform(cfg.rotation_range_deg[0], cfg.rotation_range_deg[1]);
    d.crop_fraction_x = unit(rng);
    d.crop_fraction_y = unit(rng);
    d.noise_sigma = uniform(0.0, cfg.noise_sigma_max);
    d.noise_seed = rng();
    if (cfg.jitter_sigma > 0.0) {
        std::normal_distribution<double> jitter(0.0, cfg.jitter_sigma);
        d.brightness = jitter(rng);
        d.contrast = jitter(rng);
        d.saturation = jitter(rng);
    }
    return d;
}

Sample apply_augmentation(const Sample& sample, const AugmentConfig& cfg, const AugmentDraw& draw) {
    sample.validate();
    const int h = sample.height();
    const int w = sample.width();
    const double s = draw.scale;
    const int scaled_h = static_cast<int>(std::floor(s * h));
    const int scaled_w = static_cast<int>(std::floor(s * w));
    const AugmentGeometry g = crop_for(sample, cfg);
    if (g.crop_height > scaled_h || g.crop_width > scaled_w) {
        throw std::invalid_argument("crop size " + resolution_string(g.crop_height, g.crop_width) +
                                    " exceeds scaled image size " + resolution_string(scaled_h, scaled_w));
    }
    const int off_y = static_cast<int>(std::lround(draw.crop_fraction_y * (scaled_h - g.crop_height)));
    const int off_x = static_cast<int>(std::lround(draw.crop_fraction_x * (scaled_w - g.crop_width)));

    const double theta = draw.rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta);
    const double sn = std::sin(theta);
    const double cx = (scaled_w - 1) / 2.0;
    const double cy = (scaled_h - 1) / 2.0;

    Sample out;
    out.seed = sample.seed;
    out.frame1 = Tensor({3, g.crop_height, g.crop_width});
    out.frame2 = Tensor({3, g.crop_height, g.crop_width});
    out.gt_flow = FlowField(g.crop_height, g.crop_width);
    for (int y = 0; y < g.crop_height; ++y) {
        for (int x = 0; x < g.crop_width; ++x) {
            // Crop pixel -> rotated/scaled image -> source pixel (inverse of R about the centre, then of s).
            const double qx = x + off_x - cx;
            const double qy = y + off_y - cy;
            const double sx = cx + c * qx + sn * qy;
            const double sy = cy - sn * qx + c * qy;
            const double px = (sx + 0.5) / s - 0.5;
            const double py = (sy + 0.5) / s - 0.5;
            for (int ch = 0; ch < 3; ++ch) {
                out.frame1.at(ch, y, x) = sample_bilinear(sample.frame1, ch, px, py);
                out.frame2.at(ch, y, x) = sample_bilinear(sample.frame2, ch, px, py);
            }
            const double fu = sample_bilinear(sample.gt_flow.tensor(), 0, px, py);
            const double fv = sample_bilinear(sample.gt_flow.tensor(), 1, px, py);
            out.gt_flow.u(x, y) = static_cast<float>(s * (c * fu - sn * fv));
            out.gt_flow.v(x, y) = static_cast<float>(s * (sn * fu + c * fv));
        }
    }

    if (draw.noise_sigma > 0.0) {
        std::mt19937_64 rng(draw.noise_seed);
        std::normal_distribution<float> noise(0.0f, static_cast<float>(draw.noise_sigma));
        for (float& v : out.frame1.data()) v += noise(rng);
        for (float& v : out.frame2.data()) v += noise(rng);
    }
    jitter_frame(out.frame1, draw);
    jitter_frame(out.frame2, draw);
    for (Tensor* f : {&out.frame1, &out.frame2}) {
        for (float& v : f->data()) v = std::clamp(v, 0.0f, 1.0f);
    }

    out.frame1 = normalize_image(out.frame1, cfg.rgb_mean, cfg.rgb_std);
    out.frame2 = normalize_image(out.frame2, cfg.rgb_mean, cfg.rgb_std);
    return out;
}

Sample augment_sample(const Sample& sample, const AugmentConfig& cfg, std::mt19937_64& rng) {
    return apply_augmentation(sample, cfg, draw_augmentation(cfg, rng));
}

Tensor normalize_image(const Tensor& image, const std::array<float, 3>& mean, const std::array<float, 3>& std) {
    require_chw(image, "normalize_image", 3);
    Tensor out = image;
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < image.height(); ++y) {
            for (int x = 0; x < image.width(); ++x) out.at(c, y, x) = (out.at(c, y, x) - mean[c]) / std[c];
        }
    }
    return out;
}

double learning_rate(int epoch, const TrainConfig& cfg) {
    return epoch <= cfg.lr_switch_epoch ? cfg.lr_initial : cfg.lr_final;
}

std::vector<std::array<int, 2>> level_resolutions(int height, int width, int levels) {
    const int factor = 1 << (levels - 1);
    if (levels < 1 || height % factor != 0 || width % factor != 0) {
        throw ShapeError(resolution_string(height, width) + " is not divisible by " + std::to_string(factor) +
                         " for " + std::to_string(levels) + " levels");
    }
    std::vector<std::array<int, 2>> out;
    for (int k = 0; k < levels; ++k) {
        const int f = 1 << (levels - 1 - k);
        out.push_back({height / f, width / f});
    }
    return out;
}

LevelTrainResult train_level(int level, int total_levels, const std::vector<LevelNetwork>& lower,
                             const LevelNetwork& initial, const std::vector<Sample>& dataset,
                             const TrainConfig& cfg, const AugmentConfig& aug, const TrainCallback& on_record) {
    cfg.validate();
    aug.validate();
    initial.validate();
    if (level < 0 || level >= total_levels) {
        throw std::invalid_argument("level " + std::to_string(level) + " outside a " + std::to_string(total_levels) +
                                    "-level pyramid");
    }
    if (static_cast<int>(lower.size()) < level) {
        throw std::invalid_argument("training level " + std::to_string(level) + " requires trained networks G_0..G_" +
                                    std::to_string(level - 1) + ", got " + std::to_string(lower.size()));
    }
    for (int k = 0; k < level; ++k) lower[static_cast<std::size_t>(k)].validate();
    check_dataset(dataset, aug, total_levels);

    LevelTrainResult result{initial, {}};
    LevelNetwork& net = result.network;

    std::vector<Tensor*> params;
    for (auto& layer : net.layers) {
        params.push_back(&layer.weights);
        params.push_back(&layer.bias);
    }
    std::vector<AdamState> optimizer;
    for (Tensor* p : params) optimizer.push_back(AdamState::for_params(*p, cfg.lr_initial));

    // Without random augmentation every sample's level input is fixed.
    std::vector<PreparedSample> cache;
    if (cacheable(dataset, aug)) {
        cache.resize(dataset.size());
        parallel_for(dataset.size(), [&](std::size_t i) {
            cache[i] = prepare_level(normalized_copy(dataset[i], aug), level, total_levels, lower);
        });
    }

    const std::size_t n = dataset.size();
    const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
    const int epochs = cfg.epochs_for_level(level);
    const int total_steps = epochs * cfg.iterations_per_epoch;

    std::map<std::size_t, std::vector<std::size_t>> orders;  // pass -> permutation
    auto sample_index = [&](std::size_t position) {
        const std::size_t pass = position / n;
        auto it = orders.find(pass);
        if (it == orders.end()) {
            std::vector<std::size_t> perm(n);
            std::iota(perm.begin(), perm.end(), 0);
            auto rng = stream(cfg.seed, 0x5eed0000u + static_cast<std::uint64_t>(level), pass, 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            orders.clear();
            it = orders.emplace(pass, std::move(perm)).first;
        }
        return it->second[position % n];
    };

    for (int step = 1; step <= total_steps; ++step) {
        const int epoch = (step - 1) / cfg.iterations_per_epoch + 1;
        const double lr = learning_rate(epoch, cfg);

        std::vector<std::size_t> indices(batch);
        for (std::size_t j = 0; j < batch; ++j) indices[j] = sample_index(static_cast<std::size_t>(step - 1) * batch + j);

        std::vector<SampleGradient> slot(batch);
        parallel_for(batch, [&](std::size_t j) {
            const std::size_t idx = indices[j];
            if (!cache.empty()) {
                slot[j] = sample_gradient(net, cache[idx]);
                return;
            }
            auto rng = stream(cfg.seed, static_cast<std::uint64_t>(level), static_cast<std::uint64_t>(step), j);
            const Sample augmented = augment_sample(dataset[idx], aug, rng);
            slot[j] = sample_gradient(net, prepare_level(augmented, level, total_levels, lower));
        });

        double loss = 0.0;
        LevelNetwork& sum = slot[0].grads;
        loss += slot[0].loss;
        for (std::size_t j = 1; j < batch; ++j) {
            loss += slot[j].loss;
            for (int l = 0; l < kLevelLayers; ++l) {
                auto& acc = sum.layers[l];
                const auto& g = slot[j].grads.layers[l];
                for (std::size_t i = 0; i < acc.weights.size(); ++i) acc.weights[i] += g.weights[i];
                for (std::size_t i = 0; i < acc.bias.size(); ++i) acc.bias[i] += g.bias[i];
            }
        }
        const float inv_batch = 1.0f / static_cast<float>(batch);
        loss /= static_cast<double>(batch);

        std::size_t p = 0;
        for (auto& layer : sum.layers) {
            for (Tensor* g : {&layer.weights, &layer.bias}) {
                for (float& v : g->data()) v *= inv_batch;
                optimizer[p].learning_rate = lr;
                adam_step(*params[p], *g, optimizer[p]);
                ++p;
            }
        }
        result.losses.push_back(loss);
        if (on_record && (step % cfg.log_interval == 0 || step == total_steps)) {
            on_record({epoch, level, step, loss, lr});
        }
    }
    return result;
}

PyramidModel train_pyramid(const std::vector<Sample>& dataset, const TrainConfig& cfg, const AugmentConfig& aug,
                           int levels, const TrainCallback& on_record,
                           const std::function<void(const PyramidModel&)>& on_level_done) {
    if (levels < 1) throw std::invalid_argument("levels must be at least 1");
    PyramidModel model;
    for (int k = 0; k < levels; ++k) {
        const LevelNetwork initial = k == 0 ? LevelNetwork::fresh(cfg.seed) : model.networks.back();
        LevelTrainResult r = train_level(k, levels, model.networks, initial, dataset, cfg, aug, on_record);
        model.networks.push_back(std::move(r.network));
        if (on_level_done) on_level_done(model);
    }
    return model;
}

double level_loss(int level, int total_levels, const std::vector<LevelNetwork>& lower, const LevelNetwork& net,
                  const std::vector<Sample>& samples, const AugmentConfig& aug) {
    std::vector<double> losses(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) {
        const PreparedSample p = prepare_level(normalized_copy(samples[i], aug), level, total_levels, lower);
        losses[i] = epe_loss(run_level(net, p.input), p.target).loss;
    });
    return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(samples.size());
}

}  // namespace spyflow
