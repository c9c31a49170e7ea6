#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "spyflow/dataset.hpp"
#include "spyflow/spynet.hpp"

namespace spyflow {

struct TrainConfig {
    int batch_size = 32;
    int iterations_per_epoch = 20;
    double lr_initial = 1e-4;
    double lr_final = 1e-5;
    int lr_switch_epoch = 60;
    int epochs = 1;
    /// Per-level epoch override, coarsest first; missing entries use `epochs`.
    std::vector<int> level_epochs;
    std::uint64_t seed = 1;
    /// Emit a progress record every this many steps (and on the last step).
    int log_interval = 10;

    /// Full training schedule: batch 32, 4000 iterations per epoch,
    /// 1e-4 for 60 epochs then 1e-5.
    static TrainConfig full_schedule(int epochs = 100);

    int epochs_for_level(int level) const;
    void validate() const;
};

struct AugmentConfig {
    std::array<double, 2> scale_range{1.0, 2.0};
    std::array<double, 2> rotation_range_deg{-17.0, 17.0};
    double noise_sigma_max = 0.1;
    double jitter_sigma = 0.4;
    /// Full-resolution crop (the finest level); 0 = sample resolution.
    int crop_height = 0;
    int crop_width = 0;
    std::array<float, 3> rgb_mean{0.485f, 0.456f, 0.406f};
    std::array<float, 3> rgb_std{0.229f, 0.224f, 0.225f};

    /// Normalization only: no scale, rotation, noise or jitter.
    static AugmentConfig identity();
    bool is_identity() const;
    void validate() const;
};

/// One realization of the random augmentation parameters.
struct AugmentDraw {
    double scale = 1.0;
    double rotation_deg = 0.0;
    double crop_fraction_x = 0.5;  // crop offset as a fraction of the free range
    double crop_fraction_y = 0.5;
    double noise_sigma = 0.0;
    std::uint64_t noise_seed = 0;
    double brightness = 0.0;
    double contrast = 0.0;
    double saturation = 0.0;
};

/// v_hat_k = V_hat_k - u(V_{k-1}).
FlowField residual_target(const FlowField& gt_flow_at_level, const FlowField& flow_up);

AugmentDraw draw_augmentation(const AugmentConfig& cfg, std::mt19937_64& rng);

/// Scale, rotate, crop, add noise, jitter colours and normalize, in that
/// order. Geometric transforms are shared by both frames and carried into
/// the flow; noise is independent per frame; jitter is shared.
Sample apply_augmentation(const Sample& sample, const AugmentConfig& cfg, const AugmentDraw& draw);

Sample augment_sample(const Sample& sample, const AugmentConfig& cfg, std::mt19937_64& rng);

/// Per-channel (x - mean) / std.
Tensor normalize_image(const Tensor& image, const std::array<float, 3>& mean, const std::array<float, 3>& std);

/// Step schedule; `epoch` is 1-based.
double learning_rate(int epoch, const TrainConfig& cfg);

/// Resolution of every level, coarsest first, for a finest resolution.
std::vector<std::array<int, 2>> level_resolutions(int height, int width, int levels);

struct TrainRecord {
    int epoch = 0;
    int level = 0;
    int step = 0;  // 1-based within the level
    double loss = 0.0;
    double lr = 0.0;
};

using TrainCallback = std::function<void(const TrainRecord&)>;

struct LevelTrainResult {
    LevelNetwork network;
    std::vector<double> losses;  // mean batch loss per step
};

/// Trains G_level against residual targets produced by the frozen `lower`
/// networks (G_0..G_{level-1}); `initial` is the starting point.
LevelTrainResult train_level(int level, int total_levels, const std::vector<LevelNetwork>& lower,
                             const LevelNetwork& initial, const std::vector<Sample>& dataset,
                             const TrainConfig& cfg, const AugmentConfig& aug, const TrainCallback& on_record = {});

/// Sequential coarse-to-fine training; G_0 from fresh initialization, each
/// later level warm-started from the previous trained network.
/// `on_level_done` receives the model trained so far after every level.
PyramidModel train_pyramid(const std::vector<Sample>& dataset, const TrainConfig& cfg, const AugmentConfig& aug,
                           int levels, const TrainCallback& on_record = {},
                           const std::function<void(const PyramidModel&)>& on_level_done = {});

/// Mean EPE loss of G_level's residual over the given samples (no augmentation
/// beyond normalization).
double level_loss(int level, int total_levels, const std::vector<LevelNetwork>& lower, const LevelNetwork& net,
                  const std::vector<Sample>& samples, const AugmentConfig& aug);

}  // namespace spyflow
