#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spyflow/flow_field.hpp"
#include "spyflow/tensor.hpp"

namespace spyflow {

/// An RGB frame pair with dense ground-truth flow from frame1 to frame2.
struct Sample {
    Tensor frame1;  // [3,H,W]
    Tensor frame2;  // [3,H,W]
    FlowField gt_flow;
    std::uint64_t seed = 0;

    int height() const { return frame1.height(); }
    int width() const { return frame1.width(); }
    /// Throws unless frames and flow share one resolution.
    void validate() const;
};

struct SynthSpec {
    int height = 96;
    int width = 128;
    /// Gaussian sigma (pixels) of the low-pass filtered texture noise.
    double texture_sigma = 1.5;
    double max_background_displacement = 8.0;
    int min_objects = 0;
    int max_objects = 0;
    /// Object radii as a fraction of min(height, width).
    double object_size_min = 0.1;
    double object_size_max = 0.25;
    double max_foreground_displacement = 8.0;
    bool translate = true;
    bool rotate = false;
    bool scale = false;

    /// Throws std::invalid_argument on inconsistent values, including
    /// displacement caps above min(height, width) / 4.
    void validate() const;
};

/// x' = A x + b in pixel coordinates of the full frame.
struct AffineMotion {
    double a11 = 1, a12 = 0, a21 = 0, a22 = 1;
    double tx = 0, ty = 0;

    static AffineMotion translation(double tx, double ty);
    /// Rotation by `radians` (y axis pointing down) and isotropic scale about `(cx, cy)`.
    static AffineMotion about(double cx, double cy, double radians, double scale, double tx = 0, double ty = 0);

    void apply(double x, double y, double& ox, double& oy) const;
    AffineMotion inverse() const;
};

struct SceneObject {
    double cx = 0, cy = 0;    // ellipse centre in frame 1
    double rx = 1, ry = 1;    // radii
    double orientation = 0;   // radians
    AffineMotion motion;
    int texture = 0;          // index into Scene::textures

    bool contains(double x, double y) const;
};

/// A textured background plus rigid elliptical objects, each with its own
/// affine motion. Later objects are drawn on top.
struct Scene {
    int height = 0;
    int width = 0;
    int margin = 0;  // texture canvases extend this far past every border
    std::vector<Tensor> textures;  // [3, H + 2 margin, W + 2 margin]; index 0 is the background
    AffineMotion background_motion;
    std::vector<SceneObject> objects;
};

struct RenderedScene {
    Sample sample;
    /// Topmost layer per pixel: -1 background, otherwise the object index.
    std::vector<int> frame1_layer;
    std::vector<int> frame2_layer;
};

/// Smooth random RGB texture in [0,1].
Tensor make_texture(int height, int width, double sigma, std::uint64_t seed);

/// Random scene for (spec, seed) with motions drawn within the displacement caps.
Scene draw_scene(const SynthSpec& spec, std::uint64_t seed);

/// Renders frame1 directly, frame2 by sampling the scene under the inverse
/// motions, and assembles the flow analytically.
RenderedScene render_scene(const Scene& scene);

/// Fully determined by (spec, seed).
Sample generate_sample(const SynthSpec& spec, std::uint64_t seed);

struct ManifestEntry {
    std::filesystem::path frame1;
    std::filesystem::path frame2;
    std::filesystem::path flow;
};

/// One "frame1 frame2 flow" triple per line; relative paths resolve against
/// the manifest's directory. Blank lines and '#' comments are ignored.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);

/// Writes frames as PNG and flows as .flo into `directory` plus manifest.txt.
std::vector<ManifestEntry> write_dataset(const std::vector<Sample>& samples, const std::filesystem::path& directory);
std::vector<Sample> load_dataset(const std::filesystem::path& manifest);

}  // namespace spyflow
