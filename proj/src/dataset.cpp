#include "spyflow/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "spyflow/flow_io.hpp"
#include "spyflow/pyramid.hpp"

namespace spyflow {
namespace {

std::vector<float> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<float> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * i * i / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = static_cast<float>(v);
        sum += v;
    }
    for (float& v : k) v = static_cast<float>(v / sum);
    return k;
}

// Separable Gaussian blur with replicated borders, in place on one plane.
void blur_plane(std::vector<float>& plane, int height, int width, double sigma) {
    const std::vector<float> k = gaussian_kernel(sigma);
    const int r = static_cast<int>(k.size() / 2);
    std::vector<float> tmp(plane.size());
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            float acc = 0.0f;
            for (int i = -r; i <= r; ++i) {
                const int xx = std::clamp(x + i, 0, width - 1);
                acc += k[static_cast<std::size_t>(i + r)] * plane[static_cast<std::size_t>(y) * width + xx];
            }
            tmp[static_cast<std::size_t>(y) * width + x] = acc;
        }
    }
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            float acc = 0.0f;
            for (int i = -r; i <= r; ++i) {
                const int yy = std::clamp(y + i, 0, height - 1);
                acc += k[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>(yy) * width + x];
            }
            plane[static_cast<std::size_t>(y) * width + x] = acc;
        }
    }
}

std::vector<float> smooth_noise(int height, int width, double sigma, std::mt19937_64& rng) {
    std::normal_distribution<float> normal(0.0f, 1.0f);
    std::vector<float> plane(static_cast<std::size_t>(height) * width);
    for (float& v : plane) v = normal(rng);
    blur_plane(plane, height, width, sigma);
    double sq = 0.0;
    for (float v : plane) sq += static_cast<double>(v) * v;
    const float inv_std = static_cast<float>(1.0 / std::sqrt(sq / static_cast<double>(plane.size()) + 1e-12));
    for (float& v : plane) v *= inv_std;
    return plane;
}

double max_corner_displacement(const AffineMotion& m, double x0, double y0, double x1, double y1) {
    double worst = 0.0;
    for (double x : {x0, x1}) {
        for (double y : {y0, y1}) {
            double ox, oy;
            m.apply(x, y, ox, oy);
            worst = std::max(worst, std::hypot(ox - x, oy - y));
        }
    }
    return worst;
}

// Draws a motion about (cx, cy) whose displacement over the box
// [x0,x1]x[y0,y1] never exceeds `cap`.
AffineMotion draw_motion(const SynthSpec& spec, double cap, double cx, double cy, double x0, double y0, double x1,
                         double y1, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double tx = 0.0, ty = 0.0, angle = 0.0, scale = 1.0;
    if (spec.translate) {
        const double r = cap * std::sqrt(unit(rng));
        const double phi = 2.0 * std::numbers::pi * unit(rng);
        tx = r * std::cos(phi);
        ty = r * std::sin(phi);
    }
    if (spec.rotate) angle = (unit(rng) * 2.0 - 1.0) * 0.2;
    if (spec.scale) scale = 0.9 + 0.2 * unit(rng);
    AffineMotion m = AffineMotion::about(cx, cy, angle, scale, tx, ty);

    const double worst = max_corner_displacement(m, x0, y0, x1, y1);
    if (worst > cap && worst > 0.0) {
        // Displacement is affine in (A - I, b); shrink it uniformly.
        const double f = cap / worst;
        m.a11 = 1.0 + (m.a11 - 1.0) * f;
        m.a12 *= f;
        m.a21 *= f;
        m.a22 = 1.0 + (m.a22 - 1.0) * f;
        m.tx *= f;
        m.ty *= f;
    }
    return m;
}

float sample_texture(const Scene& scene, int texture, int channel, double x, double y) {
    return sample_bilinear(scene.textures[static_cast<std::size_t>(texture)], channel, x + scene.margin,
                           y + scene.margin);
}

}  // namespace

void Sample::validate() const {
    require_chw(frame1, "sample frame1", 3);
    require_chw(frame2, "sample frame2", 3);
    require_same_resolution(frame1, frame2, "sample frames");
    require_same_resolution(frame1, gt_flow, "sample flow");
}

void SynthSpec::validate() const {
    if (height <= 0 || width <= 0) throw std::invalid_argument("synth: resolution must be positive");
    if (!(texture_sigma > 0.0)) throw std::invalid_argument("synth: texture_sigma must be positive");
    if (max_background_displacement < 0.0 || max_foreground_displacement < 0.0) {
        throw std::invalid_argument("synth: displacement caps must be non-negative");
    }
    const double limit = std::min(height, width) / 4.0;
    if (max_background_displacement > limit || max_foreground_displacement > limit) {
        throw std::invalid_argument("synth: displacement cap exceeds min(height, width)/4 = " + std::to_string(limit) +
                                    " px; coarse pyramid levels would see large motions");
    }
    if (min_objects < 0 || max_objects < min_objects) {
        throw std::invalid_argument("synth: need 0 <= min_objects <= max_objects");
    }
    if (!(object_size_min > 0.0) || object_size_max < object_size_min) {
        throw std::invalid_argument("synth: need 0 < object_size_min <= object_size_max");
    }
}

AffineMotion AffineMotion::translation(double tx, double ty) {
    AffineMotion m;
    m.tx = tx;
    m.ty = ty;
    return m;
}

AffineMotion AffineMotion::about(double cx, double cy, double radians, double scale, double tx, double ty) {
    AffineMotion m;
    const double c = std::cos(radians) * scale;
    const double s = std::sin(radians) * scale;
    m.a11 = c;
    m.a12 = -s;
    m.a21 = s;
    m.a22 = c;
    // x' = A (x - centre) + centre + t
    m.tx = cx - (c * cx - s * cy) + tx;
    m.ty = cy - (s * cx + c * cy) + ty;
    return m;
}

void AffineMotion::apply(double x, double y, double& ox, double& oy) const {
    ox = a11 * x + a12 * y + tx;
    oy = a21 * x + a22 * y + ty;
}

AffineMotion AffineMotion::inverse() const {
    const double det = a11 * a22 - a12 * a21;
    if (std::abs(det) < 1e-12) throw std::invalid_argument("affine motion is singular");
    AffineMotion inv;
    inv.a11 = a22 / det;
    inv.a12 = -a12 / det;
    inv.a21 = -a21 / det;
    inv.a22 = a11 / det;
    inv.tx = -(inv.a11 * tx + inv.a12 * ty);
    inv.ty = -(inv.a21 * tx + inv.a22 * ty);
    return inv;
}

bool SceneObject::contains(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double c = std::cos(orientation);
    const double s = std::sin(orientation);
    const double lx = (c * dx + s * dy) / rx;
    const double ly = (-s * dx + c * dy) / ry;
    return lx * lx + ly * ly <= 1.0;
}

Tensor make_texture(int height, int width, double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::vector<float> fine = smooth_noise(height, width, sigma, rng);
    const std::vector<float> coarse = smooth_noise(height, width, 3.0 * sigma, rng);
    Tensor tex({3, height, width});
    for (int c = 0; c < 3; ++c) {
        const std::vector<float> chroma = smooth_noise(height, width, sigma, rng);
        for (std::size_t i = 0; i < fine.size(); ++i) {
            const float luminance = 0.6f * fine[i] + 0.4f * coarse[i];
            const float v = 0.5f + 0.16f * (0.75f * luminance + 0.35f * chroma[i]);
            tex.data()[static_cast<std::size_t>(c) * fine.size() + i] = std::clamp(v, 0.0f, 1.0f);
        }
    }
    return tex;
}

Scene draw_scene(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Scene scene;
    scene.height = spec.height;
    scene.width = spec.width;
    const double cap = std::max(spec.max_background_displacement, spec.max_foreground_displacement);
    scene.margin = static_cast<int>(std::ceil(2.0 * cap)) + 4;
    const int canvas_h = spec.height + 2 * scene.margin;
    const int canvas_w = spec.width + 2 * scene.margin;

    scene.textures.push_back(make_texture(canvas_h, canvas_w, spec.texture_sigma, rng()));
    const double w1 = spec.width - 1;
    const double h1 = spec.height - 1;
    scene.background_motion =
        draw_motion(spec, spec.max_background_displacement, w1 / 2, h1 / 2, 0, 0, w1, h1, rng);

    std::uniform_int_distribution<int> count(spec.min_objects, spec.max_objects);
    const int objects = count(rng);
    const double min_dim = std::min(spec.width, spec.height);
    for (int i = 0; i < objects; ++i) {
        SceneObject obj;
        obj.cx = unit(rng) * w1;
        obj.cy = unit(rng) * h1;
        obj.rx = min_dim * (spec.object_size_min + unit(rng) * (spec.object_size_max - spec.object_size_min));
        obj.ry = min_dim * (spec.object_size_min + unit(rng) * (spec.object_size_max - spec.object_size_min));
        obj.orientation = unit(rng) * std::numbers::pi;
        const double r = std::max(obj.rx, obj.ry);
        obj.motion = draw_motion(spec, spec.max_foreground_displacement, obj.cx, obj.cy, obj.cx - r, obj.cy - r,
                                 obj.cx + r, obj.cy + r, rng);
        obj.texture = static_cast<int>(scene.textures.size());
        scene.textures.push_back(make_texture(canvas_h, canvas_w, spec.texture_sigma, rng()));
        scene.objects.push_back(obj);
    }
    return scene;
}

RenderedScene render_scene(const Scene& scene) {
    const int h = scene.height;
    const int w = scene.width;
    RenderedScene out;
    Sample& s = out.sample;
    s.frame1 = Tensor({3, h, w});
    s.frame2 = Tensor({3, h, w});
    s.gt_flow = FlowField(h, w);
    out.frame1_layer.assign(static_cast<std::size_t>(h) * w, -1);
    out.frame2_layer.assign(static_cast<std::size_t>(h) * w, -1);

    const AffineMotion bg_inverse = scene.background_motion.inverse();
    std::vector<AffineMotion> inverses;
    for (const auto& obj : scene.objects) inverses.push_back(obj.motion.inverse());

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y) * w + x;

            int layer = -1;
            for (int i = static_cast<int>(scene.objects.size()) - 1; i >= 0; --i) {
                if (scene.objects[static_cast<std::size_t>(i)].contains(x, y)) {
                    layer = i;
                    break;
                }
            }
            const AffineMotion& motion =
                layer < 0 ? scene.background_motion : scene.objects[static_cast<std::size_t>(layer)].motion;
            const int tex1 = layer < 0 ? 0 : scene.objects[static_cast<std::size_t>(layer)].texture;
            double mx, my;
            motion.apply(x, y, mx, my);
            s.gt_flow.u(x, y) = static_cast<float>(mx - x);
            s.gt_flow.v(x, y) = static_cast<float>(my - y);
            for (int c = 0; c < 3; ++c) s.frame1.at(c, y, x) = sample_texture(scene, tex1, c, x, y);
            out.frame1_layer[idx] = layer;

            int layer2 = -1;
            double qx = 0, qy = 0;
            for (int i = static_cast<int>(scene.objects.size()) - 1; i >= 0; --i) {
                inverses[static_cast<std::size_t>(i)].apply(x, y, qx, qy);
                if (scene.objects[static_cast<std::size_t>(i)].contains(qx, qy)) {
                    layer2 = i;
                    break;
                }
            }
            if (layer2 < 0) bg_inverse.apply(x, y, qx, qy);
            const int tex2 = layer2 < 0 ? 0 : scene.objects[static_cast<std::size_t>(layer2)].texture;
            for (int c = 0; c < 3; ++c) s.frame2.at(c, y, x) = sample_texture(scene, tex2, c, qx, qy);
            out.frame2_layer[idx] = layer2;
        }
    }
    return out;
}

Sample generate_sample(const SynthSpec& spec, std::uint64_t seed) {
    Sample s = render_scene(draw_scene(spec, seed)).sample;
    s.seed = seed;
    return s;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open manifest " + path.string());
    const std::filesystem::path base = path.parent_path();
    std::vector<ManifestEntry> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream fields(line);
        std::string a, b, c, extra;
        if (!(fields >> a >> b >> c) || (fields >> extra)) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": expected 'frame1 frame2 flow', got '" + line + "'");
        }
        auto resolve = [&](const std::string& p) {
            const std::filesystem::path fp(p);
            return fp.is_absolute() ? fp : base / fp;
        };
        entries.push_back({resolve(a), resolve(b), resolve(c)});
    }
    return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    for (const auto& e : entries) {
        out << e.frame1.generic_string() << ' ' << e.frame2.generic_string() << ' ' << e.flow.generic_string()
            << '\n';
    }
}

std::vector<ManifestEntry> write_dataset(const std::vector<Sample>& samples, const std::filesystem::path& directory) {
    std::filesystem::create_directories(directory);
    std::vector<ManifestEntry> entries;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "%05zu", i);
        ManifestEntry e{std::string(stem) + "_img1.png", std::string(stem) + "_img2.png",
                        std::string(stem) + "_flow.flo"};
        write_image(samples[i].frame1, directory / e.frame1);
        write_image(samples[i].frame2, directory / e.frame2);
        write_flo(samples[i].gt_flow, directory / e.flow);
        entries.push_back(e);
    }
    write_manifest(entries, directory / "manifest.txt");
    return entries;
}

std::vector<Sample> load_dataset(const std::filesystem::path& manifest) {
    std::vector<Sample> samples;
    std::uint64_t index = 0;
    for (const auto& e : read_manifest(manifest)) {
        Sample s{read_image(e.frame1), read_image(e.frame2), read_flo(e.flow), index++};
        try {
            s.validate();
        } catch (const ShapeError& err) {
            throw FormatError(e.frame1.string() + ": " + err.what());
        }
        samples.push_back(std::move(s));
    }
    if (samples.empty()) throw FormatError(manifest.string() + ": manifest lists no samples");
    return samples;
}

}  // namespace spyflow
