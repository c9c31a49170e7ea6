#include "spyflow/pyramid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace spyflow {
namespace {

struct BilinearTap {
    int x0, x1, y0, y1;
    double fx, fy;
    bool clamped_x, clamped_y;
};

BilinearTap bilinear_tap(double x, double y, int width, int height) {
    BilinearTap t{};
    const double max_x = width - 1;
    const double max_y = height - 1;
    t.clamped_x = x < 0.0 || x > max_x;
    t.clamped_y = y < 0.0 || y > max_y;
    x = std::clamp(x, 0.0, max_x);
    y = std::clamp(y, 0.0, max_y);
    const double fx0 = std::floor(x);
    const double fy0 = std::floor(y);
    t.x0 = static_cast<int>(fx0);
    t.y0 = static_cast<int>(fy0);
    t.x1 = std::min(t.x0 + 1, width - 1);
    t.y1 = std::min(t.y0 + 1, height - 1);
    t.fx = x - fx0;
    t.fy = y - fy0;
    return t;
}

template <typename T>
T blend(const T* plane, int width, const BilinearTap& t) {
    const T fx = static_cast<T>(t.fx);
    const T fy = static_cast<T>(t.fy);
    const T a = plane[t.y0 * width + t.x0];
    const T b = plane[t.y0 * width + t.x1];
    const T c = plane[t.y1 * width + t.x0];
    const T d = plane[t.y1 * width + t.x1];
    return (T(1) - fy) * ((T(1) - fx) * a + fx * b) + fy * ((T(1) - fx) * c + fx * d);
}

void require_even(int height, int width, const char* what) {
    if (height % 2 != 0 || width % 2 != 0) {
        throw ShapeError(std::string(what) + ": dimensions must be even, got " + resolution_string(height, width));
    }
}

void require_divisible(int height, int width, int levels, const char* what) {
    if (levels < 1) throw ShapeError(std::string(what) + ": level count must be at least 1");
    const int factor = 1 << (levels - 1);
    if (height % factor != 0 || width % factor != 0) {
        throw ShapeError(std::string(what) + ": " + resolution_string(height, width) + " is not divisible by " +
                         std::to_string(factor) + " (2^(levels-1) for " + std::to_string(levels) + " levels)");
    }
}

}  // namespace

template <typename T>
BasicTensor<T> downsample_image(const BasicTensor<T>& image) {
    require_chw(image, "downsample_image");
    require_even(image.height(), image.width(), "downsample_image");
    const int h = image.height() / 2;
    const int w = image.width() / 2;
    BasicTensor<T> out({image.channels(), h, w});
    for (int c = 0; c < image.channels(); ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const T sum = image.at(c, 2 * y, 2 * x) + image.at(c, 2 * y, 2 * x + 1) +
                              image.at(c, 2 * y + 1, 2 * x) + image.at(c, 2 * y + 1, 2 * x + 1);
                out.at(c, y, x) = sum * T(0.25);
            }
        }
    }
    return out;
}

template <typename T>
std::vector<BasicTensor<T>> build_image_pyramid(const BasicTensor<T>& image, int levels) {
    require_chw(image, "build_image_pyramid");
    require_divisible(image.height(), image.width(), levels, "build_image_pyramid");
    std::vector<BasicTensor<T>> pyramid(static_cast<std::size_t>(levels));
    pyramid.back() = image;
    for (int k = levels - 2; k >= 0; --k) pyramid[k] = downsample_image(pyramid[k + 1]);
    return pyramid;
}

template <typename T>
BasicFlowField<T> downsample_flow(const BasicFlowField<T>& flow) {
    require_even(flow.height(), flow.width(), "downsample_flow");
    BasicTensor<T> halved = downsample_image(flow.tensor());
    for (T& v : halved.data()) v *= T(0.5);
    return BasicFlowField<T>(std::move(halved));
}

template <typename T>
std::vector<BasicFlowField<T>> build_flow_pyramid(const BasicFlowField<T>& flow, int levels) {
    require_divisible(flow.height(), flow.width(), levels, "build_flow_pyramid");
    std::vector<BasicFlowField<T>> pyramid(static_cast<std::size_t>(levels));
    pyramid.back() = flow;
    for (int k = levels - 2; k >= 0; --k) pyramid[k] = downsample_flow(pyramid[k + 1]);
    return pyramid;
}

template <typename T>
BasicFlowField<T> upsample_flow(const BasicFlowField<T>& flow) {
    const int h = flow.height();
    const int w = flow.width();
    const int oh = 2 * h;
    const int ow = 2 * w;
    // Corner-aligned: fine pixel i maps to coarse coordinate i * (n - 1) / (2n - 1).
    const double sy = h > 1 ? static_cast<double>(h - 1) / (oh - 1) : 0.0;
    const double sx = w > 1 ? static_cast<double>(w - 1) / (ow - 1) : 0.0;
    BasicFlowField<T> out(oh, ow);
    for (int c = 0; c < 2; ++c) {
        const T* plane = &flow.tensor().at(c, 0, 0);
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                const BilinearTap t = bilinear_tap(x * sx, y * sy, w, h);
                out.tensor().at(c, y, x) = T(2) * blend(plane, w, t);
            }
        }
    }
    return out;
}

template <typename T>
T sample_bilinear(const BasicTensor<T>& image, int channel, double x, double y) {
    const BilinearTap t = bilinear_tap(x, y, image.width(), image.height());
    return blend(&image.at(channel, 0, 0), image.width(), t);
}

template <typename T>
BasicTensor<T> warp(const BasicTensor<T>& image, const BasicFlowField<T>& flow) {
    require_chw(image, "warp image");
    require_same_resolution(image, flow, "warp");
    const int h = image.height();
    const int w = image.width();
    BasicTensor<T> out(image.shape());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const BilinearTap t = bilinear_tap(x + static_cast<double>(flow.u(x, y)),
                                               y + static_cast<double>(flow.v(x, y)), w, h);
            for (int c = 0; c < image.channels(); ++c) out.at(c, y, x) = blend(&image.at(c, 0, 0), w, t);
        }
    }
    return out;
}

template <typename T>
WarpGradients<T> warp_backward(const BasicTensor<T>& image, const BasicFlowField<T>& flow,
                               const BasicTensor<T>& grad_output) {
    require_chw(image, "warp_backward image");
    require_same_resolution(image, flow, "warp_backward");
    if (grad_output.shape() != image.shape()) {
        throw ShapeError("warp_backward: gradient shape " + shape_to_string(grad_output.shape()) +
                         " does not match image shape " + shape_to_string(image.shape()));
    }
    const int h = image.height();
    const int w = image.width();
    WarpGradients<T> grads{BasicTensor<T>(image.shape()), BasicFlowField<T>(h, w)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const BilinearTap t = bilinear_tap(x + static_cast<double>(flow.u(x, y)),
                                               y + static_cast<double>(flow.v(x, y)), w, h);
            const T fx = static_cast<T>(t.fx);
            const T fy = static_cast<T>(t.fy);
            T du = T(0);
            T dv = T(0);
            for (int c = 0; c < image.channels(); ++c) {
                const T g = grad_output.at(c, y, x);
                const T a = image.at(c, t.y0, t.x0);
                const T b = image.at(c, t.y0, t.x1);
                const T cc = image.at(c, t.y1, t.x0);
                const T d = image.at(c, t.y1, t.x1);
                grads.image.at(c, t.y0, t.x0) += g * (T(1) - fx) * (T(1) - fy);
                grads.image.at(c, t.y0, t.x1) += g * fx * (T(1) - fy);
                grads.image.at(c, t.y1, t.x0) += g * (T(1) - fx) * fy;
                grads.image.at(c, t.y1, t.x1) += g * fx * fy;
                // A clamped coordinate no longer depends on the flow.
                if (!t.clamped_x) du += g * ((T(1) - fy) * (b - a) + fy * (d - cc));
                if (!t.clamped_y) dv += g * ((T(1) - fx) * (cc - a) + fx * (d - b));
            }
            grads.flow.u(x, y) = du;
            grads.flow.v(x, y) = dv;
        }
    }
    return grads;
}

Tensor resize_bilinear(const Tensor& image, int height, int width) {
    require_chw(image, "resize_bilinear");
    if (height <= 0 || width <= 0) throw ShapeError("resize_bilinear: target size must be positive");
    if (height == image.height() && width == image.width()) return image;
    const double sy = static_cast<double>(image.height()) / height;
    const double sx = static_cast<double>(image.width()) / width;
    Tensor out({image.channels(), height, width});
    for (int c = 0; c < image.channels(); ++c) {
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                out.at(c, y, x) = sample_bilinear(image, c, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5);
            }
        }
    }
    return out;
}

FlowField resize_flow(const FlowField& flow, int height, int width) {
    Tensor resized = resize_bilinear(flow.tensor(), height, width);
    const float su = static_cast<float>(width) / static_cast<float>(flow.width());
    const float sv = static_cast<float>(height) / static_cast<float>(flow.height());
    FlowField out(std::move(resized));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            out.u(x, y) *= su;
            out.v(x, y) *= sv;
        }
    }
    return out;
}

template BasicTensor<float> downsample_image(const BasicTensor<float>&);
template BasicTensor<double> downsample_image(const BasicTensor<double>&);
template std::vector<BasicTensor<float>> build_image_pyramid(const BasicTensor<float>&, int);
template std::vector<BasicTensor<double>> build_image_pyramid(const BasicTensor<double>&, int);
template BasicFlowField<float> downsample_flow(const BasicFlowField<float>&);
template BasicFlowField<double> downsample_flow(const BasicFlowField<double>&);
template std::vector<BasicFlowField<float>> build_flow_pyramid(const BasicFlowField<float>&, int);
template std::vector<BasicFlowField<double>> build_flow_pyramid(const BasicFlowField<double>&, int);
template BasicFlowField<float> upsample_flow(const BasicFlowField<float>&);
template BasicFlowField<double> upsample_flow(const BasicFlowField<double>&);
template float sample_bilinear(const BasicTensor<float>&, int, double, double);
template double sample_bilinear(const BasicTensor<double>&, int, double, double);
template BasicTensor<float> warp(const BasicTensor<float>&, const BasicFlowField<float>&);
template BasicTensor<double> warp(const BasicTensor<double>&, const BasicFlowField<double>&);
template WarpGradients<float> warp_backward(const BasicTensor<float>&, const BasicFlowField<float>&,
                                            const BasicTensor<float>&);
template WarpGradients<double> warp_backward(const BasicTensor<double>&, const BasicFlowField<double>&,
                                             const BasicTensor<double>&);

}  // namespace spyflow
