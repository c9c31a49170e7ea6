#include "spyflow/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace spyflow {
namespace {

constexpr std::array<const char*, 3> kDistanceLabels{"d0-10", "d10-60", "d60-140"};
constexpr std::array<std::int64_t, 4> kDistanceEdges{0, 10, 60, 140};
constexpr std::array<const char*, 3> kSpeedLabels{"s0-10", "s10-40", "s40+"};

int speed_bin(double speed) {
    if (speed < 10.0) return 0;
    if (speed < 40.0) return 1;
    return 2;
}

// -1 when at or beyond the last edge.
int distance_bin(std::int64_t squared) {
    for (int b = 0; b < 3; ++b) {
        if (squared < kDistanceEdges[b + 1] * kDistanceEdges[b + 1]) return b;
    }
    return -1;
}

// 1-D lower envelope of parabolas (Felzenszwalb & Huttenlocher).
void distance_1d(const std::vector<std::int64_t>& f, std::vector<std::int64_t>& d, int n) {
    std::vector<int> v(static_cast<std::size_t>(n));
    std::vector<double> z(static_cast<std::size_t>(n) + 1);
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] >= kNoBoundary) continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -1e300;
            z[1] = 1e300;
            continue;
        }
        auto intersect = [&](int p) {
            return (static_cast<double>(f[q] + std::int64_t{q} * q) - static_cast<double>(f[p] + std::int64_t{p} * p)) /
                   (2.0 * (q - p));
        };
        double s = intersect(v[static_cast<std::size_t>(k)]);
        while (s <= z[static_cast<std::size_t>(k)]) {
            --k;
            s = intersect(v[static_cast<std::size_t>(k)]);
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        z[static_cast<std::size_t>(k)] = s;
        z[static_cast<std::size_t>(k) + 1] = 1e300;
    }
    if (k < 0) {
        std::fill(d.begin(), d.begin() + n, kNoBoundary);
        return;
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (z[static_cast<std::size_t>(j) + 1] < q) ++j;
        const int p = v[static_cast<std::size_t>(j)];
        d[q] = std::int64_t{q - p} * (q - p) + f[p];
    }
}

}  // namespace

double average_epe(const FlowField& pred, const FlowField& gt) {
    require_same_resolution(pred, gt, "average_epe");
    double total = 0.0;
    for (int y = 0; y < gt.height(); ++y) {
        for (int x = 0; x < gt.width(); ++x) {
            total += std::hypot(static_cast<double>(pred.u(x, y)) - gt.u(x, y),
                                static_cast<double>(pred.v(x, y)) - gt.v(x, y));
        }
    }
    return total / static_cast<double>(gt.pixel_count());
}

const BinStat& EvalReport::bin(const std::string& label) const {
    for (const auto& b : bins) {
        if (b.label == label) return b;
    }
    throw std::out_of_range("no bin labelled " + label);
}

std::string EvalReport::to_table() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "mean EPE      " << mean_epe << " px over " << pixel_count << " pixels\n";
    os << "bin           EPE        pixels\n";
    for (const auto& b : bins) {
        os << std::left << std::setw(14) << b.label << std::right;
        if (b.epe) {
            os << std::setw(9) << *b.epe;
        } else {
            os << std::setw(9) << "-";
        }
        os << "  " << std::setw(8) << b.count << "\n";
    }
    os << "motion boundaries: thresholded flow gradient, tau=" << boundary_threshold << " px/px\n";
    if (runtime_ms) os << "runtime       " << *runtime_ms << " ms\n";
    if (param_count) os << "parameters    " << *param_count << "\n";
    return os.str();
}

std::string EvalReport::to_records() const {
    std::ostringstream os;
    os << std::setprecision(9);
    os << "mean_epe=" << mean_epe << "\n";
    os << "pixels=" << pixel_count << "\n";
    for (const auto& b : bins) {
        os << "bin." << b.label << ".count=" << b.count << "\n";
        if (b.epe) os << "bin." << b.label << ".epe=" << *b.epe << "\n";
    }
    os << "boundary_definition=thresholded_gradient\n";
    os << "boundary_threshold=" << boundary_threshold << "\n";
    if (runtime_ms) os << "runtime_ms=" << *runtime_ms << "\n";
    if (param_count) os << "param_count=" << *param_count << "\n";
    return os.str();
}

std::vector<std::uint8_t> motion_boundaries(const FlowField& gt, double threshold) {
    const int h = gt.height();
    const int w = gt.width();
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(h) * w, 0);
    const double t2 = threshold * threshold;
    auto diff2 = [&](int x0, int y0, int x1, int y1) {
        const double du = static_cast<double>(gt.u(x1, y1)) - gt.u(x0, y0);
        const double dv = static_cast<double>(gt.v(x1, y1)) - gt.v(x0, y0);
        return du * du + dv * dv;
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double forward = (x + 1 < w ? diff2(x, y, x + 1, y) : 0.0) + (y + 1 < h ? diff2(x, y, x, y + 1) : 0.0);
            const double backward = (x > 0 ? diff2(x - 1, y, x, y) : 0.0) + (y > 0 ? diff2(x, y - 1, x, y) : 0.0);
            if (forward > t2 || backward > t2) mask[static_cast<std::size_t>(y) * w + x] = 1;
        }
    }
    return mask;
}

std::vector<std::int64_t> squared_distance_transform(const std::vector<std::uint8_t>& mask, int height, int width) {
    std::vector<std::int64_t> grid(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) grid[i] = mask[i] ? 0 : kNoBoundary;

    const int longest = std::max(height, width);
    std::vector<std::int64_t> f(static_cast<std::size_t>(longest));
    std::vector<std::int64_t> d(static_cast<std::size_t>(longest));
    for (int x = 0; x < width; ++x) {
        for (int y = 0; y < height; ++y) f[y] = grid[static_cast<std::size_t>(y) * width + x];
        distance_1d(f, d, height);
        for (int y = 0; y < height; ++y) grid[static_cast<std::size_t>(y) * width + x] = d[y];
    }
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) f[x] = grid[static_cast<std::size_t>(y) * width + x];
        distance_1d(f, d, width);
        for (int x = 0; x < width; ++x) grid[static_cast<std::size_t>(y) * width + x] = d[x];
    }
    return grid;
}

EvalReport segmented_report(const FlowField& pred, const FlowField& gt, const SegmentOptions& options) {
    require_same_resolution(pred, gt, "segmented_report");
    const int h = gt.height();
    const int w = gt.width();
    const auto mask = motion_boundaries(gt, options.boundary_threshold);
    const auto dist = squared_distance_transform(mask, h, w);

    std::array<double, 3> d_sum{}, s_sum{};
    std::array<std::size_t, 3> d_count{}, s_count{};
    double total = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double e = std::hypot(static_cast<double>(pred.u(x, y)) - gt.u(x, y),
                                        static_cast<double>(pred.v(x, y)) - gt.v(x, y));
            total += e;
            const int sb = speed_bin(std::hypot(static_cast<double>(gt.u(x, y)), static_cast<double>(gt.v(x, y))));
            s_sum[sb] += e;
            ++s_count[sb];
            const std::int64_t d2 = dist[static_cast<std::size_t>(y) * w + x];
            if (d2 >= kNoBoundary) continue;
            const int db = distance_bin(d2);
            if (db >= 0) {
                d_sum[db] += e;
                ++d_count[db];
            }
        }
    }

    EvalReport report;
    report.pixel_count = gt.pixel_count();
    report.mean_epe = total / static_cast<double>(report.pixel_count);
    report.boundary_threshold = options.boundary_threshold;
    auto push = [&](const char* label, double sum, std::size_t count) {
        BinStat b{label, count, std::nullopt};
        if (count > 0) b.epe = sum / static_cast<double>(count);
        report.bins.push_back(b);
    };
    for (int b = 0; b < 3; ++b) push(kDistanceLabels[b], d_sum[b], d_count[b]);
    for (int b = 0; b < 3; ++b) push(kSpeedLabels[b], s_sum[b], s_count[b]);
    return report;
}

RuntimeStats benchmark_inference(const PyramidModel& model, const Tensor& frame1, const Tensor& frame2,
                                 int repetitions) {
    if (repetitions < 1) throw std::invalid_argument("repetitions must be at least 1");
    std::vector<double> times;
    for (int r = 0; r < repetitions; ++r) {
        const auto start = std::chrono::steady_clock::now();
        const FlowField flow = infer(model, frame1, frame2);
        const auto stop = std::chrono::steady_clock::now();
        (void)flow;
        times.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    }
    RuntimeStats stats;
    stats.repetitions = repetitions;
    stats.param_count = count_params(model).total;
    std::vector<double> sorted = times;
    std::sort(sorted.begin(), sorted.end());
    stats.min_ms = sorted.front();
    const std::size_t mid = sorted.size() / 2;
    stats.median_ms = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
    double sum = 0.0;
    for (double t : times) sum += t;
    stats.mean_ms = sum / static_cast<double>(times.size());
    if (repetitions == 1) stats.median_ms = stats.mean_ms = stats.min_ms;
    return stats;
}

}  // namespace spyflow
