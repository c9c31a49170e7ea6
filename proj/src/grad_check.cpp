#include "spyflow/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace spyflow {
namespace {

double relative(double a, double b, double scale) {
    const double diff = std::abs(a - b);
    if (diff == 0.0) return 0.0;
    return diff / std::max(scale, 1e-300);
}

}  // namespace

double GradCheckReport::worst_error() const {
    double worst = 0.0;
    for (const auto& b : blocks) worst = std::max({worst, b.max_relative_error, b.directional_relative_error});
    return worst;
}

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << (passed ? "PASS" : "FAIL") << " tolerance=" << tolerance;
    for (const auto& b : blocks) {
        os << "\n  " << b.name << ": probes=" << b.probes << " discarded=" << b.discarded << " max_rel=" << b.max_relative_error
           << " dir_rel=" << b.directional_relative_error;
        if (!b.failure.empty()) os << " (" << b.failure << ")";
    }
    return os.str();
}

GradCheckReport grad_check(const DifferentiableMap& map, const std::vector<double>& input, double tolerance,
                           const GradCheckOptions& options) {
    GradCheckReport report;
    report.tolerance = tolerance;

    std::vector<ParamBlock> blocks = map.blocks;
    if (blocks.empty()) blocks.push_back({"input", 0, input.size()});

    const std::vector<double> analytic = map.gradient(input);
    const double h = options.perturbation;
    std::mt19937_64 rng(options.seed);
    std::vector<double> x = input;

    auto evaluate = [&](const std::vector<double>& point, BlockResult& block, const std::string& where) {
        const double f = map.value(point);
        if (!std::isfinite(f) && block.failure.empty()) block.failure = "non-finite output at " + where;
        return f;
    };

    for (const auto& spec : blocks) {
        BlockResult block;
        block.name = spec.name;

        for (std::size_t k = 0; k < spec.length; ++k) {
            if (!std::isfinite(analytic[spec.offset + k])) {
                block.failure = "non-finite analytic gradient at " + spec.name + "[" + std::to_string(k) + "]";
                break;
            }
        }

        std::vector<std::size_t> probes;
        for (std::size_t k = 0; k < spec.length; ++k) {
            if (!options.skip || !options.skip(spec.offset + k)) probes.push_back(k);
        }
        if (options.max_probes_per_block > 0 && probes.size() > options.max_probes_per_block) {
            std::shuffle(probes.begin(), probes.end(), rng);
            probes.resize(options.max_probes_per_block);
            std::sort(probes.begin(), probes.end());
        }

        std::vector<double> numeric_values;
        std::vector<double> analytic_values;
        std::vector<double> xm = input;
        for (std::size_t k : probes) {
            const std::size_t idx = spec.offset + k;
            const double saved = x[idx];
            x[idx] = saved + h;
            xm[idx] = saved - h;
            const bool kink = options.crosses_kink && options.crosses_kink(x, xm);
            double fp = 0.0, fm = 0.0;
            if (!kink) {
                fp = evaluate(x, block, spec.name + "[" + std::to_string(k) + "]+h");
                fm = evaluate(xm, block, spec.name + "[" + std::to_string(k) + "]-h");
            }
            x[idx] = saved;
            xm[idx] = saved;
            if (kink) {
                ++block.discarded;
                continue;
            }
            numeric_values.push_back((fp - fm) / (2.0 * h));
            analytic_values.push_back(analytic[idx]);
        }
        block.probes = numeric_values.size();
        if (block.probes == 0 && !probes.empty() && block.failure.empty()) {
            block.failure = "every probe crossed a kink";
        }

        double scale = 0.0;
        for (std::size_t i = 0; i < numeric_values.size(); ++i) {
            scale = std::max({scale, std::abs(numeric_values[i]), std::abs(analytic_values[i])});
        }
        for (std::size_t i = 0; i < numeric_values.size(); ++i) {
            block.max_relative_error =
                std::max(block.max_relative_error, relative(analytic_values[i], numeric_values[i], scale));
        }

        if (options.directional && spec.length > 0) {
            std::normal_distribution<double> normal(0.0, 1.0);
            std::vector<double> direction(spec.length);
            bool measured = false;
            for (int attempt = 0; attempt < 8 && !measured; ++attempt) {
                for (double& d : direction) d = normal(rng);
                if (options.skip) {
                    for (std::size_t k = 0; k < spec.length; ++k) {
                        if (options.skip(spec.offset + k)) direction[k] = 0.0;
                    }
                }
                const double norm =
                    std::sqrt(std::inner_product(direction.begin(), direction.end(), direction.begin(), 0.0));
                if (norm == 0.0) break;
                for (double& d : direction) d /= norm;
                std::vector<double> xp = input;
                std::vector<double> xn = input;
                for (std::size_t k = 0; k < spec.length; ++k) {
                    xp[spec.offset + k] += h * direction[k];
                    xn[spec.offset + k] -= h * direction[k];
                }
                if (options.crosses_kink && options.crosses_kink(xp, xn)) {
                    ++block.discarded;
                    continue;
                }
                double analytic_dir = 0.0;
                for (std::size_t k = 0; k < spec.length; ++k) analytic_dir += analytic[spec.offset + k] * direction[k];
                const double fp = evaluate(xp, block, spec.name + " along direction +h");
                const double fm = evaluate(xn, block, spec.name + " along direction -h");
                const double numeric_dir = (fp - fm) / (2.0 * h);
                block.directional_relative_error = relative(
                    analytic_dir, numeric_dir, std::max(std::abs(analytic_dir), std::abs(numeric_dir)));
                measured = true;
            }
            if (!measured && block.discarded > 0 && block.failure.empty()) {
                block.failure = "every directional probe crossed a kink";
            }
        }

        block.passed = block.failure.empty() && block.max_relative_error < tolerance &&
                       block.directional_relative_error < tolerance;
        if (!block.passed) report.passed = false;
        report.blocks.push_back(std::move(block));
    }
    return report;
}

}  // namespace spyflow
