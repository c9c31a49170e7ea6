#include "spyflow/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>

#include "spyflow/checkpoint.hpp"
#include "spyflow/dataset.hpp"
#include "spyflow/eval.hpp"
#include "spyflow/flow_io.hpp"
#include "spyflow/parallel.hpp"
#include "spyflow/pyramid.hpp"
#include "spyflow/spynet.hpp"
#include "spyflow/trainer.hpp"

namespace spyflow {
namespace {

std::string num(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string num(float v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string num(int v) { return std::to_string(v); }
std::string num(std::uint64_t v) { return std::to_string(v); }

template <typename Seq>
std::string list(const Seq& values) {
    std::string out = "[";
    bool first = true;
    for (const auto& v : values) {
        if (!first) out += ",";
        out += num(v);
        first = false;
    }
    return out + "]";
}

std::string in_quotes(const std::string& s) { return "\"" + s + "\""; }

Tensor upscale_nearest(const Tensor& image, int factor) {
    if (factor <= 1) return image;
    Tensor out({image.channels(), image.height() * factor, image.width() * factor});
    for (int c = 0; c < image.channels(); ++c) {
        for (int y = 0; y < out.height(); ++y) {
            for (int x = 0; x < out.width(); ++x) out.at(c, y, x) = image.at(c, y / factor, x / factor);
        }
    }
    return out;
}

std::filesystem::path sibling(const std::filesystem::path& path, const std::string& suffix) {
    return std::filesystem::path(path.string() + suffix);
}

// Flags shared by commands that normalize images.
struct NormalizationFlags {
    std::vector<float> rgb_mean{0.485f, 0.456f, 0.406f};
    std::vector<float> rgb_std{0.229f, 0.224f, 0.225f};

    void add(CLI::App* app) {
        app->add_option("--rgb_mean", rgb_mean, "Per-channel normalization mean")->expected(3)->capture_default_str();
        app->add_option("--rgb_std", rgb_std, "Per-channel normalization std")->expected(3)->capture_default_str();
    }
    std::array<float, 3> mean() const { return {rgb_mean[0], rgb_mean[1], rgb_mean[2]}; }
    std::array<float, 3> std_dev() const { return {rgb_std[0], rgb_std[1], rgb_std[2]}; }
};

struct Command {
    CLI::App* app = nullptr;
    std::function<int()> run;
};

Command add_synth(CLI::App& root, std::ostream& out) {
    auto opts = std::make_shared<SynthSpec>();
    auto dir = std::make_shared<std::string>();
    auto count = std::make_shared<int>(16);
    auto seed = std::make_shared<std::uint64_t>(1);

    CLI::App* app = root.add_subcommand("synth", "Generate a synthetic flow dataset (frames .png, flow .flo, manifest.txt)");
    app->add_option("--out", *dir, "Output directory")->required();
    app->add_option("--count", *count, "Number of samples")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--seed", *seed, "Base seed")->capture_default_str();
    app->add_option("--height", opts->height)->capture_default_str();
    app->add_option("--width", opts->width)->capture_default_str();
    app->add_option("--texture_sigma", opts->texture_sigma)->capture_default_str();
    app->add_option("--max_background_displacement", opts->max_background_displacement)->capture_default_str();
    app->add_option("--min_objects", opts->min_objects)->capture_default_str();
    app->add_option("--max_objects", opts->max_objects)->capture_default_str();
    app->add_option("--object_size_min", opts->object_size_min)->capture_default_str();
    app->add_option("--object_size_max", opts->object_size_max)->capture_default_str();
    app->add_option("--max_foreground_displacement", opts->max_foreground_displacement)->capture_default_str();
    app->add_option("--translate", opts->translate)->capture_default_str();
    app->add_option("--rotate", opts->rotate)->capture_default_str();
    app->add_option("--scale", opts->scale)->capture_default_str();

    auto run = [=, &out]() {
        const SynthSpec& spec = *opts;
        spec.validate();
        std::vector<Sample> samples(static_cast<std::size_t>(*count));
        parallel_for(samples.size(), [&](std::size_t i) {
            samples[i] = generate_sample(spec, *seed * 1000003ull + i);
        });
        const std::filesystem::path directory(*dir);
        write_dataset(samples, directory);

        RunManifest m{"synth", {}};
        m.add("out", in_quotes(*dir));
        m.add("count", num(*count));
        m.add("seed", num(*seed));
        m.add("height", num(spec.height));
        m.add("width", num(spec.width));
        m.add("texture_sigma", num(spec.texture_sigma));
        m.add("max_background_displacement", num(spec.max_background_displacement));
        m.add("min_objects", num(spec.min_objects));
        m.add("max_objects", num(spec.max_objects));
        m.add("object_size_min", num(spec.object_size_min));
        m.add("object_size_max", num(spec.object_size_max));
        m.add("max_foreground_displacement", num(spec.max_foreground_displacement));
        m.add("translate", spec.translate ? "true" : "false");
        m.add("rotate", spec.rotate ? "true" : "false");
        m.add("scale", spec.scale ? "true" : "false");
        m.write(directory / "run_manifest.txt");
        out << "wrote " << samples.size() << " samples to " << directory.string() << "\n";
        return 0;
    };
    return {app, run};
}

Command add_train(CLI::App& root, std::ostream& out) {
    struct State {
        std::string manifest, out_path, log_path, preset = "desk";
        int levels = 5;
        TrainConfig cfg;
        AugmentConfig aug;
        std::vector<double> scale_range{1.0, 2.0};
        std::vector<double> rotation_range_deg{-17.0, 17.0};
        NormalizationFlags norm;
        // Options that fall back to the preset when not given.
        std::vector<std::pair<CLI::Option*, std::function<void(const TrainConfig&)>>> preset_fields;
    };
    auto s = std::make_shared<State>();

    CLI::App* app = root.add_subcommand("train", "Train a pyramid coarse-to-fine, one level at a time");
    app->add_option("--manifest", s->manifest, "Dataset manifest (frame1 frame2 flow per line)")->required();
    app->add_option("--out", s->out_path,
                    "Final checkpoint; also writes <out>.level<k> per level and <out>.manifest")
        ->required();
    app->add_option("--log", s->log_path, "Progress records file (default: stdout)");
    app->add_option("--levels", s->levels, "Pyramid levels")->check(CLI::Range(1, 12))->capture_default_str();
    app->add_option("--preset", s->preset, "Base schedule: desk or full")
        ->check(CLI::IsMember({"desk", "full"}))
        ->capture_default_str();

    auto field = [&](const char* name, auto member, const char* help) {
        CLI::Option* opt = app->add_option(std::string("--") + name, s->cfg.*member, help)->capture_default_str();
        s->preset_fields.emplace_back(opt, [member, st = s.get()](const TrainConfig& p) { st->cfg.*member = p.*member; });
    };
    field("batch_size", &TrainConfig::batch_size, "Samples per step");
    field("iterations_per_epoch", &TrainConfig::iterations_per_epoch, "Steps per epoch");
    field("lr_initial", &TrainConfig::lr_initial, "Learning rate up to lr_switch_epoch");
    field("lr_final", &TrainConfig::lr_final, "Learning rate afterwards");
    field("lr_switch_epoch", &TrainConfig::lr_switch_epoch, "Last epoch at lr_initial");
    field("epochs", &TrainConfig::epochs, "Epochs per level");
    field("log_interval", &TrainConfig::log_interval, "Steps between progress records");
    app->add_option("--level_epochs", s->cfg.level_epochs, "Per-level epoch override, coarsest first");
    app->add_option("--seed", s->cfg.seed, "Training seed")->capture_default_str();

    app->add_option("--scale_range", s->scale_range, "Random scale range")->expected(2)->capture_default_str();
    app->add_option("--rotation_range_deg", s->rotation_range_deg, "Random rotation range (degrees)")
        ->expected(2)
        ->capture_default_str();
    app->add_option("--noise_sigma_max", s->aug.noise_sigma_max)->capture_default_str();
    app->add_option("--jitter_sigma", s->aug.jitter_sigma)->capture_default_str();
    app->add_option("--crop_height", s->aug.crop_height, "Finest-level crop height (0 = dataset)")
        ->capture_default_str();
    app->add_option("--crop_width", s->aug.crop_width, "Finest-level crop width (0 = dataset)")->capture_default_str();
    s->norm.add(app);

    auto run = [s, &out]() {
        if (s->preset == "full") {
            const TrainConfig full = TrainConfig::full_schedule(s->cfg.epochs);
            for (auto& [opt, apply] : s->preset_fields) {
                if (opt->count() == 0) apply(full);
            }
        }
        TrainConfig& cfg = s->cfg;
        AugmentConfig& aug = s->aug;
        aug.scale_range = {s->scale_range[0], s->scale_range[1]};
        aug.rotation_range_deg = {s->rotation_range_deg[0], s->rotation_range_deg[1]};
        aug.rgb_mean = s->norm.mean();
        aug.rgb_std = s->norm.std_dev();
        cfg.validate();
        aug.validate();

        const std::vector<Sample> dataset = load_dataset(s->manifest);
        std::ofstream log_file;
        if (!s->log_path.empty()) {
            log_file.open(s->log_path, std::ios::trunc);
            if (!log_file) throw FormatError("cannot open log " + s->log_path);
        }
        std::ostream& log = s->log_path.empty() ? out : log_file;

        RunManifest m{"train", {}};
        m.add("manifest", in_quotes(s->manifest));
        m.add("out", in_quotes(s->out_path));
        m.add("levels", num(s->levels));
        m.add("batch_size", num(cfg.batch_size));
        m.add("iterations_per_epoch", num(cfg.iterations_per_epoch));
        m.add("lr_initial", num(cfg.lr_initial));
        m.add("lr_final", num(cfg.lr_final));
        m.add("lr_switch_epoch", num(cfg.lr_switch_epoch));
        m.add("epochs", num(cfg.epochs));
        if (!cfg.level_epochs.empty()) m.add("level_epochs", list(cfg.level_epochs));
        m.add("log_interval", num(cfg.log_interval));
        m.add("seed", num(cfg.seed));
        m.add("scale_range", list(aug.scale_range));
        m.add("rotation_range_deg", list(aug.rotation_range_deg));
        m.add("noise_sigma_max", num(aug.noise_sigma_max));
        m.add("jitter_sigma", num(aug.jitter_sigma));
        m.add("crop_height", num(aug.crop_height));
        m.add("crop_width", num(aug.crop_width));
        m.add("rgb_mean", list(aug.rgb_mean));
        m.add("rgb_std", list(aug.rgb_std));

        const std::filesystem::path out_path(s->out_path);
        const PyramidModel model = train_pyramid(
            dataset, cfg, aug, s->levels,
            [&](const TrainRecord& r) {
                log << "epoch=" << r.epoch << " level=" << r.level << " step=" << r.step << " loss=" << num(r.loss)
                    << " lr=" << num(r.lr) << "\n";
                log.flush();
            },
            [&](const PyramidModel& partial) {
                save_checkpoint(partial, sibling(out_path, ".level" + std::to_string(partial.networks.size() - 1)));
            });
        save_checkpoint(model, out_path);
        m.write(sibling(out_path, ".manifest"));
        return 0;
    };
    return {app, run};
}

Command add_infer(CLI::App& root, std::ostream& out) {
    struct State {
        std::string checkpoint, frame1, frame2, out_path, color;
        int levels = 0;
        bool strict = false;
        NormalizationFlags norm;
    };
    auto s = std::make_shared<State>();
    CLI::App* app = root.add_subcommand("infer", "Estimate flow for an image pair; writes .flo and <out>.manifest");
    app->add_option("--checkpoint", s->checkpoint)->required();
    app->add_option("--frame1", s->frame1)->required();
    app->add_option("--frame2", s->frame2)->required();
    app->add_option("--out", s->out_path, "Output .flo")->required();
    app->add_option("--color", s->color, "Optional flow colour image (.png/.ppm)");
    app->add_option("--levels", s->levels, "Inference levels (0 = stored networks; extra levels reuse the last)")
        ->capture_default_str();
    app->add_flag("--strict", s->strict, "Reject sizes not divisible by 2^(levels-1) instead of resizing");
    s->norm.add(app);

    auto run = [s, &out]() {
        PyramidModel model = load_checkpoint(s->checkpoint);
        model.inference_levels = s->levels;
        model.validate();
        Tensor f1 = read_image(s->frame1);
        Tensor f2 = read_image(s->frame2);
        require_same_resolution(f1, f2, "infer frames");
        const int h = f1.height();
        const int w = f1.width();
        const int factor = 1 << (model.levels() - 1);
        const int ph = (h + factor - 1) / factor * factor;
        const int pw = (w + factor - 1) / factor * factor;
        const bool resized = ph != h || pw != w;
        if (resized) {
            if (s->strict) {
                throw ShapeError("image size " + resolution_string(h, w) + " is not divisible by " +
                                 std::to_string(factor) + "; resize to " + resolution_string(ph, pw));
            }
            f1 = resize_bilinear(f1, ph, pw);
            f2 = resize_bilinear(f2, ph, pw);
        }
        f1 = normalize_image(f1, s->norm.mean(), s->norm.std_dev());
        f2 = normalize_image(f2, s->norm.mean(), s->norm.std_dev());
        FlowField flow = infer(model, f1, f2);
        if (resized) flow = resize_flow(flow, h, w);
        write_flo(flow, s->out_path);
        if (!s->color.empty()) write_image(flow_to_color(flow), s->color);

        RunManifest m{"infer", {}};
        m.add("checkpoint", in_quotes(s->checkpoint));
        m.add("frame1", in_quotes(s->frame1));
        m.add("frame2", in_quotes(s->frame2));
        m.add("out", in_quotes(s->out_path));
        if (!s->color.empty()) m.add("color", in_quotes(s->color));
        m.add("levels", num(s->levels));
        m.add("strict", s->strict ? "true" : "false");
        m.add("rgb_mean", list(s->norm.rgb_mean));
        m.add("rgb_std", list(s->norm.rgb_std));
        m.write(sibling(s->out_path, ".manifest"));
        out << "flow " << resolution_string(flow.height(), flow.width()) << " -> " << s->out_path << "\n";
        return 0;
    };
    return {app, run};
}

Command add_eval(CLI::App& root, std::ostream& out) {
    struct State {
        std::string pred, gt, report;
        double threshold = 1.0;
    };
    auto s = std::make_shared<State>();
    CLI::App* app = root.add_subcommand("eval", "Average and segmented endpoint error of a predicted .flo");
    app->add_option("--pred", s->pred)->required();
    app->add_option("--gt", s->gt)->required();
    app->add_option("--boundary_threshold", s->threshold, "Motion boundary threshold (px/px)")->capture_default_str();
    app->add_option("--report", s->report, "Write key=value records here (plus <report>.manifest)");

    auto run = [s, &out]() {
        const FlowField pred = read_flo(s->pred);
        const FlowField gt = read_flo(s->gt);
        const EvalReport report = segmented_report(pred, gt, {s->threshold});
        out << report.to_table();
        if (s->report.empty()) {
            out << report.to_records();
        } else {
            std::ofstream f(s->report, std::ios::trunc);
            if (!f) throw FormatError("cannot open " + s->report + " for writing");
            f << report.to_records();
            RunManifest m{"eval", {}};
            m.add("pred", in_quotes(s->pred));
            m.add("gt", in_quotes(s->gt));
            m.add("boundary_threshold", num(s->threshold));
            m.add("report", in_quotes(s->report));
            m.write(sibling(s->report, ".manifest"));
        }
        return 0;
    };
    return {app, run};
}

Command add_viz_flow(CLI::App& root, std::ostream& out) {
    struct State {
        std::string flow, out_path;
        double max_mag = 0.0;
    };
    auto s = std::make_shared<State>();
    CLI::App* app = root.add_subcommand("viz-flow", "Colour-code a .flo file");
    app->add_option("--flow", s->flow)->required();
    app->add_option("--out", s->out_path, "Output image (.png/.ppm)")->required();
    app->add_option("--max_mag", s->max_mag, "Saturation scale (0 = field maximum)")->capture_default_str();
    auto run = [s, &out]() {
        const FlowField flow = read_flo(s->flow);
        std::optional<float> scale;
        if (s->max_mag > 0.0) scale = static_cast<float>(s->max_mag);
        write_image(flow_to_color(flow, scale), s->out_path);
        RunManifest m{"viz-flow", {}};
        m.add("flow", in_quotes(s->flow));
        m.add("out", in_quotes(s->out_path));
        m.add("max_mag", num(s->max_mag));
        m.write(sibling(s->out_path, ".manifest"));
        out << "wrote " << s->out_path << "\n";
        return 0;
    };
    return {app, run};
}

Command add_viz_filters(CLI::App& root, std::ostream& out) {
    struct State {
        std::string checkpoint, out_path;
        int level = -1;
        int scale = 8;
    };
    auto s = std::make_shared<State>();
    CLI::App* app = root.add_subcommand("viz-filters", "Render the first-layer filters of one level network");
    app->add_option("--checkpoint", s->checkpoint)->required();
    app->add_option("--out", s->out_path, "Output image (.png/.ppm)")->required();
    app->add_option("--level", s->level, "Level index (-1 = finest)")->capture_default_str();
    app->add_option("--scale", s->scale, "Nearest-neighbour upscaling")->check(CLI::Range(1, 64))->capture_default_str();
    auto run = [s, &out]() {
        const PyramidModel model = load_checkpoint(s->checkpoint);
        const int n = static_cast<int>(model.networks.size());
        const int level = s->level < 0 ? n - 1 : s->level;
        if (level >= n) {
            throw std::invalid_argument("level " + std::to_string(level) + " not in checkpoint with " +
                                        std::to_string(n) + " levels");
        }
        write_image(upscale_nearest(first_layer_filters(model.networks[static_cast<std::size_t>(level)]), s->scale),
                    s->out_path);
        RunManifest m{"viz-filters", {}};
        m.add("checkpoint", in_quotes(s->checkpoint));
        m.add("out", in_quotes(s->out_path));
        m.add("level", num(s->level));
        m.add("scale", num(s->scale));
        m.write(sibling(s->out_path, ".manifest"));
        out << "wrote " << s->out_path << "\n";
        return 0;
    };
    return {app, run};
}

// Replaces `--config FILE` with the file's entries as option tokens, skipping
// options already present on the command line and keys the command lacks.
void merge_config(CLI::App& app, std::vector<std::string>& argv) {
    if (argv.size() < 2) return;
    CLI::App* sub = app.get_subcommand_no_throw(argv[1]);
    if (sub == nullptr) return;
    std::vector<std::string> config_files;
    std::vector<std::string> kept;
    for (std::size_t i = 0; i < argv.size(); ++i) {
        const std::string& a = argv[i];
        if (a == "--config") {
            if (i + 1 >= argv.size()) throw std::invalid_argument("--config requires a file");
            config_files.push_back(argv[++i]);
        } else if (a.rfind("--config=", 0) == 0) {
            config_files.push_back(a.substr(9));
        } else {
            kept.push_back(a);
        }
    }
    auto given = [&](const std::string& name) {
        for (const auto& a : kept) {
            if (a == "--" + name || a.rfind("--" + name + "=", 0) == 0) return true;
        }
        return false;
    };
    for (const auto& path : config_files) {
        std::ifstream f(path);
        if (!f) throw std::invalid_argument("cannot open config file " + path);
        for (const CLI::ConfigItem& item : CLI::ConfigINI().from_config(f)) {
            if (!item.parents.empty() || item.name == "config" || given(item.name)) continue;
            if (sub->get_option_no_throw("--" + item.name) == nullptr) continue;
            if (item.inputs.size() == 1) {
                kept.push_back("--" + item.name + "=" + item.inputs.front());
            } else {
                kept.push_back("--" + item.name);
                kept.insert(kept.end(), item.inputs.begin(), item.inputs.end());
            }
        }
    }
    argv = std::move(kept);
}

}  // namespace

std::string RunManifest::to_string() const {
    std::ostringstream os;
    os << "# spyflow run manifest\n";
    os << "tool_version=\"" << kToolVersion << "\"\n";
    os << "command=\"" << command << "\"\n";
    for (const auto& [k, v] : entries) os << k << "=" << v << "\n";
    return os.str();
}

void RunManifest::write(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw FormatError("cannot open " + path.string() + " for writing");
    f << to_string();
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return dispatch(args, out, err);
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"spyflow: coarse-to-fine residual optical flow"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    std::vector<Command> commands{add_synth(app, out),  add_infer(app, out),     add_train(app, out),
                                  add_eval(app, out),   add_viz_flow(app, out),  add_viz_filters(app, out)};
    std::string config_path;  // consumed by merge_config; registered for --help
    for (auto& c : commands) {
        c.app->add_option("--config", config_path, "key=value file supplying any option (a run manifest works); command line wins");
    }

    std::vector<std::string> argv{"spyflow"};
    try {
        argv.insert(argv.end(), args.begin(), args.end());
        merge_config(app, argv);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    std::vector<const char*> ptrs;
    for (const auto& a : argv) ptrs.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(ptrs.size()), ptrs.data());
    } catch (const CLI::CallForHelp&) {
        const auto subs = app.get_subcommands();
        out << (subs.empty() ? app.help() : subs.front()->help());
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return 1;
    }

    for (auto& c : commands) {
        if (!c.app->parsed()) continue;
        try {
            return c.run();
        } catch (const std::exception& e) {
            err << "error: " << e.what() << "\n";
            return 2;
        }
    }
    return 1;
}

}  // namespace spyflow
