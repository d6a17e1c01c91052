// mrsr: command-line front end for the three training phases, inference,
// evaluation and plotting.
//
// Exit codes: 0 ok, 2 invalid input (bad data, paths, arguments), 3 missing
// prerequisite checkpoint, 4 configuration error, 1 anything else.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mrsr/mrsr.hpp"

namespace {

using namespace mrsr;

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;
constexpr int kExitDependency = 3;
constexpr int kExitConfig = 4;

struct GlobalFlags {
    std::string config_file;
    std::string preset = "desk";
    std::string out;
    std::string seed;
    std::vector<std::string> sets;  // key=value overrides
};

struct TrainFlags {
    std::string train_data, val_data, test_data;
    std::string scale, epochs;
    std::string lambda_vit, lambda_str, lambda_tex;
    std::string vit_checkpoint, ae_checkpoint;
};

/// Errors tagged with the command-line flag that supplied the offending value.
class FlagError : public Error {
public:
    FlagError(const std::string& flag, const std::string& msg) : Error(flag + ": " + msg) {}
};

void apply(train::RunConfig& c, const std::string& key, const std::string& value) {
    if (!value.empty()) c.set(key, value);
}

train::RunConfig build_config(const GlobalFlags& g, const TrainFlags& t, const std::string& epochs_key) {
    train::RunConfig c = train::RunConfig::preset(g.preset);
    if (!g.config_file.empty()) c.load_file(g.config_file);
    for (const std::string& kv : g.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    apply(c, "out", g.out);
    apply(c, "seed", g.seed);
    apply(c, "train_data", t.train_data);
    apply(c, "val_data", t.val_data);
    apply(c, "test_data", t.test_data);
    apply(c, "scale", t.scale);
    apply(c, "lambda_vit", t.lambda_vit);
    apply(c, "lambda_str", t.lambda_str);
    apply(c, "lambda_tex", t.lambda_tex);
    apply(c, "vit_checkpoint", t.vit_checkpoint);
    apply(c, "ae_checkpoint", t.ae_checkpoint);
    if (!epochs_key.empty()) apply(c, epochs_key, t.epochs);
    return c;
}

/// Loads the splits, naming the flag/key of any split that fails.
train::Datasets load_splits(const train::RunConfig& c) {
    const std::size_t size = c.positive("image_size");
    const int classes = static_cast<int>(c.positive("classes"));
    const std::uint64_t seed = c.count("seed");
    const std::pair<const char*, const char*> names[] = {
        {"train_data", "--train-data"}, {"val_data", "--val-data"}, {"test_data", "--test-data"}};
    std::vector<std::vector<train::Sample>> splits;
    std::uint64_t salt = 1;
    for (const auto& [key, flag] : names) {
        try {
            splits.push_back(train::to_samples(train::load_dataset_spec(c.str(key), size, classes, seed * 3 + salt), size));
        } catch (const Error& e) {
            throw FlagError(std::string(flag) + " (" + key + ")", e.what());
        }
        ++salt;
    }
    if (splits[0].empty()) throw FlagError("--train-data (train_data)", "training split is empty");
    return {std::move(splits[0]), std::move(splits[1]), std::move(splits[2])};
}

int run_training(train::Phase phase, const train::RunConfig& c) {
    const train::Datasets data = load_splits(c);
    std::cout << train::phase_name(phase) << ": " << data.train.size() << " train / " << data.val.size() << " val / "
              << data.test.size() << " test images, seed " << c.str("seed") << ", preset " << c.str("preset") << '\n';
    train::PhaseOptions opts;
    opts.on_epoch = [](const train::EpochRecord& e) {
        std::printf("epoch %zu  train %.6g  val %.6g  test %.6g  (%.2f s)\n", e.epoch, e.train_loss, e.val_loss,
                    e.test_loss, e.seconds);
        std::fflush(stdout);
    };
    const train::TrainRunRecord r = train::run_phase(phase, c, data, opts);
    const std::filesystem::path out(c.str("out"));
    const std::string stem = train::artifact_name(phase);
    std::cout << "checkpoint " << io::checkpoint_manifest(r.checkpoint) << '\n'
              << "losses     " << (out / (stem + "_loss.csv")).string() << '\n'
              << "config     " << (out / (stem + "_config.txt")).string() << '\n';
    return kExitOk;
}

int parse_scale(const std::string& s) {
    int m = 0;
    try {
        std::size_t used = 0;
        m = std::stoi(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
        throw ConfigError("--scale expects an integer power-of-two, got '" + s + "'");
    }
    require_power_of_two(m);
    return m;
}

/// PNG samples scaled to [0,1] by the bit depth's full range.
Image read_unit_png(const std::string& path) {
    io::PngData png = io::read_png(path);
    const double full = png.bit_depth == 16 ? 65535.0 : 255.0;
    for (double& v : png.image.pixels) v /= full;
    return png.image;
}

int cmd_upscale(const std::string& input, const std::string& checkpoint, const std::string& scale_s,
                const std::string& output) {
    const int m = parse_scale(scale_s);
    if (!io::checkpoint_exists(checkpoint)) {
        throw DependencyError("generator checkpoint not found: " + io::checkpoint_manifest(checkpoint));
    }
    train::LoadedGenerator g = train::load_generator(checkpoint);
    if (g.generator.config.scale != m) {
        throw ConfigError("checkpoint " + checkpoint + " was trained for scale " + std::to_string(g.generator.config.scale) +
                          ", requested --scale " + std::to_string(m));
    }
    const Image lr = read_unit_png(input);
    const Image hr = sr::sr_generate(g.generator, lr);
    io::write_png(output, hr, 16);
    std::cout << "wrote " << output << " (" << hr.width << "x" << hr.height << ")\n";
    return kExitOk;
}

int cmd_evaluate(const std::string& dir, const std::string& scale_s, const std::string& method,
                 const std::string& checkpoint, bool baseline, const std::string& output) {
    const int m = parse_scale(scale_s);
    if (!std::filesystem::is_directory(dir)) throw FlagError("--input", "not a directory: " + dir);
    SliceSet set;
    try {
        set = load_png_directory(dir);
    } catch (const Error& e) {
        throw FlagError("--input", e.what());
    }
    std::string how = method;
    if (how.empty()) how = checkpoint.empty() ? "bicubic" : "sr";
    if (how != "sr" && how != "bicubic" && how != "identity") {
        throw ConfigError("--method must be sr, bicubic or identity, got '" + how + "'");
    }
    train::LoadedGenerator g;
    if (how == "sr") {
        if (checkpoint.empty()) throw ConfigError("--method sr needs --checkpoint");
        if (!io::checkpoint_exists(checkpoint)) {
            throw DependencyError("generator checkpoint not found: " + io::checkpoint_manifest(checkpoint));
        }
        g = train::load_generator(checkpoint);
        if (g.generator.config.scale != m) {
            throw ConfigError("checkpoint scale " + std::to_string(g.generator.config.scale) + " differs from --scale " +
                              std::to_string(m));
        }
    }
    std::vector<MetricRecord> rows, base;
    const auto um = static_cast<std::size_t>(m);
    for (std::size_t i = 0; i < set.slices.size(); ++i) {
        const Image& full = set.slices[i];
        if (full.height < um || full.width < um) throw FlagError("--input", "slice smaller than the scale factor");
        // Crop to a multiple of m so the recovered image has the reference's extents.
        const Image hr = crop(full, 0, 0, um * (full.height / um), um * (full.width / um));
        const Image lr = degrade(hr, m);
        const std::string id = "slice" + std::to_string(i);
        Image rec;
        if (how == "identity") rec = hr;
        else if (how == "bicubic") rec = bicubic_resize(lr, hr.height, hr.width);
        else rec = sr::sr_generate(g.generator, lr);
        rows.push_back(evaluate_pair(hr, rec, m, id));
        if (baseline) base.push_back(evaluate_pair(hr, bicubic_resize(lr, hr.height, hr.width), m, id));
    }
    rows.push_back(mean_record(rows));
    if (baseline) base.push_back(mean_record(base));
    write_metrics_csv(rows, output, base);
    const MetricRecord& mean = rows.back();
    std::cout << how << " x" << m << " over " << set.slices.size() << " slices: PSNR " << format_metric(mean.psnr)
              << " dB, SSIM " << format_metric(mean.ssim) << ", NMSE " << format_metric(mean.nmse) << '\n';
    if (baseline) {
        const MetricRecord& b = base.back();
        std::cout << "bicubic baseline: PSNR " << format_metric(b.psnr) << " dB, SSIM " << format_metric(b.ssim)
                  << ", NMSE " << format_metric(b.nmse) << '\n';
    }
    std::cout << "wrote " << output << '\n';
    return kExitOk;
}

int cmd_plot(const std::string& input, const std::string& output, const std::string& columns_s,
             const std::string& title, std::size_t width, std::size_t height) {
    std::vector<std::string> columns;
    std::stringstream ss(columns_s);
    std::string col;
    while (std::getline(ss, col, ','))
        if (!col.empty()) columns.push_back(col);
    const plot::Table table = plot::read_csv(input);
    plot::ChartOptions opt;
    opt.width = width;
    opt.height = height;
    opt.title = title.empty() ? std::filesystem::path(input).stem().string() : title;
    opt.x_label = plot::x_axis_label(table);
    plot::write_chart(output, plot::render_chart(plot::table_series(table, columns), opt));
    std::cout << "wrote " << output << '\n';
    return kExitOk;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const DependencyError*>(&e)) return kExitDependency;
    if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
    if (dynamic_cast<const Error*>(&e)) return kExitInput;
    return kExitInternal;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MRI super-resolution with ViT and disentangled-feature losses"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalFlags g;
    app.add_option("--config", g.config_file, "key = value config file (applied over the preset)");
    app.add_option("--preset", g.preset, "paper or desk")->check(CLI::IsMember({"paper", "desk"}));
    app.add_option("--out", g.out, "output directory");
    app.add_option("--seed", g.seed, "random seed");
    app.add_option("--set", g.sets, "override any config key (key=value, repeatable)");

    TrainFlags t;
    auto add_train_flags = [&t](CLI::App* sub, bool sr_flags) {
        sub->add_option("--train-data", t.train_data, "synthetic:N, or comma-separated manifests / PNG directories");
        sub->add_option("--val-data", t.val_data, "validation split (same forms, empty for none)");
        sub->add_option("--test-data", t.test_data, "test split (same forms, empty for none)");
        sub->add_option("--epochs", t.epochs, "number of epochs");
        if (sr_flags) {
            sub->add_option("--scale", t.scale, "upscaling factor m (power of two)");
            sub->add_option("--lambda-vit", t.lambda_vit, "weight of the ViT feature loss");
            sub->add_option("--lambda-str", t.lambda_str, "weight of the structure loss");
            sub->add_option("--lambda-tex", t.lambda_tex, "weight of the texture loss");
            sub->add_option("--vit-checkpoint", t.vit_checkpoint, "pretext checkpoint prefix (default <out>/vit)");
            sub->add_option("--ae-checkpoint", t.ae_checkpoint, "autoencoder checkpoint prefix (default <out>/ae)");
        }
    };

    auto* pretrain = app.add_subcommand("pretrain-vit", "finetune the ViT on the organ-classification pretext task");
    add_train_flags(pretrain, false);
    auto* disent = app.add_subcommand("train-disentangle", "train the structure/texture autoencoder");
    add_train_flags(disent, false);
    auto* train_sr = app.add_subcommand("train-sr", "train the super-resolution generator");
    add_train_flags(train_sr, true);

    std::string up_in, up_ckpt, up_scale = "2", up_out;
    auto* upscale = app.add_subcommand("upscale", "upscale one PNG image with a trained generator");
    upscale->add_option("--input", up_in, "low-resolution PNG")->required();
    upscale->add_option("--checkpoint", up_ckpt, "generator checkpoint prefix")->required();
    upscale->add_option("--scale", up_scale, "upscaling factor m");
    upscale->add_option("--output", up_out, "output PNG (16-bit)")->required();

    std::string ev_in, ev_scale = "2", ev_method, ev_ckpt, ev_out = "metrics.csv";
    bool ev_baseline = false;
    auto* evaluate = app.add_subcommand("evaluate", "degrade HR images, recover them and report PSNR/SSIM/NMSE");
    evaluate->add_option("--input", ev_in, "directory of HR PNG images")->required();
    evaluate->add_option("--scale", ev_scale, "degradation factor m");
    evaluate->add_option("--method", ev_method, "sr, bicubic or identity (default: sr with --checkpoint, else bicubic)");
    evaluate->add_option("--checkpoint", ev_ckpt, "generator checkpoint prefix");
    evaluate->add_flag("--baseline", ev_baseline, "add bicubic baseline columns");
    evaluate->add_option("--output", ev_out, "metrics CSV");

    std::string pl_in, pl_out, pl_cols, pl_title;
    std::size_t pl_w = 640, pl_h = 400;
    auto* plot_cmd = app.add_subcommand("plot", "render a loss or metrics CSV as a PNG line chart");
    plot_cmd->add_option("--input", pl_in, "CSV file")->required();
    plot_cmd->add_option("--output", pl_out, "PNG file")->required();
    plot_cmd->add_option("--columns", pl_cols, "comma-separated columns to plot (default: all numeric)");
    plot_cmd->add_option("--title", pl_title, "chart title");
    plot_cmd->add_option("--width", pl_w, "pixels");
    plot_cmd->add_option("--height", pl_h, "pixels");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInput;
    }

    try {
        if (pretrain->parsed()) return run_training(train::Phase::pretext, build_config(g, t, "pretext_epochs"));
        if (disent->parsed()) return run_training(train::Phase::disentangle, build_config(g, t, "disent_epochs"));
        if (train_sr->parsed()) return run_training(train::Phase::sr, build_config(g, t, "sr_epochs"));
        if (upscale->parsed()) return cmd_upscale(up_in, up_ckpt, up_scale, up_out);
        if (evaluate->parsed()) return cmd_evaluate(ev_in, ev_scale, ev_method, ev_ckpt, ev_baseline, ev_out);
        if (plot_cmd->parsed()) return cmd_plot(pl_in, pl_out, pl_cols, pl_title, pl_w, pl_h);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return kExitInternal;
}
