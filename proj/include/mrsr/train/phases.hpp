#pragma once

// Training orchestration for the three phases, run in order:
//
//   pretext      ViT finetuned to classify the slice's organ tag (dice + CE)
//   disentangle  swapped autoencoder (rec + 0.7 adv + 0.7 swap)
//   sr           generator on the composite loss with both extractors frozen
//
// Each epoch is one shuffled pass over the training split followed by an
// evaluation of the same objective on the validation and test splits. A phase
// writes <out>/<name>.{bin,manifest}, <name>_loss.csv, <name>_timing.csv and
// <name>_config.txt, where name is vit, ae or sr.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "mrsr/core/image.hpp"
#include "mrsr/data/loader.hpp"
#include "mrsr/data/phantom.hpp"
#include "mrsr/data/pipeline.hpp"
#include "mrsr/disentangle/training.hpp"
#include "mrsr/io/checkpoint.hpp"
#include "mrsr/metrics/resize.hpp"
#include "mrsr/sr/training.hpp"
#include "mrsr/train/config.hpp"
#include "mrsr/train/record.hpp"

namespace mrsr::train {

enum class Phase { pretext, disentangle, sr };

inline Phase parse_phase(const std::string& s) {
    if (s == "pretext") return Phase::pretext;
    if (s == "disentangle") return Phase::disentangle;
    if (s == "sr") return Phase::sr;
    throw ConfigError("unknown phase '" + s + "' (expected pretext, disentangle or sr)");
}

inline std::string phase_name(Phase p) {
    switch (p) {
        case Phase::pretext: return "pretext";
        case Phase::disentangle: return "disentangle";
        default: return "sr";
    }
}

/// File stem of a phase's outputs.
inline std::string artifact_name(Phase p) {
    switch (p) {
        case Phase::pretext: return "vit";
        case Phase::disentangle: return "ae";
        default: return "sr";
    }
}

/// One labelled slice.
struct Sample {
    Image image;
    int label = 0;
};

struct Datasets {
    std::vector<Sample> train, val, test;
};

/// Flattens slice sets into samples of extent `size` x `size` (bicubic resize when needed).
inline std::vector<Sample> to_samples(const std::vector<SliceSet>& sets, std::size_t size) {
    std::vector<Sample> out;
    for (const SliceSet& s : sets) {
        for (const Image& img : s.slices) {
            Image r = (img.height == size && img.width == size) ? img : bicubic_resize(img, size, size);
            out.push_back({std::move(r), s.label});
        }
    }
    return out;
}

/// "synthetic:N" (N labelled phantoms), a comma-separated list of manifest
/// files / PNG directories, or "" for an empty split.
inline std::vector<SliceSet> load_dataset_spec(const std::string& spec, std::size_t size, int classes,
                                               std::uint64_t seed) {
    if (spec.empty()) return {};
    if (spec.rfind("synthetic:", 0) == 0) {
        const std::string n = spec.substr(10);
        std::size_t used = 0;
        std::size_t count = 0;
        try {
            count = std::stoull(n, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (n.empty() || used != n.size()) throw DataError("dataset '" + spec + "': expected synthetic:<count>");
        return synth_dataset(seed, count, size, classes);
    }
    std::vector<SliceSet> sets;
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (!part.empty()) sets.push_back(load_slices(part));
    }
    return sets;
}

/// Loads the three splits named in the config. Synthetic splits draw from
/// disjoint seeds derived from the run seed.
inline Datasets load_datasets(const RunConfig& c) {
    const std::size_t size = c.positive("image_size");
    const int classes = static_cast<int>(c.positive("classes"));
    const std::uint64_t seed = c.count("seed");
    Datasets d;
    d.train = to_samples(load_dataset_spec(c.str("train_data"), size, classes, seed * 3 + 1), size);
    d.val = to_samples(load_dataset_spec(c.str("val_data"), size, classes, seed * 3 + 2), size);
    d.test = to_samples(load_dataset_spec(c.str("test_data"), size, classes, seed * 3 + 3), size);
    if (d.train.empty()) throw EmptyDatasetError("training split is empty (train_data = '" + c.str("train_data") + "')");
    return d;
}

/// Shuffled index batches covering every sample once.
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < n; i += batch) {
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch)));
    }
    return out;
}

inline Tensor image_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx) {
    std::vector<Image> imgs;
    imgs.reserve(idx.size());
    for (std::size_t i : idx) imgs.push_back(samples[i].image);
    return to_batch(imgs);
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

constexpr double kNoValue = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------------------
// Checkpoint metadata: the full run config, so models rebuild without it.

inline std::map<std::string, std::string> config_meta(const RunConfig& c, Phase p) {
    std::map<std::string, std::string> meta{{"phase", phase_name(p)}};
    for (const auto& [k, v] : c.values()) meta["config." + k] = v;
    return meta;
}

inline RunConfig config_from_meta(const io::Checkpoint& ck) {
    RunConfig c = RunConfig::preset("desk");
    for (const auto& [k, v] : ck.meta) {
        if (k.rfind("config.", 0) == 0 && c.known(k.substr(7))) c.set(k.substr(7), v);
    }
    return c;
}

inline void require_phase(const io::Checkpoint& ck, Phase p, const std::string& prefix) {
    const std::string got = ck.meta_or("phase", "");
    if (got != phase_name(p)) {
        throw DependencyError("checkpoint " + prefix + " holds phase '" + got + "', expected '" + phase_name(p) + "'");
    }
}

/// Trained ViT rebuilt from a pretext checkpoint, frozen.
struct LoadedViT {
    vit::ViTConfig config;
    vit::ViTState state;
};

inline LoadedViT load_vit(const std::string& prefix) {
    const io::Checkpoint ck = io::read_checkpoint(prefix);
    require_phase(ck, Phase::pretext, prefix);
    LoadedViT out;
    out.config = make_vit_config(config_from_meta(ck));
    Rng rng(0);
    out.state = vit::init_state(out.config, rng);
    vit::attach_pretext_head(out.state, out.config);
    ParameterList p = out.state.parameters();
    io::restore(ck, p);
    set_trainable(p, false);
    return out;
}

struct LoadedAE {
    disentangle::AEConfig config;
    disentangle::AEState state;
};

inline LoadedAE load_ae(const std::string& prefix) {
    const io::Checkpoint ck = io::read_checkpoint(prefix);
    require_phase(ck, Phase::disentangle, prefix);
    LoadedAE out;
    out.config = make_ae_config(config_from_meta(ck));
    Rng rng(0);
    out.state = disentangle::init_state(out.config, rng);
    ParameterList p = out.state.parameters();
    io::restore(ck, p);
    set_trainable(p, false);
    return out;
}

struct LoadedGenerator {
    sr::Generator generator;
    RunConfig config;
};

inline ParameterList generator_checkpoint_tensors(const sr::Generator& g) {
    ParameterList p = g.parameters();
    append(p, "", g.buffers());
    return p;
}

inline LoadedGenerator load_generator(const std::string& prefix) {
    const io::Checkpoint ck = io::read_checkpoint(prefix);
    require_phase(ck, Phase::sr, prefix);
    LoadedGenerator out{{}, config_from_meta(ck)};
    Rng rng(0);
    out.generator = sr::Generator::make(make_generator_config(out.config), rng);
    ParameterList p = generator_checkpoint_tensors(out.generator);
    io::restore(ck, p);
    set_trainable(p, false);
    return out;
}

// ---------------------------------------------------------------------------
// Per-phase objectives.

/// Class probabilities [B x J] for a batch of samples.
inline Tensor pretext_probabilities(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx,
                                    const vit::ViTState& s, const vit::ViTConfig& c) {
    std::vector<Tensor> rows;
    rows.reserve(idx.size());
    const std::size_t j = c.num_pretext_classes;
    for (std::size_t i : idx) rows.push_back(reshape(vit::pretext_logits(to_tensor(samples[i].image), s, c), {1, j}));
    return softmax(rows.size() == 1 ? rows.front() : concat(rows, 0), 1);
}

inline Tensor one_hot_labels(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx,
                             std::size_t classes) {
    std::vector<double> g(idx.size() * classes, 0.0);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const int label = samples[idx[r]].label;
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw DataError("pretext: label " + std::to_string(label) + " outside [0," + std::to_string(classes) + ")");
        }
        g[r * classes + static_cast<std::size_t>(label)] = 1.0;
    }
    return Tensor({idx.size(), classes}, std::move(g));
}

inline double pretext_eval(const std::vector<Sample>& samples, const vit::ViTState& s, const vit::ViTConfig& c) {
    if (samples.empty()) return kNoValue;
    const auto idx = all_indices(samples.size());
    return vit::dice_ce_loss(pretext_probabilities(samples, idx, s, c), one_hot_labels(samples, idx, c.num_pretext_classes))
        .item();
}

/// Disentanglement losses on a split, pairing each image with a seeded derangement.
inline double disentangle_eval(const std::vector<Sample>& samples, const disentangle::AEState& s,
                               const disentangle::AEConfig& c, std::uint64_t seed) {
    if (samples.size() < 2) return kNoValue;
    Rng rng(seed);
    const auto idx = all_indices(samples.size());
    const Tensor x1 = image_batch(samples, idx);
    const Tensor x2 = disentangle::take_rows(x1, disentangle::derangement(samples.size(), rng));
    return disentangle::evaluate_losses(x1, x2, s, c).total;
}

inline std::pair<Tensor, Tensor> sr_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx,
                                          int m) {
    std::vector<Image> lr, hr;
    for (std::size_t i : idx) {
        hr.push_back(samples[i].image);
        lr.push_back(degrade(samples[i].image, m));
    }
    return {to_batch(lr), to_batch(hr)};
}

// ---------------------------------------------------------------------------

struct PhaseOptions {
    std::function<void(const EpochRecord&)> on_epoch;  // progress callback
    bool write_outputs = true;
};

namespace detail {

inline void write_phase_outputs(const TrainRunRecord& r, const std::string& out_dir, Phase p) {
    const std::filesystem::path dir(out_dir);
    const std::string stem = artifact_name(p);
    emit_loss_csv(r, (dir / (stem + "_loss.csv")).string());
    std::ofstream cfg(dir / (stem + "_config.txt"));
    cfg << r.config_snapshot;
    std::ofstream timing(dir / (stem + "_timing.csv"));
    timing << "epoch,seconds\n";
    for (const auto& e : r.epochs) timing << e.epoch << ',' << format_loss(e.seconds) << '\n';
    if (!cfg || !timing) throw IoError("cannot write run outputs in " + out_dir);
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

inline std::string extractor_prefix(const RunConfig& c, const std::string& key, const std::string& stem) {
    const std::string& v = c.str(key);
    return v.empty() ? (std::filesystem::path(c.str("out")) / stem).string() : v;
}

/// Runs one phase on the given splits, returning the per-epoch record. With
/// `write_outputs` the checkpoint, loss CSV, timing and config snapshot are
/// written under the config's `out` directory.
inline TrainRunRecord run_phase(Phase phase, const RunConfig& config, const Datasets& data,
                                const PhaseOptions& opts = {}) {
    if (data.train.empty()) throw EmptyDatasetError("run_phase: training split is empty");
    const std::uint64_t seed = config.count("seed");
    const std::string out_dir = config.str("out");
    const std::string prefix = (std::filesystem::path(out_dir) / artifact_name(phase)).string();

    const std::string epochs_key = phase == Phase::pretext ? "pretext_epochs"
                                   : phase == Phase::disentangle ? "disent_epochs"
                                                                 : "sr_epochs";
    config.positive(epochs_key);

    TrainRunRecord rec;
    rec.phase = phase_name(phase);
    rec.seed = seed;
    rec.config_snapshot = config.snapshot();
    rec.checkpoint = prefix;

    Rng init_rng(seed);
    Rng order_rng(seed ^ 0x5bd1e995ULL);

    auto finish_epoch = [&](EpochRecord e) {
        rec.epochs.push_back(std::move(e));
        if (opts.on_epoch) opts.on_epoch(rec.epochs.back());
    };

    ParameterList to_save;
    if (phase == Phase::pretext) {
        const vit::ViTConfig vc = make_vit_config(config);
        vit::ViTState state = vit::init_state(vc, init_rng);
        vit::attach_pretext_head(state, vc);
        OptimizerState opt = make_optimizer(config, "pretext");
        const std::size_t batch = config.positive("pretext_batch");
        ParameterList params = state.parameters();
        for (std::size_t epoch = 1; epoch <= config.count("pretext_epochs"); ++epoch) {
            const auto t0 = std::chrono::steady_clock::now();
            double total = 0.0;
            const auto batches = epoch_batches(data.train.size(), batch, order_rng);
            for (const auto& idx : batches) {
                zero_grads(params);
                const Tensor loss = vit::dice_ce_loss(pretext_probabilities(data.train, idx, state, vc),
                                                      one_hot_labels(data.train, idx, vc.num_pretext_classes));
                total += loss.item();
                loss.backward();
                optimizer_step(params, opt);
            }
            EpochRecord e;
            e.epoch = epoch;
            e.train_loss = total / static_cast<double>(batches.size());
            e.val_loss = pretext_eval(data.val, state, vc);
            e.test_loss = pretext_eval(data.test, state, vc);
            e.seconds = detail::seconds_since(t0);
            finish_epoch(std::move(e));
        }
        to_save = params;
    } else if (phase == Phase::disentangle) {
        const disentangle::AEConfig ac = make_ae_config(config);
        disentangle::AEState state = disentangle::init_state(ac, init_rng);
        OptimizerState gen_opt = make_optimizer(config, "disent");
        OptimizerState disc_opt = gen_opt;
        const std::size_t batch = config.positive("disent_batch");
        if (batch < 2) throw ConfigError("disent_batch must be at least 2 (images are paired within a batch)");
        if (data.train.size() < 2) throw SamplingError("disentangle: need at least two training images to pair");
        rec.component_names = {"rec", "adv", "swap", "disc"};
        for (std::size_t epoch = 1; epoch <= config.count("disent_epochs"); ++epoch) {
            const auto t0 = std::chrono::steady_clock::now();
            auto batches = epoch_batches(data.train.size(), batch, order_rng);
            // A trailing single image cannot be paired; it joins the previous batch.
            if (batches.size() > 1 && batches.back().size() == 1) {
                batches[batches.size() - 2].push_back(batches.back().front());
                batches.pop_back();
            }
            std::vector<double> comp(4, 0.0);
            double total = 0.0;
            for (const auto& idx : batches) {
                const Tensor x1 = image_batch(data.train, idx);
                const Tensor x2 = disentangle::take_rows(x1, disentangle::derangement(idx.size(), order_rng));
                const auto l = disentangle::disentangle_train_step(x1, x2, state, ac, gen_opt, disc_opt);
                total += l.total;
                comp[0] += l.rec;
                comp[1] += l.adv;
                comp[2] += l.swap;
                comp[3] += l.disc;
            }
            const double nb = static_cast<double>(batches.size());
            EpochRecord e;
            e.epoch = epoch;
            e.train_loss = total / nb;
            for (double& c : comp) c /= nb;
            e.components = comp;
            e.val_loss = disentangle_eval(data.val, state, ac, seed + 101);
            e.test_loss = disentangle_eval(data.test, state, ac, seed + 202);
            e.seconds = detail::seconds_since(t0);
            finish_epoch(std::move(e));
        }
        to_save = state.parameters();
    } else {
        const int m = config_scale(config);
        const sr::GeneratorConfig gc = make_generator_config(config);
        const nn::DiscriminatorConfig dc = make_sr_disc_config(config);
        const sr::LossWeights w = make_loss_weights(config);
        OptimizerState gen_opt = make_optimizer(config, "sr");
        OptimizerState disc_opt = gen_opt;
        const std::size_t batch = config.positive("sr_batch");
        const std::string vit_prefix = extractor_prefix(config, "vit_checkpoint", "vit");
        const std::string ae_prefix = extractor_prefix(config, "ae_checkpoint", "ae");
        if (!io::checkpoint_exists(vit_prefix)) {
            throw DependencyError("sr phase needs the ViT checkpoint " + io::checkpoint_manifest(vit_prefix) +
                                  " (run the pretext phase first or set vit_checkpoint)");
        }
        if (!io::checkpoint_exists(ae_prefix)) {
            throw DependencyError("sr phase needs the autoencoder checkpoint " + io::checkpoint_manifest(ae_prefix) +
                                  " (run the disentangle phase first or set ae_checkpoint)");
        }
        LoadedViT vit = load_vit(vit_prefix);
        LoadedAE ae = load_ae(ae_prefix);
        const sr::Extractors ex{&vit.state, &vit.config, &ae.state, &ae.config};
        sr::Generator g = sr::Generator::make(gc, init_rng);
        nn::Discriminator d = nn::Discriminator::make(dc, init_rng);
        rec.component_names = {"adv", "vit", "str", "tex"};
        auto eval_split = [&](const std::vector<Sample>& split) {
            if (split.empty()) return kNoValue;
            auto [lr, hr] = sr_batch(split, all_indices(split.size()), m);
            return sr::evaluate_losses(g, d, ex, lr, hr, w).total;
        };
        for (std::size_t epoch = 1; epoch <= config.count("sr_epochs"); ++epoch) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto batches = epoch_batches(data.train.size(), batch, order_rng);
            std::vector<double> comp(4, 0.0);
            double total = 0.0;
            for (const auto& idx : batches) {
                auto [lr, hr] = sr_batch(data.train, idx, m);
                const auto l = sr::sr_train_step(g, d, ex, lr, hr, w, gen_opt, disc_opt);
                total += l.total;
                comp[0] += l.adv;
                comp[1] += l.vit;
                comp[2] += l.str;
                comp[3] += l.tex;
            }
            const double nb = static_cast<double>(batches.size());
            EpochRecord e;
            e.epoch = epoch;
            e.train_loss = total / nb;
            for (double& c : comp) c /= nb;
            e.components = comp;
            e.val_loss = eval_split(data.val);
            e.test_loss = eval_split(data.test);
            e.seconds = detail::seconds_since(t0);
            finish_epoch(std::move(e));
        }
        to_save = generator_checkpoint_tensors(g);
        append(to_save, "", d.parameters());
    }
    if (opts.write_outputs) {
        std::filesystem::create_directories(out_dir);
        io::save_checkpoint(prefix, to_save, config_meta(config, phase));
        detail::write_phase_outputs(rec, out_dir, phase);
    }
    return rec;
}

}  // namespace mrsr::train
