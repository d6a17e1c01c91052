#pragma once

// Run configuration: a flat set of known keys with preset defaults, loaded
// from `key = value` text files ('#' starts a comment) and overridden by
// command-line flags. Unknown keys are rejected.

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mrsr/core/error.hpp"
#include "mrsr/disentangle/autoencoder.hpp"
#include "mrsr/sr/network.hpp"
#include "mrsr/train/optim.hpp"
#include "mrsr/vit/vit.hpp"

namespace mrsr::train {

class RunConfig {
public:
    static RunConfig preset(const std::string& name) {
        RunConfig c;
        c.values_ = {
            {"preset", "desk"},
            {"seed", "0"},
            {"out", "runs"},
            // data
            {"train_data", "synthetic:8"},
            {"val_data", "synthetic:2"},
            {"test_data", "synthetic:2"},
            {"image_size", "64"},
            {"classes", "2"},
            {"scale", "2"},
            // loss weights
            {"lambda_vit", "1"},
            {"lambda_str", "1"},
            {"lambda_tex", "0.9"},
            // vit
            {"vit_patch", "8"},
            {"vit_dim", "64"},
            {"vit_layers", "2"},
            {"vit_heads", "4"},
            {"vit_mlp", "128"},
            // autoencoder
            {"ae_widths", "16,16,8,8"},
            {"ae_tex_dim", "64"},
            {"ae_decoder_channels", "16"},
            {"disc_base", "8"},
            {"disc_layers", "2"},
            // generator
            {"gen_blocks", "8"},
            {"gen_channels", "16"},
            {"gen_bicubic_skip", "true"},
            // phase schedules
            {"pretext_optimizer", "adamw"},
            {"pretext_lr", "1e-4"},
            {"pretext_wd", "0.01"},
            {"pretext_batch", "6"},
            {"pretext_epochs", "20"},
            {"disent_optimizer", "adam"},
            {"disent_lr", "1e-3"},
            {"disent_wd", "0"},
            {"disent_batch", "4"},
            {"disent_epochs", "20"},
            {"sr_optimizer", "adam"},
            {"sr_lr", "1e-4"},
            {"sr_wd", "0.1"},
            {"sr_batch", "8"},
            {"sr_epochs", "20"},
            // extractor checkpoints for the sr phase (empty: <out>/vit and <out>/ae)
            {"vit_checkpoint", ""},
            {"ae_checkpoint", ""},
        };
        if (name == "desk") return c;
        if (name != "paper") throw ConfigError("unknown preset '" + name + "' (expected paper or desk)");
        const std::map<std::string, std::string> paper = {
            {"preset", "paper"},
            {"image_size", "256"},
            {"vit_patch", "16"},
            {"vit_dim", "768"},
            {"vit_layers", "12"},
            {"vit_heads", "12"},
            {"vit_mlp", "3072"},
            {"ae_widths", "64,64,32,32"},
            {"ae_tex_dim", "256"},
            {"ae_decoder_channels", "32"},
            {"disc_base", "64"},
            {"disc_layers", "3"},
            {"gen_blocks", "8"},
            {"gen_channels", "64"},
            {"gen_bicubic_skip", "false"},
            {"pretext_batch", "6"},
            {"pretext_epochs", "100"},
            {"disent_batch", "16"},
            {"disent_epochs", "100"},
            {"sr_batch", "256"},
            {"sr_epochs", "100"},
        };
        for (const auto& [k, v] : paper) c.values_[k] = v;
        return c;
    }

    bool known(const std::string& key) const { return values_.count(key) != 0; }

    void set(const std::string& key, const std::string& value) {
        if (!known(key)) throw ConfigError("unknown config key '" + key + "'");
        values_[key] = value;
    }

    /// Applies `key = value` lines from a file.
    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw MissingPathError("cannot read config file " + path);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
            const auto eq = line.find('=');
            const std::string key = trim(line.substr(0, eq));
            if (key.empty()) continue;
            if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
            if (!known(key)) throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown config key '" + key + "'");
            values_[key] = trim(line.substr(eq + 1));
        }
    }

    const std::string& str(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
        return it->second;
    }

    double num(const std::string& key) const {
        const std::string& s = str(key);
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' expects a number, got '" + s + "'");
        }
    }

    std::uint64_t count(const std::string& key) const {
        const std::string& s = str(key);
        try {
            std::size_t used = 0;
            if (!s.empty() && s[0] == '-') throw std::invalid_argument(s);
            const auto v = std::stoull(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' expects a nonnegative integer, got '" + s + "'");
        }
    }

    std::size_t positive(const std::string& key) const {
        const auto v = count(key);
        if (v == 0) throw ConfigError("config key '" + key + "' must be positive");
        return static_cast<std::size_t>(v);
    }

    bool flag(const std::string& key) const {
        const std::string& s = str(key);
        if (s == "true" || s == "1" || s == "yes") return true;
        if (s == "false" || s == "0" || s == "no") return false;
        throw ConfigError("config key '" + key + "' expects true/false, got '" + s + "'");
    }

    std::vector<std::size_t> list(const std::string& key) const {
        std::vector<std::size_t> out;
        std::stringstream ss(str(key));
        std::string part;
        while (std::getline(ss, part, ',')) {
            try {
                out.push_back(static_cast<std::size_t>(std::stoull(trim(part))));
            } catch (const std::exception&) {
                throw ConfigError("config key '" + key + "' expects a comma-separated list of integers");
            }
        }
        return out;
    }

    /// Sorted `key=value` lines.
    std::string snapshot() const {
        std::ostringstream os;
        for (const auto& [k, v] : values_) os << k << '=' << v << '\n';
        return os.str();
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
};

inline vit::ViTConfig make_vit_config(const RunConfig& c) {
    vit::ViTConfig v;
    v.patch_size = c.positive("vit_patch");
    v.spatial_rank = 2;
    v.extents = {c.positive("image_size"), c.positive("image_size")};
    v.embed_dim = c.positive("vit_dim");
    v.layers = static_cast<std::size_t>(c.count("vit_layers"));
    v.heads = c.positive("vit_heads");
    v.mlp_hidden = c.positive("vit_mlp");
    v.num_pretext_classes = c.positive("classes");
    v.validate();
    return v;
}

inline disentangle::AEConfig make_ae_config(const RunConfig& c) {
    disentangle::AEConfig a;
    a.input_extent = c.positive("image_size");
    a.widths = c.list("ae_widths");
    a.tex_dim = c.positive("ae_tex_dim");
    a.decoder_channels = c.positive("ae_decoder_channels");
    a.disc = {c.positive("disc_base"), static_cast<std::size_t>(c.count("disc_layers"))};
    a.validate();
    return a;
}

inline int config_scale(const RunConfig& c) {
    const double s = c.num("scale");
    if (s != static_cast<double>(static_cast<int>(s))) throw ConfigError("scale must be an integer power-of-two");
    const int m = static_cast<int>(s);
    require_power_of_two(m);
    return m;
}

inline sr::GeneratorConfig make_generator_config(const RunConfig& c) {
    sr::GeneratorConfig g;
    g.scale = config_scale(c);
    g.residual_blocks = static_cast<std::size_t>(c.count("gen_blocks"));
    g.base_channels = c.positive("gen_channels");
    g.bicubic_skip = c.flag("gen_bicubic_skip");
    g.validate();
    return g;
}

inline nn::DiscriminatorConfig make_sr_disc_config(const RunConfig& c) {
    return {c.positive("disc_base"), static_cast<std::size_t>(c.count("disc_layers"))};
}

inline sr::LossWeights make_loss_weights(const RunConfig& c) {
    sr::LossWeights w{c.num("lambda_vit"), c.num("lambda_str"), c.num("lambda_tex")};
    w.validate();
    return w;
}

/// Optimiser for a phase prefix ("pretext", "disent", "sr").
inline OptimizerState make_optimizer(const RunConfig& c, const std::string& phase) {
    OptimizerState s;
    s.kind = parse_optimizer(c.str(phase + "_optimizer"));
    s.lr = c.num(phase + "_lr");
    s.weight_decay = c.num(phase + "_wd");
    if (!(s.lr > 0)) throw ConfigError(phase + "_lr must be positive");
    if (s.weight_decay < 0) throw ConfigError(phase + "_wd must be nonnegative");
    return s;
}

}  // namespace mrsr::train
