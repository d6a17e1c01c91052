#pragma once

// Super-resolution generator and the composite training loss
//
//   L_SR = L_adv + λ1·L_ViT + λ2·L_str + λ3·L_tex
//
// where L_adv = −log D(G(lr)), and the three semantic terms are one minus the
// cosine similarity between features of the (bicubically resized) LR input
// and of the generated HR image, taken from the frozen ViT and autoencoder.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mrsr/core/conv.hpp"
#include "mrsr/core/ops.hpp"
#include "mrsr/core/params.hpp"
#include "mrsr/data/pipeline.hpp"
#include "mrsr/disentangle/autoencoder.hpp"
#include "mrsr/metrics/resize.hpp"
#include "mrsr/nn/layers.hpp"
#include "mrsr/vit/vit.hpp"

namespace mrsr::sr {

struct GeneratorConfig {
    int scale = 2;
    std::size_t residual_blocks = 8;
    std::size_t base_channels = 64;
    // Adds the bicubic upscale of the input to the output, so the network
    // predicts a correction and starts (with a zero tail) at bicubic.
    bool bicubic_skip = false;

    std::size_t upsample_stages() const {
        require_power_of_two(scale);
        std::size_t n = 0;
        for (int m = scale; m > 1; m >>= 1) ++n;
        return n;
    }

    void validate() const {
        require_power_of_two(scale);
        if (base_channels == 0) throw ConfigError("generator: base_channels must be positive");
    }
};

struct ResidualBlock {
    nn::Conv conv1, conv2;
    nn::BatchNorm bn1, bn2;
};

struct Generator {
    GeneratorConfig config;
    nn::Conv head;
    std::vector<ResidualBlock> blocks;
    std::vector<nn::Conv> up;
    nn::Conv tail;

    static Generator make(const GeneratorConfig& c, Rng& rng) {
        c.validate();
        Generator g;
        g.config = c;
        const std::size_t ch = c.base_channels;
        g.head = nn::Conv::make(1, ch, 3, rng);
        for (std::size_t i = 0; i < c.residual_blocks; ++i) {
            g.blocks.push_back({nn::Conv::make(ch, ch, 3, rng), nn::Conv::make(ch, ch, 3, rng), nn::BatchNorm::make(ch),
                                nn::BatchNorm::make(ch)});
        }
        for (std::size_t i = 0; i < c.upsample_stages(); ++i) g.up.push_back(nn::Conv::make_up(ch, ch, 3, rng));
        g.tail = nn::Conv::make(ch, 1, 3, rng);
        if (c.bicubic_skip) g.tail.kernel = Tensor::zeros(g.tail.kernel.shape(), true);
        return g;
    }

    /// [B,1,N,N] -> [B,1,mN,mN].
    Tensor operator()(const Tensor& lr, bool training) {
        if (lr.rank() != 4 || lr.dim(1) != 1) throw DimensionError("sr_generate: expected [B,1,H,W], got " + shape_str(lr.shape()));
        Tensor h = relu(head(lr));
        for (ResidualBlock& b : blocks) {
            Tensor r = relu(b.bn1(b.conv1(h), training));
            h = add(h, b.bn2(b.conv2(r), training));
        }
        for (const nn::Conv& u : up) h = relu(u(h));
        Tensor out = tail(h);
        if (config.bicubic_skip) {
            const auto m = static_cast<std::size_t>(config.scale);
            out = add(out, bicubic_resize(lr.detach(), m * lr.dim(2), m * lr.dim(3)));
        }
        return out;
    }

    ParameterList parameters() const {
        ParameterList p;
        head.collect(p, "gen.head");
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const std::string pre = "gen.res" + std::to_string(i);
            blocks[i].conv1.collect(p, pre + ".conv1");
            blocks[i].bn1.collect(p, pre + ".bn1");
            blocks[i].conv2.collect(p, pre + ".conv2");
            blocks[i].bn2.collect(p, pre + ".bn2");
        }
        for (std::size_t i = 0; i < up.size(); ++i) up[i].collect(p, "gen.up" + std::to_string(i));
        tail.collect(p, "gen.tail");
        return p;
    }

    /// Batch-norm running statistics (saved with checkpoints, never optimised).
    ParameterList buffers() const {
        ParameterList p;
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const std::string pre = "gen.res" + std::to_string(i);
            blocks[i].bn1.collect_buffers(p, pre + ".bn1");
            blocks[i].bn2.collect_buffers(p, pre + ".bn2");
        }
        return p;
    }
};

/// Inference on one image (batch-norm in evaluation mode).
inline Image sr_generate(Generator& g, const Image& lr) { return to_image(g(to_batch({lr}), false)); }

struct LossWeights {
    double vit = 1.0;  // λ1
    double str = 1.0;  // λ2
    double tex = 0.9;  // λ3

    void validate() const {
        if (vit < 0 || str < 0 || tex < 0) throw ConfigError("loss weights must be nonnegative");
    }
};

inline double total_sr_loss(double adv, double vit, double str, double tex, const LossWeights& w) {
    return adv + w.vit * vit + w.str * str + w.tex * tex;
}

inline Tensor total_sr_loss(const Tensor& adv, const Tensor& vit, const Tensor& str, const Tensor& tex,
                            const LossWeights& w) {
    return add(add(adv, scale(vit, w.vit)), add(scale(str, w.str), scale(tex, w.tex)));
}

inline Tensor sr_adv_loss(const Tensor& d_out) { return nn::generator_adv_loss(d_out); }

/// 1 − cos(f_lr, f_hr), averaged over rows when given [B x K] batches.
inline Tensor vit_feature_loss(const Tensor& f_lr, const Tensor& f_hr) {
    if (f_lr.shape() != f_hr.shape()) {
        throw DimensionError("vit_feature_loss: " + shape_str(f_lr.shape()) + " vs " + shape_str(f_hr.shape()));
    }
    if (f_lr.rank() == 1) return add_scalar(neg(cosine_similarity(f_lr, f_hr)), 1.0);
    return add_scalar(neg(mean(rowwise_cosine(f_lr, f_hr))), 1.0);
}

/// (1 − cos(z_str^x, z_str^y), 1 − cos(z_tex^x, z_tex^y)), each averaged over the batch.
inline std::pair<Tensor, Tensor> structure_texture_loss(const disentangle::LatentCode& x,
                                                        const disentangle::LatentCode& y) {
    if (x.z_str.shape() != y.z_str.shape() || x.z_tex.shape() != y.z_tex.shape()) {
        throw DimensionError("structure_texture_loss: code shapes differ");
    }
    auto per_row = [](const Tensor& a, const Tensor& b) {
        return add_scalar(neg(mean(rowwise_cosine(a, b))), 1.0);
    };
    return {per_row(x.z_str, y.z_str), per_row(x.z_tex, y.z_tex)};
}

/// Frozen feature extractors.
struct Extractors {
    vit::ViTState* vit_state = nullptr;
    const vit::ViTConfig* vit_config = nullptr;
    disentangle::AEState* ae_state = nullptr;
    const disentangle::AEConfig* ae_config = nullptr;

    void require_frozen() const {
        if (!vit_state || !ae_state) throw ConfigError("sr: ViT and autoencoder extractors are required");
        if (!all_frozen(vit_state->parameters())) throw ConfigError("sr: ViT extractor must be frozen (requires_grad off)");
        if (!all_frozen(ae_state->parameters())) throw ConfigError("sr: autoencoder extractor must be frozen (requires_grad off)");
    }
};

inline Tensor resize_to(const Tensor& x, std::size_t extent) {
    if (x.dim(2) == extent && x.dim(3) == extent) return x;
    return bicubic_resize(x, extent, extent);
}

struct SRLosses {
    double adv = 0.0, vit = 0.0, str = 0.0, tex = 0.0, total = 0.0, disc = 0.0;
};

struct SRGraph {
    Tensor sr, adv, vit, str, tex, total;
};

/// Forward pass of the composite loss. Terms with zero weight are evaluated on
/// detached inputs (reported, but contributing no gradient).
inline SRGraph sr_forward(Generator& g, const nn::Discriminator& d, const Extractors& ex, const Tensor& lr,
                          const LossWeights& w, bool training) {
    SRGraph out;
    out.sr = g(lr, training);
    const std::size_t vit_extent = ex.vit_config->extents.at(0);
    const std::size_t ae_extent = ex.ae_config->input_extent;
    const Tensor lr_vit = resize_to(lr, vit_extent).detach();
    const Tensor lr_ae = resize_to(lr, ae_extent).detach();
    const Tensor sr_vit = w.vit > 0 ? resize_to(out.sr, vit_extent) : resize_to(out.sr.detach(), vit_extent);
    const bool ae_live = w.str > 0 || w.tex > 0;
    const Tensor sr_ae = ae_live ? resize_to(out.sr, ae_extent) : resize_to(out.sr.detach(), ae_extent);
    out.adv = sr_adv_loss(d(out.sr));
    out.vit = vit_feature_loss(vit::encode_batch(lr_vit, *ex.vit_state, *ex.vit_config),
                               vit::encode_batch(sr_vit, *ex.vit_state, *ex.vit_config));
    auto [l_str, l_tex] = structure_texture_loss(disentangle::encode(lr_ae, *ex.ae_state, *ex.ae_config),
                                                 disentangle::encode(sr_ae, *ex.ae_state, *ex.ae_config));
    out.str = l_str;
    out.tex = l_tex;
    out.total = total_sr_loss(out.adv, out.vit, out.str, out.tex, w);
    return out;
}

}  // namespace mrsr::sr
