#pragma once

// Vision-Transformer encoder: patch embedding, pre-norm transformer blocks,
// mean token pooling, and the organ-classification pretext head.
//
//   z0    = patches · E + E_pos
//   z'_i  = MSA(LN(z_{i-1})) + z_{i-1}
//   z_i   = MLP(LN(z'_i)) + z'_i          MLP(u) = GELU(u·W1 + b1)·W2 + b2
//   MSA   = [SA_1; ...; SA_n] · W_msa      SA(z) = softmax(q kᵀ / sqrt(K_h)) v

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mrsr/core/error.hpp"
#include "mrsr/core/ops.hpp"
#include "mrsr/core/params.hpp"

namespace mrsr::vit {

struct ViTConfig {
    std::size_t patch_size = 8;
    std::size_t spatial_rank = 2;
    std::size_t channels = 1;
    std::vector<std::size_t> extents = {64, 64};  // spatial input extents (E_pos is sized from these)
    std::size_t embed_dim = 64;
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t mlp_hidden = 128;
    std::size_t num_pretext_classes = 2;
    double ln_eps = 1e-5;

    std::size_t head_dim() const { return embed_dim / heads; }

    std::size_t patch_width() const {
        std::size_t w = channels;
        for (std::size_t i = 0; i < spatial_rank; ++i) w *= patch_size;
        return w;
    }

    std::size_t num_patches() const {
        std::size_t n = 1;
        for (std::size_t e : extents) n *= e / patch_size;
        return n;
    }

    void validate() const {
        if (spatial_rank != 2 && spatial_rank != 3) throw ConfigError("vit: spatial_rank must be 2 or 3");
        if (patch_size == 0 || embed_dim == 0 || heads == 0 || channels == 0 || mlp_hidden == 0) {
            throw ConfigError("vit: patch_size, embed_dim, heads, channels and mlp_hidden must be positive");
        }
        if (embed_dim % heads != 0) {
            throw ConfigError("vit: embed_dim " + std::to_string(embed_dim) + " is not divisible by heads " +
                              std::to_string(heads));
        }
        if (extents.size() != spatial_rank) throw ConfigError("vit: extents must list spatial_rank values");
        for (std::size_t e : extents) {
            if (e == 0 || e % patch_size != 0) {
                throw DimensionError("vit: extent " + std::to_string(e) + " is not divisible by patch size P=" +
                                     std::to_string(patch_size));
            }
        }
        if (num_pretext_classes == 0) throw ConfigError("vit: num_pretext_classes must be positive");
    }

    /// Paper-scale encoder (2D instantiation).
    static ViTConfig paper(std::size_t extent = 256) {
        ViTConfig c;
        c.patch_size = 16;
        c.extents = {extent, extent};
        c.embed_dim = 768;
        c.layers = 12;
        c.heads = 12;
        c.mlp_hidden = 3072;
        return c;
    }
};

struct ViTLayer {
    Tensor ln1_gain, ln1_bias;
    std::vector<Tensor> w_q, w_k, w_v;  // one [K x K_h] matrix per head
    Tensor w_msa;                       // [n*K_h x K]
    Tensor ln2_gain, ln2_bias;
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct ViTState {
    Tensor patch_projection;     // E [P^rank*C x K]
    Tensor positional_embedding; // E_pos [N x K]
    std::vector<ViTLayer> layers;
    std::optional<Tensor> pretext_head;  // [K x K_cls]

    ParameterList parameters() const {
        ParameterList p{{"embed.E", patch_projection}, {"embed.E_pos", positional_embedding}};
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const ViTLayer& l = layers[i];
            const std::string pre = "block" + std::to_string(i) + ".";
            p.push_back({pre + "ln1.gain", l.ln1_gain});
            p.push_back({pre + "ln1.bias", l.ln1_bias});
            for (std::size_t h = 0; h < l.w_q.size(); ++h) {
                const std::string hp = pre + "head" + std::to_string(h) + ".";
                p.push_back({hp + "W_q", l.w_q[h]});
                p.push_back({hp + "W_k", l.w_k[h]});
                p.push_back({hp + "W_v", l.w_v[h]});
            }
            p.push_back({pre + "W_msa", l.w_msa});
            p.push_back({pre + "ln2.gain", l.ln2_gain});
            p.push_back({pre + "ln2.bias", l.ln2_bias});
            p.push_back({pre + "mlp.W1", l.mlp_w1});
            p.push_back({pre + "mlp.b1", l.mlp_b1});
            p.push_back({pre + "mlp.W2", l.mlp_w2});
            p.push_back({pre + "mlp.b2", l.mlp_b2});
        }
        if (pretext_head) p.push_back({"pretext.head", *pretext_head});
        return p;
    }
};

inline ViTLayer init_layer(const ViTConfig& c, Rng& rng) {
    const std::size_t k = c.embed_dim, kh = c.head_dim();
    ViTLayer l;
    l.ln1_gain = Tensor::full({k}, 1.0, true);
    l.ln1_bias = Tensor::zeros({k}, true);
    for (std::size_t h = 0; h < c.heads; ++h) {
        l.w_q.push_back(xavier(k, kh, rng));
        l.w_k.push_back(xavier(k, kh, rng));
        l.w_v.push_back(xavier(k, kh, rng));
    }
    l.w_msa = xavier(c.heads * kh, k, rng);
    l.ln2_gain = Tensor::full({k}, 1.0, true);
    l.ln2_bias = Tensor::zeros({k}, true);
    l.mlp_w1 = xavier(k, c.mlp_hidden, rng);
    l.mlp_b1 = Tensor::zeros({c.mlp_hidden}, true);
    l.mlp_w2 = xavier(c.mlp_hidden, k, rng);
    l.mlp_b2 = Tensor::zeros({k}, true);
    return l;
}

inline ViTState init_state(const ViTConfig& c, Rng& rng) {
    c.validate();
    ViTState s;
    s.patch_projection = xavier(c.patch_width(), c.embed_dim, rng);
    s.positional_embedding = randn({c.num_patches(), c.embed_dim}, rng, 0.02);
    for (std::size_t i = 0; i < c.layers; ++i) s.layers.push_back(init_layer(c, rng));
    return s;
}

/// Attaches a zero-initialised [K x K_cls] classification head.
inline void attach_pretext_head(ViTState& s, const ViTConfig& c) {
    s.pretext_head = Tensor::zeros({c.embed_dim, c.num_pretext_classes}, true);
}

namespace detail {

// Spatial extents and channel count of an image tensor: [C, spatial...] or [spatial...].
inline std::vector<std::size_t> spatial_extents(const Tensor& image, const ViTConfig& c, std::size_t& channels) {
    const Shape& s = image.shape();
    if (s.size() == c.spatial_rank) {
        channels = 1;
        return s;
    }
    if (s.size() == c.spatial_rank + 1) {
        channels = s[0];
        return Shape(s.begin() + 1, s.end());
    }
    throw DimensionError("patchify: image of shape " + shape_str(s) + " does not have spatial rank " +
                         std::to_string(c.spatial_rank));
}

// Flat source index of every patch element, patches row-major over the grid,
// elements row-major within the patch with the channel index fastest.
inline std::vector<std::size_t> patch_index(const std::vector<std::size_t>& ext, std::size_t channels, std::size_t p) {
    const std::size_t rank = ext.size();
    std::vector<std::size_t> grid(rank);
    std::size_t n = 1, per = 1, plane = 1;
    for (std::size_t i = 0; i < rank; ++i) {
        grid[i] = ext[i] / p;
        n *= grid[i];
        per *= p;
        plane *= ext[i];
    }
    std::vector<std::size_t> idx;
    idx.reserve(n * per * channels);
    std::vector<std::size_t> g(rank, 0), o(rank, 0);
    for (std::size_t patch = 0; patch < n; ++patch) {
        std::size_t rem = patch;
        for (std::size_t i = rank; i-- > 0;) {
            g[i] = rem % grid[i];
            rem /= grid[i];
        }
        for (std::size_t e = 0; e < per; ++e) {
            std::size_t r2 = e;
            for (std::size_t i = rank; i-- > 0;) {
                o[i] = r2 % p;
                r2 /= p;
            }
            std::size_t flat = 0;
            for (std::size_t i = 0; i < rank; ++i) flat = flat * ext[i] + g[i] * p + o[i];
            for (std::size_t ch = 0; ch < channels; ++ch) idx.push_back(ch * plane + flat);
        }
    }
    return idx;
}

}  // namespace detail

/// Non-overlapping P^rank patches flattened to rows: [N x P^rank*C].
inline Tensor patchify(const Tensor& image, const ViTConfig& c) {
    std::size_t channels = 1;
    const auto ext = detail::spatial_extents(image, c, channels);
    for (std::size_t e : ext) {
        if (e % c.patch_size != 0) {
            throw DimensionError("patchify: extent " + std::to_string(e) + " is not divisible by patch size P=" +
                                 std::to_string(c.patch_size));
        }
    }
    auto idx = detail::patch_index(ext, channels, c.patch_size);
    std::size_t per = channels;
    for (std::size_t i = 0; i < ext.size(); ++i) per *= c.patch_size;
    const std::size_t n = idx.size() / per;
    return gather(image, std::move(idx), {n, per});
}

/// Inverse of patchify for the given image shape.
inline Tensor unpatchify(const Tensor& patches, const ViTConfig& c, const Shape& image_shape) {
    Tensor probe = Tensor::zeros(image_shape);
    std::size_t channels = 1;
    const auto ext = detail::spatial_extents(probe, c, channels);
    const auto idx = detail::patch_index(ext, channels, c.patch_size);
    if (idx.size() != patches.numel()) {
        throw DimensionError("unpatchify: " + shape_str(patches.shape()) + " does not tile " + shape_str(image_shape));
    }
    std::vector<std::size_t> inverse(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) inverse[idx[i]] = i;
    return gather(patches, std::move(inverse), image_shape);
}

/// z0 = patches · E + E_pos.
inline Tensor embed_sequence(const Tensor& patches, const ViTState& s) {
    if (patches.rank() != 2 || patches.dim(1) != s.patch_projection.dim(0)) {
        throw DimensionError("embed_sequence: patches " + shape_str(patches.shape()) + " do not match E " +
                             shape_str(s.patch_projection.shape()));
    }
    if (s.positional_embedding.dim(0) != patches.dim(0)) {
        throw ConfigError("embed_sequence: E_pos has " + std::to_string(s.positional_embedding.dim(0)) +
                          " rows but the image has " + std::to_string(patches.dim(0)) + " patches");
    }
    return add(matmul(patches, s.patch_projection), s.positional_embedding);
}

/// A = softmax(q kᵀ / sqrt(K_h)) row-wise.
inline Tensor attention_weights(const Tensor& q, const Tensor& k) {
    if (q.rank() != 2 || k.rank() != 2 || q.dim(1) != k.dim(1) || q.dim(0) != k.dim(0)) {
        throw DimensionError("attention_weights: q " + shape_str(q.shape()) + " and k " + shape_str(k.shape()) +
                             " must share [N x K_h]");
    }
    const double inv = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
    return softmax(scale(matmul(q, transpose(k)), inv), 1);
}

inline Tensor self_attention(const Tensor& z, const Tensor& w_q, const Tensor& w_k, const Tensor& w_v) {
    const Tensor q = matmul(z, w_q), k = matmul(z, w_k), v = matmul(z, w_v);
    return matmul(attention_weights(q, k), v);
}

inline Tensor multi_head_attention(const Tensor& z, const ViTLayer& l) {
    if (l.w_q.empty() || l.w_q.size() != l.w_k.size() || l.w_q.size() != l.w_v.size()) {
        throw ConfigError("multi_head_attention: inconsistent head weights");
    }
    std::vector<Tensor> heads;
    heads.reserve(l.w_q.size());
    for (std::size_t h = 0; h < l.w_q.size(); ++h) heads.push_back(self_attention(z, l.w_q[h], l.w_k[h], l.w_v[h]));
    Tensor cat = heads.size() == 1 ? heads.front() : concat(heads, 1);
    return matmul(cat, l.w_msa);
}

inline Tensor transformer_block(const Tensor& z, const ViTLayer& l, double eps = 1e-5) {
    Tensor mid = add(multi_head_attention(layer_norm(z, l.ln1_gain, l.ln1_bias, eps), l), z);
    Tensor hidden = gelu(linear(layer_norm(mid, l.ln2_gain, l.ln2_bias, eps), l.mlp_w1, l.mlp_b1));
    return add(linear(hidden, l.mlp_w2, l.mlp_b2), mid);
}

/// Final token sequence z_L [N x K].
inline Tensor encode_tokens(const Tensor& image, const ViTState& s, const ViTConfig& c) {
    Tensor z = embed_sequence(patchify(image, c), s);
    for (const ViTLayer& l : s.layers) z = transformer_block(z, l, c.ln_eps);
    return z;
}

/// f_ViT: mean of the final tokens, length K.
inline Tensor encode_features(const Tensor& image, const ViTState& s, const ViTConfig& c) {
    return mean_axis(encode_tokens(image, s, c), 0);
}

/// Row-stacked features [B x K] for a [B, C, spatial...] batch.
inline Tensor encode_batch(const Tensor& batch, const ViTState& s, const ViTConfig& c) {
    const std::size_t b = batch.dim(0);
    Shape single(batch.shape().begin() + 1, batch.shape().end());
    std::vector<Tensor> rows;
    rows.reserve(b);
    for (std::size_t i = 0; i < b; ++i) {
        Tensor img = reshape(slice0(batch, i, i + 1), single);
        rows.push_back(reshape(encode_features(img, s, c), {1, c.embed_dim}));
    }
    return b == 1 ? rows.front() : concat(rows, 0);
}

inline Tensor pretext_logits(const Tensor& image, const ViTState& s, const ViTConfig& c) {
    if (!s.pretext_head) throw UsageError("pretext_logits: no pretext head attached");
    Tensor f = reshape(encode_features(image, s, c), {1, c.embed_dim});
    return reshape(matmul(f, *s.pretext_head), {s.pretext_head->dim(1)});
}

/// Soft dice + cross-entropy over I voxels and J classes:
///   1 − (2/J) Σ_j Σ_i G_ij Y_ij / (Σ_i G_ij² + Σ_i Y_ij²) − (1/I) Σ_i Σ_j G_ij log max(Y_ij, ε)
inline Tensor dice_ce_loss(const Tensor& y, const Tensor& g, double eps = 1e-7) {
    if (y.rank() != 2 || y.shape() != g.shape()) {
        throw ValidationError("dice_ce_loss: Y " + shape_str(y.shape()) + " and G " + shape_str(g.shape()) +
                              " must be matching [I x J] matrices");
    }
    const std::size_t n = y.dim(0), j = y.dim(1);
    auto yv = y.values();
    auto gv = g.values();
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        std::size_t ones = 0;
        for (std::size_t c = 0; c < j; ++c) {
            row += yv[i * j + c];
            const double gc = gv[i * j + c];
            if (gc == 1.0) ++ones;
            else if (gc != 0.0) throw ValidationError("dice_ce_loss: G must be one-hot (entries 0 or 1)");
        }
        if (ones != 1) throw ValidationError("dice_ce_loss: row " + std::to_string(i) + " of G is not one-hot");
        if (std::fabs(row - 1.0) > 1e-6) {
            throw ValidationError("dice_ce_loss: row " + std::to_string(i) + " of Y sums to " + std::to_string(row));
        }
    }
    Tensor overlap = sum_axis(mul(g, y), 0);                            // [J]
    Tensor energy = add(sum_axis(square(g), 0), sum_axis(square(y), 0)); // [J]
    // A class absent from both G and Y has 0/0 overlap; it counts as perfect agreement (ratio 1/2).
    std::vector<double> guard(j, 0.0), absent(j, 0.0);
    for (std::size_t c = 0; c < j; ++c) {
        if (energy.at(c) == 0.0) {
            guard[c] = 1.0;
            absent[c] = 0.5;
        }
    }
    Tensor ratio = add(div(overlap, add(energy, Tensor({j}, guard))), Tensor({j}, absent));
    Tensor dice = scale(sum(ratio), 2.0 / static_cast<double>(j));
    Tensor ce = scale(sum(mul(g, log(clamp(y, eps, 1.0)))), 1.0 / static_cast<double>(n));
    return sub(add_scalar(neg(dice), 1.0), ce);
}

}  // namespace mrsr::vit
