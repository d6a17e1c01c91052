#pragma once

// Swapped autoencoder splitting an image into a spatial structure code z_str
// and a flat texture code z_tex.
//
// Encoder: four blocks of conv3x3 → ReLU → maxpool2. z_str is a one-channel
// conv head on the block-2 features (extent S/4, so 64x64 for 256x256
// inputs); z_tex is a linear map of the globally pooled block-4 features.
// Decoder: conv on z_str whose per-channel bias is shifted by a linear map of
// z_tex, a second conv, stride-2 transposed convs back to S, and a
// one-channel output conv with no activation.

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mrsr/core/conv.hpp"
#include "mrsr/core/ops.hpp"
#include "mrsr/core/params.hpp"
#include "mrsr/nn/layers.hpp"

namespace mrsr::disentangle {

struct AEConfig {
    std::size_t input_extent = 256;
    std::vector<std::size_t> widths = {64, 64, 32, 32};
    std::size_t tex_dim = 256;
    std::size_t decoder_channels = 32;
    nn::DiscriminatorConfig disc{64, 3};

    std::size_t str_extent() const { return input_extent / 4; }

    void validate() const {
        if (widths.size() != 4) throw ConfigError("autoencoder: exactly four encoder widths are required");
        if (input_extent == 0 || input_extent % 16 != 0) {
            throw ConfigError("autoencoder: input extent " + std::to_string(input_extent) + " must be a multiple of 16");
        }
        for (std::size_t w : widths)
            if (w == 0) throw ConfigError("autoencoder: encoder widths must be positive");
        if (tex_dim == 0 || decoder_channels == 0) throw ConfigError("autoencoder: tex_dim and decoder_channels must be positive");
    }
};

/// Codes for a batch: z_str [B, S/4, S/4], z_tex [B, T].
struct LatentCode {
    Tensor z_str;
    Tensor z_tex;
};

struct AEState {
    std::vector<nn::Conv> enc;  // four encoder blocks
    nn::Conv str_head;
    nn::Dense tex_head;
    nn::Conv dec_in;
    nn::Dense tex_film;
    nn::Conv dec_mid;
    std::vector<nn::Conv> dec_up;  // two stride-2 transposed convs
    nn::Conv dec_out;
    nn::Discriminator disc;

    ParameterList encoder_parameters() const {
        ParameterList p;
        for (std::size_t i = 0; i < enc.size(); ++i) enc[i].collect(p, "enc.block" + std::to_string(i));
        str_head.collect(p, "enc.str_head");
        tex_head.collect(p, "enc.tex_head");
        return p;
    }

    ParameterList decoder_parameters() const {
        ParameterList p;
        dec_in.collect(p, "dec.in");
        tex_film.collect(p, "dec.tex_film");
        dec_mid.collect(p, "dec.mid");
        for (std::size_t i = 0; i < dec_up.size(); ++i) dec_up[i].collect(p, "dec.up" + std::to_string(i));
        dec_out.collect(p, "dec.out");
        return p;
    }

    /// Encoder + decoder (the generator side of the adversarial game).
    ParameterList generator_parameters() const {
        ParameterList p = encoder_parameters();
        append(p, "", decoder_parameters());
        return p;
    }

    ParameterList parameters() const {
        ParameterList p = generator_parameters();
        append(p, "", disc.parameters());
        return p;
    }
};

inline AEState init_state(const AEConfig& c, Rng& rng) {
    c.validate();
    AEState s;
    std::size_t cin = 1;
    for (std::size_t w : c.widths) {
        s.enc.push_back(nn::Conv::make(cin, w, 3, rng));
        cin = w;
    }
    s.str_head = nn::Conv::make(c.widths[1], 1, 3, rng);
    s.tex_head = nn::Dense::make(c.widths[3], c.tex_dim, rng);
    const std::size_t dc = c.decoder_channels;
    s.dec_in = nn::Conv::make(1, dc, 3, rng);
    s.tex_film = nn::Dense::make(c.tex_dim, dc, rng);
    s.dec_mid = nn::Conv::make(dc, dc, 3, rng);
    for (int i = 0; i < 2; ++i) s.dec_up.push_back(nn::Conv::make_up(dc, dc, 3, rng));
    s.dec_out = nn::Conv::make(dc, 1, 3, rng);
    s.disc = nn::Discriminator::make(c.disc, rng);
    return s;
}

inline void require_input(const Tensor& x, const AEConfig& c, const char* op) {
    if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != c.input_extent || x.dim(3) != c.input_extent) {
        throw DimensionError(std::string(op) + ": expected [B,1," + std::to_string(c.input_extent) + "," +
                             std::to_string(c.input_extent) + "], got " + shape_str(x.shape()));
    }
}

inline LatentCode encode(const Tensor& x, const AEState& s, const AEConfig& c) {
    require_input(x, c, "encode");
    const std::size_t b = x.dim(0), se = c.str_extent();
    Tensor h = x;
    Tensor z_str;
    for (std::size_t i = 0; i < s.enc.size(); ++i) {
        h = max_pool2d(relu(s.enc[i](h)), 2, 2);
        if (i == 1) z_str = reshape(s.str_head(h), {b, se, se});
    }
    Tensor z_tex = s.tex_head(global_avg_pool(h));
    return {z_str, z_tex};
}

inline Tensor generate(const LatentCode& code, const AEState& s, const AEConfig& c) {
    const std::size_t se = c.str_extent();
    if (code.z_str.rank() != 3 || code.z_str.dim(1) != se || code.z_str.dim(2) != se) {
        throw DimensionError("generate: z_str must be [B," + std::to_string(se) + "," + std::to_string(se) + "], got " +
                             shape_str(code.z_str.shape()));
    }
    const std::size_t b = code.z_str.dim(0);
    if (code.z_tex.rank() != 2 || code.z_tex.dim(0) != b || code.z_tex.dim(1) != c.tex_dim) {
        throw DimensionError("generate: z_tex must be [" + std::to_string(b) + "," + std::to_string(c.tex_dim) +
                             "], got " + shape_str(code.z_tex.shape()));
    }
    Tensor film = reshape(s.tex_film(code.z_tex), {b, c.decoder_channels, 1, 1});
    Tensor h = relu(add_broadcast(s.dec_in(reshape(code.z_str, {b, 1, se, se})), film));
    h = relu(s.dec_mid(h));
    for (const nn::Conv& up : s.dec_up) h = relu(up(h));
    return s.dec_out(h);
}

/// Structure from a, texture from b.
inline LatentCode swap_codes(const LatentCode& a, const LatentCode& b) {
    if (a.z_str.shape() != b.z_str.shape() || a.z_tex.shape() != b.z_tex.shape()) {
        throw DimensionError("swap_codes: code shapes differ");
    }
    return {a.z_str, b.z_tex};
}

/// Mean absolute error per pixel.
inline Tensor rec_loss(const Tensor& x, const Tensor& x_hat) {
    if (x.shape() != x_hat.shape()) {
        throw DimensionError("rec_loss: " + shape_str(x.shape()) + " vs " + shape_str(x_hat.shape()));
    }
    return mean(abs(sub(x, x_hat)));
}

inline Tensor adv_loss(const Tensor& d_out) { return nn::generator_adv_loss(d_out); }
inline Tensor swap_gan_loss(const Tensor& d_out_hybrid) { return nn::generator_adv_loss(d_out_hybrid); }

constexpr double kAdvWeight = 0.7;
constexpr double kSwapWeight = 0.7;

inline double disent_total_loss(double rec, double adv, double swap) { return rec + kAdvWeight * adv + kSwapWeight * swap; }

inline Tensor disent_total_loss(const Tensor& rec, const Tensor& adv, const Tensor& swap) {
    return add(rec, add(scale(adv, kAdvWeight), scale(swap, kSwapWeight)));
}

/// Index permutation with no fixed points (random derangement) for pairing within a batch.
inline std::vector<std::size_t> derangement(std::size_t n, Rng& rng) {
    if (n < 2) throw SamplingError("pairing needs at least two images in the batch");
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (;;) {
        std::shuffle(p.begin(), p.end(), rng);
        bool ok = true;
        for (std::size_t i = 0; i < n && ok; ++i) ok = p[i] != i;
        if (ok) return p;
    }
}

/// Rows of a [B, ...] tensor reordered by `order`.
inline Tensor take_rows(const Tensor& x, const std::vector<std::size_t>& order) {
    const std::size_t row = x.numel() / x.dim(0);
    std::vector<std::size_t> idx;
    idx.reserve(order.size() * row);
    for (std::size_t r : order)
        for (std::size_t i = 0; i < row; ++i) idx.push_back(r * row + i);
    Shape shape = x.shape();
    shape[0] = order.size();
    return gather(x, std::move(idx), shape);
}

}  // namespace mrsr::disentangle
