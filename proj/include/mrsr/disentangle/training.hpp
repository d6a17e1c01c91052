#pragma once

// One alternating update of the swapped autoencoder: encoder/decoder on
// rec + 0.7·adv + 0.7·swap, then the discriminator on real vs. generated.

#include "mrsr/disentangle/autoencoder.hpp"
#include "mrsr/train/optim.hpp"

namespace mrsr::disentangle {

struct DisentangleLosses {
    double rec = 0.0;
    double adv = 0.0;
    double swap = 0.0;
    double total = 0.0;
    double disc = 0.0;
};

/// Losses of the generator side without any update (used for validation).
inline DisentangleLosses evaluate_losses(const Tensor& x1, const Tensor& x2, const AEState& s, const AEConfig& c) {
    const LatentCode c1 = encode(x1, s, c), c2 = encode(x2, s, c);
    const Tensor rec_img = generate(c1, s, c);
    const Tensor hybrid = generate(swap_codes(c1, c2), s, c);
    DisentangleLosses out;
    out.rec = rec_loss(x1, rec_img).item();
    out.adv = adv_loss(s.disc(rec_img)).item();
    out.swap = swap_gan_loss(s.disc(hybrid)).item();
    out.total = disent_total_loss(out.rec, out.adv, out.swap);
    out.disc = nn::discriminator_loss(s.disc(x1), {s.disc(rec_img), s.disc(hybrid)}).item();
    return out;
}

inline void require_distinct(const Tensor& x1, const Tensor& x2) {
    if (x1.shape() != x2.shape()) throw DimensionError("disentangle step: x1 and x2 batches differ in shape");
    const std::size_t b = x1.dim(0), row = x1.numel() / b;
    auto a = x1.values();
    auto v = x2.values();
    for (std::size_t i = 0; i < b; ++i) {
        if (std::equal(a.begin() + i * row, a.begin() + (i + 1) * row, v.begin() + i * row)) {
            throw SamplingError("disentangle step: x1 and x2 are the same image at batch index " + std::to_string(i));
        }
    }
}

inline DisentangleLosses disentangle_train_step(const Tensor& x1, const Tensor& x2, AEState& s, const AEConfig& c,
                                                train::OptimizerState& gen_opt, train::OptimizerState& disc_opt) {
    require_distinct(x1, x2);
    ParameterList gen = s.generator_parameters();
    ParameterList disc = s.disc.parameters();

    // Generator side.
    zero_grads(gen);
    zero_grads(disc);
    const LatentCode c1 = encode(x1, s, c), c2 = encode(x2, s, c);
    const Tensor rec_img = generate(c1, s, c);
    const Tensor hybrid = generate(swap_codes(c1, c2), s, c);
    const Tensor l_rec = rec_loss(x1, rec_img);
    const Tensor l_adv = adv_loss(s.disc(rec_img));
    const Tensor l_swap = swap_gan_loss(s.disc(hybrid));
    const Tensor total = disent_total_loss(l_rec, l_adv, l_swap);
    DisentangleLosses out;
    out.rec = l_rec.item();
    out.adv = l_adv.item();
    out.swap = l_swap.item();
    out.total = total.item();
    const Tensor fake_rec = rec_img.detach(), fake_hybrid = hybrid.detach();
    total.backward();
    train::optimizer_step(gen, gen_opt);

    // Discriminator side.
    zero_grads(disc);
    const Tensor d_loss = nn::discriminator_loss(s.disc(x1), {s.disc(fake_rec), s.disc(fake_hybrid)});
    out.disc = d_loss.item();
    d_loss.backward();
    train::optimizer_step(disc, disc_opt);
    return out;
}

}  // namespace mrsr::disentangle
