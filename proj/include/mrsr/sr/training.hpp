#pragma once

// One alternating super-resolution update: generator on the composite loss,
// then the discriminator on real HR vs. generated HR.

#include "mrsr/sr/network.hpp"
#include "mrsr/train/optim.hpp"

namespace mrsr::sr {

/// Loss components on a batch without updating anything (BN in evaluation mode).
inline SRLosses evaluate_losses(Generator& g, const nn::Discriminator& d, const Extractors& ex, const Tensor& lr,
                                const Tensor& hr, const LossWeights& w) {
    const SRGraph f = sr_forward(g, d, ex, lr, w, false);
    SRLosses out{f.adv.item(), f.vit.item(), f.str.item(), f.tex.item(), f.total.item(), 0.0};
    out.disc = nn::discriminator_loss(d(hr), {d(f.sr.detach())}).item();
    return out;
}

inline SRLosses sr_train_step(Generator& g, nn::Discriminator& d, const Extractors& ex, const Tensor& lr,
                              const Tensor& hr, const LossWeights& w, train::OptimizerState& gen_opt,
                              train::OptimizerState& disc_opt) {
    ex.require_frozen();
    w.validate();
    const auto m = static_cast<std::size_t>(g.config.scale);
    if (hr.rank() != 4 || hr.dim(0) != lr.dim(0) || hr.dim(2) != m * lr.dim(2) || hr.dim(3) != m * lr.dim(3)) {
        throw DimensionError("sr_train_step: HR batch " + shape_str(hr.shape()) + " is not " + std::to_string(m) +
                             "x the LR batch " + shape_str(lr.shape()));
    }
    ParameterList gen = g.parameters();
    ParameterList disc = d.parameters();
    zero_grads(gen);
    zero_grads(disc);
    const SRGraph f = sr_forward(g, d, ex, lr, w, true);
    SRLosses out{f.adv.item(), f.vit.item(), f.str.item(), f.tex.item(), f.total.item(), 0.0};
    const Tensor fake = f.sr.detach();
    f.total.backward();
    train::optimizer_step(gen, gen_opt);

    zero_grads(disc);
    const Tensor d_loss = nn::discriminator_loss(d(hr), {d(fake)});
    out.disc = d_loss.item();
    d_loss.backward();
    train::optimizer_step(disc, disc_opt);
    return out;
}

}  // namespace mrsr::sr
