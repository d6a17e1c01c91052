#pragma once

// Small convolutional building blocks shared by the autoencoder, the
// super-resolution generator and the discriminator.

#include <string>
#include <vector>

#include "mrsr/core/conv.hpp"
#include "mrsr/core/ops.hpp"
#include "mrsr/core/params.hpp"

namespace mrsr::nn {

struct Conv {
    Tensor kernel;  // [out, in, k, k] (transposed: [in, out, k, k])
    Tensor bias;    // [out]
    Conv2dOptions opt;

    static Conv make(std::size_t cin, std::size_t cout, std::size_t k, Rng& rng, std::size_t stride = 1) {
        return {kaiming_conv(cout, cin, k, rng), Tensor::zeros({cout}, true), {stride, k / 2, false}};
    }

    /// Stride-s transposed conv mapping `cin` channels to `cout` at s times the extent.
    static Conv make_up(std::size_t cin, std::size_t cout, std::size_t k, Rng& rng, std::size_t stride = 2) {
        const double fan = static_cast<double>(cin * k * k) / static_cast<double>(stride * stride);
        return {randn({cin, cout, k, k}, rng, std::sqrt(2.0 / fan)), Tensor::zeros({cout}, true), {stride, k / 2, true}};
    }

    Tensor operator()(const Tensor& x) const { return conv2d(x, kernel, bias, opt); }

    void collect(ParameterList& p, const std::string& name) const {
        p.push_back({name + ".weight", kernel});
        p.push_back({name + ".bias", bias});
    }
};

struct Dense {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]

    static Dense make(std::size_t in, std::size_t out, Rng& rng) { return {xavier(in, out, rng), Tensor::zeros({out}, true)}; }
    static Dense zeros(std::size_t in, std::size_t out) { return {Tensor::zeros({in, out}, true), Tensor::zeros({out}, true)}; }

    Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }

    void collect(ParameterList& p, const std::string& name) const {
        p.push_back({name + ".weight", weight});
        p.push_back({name + ".bias", bias});
    }
};

struct BatchNorm {
    Tensor gamma, beta;
    BatchNormStats stats;

    static BatchNorm make(std::size_t c) {
        return {Tensor::full({c}, 1.0, true), Tensor::zeros({c}, true), BatchNormStats::init(c)};
    }

    Tensor operator()(const Tensor& x, bool training) { return batch_norm2d(x, gamma, beta, stats, training); }

    void collect(ParameterList& p, const std::string& name) const {
        p.push_back({name + ".gamma", gamma});
        p.push_back({name + ".beta", beta});
    }

    void collect_buffers(ParameterList& p, const std::string& name) const {
        p.push_back({name + ".running_mean", stats.running_mean});
        p.push_back({name + ".running_var", stats.running_var});
    }
};

struct DiscriminatorConfig {
    std::size_t base_channels = 64;
    std::size_t strided_layers = 3;
};

/// Conv stack: base channels at stride 1, then `strided_layers` stride-2 convs
/// doubling channels, ReLU throughout, global average pool and a linear
/// readout through a sigmoid. The readout starts at zero so D ≡ 0.5 at init.
struct Discriminator {
    std::vector<Conv> convs;
    Dense readout;

    static Discriminator make(const DiscriminatorConfig& c, Rng& rng, std::size_t in_channels = 1) {
        Discriminator d;
        std::size_t ch = c.base_channels;
        d.convs.push_back(Conv::make(in_channels, ch, 3, rng));
        for (std::size_t i = 0; i < c.strided_layers; ++i) {
            d.convs.push_back(Conv::make(ch, 2 * ch, 3, rng, 2));
            ch *= 2;
        }
        d.readout = Dense::zeros(ch, 1);
        return d;
    }

    /// Probability per image, shape [B].
    Tensor operator()(const Tensor& x) const {
        Tensor h = x;
        for (const Conv& c : convs) h = relu(c(h));
        Tensor logits = readout(global_avg_pool(h));
        return reshape(sigmoid(logits), {x.dim(0)});
    }

    ParameterList parameters() const {
        ParameterList p;
        for (std::size_t i = 0; i < convs.size(); ++i) convs[i].collect(p, "disc.conv" + std::to_string(i));
        readout.collect(p, "disc.readout");
        return p;
    }
};

/// −log(clamp(p, ε, 1)) averaged over the batch.
inline Tensor generator_adv_loss(const Tensor& d_out, double eps = 1e-7) { return mean(neg_log_clamped(d_out, eps)); }

/// Discriminator binary cross-entropy: −log D(real) − ½[log(1−D(fake_a)) + log(1−D(fake_b))],
/// each term averaged over the batch. With a single fake set it is −log D(real) − log(1−D(fake)).
inline Tensor discriminator_loss(const Tensor& d_real, const std::vector<Tensor>& d_fakes, double eps = 1e-7) {
    Tensor loss = mean(neg_log_clamped(d_real, eps));
    if (d_fakes.empty()) return loss;
    const double w = 1.0 / static_cast<double>(d_fakes.size());
    for (const Tensor& f : d_fakes) loss = add(loss, scale(mean(neg_log_clamped(add_scalar(neg(f), 1.0), eps)), w));
    return loss;
}

}  // namespace mrsr::nn
