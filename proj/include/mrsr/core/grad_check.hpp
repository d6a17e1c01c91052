#pragma once

// Central finite-difference gradient checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mrsr/core/params.hpp"

namespace mrsr {

struct GradCheckOptions {
    double eps = 1e-6;
    /// Denominator floor so that coordinates with vanishing gradients compare absolutely.
    double floor = 1e-6;
    /// Coordinates probed per tensor; 0 probes all of them. Larger tensors are sampled.
    std::size_t max_coords = 0;
    std::uint64_t seed = 7;
};

namespace detail {

inline double relative_error(double analytic, double numeric, double floor) {
    return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

inline std::vector<std::size_t> probe_coords(std::size_t n, const GradCheckOptions& opt, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (opt.max_coords != 0 && opt.max_coords < n) {
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(opt.max_coords);
        std::sort(idx.begin(), idx.end());
    }
    return idx;
}

}  // namespace detail

/// Worst relative error between the backward-pass gradient of a scalar loss and
/// central differences (f(θ+ε) − f(θ−ε)) / 2ε, taken over the given leaf tensors.
/// The leaves are perturbed in place and restored.
inline double grad_check(const std::function<Tensor()>& loss, std::vector<Tensor> leaves,
                         const GradCheckOptions& opt = {}) {
    for (Tensor& t : leaves) {
        if (!t.requires_grad()) t.set_requires_grad(true);
        t.zero_grad();
    }
    loss().backward();
    std::vector<std::vector<double>> analytic;
    for (const Tensor& t : leaves) analytic.push_back(t.grad());

    Rng rng(opt.seed);
    double worst = 0.0;
    for (std::size_t k = 0; k < leaves.size(); ++k) {
        auto data = leaves[k].data();
        for (std::size_t i : detail::probe_coords(data.size(), opt, rng)) {
            const double orig = data[i];
            data[i] = orig + opt.eps;
            const double up = loss().item();
            data[i] = orig - opt.eps;
            const double down = loss().item();
            data[i] = orig;
            const double numeric = (up - down) / (2.0 * opt.eps);
            worst = std::max(worst, detail::relative_error(analytic[k][i], numeric, opt.floor));
        }
    }
    return worst;
}

/// Single-input form: checks d f(x) / d x at x.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         const GradCheckOptions& opt = {}) {
    Tensor leaf = x.clone(true);
    return grad_check([&] { return f(leaf); }, {leaf}, opt);
}

inline double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
    GradCheckOptions opt;
    opt.eps = eps;
    return grad_check(f, x, opt);
}

}  // namespace mrsr
