#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "mrsr/core/tensor.hpp"

namespace mrsr {

using Rng = std::mt19937_64;

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

/// Ordered (name, tensor) pairs. Order is the checkpoint order and the
/// optimiser's slot order, so models must enumerate deterministically.
using ParameterList = std::vector<NamedTensor>;

inline void set_trainable(ParameterList& params, bool trainable) {
    for (auto& p : params) p.tensor.set_requires_grad(trainable);
}

inline void zero_grads(ParameterList& params) {
    for (auto& p : params) p.tensor.zero_grad();
}

inline bool all_frozen(const ParameterList& params) {
    for (const auto& p : params)
        if (p.tensor.requires_grad()) return false;
    return true;
}

inline std::vector<Tensor> tensors_of(const ParameterList& params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.tensor);
    return out;
}

inline void append(ParameterList& dst, const std::string& prefix, const ParameterList& src) {
    for (const auto& p : src) dst.push_back({prefix + p.name, p.tensor});
}

inline Tensor randn(const Shape& shape, Rng& rng, double stddev, bool requires_grad = true) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = dist(rng);
    return Tensor(shape, std::move(v), requires_grad);
}

/// He-normal initialisation for conv kernels [C_out, C_in, k, k] (fan-in = C_in·k²).
inline Tensor kaiming_conv(std::size_t cout, std::size_t cin, std::size_t k, Rng& rng) {
    const double fan_in = static_cast<double>(cin * k * k);
    return randn({cout, cin, k, k}, rng, std::sqrt(2.0 / fan_in));
}

/// Glorot-normal initialisation for a dense [in, out] matrix.
inline Tensor xavier(std::size_t in, std::size_t out, Rng& rng) {
    return randn({in, out}, rng, std::sqrt(2.0 / static_cast<double>(in + out)));
}

}  // namespace mrsr
