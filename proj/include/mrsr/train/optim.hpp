#pragma once

// Adam with L2-coupled weight decay and AdamW with decoupled decay.
//
//   adam:  g ← g + wd·θ
//   adamw: θ ← θ − lr·wd·θ   (before the moment update)
//   both:  m ← β1·m + (1−β1)·g,  v ← β2·v + (1−β2)·g²
//          θ ← θ − lr · m̂ / (sqrt(v̂) + ε),  m̂ = m/(1−β1^t), v̂ = v/(1−β2^t)

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mrsr/core/error.hpp"
#include "mrsr/core/params.hpp"

namespace mrsr::train {

enum class OptimizerKind { adam, adamw };

inline OptimizerKind parse_optimizer(const std::string& name) {
    if (name == "adam") return OptimizerKind::adam;
    if (name == "adamw") return OptimizerKind::adamw;
    throw ConfigError("unknown optimizer '" + name + "' (expected adam or adamw)");
}

inline std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "adamw"; }

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    std::vector<std::vector<double>> m, v;
    std::size_t t = 0;
};

namespace detail {

inline void ensure_slots(const std::vector<Tensor>& params, OptimizerState& s) {
    if (s.m.empty()) {
        for (const Tensor& p : params) {
            s.m.emplace_back(p.numel(), 0.0);
            s.v.emplace_back(p.numel(), 0.0);
        }
    }
    if (s.m.size() != params.size()) {
        throw DimensionError("optimizer: state tracks " + std::to_string(s.m.size()) + " tensors but got " +
                             std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (s.m[i].size() != params[i].numel()) {
            throw DimensionError("optimizer: moment " + std::to_string(i) + " has " + std::to_string(s.m[i].size()) +
                                 " entries for a parameter of shape " + shape_str(params[i].shape()));
        }
    }
}

inline void step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads, OptimizerState& s,
                 bool decoupled) {
    if (grads.size() != params.size()) {
        throw DimensionError("optimizer: " + std::to_string(grads.size()) + " gradients for " +
                             std::to_string(params.size()) + " parameters");
    }
    ensure_slots(params, s);
    ++s.t;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].size() != params[i].numel()) {
            throw DimensionError("optimizer: gradient " + std::to_string(i) + " does not match parameter shape " +
                                 shape_str(params[i].shape()));
        }
        auto theta = params[i].data();
        auto& m = s.m[i];
        auto& v = s.v[i];
        for (std::size_t j = 0; j < theta.size(); ++j) {
            double g = grads[i][j];
            if (decoupled) {
                theta[j] -= s.lr * s.weight_decay * theta[j];
            } else {
                g += s.weight_decay * theta[j];
            }
            m[j] = s.beta1 * m[j] + (1.0 - s.beta1) * g;
            v[j] = s.beta2 * v[j] + (1.0 - s.beta2) * g * g;
            theta[j] -= s.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + s.eps);
        }
    }
}

}  // namespace detail

inline void adam_step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads, OptimizerState& s) {
    detail::step(params, grads, s, false);
}

inline void adamw_step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads, OptimizerState& s) {
    detail::step(params, grads, s, true);
}

/// One update of every trainable tensor in `params` from its accumulated gradient.
/// Frozen tensors (requires_grad == false) are never touched.
inline void optimizer_step(const ParameterList& params, OptimizerState& s) {
    std::vector<Tensor> live;
    std::vector<std::vector<double>> grads;
    for (const auto& p : params) {
        if (!p.tensor.requires_grad()) continue;
        live.push_back(p.tensor);
        grads.push_back(p.tensor.grad());
    }
    if (s.kind == OptimizerKind::adam) adam_step(live, grads, s);
    else adamw_step(live, grads, s);
}

}  // namespace mrsr::train
