#pragma once

// Differentiable primitives. Every op validates shapes, computes its forward
// value eagerly and records a backward closure when an input requires grad.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "mrsr/core/tensor.hpp"

namespace mrsr {

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

// Elementwise unary op: derivative is given from (input, output).
template <class F, class DF>
Tensor unary(const Tensor& x, F f, DF df) {
    auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    std::vector<double> saved = out;
    return Tensor::make_result(x.shape(), std::move(out), {x}, [&] {
        return [xn = x.node(), y = std::move(saved), df](const std::vector<double>& g) {
            double* gx = grad_slot(xn);
            if (!gx) return;
            const auto& xs = xn->values;
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xs[i], y[i]);
        };
    });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    auto av = a.values();
    auto bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [&] {
        return [an = a.node(), bn = b.node()](const std::vector<double>& g) {
            if (double* ga = detail::grad_slot(an))
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            if (double* gb = detail::grad_slot(bn))
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        };
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    auto av = a.values();
    auto bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [&] {
        return [an = a.node(), bn = b.node()](const std::vector<double>& g) {
            if (double* ga = detail::grad_slot(an))
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            if (double* gb = detail::grad_slot(bn))
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        };
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    auto av = a.values();
    auto bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [&] {
        return [an = a.node(), bn = b.node()](const std::vector<double>& g) {
            if (double* ga = detail::grad_slot(an))
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bn->values[i];
            if (double* gb = detail::grad_slot(bn))
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * an->values[i];
        };
    });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "div");
    auto av = a.values();
    auto bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / bv[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [&] {
        return [an = a.node(), bn = b.node()](const std::vector<double>& g) {
            const auto& x = an->values;
            const auto& y = bn->values;
            if (double* ga = detail::grad_slot(an))
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / y[i];
            if (double* gb = detail::grad_slot(bn))
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * x[i] / (y[i] * y[i]);
        };
    });
}

inline Tensor scale(const Tensor& x, double c) {
    return detail::unary(x, [c](double v) { return v * c; }, [c](double, double) { return c; });
}

inline Tensor add_scalar(const Tensor& x, double c) {
    return detail::unary(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

inline Tensor neg(const Tensor& x) { return scale(x, -1.0); }

inline Tensor square(const Tensor& x) {
    return detail::unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

inline Tensor sqrt(const Tensor& x) {
    return detail::unary(x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

inline Tensor exp(const Tensor& x) {
    return detail::unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& x) {
    return detail::unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

/// |x|; the subgradient at 0 is taken as 0.
inline Tensor abs(const Tensor& x) {
    return detail::unary(
        x, [](double v) { return std::fabs(v); },
        [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

/// Clamp into [lo, hi]; gradient passes only where the input is strictly inside.
inline Tensor clamp(const Tensor& x, double lo, double hi) {
    return detail::unary(
        x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
        [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

/// −log(clamp(p, eps, 1)), the building block of every adversarial term.
inline Tensor neg_log_clamped(const Tensor& p, double eps = 1e-7) { return neg(log(clamp(p, eps, 1.0))); }

// ---------------------------------------------------------------------------
// Activations

enum class Activation { relu, gelu, sigmoid };

inline Activation parse_activation(std::string_view name) {
    if (name == "relu") return Activation::relu;
    if (name == "gelu") return Activation::gelu;
    if (name == "sigmoid") return Activation::sigmoid;
    throw ConfigError("unknown activation '" + std::string(name) + "' (expected relu, gelu or sigmoid)");
}

inline Tensor relu(const Tensor& x) {
    return detail::unary(
        x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

/// Exact GELU, x·Φ(x) with Φ the standard normal CDF.
inline Tensor gelu(const Tensor& x) {
    return detail::unary(
        x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
        [](double v, double) {
            const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
            const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
            return cdf + v * pdf;
        });
}

inline Tensor sigmoid(const Tensor& x) {
    return detail::unary(
        x,
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

inline Tensor activation(Activation kind, const Tensor& x) {
    switch (kind) {
        case Activation::relu: return relu(x);
        case Activation::gelu: return gelu(x);
        case Activation::sigmoid: return sigmoid(x);
    }
    throw ConfigError("unknown activation kind");
}

inline Tensor activation(std::string_view kind, const Tensor& x) { return activation(parse_activation(kind), x); }

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.values()) total += v;
    return Tensor::make_result({1}, {total}, {x}, [&] {
        return [xn = x.node()](const std::vector<double>& g) {
            if (double* gx = detail::grad_slot(xn))
                for (std::size_t i = 0; i < xn->values.size(); ++i) gx[i] += g[0];
        };
    });
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

/// Sum over one axis; the axis is removed from the result (a rank-1 input yields shape [1]).
inline Tensor sum_axis(const Tensor& x, std::size_t axis) {
    const Shape& s = x.shape();
    if (axis >= s.size()) throw DimensionError("sum_axis: axis " + std::to_string(axis) + " invalid for " + shape_str(s));
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t n = s[axis];
    Shape out_shape;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (i != axis) out_shape.push_back(s[i]);
    if (out_shape.empty()) out_shape.push_back(1);
    auto xv = x.values();
    std::vector<double> out(outer * inner, 0.0);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += xv[(o * n + k) * inner + i];
    return Tensor::make_result(out_shape, std::move(out), {x}, [&] {
        return [xn = x.node(), outer, inner, n](const std::vector<double>& g) {
            double* gx = detail::grad_slot(xn);
            if (!gx) return;
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t k = 0; k < n; ++k)
                    for (std::size_t i = 0; i < inner; ++i) gx[(o * n + k) * inner + i] += g[o * inner + i];
        };
    });
}

inline Tensor mean_axis(const Tensor& x, std::size_t axis) {
    return scale(sum_axis(x, axis), 1.0 / static_cast<double>(x.dim(axis)));
}

// ---------------------------------------------------------------------------
// Layout ops

inline Tensor reshape(const Tensor& x, const Shape& shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    std::vector<double> out(x.values().begin(), x.values().end());
    return Tensor::make_result(shape, std::move(out), {x}, [&] {
        return [xn = x.node()](const std::vector<double>& g) {
            if (double* gx = detail::grad_slot(xn))
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        };
    });
}

inline Tensor flatten(const Tensor& x) { return reshape(x, {x.numel()}); }

/// out[i] = x[index[i]]; gradients scatter-add back. Backs patchify, slicing and transposition.
inline Tensor gather(const Tensor& x, std::vector<std::size_t> index, const Shape& shape) {
    if (shape_numel(shape) != index.size()) {
        throw DimensionError("gather: " + std::to_string(index.size()) + " indices for shape " + shape_str(shape));
    }
    auto xv = x.values();
    std::vector<double> out(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= xv.size()) throw DimensionError("gather: index out of range for " + shape_str(x.shape()));
        out[i] = xv[index[i]];
    }
    return Tensor::make_result(shape, std::move(out), {x}, [&] {
        return [xn = x.node(), idx = std::move(index)](const std::vector<double>& g) {
            if (double* gx = detail::grad_slot(xn))
                for (std::size_t i = 0; i < g.size(); ++i) gx[idx[i]] += g[i];
        };
    });
}

inline Tensor transpose(const Tensor& x) {
    if (x.rank() != 2) throw DimensionError("transpose: expected a matrix, got " + shape_str(x.shape()));
    const std::size_t r = x.dim(0), c = x.dim(1);
    std::vector<std::size_t> idx(r * c);
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < r; ++j) idx[i * r + j] = j * c + i;
    return gather(x, std::move(idx), {c, r});
}

/// Slice [begin, end) along axis 0.
inline Tensor slice0(const Tensor& x, std::size_t begin, std::size_t end) {
    if (begin >= end || end > x.dim(0)) {
        throw DimensionError("slice0: range [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") invalid for " + shape_str(x.shape()));
    }
    const std::size_t row = x.numel() / x.dim(0);
    std::vector<std::size_t> idx((end - begin) * row);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin * row + i;
    Shape shape = x.shape();
    shape[0] = end - begin;
    return gather(x, std::move(idx), shape);
}

/// Columns [begin, end) of a matrix.
inline Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
    if (x.rank() != 2 || begin >= end || end > x.dim(1)) {
        throw DimensionError("slice_cols: invalid range for " + shape_str(x.shape()));
    }
    const std::size_t rows = x.dim(0), cols = x.dim(1), w = end - begin;
    std::vector<std::size_t> idx(rows * w);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < w; ++c) idx[r * w + c] = r * cols + begin + c;
    return gather(x, std::move(idx), {rows, w});
}

/// Concatenate along `axis`; all other extents must agree.
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    const Shape& first = parts.front().shape();
    if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_str(first));
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
        if (!ok) throw DimensionError("concat: " + shape_str(s) + " incompatible with " + shape_str(first));
        total += s[axis];
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
    for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
    Shape out_shape = first;
    out_shape[axis] = total;
    std::vector<double> out(outer * total * inner);
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const Tensor& p : parts) {
        offsets.push_back(off);
        const std::size_t n = p.dim(axis);
        auto pv = p.values();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(pv.begin() + o * n * inner, n * inner, out.begin() + (o * total + off) * inner);
        off += n;
    }
    return Tensor::make_result(out_shape, std::move(out), parts, [&] {
        std::vector<detail::NodePtr> nodes;
        std::vector<std::size_t> widths;
        for (const Tensor& p : parts) {
            nodes.push_back(p.node());
            widths.push_back(p.dim(axis));
        }
        return [nodes, widths, offsets, outer, inner, total](const std::vector<double>& g) {
            for (std::size_t k = 0; k < nodes.size(); ++k) {
                double* gp = detail::grad_slot(nodes[k]);
                if (!gp) continue;
                const std::size_t n = widths[k];
                for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t i = 0; i < n * inner; ++i)
                        gp[o * n * inner + i] += g[(o * total + offsets[k]) * inner + i];
            }
        };
    });
}

// ---------------------------------------------------------------------------
// Broadcasting

namespace detail {

// Flat index into b for every element of a shape that b broadcasts into (NumPy rules, b right-aligned).
inline std::vector<std::size_t> broadcast_index(const Shape& out, const Shape& b) {
    if (b.size() > out.size()) throw DimensionError("broadcast: " + shape_str(b) + " has higher rank than " + shape_str(out));
    const std::size_t lead = out.size() - b.size();
    std::vector<std::size_t> bstride(out.size(), 0);
    std::size_t stride = 1;
    for (std::size_t i = b.size(); i-- > 0;) {
        if (b[i] != out[lead + i] && b[i] != 1) {
            throw DimensionError("broadcast: " + shape_str(b) + " does not broadcast to " + shape_str(out));
        }
        bstride[lead + i] = b[i] == 1 ? 0 : stride;
        stride *= b[i];
    }
    const std::size_t n = shape_numel(out);
    std::vector<std::size_t> idx(n);
    std::vector<std::size_t> coord(out.size(), 0);
    std::size_t bi = 0;
    for (std::size_t flat = 0; flat < n; ++flat) {
        idx[flat] = bi;
        for (std::size_t d = out.size(); d-- > 0;) {
            ++coord[d];
            bi += bstride[d];
            if (coord[d] < out[d]) break;
            bi -= bstride[d] * coord[d];
            coord[d] = 0;
        }
    }
    return idx;
}

}  // namespace detail

/// x + b with b broadcast into x's shape.
inline Tensor add_broadcast(const Tensor& x, const Tensor& b) {
    auto idx = detail::broadcast_index(x.shape(), b.shape());
    auto xv = x.values();
    auto bv = b.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + bv[idx[i]];
    return Tensor::make_result(x.shape(), std::move(out), {x, b}, [&] {
        return [xn = x.node(), bn = b.node(), idx = std::move(idx)](const std::vector<double>& g) {
            if (double* gx = detail::grad_slot(xn))
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
            if (double* gb = detail::grad_slot(bn))
                for (std::size_t i = 0; i < g.size(); ++i) gb[idx[i]] += g[i];
        };
    });
}

/// x * b with b broadcast into x's shape.
inline Tensor mul_broadcast(const Tensor& x, const Tensor& b) {
    auto idx = detail::broadcast_index(x.shape(), b.shape());
    auto xv = x.values();
    auto bv = b.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * bv[idx[i]];
    return Tensor::make_result(x.shape(), std::move(out), {x, b}, [&] {
        return [xn = x.node(), bn = b.node(), idx = std::move(idx)](const std::vector<double>& g) {
            if (double* gx = detail::grad_slot(xn))
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * bn->values[idx[i]];
            if (double* gb = detail::grad_slot(bn))
                for (std::size_t i = 0; i < g.size(); ++i) gb[idx[i]] += g[i] * xn->values[i];
        };
    });
}

// ---------------------------------------------------------------------------
// Linear algebra

namespace detail {

// c[r×t] += a[r×s] · b[s×t]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t r, std::size_t s, std::size_t t) {
    for (std::size_t i = 0; i < r; ++i) {
        double* ci = c + i * t;
        for (std::size_t k = 0; k < s; ++k) {
            const double aik = a[i * s + k];
            if (aik == 0.0) continue;
            const double* bk = b + k * t;
            for (std::size_t j = 0; j < t; ++j) ci[j] += aik * bk[j];
        }
    }
}

// c[r×s] += a[r×t] · b[s×t]ᵀ
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t r, std::size_t s, std::size_t t) {
    for (std::size_t i = 0; i < r; ++i) {
        const double* ai = a + i * t;
        for (std::size_t k = 0; k < s; ++k) {
            const double* bk = b + k * t;
            double acc = 0.0;
            for (std::size_t j = 0; j < t; ++j) acc += ai[j] * bk[j];
            c[i * s + k] += acc;
        }
    }
}

// c[s×t] += a[r×s]ᵀ · b[r×t]
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t r, std::size_t s, std::size_t t) {
    for (std::size_t i = 0; i < r; ++i) {
        const double* bi = b + i * t;
        for (std::size_t k = 0; k < s; ++k) {
            const double aik = a[i * s + k];
            if (aik == 0.0) continue;
            double* ck = c + k * t;
            for (std::size_t j = 0; j < t; ++j) ck[j] += aik * bi[j];
        }
    }
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
    }
    const std::size_t r = a.dim(0), s = a.dim(1), t = b.dim(1);
    std::vector<double> out(r * t, 0.0);
    detail::gemm_nn(a.values().data(), b.values().data(), out.data(), r, s, t);
    return Tensor::make_result({r, t}, std::move(out), {a, b}, [&] {
        return [an = a.node(), bn = b.node(), r, s, t](const std::vector<double>& g) {
            if (double* ga = detail::grad_slot(an)) detail::gemm_nt(g.data(), bn->values.data(), ga, r, s, t);
            if (double* gb = detail::grad_slot(bn)) detail::gemm_tn(an->values.data(), g.data(), gb, r, s, t);
        };
    });
}

/// x·W + b for x [N×in], W [in×out], b [out] (b may be undefined).
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {}) {
    Tensor y = matmul(x, weight);
    return bias.defined() ? add_broadcast(y, bias) : y;
}

// ---------------------------------------------------------------------------
// Normalisation and attention building blocks

/// Softmax along `axis` with max subtraction.
inline Tensor softmax(const Tensor& x, std::size_t axis) {
    const Shape& s = x.shape();
    if (axis >= s.size()) throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(s));
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t n = s[axis];
    auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * n * inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, xv[base + k * inner]);
            double z = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double e = std::exp(xv[base + k * inner] - mx);
                out[base + k * inner] = e;
                z += e;
            }
            for (std::size_t k = 0; k < n; ++k) out[base + k * inner] /= z;
        }
    }
    std::vector<double> y = out;
    return Tensor::make_result(s, std::move(out), {x}, [&] {
        return [xn = x.node(), y = std::move(y), outer, inner, n](const std::vector<double>& g) {
            double* gx = detail::grad_slot(xn);
            if (!gx) return;
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t i = 0; i < inner; ++i) {
                    const std::size_t base = o * n * inner + i;
                    double dot = 0.0;
                    for (std::size_t k = 0; k < n; ++k) dot += g[base + k * inner] * y[base + k * inner];
                    for (std::size_t k = 0; k < n; ++k)
                        gx[base + k * inner] += y[base + k * inner] * (g[base + k * inner] - dot);
                }
            }
        };
    });
}

/// Layer normalisation over the last axis followed by the affine map gain⊙x̂ + bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
    if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
    const std::size_t d = x.shape().back();
    if (gain.numel() != d || bias.numel() != d) {
        throw DimensionError("layer_norm: gain/bias of " + std::to_string(gain.numel()) + "/" +
                             std::to_string(bias.numel()) + " for feature width " + std::to_string(d));
    }
    const std::size_t rows = x.numel() / d;
    auto xv = x.values();
    auto gv = gain.values();
    auto bv = bias.values();
    std::vector<double> xhat(xv.size()), inv_std(rows), out(xv.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(d);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[r * d + j] = (row[j] - mu) * inv_std[r];
            out[r * d + j] = gv[j] * xhat[r * d + j] + bv[j];
        }
    }
    return Tensor::make_result(x.shape(), std::move(out), {x, gain, bias}, [&] {
        return [xn = x.node(), gn = gain.node(), bn = bias.node(), xhat = std::move(xhat),
                inv_std = std::move(inv_std), rows, d](const std::vector<double>& g) {
            const auto& gamma = gn->values;
            if (double* gg = detail::grad_slot(gn))
                for (std::size_t i = 0; i < g.size(); ++i) gg[i % d] += g[i] * xhat[i];
            if (double* gb = detail::grad_slot(bn))
                for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
            if (double* gx = detail::grad_slot(xn)) {
                const double inv_d = 1.0 / static_cast<double>(d);
                for (std::size_t r = 0; r < rows; ++r) {
                    double s1 = 0.0, s2 = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double gh = g[r * d + j] * gamma[j];
                        s1 += gh;
                        s2 += gh * xhat[r * d + j];
                    }
                    for (std::size_t j = 0; j < d; ++j) {
                        const double gh = g[r * d + j] * gamma[j];
                        gx[r * d + j] += inv_std[r] * (gh - inv_d * s1 - xhat[r * d + j] * inv_d * s2);
                    }
                }
            }
        };
    });
}

// ---------------------------------------------------------------------------
// Similarities and classification losses

/// Cosine similarity between corresponding rows of u and v (axis 0 indexes rows,
/// everything else is flattened). A row pair with a zero vector scores 0.
inline Tensor rowwise_cosine(const Tensor& u, const Tensor& v) {
    detail::require_same_shape(u, v, "cosine_similarity");
    const std::size_t rows = u.rank() >= 2 ? u.dim(0) : 1;
    const std::size_t d = u.numel() / rows;
    auto uv = u.values();
    auto vv = v.values();
    std::vector<double> out(rows), nu(rows), nv(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0, uu = 0.0, vv2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            dot += uv[r * d + j] * vv[r * d + j];
            uu += uv[r * d + j] * uv[r * d + j];
            vv2 += vv[r * d + j] * vv[r * d + j];
        }
        nu[r] = std::sqrt(uu);
        nv[r] = std::sqrt(vv2);
        out[r] = (nu[r] > 0.0 && nv[r] > 0.0) ? std::clamp(dot / (nu[r] * nv[r]), -1.0, 1.0) : 0.0;
    }
    std::vector<double> cos = out;
    return Tensor::make_result({rows}, std::move(out), {u, v}, [&] {
        return [un = u.node(), vn = v.node(), cos = std::move(cos), nu = std::move(nu), nv = std::move(nv), rows,
                d](const std::vector<double>& g) {
            double* gu = detail::grad_slot(un);
            double* gv = detail::grad_slot(vn);
            const auto& a = un->values;
            const auto& b = vn->values;
            for (std::size_t r = 0; r < rows; ++r) {
                if (!(nu[r] > 0.0 && nv[r] > 0.0)) continue;
                const double inv = 1.0 / (nu[r] * nv[r]);
                for (std::size_t j = 0; j < d; ++j) {
                    const std::size_t i = r * d + j;
                    if (gu) gu[i] += g[r] * (b[i] * inv - cos[r] * a[i] / (nu[r] * nu[r]));
                    if (gv) gv[i] += g[r] * (a[i] * inv - cos[r] * b[i] / (nv[r] * nv[r]));
                }
            }
        };
    });
}

/// ⟨u,v⟩/(‖u‖‖v‖) over the flattened tensors; 0 when either vector is zero.
inline Tensor cosine_similarity(const Tensor& u, const Tensor& v) {
    detail::require_same_shape(u, v, "cosine_similarity");
    return rowwise_cosine(reshape(u, {1, u.numel()}), reshape(v, {1, v.numel()}));
}

/// Cross-entropy of a logit vector against a class index, via log-sum-exp.
inline Tensor cross_entropy(const Tensor& logits, std::size_t label) {
    const std::size_t k = logits.numel();
    if (label >= k) throw ValidationError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                                          std::to_string(k) + " classes");
    auto z = logits.values();
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    std::vector<double> p(k);
    for (std::size_t i = 0; i < k; ++i) p[i] = std::exp(z[i] - lse);
    return Tensor::make_result({1}, {lse - z[label]}, {logits}, [&] {
        return [ln = logits.node(), p = std::move(p), label](const std::vector<double>& g) {
            if (double* gl = detail::grad_slot(ln))
                for (std::size_t i = 0; i < p.size(); ++i) gl[i] += g[0] * (p[i] - (i == label ? 1.0 : 0.0));
        };
    });
}

}  // namespace mrsr
