#pragma once

// Spatial ops on [C,H,W] or [B,C,H,W] tensors.
//
// Convolution arithmetic (square kernel k, stride s, zero padding p):
//   forward:    H_out = floor((H + 2p - k) / s) + 1
//   transposed: H_out = s * H, the exact adjoint of the forward conv that maps
//               s*H back onto H with the same kernel tensor. A transposed conv
//               with kernels [A, B, k, k] takes A channels in and gives B out,
//               so <conv(x, K), y> == <x, conv_transposed(y, K)>.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "mrsr/core/ops.hpp"

namespace mrsr {

struct Conv2dOptions {
    std::size_t stride = 1;
    std::size_t padding = 0;
    bool transposed = false;
};

namespace detail {

struct ConvGeometry {
    std::size_t channels, height, width;  // image side (input of the forward conv)
    std::size_t kernel, stride, padding;
    std::size_t out_h, out_w;             // grid side (output of the forward conv)

    std::size_t rows() const { return channels * kernel * kernel; }
    std::size_t cols() const { return out_h * out_w; }
};

inline void im2col(const double* img, const ConvGeometry& g, double* cols) {
    const std::size_t k = g.kernel, n = g.cols();
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                double* row = cols + ((c * k + ky) * k + kx) * n;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
                    double* dst = row + oy * g.out_w;
                    if (iy < 0 || iy >= static_cast<long>(g.height)) {
                        std::fill_n(dst, g.out_w, 0.0);
                        continue;
                    }
                    const double* src = img + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
                        dst[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? 0.0 : src[ix];
                    }
                }
            }
        }
    }
}

inline void col2im_add(const double* cols, const ConvGeometry& g, double* img) {
    const std::size_t k = g.kernel, n = g.cols();
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                const double* row = cols + ((c * k + ky) * k + kx) * n;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
                    if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
                    double* dst = img + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
                    const double* src = row + oy * g.out_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
                        if (ix >= 0 && ix < static_cast<long>(g.width)) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
    if (in + 2 * p < k) {
        throw DimensionError("conv2d: kernel " + std::to_string(k) + " larger than padded extent " +
                             std::to_string(in + 2 * p));
    }
    return (in + 2 * p - k) / s + 1;
}

// Splits [C,H,W] / [B,C,H,W] into (batch, channels, height, width).
inline std::array<std::size_t, 4> nchw(const Tensor& x, const char* op) {
    if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2)};
    if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
    throw DimensionError(std::string(op) + ": expected [C,H,W] or [B,C,H,W], got " + shape_str(x.shape()));
}

inline Shape with_nchw(const Tensor& like, std::size_t b, std::size_t c, std::size_t h, std::size_t w) {
    if (like.rank() == 3) return {c, h, w};
    return {b, c, h, w};
}

}  // namespace detail

inline Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias = {}, Conv2dOptions opt = {}) {
    if (kernels.rank() != 4 || kernels.dim(2) != kernels.dim(3)) {
        throw DimensionError("conv2d: kernels must be [C_out, C_in, k, k], got " + shape_str(kernels.shape()));
    }
    const std::size_t k = kernels.dim(2);
    if (k % 2 == 0) throw DimensionError("conv2d: kernel size must be odd, got " + std::to_string(k));
    if (opt.stride == 0) throw ConfigError("conv2d: stride must be >= 1");
    const auto [batch, cin, h, w] = detail::nchw(x, "conv2d");
    const std::size_t kin = opt.transposed ? kernels.dim(0) : kernels.dim(1);
    const std::size_t kout = opt.transposed ? kernels.dim(1) : kernels.dim(0);
    if (cin != kin) {
        throw DimensionError("conv2d: input " + shape_str(x.shape()) + " has " + std::to_string(cin) +
                             " channels, kernels " + shape_str(kernels.shape()) + " expect " + std::to_string(kin));
    }
    if (bias.defined() && bias.numel() != kout) {
        throw DimensionError("conv2d: bias of " + std::to_string(bias.numel()) + " for " + std::to_string(kout) +
                             " output channels");
    }

    detail::ConvGeometry geo{};
    std::size_t oh = 0, ow = 0;
    if (!opt.transposed) {
        oh = detail::conv_out_extent(h, k, opt.stride, opt.padding);
        ow = detail::conv_out_extent(w, k, opt.stride, opt.padding);
        geo = {cin, h, w, k, opt.stride, opt.padding, oh, ow};
    } else {
        oh = h * opt.stride;
        ow = w * opt.stride;
        if (detail::conv_out_extent(oh, k, opt.stride, opt.padding) != h ||
            detail::conv_out_extent(ow, k, opt.stride, opt.padding) != w) {
            throw DimensionError("conv2d: transposed geometry k=" + std::to_string(k) + " s=" +
                                 std::to_string(opt.stride) + " p=" + std::to_string(opt.padding) +
                                 " does not invert onto " + shape_str(x.shape()));
        }
        geo = {kout, oh, ow, k, opt.stride, opt.padding, h, w};
    }

    const std::size_t in_plane = cin * h * w;
    const std::size_t out_plane = kout * oh * ow;
    const double* wm = kernels.values().data();
    const double* xv = x.values().data();
    std::vector<double> out(batch * out_plane, 0.0);
    std::vector<double> cols(geo.rows() * geo.cols());

    for (std::size_t b = 0; b < batch; ++b) {
        double* ob = out.data() + b * out_plane;
        if (!opt.transposed) {
            detail::im2col(xv + b * in_plane, geo, cols.data());
            detail::gemm_nn(wm, cols.data(), ob, kout, geo.rows(), geo.cols());
        } else {
            std::fill(cols.begin(), cols.end(), 0.0);
            detail::gemm_tn(wm, xv + b * in_plane, cols.data(), cin, geo.rows(), geo.cols());
            detail::col2im_add(cols.data(), geo, ob);
        }
        if (bias.defined()) {
            auto bv = bias.values();
            for (std::size_t c = 0; c < kout; ++c)
                for (std::size_t i = 0; i < oh * ow; ++i) ob[c * oh * ow + i] += bv[c];
        }
    }

    return Tensor::make_result(detail::with_nchw(x, batch, kout, oh, ow), std::move(out), {x, kernels, bias}, [&] {
        return [xn = x.node(), kn = kernels.node(), bn = bias.defined() ? bias.node() : detail::NodePtr{}, geo, batch,
                cin, kout, in_plane, out_plane, oh, ow, transposed = opt.transposed](const std::vector<double>& g) {
            double* gx = detail::grad_slot(xn);
            double* gk = detail::grad_slot(kn);
            double* gb = detail::grad_slot(bn);
            const double* wm = kn->values.data();
            std::vector<double> cols(geo.rows() * geo.cols());
            for (std::size_t b = 0; b < batch; ++b) {
                const double* gout = g.data() + b * out_plane;
                if (gb)
                    for (std::size_t c = 0; c < kout; ++c)
                        for (std::size_t i = 0; i < oh * ow; ++i) gb[c] += gout[c * oh * ow + i];
                if (!transposed) {
                    if (gk) {
                        detail::im2col(xn->values.data() + b * in_plane, geo, cols.data());
                        detail::gemm_nt(gout, cols.data(), gk, kout, geo.rows(), geo.cols());
                    }
                    if (gx) {
                        std::fill(cols.begin(), cols.end(), 0.0);
                        detail::gemm_tn(wm, gout, cols.data(), kout, geo.rows(), geo.cols());
                        detail::col2im_add(cols.data(), geo, gx + b * in_plane);
                    }
                } else {
                    detail::im2col(gout, geo, cols.data());
                    if (gx) detail::gemm_nn(wm, cols.data(), gx + b * in_plane, cin, geo.rows(), geo.cols());
                    if (gk) detail::gemm_nt(xn->values.data() + b * in_plane, cols.data(), gk, cin, geo.rows(), geo.cols());
                }
            }
        };
    });
}

/// Windowed maximum without padding. Gradient goes to the first maximal element
/// of each window in row-major order.
inline Tensor max_pool2d(const Tensor& x, std::size_t window, std::size_t stride) {
    if (window == 0 || stride == 0) throw ConfigError("max_pool2d: window and stride must be >= 1");
    const auto [batch, c, h, w] = detail::nchw(x, "max_pool2d");
    if (window > h || window > w) {
        throw DimensionError("max_pool2d: window " + std::to_string(window) + " larger than input " +
                             shape_str(x.shape()));
    }
    if ((h - window) % stride != 0 || (w - window) % stride != 0) {
        throw DimensionError("max_pool2d: window " + std::to_string(window) + " / stride " + std::to_string(stride) +
                             " do not tile " + shape_str(x.shape()));
    }
    const std::size_t oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
    auto xv = x.values();
    std::vector<double> out(batch * c * oh * ow);
    std::vector<std::size_t> arg(out.size());
    for (std::size_t plane = 0; plane < batch * c; ++plane) {
        const std::size_t base = plane * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                std::size_t best = base + (oy * stride) * w + ox * stride;
                for (std::size_t ky = 0; ky < window; ++ky)
                    for (std::size_t kx = 0; kx < window; ++kx) {
                        const std::size_t i = base + (oy * stride + ky) * w + ox * stride + kx;
                        if (xv[i] > xv[best]) best = i;
                    }
                const std::size_t o = (plane * oh + oy) * ow + ox;
                out[o] = xv[best];
                arg[o] = best;
            }
        }
    }
    return Tensor::make_result(detail::with_nchw(x, batch, c, oh, ow), std::move(out), {x}, [&] {
        return [xn = x.node(), arg = std::move(arg)](const std::vector<double>& g) {
            if (double* gx = detail::grad_slot(xn))
                for (std::size_t i = 0; i < g.size(); ++i) gx[arg[i]] += g[i];
        };
    });
}

/// Running statistics of a batch-norm layer (buffers, never trained).
struct BatchNormStats {
    Tensor running_mean;
    Tensor running_var;

    static BatchNormStats init(std::size_t channels) {
        return {Tensor::zeros({channels}), Tensor::full({channels}, 1.0)};
    }
};

/// Per-channel batch normalisation. Training mode normalises with batch
/// statistics over (B,H,W) and updates the running estimates; evaluation mode
/// uses the running estimates.
inline Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                           bool training, double momentum = 0.1, double eps = 1e-5) {
    const auto [batch, c, h, w] = detail::nchw(x, "batch_norm2d");
    if (gamma.numel() != c || beta.numel() != c) {
        throw DimensionError("batch_norm2d: affine parameters do not match " + std::to_string(c) + " channels");
    }
    const std::size_t hw = h * w;
    const std::size_t count = batch * hw;
    auto xv = x.values();
    auto gv = gamma.values();
    auto bv = beta.values();
    std::vector<double> mu(c), inv_std(c);
    if (training) {
        auto rm = stats.running_mean.data();
        auto rv = stats.running_var.data();
        for (std::size_t ch = 0; ch < c; ++ch) {
            double s = 0.0;
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t i = 0; i < hw; ++i) s += xv[(b * c + ch) * hw + i];
            mu[ch] = s / static_cast<double>(count);
            double v = 0.0;
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t i = 0; i < hw; ++i) {
                    const double d = xv[(b * c + ch) * hw + i] - mu[ch];
                    v += d * d;
                }
            const double var = v / static_cast<double>(count);
            inv_std[ch] = 1.0 / std::sqrt(var + eps);
            const double unbiased = count > 1 ? v / static_cast<double>(count - 1) : var;
            rm[ch] = (1.0 - momentum) * rm[ch] + momentum * mu[ch];
            rv[ch] = (1.0 - momentum) * rv[ch] + momentum * unbiased;
        }
    } else {
        auto rm = stats.running_mean.values();
        auto rv = stats.running_var.values();
        for (std::size_t ch = 0; ch < c; ++ch) {
            mu[ch] = rm[ch];
            inv_std[ch] = 1.0 / std::sqrt(rv[ch] + eps);
        }
    }
    std::vector<double> xhat(xv.size()), out(xv.size());
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < hw; ++i) {
                const std::size_t idx = (b * c + ch) * hw + i;
                xhat[idx] = (xv[idx] - mu[ch]) * inv_std[ch];
                out[idx] = gv[ch] * xhat[idx] + bv[ch];
            }
    return Tensor::make_result(x.shape(), std::move(out), {x, gamma, beta}, [&] {
        return [xn = x.node(), gn = gamma.node(), bn = beta.node(), xhat = std::move(xhat), inv_std, batch, c, hw,
                count, training](const std::vector<double>& g) {
            double* gg = detail::grad_slot(gn);
            double* gb = detail::grad_slot(bn);
            double* gx = detail::grad_slot(xn);
            const auto& gamma_v = gn->values;
            for (std::size_t ch = 0; ch < c; ++ch) {
                double s1 = 0.0, s2 = 0.0;
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t i = 0; i < hw; ++i) {
                        const std::size_t idx = (b * c + ch) * hw + i;
                        s1 += g[idx];
                        s2 += g[idx] * xhat[idx];
                    }
                if (gg) gg[ch] += s2;
                if (gb) gb[ch] += s1;
                if (!gx) continue;
                const double scale = gamma_v[ch] * inv_std[ch];
                const double inv_n = 1.0 / static_cast<double>(count);
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t i = 0; i < hw; ++i) {
                        const std::size_t idx = (b * c + ch) * hw + i;
                        gx[idx] += training ? scale * (g[idx] - inv_n * s1 - xhat[idx] * inv_n * s2) : scale * g[idx];
                    }
            }
        };
    });
}

/// Mean over the spatial axes: [B,C,H,W] -> [B,C] (or [C,H,W] -> [1,C]).
inline Tensor global_avg_pool(const Tensor& x) {
    const auto [batch, c, h, w] = detail::nchw(x, "global_avg_pool");
    return mean_axis(reshape(x, {batch, c, h * w}), 2);
}

}  // namespace mrsr
