#pragma once

// Separable bicubic resampling (Catmull-Rom, a = -0.5).
//
// Output pixel i maps to source coordinate (i + 0.5) / s - 0.5 with
// s = out / in per axis. When s < 1 the kernel is stretched by 1/s and its
// weights renormalised, which low-passes before decimation. Taps outside the
// image are clamped to the border pixel. Each axis is a dense [out x in]
// weight matrix, so the same weights serve plain images (rows, then columns)
// and the differentiable tensor variant used inside training losses.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mrsr/core/image.hpp"
#include "mrsr/core/ops.hpp"

namespace mrsr {

inline double cubic_kernel(double t, double a = -0.5) {
    t = std::fabs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

/// Row-major [out x in] resampling weights along one axis.
inline std::vector<double> bicubic_weights(std::size_t in, std::size_t out) {
    if (in == 0 || out == 0) throw DimensionError("bicubic: degenerate extent " + std::to_string(in) + " -> " + std::to_string(out));
    const double s = static_cast<double>(out) / static_cast<double>(in);
    const double stretch = s < 1.0 ? 1.0 / s : 1.0;
    const double support = 2.0 * stretch;
    std::vector<double> w(out * in, 0.0);
    for (std::size_t i = 0; i < out; ++i) {
        const double center = (static_cast<double>(i) + 0.5) / s - 0.5;
        const long lo = static_cast<long>(std::floor(center - support));
        const long hi = static_cast<long>(std::ceil(center + support));
        double total = 0.0;
        double* row = w.data() + i * in;
        for (long j = lo; j <= hi; ++j) {
            const double k = cubic_kernel((static_cast<double>(j) - center) / stretch);
            if (k == 0.0) continue;
            const long jc = std::clamp(j, 0L, static_cast<long>(in) - 1);
            row[jc] += k;
            total += k;
        }
        for (std::size_t j = 0; j < in; ++j) row[j] /= total;
    }
    return w;
}

/// Output extent for a resize by `factor`: round-half-up of extent * factor.
inline std::size_t scaled_extent(std::size_t extent, double factor) {
    if (!(factor > 0.0) || !std::isfinite(factor)) throw DimensionError("bicubic: factor must be positive and finite");
    const double v = std::floor(static_cast<double>(extent) * factor + 0.5);
    if (v < 1.0) throw DimensionError("bicubic: factor " + std::to_string(factor) + " collapses extent " + std::to_string(extent));
    return static_cast<std::size_t>(v);
}

inline Image bicubic_resize(const Image& img, std::size_t out_h, std::size_t out_w) {
    if (img.height == 0 || img.width == 0) throw DimensionError("bicubic: empty input image");
    const auto wy = bicubic_weights(img.height, out_h);
    const auto wx = bicubic_weights(img.width, out_w);
    // Rows first: [H x W] -> [H x out_w], then columns.
    std::vector<double> tmp(img.height * out_w, 0.0);
    detail::gemm_nt(img.pixels.data(), wx.data(), tmp.data(), img.height, out_w, img.width);
    Image out(out_h, out_w);
    detail::gemm_nn(wy.data(), tmp.data(), out.pixels.data(), out_h, img.height, out_w);
    return out;
}

inline Image bicubic_resize(const Image& img, double factor) {
    return bicubic_resize(img, scaled_extent(img.height, factor), scaled_extent(img.width, factor));
}

/// Differentiable bicubic resize of the last two axes of x ([..., H, W]).
inline Tensor bicubic_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    if (x.rank() < 2) throw DimensionError("bicubic: tensor needs two spatial axes, got " + shape_str(x.shape()));
    const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
    const std::size_t planes = x.numel() / (h * w);
    auto wy = bicubic_weights(h, out_h);
    auto wx = bicubic_weights(w, out_w);
    Shape shape = x.shape();
    shape[shape.size() - 2] = out_h;
    shape[shape.size() - 1] = out_w;
    std::vector<double> out(planes * out_h * out_w, 0.0);
    std::vector<double> tmp(h * out_w);
    for (std::size_t p = 0; p < planes; ++p) {
        std::fill(tmp.begin(), tmp.end(), 0.0);
        detail::gemm_nt(x.values().data() + p * h * w, wx.data(), tmp.data(), h, out_w, w);
        detail::gemm_nn(wy.data(), tmp.data(), out.data() + p * out_h * out_w, out_h, h, out_w);
    }
    return Tensor::make_result(std::move(shape), std::move(out), {x}, [&] {
        return [xn = x.node(), wy = std::move(wy), wx = std::move(wx), h, w, out_h, out_w,
                planes](const std::vector<double>& g) {
            double* gx = detail::grad_slot(xn);
            if (!gx) return;
            // dX = Wyᵀ · G · Wx
            std::vector<double> tmp(h * out_w);
            for (std::size_t p = 0; p < planes; ++p) {
                std::fill(tmp.begin(), tmp.end(), 0.0);
                detail::gemm_tn(wy.data(), g.data() + p * out_h * out_w, tmp.data(), out_h, h, out_w);
                detail::gemm_nn(tmp.data(), wx.data(), gx + p * h * w, h, out_w, w);
            }
        };
    });
}

}  // namespace mrsr
