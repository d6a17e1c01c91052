#pragma once

// Full-reference image quality: PSNR, SSIM and NMSE.

#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "mrsr/core/image.hpp"

namespace mrsr {

inline double mse(const Image& ref, const Image& test) {
    require_same_extents(ref, test, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < ref.pixels.size(); ++i) {
        const double d = ref.pixels[i] - test.pixels[i];
        acc += d * d;
    }
    return acc / static_cast<double>(ref.pixels.size());
}

/// 10·log10(peak² / MSE); +inf when the images are identical.
inline double psnr(const Image& ref, const Image& test, double peak = 1.0) {
    if (!(peak > 0.0)) throw DomainError("psnr: peak must be positive");
    const double e = mse(ref, test);
    if (e == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / e);
}

struct SsimParams {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double peak = 1.0;
};

namespace detail {

inline std::vector<double> gaussian_taps(std::size_t n, double sigma) {
    std::vector<double> g(n);
    const double c = (static_cast<double>(n) - 1.0) / 2.0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(i) - c;
        g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        total += g[i];
    }
    for (double& v : g) v /= total;
    return g;
}

// Valid-only separable filtering of an [h x w] plane.
inline std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                        const std::vector<double>& taps) {
    const std::size_t n = taps.size(), oh = h - n + 1, ow = w - n + 1;
    std::vector<double> rows(h * ow, 0.0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += taps[k] * src[y * w + x + k];
            rows[y * ow + x] = acc;
        }
    std::vector<double> out(oh * ow, 0.0);
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += taps[k] * rows[(y + k) * ow + x];
            out[y * ow + x] = acc;
        }
    return out;
}

}  // namespace detail

/// Mean local SSIM over every fully contained Gaussian window (no padding).
inline double ssim(const Image& ref, const Image& test, const SsimParams& p = {}) {
    require_same_extents(ref, test, "ssim");
    if (ref.height < p.window || ref.width < p.window) {
        throw DimensionError("ssim: image " + ref.extents_str() + " is smaller than the " + std::to_string(p.window) +
                             "x" + std::to_string(p.window) + " window");
    }
    const auto taps = detail::gaussian_taps(p.window, p.sigma);
    const std::size_t h = ref.height, w = ref.width, n = h * w;
    std::vector<double> xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        xx[i] = ref.pixels[i] * ref.pixels[i];
        yy[i] = test.pixels[i] * test.pixels[i];
        xy[i] = ref.pixels[i] * test.pixels[i];
    }
    const auto mx = detail::filter_valid(ref.pixels, h, w, taps);
    const auto my = detail::filter_valid(test.pixels, h, w, taps);
    const auto sxx = detail::filter_valid(xx, h, w, taps);
    const auto syy = detail::filter_valid(yy, h, w, taps);
    const auto sxy = detail::filter_valid(xy, h, w, taps);
    const double c1 = (p.k1 * p.peak) * (p.k1 * p.peak);
    const double c2 = (p.k2 * p.peak) * (p.k2 * p.peak);
    double total = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i];
        const double vy = syy[i] - my[i] * my[i];
        const double cov = sxy[i] - mx[i] * my[i];
        total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
                 ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    return total / static_cast<double>(mx.size());
}

/// ‖ref − test‖² / ‖ref‖².
inline double nmse(const Image& ref, const Image& test) {
    require_same_extents(ref, test, "nmse");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < ref.pixels.size(); ++i) {
        const double d = ref.pixels[i] - test.pixels[i];
        num += d * d;
        den += ref.pixels[i] * ref.pixels[i];
    }
    if (den == 0.0) throw DomainError("nmse: reference image is identically zero");
    return num / den;
}

struct MetricRecord {
    std::string pair_id;
    int scale = 1;
    double psnr = 0.0;
    double ssim = 0.0;
    double nmse = 0.0;
};

inline MetricRecord evaluate_pair(const Image& ref, const Image& test, int scale, std::string pair_id = {},
                                  double peak = 1.0) {
    require_same_extents(ref, test, "evaluate_pair");
    SsimParams p;
    p.peak = peak;
    return {std::move(pair_id), scale, psnr(ref, test, peak), ssim(ref, test, p), nmse(ref, test)};
}

/// Field-wise arithmetic mean; an infinite PSNR anywhere makes the mean infinite.
inline MetricRecord mean_record(const std::vector<MetricRecord>& records, std::string pair_id = "mean") {
    if (records.empty()) throw DataError("mean_record: no records");
    MetricRecord m;
    m.pair_id = std::move(pair_id);
    m.scale = records.front().scale;
    for (const auto& r : records) {
        m.psnr += r.psnr;
        m.ssim += r.ssim;
        m.nmse += r.nmse;
    }
    const double n = static_cast<double>(records.size());
    m.psnr /= n;
    m.ssim /= n;
    m.nmse /= n;
    return m;
}

inline std::string format_metric(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline double parse_metric(const std::string& s) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    return std::stod(s);
}

/// Per-pair rows; with a non-empty `baseline` (same length, same order) three
/// bicubic_* columns are appended.
inline void write_metrics_csv(const std::vector<MetricRecord>& records, const std::string& path,
                              const std::vector<MetricRecord>& baseline = {}) {
    if (!baseline.empty() && baseline.size() != records.size()) {
        throw DimensionError("write_metrics_csv: baseline has " + std::to_string(baseline.size()) + " rows, expected " +
                             std::to_string(records.size()));
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write metrics CSV " + path);
    out << "pair_id,scale,psnr_db,ssim,nmse";
    if (!baseline.empty()) out << ",bicubic_psnr_db,bicubic_ssim,bicubic_nmse";
    out << '\n';
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        out << r.pair_id << ',' << r.scale << ',' << format_metric(r.psnr) << ',' << format_metric(r.ssim) << ','
            << format_metric(r.nmse);
        if (!baseline.empty()) {
            const auto& b = baseline[i];
            out << ',' << format_metric(b.psnr) << ',' << format_metric(b.ssim) << ',' << format_metric(b.nmse);
        }
        out << '\n';
    }
    if (!out) throw IoError("failed writing metrics CSV " + path);
}

}  // namespace mrsr
