#pragma once

// Seeded synthetic MR-like slices: a bright outer ellipse with a smooth bias
// field and a handful of rotated inner ellipses, edges anti-aliased over about
// one pixel. Values are clamped to [0,1].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mrsr/core/error.hpp"
#include "mrsr/core/image.hpp"
#include "mrsr/data/pipeline.hpp"

namespace mrsr {

namespace detail {

struct Ellipse {
    double cy, cx, ry, rx, angle, value;
};

// Coverage in [0,1] of pixel (u,v) by the ellipse, ramped across `soft` of the normalised radius.
inline double ellipse_cover(const Ellipse& e, double u, double v, double soft) {
    const double c = std::cos(e.angle), s = std::sin(e.angle);
    const double du = u - e.cx, dv = v - e.cy;
    const double a = (c * du + s * dv) / e.rx;
    const double b = (-s * du + c * dv) / e.ry;
    const double r = std::sqrt(a * a + b * b);
    const double t = std::clamp((1.0 + soft - r) / (2.0 * soft), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

inline Image render_phantom(std::mt19937_64& rng, std::size_t size, int inner_count, double aspect) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    auto uni = [&](double lo, double hi) { return lo + (hi - lo) * U(rng); };

    Ellipse outer{uni(-0.05, 0.05), uni(-0.05, 0.05), 0.0, 0.0, uni(-0.3, 0.3), uni(0.55, 0.75)};
    const double base = uni(0.78, 0.9);
    outer.ry = base;
    outer.rx = std::min(0.92, base / aspect);
    const double gy = uni(-0.12, 0.12), gx = uni(-0.12, 0.12);

    std::vector<Ellipse> inner;
    for (int i = 0; i < inner_count; ++i) {
        Ellipse e;
        e.cy = outer.cy + uni(-0.45, 0.45) * outer.ry;
        e.cx = outer.cx + uni(-0.45, 0.45) * outer.rx;
        e.ry = uni(0.07, 0.3);
        e.rx = uni(0.07, 0.3);
        e.angle = uni(0.0, 3.14159265358979);
        e.value = (U(rng) < 0.5 ? -1.0 : 1.0) * uni(0.15, 0.35);
        inner.push_back(e);
    }

    Image img(size, size);
    const double px = 2.0 / static_cast<double>(size);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double v = (static_cast<double>(y) + 0.5) * px - 1.0;
            const double u = (static_cast<double>(x) + 0.5) * px - 1.0;
            const double head = ellipse_cover(outer, u, v, px / outer.ry);
            double val = (outer.value + gy * v + gx * u) * head;
            for (const Ellipse& e : inner) val += e.value * ellipse_cover(e, u, v, px / std::min(e.rx, e.ry)) * head;
            img(y, x) = std::clamp(val, 0.0, 1.0);
        }
    }
    return img;
}

}  // namespace detail

inline Image synth_phantom(std::uint64_t seed, std::size_t size) {
    if (size < 32) throw DimensionError("synth_phantom: size must be at least 32, got " + std::to_string(size));
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> count(3, 6);
    const int n = count(rng);
    return detail::render_phantom(rng, size, n, 1.0);
}

/// Phantom whose class shows in its geometry: class c has 2 + 2c inner
/// structures and an outer ellipse elongated by 1 + 0.35c.
inline Image synth_labeled_phantom(std::uint64_t seed, std::size_t size, int label) {
    if (size < 32) throw DimensionError("synth_phantom: size must be at least 32, got " + std::to_string(size));
    if (label < 0) throw DataError("synth_labeled_phantom: label must be nonnegative");
    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(label + 1)));
    return detail::render_phantom(rng, size, 2 + 2 * label, 1.0 + 0.35 * label);
}

/// `count` labelled phantoms, labels cycling through [0, classes).
inline std::vector<SliceSet> synth_dataset(std::uint64_t seed, std::size_t count, std::size_t size, int classes = 2) {
    std::vector<SliceSet> sets;
    for (std::size_t i = 0; i < count; ++i) {
        SliceSet s;
        s.label = static_cast<int>(i % static_cast<std::size_t>(std::max(classes, 1)));
        s.source = "synthetic-" + std::to_string(seed) + "-" + std::to_string(i);
        s.modality = "synthetic";
        s.slices.push_back(synth_labeled_phantom(seed * 1000003ULL + i, size, s.label));
        sets.push_back(std::move(s));
    }
    return sets;
}

}  // namespace mrsr
