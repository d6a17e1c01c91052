#pragma once

// Slice normalisation, degradation and LR/HR patch pairing.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mrsr/core/error.hpp"
#include "mrsr/core/image.hpp"
#include "mrsr/metrics/resize.hpp"

namespace mrsr {

struct SliceSet {
    std::vector<Image> slices;
    std::string source;
    std::string modality = "unknown";
    int label = 0;  // organ / class tag used by the pretext task
};

struct PatchPair {
    Image lr;
    Image hr;
    int m = 1;
    std::size_t lr_y = 0, lr_x = 0;  // top-left corner of the LR patch
    std::size_t hr_y = 0, hr_x = 0;  // top-left corner of the HR patch (= m x LR corner)
};

/// Per-slice min-max scaling to [0,1]; constant slices become all zeros.
inline Image normalize(const Image& img) {
    if (img.pixels.empty()) return img;
    double lo = img.pixels[0], hi = img.pixels[0];
    for (double v : img.pixels) {
        if (std::isnan(v)) throw DataError("normalize: slice contains NaN");
        if (!std::isfinite(v)) throw DataError("normalize: slice contains a non-finite value");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    Image out(img.height, img.width, 0.0);
    if (hi == lo) return out;
    const double range = hi - lo;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) out.pixels[i] = (img.pixels[i] - lo) / range;
    return out;
}

inline void require_power_of_two(int m) {
    if (m < 2 || (m & (m - 1)) != 0) {
        throw ConfigError("upscaling factor must be a power-of-two >= 2, got " + std::to_string(m));
    }
}

/// Bicubic downsample by 1/m (anti-aliased kernel).
inline Image degrade(const Image& hr, int m) {
    if (m < 1) throw DimensionError("degrade: factor must be positive");
    const auto um = static_cast<std::size_t>(m);
    if (hr.height % um != 0 || hr.width % um != 0) {
        throw DimensionError("degrade: extents " + hr.extents_str() + " are not divisible by " + std::to_string(m));
    }
    return bicubic_resize(hr, hr.height / um, hr.width / um);
}

inline Image crop(const Image& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
    if (y0 + h > img.height || x0 + w > img.width) {
        throw DimensionError("crop " + std::to_string(h) + "x" + std::to_string(w) + " at (" + std::to_string(y0) +
                             "," + std::to_string(x0) + ") exceeds image " + img.extents_str());
    }
    Image out(h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out(y, x) = img(y0 + y, x0 + x);
    return out;
}

/// n x n LR patch at the floor-centred offset and the matching mn x mn HR patch.
inline PatchPair center_patch_pair(const Image& lr, const Image& hr, std::size_t n, int m) {
    if (m < 1) throw DimensionError("center_patch_pair: factor must be positive");
    const auto um = static_cast<std::size_t>(m);
    if (hr.height != um * lr.height || hr.width != um * lr.width) {
        throw DimensionError("center_patch_pair: HR " + hr.extents_str() + " is not " + std::to_string(m) + "x LR " +
                             lr.extents_str());
    }
    if (n == 0 || n > lr.height || n > lr.width) {
        throw DimensionError("center_patch_pair: patch " + std::to_string(n) + " exceeds LR image " + lr.extents_str());
    }
    PatchPair p;
    p.m = m;
    p.lr_y = (lr.height - n) / 2;
    p.lr_x = (lr.width - n) / 2;
    p.hr_y = um * p.lr_y;
    p.hr_x = um * p.lr_x;
    p.lr = crop(lr, p.lr_y, p.lr_x, n, n);
    p.hr = crop(hr, p.hr_y, p.hr_x, um * n, um * n);
    return p;
}

/// Degrades each HR image and pairs full-extent patches.
inline std::vector<PatchPair> make_pairs(const std::vector<Image>& hr_images, int m) {
    std::vector<PatchPair> pairs;
    pairs.reserve(hr_images.size());
    for (const Image& hr : hr_images) {
        Image lr = degrade(hr, m);
        pairs.push_back(center_patch_pair(lr, hr, std::min(lr.height, lr.width), m));
    }
    return pairs;
}

}  // namespace mrsr
