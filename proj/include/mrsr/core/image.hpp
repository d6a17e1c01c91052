#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mrsr/core/error.hpp"
#include "mrsr/core/tensor.hpp"

namespace mrsr {

/// Single-channel image, row-major.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}
    Image(std::size_t h, std::size_t w, std::vector<double> values) : height(h), width(w), pixels(std::move(values)) {
        if (pixels.size() != h * w) {
            throw DimensionError("image " + std::to_string(h) + "x" + std::to_string(w) + " needs " +
                                 std::to_string(h * w) + " pixels, got " + std::to_string(pixels.size()));
        }
    }

    double& operator()(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
    double operator()(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }

    bool same_extents(const Image& other) const { return height == other.height && width == other.width; }
    std::string extents_str() const { return std::to_string(height) + "x" + std::to_string(width); }

    bool operator==(const Image&) const = default;
};

inline void require_same_extents(const Image& a, const Image& b, const char* what) {
    if (!a.same_extents(b)) {
        throw DimensionError(std::string(what) + ": extents differ (" + a.extents_str() + " vs " + b.extents_str() + ")");
    }
}

/// [1, H, W] tensor (one channel) holding a copy of the pixels.
inline Tensor to_tensor(const Image& img) { return Tensor({1, img.height, img.width}, img.pixels); }

/// Stacks same-sized images into [B, 1, H, W].
inline Tensor to_batch(const std::vector<Image>& imgs) {
    if (imgs.empty()) throw DimensionError("cannot batch zero images");
    std::vector<double> v;
    v.reserve(imgs.size() * imgs[0].pixels.size());
    for (const Image& im : imgs) {
        require_same_extents(imgs[0], im, "to_batch");
        v.insert(v.end(), im.pixels.begin(), im.pixels.end());
    }
    return Tensor({imgs.size(), 1, imgs[0].height, imgs[0].width}, std::move(v));
}

/// Image from the last two axes of a tensor whose other axes are all 1.
inline Image to_image(const Tensor& t) {
    if (t.rank() < 2) throw DimensionError("to_image needs at least two axes, got " + shape_str(t.shape()));
    const std::size_t h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
    if (t.numel() != h * w) throw DimensionError("to_image expects a single channel, got " + shape_str(t.shape()));
    return Image(h, w, std::vector<double>(t.values().begin(), t.values().end()));
}

/// Image `index` of a [B, 1, H, W] batch.
inline Image batch_image(const Tensor& t, std::size_t index) {
    if (t.rank() != 4 || t.dim(1) != 1) throw DimensionError("batch_image expects [B,1,H,W], got " + shape_str(t.shape()));
    const std::size_t h = t.dim(2), w = t.dim(3);
    auto v = t.values().subspan(index * h * w, h * w);
    return Image(h, w, std::vector<double>(v.begin(), v.end()));
}

}  // namespace mrsr
