#pragma once

// Checkpoints: a flat binary of little-endian float64 values (<prefix>.bin)
// and a plain-text manifest (<prefix>.manifest):
//
//   mrsr-checkpoint 1
//   dtype float64
//   endian little
//   meta <key> <value...>                        zero or more
//   tensor <name> <byte_offset> <byte_length> <d0>x<d1>x...
//
// Tensors are stored back to back in manifest order. Loading matches tensors
// by name, so the order of a model's parameter list may change without
// invalidating old files, but every requested name must be present with the
// same shape.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mrsr/core/error.hpp"
#include "mrsr/core/params.hpp"

namespace mrsr::io {

struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::vector<NamedTensor> tensors;

    const Tensor& find(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return t.tensor;
        throw DataError("checkpoint has no tensor '" + name + "'");
    }

    std::string meta_or(const std::string& key, const std::string& fallback) const {
        auto it = meta.find(key);
        return it == meta.end() ? fallback : it->second;
    }
};

inline std::string checkpoint_bin(const std::string& prefix) { return prefix + ".bin"; }
inline std::string checkpoint_manifest(const std::string& prefix) { return prefix + ".manifest"; }

inline bool checkpoint_exists(const std::string& prefix) {
    return std::filesystem::exists(checkpoint_manifest(prefix)) && std::filesystem::exists(checkpoint_bin(prefix));
}

namespace detail {

inline void put_le(std::ostream& out, double v) {
    unsigned char b[8];
    std::memcpy(b, &v, 8);
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + 8);
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_le(const unsigned char* p) {
    unsigned char b[8];
    std::memcpy(b, p, 8);
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + 8);
    double v;
    std::memcpy(&v, b, 8);
    return v;
}

inline Shape parse_shape(const std::string& s) {
    Shape shape;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, 'x')) shape.push_back(static_cast<std::size_t>(std::stoull(part)));
    if (shape.empty()) throw DataError("checkpoint: empty shape");
    return shape;
}

inline std::string shape_token(const Shape& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out;
}

}  // namespace detail

inline void save_checkpoint(const std::string& prefix, const ParameterList& tensors,
                            const std::map<std::string, std::string>& meta = {}) {
    if (auto parent = std::filesystem::path(prefix).parent_path(); !parent.empty()) {
        std::filesystem::create_directories(parent);
    }
    std::ofstream bin(checkpoint_bin(prefix), std::ios::binary);
    std::ofstream man(checkpoint_manifest(prefix));
    if (!bin || !man) throw IoError("cannot write checkpoint " + prefix);
    man << "mrsr-checkpoint 1\ndtype float64\nendian little\n";
    for (const auto& [k, v] : meta) {
        if (k.find_first_of(" \t\n") != std::string::npos || v.find('\n') != std::string::npos) {
            throw IoError("checkpoint meta key/value contains whitespace: " + k);
        }
        man << "meta " << k << ' ' << v << '\n';
    }
    std::size_t offset = 0;
    for (const auto& t : tensors) {
        if (t.name.find_first_of(" \t\n") != std::string::npos) throw IoError("tensor name contains whitespace: " + t.name);
        const std::size_t bytes = t.tensor.numel() * 8;
        man << "tensor " << t.name << ' ' << offset << ' ' << bytes << ' ' << detail::shape_token(t.tensor.shape()) << '\n';
        for (double v : t.tensor.values()) detail::put_le(bin, v);
        offset += bytes;
    }
    if (!bin || !man) throw IoError("failed writing checkpoint " + prefix);
}

inline Checkpoint read_checkpoint(const std::string& prefix) {
    const std::string mpath = checkpoint_manifest(prefix), bpath = checkpoint_bin(prefix);
    if (!std::filesystem::exists(mpath)) throw MissingPathError("checkpoint manifest not found: " + mpath);
    if (!std::filesystem::exists(bpath)) throw MissingPathError("checkpoint data not found: " + bpath);
    std::ifstream man(mpath);
    std::string line;
    if (!std::getline(man, line) || line != "mrsr-checkpoint 1") throw DataError(mpath + " is not a version-1 checkpoint manifest");
    std::ifstream bin(bpath, std::ios::binary);
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    Checkpoint ck;
    while (std::getline(man, line)) {
        std::istringstream ls(line);
        std::string kind;
        if (!(ls >> kind)) continue;
        if (kind == "dtype") {
            std::string d;
            ls >> d;
            if (d != "float64") throw DataError("unsupported checkpoint dtype " + d);
        } else if (kind == "endian") {
            std::string e;
            ls >> e;
            if (e != "little") throw DataError("unsupported checkpoint endianness " + e);
        } else if (kind == "meta") {
            std::string key, value;
            ls >> key;
            std::getline(ls >> std::ws, value);
            ck.meta[key] = value;
        } else if (kind == "tensor") {
            std::string name, shape_s;
            std::size_t offset = 0, bytes = 0;
            if (!(ls >> name >> offset >> bytes >> shape_s)) throw DataError("malformed tensor line in " + mpath);
            Shape shape = detail::parse_shape(shape_s);
            if (bytes != shape_numel(shape) * 8 || offset + bytes > raw.size()) {
                throw SizeMismatchError("tensor " + name + " in " + mpath + " does not fit the data file");
            }
            std::vector<double> v(shape_numel(shape));
            for (std::size_t i = 0; i < v.size(); ++i) v[i] = detail::get_le(raw.data() + offset + 8 * i);
            ck.tensors.push_back({name, Tensor(shape, std::move(v))});
        } else {
            throw DataError("unknown manifest entry '" + kind + "' in " + mpath);
        }
    }
    return ck;
}

/// Copies stored values into the given tensors (matched by name, shapes must agree).
inline void restore(const Checkpoint& ck, const ParameterList& into) {
    for (const auto& p : into) {
        const Tensor& src = ck.find(p.name);
        if (src.shape() != p.tensor.shape()) {
            throw DimensionError("checkpoint tensor " + p.name + " has shape " + shape_str(src.shape()) + ", model expects " +
                                 shape_str(p.tensor.shape()));
        }
        Tensor dst = p.tensor;
        auto d = dst.data();
        std::copy(src.values().begin(), src.values().end(), d.begin());
    }
}

}  // namespace mrsr::io
