#pragma once

// Slice loading from raw volumes or PNG directories.
//
// Raw volumes are described by a plain-text layout manifest, one key and its
// value(s) per line, '#' starting a comment:
//
//   file      subject01.raw      # relative to the manifest's directory
//   extents   240 240 96         # width height depth
//   dtype     uint16             # uint8 | int8 | uint16 | int16 | uint32 | int32 | float32 | float64
//   endian    little             # little | big
//   modality  PD                 # optional free-form tag
//   label     0                  # optional class tag for the pretext task
//
// Voxels are stored x fastest, then y, then z; slice k is the k-th depth
// plane. A directory instead yields one slice per *.png file in
// lexicographic order, with an optional `label.txt` holding the class tag.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mrsr/core/error.hpp"
#include "mrsr/core/image.hpp"
#include "mrsr/data/pipeline.hpp"
#include "mrsr/io/png.hpp"

namespace mrsr {

struct VolumeLayout {
    std::string file;
    std::size_t width = 0, height = 0, depth = 0;
    std::string dtype = "uint8";
    bool little_endian = true;
    std::string modality = "unknown";
    int label = 0;
};

inline std::size_t dtype_size(const std::string& dtype) {
    if (dtype == "uint8" || dtype == "int8") return 1;
    if (dtype == "uint16" || dtype == "int16") return 2;
    if (dtype == "uint32" || dtype == "int32" || dtype == "float32") return 4;
    if (dtype == "float64") return 8;
    throw DataError("unknown voxel dtype '" + dtype + "'");
}

inline VolumeLayout parse_layout(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw UnreadableFileError("cannot read layout manifest " + manifest.string());
    VolumeLayout layout;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        auto bad = [&](const std::string& why) {
            return DataError(manifest.string() + ":" + std::to_string(lineno) + ": " + why);
        };
        if (key == "file") {
            if (!(ls >> layout.file)) throw bad("file needs a value");
        } else if (key == "extents") {
            if (!(ls >> layout.width >> layout.height >> layout.depth)) throw bad("extents needs width height depth");
        } else if (key == "dtype") {
            ls >> layout.dtype;
            dtype_size(layout.dtype);
        } else if (key == "endian") {
            std::string e;
            ls >> e;
            if (e != "little" && e != "big") throw bad("endian must be little or big");
            layout.little_endian = e == "little";
        } else if (key == "modality") {
            ls >> layout.modality;
        } else if (key == "label") {
            if (!(ls >> layout.label)) throw bad("label needs an integer");
        } else {
            throw bad("unknown key '" + key + "'");
        }
    }
    if (layout.file.empty()) throw DataError(manifest.string() + ": missing 'file'");
    if (layout.width == 0 || layout.height == 0 || layout.depth == 0) {
        throw DataError(manifest.string() + ": extents must be positive");
    }
    return layout;
}

namespace detail {

inline double decode_voxel(const unsigned char* p, const std::string& dtype, bool little) {
    const std::size_t n = dtype_size(dtype);
    unsigned char b[8];
    std::memcpy(b, p, n);
    if (little != (std::endian::native == std::endian::little)) std::reverse(b, b + n);
    if (dtype == "uint8") return b[0];
    if (dtype == "int8") return static_cast<std::int8_t>(b[0]);
    if (dtype == "uint16") { std::uint16_t v; std::memcpy(&v, b, 2); return v; }
    if (dtype == "int16") { std::int16_t v; std::memcpy(&v, b, 2); return v; }
    if (dtype == "uint32") { std::uint32_t v; std::memcpy(&v, b, 4); return v; }
    if (dtype == "int32") { std::int32_t v; std::memcpy(&v, b, 4); return v; }
    if (dtype == "float32") { float v; std::memcpy(&v, b, 4); return v; }
    double v;
    std::memcpy(&v, b, 8);
    return v;
}

}  // namespace detail

inline SliceSet load_volume(const std::filesystem::path& manifest) {
    const VolumeLayout layout = parse_layout(manifest);
    std::filesystem::path file = layout.file;
    if (file.is_relative()) file = manifest.parent_path() / file;
    if (!std::filesystem::exists(file)) throw MissingPathError("volume file not found: " + file.string());
    const std::size_t esize = dtype_size(layout.dtype);
    const std::size_t expect = layout.width * layout.height * layout.depth * esize;
    const auto actual = static_cast<std::size_t>(std::filesystem::file_size(file));
    if (actual != expect) {
        throw SizeMismatchError(file.string() + " holds " + std::to_string(actual) + " bytes but the layout " +
                                std::to_string(layout.width) + "x" + std::to_string(layout.height) + "x" +
                                std::to_string(layout.depth) + " " + layout.dtype + " needs " + std::to_string(expect));
    }
    std::ifstream in(file, std::ios::binary);
    std::vector<unsigned char> raw(expect);
    if (!in || !in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(expect))) {
        throw UnreadableFileError("cannot read " + file.string());
    }
    SliceSet set;
    set.source = file.string();
    set.modality = layout.modality;
    set.label = layout.label;
    const std::size_t plane = layout.width * layout.height;
    for (std::size_t z = 0; z < layout.depth; ++z) {
        Image img(layout.height, layout.width);
        for (std::size_t i = 0; i < plane; ++i) {
            img.pixels[i] = detail::decode_voxel(raw.data() + (z * plane + i) * esize, layout.dtype, layout.little_endian);
        }
        set.slices.push_back(normalize(img));
    }
    return set;
}

inline SliceSet load_png_directory(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png") files.push_back(entry.path());
    }
    if (files.empty()) throw EmptyDatasetError("no PNG slices in " + dir.string());
    std::sort(files.begin(), files.end());
    SliceSet set;
    set.source = dir.string();
    for (const auto& f : files) {
        Image img = io::read_png(f.string()).image;
        if (!set.slices.empty() && !img.same_extents(set.slices.front())) {
            throw SizeMismatchError(f.string() + " is " + img.extents_str() + " but earlier slices are " +
                                    set.slices.front().extents_str());
        }
        set.slices.push_back(normalize(img));
    }
    if (std::ifstream lf(dir / "label.txt"); lf) {
        if (!(lf >> set.label)) throw DataError((dir / "label.txt").string() + " must hold an integer");
    }
    return set;
}

/// A manifest file (raw volume) or a directory of PNG slices.
inline SliceSet load_slices(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw MissingPathError("dataset path not found: " + path.string());
    if (std::filesystem::is_directory(path)) return load_png_directory(path);
    return load_volume(path);
}

}  // namespace mrsr
