#pragma once

// PNG encoding (libpng simplified API), file helpers and stable hashing.

#include "scribbleseg/grid.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace scribbleseg {

/// Raised for file-system failures; carries the offending path.
class IoError : public std::runtime_error {
public:
    IoError(const std::filesystem::path& path, const std::string& what)
        : std::runtime_error(what + ": " + path.string()), path_(path) {}
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

/// Writes an 8-bit PNG with 1 (gray) or 3 (RGB) channels.
inline void write_png(const std::filesystem::path& path, const Grid<std::uint8_t>& pixels) {
    if (pixels.depth() != 1 && pixels.depth() != 3) {
        throw std::invalid_argument("PNG export supports 1 or 3 channels");
    }
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(pixels.width());
    image.height = static_cast<png_uint_32>(pixels.height());
    image.format = pixels.depth() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data().data(), 0, nullptr)) {
        const std::string reason = image.message;
        png_image_free(&image);
        throw IoError(path, "cannot write PNG (" + reason + ")");
    }
}

/// Reads a PNG, converting to the requested channel count (1 or 3).
inline Grid<std::uint8_t> read_png(const std::filesystem::path& path, int channels) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw IoError(path, "cannot read PNG (" + std::string(image.message) + ")");
    }
    image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Grid<std::uint8_t> out(static_cast<int>(image.height), static_cast<int>(image.width), channels);
    if (!png_image_finish_read(&image, nullptr, out.data().data(), 0, nullptr)) {
        const std::string reason = image.message;
        png_image_free(&image);
        throw IoError(path, "cannot decode PNG (" + reason + ")");
    }
    return out;
}

inline Grid<std::uint8_t> quantize_image(const Image& img) {
    Grid<std::uint8_t> out(img.height(), img.width(), img.depth());
    std::transform(img.data().begin(), img.data().end(), out.data().begin(), [](double v) {
        return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    });
    return out;
}

inline Image dequantize_image(const Grid<std::uint8_t>& img) {
    Image out(img.height(), img.width(), img.depth());
    std::transform(img.data().begin(), img.data().end(), out.data().begin(),
                   [](std::uint8_t v) { return static_cast<double>(v) / 255.0; });
    return out;
}

/// Min-max scales a single-channel real map to 8-bit gray.
inline Grid<std::uint8_t> normalize_to_gray(const Grid<double>& map) {
    Grid<std::uint8_t> out(map.height(), map.width(), 1);
    if (map.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(map.data().begin(), map.data().end());
    const double lo = *lo_it;
    const double span = *hi_it - lo;
    std::transform(map.data().begin(), map.data().end(), out.data().begin(), [&](double v) {
        return static_cast<std::uint8_t>(std::lround(span > 0.0 ? 255.0 * (v - lo) / span : 0.0));
    });
    return out;
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path, "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path, "cannot open file for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError(path, "write failed");
}

inline void ensure_directory(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) throw IoError(dir, "cannot create directory");
}

/// 64-bit FNV-1a; stable across platforms and runs.
class Fnv1a {
public:
    Fnv1a& update(const void* data, std::size_t bytes) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < bytes; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001b3ULL;
        }
        return *this;
    }
    Fnv1a& update(std::string_view s) { return update(s.data(), s.size()); }
    template <typename T>
    Fnv1a& update_value(const T& v) {
        return update(&v, sizeof(T));
    }
    std::uint64_t digest() const noexcept { return state_; }
    std::string hex() const {
        std::ostringstream ss;
        ss << std::hex << std::setw(16) << std::setfill('0') << state_;
        return ss.str();
    }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace scribbleseg
