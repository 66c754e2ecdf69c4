#pragma once

// Minimal RGB PNG writer and a heatmap renderer for count matrices.

#include <png.h>

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <vector>

namespace drsc {

struct RgbImage {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> pixels;  // row-major RGB

    RgbImage(std::size_t w, std::size_t h, std::array<std::uint8_t, 3> fill = {255, 255, 255}) : width(w), height(h), pixels(w * h * 3) {
        for (std::size_t i = 0; i < w * h; ++i) std::copy(fill.begin(), fill.end(), pixels.begin() + static_cast<std::ptrdiff_t>(3 * i));
    }

    void set(std::size_t x, std::size_t y, std::array<std::uint8_t, 3> c) {
        std::copy(c.begin(), c.end(), pixels.begin() + static_cast<std::ptrdiff_t>(3 * (y * width + x)));
    }
    std::array<std::uint8_t, 3> get(std::size_t x, std::size_t y) const {
        const std::size_t o = 3 * (y * width + x);
        return {pixels[o], pixels[o + 1], pixels[o + 2]};
    }
};

inline void write_png(const std::filesystem::path& path, const RgbImage& img) {
    if (img.width == 0 || img.height == 0) throw std::invalid_argument("cannot write an empty image");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!fp) throw std::runtime_error("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng failed writing " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < img.height; ++y)
        png_write_row(png, const_cast<png_bytep>(img.pixels.data() + 3 * y * img.width));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline RgbImage read_png(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) throw std::runtime_error("cannot read " + path.string() + ": " + image.message);
    image.format = PNG_FORMAT_RGB;
    RgbImage out(image.width, image.height);
    if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
        png_image_free(&image);
        throw std::runtime_error("cannot decode " + path.string() + ": " + image.message);
    }
    return out;
}

/// White-to-blue ramp, t in [0, 1].
inline std::array<std::uint8_t, 3> heat_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    auto lerp = [t](double a, double b) { return static_cast<std::uint8_t>(a + (b - a) * t + 0.5); };
    return {lerp(255, 8), lerp(255, 48), lerp(255, 107)};
}

/// One `cell`-pixel square per entry, each row normalized by its sum so
/// classes of different sizes are comparable, with a 1-pixel grid.
inline RgbImage heatmap(const std::vector<std::vector<std::uint64_t>>& counts, std::size_t cell = 16) {
    const std::size_t n = counts.size();
    if (n == 0 || cell < 2) throw std::invalid_argument("heatmap needs a nonempty matrix and cells of at least 2 pixels");
    RgbImage img(n * cell + 1, n * cell + 1, {160, 160, 160});
    for (std::size_t r = 0; r < n; ++r) {
        if (counts[r].size() != n) throw std::invalid_argument("heatmap needs a square matrix");
        std::uint64_t sum = 0;
        for (auto c : counts[r]) sum += c;
        for (std::size_t c = 0; c < n; ++c) {
            const auto color = heat_color(sum ? static_cast<double>(counts[r][c]) / static_cast<double>(sum) : 0.0);
            for (std::size_t y = 1; y < cell; ++y)
                for (std::size_t x = 1; x < cell; ++x) img.set(c * cell + x, r * cell + y, color);
        }
    }
    return img;
}

}  // namespace drsc
