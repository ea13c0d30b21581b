#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace cadkit {

/// Binary mask; a set pixel is stroke (foreground). Row 0 is the top row.
struct RasterImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    RasterImage() = default;
    RasterImage(int w, int h);

    bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
    bool at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y) {
        if (in_bounds(x, y)) {
            pixels[static_cast<std::size_t>(y) * width + x] = 1;
        }
    }
    std::size_t count() const;

    friend bool operator==(const RasterImage&, const RasterImage&) = default;
};

/// 8-bit grayscale raster, 0 = black.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    GrayImage() = default;
    GrayImage(int w, int h, std::uint8_t fill = 255);

    std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Foreground black on white.
GrayImage to_gray(const RasterImage& mask);
/// Pixels darker than `threshold` become foreground.
RasterImage to_mask(const GrayImage& img, std::uint8_t threshold = 128);

void write_png(const std::filesystem::path& path, const GrayImage& img);
std::vector<std::uint8_t> encode_png(const GrayImage& img);
/// Reads any PNG, converting color to gray.
GrayImage read_png(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& img);
GrayImage read_pgm(const std::filesystem::path& path);
/// Chooses PNG or PGM by extension.
GrayImage read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const GrayImage& img);

} // namespace cadkit
