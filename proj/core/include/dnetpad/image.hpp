#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dnetpad/tensor.hpp"

namespace dnetpad {

// 8-bit grayscale raster, row-major.
struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;

    GrayImage() = default;
    GrayImage(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h, fill) {}

    std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
    std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // interleaved RGB
};

// Binary PGM (P5, maxval 255). The writer emits "P5\n<w> <h>\n255\n".
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const GrayImage& image, const std::filesystem::path& path);
// Binary PPM (P6, maxval 255).
void write_ppm(const RgbImage& image, const std::filesystem::path& path);

bool png_supported();
// Grayscale PNG reader; throws FormatError when built without libpng.
GrayImage read_png(const std::filesystem::path& path);

// Dispatch on extension (.pgm or .png, case-insensitive).
GrayImage read_image(const std::filesystem::path& path);

// Pixel-center-aligned bilinear resampling of an [H,W] plane to [out_h,out_w].
// Equal sizes return the input values unchanged; constants stay constant.
Tensor resize_bilinear(const Tensor& plane, std::size_t out_h, std::size_t out_w);

// [H,W] (or [1,1,H,W]) values in [0,1] -> 8-bit, rounding and clamping.
GrayImage to_gray(const Tensor& plane);
// 8-bit -> [H,W] plane scaled to [0,1].
Tensor to_plane(const GrayImage& image);

} // namespace dnetpad
