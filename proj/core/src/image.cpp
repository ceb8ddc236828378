#include "dnetpad/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#ifdef DNETPAD_HAVE_PNG
#include <png.h>
#endif

#include "dnetpad/error.hpp"

namespace dnetpad {
namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string header_token(std::istream& in, const std::string& file) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    if (tok.empty()) throw FormatError("truncated PGM header: " + file);
    return tok;
}

std::size_t header_number(std::istream& in, const std::string& file) {
    const auto tok = header_token(in, file);
    try {
        std::size_t used = 0;
        const auto v = std::stoul(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw FormatError("bad PGM header field '" + tok + "': " + file);
    }
}

std::string lower_ext(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

std::pair<std::size_t, std::size_t> plane_dims(const Tensor& t) {
    if (t.rank() == 2) return {t.dim(0), t.dim(1)};
    if (t.rank() == 4 && t.dim(0) == 1 && t.dim(1) == 1) return {t.dim(2), t.dim(3)};
    throw ShapeError("expected an [H,W] or [1,1,H,W] plane, got " + shape_string(t.shape()));
}

} // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open image: " + path.string());
    const auto file = path.string();
    if (header_token(in, file) != "P5") throw FormatError("not a binary PGM (P5): " + file);
    const auto w = header_number(in, file);
    const auto h = header_number(in, file);
    const auto maxval = header_number(in, file);
    if (w == 0 || h == 0) throw FormatError("PGM has zero size: " + file);
    if (maxval != 255) throw FormatError("PGM maxval must be 255: " + file);
    GrayImage img(w, h);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
        throw FormatError("PGM pixel data truncated: " + file);
    }
    return img;
}

void write_pgm(const GrayImage& image, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
    if (!out) throw Error("failed writing " + path.string());
}

void write_ppm(const RgbImage& image, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
    if (!out) throw Error("failed writing " + path.string());
}

#ifdef DNETPAD_HAVE_PNG

bool png_supported() { return true; }

GrayImage read_png(const std::filesystem::path& path) {
    const auto file = path.string();
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(file.c_str(), "rb"), &std::fclose);
    if (!fp) throw InputError("cannot open image: " + file);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("libpng initialisation failed");
    }
    GrayImage img;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("malformed PNG: " + file);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE) {
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    png_read_update_info(png, info);
    img = GrayImage(png_get_image_width(png, info), png_get_image_height(png, info));
    rows.resize(img.height);
    for (std::size_t y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + y * img.width;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

#else

bool png_supported() { return false; }

GrayImage read_png(const std::filesystem::path& path) {
    throw FormatError("PNG support not compiled in: " + path.string());
}

#endif

GrayImage read_image(const std::filesystem::path& path) {
    const auto ext = lower_ext(path);
    if (ext == ".pgm") return read_pgm(path);
    if (ext == ".png") return read_png(path);
    throw FormatError("unsupported image extension: " + path.string());
}

Tensor resize_bilinear(const Tensor& plane, std::size_t out_h, std::size_t out_w) {
    const auto [h, w] = plane_dims(plane);
    if (out_h == 0 || out_w == 0) throw InputError("resize_bilinear: output size must be positive");
    Tensor out({out_h, out_w});
    const double sy = static_cast<double>(h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(w) / static_cast<double>(out_w);
    const double* src = plane.raw();
    for (std::size_t y = 0; y < out_h; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double ty = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double tx = fx - static_cast<double>(x0);
            const double top = src[y0 * w + x0] + tx * (src[y0 * w + x1] - src[y0 * w + x0]);
            const double bot = src[y1 * w + x0] + tx * (src[y1 * w + x1] - src[y1 * w + x0]);
            out[y * out_w + x] = top + ty * (bot - top);
        }
    }
    return out;
}

GrayImage to_gray(const Tensor& plane) {
    const auto [h, w] = plane_dims(plane);
    GrayImage img(w, h);
    for (std::size_t i = 0; i < w * h; ++i) {
        const double v = std::clamp(plane[i], 0.0, 1.0);
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    return img;
}

Tensor to_plane(const GrayImage& image) {
    Tensor t({image.height, image.width});
    for (std::size_t i = 0; i < image.pixels.size(); ++i) t[i] = image.pixels[i] / 255.0;
    return t;
}

} // namespace dnetpad
