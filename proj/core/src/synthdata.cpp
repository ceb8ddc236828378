#include "dnetpad/synthdata.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "dnetpad/error.hpp"

namespace dnetpad {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Lattice value in [-1, 1] for integer cell coordinates.
double lattice(std::uint64_t seed, int octave, long i, long j) {
    std::uint64_t h = splitmix64(seed ^ static_cast<std::uint64_t>(octave) * 0x632be59bd9b4e019ULL);
    h = splitmix64(h ^ static_cast<std::uint64_t>(i) * 0x8cb92ba72f3d8dd7ULL);
    h = splitmix64(h ^ static_cast<std::uint64_t>(j));
    return static_cast<double>(h >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

// Value noise on a lattice with `period_j` cells along j (wrapping).
double value_noise(std::uint64_t seed, int octave, double fi, double fj, long period_j) {
    const double i0f = std::floor(fi), j0f = std::floor(fj);
    const auto i0 = static_cast<long>(i0f);
    const auto j0 = static_cast<long>(j0f);
    const double ti = smooth(fi - i0f), tj = smooth(fj - j0f);
    auto wrap = [period_j](long j) { return period_j > 0 ? ((j % period_j) + period_j) % period_j : j; };
    const double a = lattice(seed, octave, i0, wrap(j0));
    const double b = lattice(seed, octave, i0, wrap(j0 + 1));
    const double c = lattice(seed, octave, i0 + 1, wrap(j0));
    const double d = lattice(seed, octave, i0 + 1, wrap(j0 + 1));
    const double top = a + tj * (b - a);
    const double bot = c + tj * (d - c);
    return top + ti * (bot - top);
}

// Multi-octave polar texture in [-1,1]: u is the radial fraction across the
// iris annulus, t the angle as a fraction of a full turn.
double iris_texture(std::uint64_t seed, int octaves, double u, double t) {
    const auto& k = generator_constants();
    double sum = 0.0, norm = 0.0, amp = 1.0;
    for (int o = 0; o < octaves; ++o) {
        const long radial = static_cast<long>(k.texture_radial_cells) << o;
        const long angular = static_cast<long>(k.texture_angular_cells) << o;
        sum += amp * value_noise(seed, o, u * static_cast<double>(radial), t * static_cast<double>(angular), angular);
        norm += amp;
        amp *= k.texture_persistence;
    }
    return sum / norm;
}

// Fraction of a pixel inside a disc edge at signed distance d (positive inside).
double coverage(double d) { return std::clamp(d + 0.5, 0.0, 1.0); }

struct Geometry {
    double cx, cy, r;
    double pcx, pcy, rp;
    EyeSide side;
    std::uint64_t texture_seed, skin_seed, noise_seed;
    double ring_phase;
};

Geometry draw_geometry(std::uint64_t seed, std::size_t size) {
    const auto& k = generator_constants();
    std::mt19937_64 rng(splitmix64(seed));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    const double s = static_cast<double>(size);
    Geometry g{};
    g.r = std::round(s * uniform(k.iris_radius_min, k.iris_radius_max));
    g.cx = std::round(s / 2.0 + s * uniform(-k.center_jitter, k.center_jitter));
    g.cy = std::round(s / 2.0 + s * uniform(-k.center_jitter, k.center_jitter));
    g.cx = std::clamp(g.cx, g.r + 1.0, s - g.r - 1.0);
    g.cy = std::clamp(g.cy, g.r + 1.0, s - g.r - 1.0);
    g.side = (rng() & 1U) ? EyeSide::right : EyeSide::left;
    const double sign = g.side == EyeSide::left ? 1.0 : -1.0;
    g.rp = g.r * uniform(k.pupil_ratio_min, k.pupil_ratio_max);
    // Pupils sit slightly nasal of the iris centre.
    g.pcx = g.cx + sign * g.r * uniform(0.02, 0.06);
    g.pcy = g.cy + g.r * uniform(-0.03, 0.03);
    g.texture_seed = rng();
    g.skin_seed = rng();
    g.noise_seed = rng();
    g.ring_phase = uniform(0.0, kTwoPi);
    return g;
}

std::vector<double> render_eye(const Geometry& g, std::size_t size, bool painted) {
    const auto& k = generator_constants();
    const int octaves = painted ? k.artificial_octaves : k.bonafide_octaves;
    const double contrast = painted ? k.artificial_contrast : k.bonafide_contrast;
    const double s = static_cast<double>(size);
    const double sign = g.side == EyeSide::left ? 1.0 : -1.0;
    const double spec_x = g.pcx + sign * 0.42 * g.rp;
    const double spec_y = g.pcy - 0.35 * g.rp;
    const double spec_r = std::max(1.0, 0.16 * g.rp);
    const double eye_half_width = 2.3 * g.r;
    std::vector<double> img(size * size);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double px = static_cast<double>(x), py = static_cast<double>(y);
            const double dx = px - g.cx, dy = py - g.cy;
            double v = 0.50 + 0.06 * value_noise(g.skin_seed, 0, 3.0 * px / s, 3.0 * py / s, 0);

            const double q = dx / eye_half_width;
            const double lid = 1.3 * g.r * (1.0 - q * q);
            if (lid > 0.0) {
                const double sclera = 0.80 - 0.10 * std::abs(q);
                v += (sclera - v) * coverage(lid - std::abs(dy));
            }

            const double rho = std::hypot(dx, dy);
            const double iris_cov = coverage(g.r - rho);
            if (iris_cov > 0.0) {
                const double u = std::clamp((rho - g.rp) / (g.r - g.rp), 0.0, 1.0);
                double t = std::atan2(dy, dx) / kTwoPi;
                if (t < 0.0) t += 1.0;
                const double level = painted ? k.artificial_iris_level : k.bonafide_iris_level;
                double iris = level + contrast * iris_texture(g.texture_seed, octaves, u, t);
                if (!painted) {
                    iris -= 0.12 * smooth(std::clamp((u - 0.75) / 0.25, 0.0, 1.0));  // limbal darkening
                    iris += 0.05 * std::exp(-std::pow((u - 0.3) / 0.08, 2.0));        // collarette
                }
                v += (iris - v) * iris_cov;
            }

            const double pupil_cov = coverage(g.rp - std::hypot(px - g.pcx, py - g.pcy));
            v += (0.05 - v) * pupil_cov;
            const double spec_cov = coverage(spec_r - std::hypot(px - spec_x, py - spec_y));
            v += (0.98 - v) * spec_cov;
            img[y * size + x] = v;
        }
    }
    return img;
}

void apply_halftone(std::vector<double>& img, std::size_t size) {
    const auto& k = generator_constants();
    const std::size_t pitch = k.halftone_pitch;
    // Box blur over one screen cell flattens the texture's mid frequencies.
    std::vector<double> blurred(img.size());
    const long half = static_cast<long>(pitch) / 2;
    const long n = static_cast<long>(size);
    for (long y = 0; y < n; ++y) {
        for (long x = 0; x < n; ++x) {
            double acc = 0.0;
            for (long j = -half; j < static_cast<long>(pitch) - half; ++j) {
                for (long i = -half; i < static_cast<long>(pitch) - half; ++i) {
                    const long yy = std::clamp(y + j, 0L, n - 1);
                    const long xx = std::clamp(x + i, 0L, n - 1);
                    acc += img[static_cast<std::size_t>(yy * n + xx)];
                }
            }
            blurred[static_cast<std::size_t>(y * n + x)] = acc / static_cast<double>(pitch * pitch);
        }
    }
    const double p = static_cast<double>(pitch);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double screen = 0.5 + 0.5 * std::cos(kTwoPi * (static_cast<double>(x) + 0.5) / p) *
                                            std::cos(kTwoPi * (static_cast<double>(y) + 0.5) / p);
            const double b = blurred[y * size + x];
            const double dot = b > screen ? 0.9 : 0.1;
            img[y * size + x] = (1.0 - k.halftone_mix) * b + k.halftone_mix * dot;
        }
    }
}

void apply_cosmetic_ring(std::vector<double>& img, std::size_t size, const Geometry& g) {
    const auto& k = generator_constants();
    const double inner = k.ring_inner * g.r, outer = k.ring_outer * g.r;
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double dx = static_cast<double>(x) - g.cx, dy = static_cast<double>(y) - g.cy;
            const double rho = std::hypot(dx, dy);
            const double w = std::min(coverage(rho - inner), coverage(outer - rho));
            if (w <= 0.0) continue;
            const double theta = std::atan2(dy, dx);
            const double a = std::sin(k.ring_spokes * theta + g.ring_phase);
            const double b = std::sin(kTwoPi * rho / (k.ring_wavelength * g.r));
            const double pattern = a * b > 0.0 ? 0.10 : 0.55;
            double& v = img[y * size + x];
            v += (pattern - v) * k.ring_opacity * w;
        }
    }
}

GrayImage quantize(const std::vector<double>& img, std::size_t size) {
    GrayImage out(size, size);
    for (std::size_t i = 0; i < img.size(); ++i) {
        out.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img[i], 0.0, 1.0) * 255.0));
    }
    return out;
}

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

const GeneratorConstants& generator_constants() {
    static const GeneratorConstants constants{};
    return constants;
}

std::string_view to_string(ImageClass c) {
    switch (c) {
    case ImageClass::bonafide: return "bonafide";
    case ImageClass::print: return "print";
    case ImageClass::artificial_eye: return "artificial_eye";
    case ImageClass::cosmetic_contact: return "cosmetic_contact";
    }
    return "unknown";
}

std::string_view to_string(EyeSide s) { return s == EyeSide::left ? "left" : "right"; }

std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }

ImageClass parse_image_class(std::string_view name) {
    for (auto c : kAllClasses) {
        if (to_string(c) == name) return c;
    }
    throw InputError("unknown image class '" + std::string(name) + "'");
}

int binary_label(ImageClass c) { return c == ImageClass::bonafide ? 0 : 1; }

LabeledImage generate(ImageClass cls, std::uint64_t seed, std::size_t size) {
    if (size < 32) throw InputError("generate: image size must be >= 32, got " + std::to_string(size));
    const auto& k = generator_constants();
    const Geometry g = draw_geometry(seed, size);
    auto img = render_eye(g, size, cls == ImageClass::artificial_eye);
    if (cls == ImageClass::print) apply_halftone(img, size);
    if (cls == ImageClass::cosmetic_contact) apply_cosmetic_ring(img, size, g);

    std::mt19937_64 noise_rng(g.noise_seed);
    std::normal_distribution<double> noise(0.0, k.sensor_noise);
    for (auto& v : img) v += noise(noise_rng);

    LabeledImage out;
    out.pixels = quantize(img, size);
    out.label = cls;
    out.iris = {g.cx, g.cy, g.r};
    out.eye_side = g.side;
    out.seed = seed;
    out.source = "seed:" + std::to_string(seed);
    return out;
}

Tensor crop_and_resize(const LabeledImage& image, std::size_t out_size) {
    const auto& c = image.iris;
    if (!(c.r > 0.0)) throw InputError("crop_and_resize: degenerate iris radius for " + image.source);
    if (out_size == 0) throw InputError("crop_and_resize: output size must be positive");
    const auto w = static_cast<long>(image.pixels.width);
    const auto h = static_cast<long>(image.pixels.height);
    const long x0 = std::clamp(std::lround(c.cx - c.r), 0L, w);
    const long x1 = std::clamp(std::lround(c.cx + c.r), 0L, w);
    const long y0 = std::clamp(std::lround(c.cy - c.r), 0L, h);
    const long y1 = std::clamp(std::lround(c.cy + c.r), 0L, h);
    if (x1 <= x0 || y1 <= y0) throw InputError("crop_and_resize: iris circle lies outside " + image.source);
    const auto cw = static_cast<std::size_t>(x1 - x0), ch = static_cast<std::size_t>(y1 - y0);
    Tensor crop({ch, cw});
    for (std::size_t y = 0; y < ch; ++y) {
        for (std::size_t x = 0; x < cw; ++x) {
            crop[y * cw + x] = image.pixels.at(static_cast<std::size_t>(x0) + x, static_cast<std::size_t>(y0) + y) / 255.0;
        }
    }
    Tensor resized = resize_bilinear(crop, out_size, out_size);
    for (auto& v : resized.data()) v = std::clamp(v, 0.0, 1.0);
    return resized.reshaped({1, 1, out_size, out_size});
}

LoadResult load_dir(const std::filesystem::path& root, const std::string& pattern) {
    namespace fs = std::filesystem;
    LoadResult result;
    if (!fs::exists(root)) throw InputError("dataset directory does not exist: " + root.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
        auto ext = path.extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (ext == ".circle" || path.filename() == "manifest.csv") continue;
        if (ext != ".pgm" && ext != ".png") {
            ++result.warnings;
            continue;
        }
        if (fnmatch(pattern.c_str(), path.filename().c_str(), 0) != 0) continue;
        ImageClass cls;
        try {
            cls = parse_image_class(path.parent_path().filename().string());
        } catch (const InputError&) {
            ++result.warnings;
            continue;
        }
        LabeledImage img;
        try {
            img.pixels = read_image(path);
        } catch (const Error& e) {
            result.errors.push_back(path.string() + ": " + e.what());
            continue;
        }
        img.label = cls;
        img.source = path.string();
        fs::path sidecar = path;
        sidecar.replace_extension(".circle");
        bool have_circle = false;
        if (fs::exists(sidecar)) {
            std::ifstream in(sidecar);
            IrisCircle c;
            if (in >> c.cx >> c.cy >> c.r && c.r > 0.0) {
                img.iris = c;
                have_circle = true;
            } else {
                result.errors.push_back(sidecar.string() + ": expected \"cx cy r\"");
                continue;
            }
        }
        if (!have_circle) {
            const double w = static_cast<double>(img.pixels.width), h = static_cast<double>(img.pixels.height);
            img.iris = {w / 2.0, h / 2.0, std::min(w, h) / 2.0};
            img.circle_assumed = true;
        }
        result.images.push_back(std::move(img));
    }
    return result;
}

std::size_t DatasetManifest::total() const {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
}

std::array<std::size_t, 4> balanced_counts(std::size_t total) {
    std::array<std::size_t, 4> counts{};
    counts[0] = (total + 1) / 2;
    const std::size_t pa = total - counts[0];
    for (std::size_t i = 0; i < 3; ++i) counts[i + 1] = pa / 3 + (i < pa % 3 ? 1 : 0);
    return counts;
}

std::uint64_t sample_seed(std::uint64_t base, Split split, std::size_t index) {
    const std::uint64_t split_offset = split == Split::train ? 0 : (std::uint64_t{1} << 40);
    return splitmix64(base) + split_offset + static_cast<std::uint64_t>(index);
}

std::vector<LabeledImage> generate_split(const DatasetManifest& manifest) {
    std::vector<LabeledImage> images;
    images.reserve(manifest.total());
    std::size_t index = 0;
    for (std::size_t c = 0; c < kAllClasses.size(); ++c) {
        for (std::size_t i = 0; i < manifest.counts[c]; ++i) {
            images.push_back(generate(kAllClasses[c], sample_seed(manifest.seed, manifest.split, index++),
                                      manifest.image_size));
        }
    }
    return images;
}

void write_dataset(const std::filesystem::path& root, const std::vector<LabeledImage>& train,
                   const std::vector<LabeledImage>& test) {
    namespace fs = std::filesystem;
    fs::create_directories(root);
    std::ofstream manifest(root / "manifest.csv", std::ios::trunc);
    if (!manifest) throw Error("cannot write " + (root / "manifest.csv").string());
    manifest << "path,label,split,cx,cy,r,eye_side\n";
    auto write_split = [&](const std::vector<LabeledImage>& images, Split split) {
        std::array<std::size_t, 4> next{};
        for (const auto& img : images) {
            const auto cls_index = static_cast<std::size_t>(img.label);
            char name[64];
            std::snprintf(name, sizeof name, "%s_%06zu", std::string(to_string(img.label)).c_str(), next[cls_index]++);
            const fs::path rel = fs::path(std::string(to_string(split))) / std::string(to_string(img.label)) / name;
            fs::create_directories((root / rel).parent_path());
            write_pgm(img.pixels, root / (rel.string() + ".pgm"));
            std::ofstream circle(root / (rel.string() + ".circle"), std::ios::trunc);
            circle << format_number(img.iris.cx) << ' ' << format_number(img.iris.cy) << ' '
                   << format_number(img.iris.r) << '\n';
            manifest << rel.string() << ".pgm," << to_string(img.label) << ',' << to_string(split) << ','
                     << format_number(img.iris.cx) << ',' << format_number(img.iris.cy) << ','
                     << format_number(img.iris.r) << ',' << to_string(img.eye_side) << '\n';
        }
    };
    write_split(train, Split::train);
    write_split(test, Split::test);
}

} // namespace dnetpad
