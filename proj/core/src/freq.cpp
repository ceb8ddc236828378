#include "dnetpad/freq.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <random>

#include <fftw3.h>

#include "dnetpad/error.hpp"
#include "dnetpad/metrics.hpp"
#include "dnetpad/parallel.hpp"

namespace dnetpad {
namespace {

void plane_dims(const Tensor& plane, std::size_t& h, std::size_t& w) {
    if (plane.rank() == 2) {
        h = plane.dim(0);
        w = plane.dim(1);
    } else if (plane.rank() == 4 && plane.dim(0) == 1 && plane.dim(1) == 1) {
        h = plane.dim(2);
        w = plane.dim(3);
    } else {
        throw ShapeError("expected an [H,W] or [1,1,H,W] plane, got " + shape_string(plane.shape()));
    }
}

// In-place 2-D transform of a row-major grid; the inverse is scaled by 1/(h*w).
void fft2(std::vector<Complex>& grid, std::size_t h, std::size_t w, bool inverse) {
    // The FFTW planner is not thread-safe; executing a plan is.
    static std::mutex planner;
    auto* data = reinterpret_cast<fftw_complex*>(grid.data());
    fftw_plan plan;
    {
        std::lock_guard lock(planner);
        plan = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), data, data,
                                inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard lock(planner);
        fftw_destroy_plan(plan);
    }
    if (inverse) {
        const double scale = 1.0 / static_cast<double>(h * w);
        for (auto& v : grid) v *= scale;
    }
}

double bin_radius(std::size_t y, std::size_t x, std::size_t h, std::size_t w) {
    const double dy = static_cast<double>(y) - static_cast<double>(h / 2);
    const double dx = static_cast<double>(x) - static_cast<double>(w / 2);
    return std::sqrt(dy * dy + dx * dx);
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Dataset transformed(const Dataset& data, std::size_t jobs, const std::function<Tensor(const Tensor&, std::size_t)>& fn) {
    Dataset out(data.size());
    parallel_for(data.size(), jobs, [&](std::size_t i) {
        out[i] = data[i];
        out[i].image = fn(data[i].image, i);
    });
    return out;
}

TdrAtFdr score_tdr(const Model& model, const Dataset& data, double target_fdr, std::size_t jobs) {
    const auto scores = evaluate_scores(model, data, jobs);
    std::vector<double> bf, pa;
    split_scores(scores, bf, pa);
    return tdr_at_fdr(bf, pa, target_fdr);
}

} // namespace

Spectrum fft2_centered(const Tensor& plane) {
    std::size_t h, w;
    plane_dims(plane, h, w);
    std::vector<Complex> grid(h * w);
    const auto src = plane.data();
    for (std::size_t i = 0; i < h * w; ++i) grid[i] = src[i];
    fft2(grid, h, w, false);
    Spectrum s{h, w, std::vector<Complex>(h * w)};
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) s.at((y + h / 2) % h, (x + w / 2) % w) = grid[y * w + x];
    }
    return s;
}

Tensor ifft2_centered(const Spectrum& s) {
    const std::size_t h = s.height, w = s.width;
    if (h == 0 || w == 0 || s.bins.size() != h * w) throw ShapeError("ifft2_centered: malformed spectrum");
    std::vector<Complex> grid(h * w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) grid[y * w + x] = s.at((y + h / 2) % h, (x + w / 2) % w);
    }
    fft2(grid, h, w, true);
    Tensor out({h, w}, 0.0);
    auto dst = out.data();
    for (std::size_t i = 0; i < h * w; ++i) dst[i] = grid[i].real();
    return out;
}

double max_bin_radius(std::size_t height, std::size_t width) {
    return bin_radius(0, 0, height, width);
}

Tensor radial_filter(const Tensor& image, double cutoff, FilterMode mode, bool clamp) {
    if (!(cutoff >= 0.0)) throw InputError("radial_filter: cutoff must be >= 0");
    std::size_t h, w;
    plane_dims(image, h, w);
    if (mode == FilterMode::low && cutoff >= max_bin_radius(h, w)) return image;

    auto spec = fft2_centered(image);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const bool inside = bin_radius(y, x, h, w) <= cutoff;
            if (inside != (mode == FilterMode::low)) spec.at(y, x) = 0.0;
        }
    }
    auto out = ifft2_centered(spec).reshaped(image.shape());
    if (clamp) {
        for (auto& v : out.data()) v = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

GrayImage log_magnitude_image(const Spectrum& s) {
    GrayImage img(s.width, s.height, 0);
    double peak = 0.0;
    for (const auto& c : s.bins) peak = std::max(peak, std::log1p(std::abs(c)));
    for (std::size_t y = 0; y < s.height; ++y) {
        for (std::size_t x = 0; x < s.width; ++x) {
            const double v = peak > 0.0 ? std::log1p(std::abs(s.at(y, x))) / peak : 0.0;
            img.at(x, y) = static_cast<std::uint8_t>(std::lround(255.0 * v));
        }
    }
    return img;
}

Tensor add_noise(const Tensor& image, const NoiseSpec& noise, std::uint64_t seed) {
    std::size_t h, w;
    plane_dims(image, h, w);
    Tensor out = image;
    auto px = out.data();
    std::mt19937_64 rng(seed);
    if (noise.kind == NoiseKind::salt_pepper) {
        if (!(noise.amount >= 0.0 && noise.amount <= 1.0)) throw InputError("salt-and-pepper density must lie in [0,1]");
        const auto n = h * w;
        const auto count = static_cast<std::size_t>(std::llround(noise.amount * static_cast<double>(n)));
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        // Partial Fisher-Yates: the first `count` slots become the sample.
        for (std::size_t i = 0; i < count; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, n - 1);
            std::swap(idx[i], idx[pick(rng)]);
        }
        const std::size_t salt = (count + 1) / 2;
        for (std::size_t i = 0; i < count; ++i) px[idx[i]] = i < salt ? 1.0 : 0.0;
    } else {
        if (!(noise.amount >= 0.0)) throw InputError("gaussian sigma must be >= 0");
        if (noise.amount == 0.0) return out;
        std::normal_distribution<double> dist(0.0, noise.amount);
        for (auto& v : px) v = std::clamp(v + dist(rng), 0.0, 1.0);
    }
    return out;
}

SweepResult cutoff_sweep(const Model& model, const Dataset& test_set, std::span<const double> cutoffs,
                         double target_fdr, std::size_t jobs) {
    if (cutoffs.empty()) throw InputError("cutoff_sweep: empty cutoff list");
    for (std::size_t i = 0; i < cutoffs.size(); ++i) {
        if (!(cutoffs[i] >= 0.0)) throw InputError("cutoff_sweep: cutoffs must be >= 0");
        if (i > 0 && !(cutoffs[i] > cutoffs[i - 1])) throw InputError("cutoff_sweep: cutoffs must be strictly increasing");
    }
    SweepResult r;
    const auto base = score_tdr(model, test_set, target_fdr, jobs);
    r.baseline_tdr = base.tdr;
    r.baseline_threshold = base.threshold;
    for (double c : cutoffs) {
        const auto filtered = transformed(test_set, jobs, [c](const Tensor& img, std::size_t) {
            return radial_filter(img, c, FilterMode::low);
        });
        const auto t = score_tdr(model, filtered, target_fdr, jobs);
        r.points.push_back({c, t.tdr, t.threshold});
    }
    return r;
}

double scale_cutoff(double cutoff_224, std::size_t input_size) {
    return cutoff_224 * static_cast<double>(input_size) / 224.0;
}

Tensor Manipulation::apply(const Tensor& image, std::size_t index) const {
    const std::uint64_t s = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(index) + 1);
    switch (kind) {
    case Kind::identity: return image;
    case Kind::low_pass: return radial_filter(image, value, FilterMode::low);
    case Kind::salt_pepper: return add_noise(image, {NoiseKind::salt_pepper, value}, s);
    case Kind::gaussian: return add_noise(image, {NoiseKind::gaussian, value}, s);
    }
    return image;
}

std::vector<Manipulation> default_manipulations(std::size_t input_size, std::uint64_t seed) {
    std::vector<Manipulation> m;
    for (double c : {20.0, 30.0, 50.0}) {
        m.push_back({"LowPass" + std::to_string(static_cast<int>(c)), Manipulation::Kind::low_pass,
                     scale_cutoff(c, input_size), c, 0});
    }
    m.push_back({"SaltPepper", Manipulation::Kind::salt_pepper, 0.02, 0.02, seed});
    m.push_back({"Gaussian", Manipulation::Kind::gaussian, 0.1, 0.1, seed});
    return m;
}

std::vector<RobustnessRow> robustness_table(const Model& model, const Dataset& test_set,
                                            std::span<const Manipulation> manipulations, double target_fdr,
                                            std::size_t jobs) {
    std::vector<RobustnessRow> rows;
    const auto base = score_tdr(model, test_set, target_fdr, jobs);
    rows.push_back({"Original", 0.0, 0.0, base.tdr, base.threshold, 0.0});
    for (const auto& m : manipulations) {
        const auto data = transformed(test_set, jobs, [&m](const Tensor& img, std::size_t i) { return m.apply(img, i); });
        const auto t = score_tdr(model, data, target_fdr, jobs);
        rows.push_back({m.name, m.value, m.raw_value, t.tdr, t.threshold, relative_decrease(base.tdr, t.tdr)});
    }
    return rows;
}

void write_sweep_csv(const SweepResult& sweep, std::size_t input_size, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << "cutoff,cutoff_at_224,tdr,threshold\n";
    const double to_224 = 224.0 / static_cast<double>(input_size);
    out << "baseline,baseline," << fmt17(sweep.baseline_tdr) << ',' << fmt17(sweep.baseline_threshold) << '\n';
    for (const auto& p : sweep.points) {
        out << fmt17(p.cutoff) << ',' << fmt17(p.cutoff * to_224) << ',' << fmt17(p.tdr) << ','
            << fmt17(p.threshold) << '\n';
    }
}

void write_robustness_csv(std::span<const RobustnessRow> rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << "name,value,raw_value,tdr,threshold,relative_decrease\n";
    for (const auto& r : rows) {
        out << r.name << ',' << fmt17(r.value) << ',' << fmt17(r.raw_value) << ',' << fmt17(r.tdr) << ','
            << fmt17(r.threshold) << ',' << fmt17(r.relative_decrease) << '\n';
    }
}

GrayImage frequency_panel(const Tensor& image, double low_cutoff, double high_cutoff) {
    std::size_t h, w;
    plane_dims(image, h, w);
    const Tensor low = radial_filter(image, low_cutoff, FilterMode::low);
    const Tensor high = radial_filter(image, high_cutoff, FilterMode::high);
    const std::size_t gap = 2;
    GrayImage panel(3 * w + 2 * gap, 2 * h + gap, 255);
    auto blit_plane = [&](const Tensor& t, std::size_t col) {
        const auto px = t.data();
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                panel.at(col * (w + gap) + x, y) =
                    static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(px[y * w + x], 0.0, 1.0)));
            }
        }
    };
    auto blit_spec = [&](const Tensor& t, std::size_t col) {
        const auto img = log_magnitude_image(fft2_centered(t));
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) panel.at(col * (w + gap) + x, h + gap + y) = img.at(x, y);
        }
    };
    const Tensor* cols[3] = {&image, &low, &high};
    for (std::size_t c = 0; c < 3; ++c) {
        blit_plane(*cols[c], c);
        blit_spec(*cols[c], c);
    }
    return panel;
}

} // namespace dnetpad
