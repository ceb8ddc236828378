#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dnetpad/image.hpp"
#include "dnetpad/model.hpp"
#include "dnetpad/tensor.hpp"
#include "dnetpad/train.hpp"

namespace dnetpad {

using Complex = std::complex<double>;

// Row-major DFT grid with the DC bin shifted to (height/2, width/2).
struct Spectrum {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<Complex> bins;

    Complex& at(std::size_t y, std::size_t x) { return bins[y * width + x]; }
    const Complex& at(std::size_t y, std::size_t x) const { return bins[y * width + x]; }
};

// `plane` is [H,W] or [1,1,H,W].
Spectrum fft2_centered(const Tensor& plane);
// Real part of the inverse, shaped [H,W].
Tensor ifft2_centered(const Spectrum& spectrum);

// Distance from DC to the farthest bin of an H x W centered grid.
double max_bin_radius(std::size_t height, std::size_t width);

enum class FilterMode { low, high };

// Ideal radial mask: low keeps bins at distance <= cutoff from DC, high keeps
// the rest. Output has the input's shape; values are clamped to [0,1] unless
// `clamp` is false. A mask that keeps every bin returns the input unchanged.
Tensor radial_filter(const Tensor& image, double cutoff, FilterMode mode, bool clamp = true);

// Log-magnitude spectrum scaled to 0..255 for display.
GrayImage log_magnitude_image(const Spectrum& spectrum);

enum class NoiseKind { salt_pepper, gaussian };

struct NoiseSpec {
    NoiseKind kind = NoiseKind::gaussian;
    double amount = 0.0;  // density for salt_pepper, sigma for gaussian
};

// Salt-and-pepper picks round(density*H*W) distinct pixels; the first half
// (rounded up) become 1, the rest 0. Gaussian adds N(0, sigma) and clamps.
Tensor add_noise(const Tensor& image, const NoiseSpec& noise, std::uint64_t seed);

struct SweepPoint {
    double cutoff = 0.0;
    double tdr = 0.0;
    double threshold = 0.0;
};

struct SweepResult {
    std::vector<SweepPoint> points;
    double baseline_tdr = 0.0;
    double baseline_threshold = 0.0;
    std::string model_id;
};

// Low-pass filters every test image at each cutoff, rescores, and reselects
// the threshold from the filtered bonafide scores. Cutoffs must be strictly
// increasing.
SweepResult cutoff_sweep(const Model& model, const Dataset& test_set, std::span<const double> cutoffs,
                         double target_fdr, std::size_t jobs = 1);

// Cutoffs quoted for 224x224 inputs; this rescales one to `input_size`.
double scale_cutoff(double cutoff_224, std::size_t input_size);

struct Manipulation {
    enum class Kind { identity, low_pass, salt_pepper, gaussian };
    std::string name;
    Kind kind = Kind::identity;
    double value = 0.0;       // cutoff in bins, density, or sigma
    double raw_value = 0.0;   // value as quoted before rescaling
    std::uint64_t seed = 0;   // noise kinds only

    // `index` decorrelates the noise between test images.
    Tensor apply(const Tensor& image, std::size_t index) const;
};

// LowPass20/30/50 (rescaled to input_size), salt-and-pepper 0.02, Gaussian 0.1.
std::vector<Manipulation> default_manipulations(std::size_t input_size, std::uint64_t seed);

struct RobustnessRow {
    std::string name;
    double value = 0.0;
    double raw_value = 0.0;
    double tdr = 0.0;
    double threshold = 0.0;
    double relative_decrease = 0.0;
    friend bool operator==(const RobustnessRow&, const RobustnessRow&) = default;
};

// First row is the unmanipulated baseline ("Original").
std::vector<RobustnessRow> robustness_table(const Model& model, const Dataset& test_set,
                                            std::span<const Manipulation> manipulations, double target_fdr,
                                            std::size_t jobs = 1);

void write_sweep_csv(const SweepResult& sweep, std::size_t input_size, const std::filesystem::path& path);
void write_robustness_csv(std::span<const RobustnessRow> rows, const std::filesystem::path& path);

// 3x2 grid: original, low-pass, high-pass on top; their log-magnitude
// spectra below.
GrayImage frequency_panel(const Tensor& image, double low_cutoff, double high_cutoff);

} // namespace dnetpad
