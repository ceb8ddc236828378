#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dnetpad/image.hpp"
#include "dnetpad/tensor.hpp"

namespace dnetpad {

enum class ImageClass { bonafide, print, artificial_eye, cosmetic_contact };
inline constexpr std::array<ImageClass, 4> kAllClasses{ImageClass::bonafide, ImageClass::print,
                                                       ImageClass::artificial_eye, ImageClass::cosmetic_contact};

enum class EyeSide { left, right };

std::string_view to_string(ImageClass c);
std::string_view to_string(EyeSide s);
// Throws InputError for anything but the four class names.
ImageClass parse_image_class(std::string_view name);

// 0 for bonafide, 1 for every PA class.
int binary_label(ImageClass c);

struct IrisCircle {
    double cx = 0.0;
    double cy = 0.0;
    double r = 0.0;
    friend bool operator==(const IrisCircle&, const IrisCircle&) = default;
};

struct LabeledImage {
    GrayImage pixels;
    ImageClass label = ImageClass::bonafide;
    IrisCircle iris;
    EyeSide eye_side = EyeSide::left;
    std::uint64_t seed = 0;
    std::string source;           // file path, or "seed:<n>" for generated images
    bool circle_assumed = false;  // no sidecar: full-image circle
};

// Fixed constants of the generator, gathered so tests can refer to them.
// Radii are fractions of the iris radius unless noted.
struct GeneratorConstants {
    double iris_radius_min = 0.28;  // fraction of image size
    double iris_radius_max = 0.34;
    double center_jitter = 0.04;    // fraction of image size
    double pupil_ratio_min = 0.28;
    double pupil_ratio_max = 0.38;
    int texture_radial_cells = 3;     // lowest octave lattice, radial direction
    int texture_angular_cells = 12;   // lowest octave lattice, around the circle
    int bonafide_octaves = 5;
    int artificial_octaves = 2;
    double texture_persistence = 0.8;
    double bonafide_contrast = 0.26;
    double artificial_contrast = 0.08;
    double bonafide_iris_level = 0.40;
    // Painted irises are flat and lighter, without the limbal shading and
    // collarette of a live iris.
    double artificial_iris_level = 0.55;
    std::size_t halftone_pitch = 4;   // pixels
    double halftone_mix = 0.45;       // weight of the binary dot screen
    double ring_inner = 0.62;
    double ring_outer = 0.97;
    double ring_opacity = 0.8;
    int ring_spokes = 28;
    double ring_wavelength = 0.09;    // radial period of the printed dots
    double sensor_noise = 0.008;
};

const GeneratorConstants& generator_constants();

// Deterministic in (cls, seed, size). size >= 32.
LabeledImage generate(ImageClass cls, std::uint64_t seed, std::size_t size);

// Tight 2r square around the iris circle, clamped to the image bounds,
// bilinear-resized to [1,1,out_size,out_size] with values in [0,1].
Tensor crop_and_resize(const LabeledImage& image, std::size_t out_size);

struct LoadResult {
    std::vector<LabeledImage> images;
    std::vector<std::string> errors;  // unreadable images, one line each
    std::size_t warnings = 0;         // non-image files and unknown class folders
};

// Walks `root` for `<class>/<name>.pgm|png` files (optionally under a
// `<split>/` level), in sorted path order. `pattern` is an fnmatch glob on
// the file name. A `<name>.circle` sidecar holding "cx cy r" supplies the
// iris circle; otherwise the full-image circle is assumed and flagged.
LoadResult load_dir(const std::filesystem::path& root, const std::string& pattern = "*");

enum class Split { train, test };
std::string_view to_string(Split s);

// Per-class image counts for one split.
struct DatasetManifest {
    std::array<std::size_t, 4> counts{};  // indexed like kAllClasses
    Split split = Split::train;
    std::uint64_t seed = 0;
    std::size_t image_size = 128;
    std::size_t total() const;
};

// Half bonafide (rounded up); the PA half split evenly over the three PA
// classes, remainder going to the earlier classes.
std::array<std::size_t, 4> balanced_counts(std::size_t total);

// Per-sample seed; train and test seeds from the same base never collide.
std::uint64_t sample_seed(std::uint64_t base, Split split, std::size_t index);

std::vector<LabeledImage> generate_split(const DatasetManifest& manifest);

// Writes `<root>/<split>/<class>/<class>_<index>.pgm` plus `.circle`
// sidecars, and `<root>/manifest.csv` with columns
// path,label,split,cx,cy,r,eye_side.
void write_dataset(const std::filesystem::path& root, const std::vector<LabeledImage>& train,
                   const std::vector<LabeledImage>& test);

} // namespace dnetpad
