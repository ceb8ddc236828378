#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dnetpad/image.hpp"
#include "dnetpad/model.hpp"
#include "dnetpad/synthdata.hpp"
#include "dnetpad/train.hpp"

namespace dnetpad {

struct Heatmap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;  // row-major, in [0,1]
    ImageClass source_class = ImageClass::bonafide;
    std::string source_id;
    bool all_zero = false;  // no positive evidence anywhere

    double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

// The weighting step on its own: activations and gradients are [C,h,w] or
// [1,C,h,w]. alpha_k is the spatial mean of gradient k; the map is
// ReLU(sum_k alpha_k A^k), bilinearly resized to out_h x out_w and divided
// by its maximum.
Heatmap gradcam_from(const Tensor& activations, const Tensor& gradients, std::size_t out_h, std::size_t out_w);

// Grad-CAM of `target_class`'s logit at the output of dense block
// `block_index` (default: last block).
Heatmap grad_cam(const Model& model, const Tensor& image, int target_class,
                 std::optional<std::size_t> block_index = std::nullopt);

std::vector<Heatmap> grad_cam_batch(const Model& model, const Dataset& data, int target_class,
                                    std::optional<std::size_t> block_index = std::nullopt, std::size_t jobs = 1);

// Pixelwise mean, then max-normalised. Throws InputError on mixed sizes.
Heatmap average_heatmap(std::span<const Heatmap> maps);

// Mean heat in the centred annulus [outer_lo, outer_hi]*R divided by the mean
// inside the disk of radius inner*R, with R half the map width. Returns +inf
// when the inner mean is zero and the outer one is not.
double annulus_ratio(const Heatmap& map, double inner = 0.5, double outer_lo = 0.6, double outer_hi = 1.0);

GrayImage heatmap_image(const Heatmap& map);
// Red (hot) to blue (cold) colouring blended over a grayscale background of
// the same size; pass nullptr for the colour map alone.
RgbImage heatmap_overlay(const Heatmap& map, const Tensor* background, double alpha = 0.5);

} // namespace dnetpad
