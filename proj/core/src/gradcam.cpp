#include "dnetpad/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dnetpad/error.hpp"
#include "dnetpad/parallel.hpp"

namespace dnetpad {
namespace {

void chw_dims(const Tensor& t, std::size_t& c, std::size_t& h, std::size_t& w) {
    if (t.rank() == 3) {
        c = t.dim(0), h = t.dim(1), w = t.dim(2);
    } else if (t.rank() == 4 && t.dim(0) == 1) {
        c = t.dim(1), h = t.dim(2), w = t.dim(3);
    } else {
        throw ShapeError("grad-cam: expected [C,h,w] or [1,C,h,w], got " + shape_string(t.shape()));
    }
}

void normalise(Heatmap& m) {
    double peak = 0.0;
    for (double v : m.values) peak = std::max(peak, v);
    m.all_zero = !(peak > 0.0);
    if (m.all_zero) {
        std::fill(m.values.begin(), m.values.end(), 0.0);
        return;
    }
    for (double& v : m.values) v /= peak;
}

} // namespace

Heatmap gradcam_from(const Tensor& activations, const Tensor& gradients, std::size_t out_h, std::size_t out_w) {
    std::size_t c, h, w, gc, gh, gw;
    chw_dims(activations, c, h, w);
    chw_dims(gradients, gc, gh, gw);
    if (gc != c || gh != h || gw != w) {
        throw ShapeError("grad-cam: activations " + shape_string(activations.shape()) + " vs gradients " +
                         shape_string(gradients.shape()));
    }
    const auto a = activations.data();
    const auto g = gradients.data();
    const std::size_t hw = h * w;
    Tensor cam({h, w}, 0.0);
    auto cd = cam.data();
    for (std::size_t k = 0; k < c; ++k) {
        double alpha = 0.0;
        for (std::size_t i = 0; i < hw; ++i) alpha += g[k * hw + i];
        alpha /= static_cast<double>(hw);
        for (std::size_t i = 0; i < hw; ++i) cd[i] += alpha * a[k * hw + i];
    }
    for (double& v : cd) v = std::max(v, 0.0);
    const Tensor up = resize_bilinear(cam, out_h, out_w);
    Heatmap m;
    m.height = out_h;
    m.width = out_w;
    m.values.assign(up.data().begin(), up.data().end());
    for (double& v : m.values) v = std::max(v, 0.0);
    normalise(m);
    return m;
}

Heatmap grad_cam(const Model& model, const Tensor& image, int target_class, std::optional<std::size_t> block_index) {
    const std::size_t blocks = model.config().block_layers.size();
    const std::size_t b = block_index.value_or(blocks - 1);
    if (b >= blocks) {
        throw InputError("grad-cam: block index " + std::to_string(b) + " out of range (" + std::to_string(blocks) +
                         " blocks)");
    }
    const auto classes = model.config().num_classes;
    if (target_class < 0 || static_cast<std::size_t>(target_class) >= classes) {
        throw InputError("grad-cam: target class " + std::to_string(target_class) + " out of range");
    }
    Model::Cache cache;
    model.forward(image, cache);
    Tensor onehot({1, classes}, 0.0);
    onehot[static_cast<std::size_t>(target_class)] = 1.0;
    Tensor act, grad;
    if (b + 1 == blocks) {
        act = cache.blocks.back().output;
        grad = model.head_backward(act, onehot);
    } else {
        std::vector<Tensor> block_grads;
        model.backward(cache, onehot, &block_grads);
        act = cache.blocks[b].output;
        grad = std::move(block_grads[b]);
    }
    const std::size_t s = model.config().input_size;
    return gradcam_from(act, grad, s, s);
}

std::vector<Heatmap> grad_cam_batch(const Model& model, const Dataset& data, int target_class,
                                    std::optional<std::size_t> block_index, std::size_t jobs) {
    std::vector<Heatmap> maps(data.size());
    parallel_for(data.size(), jobs, [&](std::size_t i) {
        maps[i] = grad_cam(model, data[i].image, target_class, block_index);
        maps[i].source_class = data[i].cls;
        maps[i].source_id = data[i].id;
    });
    return maps;
}

Heatmap average_heatmap(std::span<const Heatmap> maps) {
    if (maps.empty()) throw InputError("average_heatmap: no heatmaps");
    Heatmap avg;
    avg.height = maps[0].height;
    avg.width = maps[0].width;
    avg.source_class = maps[0].source_class;
    avg.source_id = "average of " + std::to_string(maps.size());
    avg.values.assign(avg.height * avg.width, 0.0);
    for (const auto& m : maps) {
        if (m.height != avg.height || m.width != avg.width) {
            throw InputError("average_heatmap: mixed resolutions " + std::to_string(avg.height) + "x" +
                             std::to_string(avg.width) + " and " + std::to_string(m.height) + "x" +
                             std::to_string(m.width) + " (" + m.source_id + ")");
        }
        for (std::size_t i = 0; i < avg.values.size(); ++i) avg.values[i] += m.values[i];
    }
    for (double& v : avg.values) v /= static_cast<double>(maps.size());
    normalise(avg);
    return avg;
}

double annulus_ratio(const Heatmap& map, double inner, double outer_lo, double outer_hi) {
    const double cy = (static_cast<double>(map.height) - 1.0) / 2.0;
    const double cx = (static_cast<double>(map.width) - 1.0) / 2.0;
    const double r = static_cast<double>(map.width) / 2.0;
    double in_sum = 0.0, out_sum = 0.0;
    std::size_t in_n = 0, out_n = 0;
    for (std::size_t y = 0; y < map.height; ++y) {
        for (std::size_t x = 0; x < map.width; ++x) {
            const double rho = std::hypot(static_cast<double>(y) - cy, static_cast<double>(x) - cx) / r;
            if (rho < inner) {
                in_sum += map.at(y, x);
                ++in_n;
            } else if (rho >= outer_lo && rho <= outer_hi) {
                out_sum += map.at(y, x);
                ++out_n;
            }
        }
    }
    if (in_n == 0 || out_n == 0) throw InputError("annulus_ratio: empty region");
    const double in_mean = in_sum / static_cast<double>(in_n);
    const double out_mean = out_sum / static_cast<double>(out_n);
    if (in_mean == 0.0) return out_mean > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    return out_mean / in_mean;
}

GrayImage heatmap_image(const Heatmap& map) {
    GrayImage img(map.width, map.height);
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(map.values[i], 0.0, 1.0)));
    }
    return img;
}

RgbImage heatmap_overlay(const Heatmap& map, const Tensor* background, double alpha) {
    if (background && background->size() != map.values.size()) {
        throw ShapeError("heatmap overlay: background " + shape_string(background->shape()) + " does not match " +
                         std::to_string(map.height) + "x" + std::to_string(map.width));
    }
    RgbImage img{map.width, map.height, std::vector<std::uint8_t>(map.values.size() * 3)};
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        const double v = std::clamp(map.values[i], 0.0, 1.0);
        double rgb[3] = {v, 0.0, 1.0 - v};
        if (background) {
            const double g = std::clamp(background->data()[i], 0.0, 1.0);
            for (double& c : rgb) c = alpha * c + (1.0 - alpha) * g;
        }
        for (int k = 0; k < 3; ++k) img.pixels[i * 3 + k] = static_cast<std::uint8_t>(std::lround(255.0 * rgb[k]));
    }
    return img;
}

} // namespace dnetpad
