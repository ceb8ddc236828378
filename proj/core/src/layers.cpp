#include "dnetpad/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dnetpad/error.hpp"

namespace dnetpad {
namespace {

// Output positions o in [lo, hi) whose source index o*stride + k - pad
// lands inside [0, extent).
struct Range {
    std::size_t lo;
    std::size_t hi;
};

Range valid_range(std::size_t out_extent, std::size_t extent, std::size_t k, std::size_t stride,
                  std::size_t pad) {
    // Need o*stride + k >= pad and o*stride + k - pad <= extent - 1.
    std::size_t lo = 0;
    if (pad > k) lo = (pad - k + stride - 1) / stride;
    std::size_t hi = 0;
    if (extent - 1 + pad >= k) hi = std::min(out_extent, (extent - 1 + pad - k) / stride + 1);
    if (hi < lo) hi = lo;
    return {lo, hi};
}

// Four-lane accumulation keeps the sum order fixed while letting the
// compiler pipeline the adds.
double dot_strided(const double* a, const double* b, std::size_t n, std::size_t b_stride) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i * b_stride];
        s1 += a[i + 1] * b[(i + 1) * b_stride];
        s2 += a[i + 2] * b[(i + 2) * b_stride];
        s3 += a[i + 3] * b[(i + 3) * b_stride];
    }
    for (; i < n; ++i) s0 += a[i] * b[i * b_stride];
    return (s0 + s1) + (s2 + s3);
}

struct ConvGeometry {
    std::size_t n, c, h, w, f, kh, kw, oh, ow;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernel, Conv2dSpec spec) {
    require_rank(input, 4, "conv2d input");
    require_rank(kernel, 4, "conv2d kernel");
    if (spec.stride == 0) throw InputError("conv2d: stride must be >= 1");
    ConvGeometry g{};
    g.n = input.dim(0);
    g.c = input.dim(1);
    g.h = input.dim(2);
    g.w = input.dim(3);
    g.f = kernel.dim(0);
    g.kh = kernel.dim(2);
    g.kw = kernel.dim(3);
    if (kernel.dim(1) != g.c) {
        throw ShapeError("conv2d: kernel channels " + std::to_string(kernel.dim(1)) + " != input channels " +
                         std::to_string(g.c));
    }
    if (g.kh > g.h + 2 * spec.pad || g.kw > g.w + 2 * spec.pad) {
        throw ShapeError("conv2d: kernel " + shape_string(kernel.shape()) + " larger than padded input " +
                         shape_string(input.shape()));
    }
    g.oh = (g.h + 2 * spec.pad - g.kh) / spec.stride + 1;
    g.ow = (g.w + 2 * spec.pad - g.kw) / spec.stride + 1;
    return g;
}

} // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Conv2dSpec spec) {
    const ConvGeometry g = conv_geometry(input, kernel, spec);
    if (bias.size() != g.f) {
        throw ShapeError("conv2d: bias length " + std::to_string(bias.size()) + " != filters " +
                         std::to_string(g.f));
    }
    Tensor out({g.n, g.f, g.oh, g.ow});
    const std::size_t in_plane = g.h * g.w;
    const std::size_t out_plane = g.oh * g.ow;
    const std::size_t s = spec.stride;
    const double* in = input.raw();
    const double* k = kernel.raw();
    double* o = out.raw();

    const bool pointwise = g.kh == 1 && g.kw == 1 && s == 1 && spec.pad == 0;
    for (std::size_t n = 0; n < g.n; ++n) {
        for (std::size_t f = 0; f < g.f; ++f) {
            double* oplane = o + (n * g.f + f) * out_plane;
            std::fill(oplane, oplane + out_plane, bias[f]);
            if (pointwise) {
                for (std::size_t c = 0; c < g.c; ++c) {
                    const double* iplane = in + (n * g.c + c) * in_plane;
                    const double wv = k[f * g.c + c];
                    for (std::size_t i = 0; i < out_plane; ++i) oplane[i] += wv * iplane[i];
                }
                continue;
            }
            for (std::size_t c = 0; c < g.c; ++c) {
                const double* iplane = in + (n * g.c + c) * in_plane;
                const double* kf = k + (f * g.c + c) * g.kh * g.kw;
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                    const Range ry = valid_range(g.oh, g.h, ky, s, spec.pad);
                    for (std::size_t kx = 0; kx < g.kw; ++kx) {
                        const double wv = kf[ky * g.kw + kx];
                        const Range rx = valid_range(g.ow, g.w, kx, s, spec.pad);
                        for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
                            const double* irow = iplane + (oy * s + ky - spec.pad) * g.w;
                            double* orow = oplane + oy * g.ow;
                            if (s == 1) {
                                if (rx.hi == rx.lo) continue;
                                const double* src = irow + (rx.lo + kx - spec.pad);
                                double* dst = orow + rx.lo;
                                const std::size_t len = rx.hi - rx.lo;
                                for (std::size_t i = 0; i < len; ++i) dst[i] += wv * src[i];
                            } else {
                                for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) {
                                    orow[ox] += wv * irow[ox * s + kx - spec.pad];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

LayerGrads conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_output,
                           Conv2dSpec spec) {
    const ConvGeometry g = conv_geometry(input, kernel, spec);
    if (grad_output.shape() != Shape{g.n, g.f, g.oh, g.ow}) {
        throw ShapeError("conv2d_backward: grad_output shape " + shape_string(grad_output.shape()) +
                         " does not match forward output");
    }
    Tensor grad_in(input.shape());
    Tensor grad_k(kernel.shape());
    Tensor grad_b({g.f});
    const std::size_t in_plane = g.h * g.w;
    const std::size_t out_plane = g.oh * g.ow;
    const std::size_t s = spec.stride;
    const double* in = input.raw();
    const double* k = kernel.raw();
    const double* go = grad_output.raw();
    double* gi = grad_in.raw();
    double* gk = grad_k.raw();
    const bool pointwise = g.kh == 1 && g.kw == 1 && s == 1 && spec.pad == 0;

    for (std::size_t n = 0; n < g.n; ++n) {
        for (std::size_t f = 0; f < g.f; ++f) {
            const double* gplane = go + (n * g.f + f) * out_plane;
            double bsum = 0.0;
            for (std::size_t i = 0; i < out_plane; ++i) bsum += gplane[i];
            grad_b[f] += bsum;
            if (pointwise) {
                for (std::size_t c = 0; c < g.c; ++c) {
                    const double* iplane = in + (n * g.c + c) * in_plane;
                    double* giplane = gi + (n * g.c + c) * in_plane;
                    const double wv = k[f * g.c + c];
                    gk[f * g.c + c] += dot_strided(gplane, iplane, out_plane, 1);
                    for (std::size_t i = 0; i < out_plane; ++i) giplane[i] += wv * gplane[i];
                }
                continue;
            }
            for (std::size_t c = 0; c < g.c; ++c) {
                const double* iplane = in + (n * g.c + c) * in_plane;
                double* giplane = gi + (n * g.c + c) * in_plane;
                const double* kf = k + (f * g.c + c) * g.kh * g.kw;
                double* gkf = gk + (f * g.c + c) * g.kh * g.kw;
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                    const Range ry = valid_range(g.oh, g.h, ky, s, spec.pad);
                    for (std::size_t kx = 0; kx < g.kw; ++kx) {
                        const double wv = kf[ky * g.kw + kx];
                        const Range rx = valid_range(g.ow, g.w, kx, s, spec.pad);
                        if (rx.hi == rx.lo) continue;
                        double wsum = 0.0;
                        for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
                            const std::size_t iy = oy * s + ky - spec.pad;
                            const double* grow = gplane + oy * g.ow + rx.lo;
                            const std::size_t ix0 = rx.lo * s + kx - spec.pad;
                            const double* irow = iplane + iy * g.w + ix0;
                            double* girow = giplane + iy * g.w + ix0;
                            const std::size_t len = rx.hi - rx.lo;
                            wsum += dot_strided(grow, irow, len, s);
                            if (s == 1) {
                                for (std::size_t i = 0; i < len; ++i) girow[i] += wv * grow[i];
                            } else {
                                for (std::size_t i = 0; i < len; ++i) girow[i * s] += wv * grow[i];
                            }
                        }
                        gkf[ky * g.kw + kx] += wsum;
                    }
                }
            }
        }
    }
    LayerGrads grads;
    grads.input = std::move(grad_in);
    grads.params.emplace("weight", std::move(grad_k));
    grads.params.emplace("bias", std::move(grad_b));
    return grads;
}

Tensor relu(const Tensor& input) {
    Tensor out(input.shape());
    const std::size_t n = input.size();
    for (std::size_t i = 0; i < n; ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_output) {
    if (input.shape() != grad_output.shape()) throw ShapeError("relu_backward: shape mismatch");
    Tensor out(input.shape());
    const std::size_t n = input.size();
    for (std::size_t i = 0; i < n; ++i) out[i] = input[i] > 0.0 ? grad_output[i] : 0.0;
    return out;
}

namespace {

struct PoolGeometry {
    std::size_t n, c, h, w, oh, ow;
};

PoolGeometry pool_geometry(const Tensor& input, Pool2dSpec spec) {
    require_rank(input, 4, "pool2d input");
    if (spec.stride == 0 || spec.kernel == 0) throw InputError("pool2d: kernel and stride must be >= 1");
    PoolGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), 0, 0};
    if (spec.kernel > g.h || spec.kernel > g.w) {
        throw ShapeError("pool2d: window " + std::to_string(spec.kernel) + " larger than input " +
                         shape_string(input.shape()));
    }
    g.oh = (g.h - spec.kernel) / spec.stride + 1;
    g.ow = (g.w - spec.kernel) / spec.stride + 1;
    return g;
}

} // namespace

Tensor pool2d(const Tensor& input, Pool2dSpec spec) {
    const PoolGeometry g = pool_geometry(input, spec);
    Tensor out({g.n, g.c, g.oh, g.ow});
    const double inv_area = 1.0 / static_cast<double>(spec.kernel * spec.kernel);
    for (std::size_t nc = 0; nc < g.n * g.c; ++nc) {
        const double* plane = input.raw() + nc * g.h * g.w;
        double* oplane = out.raw() + nc * g.oh * g.ow;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
                double acc = spec.mode == PoolMode::max ? -std::numeric_limits<double>::infinity() : 0.0;
                for (std::size_t ky = 0; ky < spec.kernel; ++ky) {
                    const double* row = plane + (oy * spec.stride + ky) * g.w + ox * spec.stride;
                    for (std::size_t kx = 0; kx < spec.kernel; ++kx) {
                        if (spec.mode == PoolMode::max) {
                            if (row[kx] > acc) acc = row[kx];
                        } else {
                            acc += row[kx];
                        }
                    }
                }
                oplane[oy * g.ow + ox] = spec.mode == PoolMode::max ? acc : acc * inv_area;
            }
        }
    }
    return out;
}

Tensor pool2d_backward(const Tensor& input, const Tensor& grad_output, Pool2dSpec spec) {
    const PoolGeometry g = pool_geometry(input, spec);
    if (grad_output.shape() != Shape{g.n, g.c, g.oh, g.ow}) {
        throw ShapeError("pool2d_backward: grad_output shape " + shape_string(grad_output.shape()) +
                         " does not match forward output");
    }
    Tensor grad_in(input.shape());
    const double inv_area = 1.0 / static_cast<double>(spec.kernel * spec.kernel);
    for (std::size_t nc = 0; nc < g.n * g.c; ++nc) {
        const double* plane = input.raw() + nc * g.h * g.w;
        double* gplane = grad_in.raw() + nc * g.h * g.w;
        const double* goplane = grad_output.raw() + nc * g.oh * g.ow;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
                const double gv = goplane[oy * g.ow + ox];
                const std::size_t y0 = oy * spec.stride;
                const std::size_t x0 = ox * spec.stride;
                if (spec.mode == PoolMode::avg) {
                    for (std::size_t ky = 0; ky < spec.kernel; ++ky) {
                        for (std::size_t kx = 0; kx < spec.kernel; ++kx) {
                            gplane[(y0 + ky) * g.w + x0 + kx] += gv * inv_area;
                        }
                    }
                    continue;
                }
                std::size_t best = y0 * g.w + x0;
                double best_v = plane[best];
                for (std::size_t ky = 0; ky < spec.kernel; ++ky) {
                    for (std::size_t kx = 0; kx < spec.kernel; ++kx) {
                        const std::size_t idx = (y0 + ky) * g.w + x0 + kx;
                        if (plane[idx] > best_v) {
                            best_v = plane[idx];
                            best = idx;
                        }
                    }
                }
                gplane[best] += gv;
            }
        }
    }
    return grad_in;
}

Tensor concat_channels(std::span<const Tensor* const> inputs) {
    if (inputs.empty()) throw InputError("concat_channels: no inputs");
    const Tensor& first = *inputs[0];
    require_rank(first, 4, "concat_channels input");
    const std::size_t n = first.dim(0), h = first.dim(2), w = first.dim(3);
    std::size_t total_c = 0;
    for (const Tensor* t : inputs) {
        require_rank(*t, 4, "concat_channels input");
        if (t->dim(0) != n || t->dim(2) != h || t->dim(3) != w) {
            throw ShapeError("concat_channels: " + shape_string(t->shape()) + " incompatible with " +
                             shape_string(first.shape()));
        }
        total_c += t->dim(1);
    }
    Tensor out({n, total_c, h, w});
    const std::size_t plane = h * w;
    for (std::size_t b = 0; b < n; ++b) {
        double* dst = out.raw() + b * total_c * plane;
        for (const Tensor* t : inputs) {
            const std::size_t chunk = t->dim(1) * plane;
            const double* src = t->raw() + b * chunk;
            std::copy(src, src + chunk, dst);
            dst += chunk;
        }
    }
    return out;
}

Tensor concat_channels(const std::vector<Tensor>& inputs) {
    std::vector<const Tensor*> ptrs;
    ptrs.reserve(inputs.size());
    for (const auto& t : inputs) ptrs.push_back(&t);
    return concat_channels(std::span<const Tensor* const>(ptrs));
}

std::vector<Tensor> concat_channels_backward(const Tensor& grad_output,
                                             std::span<const std::size_t> channel_counts) {
    require_rank(grad_output, 4, "concat_channels_backward grad");
    const std::size_t n = grad_output.dim(0), total_c = grad_output.dim(1);
    const std::size_t h = grad_output.dim(2), w = grad_output.dim(3);
    std::size_t sum = 0;
    for (auto c : channel_counts) sum += c;
    if (sum != total_c) {
        throw ShapeError("concat_channels_backward: channel counts sum to " + std::to_string(sum) + ", gradient has " +
                         std::to_string(total_c));
    }
    const std::size_t plane = h * w;
    std::vector<Tensor> parts;
    parts.reserve(channel_counts.size());
    for (auto c : channel_counts) parts.emplace_back(Shape{n, c, h, w});
    for (std::size_t b = 0; b < n; ++b) {
        const double* src = grad_output.raw() + b * total_c * plane;
        for (auto& part : parts) {
            const std::size_t chunk = part.dim(1) * plane;
            std::copy(src, src + chunk, part.raw() + b * chunk);
            src += chunk;
        }
    }
    return parts;
}

Tensor global_avg_pool(const Tensor& input) {
    require_rank(input, 4, "global_avg_pool input");
    const std::size_t n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
    Tensor out({n, c});
    for (std::size_t i = 0; i < n * c; ++i) {
        const double* p = input.raw() + i * plane;
        double acc = 0.0;
        for (std::size_t j = 0; j < plane; ++j) acc += p[j];
        out[i] = acc / static_cast<double>(plane);
    }
    return out;
}

Tensor global_avg_pool_backward(const Tensor& input, const Tensor& grad_output) {
    require_rank(input, 4, "global_avg_pool_backward input");
    const std::size_t n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
    if (grad_output.shape() != Shape{n, c}) throw ShapeError("global_avg_pool_backward: shape mismatch");
    Tensor grad(input.shape());
    for (std::size_t i = 0; i < n * c; ++i) {
        const double v = grad_output[i] / static_cast<double>(plane);
        std::fill(grad.raw() + i * plane, grad.raw() + (i + 1) * plane, v);
    }
    return grad;
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    require_rank(input, 2, "linear input");
    require_rank(weight, 2, "linear weight");
    const std::size_t n = input.dim(0), d = input.dim(1), k = weight.dim(0);
    if (weight.dim(1) != d || bias.size() != k) {
        throw ShapeError("linear: input " + shape_string(input.shape()) + ", weight " +
                         shape_string(weight.shape()) + ", bias " + shape_string(bias.shape()));
    }
    Tensor out({n, k});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            out[i * k + j] = bias[j] + dot_strided(input.raw() + i * d, weight.raw() + j * d, d, 1);
        }
    }
    return out;
}

LayerGrads linear_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_output) {
    require_rank(input, 2, "linear input");
    require_rank(weight, 2, "linear weight");
    const std::size_t n = input.dim(0), d = input.dim(1), k = weight.dim(0);
    if (weight.dim(1) != d || grad_output.shape() != Shape{n, k}) {
        throw ShapeError("linear_backward: shape mismatch");
    }
    Tensor gin({n, d});
    Tensor gw({k, d});
    Tensor gb({k});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            const double g = grad_output[i * k + j];
            gb[j] += g;
            const double* x = input.raw() + i * d;
            const double* w = weight.raw() + j * d;
            double* gwr = gw.raw() + j * d;
            double* gir = gin.raw() + i * d;
            for (std::size_t t = 0; t < d; ++t) {
                gwr[t] += g * x[t];
                gir[t] += g * w[t];
            }
        }
    }
    LayerGrads grads;
    grads.input = std::move(gin);
    grads.params.emplace("weight", std::move(gw));
    grads.params.emplace("bias", std::move(gb));
    return grads;
}

Tensor softmax(const Tensor& logits) {
    require_rank(logits, 2, "softmax logits");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    Tensor probs({n, k});
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = logits.raw() + i * k;
        const double m = *std::max_element(row, row + k);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            probs[i * k + j] = std::exp(row[j] - m);
            z += probs[i * k + j];
        }
        for (std::size_t j = 0; j < k; ++j) probs[i * k + j] /= z;
    }
    return probs;
}

SoftmaxCrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    require_rank(logits, 2, "softmax_cross_entropy logits");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    if (k < 2) throw ShapeError("softmax_cross_entropy: need at least 2 classes");
    if (labels.size() != n) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
            throw InputError("softmax_cross_entropy: label " + std::to_string(labels[i]) + " at row " +
                             std::to_string(i) + " outside [0," + std::to_string(k) + ")");
        }
    }
    SoftmaxCrossEntropy r;
    r.probs = Tensor({n, k});
    r.grad_logits = Tensor({n, k});
    const double inv_n = 1.0 / static_cast<double>(n);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = logits.raw() + i * k;
        const double m = *std::max_element(row, row + k);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - m);
        const double log_z = std::log(z);
        for (std::size_t j = 0; j < k; ++j) {
            const double logp = row[j] - m - log_z;
            const double p = std::exp(logp);
            r.probs[i * k + j] = p;
            r.grad_logits[i * k + j] = (p - (static_cast<int>(j) == labels[i] ? 1.0 : 0.0)) * inv_n;
            if (static_cast<int>(j) == labels[i]) loss -= logp;
        }
    }
    r.loss = loss * inv_n;
    return r;
}

} // namespace dnetpad
