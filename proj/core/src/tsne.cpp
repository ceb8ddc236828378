#include "dnetpad/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "dnetpad/error.hpp"
#include "dnetpad/parallel.hpp"

namespace dnetpad {
namespace {

std::vector<double> squared_distances(const Matrix& m) {
    const std::size_t n = m.rows;
    std::vector<double> d(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = m.row(i);
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto b = m.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < m.cols; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
            d[i * n + j] = d[j * n + i] = s;
        }
    }
    return d;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) kl += p[i] * std::log(p[i] / std::max(q[i], std::numeric_limits<double>::min()));
    }
    return kl;
}

double dist2d(std::span<const double> c, std::size_t i, std::size_t j) {
    return std::hypot(c[2 * i] - c[2 * j], c[2 * i + 1] - c[2 * j + 1]);
}

} // namespace

Matrix extract_block_features(const Model& model, const Dataset& data, std::size_t block_index, std::size_t jobs) {
    const auto& plan = model.plan();
    if (block_index >= plan.block_out.size()) {
        throw InputError("block index " + std::to_string(block_index) + " out of range (" +
                         std::to_string(plan.block_out.size()) + " blocks)");
    }
    const std::size_t s = plan.block_spatial[block_index];
    Matrix m{data.size(), plan.block_out[block_index] * s * s, {}};
    m.data.resize(m.rows * m.cols);
    parallel_for(data.size(), jobs, [&](std::size_t i) {
        const auto trace = model.forward(data[i].image);
        const auto f = trace.block_features[block_index].data();
        std::copy(f.begin(), f.end(), m.data.begin() + static_cast<std::ptrdiff_t>(i * m.cols));
    });
    return m;
}

std::string TsneConfig::describe() const {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "perplexity=%g iterations=%zu exaggeration=%g exaggeration_iters=%zu learning_rate=%g "
                  "momentum=%g->%g@%zu seed=%llu",
                  perplexity, iterations, exaggeration, exaggeration_iters, learning_rate, momentum_initial,
                  momentum_final, momentum_switch, static_cast<unsigned long long>(seed));
    return buf;
}

std::vector<double> conditional_affinities(const Matrix& points, double perplexity, double tolerance,
                                           std::size_t max_steps, std::vector<double>* entropies) {
    const std::size_t n = points.rows;
    if (n < 2) throw InputError("t-SNE needs at least 2 points");
    if (!(perplexity >= 2.0)) throw InputError("t-SNE perplexity must be >= 2");
    const auto d = squared_distances(points);
    const double target = std::log(perplexity);
    std::vector<double> p(n * n, 0.0);
    if (entropies) entropies->assign(n, 0.0);

    for (std::size_t i = 0; i < n; ++i) {
        double dmin = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) dmin = std::min(dmin, d[i * n + j]);
        }
        double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
        double entropy = 0.0;
        bool found = false;
        double* row = p.data() + i * n;
        for (std::size_t step = 0; step < max_steps; ++step) {
            double sum = 0.0, wsum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double dj = d[i * n + j] - dmin;
                row[j] = std::exp(-beta * dj);
                sum += row[j];
                wsum += dj * row[j];
            }
            entropy = std::log(sum) + beta * wsum / sum;
            for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
            const double diff = entropy - target;
            if (std::abs(diff) < tolerance) {
                found = true;
                break;
            }
            if (diff > 0.0) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        if (!found) {
            char buf[160];
            std::snprintf(buf, sizeof buf,
                          "t-SNE: precision search failed for point %zu (entropy %.6g, target %.6g); "
                          "too many duplicate points?",
                          i, entropy, target);
            throw NumericError(buf);
        }
        if (entropies) (*entropies)[i] = entropy;
    }
    return p;
}

std::vector<double> joint_affinities(const Matrix& points, double perplexity, double tolerance, std::size_t max_steps) {
    const std::size_t n = points.rows;
    auto cond = conditional_affinities(points, perplexity, tolerance, max_steps);
    std::vector<double> p(n * n, 0.0);
    const double scale = 1.0 / (2.0 * static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) * scale;
    }
    return p;
}

std::vector<double> student_affinities(std::span<const double> coords, std::size_t n) {
    std::vector<double> q(n * n, 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = coords[2 * i] - coords[2 * j];
            const double dy = coords[2 * i + 1] - coords[2 * j + 1];
            const double w = 1.0 / (1.0 + dx * dx + dy * dy);
            q[i * n + j] = q[j * n + i] = w;
            sum += 2.0 * w;
        }
    }
    for (double& v : q) v /= sum;
    return q;
}

Embedding tsne(const Matrix& points, const TsneConfig& cfg) {
    const std::size_t n = points.rows;
    if (static_cast<double>(n) < 3.0 * cfg.perplexity) {
        throw InputError("t-SNE needs n >= 3*perplexity (n=" + std::to_string(n) + ")");
    }
    const auto p = joint_affinities(points, cfg.perplexity, cfg.entropy_tolerance, cfg.max_search_steps);

    Embedding e;
    e.n = n;
    e.coords.resize(2 * n);
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> init(0.0, 1e-4);
    for (double& v : e.coords) v = init(rng);

    std::vector<double> update(2 * n, 0.0), gains(2 * n, 1.0), grad(2 * n), w(n * n);
    e.kl_trace.reserve(cfg.iterations + 1);
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const double exag = it < cfg.exaggeration_iters ? cfg.exaggeration : 1.0;
        const double momentum = it < cfg.momentum_switch ? cfg.momentum_initial : cfg.momentum_final;

        double wsum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            w[i * n + i] = 0.0;
            for (std::size_t j = i + 1; j < n; ++j) {
                const double dx = e.coords[2 * i] - e.coords[2 * j];
                const double dy = e.coords[2 * i + 1] - e.coords[2 * j + 1];
                const double v = 1.0 / (1.0 + dx * dx + dy * dy);
                w[i * n + j] = w[j * n + i] = v;
                wsum += 2.0 * v;
            }
        }
        double kl = 0.0;
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double pij = p[i * n + j];
                const double qij = w[i * n + j] / wsum;
                if (pij > 0.0) kl += pij * std::log(pij / std::max(qij, std::numeric_limits<double>::min()));
                const double mult = (exag * pij - qij) * w[i * n + j];
                grad[2 * i] += 4.0 * mult * (e.coords[2 * i] - e.coords[2 * j]);
                grad[2 * i + 1] += 4.0 * mult * (e.coords[2 * i + 1] - e.coords[2 * j + 1]);
            }
        }
        e.kl_trace.push_back(kl);

        for (std::size_t k = 0; k < 2 * n; ++k) {
            const bool flip = (grad[k] > 0.0) != (update[k] > 0.0);
            gains[k] = flip ? gains[k] + 0.2 : gains[k] * 0.8;
            gains[k] = std::max(gains[k], 0.01);
            update[k] = momentum * update[k] - cfg.learning_rate * gains[k] * grad[k];
            e.coords[k] += update[k];
        }
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += e.coords[2 * i];
            my += e.coords[2 * i + 1];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            e.coords[2 * i] -= mx;
            e.coords[2 * i + 1] -= my;
        }
    }
    for (double v : e.coords) {
        if (!std::isfinite(v)) throw NumericError("t-SNE produced non-finite coordinates");
    }
    e.kl = kl_divergence(p, student_affinities(e.coords, n));
    e.kl_trace.push_back(e.kl);
    return e;
}

double silhouette(std::span<const double> coords, std::span<const int> labels) {
    const std::size_t n = labels.size();
    if (coords.size() != 2 * n) throw ShapeError("silhouette: coordinate count does not match labels");
    std::vector<int> uniq(labels.begin(), labels.end());
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    if (uniq.size() < 2) throw InputError("silhouette needs at least two labels");
    std::vector<std::size_t> count(uniq.size(), 0);
    auto slot = [&](int l) { return static_cast<std::size_t>(std::lower_bound(uniq.begin(), uniq.end(), l) - uniq.begin()); };
    for (int l : labels) ++count[slot(l)];

    double total = 0.0;
    std::vector<double> sums(uniq.size());
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) sums[slot(labels[j])] += dist2d(coords, i, j);
        }
        const std::size_t own = slot(labels[i]);
        if (count[own] < 2) continue;  // singleton cluster contributes 0
        const double a = sums[own] / static_cast<double>(count[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < uniq.size(); ++c) {
            if (c != own) b = std::min(b, sums[c] / static_cast<double>(count[c]));
        }
        const double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

double knn_purity(std::span<const double> coords, std::span<const int> labels, std::size_t k) {
    const std::size_t n = labels.size();
    if (coords.size() != 2 * n) throw ShapeError("knn_purity: coordinate count does not match labels");
    if (k < 1 || k >= n) throw InputError("knn_purity: k must lie in [1, n)");
    double hits = 0.0;
    std::vector<std::pair<double, std::size_t>> d(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t m = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) d[m++] = {dist2d(coords, i, j), j};
        }
        std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
        for (std::size_t r = 0; r < k; ++r) hits += labels[d[r].second] == labels[i] ? 1.0 : 0.0;
    }
    return hits / static_cast<double>(n * k);
}

RgbImage embedding_scatter(const Embedding& e, std::size_t size) {
    RgbImage img{size, size, std::vector<std::uint8_t>(size * size * 3, 255)};
    if (e.n == 0) return img;
    double lo[2] = {e.x(0), e.y(0)}, hi[2] = {e.x(0), e.y(0)};
    for (std::size_t i = 0; i < e.n; ++i) {
        lo[0] = std::min(lo[0], e.x(i)), hi[0] = std::max(hi[0], e.x(i));
        lo[1] = std::min(lo[1], e.y(i)), hi[1] = std::max(hi[1], e.y(i));
    }
    const double margin = 6.0, span = static_cast<double>(size) - 2.0 * margin;
    for (std::size_t i = 0; i < e.n; ++i) {
        const double fx = hi[0] > lo[0] ? (e.x(i) - lo[0]) / (hi[0] - lo[0]) : 0.5;
        const double fy = hi[1] > lo[1] ? (e.y(i) - lo[1]) / (hi[1] - lo[1]) : 0.5;
        const long cx = std::lround(margin + fx * span), cy = std::lround(margin + (1.0 - fy) * span);
        const bool pa = !e.labels.empty() && e.labels[i] != 0;
        for (long dy = -1; dy <= 1; ++dy) {
            for (long dx = -1; dx <= 1; ++dx) {
                const auto px = static_cast<std::size_t>(cx + dx), py = static_cast<std::size_t>(cy + dy);
                if (px >= size || py >= size) continue;
                std::uint8_t* rgb = &img.pixels[(py * size + px) * 3];
                rgb[0] = pa ? 220 : 30;
                rgb[1] = 40;
                rgb[2] = pa ? 30 : 220;
            }
        }
    }
    return img;
}

void write_embedding_csv(std::span<const Embedding> embeddings, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << "x,y,label,block\n";
    char buf[128];
    for (const auto& e : embeddings) {
        for (std::size_t i = 0; i < e.n; ++i) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d,%zu\n", e.x(i), e.y(i), e.labels.empty() ? 0 : e.labels[i],
                          e.block);
            out << buf;
        }
    }
}

} // namespace dnetpad
