#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dnetpad/image.hpp"
#include "dnetpad/model.hpp"
#include "dnetpad/train.hpp"

namespace dnetpad {

// Dense row-major matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
};

// Flattened output of dense block `block_index` (0-based), one row per sample.
Matrix extract_block_features(const Model& model, const Dataset& data, std::size_t block_index, std::size_t jobs = 1);

struct TsneConfig {
    double perplexity = 30.0;
    std::size_t iterations = 1000;
    double exaggeration = 12.0;
    std::size_t exaggeration_iters = 250;
    double learning_rate = 200.0;
    double momentum_initial = 0.5;
    double momentum_final = 0.8;
    std::size_t momentum_switch = 250;
    std::uint64_t seed = 0;
    double entropy_tolerance = 1e-5;
    std::size_t max_search_steps = 200;

    std::string describe() const;  // key=value summary for output metadata
};

struct Embedding {
    std::size_t n = 0;
    std::vector<double> coords;  // n x 2
    std::vector<int> labels;
    std::size_t block = 0;  // written verbatim to the CSV block column
    double kl = 0.0;
    std::vector<double> kl_trace;  // KL of the layout before each iteration, then the final one

    double x(std::size_t i) const { return coords[2 * i]; }
    double y(std::size_t i) const { return coords[2 * i + 1]; }
};

// Row-major n x n matrix of p_{j|i} with each point's Gaussian precision
// found by bisection so the row entropy matches log(perplexity). Throws
// NumericError naming the point when the search fails.
std::vector<double> conditional_affinities(const Matrix& points, double perplexity, double tolerance = 1e-5,
                                           std::size_t max_steps = 200, std::vector<double>* entropies = nullptr);

// Symmetrised joint P: (p_{j|i} + p_{i|j}) / 2n.
std::vector<double> joint_affinities(const Matrix& points, double perplexity, double tolerance = 1e-5,
                                     std::size_t max_steps = 200);

// Student-t joint Q for a 2-D layout.
std::vector<double> student_affinities(std::span<const double> coords, std::size_t n);

// Exact O(n^2) t-SNE into two dimensions.
Embedding tsne(const Matrix& points, const TsneConfig& config);

// Mean silhouette coefficient over 2-D coordinates.
double silhouette(std::span<const double> coords, std::span<const int> labels);
// Fraction of each point's k nearest neighbours sharing its label, averaged.
double knn_purity(std::span<const double> coords, std::span<const int> labels, std::size_t k);

// Scatter plot on white: label 0 blue, anything else red.
RgbImage embedding_scatter(const Embedding& e, std::size_t size = 256);

// `x,y,label,block`.
void write_embedding_csv(std::span<const Embedding> embeddings, const std::filesystem::path& path);

} // namespace dnetpad
