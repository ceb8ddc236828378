#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dnetpad/image.hpp"
#include "dnetpad/synthdata.hpp"

namespace dnetpad {

struct ScoredSample {
    double score = 0.0;
    int label = 0;  // 0 bonafide, 1 PA
    ImageClass cls = ImageClass::bonafide;
    std::string id;
    friend bool operator==(const ScoredSample&, const ScoredSample&) = default;
};

// Decision rule: PA iff score >= threshold.
//
// The threshold is the smallest candidate, drawn from the bonafide scores
// plus the next double above their maximum, whose fraction of bonafide
// scores at or above it is <= target_fdr. Ties resolve toward the higher
// (stricter) threshold, so the realised FDR never exceeds the target.
double select_threshold(std::span<const double> bonafide, double target_fdr);

// Fraction of `scores` that are >= threshold.
double fraction_at_or_above(std::span<const double> scores, double threshold);

struct TdrAtFdr {
    double tdr = 0.0;
    double threshold = 0.0;
    double realized_fdr = 0.0;
};

TdrAtFdr tdr_at_fdr(std::span<const double> bonafide, std::span<const double> pa, double target_fdr);

struct DPrime {
    double value = 0.0;
    bool degenerate = false;  // zero pooled variance; value is +infinity
};

// |mean_pa - mean_bf| / sqrt((var_pa + var_bf) / 2) with unbiased variances.
DPrime d_prime(std::span<const double> bonafide, std::span<const double> pa);

// Equal-width bins over [0,1]; the last bin is closed on the right.
std::vector<std::size_t> histogram(std::span<const double> scores, std::size_t bins);

// 100 * (original - manipulated) / original.
double relative_decrease(double tdr_original, double tdr_manipulated);

struct EvalReport {
    double target_fdr = 0.0;
    double threshold = 0.0;
    double realized_fdr = 0.0;
    double tdr = 0.0;
    double apcer = 0.0;
    double bpcer = 0.0;
    DPrime d_prime;
    std::size_t n_bonafide = 0;
    std::size_t n_pa = 0;
    std::vector<std::string> bonafide_misclassified;  // flagged as PA
    std::vector<std::string> pa_misclassified;        // passed as bonafide
    std::size_t bins = 0;
    std::vector<std::size_t> hist_bonafide;
    std::vector<std::size_t> hist_pa;
};

EvalReport make_report(std::span<const ScoredSample> scores, double target_fdr, std::size_t bins = 20);

// Splits scores by binary label.
void split_scores(std::span<const ScoredSample> scores, std::vector<double>& bonafide, std::vector<double>& pa);

struct RocPoint {
    double threshold = 0.0;
    double fdr = 0.0;
    double tdr = 0.0;
};

// One point per distinct score, thresholds descending, starting above the
// highest score (0,0) and ending at (1,1).
std::vector<RocPoint> roc_curve(std::span<const double> bonafide, std::span<const double> pa);
void write_roc_csv(std::span<const RocPoint> roc, const std::filesystem::path& path);

void write_report_csv(const EvalReport& report, const std::filesystem::path& path);
void write_report_text(const EvalReport& report, const std::filesystem::path& path);
void write_histogram_csv(const EvalReport& report, const std::filesystem::path& path);

// Bar plot of both histograms (bonafide dark, PA light) with the threshold
// drawn as a dashed vertical line.
GrayImage histogram_plot(const EvalReport& report, std::size_t width = 400, std::size_t height = 200);

} // namespace dnetpad
