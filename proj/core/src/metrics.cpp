#include "dnetpad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>

#include "dnetpad/error.hpp"

namespace dnetpad {
namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void mean_var(std::span<const double> xs, double& mean, double& var) {
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size() - 1);
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ';';
        out += items[i];
    }
    return out;
}

} // namespace

double fraction_at_or_above(std::span<const double> scores, double threshold) {
    if (scores.empty()) return 0.0;
    std::size_t n = 0;
    for (double s : scores) n += s >= threshold ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(scores.size());
}

double select_threshold(std::span<const double> bonafide, double target_fdr) {
    if (bonafide.empty()) throw InputError("select_threshold: empty bonafide score list");
    if (!(target_fdr >= 0.0 && target_fdr <= 1.0)) throw InputError("select_threshold: target_fdr must lie in [0,1]");
    std::vector<double> sorted(bonafide.begin(), bonafide.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (i > 0 && sorted[i] == sorted[i - 1]) continue;
        // sorted[i] is the first occurrence, so n - i scores are >= it.
        if (static_cast<double>(sorted.size() - i) / n <= target_fdr) return sorted[i];
    }
    return std::nextafter(sorted.back(), std::numeric_limits<double>::infinity());
}

TdrAtFdr tdr_at_fdr(std::span<const double> bonafide, std::span<const double> pa, double target_fdr) {
    if (pa.empty()) throw InputError("tdr_at_fdr: empty PA score list");
    TdrAtFdr r;
    r.threshold = select_threshold(bonafide, target_fdr);
    r.tdr = fraction_at_or_above(pa, r.threshold);
    r.realized_fdr = fraction_at_or_above(bonafide, r.threshold);
    return r;
}

DPrime d_prime(std::span<const double> bonafide, std::span<const double> pa) {
    if (bonafide.size() < 2 || pa.size() < 2) throw InputError("d_prime: need at least 2 scores per class");
    double mb, vb, mp, vp;
    mean_var(bonafide, mb, vb);
    mean_var(pa, mp, vp);
    const double pooled = (vp + vb) / 2.0;
    if (pooled <= 0.0) return {std::numeric_limits<double>::infinity(), true};
    return {std::abs(mp - mb) / std::sqrt(pooled), false};
}

std::vector<std::size_t> histogram(std::span<const double> scores, std::size_t bins) {
    if (bins < 1) throw InputError("histogram: bins must be >= 1");
    std::vector<std::size_t> counts(bins, 0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double s = scores[i];
        if (!(s >= 0.0 && s <= 1.0)) {
            throw InputError("histogram: score " + fmt17(s) + " of sample " + std::to_string(i) + " outside [0,1]");
        }
        const auto b = std::min(bins - 1, static_cast<std::size_t>(s * static_cast<double>(bins)));
        ++counts[b];
    }
    return counts;
}

double relative_decrease(double tdr_original, double tdr_manipulated) {
    if (!(tdr_original > 0.0)) throw InputError("relative_decrease: original TDR must be > 0");
    return 100.0 * (tdr_original - tdr_manipulated) / tdr_original;
}

void split_scores(std::span<const ScoredSample> scores, std::vector<double>& bonafide, std::vector<double>& pa) {
    bonafide.clear();
    pa.clear();
    for (const auto& s : scores) (s.label == 0 ? bonafide : pa).push_back(s.score);
}

EvalReport make_report(std::span<const ScoredSample> scores, double target_fdr, std::size_t bins) {
    std::vector<double> bf, pa;
    split_scores(scores, bf, pa);
    if (bf.empty() || pa.empty()) throw InputError("evaluation needs both bonafide and PA scores");
    EvalReport r;
    r.target_fdr = target_fdr;
    const auto t = tdr_at_fdr(bf, pa, target_fdr);
    r.threshold = t.threshold;
    r.tdr = t.tdr;
    r.realized_fdr = t.realized_fdr;
    r.n_bonafide = bf.size();
    r.n_pa = pa.size();
    std::size_t pa_missed = 0;
    for (const auto& s : scores) {
        const bool flagged = s.score >= r.threshold;
        if (s.label == 0 && flagged) r.bonafide_misclassified.push_back(s.id);
        if (s.label != 0 && !flagged) {
            r.pa_misclassified.push_back(s.id);
            ++pa_missed;
        }
    }
    r.apcer = static_cast<double>(pa_missed) / static_cast<double>(pa.size());
    r.bpcer = r.realized_fdr;
    r.d_prime = (bf.size() >= 2 && pa.size() >= 2) ? d_prime(bf, pa) : DPrime{};
    r.bins = bins;
    r.hist_bonafide = histogram(bf, bins);
    r.hist_pa = histogram(pa, bins);
    return r;
}

std::vector<RocPoint> roc_curve(std::span<const double> bonafide, std::span<const double> pa) {
    if (bonafide.empty() || pa.empty()) throw InputError("roc_curve: need both bonafide and PA scores");
    std::vector<double> bf(bonafide.begin(), bonafide.end()), ps(pa.begin(), pa.end());
    std::sort(bf.begin(), bf.end(), std::greater<>());
    std::sort(ps.begin(), ps.end(), std::greater<>());
    std::vector<double> all(bf);
    all.insert(all.end(), ps.begin(), ps.end());
    std::sort(all.begin(), all.end(), std::greater<>());
    all.erase(std::unique(all.begin(), all.end()), all.end());

    std::vector<RocPoint> roc;
    roc.push_back({std::nextafter(all.front(), std::numeric_limits<double>::infinity()), 0.0, 0.0});
    std::size_t ib = 0, ip = 0;
    for (double t : all) {
        while (ib < bf.size() && bf[ib] >= t) ++ib;
        while (ip < ps.size() && ps[ip] >= t) ++ip;
        roc.push_back({t, static_cast<double>(ib) / static_cast<double>(bf.size()),
                       static_cast<double>(ip) / static_cast<double>(ps.size())});
    }
    return roc;
}

void write_roc_csv(std::span<const RocPoint> roc, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << "threshold,fdr,tdr\n";
    for (const auto& p : roc) out << fmt17(p.threshold) << ',' << fmt17(p.fdr) << ',' << fmt17(p.tdr) << '\n';
}

void write_report_csv(const EvalReport& r, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << "threshold,target_fdr,realized_fdr,tdr,apcer,bpcer,d_prime,d_prime_degenerate,n_bonafide,n_pa,"
           "bonafide_misclassified,pa_misclassified\n";
    out << fmt17(r.threshold) << ',' << fmt17(r.target_fdr) << ',' << fmt17(r.realized_fdr) << ',' << fmt17(r.tdr)
        << ',' << fmt17(r.apcer) << ',' << fmt17(r.bpcer) << ',' << fmt17(r.d_prime.value) << ','
        << (r.d_prime.degenerate ? 1 : 0) << ',' << r.n_bonafide << ',' << r.n_pa << ','
        << join(r.bonafide_misclassified) << ',' << join(r.pa_misclassified) << '\n';
}

void write_report_text(const EvalReport& r, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    char line[256];
    std::snprintf(line, sizeof line, "bonafide samples : %zu\nPA samples       : %zu\n", r.n_bonafide, r.n_pa);
    out << line;
    std::snprintf(line, sizeof line, "target FDR       : %.4f%%\nthreshold        : %.6f\n", 100.0 * r.target_fdr,
                  r.threshold);
    out << line;
    std::snprintf(line, sizeof line, "TDR              : %.2f%%\nrealised FDR     : %.4f%%\n", 100.0 * r.tdr,
                  100.0 * r.realized_fdr);
    out << line;
    std::snprintf(line, sizeof line, "APCER            : %.2f%%\nBPCER            : %.4f%%\n", 100.0 * r.apcer,
                  100.0 * r.bpcer);
    out << line;
    if (r.d_prime.degenerate) {
        out << "d-prime          : inf (zero pooled variance)\n";
    } else {
        std::snprintf(line, sizeof line, "d-prime          : %.4f\n", r.d_prime.value);
        out << line;
    }
    out << "bonafide flagged as PA (" << r.bonafide_misclassified.size() << "):\n";
    for (const auto& id : r.bonafide_misclassified) out << "  " << id << '\n';
    out << "PA passed as bonafide (" << r.pa_misclassified.size() << "):\n";
    for (const auto& id : r.pa_misclassified) out << "  " << id << '\n';
}

void write_histogram_csv(const EvalReport& r, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << "bin_lo,bin_hi,bonafide,pa\n";
    for (std::size_t b = 0; b < r.bins; ++b) {
        out << fmt17(static_cast<double>(b) / static_cast<double>(r.bins)) << ','
            << fmt17(static_cast<double>(b + 1) / static_cast<double>(r.bins)) << ',' << r.hist_bonafide[b] << ','
            << r.hist_pa[b] << '\n';
    }
}

GrayImage histogram_plot(const EvalReport& r, std::size_t width, std::size_t height) {
    GrayImage img(width, height, 255);
    std::size_t peak = 1;
    for (std::size_t b = 0; b < r.bins; ++b) peak = std::max({peak, r.hist_bonafide[b], r.hist_pa[b]});
    const double bin_w = static_cast<double>(width) / static_cast<double>(r.bins);
    auto bar = [&](std::size_t b, std::size_t count, bool second, std::uint8_t shade) {
        const auto x0 = static_cast<std::size_t>(bin_w * (static_cast<double>(b) + (second ? 0.5 : 0.05)));
        const auto x1 = static_cast<std::size_t>(bin_w * (static_cast<double>(b) + (second ? 0.95 : 0.5)));
        const auto bar_h = static_cast<std::size_t>(std::lround(static_cast<double>(count) / static_cast<double>(peak) *
                                                                static_cast<double>(height - 1)));
        for (std::size_t x = x0; x < std::min(x1, width); ++x) {
            for (std::size_t y = height - bar_h; y < height; ++y) img.at(x, y) = shade;
        }
    };
    for (std::size_t b = 0; b < r.bins; ++b) {
        bar(b, r.hist_bonafide[b], false, 60);
        bar(b, r.hist_pa[b], true, 170);
    }
    if (r.threshold >= 0.0 && r.threshold <= 1.0) {
        const auto x = std::min(width - 1, static_cast<std::size_t>(r.threshold * static_cast<double>(width)));
        for (std::size_t y = 0; y < height; ++y) {
            if ((y / 4) % 2 == 0) img.at(x, y) = 0;
        }
    }
    return img;
}

} // namespace dnetpad
