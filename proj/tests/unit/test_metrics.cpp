#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "dnetpad/error.hpp"
#include "dnetpad/metrics.hpp"
#include "oracles.hpp"

using namespace dnetpad;

namespace {

std::vector<double> uniform_scores(std::mt19937_64& rng, std::size_t n, bool coarse) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> q(0, 10);
    std::vector<double> v(n);
    for (auto& x : v) x = coarse ? q(rng) / 10.0 : u(rng);
    return v;
}

std::vector<double> normal_scores(std::mt19937_64& rng, std::size_t n, double mu, double sigma) {
    std::normal_distribution<double> d(mu, sigma);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

} // namespace

TEST_SUITE("metrics") {

TEST_CASE("threshold hand example") {
    const std::vector<double> bf{0.1, 0.2, 0.3, 0.4, 0.5};
    const std::vector<double> pa{0.45, 0.6, 0.7};
    CHECK(select_threshold(bf, 0.2) == 0.5);
    const auto r = tdr_at_fdr(bf, pa, 0.2);
    CHECK(r.threshold == 0.5);
    CHECK(r.tdr == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(r.realized_fdr == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("target 0 puts the threshold above every bonafide score") {
    const std::vector<double> bf{0.1, 0.3, 0.2};
    const double t = select_threshold(bf, 0.0);
    CHECK(t > 0.3);
    CHECK(fraction_at_or_above(bf, t) == 0.0);
    const std::vector<double> pa{0.31, 0.9};
    CHECK(tdr_at_fdr(bf, pa, 0.0).tdr == 1.0);
}

TEST_CASE("tied bonafide scores resolve to the stricter threshold") {
    const std::vector<double> bf(10, 0.4);
    for (double target : {0.0, 0.1, 0.5, 0.99}) CHECK(select_threshold(bf, target) > 0.4);
    CHECK(select_threshold(bf, 1.0) == 0.4);
}

TEST_CASE("threshold errors") {
    CHECK_THROWS_AS(select_threshold({}, 0.1), InputError);
    const std::vector<double> bf{0.5};
    CHECK_THROWS_AS(select_threshold(bf, -0.1), InputError);
    CHECK_THROWS_AS(select_threshold(bf, 1.5), InputError);
    CHECK_THROWS_AS(tdr_at_fdr(bf, {}, 0.1), InputError);
}

TEST_CASE("threshold agrees with the exhaustive scan") {
    std::mt19937_64 rng(20);
    std::uniform_int_distribution<std::size_t> n(1, 60);
    std::uniform_real_distribution<double> target(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        const bool coarse = trial % 3 == 0;
        const auto bf = uniform_scores(rng, n(rng), coarse);
        const auto pa = uniform_scores(rng, n(rng), coarse);
        const double t = trial % 5 == 0 ? 0.0 : target(rng);
        const auto r = tdr_at_fdr(bf, pa, t);
        const double bt = oracle::brute_threshold(bf, t);
        REQUIRE(r.threshold == bt);
        REQUIRE(r.tdr == oracle::brute_tdr(pa, bt));
        REQUIRE(r.realized_fdr <= t);
    }
}

TEST_CASE("identical distributions give TDR near the target FDR") {
    std::mt19937_64 rng(21);
    const auto bf = uniform_scores(rng, 100000, false);
    const auto pa = uniform_scores(rng, 100000, false);
    const auto r = tdr_at_fdr(bf, pa, 0.002);
    CHECK(std::fabs(r.tdr - 0.002) <= 0.003);
}

TEST_CASE("raising the threshold never raises FDR or TDR") {
    std::mt19937_64 rng(22);
    const auto bf = uniform_scores(rng, 200, false);
    const auto pa = uniform_scores(rng, 200, false);
    double prev_fdr = 2.0, prev_tdr = 2.0;
    for (int i = 0; i <= 100; ++i) {
        const double t = i / 100.0;
        const double f = fraction_at_or_above(bf, t);
        const double d = fraction_at_or_above(pa, t);
        CHECK(f <= prev_fdr);
        CHECK(d <= prev_tdr);
        prev_fdr = f;
        prev_tdr = d;
    }
}

TEST_CASE("threshold follows a strictly increasing transform") {
    std::mt19937_64 rng(23);
    const auto bf = uniform_scores(rng, 80, false);
    const auto pa = uniform_scores(rng, 80, false);
    auto f = [](double x) { return 0.25 + 0.5 * x * x; };
    std::vector<double> fbf, fpa;
    for (double x : bf) fbf.push_back(f(x));
    for (double x : pa) fpa.push_back(f(x));
    for (double target : {0.0, 0.01, 0.1, 0.37}) {
        const auto a = tdr_at_fdr(bf, pa, target);
        const auto b = tdr_at_fdr(fbf, fpa, target);
        CHECK(a.tdr == b.tdr);
        CHECK(a.realized_fdr == b.realized_fdr);
    }
}

TEST_CASE("report: APCER + TDR = 1 and BPCER is realized FDR") {
    std::mt19937_64 rng(24);
    std::vector<ScoredSample> s;
    for (int i = 0; i < 300; ++i) {
        const int label = i % 2;
        std::uniform_real_distribution<double> u(label ? 0.3 : 0.0, label ? 1.0 : 0.7);
        s.push_back({u(rng), label, label ? ImageClass::print : ImageClass::bonafide, "id" + std::to_string(i)});
    }
    const auto r = make_report(s, 0.05, 10);
    CHECK(r.apcer + r.tdr == 1.0);
    CHECK(r.bpcer == r.realized_fdr);
    CHECK(r.n_bonafide == 150);
    CHECK(r.n_pa == 150);
    CHECK(r.pa_misclassified.size() == static_cast<std::size_t>(std::lround(r.apcer * 150)));
    CHECK(r.bonafide_misclassified.size() == static_cast<std::size_t>(std::lround(r.bpcer * 150)));
    std::size_t total = 0;
    for (auto c : r.hist_bonafide) total += c;
    for (auto c : r.hist_pa) total += c;
    CHECK(total == 300);

    const auto dir = std::filesystem::temp_directory_path() / "dnetpad_unit_metrics";
    std::filesystem::create_directories(dir);
    write_report_csv(r, dir / "report.csv");
    std::ifstream f(dir / "report.csv");
    std::string header;
    std::getline(f, header);
    CHECK(header.rfind("threshold,target_fdr,realized_fdr,tdr,apcer,bpcer,d_prime", 0) == 0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("roc curve runs from (0,0) to (1,1) monotonically") {
    const std::vector<double> bf{0.1, 0.2, 0.2, 0.6};
    const std::vector<double> pa{0.3, 0.6, 0.9};
    const auto roc = roc_curve(bf, pa);
    REQUIRE(roc.size() >= 2);
    CHECK(roc.front().fdr == 0.0);
    CHECK(roc.front().tdr == 0.0);
    CHECK(roc.back().fdr == 1.0);
    CHECK(roc.back().tdr == 1.0);
    for (std::size_t i = 1; i < roc.size(); ++i) {
        CHECK(roc[i].threshold < roc[i - 1].threshold);
        CHECK(roc[i].fdr >= roc[i - 1].fdr);
        CHECK(roc[i].tdr >= roc[i - 1].tdr);
    }
}

TEST_CASE("d-prime closed forms") {
    const std::vector<double> bf{-1.0, 0.0, 1.0};
    const std::vector<double> pa{1.0, 2.0, 3.0};
    CHECK(std::fabs(d_prime(bf, pa).value - 2.0) < 1e-12);
    CHECK(d_prime(pa, bf).value == d_prime(bf, pa).value);
    CHECK(d_prime(bf, bf).value == 0.0);

    std::vector<double> a{0.1, 0.4, 0.35}, b{0.7, 0.5, 0.95, 0.8};
    const double ref = oracle::d_prime_ref(a, b);
    CHECK(std::fabs(d_prime(a, b).value - ref) < 1e-12);
    for (auto& x : a) x = 3.0 * x - 1.0;
    for (auto& x : b) x = 3.0 * x - 1.0;
    CHECK(std::fabs(d_prime(a, b).value - ref) < 1e-12);

    const std::vector<double> c0{0.2, 0.2}, c1{0.8, 0.8};
    const auto deg = d_prime(c0, c1);
    CHECK(deg.degenerate);
    CHECK(std::isinf(deg.value));
    CHECK_THROWS_AS(d_prime(std::vector<double>{0.1}, c1), InputError);
}

TEST_CASE("d-prime gaussian fixture") {
    std::mt19937_64 rng(25);
    const auto bf = normal_scores(rng, 10000, 0.2, 0.1);
    const auto pa = normal_scores(rng, 10000, 0.8, 0.1);
    CHECK(std::fabs(d_prime(bf, pa).value - 6.0) <= 0.1);
}

TEST_CASE("histogram") {
    CHECK(histogram(std::vector<double>{0.0}, 10)[0] == 1);
    const auto two = histogram(std::vector<double>{0.0, 1.0}, 2);
    CHECK(two == std::vector<std::size_t>{1, 1});
    std::mt19937_64 rng(26);
    const auto v = uniform_scores(rng, 333, false);
    std::size_t sum = 0;
    for (auto c : histogram(v, 7)) sum += c;
    CHECK(sum == 333);
    CHECK_THROWS_AS(histogram(std::vector<double>{0.5}, 0), InputError);
    try {
        histogram(std::vector<double>{0.5, 0.2, 1.5}, 4);
        FAIL("expected InputError");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("sample 2") != std::string::npos);
    }
}

TEST_CASE("relative decrease") {
    CHECK(std::fabs(relative_decrease(96.26, 52.33) - 45.63) <= 0.01);
    CHECK(std::fabs(relative_decrease(98.58, 81.61) - 17.21) <= 0.01);
    CHECK(relative_decrease(0.7, 0.7) == 0.0);
    CHECK_THROWS_AS(relative_decrease(0.0, 0.5), InputError);
}

}
