#include "doctest.h"

#include <cmath>
#include <random>

#include "dnetpad/error.hpp"
#include "dnetpad/layers.hpp"
#include "oracles.hpp"

using namespace dnetpad;

TEST_SUITE("nn-core") {

TEST_CASE("tensor keeps data length equal to shape product") {
    Tensor t({2, 3, 4});
    CHECK(t.size() == 24);
    CHECK(t.reshaped({4, 6}).size() == 24);
    CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
    CHECK_THROWS_AS(t.reshaped({5, 5}), ShapeError);
    Tensor s;
    CHECK(s.rank() == 0);
    CHECK(s.size() == 1);
}

TEST_CASE("conv2d identity kernel and bias-only output") {
    std::mt19937_64 rng(1);
    Tensor x = oracle::random_tensor({2, 1, 4, 5}, rng);
    Tensor k({1, 1, 1, 1}, 1.0);
    Tensor b({1}, 0.0);
    CHECK(conv2d(x, k, b, {1, 0}).bitwise_equal(x));

    Tensor zero({1, 2, 5, 5}, 0.0);
    Tensor k3 = oracle::random_tensor({3, 2, 3, 3}, rng);
    Tensor bias({3}, std::vector<double>{0.5, -1.0, 2.0});
    Tensor y = conv2d(zero, k3, bias, {1, 1});
    REQUIRE(y.shape() == Shape{1, 3, 5, 5});
    for (std::size_t f = 0; f < 3; ++f) {
        for (std::size_t i = 0; i < 25; ++i) CHECK(y[f * 25 + i] == bias[f]);
    }
}

TEST_CASE("conv2d output size and hand example") {
    // 3x3 input, 2x2 kernel of ones, stride 1 -> window sums.
    Tensor x({1, 1, 3, 3}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor k({1, 1, 2, 2}, 1.0);
    Tensor b({1}, 0.0);
    Tensor y = conv2d(x, k, b, {1, 0});
    CHECK(y.shape() == Shape{1, 1, 2, 2});
    CHECK(y[0] == 12);
    CHECK(y[1] == 16);
    CHECK(y[2] == 24);
    CHECK(y[3] == 28);
    // stride 2, pad 1 on 5x5 with 3x3 -> floor((5+2-3)/2)+1 = 3
    Tensor x5({1, 1, 5, 5}, 1.0);
    Tensor k3({1, 1, 3, 3}, 1.0);
    Tensor y5 = conv2d(x5, k3, b, {2, 1});
    CHECK(y5.shape() == Shape{1, 1, 3, 3});
    CHECK(y5.at(0, 0, 0, 0) == 4);  // corner sees a 2x2 patch
    CHECK(y5.at(0, 0, 1, 1) == 9);
}

TEST_CASE("conv2d rejects channel mismatch and oversize kernels") {
    Tensor x({1, 2, 4, 4});
    CHECK_THROWS_AS(conv2d(x, Tensor({1, 3, 3, 3}), Tensor({1}), {1, 0}), ShapeError);
    CHECK_THROWS_AS(conv2d(x, Tensor({1, 2, 5, 5}), Tensor({1}), {1, 0}), ShapeError);
    CHECK_THROWS_AS(conv2d(x, Tensor({1, 2, 3, 3}), Tensor({2}), {1, 0}), ShapeError);
}

TEST_CASE("conv2d is linear in its input") {
    std::mt19937_64 rng(2);
    Tensor a = oracle::random_tensor({1, 2, 6, 6}, rng);
    Tensor c = oracle::random_tensor({1, 2, 6, 6}, rng);
    Tensor k = oracle::random_tensor({3, 2, 3, 3}, rng);
    Tensor zb({3}, 0.0);
    Tensor mix = Tensor::zeros_like(a);
    for (std::size_t i = 0; i < a.size(); ++i) mix[i] = 0.7 * a[i] - 1.3 * c[i];
    Tensor lhs = conv2d(mix, k, zb, {1, 1});
    Tensor fa = conv2d(a, k, zb, {1, 1}), fc = conv2d(c, k, zb, {1, 1});
    for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(std::abs(lhs[i] - (0.7 * fa[i] - 1.3 * fc[i])) < 1e-12);
}

TEST_CASE("conv2d gradients match finite differences") {
    std::mt19937_64 rng(3);
    for (auto spec : {Conv2dSpec{1, 0}, Conv2dSpec{1, 1}, Conv2dSpec{2, 1}}) {
        Tensor x = oracle::random_tensor({1, 2, 5, 5}, rng);
        Tensor k = oracle::random_tensor({3, 2, 3, 3}, rng);
        Tensor b = oracle::random_tensor({3}, rng);
        const Tensor proj = oracle::random_tensor(conv2d(x, k, b, spec).shape(), rng);
        auto loss = [&] { return oracle::dot(conv2d(x, k, b, spec), proj); };
        const LayerGrads g = conv2d_backward(x, k, proj, spec);
        CHECK(g.input.shape() == x.shape());
        CHECK(g.params.at("weight").shape() == k.shape());
        CHECK(g.params.at("bias").shape() == b.shape());
        CHECK(oracle::rel_error(g.input, oracle::numeric_grad(loss, x)) < 1e-6);
        CHECK(oracle::rel_error(g.params.at("weight"), oracle::numeric_grad(loss, k)) < 1e-6);
        CHECK(oracle::rel_error(g.params.at("bias"), oracle::numeric_grad(loss, b)) < 1e-6);
    }
}

TEST_CASE("relu forward and backward") {
    Tensor x({3}, std::vector<double>{-1, 0, 2});
    Tensor y = relu(x);
    CHECK(y[0] == 0);
    CHECK(y[1] == 0);
    CHECK(y[2] == 2);
    Tensor g = relu_backward(x, Tensor({3}, 1.0));
    CHECK(g[0] == 0);
    CHECK(g[1] == 0);  // subgradient 0 at exactly 0
    CHECK(g[2] == 1);

    std::mt19937_64 rng(4);
    Tensor pos = oracle::random_tensor({10}, rng, 0.0, 1.0);
    CHECK(relu(pos).bitwise_equal(pos));

    // keep samples away from the kink
    Tensor m = oracle::random_tensor({2, 3, 4, 4}, rng);
    for (double& v : m.data()) v += v >= 0 ? 0.1 : -0.1;
    const Tensor proj = oracle::random_tensor(m.shape(), rng);
    auto loss = [&] { return oracle::dot(relu(m), proj); };
    CHECK(oracle::rel_error(relu_backward(m, proj), oracle::numeric_grad(loss, m)) < 1e-6);
}

TEST_CASE("pooling hand examples") {
    Tensor x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    CHECK(pool2d(x, {PoolMode::avg, 2, 2})[0] == 2.5);
    CHECK(pool2d(x, {PoolMode::max, 2, 2})[0] == 4);
    Tensor g = pool2d_backward(x, Tensor({1, 1, 1, 1}, 1.0), {PoolMode::avg, 2, 2});
    for (std::size_t i = 0; i < 4; ++i) CHECK(g[i] == 0.25);
    Tensor gm = pool2d_backward(x, Tensor({1, 1, 1, 1}, 1.0), {PoolMode::max, 2, 2});
    CHECK(gm[3] == 1.0);
    CHECK(gm[0] + gm[1] + gm[2] == 0.0);
}

TEST_CASE("max pool routes ties to the first maximum") {
    Tensor x({1, 1, 2, 2}, std::vector<double>{5, 5, 5, 5});
    Tensor g = pool2d_backward(x, Tensor({1, 1, 1, 1}, 1.0), {PoolMode::max, 2, 2});
    CHECK(g[0] == 1.0);
    CHECK(g[1] == 0.0);
    CHECK(g[2] == 0.0);
    CHECK(g[3] == 0.0);
}

TEST_CASE("pooling rejects windows larger than the input") {
    CHECK_THROWS_AS(pool2d(Tensor({1, 1, 1, 3}), {PoolMode::max, 2, 2}), ShapeError);
}

TEST_CASE("pooling gradients match finite differences") {
    std::mt19937_64 rng(5);
    for (auto spec : {Pool2dSpec{PoolMode::avg, 2, 2}, Pool2dSpec{PoolMode::max, 2, 2}, Pool2dSpec{PoolMode::avg, 3, 1}}) {
        // distinct values so max windows have a clear winner
        Tensor x({2, 2, 6, 6});
        std::vector<double> vals(x.size());
        for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.01 * static_cast<double>(i);
        std::shuffle(vals.begin(), vals.end(), rng);
        for (std::size_t i = 0; i < vals.size(); ++i) x[i] = vals[i];
        const Tensor proj = oracle::random_tensor(pool2d(x, spec).shape(), rng);
        auto loss = [&] { return oracle::dot(pool2d(x, spec), proj); };
        CHECK(oracle::rel_error(pool2d_backward(x, proj, spec), oracle::numeric_grad(loss, x)) < 1e-6);
    }
}

TEST_CASE("concat_channels roundtrip") {
    std::mt19937_64 rng(6);
    Tensor a = oracle::random_tensor({2, 3, 4, 4}, rng);
    Tensor b = oracle::random_tensor({2, 5, 4, 4}, rng);
    Tensor c = concat_channels(std::vector<Tensor>{a, b});
    CHECK(c.shape() == Shape{2, 8, 4, 4});
    const std::size_t counts[] = {3, 5};
    auto parts = concat_channels_backward(c, counts);
    CHECK(parts[0].bitwise_equal(a));
    CHECK(parts[1].bitwise_equal(b));
    CHECK(concat_channels(std::vector<Tensor>{a}).bitwise_equal(a));
    CHECK_THROWS_AS(concat_channels(std::vector<Tensor>{a, Tensor({2, 1, 3, 4})}), ShapeError);
}

TEST_CASE("global average pool") {
    Tensor x({1, 1, 2, 2}, std::vector<double>{1, 3, 5, 7});
    CHECK(global_avg_pool(x)[0] == 4.0);
    Tensor c({1, 2, 3, 3}, 2.5);
    CHECK(global_avg_pool(c)[1] == 2.5);
    Tensor g = global_avg_pool_backward(x, Tensor({1, 1}, 8.0));
    for (std::size_t i = 0; i < 4; ++i) CHECK(g[i] == 2.0);
}

TEST_CASE("linear layer") {
    std::mt19937_64 rng(7);
    Tensor x = oracle::random_tensor({3, 4}, rng);
    Tensor eye({4, 4}, 0.0);
    for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
    CHECK(linear(x, eye, Tensor({4}, 0.0)).bitwise_equal(x));
    Tensor bias({2}, std::vector<double>{0.5, -2});
    Tensor y = linear(Tensor({3, 4}, 0.0), oracle::random_tensor({2, 4}, rng), bias);
    CHECK(y[0] == 0.5);
    CHECK(y[5] == -2);
    CHECK_THROWS_AS(linear(x, Tensor({2, 5}), bias), ShapeError);

    Tensor w = oracle::random_tensor({2, 4}, rng);
    Tensor b = oracle::random_tensor({2}, rng);
    const Tensor proj = oracle::random_tensor({3, 2}, rng);
    auto loss = [&] { return oracle::dot(linear(x, w, b), proj); };
    const LayerGrads g = linear_backward(x, w, proj);
    CHECK(oracle::rel_error(g.input, oracle::numeric_grad(loss, x)) < 1e-6);
    CHECK(oracle::rel_error(g.params.at("weight"), oracle::numeric_grad(loss, w)) < 1e-6);
    CHECK(oracle::rel_error(g.params.at("bias"), oracle::numeric_grad(loss, b)) < 1e-6);
}

TEST_CASE("softmax cross-entropy") {
    const int zero[] = {0};
    auto ce = softmax_cross_entropy(Tensor({1, 2}, 0.0), zero);
    CHECK(ce.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    auto big = softmax_cross_entropy(Tensor({1, 2}, std::vector<double>{1000, 0}), zero);
    CHECK(std::isfinite(big.loss));
    CHECK(big.loss < 1e-300);
    CHECK(big.loss >= 0.0);
    const int bad[] = {2};
    CHECK_THROWS_AS(softmax_cross_entropy(Tensor({1, 2}), bad), InputError);
    CHECK_THROWS_AS(softmax_cross_entropy(Tensor({1, 1}), zero), ShapeError);

    std::mt19937_64 rng(8);
    Tensor logits = oracle::random_tensor({4, 3}, rng, -3, 3);
    const int labels[] = {0, 2, 1, 2};
    auto r = softmax_cross_entropy(logits, labels);
    for (std::size_t i = 0; i < 4; ++i) {
        double s = 0;
        for (std::size_t k = 0; k < 3; ++k) s += r.probs[i * 3 + k];
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
    auto loss = [&] { return softmax_cross_entropy(logits, labels).loss; };
    CHECK(oracle::rel_error(r.grad_logits, oracle::numeric_grad(loss, logits)) < 1e-6);
}

TEST_CASE("layer ops are bit-for-bit repeatable") {
    std::mt19937_64 rng(9);
    Tensor x = oracle::random_tensor({2, 3, 7, 7}, rng);
    Tensor k = oracle::random_tensor({4, 3, 3, 3}, rng);
    Tensor b = oracle::random_tensor({4}, rng);
    CHECK(conv2d(x, k, b, {1, 1}).bitwise_equal(conv2d(x, k, b, {1, 1})));
    Tensor y = conv2d(x, k, b, {1, 1});
    CHECK(conv2d_backward(x, k, y, {1, 1}).params.at("weight").bitwise_equal(
        conv2d_backward(x, k, y, {1, 1}).params.at("weight")));
    CHECK(y.all_finite());
}

}
