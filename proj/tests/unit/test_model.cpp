#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <random>

#include "dnetpad/checkpoint.hpp"
#include "dnetpad/error.hpp"
#include "dnetpad/layers.hpp"
#include "dnetpad/model.hpp"
#include "oracles.hpp"

using namespace dnetpad;

namespace {

Tensor random_image(std::size_t s, std::uint64_t seed, std::size_t n = 1) {
    std::mt19937_64 rng(seed);
    return oracle::random_tensor({n, 1, s, s}, rng, 0.0, 1.0);
}

} // namespace

TEST_SUITE("model") {

TEST_CASE("channel plan matches the recurrence oracle") {
    ModelConfig c;
    const auto plan = plan_channels(c);
    const auto o = oracle::channel_oracle(c.stem_filters, c.growth_rate, c.block_layers, c.compression);
    CHECK(plan.block_in == o.block_in);
    CHECK(plan.block_out == o.block_out);
    CHECK(plan.transition_out == o.transition_out);
    CHECK(plan.block_out[0] == 32);
    CHECK(plan.transition_out[0] == 16);
    CHECK(plan.block_spatial == std::vector<std::size_t>{32, 16, 8, 4});

    ModelConfig odd;
    odd.stem_filters = 7;
    odd.growth_rate = 3;
    odd.block_layers = {3, 1, 2};
    odd.compression = 0.6;
    const auto p2 = plan_channels(odd);
    const auto o2 = oracle::channel_oracle(7, 3, {3, 1, 2}, 0.6);
    CHECK(p2.block_out == o2.block_out);
    CHECK(p2.transition_out == o2.transition_out);
}

TEST_CASE("a single dense layer adds growth_rate channels") {
    ModelConfig c;
    c.input_size = 16;
    c.block_layers = {1};
    c.growth_rate = 1;
    const auto m = Model::build(c, 1);
    CHECK(m.plan().block_out[0] == c.stem_filters + 1);
    const auto t = m.forward(random_image(16, 2));
    CHECK(t.last_block().dim(1) == c.stem_filters + 1);
}

TEST_CASE("config validation") {
    ModelConfig c;
    c.input_size = 8;  // 8 -> 4 -> 2 -> 1 -> 0 after the third transition
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(Model::build(c, 0), ConfigError);
    ModelConfig g;
    g.growth_rate = 0;
    CHECK_THROWS_AS(g.validate(), ConfigError);
    ModelConfig k;
    k.compression = 0.0;
    CHECK_THROWS_AS(k.validate(), ConfigError);
    k.compression = 1.5;
    CHECK_THROWS_AS(k.validate(), ConfigError);
    ModelConfig e;
    e.block_layers.clear();
    CHECK_THROWS_AS(e.validate(), ConfigError);
    CHECK(ModelConfig::from_json(ModelConfig{}.to_json()) == ModelConfig{});
}

TEST_CASE("same seed gives identical parameters") {
    const auto a = Model::build({}, 11);
    const auto b = Model::build({}, 11);
    const auto c = Model::build({}, 12);
    REQUIRE(a.params().size() == b.params().size());
    bool all_equal = true, any_diff = false;
    for (std::size_t i = 0; i < a.params().size(); ++i) {
        all_equal = all_equal && a.params()[i].value.bitwise_equal(b.params()[i].value);
        any_diff = any_diff || !a.params()[i].value.bitwise_equal(c.params()[i].value);
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("forward trace") {
    auto m = Model::build({}, 3);
    const Tensor img = random_image(64, 4);
    const auto t = m.forward(img);
    CHECK(t.block_features.size() == 4);
    CHECK(t.score >= 0.0);
    CHECK(t.score <= 1.0);
    const Tensor p = softmax(t.logits);
    CHECK(std::abs(p[0] + t.score - 1.0) < 1e-15);
    CHECK(m.forward(img).score == t.score);
    CHECK_THROWS_AS(m.forward(random_image(32, 4)), ShapeError);
    CHECK_THROWS_AS(m.forward(Tensor({1, 2, 64, 64})), ShapeError);

    // tie the logits: zero head weights and biases
    for (auto& np : m.params()) {
        if (np.name.rfind("head.", 0) == 0) np.value.fill(0.0);
    }
    CHECK(m.forward(img).score == 0.5);
}

TEST_CASE("score is invariant to a common logit shift") {
    auto m = Model::build({}, 5);
    const Tensor img = random_image(64, 6);
    const double before = m.forward(img).score;
    for (auto& np : m.params()) {
        if (np.name == "head.fc.bias") {
            np.value[0] += 3.25;
            np.value[1] += 3.25;
        }
    }
    CHECK(m.forward(img).score == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("batched scores match single-image forward") {
    const auto m = Model::build({}, 7);
    const Tensor batch = random_image(64, 8, 3);
    const auto s = m.scores(batch);
    for (std::size_t i = 0; i < 3; ++i) {
        Tensor one({1, 1, 64, 64});
        std::copy_n(batch.raw() + i * 4096, 4096, one.raw());
        CHECK(s[i] == doctest::Approx(m.forward(one).score).epsilon(1e-12));
    }
}

TEST_CASE("end-to-end gradients match finite differences on 16x16 input") {
    ModelConfig c;
    c.input_size = 16;
    auto m = Model::build(c, 9);
    const Tensor batch = random_image(16, 10, 2);
    const int labels[] = {0, 1};
    Model::Cache cache;
    const auto ce = softmax_cross_entropy(m.forward(batch, cache), labels);
    const auto grads = m.backward(cache, ce.grad_logits);
    REQUIRE(grads.size() == m.params().size());
    auto loss = [&] {
        Model::Cache tmp;
        return softmax_cross_entropy(m.forward(batch, tmp), labels).loss;
    };
    for (std::size_t i = 0; i < grads.size(); ++i) {
        CAPTURE(m.params()[i].name);
        CHECK(grads[i].shape() == m.params()[i].value.shape());
        const Tensor num = oracle::numeric_grad(loss, m.params()[i].value);
        CHECK(oracle::rel_error(grads[i], num) < 1e-4);
    }
}

TEST_CASE("head_backward and block gradients agree with finite differences") {
    ModelConfig c;
    c.input_size = 16;
    const auto m = Model::build(c, 13);
    const Tensor img = random_image(16, 14);
    Model::Cache cache;
    m.forward(img, cache);
    Tensor onehot({1, 2}, std::vector<double>{0, 1});
    Tensor last = cache.blocks.back().output;
    const Tensor analytic = m.head_backward(last, onehot);
    auto logit = [&] { return m.head(last)[1]; };
    CHECK(oracle::rel_error(analytic, oracle::numeric_grad(logit, last)) < 1e-5);

    std::vector<Tensor> block_grads;
    m.backward(cache, onehot, &block_grads);
    REQUIRE(block_grads.size() == 4);
    CHECK(oracle::rel_error(block_grads.back(), analytic) < 1e-12);
}

TEST_CASE("checkpoint roundtrip is bit-exact") {
    ModelConfig c;
    c.block_layers = {2, 1, 2};
    c.input_size = 32;
    const auto m = Model::build(c, 15);
    const auto path = std::filesystem::temp_directory_path() / "dnetpad_unit_roundtrip.ckpt";
    save_checkpoint(m, {7, 99}, path);
    const auto loaded = load_checkpoint(path);
    CHECK(loaded.meta.epoch == 7);
    CHECK(loaded.meta.seed == 99);
    CHECK(loaded.model.config() == c);
    REQUIRE(loaded.model.params().size() == m.params().size());
    for (std::size_t i = 0; i < m.params().size(); ++i) {
        CHECK(loaded.model.params()[i].name == m.params()[i].name);
        CHECK(loaded.model.params()[i].value.bitwise_equal(m.params()[i].value));
    }
    const Tensor img = random_image(32, 16);
    const double a = m.forward(img).score, b = loaded.model.forward(img).score;
    CHECK(std::memcmp(&a, &b, sizeof a) == 0);
    CHECK_FALSE(loaded.config_matches.has_value());
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint format errors name the field") {
    const auto m = Model::build({}, 17);
    auto bytes = serialize_checkpoint(m, {1, 2});
    CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "DNPADCKP");

    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    try {
        deserialize_checkpoint(bad_magic);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("magic") != std::string::npos);
    }

    auto bad_version = bytes;
    bad_version[8] = 2;
    try {
        deserialize_checkpoint(bad_version);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("version") != std::string::npos);
    }

    auto truncated = std::span<const std::uint8_t>(bytes).first(bytes.size() - 5);
    CHECK_THROWS_AS(deserialize_checkpoint(truncated), FormatError);
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(deserialize_checkpoint(trailing), FormatError);
}

TEST_CASE("file config wins and a mismatch is reported") {
    const auto m = Model::build({}, 18);
    const auto bytes = serialize_checkpoint(m, {1, 2});
    ModelConfig other;
    other.growth_rate = 4;
    const auto loaded = deserialize_checkpoint(bytes, &other);
    CHECK(loaded.model.config() == ModelConfig{});
    REQUIRE(loaded.config_matches.has_value());
    CHECK_FALSE(*loaded.config_matches);
    ModelConfig same;
    CHECK(*deserialize_checkpoint(bytes, &same).config_matches);
}

}
