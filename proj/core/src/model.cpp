#include "dnetpad/model.hpp"

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "dnetpad/error.hpp"
#include "dnetpad/layers.hpp"

namespace dnetpad {
namespace {

constexpr Pool2dSpec kStemPool{PoolMode::max, 2, 2};
constexpr Pool2dSpec kTransitionPool{PoolMode::avg, 2, 2};

} // namespace

void ModelConfig::validate() const {
    if (stem_filters < 1) throw ConfigError("model config: stem_filters must be >= 1");
    if (stem_kernel < 1 || stem_kernel % 2 == 0) throw ConfigError("model config: stem_kernel must be odd");
    if (growth_rate < 1) throw ConfigError("model config: growth_rate must be >= 1");
    if (bottleneck_factor < 1) throw ConfigError("model config: bottleneck_factor must be >= 1");
    if (block_layers.empty()) throw ConfigError("model config: block_layers must list at least one block");
    for (auto n : block_layers) {
        if (n < 1) throw ConfigError("model config: every block needs at least one layer");
    }
    if (!(compression > 0.0 && compression <= 1.0)) throw ConfigError("model config: compression must lie in (0,1]");
    if (num_classes != 2) throw ConfigError("model config: num_classes must be 2 (bonafide/PA)");
    // Stem max pool plus one avg pool per transition, each halving with a 2x2 window.
    std::size_t s = input_size;
    for (std::size_t i = 0; i < block_layers.size(); ++i) {
        if (s < 2) {
            throw ConfigError("model config: input_size " + std::to_string(input_size) + " too small for " +
                              std::to_string(block_layers.size()) + " pooling stages");
        }
        s /= 2;
    }
}

std::string ModelConfig::to_json() const {
    nlohmann::json j;
    j["input_size"] = input_size;
    j["stem_filters"] = stem_filters;
    j["stem_kernel"] = stem_kernel;
    j["growth_rate"] = growth_rate;
    j["bottleneck_factor"] = bottleneck_factor;
    j["block_layers"] = block_layers;
    j["compression"] = compression;
    j["num_classes"] = num_classes;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model config json: ") + e.what());
    }
    ModelConfig c;
    try {
        c.input_size = j.at("input_size").get<std::size_t>();
        c.stem_filters = j.at("stem_filters").get<std::size_t>();
        c.stem_kernel = j.at("stem_kernel").get<std::size_t>();
        c.growth_rate = j.at("growth_rate").get<std::size_t>();
        c.bottleneck_factor = j.at("bottleneck_factor").get<std::size_t>();
        c.block_layers = j.at("block_layers").get<std::vector<std::size_t>>();
        c.compression = j.at("compression").get<double>();
        c.num_classes = j.at("num_classes").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model config json: ") + e.what());
    }
    return c;
}

ChannelPlan plan_channels(const ModelConfig& config) {
    config.validate();
    ChannelPlan plan;
    plan.stem_channels = config.stem_filters;
    plan.stem_spatial = config.input_size / 2;
    plan.bottleneck = config.bottleneck_factor * config.growth_rate;
    std::size_t channels = config.stem_filters;
    std::size_t spatial = plan.stem_spatial;
    for (std::size_t b = 0; b < config.block_layers.size(); ++b) {
        plan.block_in.push_back(channels);
        channels += config.block_layers[b] * config.growth_rate;
        plan.block_out.push_back(channels);
        plan.block_spatial.push_back(spatial);
        if (b + 1 < config.block_layers.size()) {
            const auto compressed = static_cast<std::size_t>(std::floor(config.compression * static_cast<double>(channels)));
            channels = std::max<std::size_t>(1, compressed);
            plan.transition_out.push_back(channels);
            spatial /= 2;
        }
    }
    return plan;
}

std::size_t Model::add_param(std::string name, Shape shape) {
    params_.push_back({std::move(name), Tensor(std::move(shape))});
    return params_.size() - 1;
}

Model Model::build(const ModelConfig& config, std::uint64_t seed) {
    Model m(config, plan_channels(config));
    const ChannelPlan& plan = m.plan_;
    const std::size_t k = config.stem_kernel;

    m.layout_.stem_w = m.add_param("stem.conv.weight", {plan.stem_channels, 1, k, k});
    m.layout_.stem_b = m.add_param("stem.conv.bias", {plan.stem_channels});
    for (std::size_t b = 0; b < config.block_layers.size(); ++b) {
        std::vector<DenseLayerIndex> layers;
        std::size_t channels = plan.block_in[b];
        for (std::size_t l = 0; l < config.block_layers[b]; ++l) {
            const std::string prefix = "block" + std::to_string(b + 1) + ".layer" + std::to_string(l + 1);
            DenseLayerIndex idx{};
            idx.conv1_w = m.add_param(prefix + ".conv1.weight", {plan.bottleneck, channels, 1, 1});
            idx.conv1_b = m.add_param(prefix + ".conv1.bias", {plan.bottleneck});
            idx.conv2_w = m.add_param(prefix + ".conv2.weight", {config.growth_rate, plan.bottleneck, 3, 3});
            idx.conv2_b = m.add_param(prefix + ".conv2.bias", {config.growth_rate});
            layers.push_back(idx);
            channels += config.growth_rate;
        }
        m.layout_.blocks.push_back(std::move(layers));
        if (b + 1 < config.block_layers.size()) {
            const std::string prefix = "transition" + std::to_string(b + 1);
            const auto w = m.add_param(prefix + ".conv.weight", {plan.transition_out[b], plan.block_out[b], 1, 1});
            const auto bias = m.add_param(prefix + ".conv.bias", {plan.transition_out[b]});
            m.layout_.transitions.emplace_back(w, bias);
        }
    }
    m.layout_.head_w = m.add_param("head.fc.weight", {config.num_classes, plan.block_out.back()});
    m.layout_.head_b = m.add_param("head.fc.bias", {config.num_classes});

    std::mt19937_64 rng(seed);
    for (auto& param : m.params_) {
        const auto& shape = param.value.shape();
        if (shape.size() == 1) continue;  // biases stay zero
        const std::size_t fan_in = param.value.size() / shape[0];
        // Conv layers feed ReLUs (He); the head feeds the softmax.
        const double gain = shape.size() == 4 ? 2.0 : 1.0;
        std::normal_distribution<double> dist(0.0, std::sqrt(gain / static_cast<double>(fan_in)));
        for (auto& v : param.value.data()) v = dist(rng);
    }
    return m;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void Model::check_input(const Tensor& batch) const {
    const std::size_t s = config_.input_size;
    if (batch.rank() != 4 || batch.dim(1) != 1 || batch.dim(2) != s || batch.dim(3) != s) {
        throw ShapeError("model input must be [N,1," + std::to_string(s) + "," + std::to_string(s) + "], got " +
                         shape_string(batch.shape()));
    }
}

Tensor Model::forward(const Tensor& batch, Cache& cache) const {
    check_input(batch);
    const Conv2dSpec stem_spec{1, config_.stem_kernel / 2};
    cache = Cache{};
    cache.image = batch;
    cache.stem_pre = conv2d(batch, p(layout_.stem_w), p(layout_.stem_b), stem_spec);
    cache.stem_act = relu(cache.stem_pre);
    Tensor x = pool2d(cache.stem_act, kStemPool);

    for (std::size_t b = 0; b < layout_.blocks.size(); ++b) {
        Cache::Block block;
        for (const auto& idx : layout_.blocks[b]) {
            Cache::DenseLayer layer;
            layer.input = std::move(x);
            layer.pre1 = conv2d(layer.input, p(idx.conv1_w), p(idx.conv1_b), {1, 0});
            layer.act1 = relu(layer.pre1);
            layer.pre2 = conv2d(layer.act1, p(idx.conv2_w), p(idx.conv2_b), {1, 1});
            layer.act2 = relu(layer.pre2);
            const Tensor* parts[] = {&layer.input, &layer.act2};
            x = concat_channels(parts);
            block.layers.push_back(std::move(layer));
        }
        block.output = x;
        cache.blocks.push_back(std::move(block));
        if (b < layout_.transitions.size()) {
            const auto [w, bias] = layout_.transitions[b];
            cache.transition_pre.push_back(conv2d(x, p(w), p(bias), {1, 0}));
            x = pool2d(cache.transition_pre.back(), kTransitionPool);
        }
    }
    cache.pooled = global_avg_pool(x);
    cache.logits = linear(cache.pooled, p(layout_.head_w), p(layout_.head_b));
    return cache.logits;
}

std::vector<Tensor> Model::backward(const Cache& cache, const Tensor& grad_logits,
                                    std::vector<Tensor>* block_grads) const {
    std::vector<Tensor> grads;
    grads.reserve(params_.size());
    for (const auto& param : params_) grads.push_back(Tensor::zeros_like(param.value));

    const Tensor& last = cache.blocks.back().output;
    LayerGrads head = linear_backward(cache.pooled, p(layout_.head_w), grad_logits);
    grads[layout_.head_w] = std::move(head.params.at("weight"));
    grads[layout_.head_b] = std::move(head.params.at("bias"));
    Tensor g = global_avg_pool_backward(last, head.input);
    if (block_grads) block_grads->assign(layout_.blocks.size(), Tensor{});

    for (std::size_t b = layout_.blocks.size(); b-- > 0;) {
        const Cache::Block& block = cache.blocks[b];
        if (block_grads) (*block_grads)[b] = g;
        for (std::size_t l = layout_.blocks[b].size(); l-- > 0;) {
            const auto& idx = layout_.blocks[b][l];
            const Cache::DenseLayer& layer = block.layers[l];
            const std::size_t counts[] = {layer.input.dim(1), layer.act2.dim(1)};
            auto parts = concat_channels_backward(g, counts);
            Tensor g2 = relu_backward(layer.pre2, parts[1]);
            LayerGrads c2 = conv2d_backward(layer.act1, p(idx.conv2_w), g2, {1, 1});
            grads[idx.conv2_w] = std::move(c2.params.at("weight"));
            grads[idx.conv2_b] = std::move(c2.params.at("bias"));
            Tensor g1 = relu_backward(layer.pre1, c2.input);
            LayerGrads c1 = conv2d_backward(layer.input, p(idx.conv1_w), g1, {1, 0});
            grads[idx.conv1_w] = std::move(c1.params.at("weight"));
            grads[idx.conv1_b] = std::move(c1.params.at("bias"));
            g = std::move(parts[0]);
            auto gd = g.data();
            const auto add = c1.input.data();
            for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += add[i];
        }
        if (b == 0) break;
        // g is now the gradient w.r.t. this block's input, i.e. the output of
        // the previous transition's avg pool.
        const auto [w, bias] = layout_.transitions[b - 1];
        const Tensor& pre = cache.transition_pre[b - 1];
        Tensor gp = pool2d_backward(pre, g, kTransitionPool);
        LayerGrads t = conv2d_backward(cache.blocks[b - 1].output, p(w), gp, {1, 0});
        grads[w] = std::move(t.params.at("weight"));
        grads[bias] = std::move(t.params.at("bias"));
        g = std::move(t.input);
    }

    Tensor gs = pool2d_backward(cache.stem_act, g, kStemPool);
    gs = relu_backward(cache.stem_pre, gs);
    LayerGrads stem = conv2d_backward(cache.image, p(layout_.stem_w), gs, {1, config_.stem_kernel / 2});
    grads[layout_.stem_w] = std::move(stem.params.at("weight"));
    grads[layout_.stem_b] = std::move(stem.params.at("bias"));
    return grads;
}

Tensor Model::head(const Tensor& last_block) const {
    return linear(global_avg_pool(last_block), p(layout_.head_w), p(layout_.head_b));
}

Tensor Model::head_backward(const Tensor& last_block, const Tensor& grad_logits) const {
    const Tensor pooled = global_avg_pool(last_block);
    LayerGrads lg = linear_backward(pooled, p(layout_.head_w), grad_logits);
    return global_avg_pool_backward(last_block, lg.input);
}

ForwardTrace Model::forward(const Tensor& image) const {
    check_input(image);
    if (image.dim(0) != 1) throw ShapeError("Model::forward(image) expects a single image, got " + shape_string(image.shape()));
    Cache cache;
    ForwardTrace trace;
    trace.logits = forward(image, cache);
    trace.score = softmax(trace.logits)[kPaClass];
    trace.block_features.reserve(cache.blocks.size());
    for (auto& block : cache.blocks) trace.block_features.push_back(std::move(block.output));
    return trace;
}

std::vector<double> Model::scores(const Tensor& batch) const {
    Cache cache;
    const Tensor probs = softmax(forward(batch, cache));
    std::vector<double> out(batch.dim(0));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = probs[i * config_.num_classes + kPaClass];
    return out;
}

} // namespace dnetpad
