#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dnetpad/tensor.hpp"

namespace dnetpad {

inline constexpr int kBonafideClass = 0;
inline constexpr int kPaClass = 1;

// Architecture hyperparameters. Defaults give the desk-scale network:
// 64x64 grayscale input, four dense blocks of two layers each.
struct ModelConfig {
    std::size_t input_size = 64;
    std::size_t stem_filters = 16;
    std::size_t stem_kernel = 3;
    std::size_t growth_rate = 8;
    // Width of the 1x1 bottleneck conv in each dense layer, in units of growth_rate.
    std::size_t bottleneck_factor = 4;
    std::vector<std::size_t> block_layers{2, 2, 2, 2};
    double compression = 0.5;
    std::size_t num_classes = 2;

    // Throws ConfigError naming the first invalid field.
    void validate() const;

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Channel and spatial bookkeeping for a config, computed without building
// any tensors.
struct ChannelPlan {
    std::size_t stem_channels = 0;
    std::size_t stem_spatial = 0;  // after the stem max pool
    std::vector<std::size_t> block_in;
    std::vector<std::size_t> block_out;
    std::vector<std::size_t> block_spatial;
    std::vector<std::size_t> transition_out;  // one fewer than blocks
    std::size_t bottleneck = 0;
};

ChannelPlan plan_channels(const ModelConfig& config);

struct NamedTensor {
    std::string name;
    Tensor value;
};

// Result of scoring one image.
struct ForwardTrace {
    double score = 0.0;  // P(PA) under the softmax head
    Tensor logits;       // [1, num_classes]
    std::vector<Tensor> block_features;  // output of each dense block
    const Tensor& last_block() const { return block_features.back(); }
};

class Model {
public:
    // He-normal conv weights drawn from a single seeded stream in parameter
    // order; biases start at zero.
    static Model build(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const noexcept { return config_; }
    const ChannelPlan& plan() const noexcept { return plan_; }

    std::vector<NamedTensor>& params() noexcept { return params_; }
    const std::vector<NamedTensor>& params() const noexcept { return params_; }
    std::size_t parameter_count() const;

    // image: [1,1,S,S] with S == config().input_size.
    ForwardTrace forward(const Tensor& image) const;

    // P(PA) for every image of a [N,1,S,S] batch.
    std::vector<double> scores(const Tensor& batch) const;

    // Activations kept from a forward pass for the backward pass.
    struct Cache;

    // Logits [N, num_classes] for a [N,1,S,S] batch, filling `cache`.
    Tensor forward(const Tensor& batch, Cache& cache) const;

    // Parameter gradients aligned index-for-index with params(). When
    // `block_grads` is given it receives d(loss)/d(block output) per block.
    std::vector<Tensor> backward(const Cache& cache, const Tensor& grad_logits,
                                 std::vector<Tensor>* block_grads = nullptr) const;

    // Head applied to last-dense-block activations [N,C,h,w] -> logits.
    Tensor head(const Tensor& last_block) const;
    // d(sum_i grad_logits[i] . logits[i]) / d(last_block).
    Tensor head_backward(const Tensor& last_block, const Tensor& grad_logits) const;

private:
    struct DenseLayerIndex {
        std::size_t conv1_w, conv1_b, conv2_w, conv2_b;
    };
    struct Layout {
        std::size_t stem_w = 0, stem_b = 0;
        std::vector<std::vector<DenseLayerIndex>> blocks;
        std::vector<std::pair<std::size_t, std::size_t>> transitions;
        std::size_t head_w = 0, head_b = 0;
    };

    Model(ModelConfig config, ChannelPlan plan) : config_(std::move(config)), plan_(std::move(plan)) {}
    std::size_t add_param(std::string name, Shape shape);
    void check_input(const Tensor& batch) const;
    const Tensor& p(std::size_t index) const { return params_[index].value; }

    ModelConfig config_;
    ChannelPlan plan_;
    std::vector<NamedTensor> params_;
    Layout layout_;
};

struct Model::Cache {
    struct DenseLayer {
        Tensor input;  // concatenation of the block input and earlier layer outputs
        Tensor pre1, act1, pre2, act2;
    };
    struct Block {
        std::vector<DenseLayer> layers;
        Tensor output;
    };
    Tensor image;
    Tensor stem_pre, stem_act;
    std::vector<Block> blocks;
    std::vector<Tensor> transition_pre;  // 1x1 conv output before the avg pool
    Tensor pooled;                       // global average pool of the last block
    Tensor logits;
};

} // namespace dnetpad
