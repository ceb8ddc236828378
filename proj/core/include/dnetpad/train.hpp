#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dnetpad/metrics.hpp"
#include "dnetpad/model.hpp"
#include "dnetpad/synthdata.hpp"

namespace dnetpad {

// A network-ready sample: the cropped, resized iris plus its labels.
struct Sample {
    Tensor image;  // [1,1,S,S], values in [0,1]
    int label = 0; // binary: 0 bonafide, 1 PA
    ImageClass cls = ImageClass::bonafide;
    std::string id;
};

using Dataset = std::vector<Sample>;

Dataset prepare_dataset(const std::vector<LabeledImage>& images, std::size_t input_size, std::size_t jobs = 1);

struct TrainConfig {
    double learning_rate = 0.005;
    double momentum = 0.9;
    std::size_t batch_size = 20;
    std::size_t epochs = 50;
    std::uint64_t seed = 0;
    // Write a checkpoint every N epochs (0 = final only). Nothing is written
    // when checkpoint_dir is empty.
    std::size_t checkpoint_every = 0;
    std::filesystem::path checkpoint_dir;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double mean_loss = 0.0;
    double train_accuracy = 0.0;
    double wall_seconds = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
};

// Heavy-ball SGD: v <- m*v - lr*g; theta <- theta + v.
class SgdMomentum {
public:
    SgdMomentum(double learning_rate, double momentum) : lr_(learning_rate), momentum_(momentum) {}

    void step(std::span<Tensor* const> params, std::span<const Tensor> grads);
    void step(std::vector<NamedTensor>& params, std::span<const Tensor> grads);

    // One tensor per parameter, shaped like it; empty before the first step.
    const std::vector<Tensor>& velocity() const noexcept { return velocity_; }

private:
    double lr_;
    double momentum_;
    std::vector<Tensor> velocity_;
};

// Fisher-Yates permutation of [0, n) seeded from (seed, epoch).
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::size_t epoch);

struct TrainResult {
    Model model;
    TrainLog log;
};

using EpochCallback = std::function<void(const EpochRecord&, const Model&)>;

// Mini-batch training with softmax cross-entropy. The last partial batch is
// kept; the loss is the batch mean. Throws ConfigError for an empty or
// single-class dataset and NumericError on a non-finite loss.
TrainResult train(Model model, const Dataset& data, const TrainConfig& config, const EpochCallback& on_epoch = {});

// One PA score per sample, in dataset order.
std::vector<ScoredSample> evaluate_scores(const Model& model, const Dataset& data, std::size_t jobs = 1);

// `path_or_seed,class,label,score`, scores printed with 17 significant digits.
void write_scores_csv(const std::vector<ScoredSample>& scores, const std::filesystem::path& path);
// `epoch,mean_loss,train_accuracy`; wall time is kept out so reruns match byte for byte.
void write_train_log_csv(const TrainLog& log, const std::filesystem::path& path);

} // namespace dnetpad
