#include "dnetpad/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "dnetpad/checkpoint.hpp"
#include "dnetpad/error.hpp"
#include "dnetpad/layers.hpp"
#include "dnetpad/parallel.hpp"

namespace dnetpad {
namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Tensor stack_batch(const Dataset& data, std::span<const std::size_t> indices, std::size_t size) {
    Tensor batch({indices.size(), 1, size, size});
    const std::size_t plane = size * size;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const Tensor& img = data[indices[i]].image;
        std::copy(img.raw(), img.raw() + plane, batch.raw() + i * plane);
    }
    return batch;
}

void check_sample(const Sample& s, std::size_t size) {
    if (s.image.shape() != Shape{1, 1, size, size}) {
        throw ShapeError("sample '" + s.id + "' has shape " + shape_string(s.image.shape()) + ", model expects [1,1," +
                         std::to_string(size) + "," + std::to_string(size) + "]");
    }
}

} // namespace

Dataset prepare_dataset(const std::vector<LabeledImage>& images, std::size_t input_size, std::size_t jobs) {
    Dataset data(images.size());
    parallel_for(images.size(), jobs, [&](std::size_t i) {
        const auto& img = images[i];
        data[i] = Sample{crop_and_resize(img, input_size), binary_label(img.label), img.label, img.source};
    });
    return data;
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("train config: learning_rate must be finite and >= 0");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train config: momentum must lie in [0,1)");
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
}

void SgdMomentum::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
    if (params.size() != grads.size()) {
        throw ShapeError("sgd: " + std::to_string(params.size()) + " parameters but " + std::to_string(grads.size()) +
                         " gradients");
    }
    if (velocity_.empty()) {
        for (const Tensor* p : params) velocity_.push_back(Tensor::zeros_like(*p));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& theta = *params[i];
        if (grads[i].shape() != theta.shape() || velocity_[i].shape() != theta.shape()) {
            throw ShapeError("sgd: gradient " + std::to_string(i) + " shape " + shape_string(grads[i].shape()) +
                             " does not match parameter " + shape_string(theta.shape()));
        }
        auto v = velocity_[i].data();
        auto t = theta.data();
        const auto g = grads[i].data();
        for (std::size_t j = 0; j < t.size(); ++j) {
            v[j] = momentum_ * v[j] - lr_ * g[j];
            t[j] += v[j];
        }
    }
}

void SgdMomentum::step(std::vector<NamedTensor>& params, std::span<const Tensor> grads) {
    std::vector<Tensor*> ptrs;
    ptrs.reserve(params.size());
    for (auto& p : params) ptrs.push_back(&p.value);
    step(std::span<Tensor* const>(ptrs), grads);
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(perm[i - 1], perm[pick(rng)]);
    }
    return perm;
}

TrainResult train(Model model, const Dataset& data, const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    if (data.empty()) throw ConfigError("train: dataset is empty");
    bool seen[2] = {false, false};
    const std::size_t size = model.config().input_size;
    for (const auto& s : data) {
        check_sample(s, size);
        if (s.label == 0 || s.label == 1) seen[s.label] = true;
    }
    if (!seen[0] || !seen[1]) throw ConfigError("train: dataset must contain both bonafide and PA samples");

    const bool write = !config.checkpoint_dir.empty();
    if (write) std::filesystem::create_directories(config.checkpoint_dir);

    SgdMomentum sgd(config.learning_rate, config.momentum);
    TrainLog log;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        const auto perm = epoch_permutation(data.size(), config.seed, epoch);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < perm.size(); begin += config.batch_size, ++batch_index) {
            const std::size_t end = std::min(perm.size(), begin + config.batch_size);
            const std::span<const std::size_t> idx(perm.data() + begin, end - begin);
            const Tensor batch = stack_batch(data, idx, size);
            std::vector<int> labels(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = data[idx[i]].label;

            Model::Cache cache;
            const Tensor logits = model.forward(batch, cache);
            const auto ce = softmax_cross_entropy(logits, labels);
            if (!std::isfinite(ce.loss)) {
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index + 1));
            }
            loss_sum += ce.loss * static_cast<double>(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) {
                const int predicted = ce.probs[i * 2 + kPaClass] >= 0.5 ? 1 : 0;
                if (predicted == labels[i]) ++correct;
            }
            const auto grads = model.backward(cache, ce.grad_logits);
            sgd.step(model.params(), grads);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.mean_loss = loss_sum / static_cast<double>(data.size());
        rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
        rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        log.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec, model);

        if (write && config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 && epoch != config.epochs) {
            char name[32];
            std::snprintf(name, sizeof name, "epoch_%03zu.ckpt", epoch);
            save_checkpoint(model, {epoch, config.seed}, config.checkpoint_dir / name);
        }
    }
    if (write) save_checkpoint(model, {config.epochs, config.seed}, config.checkpoint_dir / "model.ckpt");
    return {std::move(model), std::move(log)};
}

std::vector<ScoredSample> evaluate_scores(const Model& model, const Dataset& data, std::size_t jobs) {
    const std::size_t size = model.config().input_size;
    for (const auto& s : data) check_sample(s, size);
    std::vector<ScoredSample> out(data.size());
    parallel_for(data.size(), jobs, [&](std::size_t i) {
        const auto& s = data[i];
        out[i] = ScoredSample{model.forward(s.image).score, s.label, s.cls, s.id};
    });
    return out;
}

void write_scores_csv(const std::vector<ScoredSample>& scores, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << "path_or_seed,class,label,score\n";
    for (const auto& s : scores) {
        out << s.id << ',' << to_string(s.cls) << ',' << s.label << ',' << fmt17(s.score) << '\n';
    }
}

void write_train_log_csv(const TrainLog& log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << "epoch,mean_loss,train_accuracy\n";
    for (const auto& e : log.epochs) {
        out << e.epoch << ',' << fmt17(e.mean_loss) << ',' << fmt17(e.train_accuracy) << '\n';
    }
}

} // namespace dnetpad
