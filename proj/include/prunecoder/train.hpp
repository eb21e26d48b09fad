#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "prunecoder/dataset.hpp"
#include "prunecoder/model.hpp"

namespace prunecoder {

/// Fine-tuning hyperparameters. Defaults follow common BERT fine-tuning practice, with the
/// learning rate scaled by 10 for the tiny desk-scale models.
struct TrainConfig {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double warmup_fraction = 0.1;
    double max_grad_norm = 1.0;  // <= 0 disables clipping
    int epochs = 3;
    int batch_size = 32;
    std::uint64_t seed = 42;
    int max_len = 64;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& config);
/// Fields absent from `j` keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Linear warmup to the peak over the first `warmup_steps`, then linear decay that reaches
/// peak / (total - warmup) on the last step. Steps are 1-based, so every step in range has a
/// positive rate and step 0 maps to 0.
struct LinearWarmupDecay {
    double peak = 0.0;
    long total_steps = 0;
    long warmup_steps = 0;

    static LinearWarmupDecay from_config(const TrainConfig& config, long total_steps);
    double lr_at(long step) const;
};

template <typename T>
struct ParamSlot {
    std::string name;
    Tensor<T>* value = nullptr;
    Tensor<T>* grad = nullptr;
    bool decay = true;
};

template <typename T>
struct OptimizerState {
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;
};

/// Pairs every model tensor with its gradient; decay is off for biases and layer norms.
template <typename T>
std::vector<ParamSlot<T>> param_slots(ModelWeights<T>& weights, ModelWeights<T>& grads);

/// Scales all gradients so their global L2 norm is at most `max_norm`; returns the
/// pre-clip norm. Throws NumericError on a non-finite gradient.
template <typename T>
double clip_grad_norm(std::span<const ParamSlot<T>> params, double max_norm);

/// One decoupled-weight-decay Adam update at learning rate `lr` with bias correction for
/// `step_index` (1-based). Gradients are clipped to `config.max_grad_norm` first.
template <typename T>
void optimizer_step(std::span<const ParamSlot<T>> params, OptimizerState<T>& state, const TrainConfig& config,
                    double lr, long step_index);

struct EpochRecord {
    int epoch = 0;  // 1-based
    double mean_train_loss = 0.0;
    double validation_accuracy = 0.0;  // fraction
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;  // 0 when no epoch ran
    double best_validation_accuracy = 0.0;
};

struct FinetuneResult {
    ModelWeights<float> weights;
    TrainHistory history;
};

/// Trains for config.epochs epochs and returns the snapshot from the epoch with the highest
/// validation accuracy (earliest on ties). Bitwise reproducible for a fixed seed.
FinetuneResult finetune(const ModelWeights<float>& weights, const ModelConfig& model_config,
                        const EncodedDataset& train, const EncodedDataset& validation, const TrainConfig& config);

/// Index of the largest value, lowest index on ties.
template <typename T>
int argmax(std::span<const T> values);

/// Fraction of examples whose argmax logit equals the label.
double evaluate(const ModelWeights<float>& weights, const ModelConfig& config, const EncodedDataset& data,
                std::size_t batch_size = 64);

}  // namespace prunecoder
