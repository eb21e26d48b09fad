#include "prunecoder/train.hpp"

#include <cmath>

#include "prunecoder/rng.hpp"

namespace prunecoder {

void TrainConfig::validate() const {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw UsageError("invalid train config: " + what);
    };
    require(learning_rate > 0.0, "learning_rate must be positive");
    require(beta1 > 0.0 && beta1 < 1.0, "beta1 must lie in (0, 1)");
    require(beta2 > 0.0 && beta2 < 1.0, "beta2 must lie in (0, 1)");
    require(eps > 0.0, "eps must be positive");
    require(weight_decay >= 0.0, "weight_decay must be non-negative");
    require(warmup_fraction >= 0.0 && warmup_fraction < 1.0, "warmup_fraction must lie in [0, 1)");
    require(epochs >= 0, "epochs must be non-negative");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(max_len >= 2, "max_len must be >= 2");
}

nlohmann::json to_json(const TrainConfig& c) {
    return nlohmann::json{{"learning_rate", c.learning_rate}, {"beta1", c.beta1},
                          {"beta2", c.beta2},                 {"eps", c.eps},
                          {"weight_decay", c.weight_decay},   {"warmup_fraction", c.warmup_fraction},
                          {"max_grad_norm", c.max_grad_norm}, {"epochs", c.epochs},
                          {"batch_size", c.batch_size},       {"seed", c.seed},
                          {"max_len", c.max_len}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw UsageError("train config must be a JSON object");
    TrainConfig c;
    const nlohmann::json defaults = to_json(c);
    for (const auto& [key, value] : j.items()) {
        if (!defaults.contains(key)) throw UsageError("unknown train config key '" + key + "'");
    }
    try {
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.eps = j.value("eps", c.eps);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
        c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.seed = j.value("seed", c.seed);
        c.max_len = j.value("max_len", c.max_len);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("bad train config value: ") + e.what());
    }
    c.validate();
    return c;
}

LinearWarmupDecay LinearWarmupDecay::from_config(const TrainConfig& config, long total_steps) {
    return {config.learning_rate, total_steps,
            static_cast<long>(std::floor(config.warmup_fraction * static_cast<double>(total_steps)))};
}

double LinearWarmupDecay::lr_at(long step) const {
    if (step < 1 || total_steps < 1) return 0.0;
    if (step <= warmup_steps) return peak * static_cast<double>(step) / static_cast<double>(warmup_steps);
    if (step > total_steps) return 0.0;
    // Step warmup+1 runs at the peak and the final step at peak / decay_steps.
    const long decay_steps = total_steps - warmup_steps;
    return peak * static_cast<double>(total_steps - step + 1) / static_cast<double>(decay_steps);
}

template <typename T>
std::vector<ParamSlot<T>> param_slots(ModelWeights<T>& weights, ModelWeights<T>& grads) {
    std::vector<ParamSlot<T>> slots;
    weights.for_each_tensor([&](const std::string& name, Tensor<T>& t) {
        slots.push_back({name, &t, nullptr, !is_no_decay_parameter(name)});
    });
    std::size_t i = 0;
    grads.for_each_tensor([&](const std::string&, Tensor<T>& g) { slots.at(i++).grad = &g; });
    if (i != slots.size()) throw UsageError("gradient structure does not match weights");
    return slots;
}

template <typename T>
double clip_grad_norm(std::span<const ParamSlot<T>> params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        for (T g : p.grad->data()) sq += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) {
        for (const auto& p : params) {
            if (!p.grad->all_finite()) throw NumericError("non-finite gradient in " + p.name);
        }
        throw NumericError("gradient norm overflowed");
    }
    if (max_norm > 0.0 && norm > max_norm) {
        const T scale = static_cast<T>(max_norm / (norm + 1e-6));
        for (const auto& p : params) {
            for (T& g : p.grad->data()) g *= scale;
        }
    }
    return norm;
}

template <typename T>
void optimizer_step(std::span<const ParamSlot<T>> params, OptimizerState<T>& state, const TrainConfig& config,
                    double lr, long step_index) {
    if (step_index < 1) throw UsageError("optimizer step_index is 1-based");
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.value->shape());
            state.v.emplace_back(p.value->shape());
        }
    }
    if (state.m.size() != params.size()) throw UsageError("optimizer state does not match parameter list");
    clip_grad_norm(params, config.max_grad_norm);

    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step_index));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step_index));
    const double b1 = config.beta1, b2 = config.beta2;
    for (std::size_t s = 0; s < params.size(); ++s) {
        const auto& p = params[s];
        if (p.value->shape() != p.grad->shape()) throw UsageError("gradient shape mismatch for " + p.name);
        auto value = p.value->data();
        const auto grad = p.grad->data();
        auto m = state.m[s].data();
        auto v = state.v[s].data();
        const double decay = p.decay ? config.weight_decay : 0.0;
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double g = grad[i];
            const double mi = b1 * m[i] + (1.0 - b1) * g;
            const double vi = b2 * v[i] + (1.0 - b2) * g * g;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double m_hat = mi / bc1;
            const double v_hat = vi / bc2;
            const double x = value[i];
            value[i] = static_cast<T>(x - lr * (m_hat / (std::sqrt(v_hat) + config.eps)) - lr * decay * x);
        }
    }
}

template <typename T>
int argmax(std::span<const T> values) {
    int best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    }
    return best;
}

double evaluate(const ModelWeights<float>& weights, const ModelConfig& config, const EncodedDataset& data,
                std::size_t batch_size) {
    if (data.size() == 0) throw UsageError("cannot evaluate on an empty dataset");
    std::size_t correct = 0;
    for (const auto& batch : batches(data, batch_size, 0, 0, false)) {
        const TensorF logits = forward(weights, config, batch.input_ids, batch.attention_mask);
        for (std::size_t r = 0; r < batch.labels.size(); ++r) {
            if (argmax<float>(logits.row(r)) == batch.labels[r]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

FinetuneResult finetune(const ModelWeights<float>& weights, const ModelConfig& model_config,
                        const EncodedDataset& train, const EncodedDataset& validation, const TrainConfig& config) {
    config.validate();
    model_config.validate();
    if (train.size() == 0 || validation.size() == 0) throw UsageError("finetune needs non-empty train and validation sets");
    if (train.label_names.size() != static_cast<std::size_t>(model_config.num_classes)) {
        throw UsageError("dataset has " + std::to_string(train.label_names.size()) + " labels but the model has " +
                         std::to_string(model_config.num_classes) + " classes");
    }

    FinetuneResult result{weights, {}};
    if (config.epochs == 0) return result;

    ModelWeights<float> current = weights;
    OptimizerState<float> state;
    const auto batch_size = static_cast<std::size_t>(config.batch_size);
    const long steps_per_epoch = static_cast<long>((train.size() + batch_size - 1) / batch_size);
    const auto schedule = LinearWarmupDecay::from_config(config, steps_per_epoch * config.epochs);
    long step = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        double loss_sum = 0.0;
        const auto epoch_batches = batches(train, batch_size, config.seed, static_cast<std::uint64_t>(epoch), true);
        for (const auto& batch : epoch_batches) {
            ++step;
            ForwardOptions opt{true, mix_keys({config.seed, 0xd50f7ULL}), static_cast<std::uint64_t>(step)};
            auto lg = backward(current, model_config, batch.input_ids, batch.attention_mask, batch.labels, opt);
            if (!std::isfinite(lg.loss)) throw NumericError("non-finite training loss at step " + std::to_string(step));
            loss_sum += lg.loss;
            const auto slots = param_slots(current, lg.grads);
            optimizer_step<float>(slots, state, config, schedule.lr_at(step), step);
        }
        EpochRecord rec{epoch, loss_sum / static_cast<double>(epoch_batches.size()),
                        evaluate(current, model_config, validation)};
        result.history.epochs.push_back(rec);
        if (result.history.best_epoch == 0 || rec.validation_accuracy > result.history.best_validation_accuracy) {
            result.history.best_epoch = epoch;
            result.history.best_validation_accuracy = rec.validation_accuracy;
            result.weights = current;
        }
    }
    return result;
}

template std::vector<ParamSlot<float>> param_slots(ModelWeights<float>&, ModelWeights<float>&);
template std::vector<ParamSlot<double>> param_slots(ModelWeights<double>&, ModelWeights<double>&);
template double clip_grad_norm(std::span<const ParamSlot<float>>, double);
template double clip_grad_norm(std::span<const ParamSlot<double>>, double);
template void optimizer_step(std::span<const ParamSlot<float>>, OptimizerState<float>&, const TrainConfig&, double, long);
template void optimizer_step(std::span<const ParamSlot<double>>, OptimizerState<double>&, const TrainConfig&, double,
                             long);
template int argmax(std::span<const float>);
template int argmax(std::span<const double>);

}  // namespace prunecoder
