#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "prunecoder/errors.hpp"
#include "prunecoder/rng.hpp"
#include "prunecoder/train.hpp"

using namespace prunecoder;

namespace {

struct Single {
    TensorF value{{1}, 1.0f};
    TensorF grad{{1}, 0.0f};
    OptimizerState<float> state;

    float step(const TrainConfig& config, double lr, bool decay = true) {
        const std::vector<ParamSlot<float>> slots{{"p", &value, &grad, decay}};
        optimizer_step<float>(slots, state, config, lr, 1);
        return value[0];
    }
};

EncodedDataset marker_split(std::size_t n, std::uint64_t seed, std::size_t max_len) {
    const MarkerTask task;
    return encode_dataset(generate_marker_dataset(task, n, seed), marker_task_vocab(task), max_len);
}

ModelConfig marker_config(int layers) {
    ModelConfig c;
    c.num_layers = layers;
    c.hidden_size = 32;
    c.num_heads = 2;
    c.intermediate_size = 64;
    c.vocab_size = static_cast<int>(marker_task_vocab().size());
    c.max_positions = 16;
    c.num_classes = MarkerTask::num_classes;
    return c;
}

TrainConfig marker_train(int epochs) {
    TrainConfig t;
    t.learning_rate = 1e-3;
    t.batch_size = 32;
    t.max_len = 16;
    t.epochs = epochs;
    t.seed = 3;
    return t;
}

// A model whose logits are exactly the classifier bias: zero classifier weight.
ModelWeights<float> bias_predictor(const ModelConfig& c, std::vector<float> bias) {
    auto w = init_scratch<float>(c, 1);
    w.classifier_weight.fill(0.0f);
    const std::size_t n = bias.size();
    w.classifier_bias = TensorF({n}, std::move(bias));
    return w;
}

}  // namespace

TEST_CASE("optimizer single-step closed forms") {
    TrainConfig config;
    config.weight_decay = 0.0;

    Single zero;
    CHECK(zero.step(config, 0.1) == 1.0f);

    Single one;
    one.grad[0] = 1.0f;
    CHECK(std::abs(one.step(config, 0.1) - 0.9f) < 1e-6);

    config.weight_decay = 0.1;
    Single decay;
    CHECK(std::abs(decay.step(config, 0.1) - 0.99f) < 1e-6);

    Single exempt;
    CHECK(exempt.step(config, 0.1, false) == 1.0f);
}

TEST_CASE("zero gradients with zero decay leave every parameter unchanged") {
    const auto c = tiny_config();
    auto w = init_scratch<float>(c, 2);
    const auto before = w;
    auto g = zeros_like(w);
    auto slots = param_slots(w, g);
    OptimizerState<float> state;
    TrainConfig config;
    config.weight_decay = 0.0;
    for (long step = 1; step <= 3; ++step) optimizer_step<float>(slots, state, config, 1e-3, step);
    CHECK(bitwise_equal(w, before));
}

TEST_CASE("gradient clipping bounds the global norm") {
    Rng rng(1);
    for (int trial = 0; trial < 10; ++trial) {
        TensorF a({5}), b({3, 3}), ga({5}), gb({3, 3});
        for (auto& v : ga.data()) v = static_cast<float>(10.0 * rng.normal());
        for (auto& v : gb.data()) v = static_cast<float>(10.0 * rng.normal());
        const std::vector<ParamSlot<float>> slots{{"a", &a, &ga, true}, {"b", &b, &gb, true}};
        const double pre = clip_grad_norm<float>(slots, 1.0);
        double post = 0.0;
        for (float v : ga.data()) post += double(v) * v;
        for (float v : gb.data()) post += double(v) * v;
        CHECK(pre > 1.0);
        CHECK(std::sqrt(post) <= 1.0 + 1e-6);
    }
    TensorF a({1}), g({1}, NAN);
    const std::vector<ParamSlot<float>> bad{{"a", &a, &g, true}};
    CHECK_THROWS_AS(clip_grad_norm<float>(bad, 1.0), NumericError);
}

TEST_CASE("learning-rate schedule") {
    TrainConfig config;
    config.learning_rate = 1.0;
    config.warmup_fraction = 0.1;
    const auto s = LinearWarmupDecay::from_config(config, 100);
    CHECK(s.warmup_steps == 10);
    CHECK(s.lr_at(0) == 0.0);
    CHECK(s.lr_at(1) > 0.0);
    CHECK(s.lr_at(10) == 1.0);
    double prev = s.lr_at(10);
    for (long step = 11; step <= 100; ++step) {
        CHECK(s.lr_at(step) <= prev);
        CHECK(s.lr_at(step) > 0.0);
        prev = s.lr_at(step);
    }
    for (long step = 1; step < 10; ++step) CHECK(s.lr_at(step) < s.lr_at(step + 1));

    config.warmup_fraction = 0.0;
    const auto flat = LinearWarmupDecay::from_config(config, 5);
    CHECK(flat.lr_at(1) == 1.0);
    CHECK(flat.lr_at(5) == doctest::Approx(0.2));
}

TEST_CASE("argmax breaks ties toward the lowest index") {
    const std::vector<float> v{1, 3, 3, 2};
    CHECK(argmax<float>(v) == 1);
    const std::vector<float> flat{0, 0, 0};
    CHECK(argmax<float>(flat) == 0);
}

TEST_CASE("evaluate examples") {
    auto c = marker_config(1);
    c.hidden_size = 8;
    c.intermediate_size = 8;
    auto data = marker_split(40, 5, 16);
    for (std::size_t i = 0; i < data.size(); ++i) data.labels[i] = static_cast<int>(i % 4);

    CHECK(evaluate(bias_predictor(c, {0, 0, 0, 0}), c, data) == 0.25);

    auto all_two = data;
    std::fill(all_two.labels.begin(), all_two.labels.end(), 2);
    CHECK(evaluate(bias_predictor(c, {0, 0, 5, 0}), c, all_two) == 1.0);

    EncodedDataset one = data;
    one.examples.resize(1);
    one.labels = {3};
    CHECK(evaluate(bias_predictor(c, {1, 0, 0, 0}), c, one) == 0.0);

    EncodedDataset empty = data;
    empty.examples.clear();
    empty.labels.clear();
    CHECK_THROWS_AS(evaluate(bias_predictor(c, {0, 0, 0, 0}), c, empty), UsageError);
}

TEST_CASE("evaluate is invariant to example order and batch size") {
    const auto c = marker_config(2);
    const auto w = init_scratch<float>(c, 4);
    const auto data = marker_split(100, 8, 16);
    auto shuffled = data;
    const auto order = epoch_order(data.size(), 99, 1, true);
    for (std::size_t i = 0; i < order.size(); ++i) {
        shuffled.examples[i] = data.examples[order[i]];
        shuffled.labels[i] = data.labels[order[i]];
    }
    const double base = evaluate(w, c, data);
    CHECK(evaluate(w, c, shuffled) == base);
    CHECK(evaluate(w, c, data, 7) == base);
}

TEST_CASE("finetune with zero epochs is a no-op") {
    const auto c = marker_config(2);
    const auto w = init_scratch<float>(c, 1);
    const auto train = marker_split(20, 1, 16);
    auto t = marker_train(0);
    const auto r = finetune(w, c, train, train, t);
    CHECK(bitwise_equal(r.weights, w));
    CHECK(r.history.epochs.empty());
    CHECK(r.history.best_epoch == 0);
}

TEST_CASE("finetune is bitwise reproducible") {
    const auto c = marker_config(2);
    const auto w = init_scratch<float>(c, 1);
    const auto train = marker_split(96, 1, 16);
    const auto val = marker_split(32, 2, 16);
    const auto a = finetune(w, c, train, val, marker_train(2));
    const auto b = finetune(w, c, train, val, marker_train(2));
    CHECK(bitwise_equal(a.weights, b.weights));
    REQUIRE(a.history.epochs.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(a.history.epochs[i].mean_train_loss == b.history.epochs[i].mean_train_loss);
        CHECK(a.history.epochs[i].validation_accuracy == b.history.epochs[i].validation_accuracy);
    }
    auto other = marker_train(2);
    other.seed = 4;
    CHECK_FALSE(bitwise_equal(finetune(w, c, train, val, other).weights, a.weights));
}

TEST_CASE("finetune rejects mismatched label counts and bad configs") {
    auto c = marker_config(1);
    const auto w = init_scratch<float>(c, 1);
    auto train = marker_split(10, 1, 16);
    train.label_names.pop_back();
    CHECK_THROWS_AS(finetune(w, c, train, train, marker_train(1)), UsageError);
    auto bad = marker_train(1);
    bad.batch_size = 0;
    CHECK_THROWS_AS(finetune(w, c, marker_split(10, 1, 16), marker_split(10, 1, 16), bad), UsageError);
}

TEST_CASE("train config JSON round-trip rejects unknown keys") {
    auto t = marker_train(4);
    t.weight_decay = 0.05;
    CHECK(train_config_from_json(to_json(t)) == t);
    CHECK(train_config_from_json(nlohmann::json{{"epochs", 9}}).epochs == 9);
    CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"epoch", 9}}), UsageError);
}

TEST_CASE("a six-layer model learns the marker task within five epochs") {
    const auto c = marker_config(6);
    const auto w = init_scratch<float>(c, 11);
    const auto train = marker_split(1000, 21, 16);
    const auto val = marker_split(300, 22, 16);
    const auto r = finetune(w, c, train, val, marker_train(5));
    CHECK(r.history.best_validation_accuracy >= 0.95);
    CHECK(evaluate(r.weights, c, val) == r.history.best_validation_accuracy);
}
