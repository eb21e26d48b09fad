#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prunecoder/tensor.hpp"

namespace prunecoder {

struct ModelConfig {
    int num_layers = 12;
    int hidden_size = 768;
    int num_heads = 12;
    int intermediate_size = 3072;
    int vocab_size = 30522;
    int max_positions = 512;
    int type_vocab_size = 2;
    int num_classes = 2;
    double layer_norm_eps = 1e-12;
    double dropout_prob = 0.0;

    int head_dim() const { return hidden_size / num_heads; }

    /// Throws UsageError unless every field satisfies its documented range.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

/// 12-layer base encoder.
ModelConfig base_config(int vocab_size, int num_classes);
/// Same width as base with 6 layers.
ModelConfig small_config(int vocab_size, int num_classes);
/// Same width as base with 2 layers.
ModelConfig smaller_config(int vocab_size, int num_classes);
/// V=32, P=16, T=2, H=8, A=2, I=16, L=2, C=4; used by gradient checks.
ModelConfig tiny_config();

template <typename T>
struct EncoderLayerWeights {
    Tensor<T> q_weight, q_bias;
    Tensor<T> k_weight, k_bias;
    Tensor<T> v_weight, v_bias;
    Tensor<T> attn_out_weight, attn_out_bias;
    Tensor<T> attn_ln_gamma, attn_ln_beta;
    Tensor<T> ffn_up_weight, ffn_up_bias;
    Tensor<T> ffn_down_weight, ffn_down_bias;
    Tensor<T> ffn_ln_gamma, ffn_ln_beta;

    static constexpr std::size_t tensor_count = 16;

    /// Visits the 16 tensors with their canonical name suffix ("attn.q.weight", ...).
    template <typename Self, typename F>
    static void visit(Self& self, F&& f) {
        f("attn.q.weight", self.q_weight);
        f("attn.q.bias", self.q_bias);
        f("attn.k.weight", self.k_weight);
        f("attn.k.bias", self.k_bias);
        f("attn.v.weight", self.v_weight);
        f("attn.v.bias", self.v_bias);
        f("attn.out.weight", self.attn_out_weight);
        f("attn.out.bias", self.attn_out_bias);
        f("attn.layer_norm.gamma", self.attn_ln_gamma);
        f("attn.layer_norm.beta", self.attn_ln_beta);
        f("ffn.up.weight", self.ffn_up_weight);
        f("ffn.up.bias", self.ffn_up_bias);
        f("ffn.down.weight", self.ffn_down_weight);
        f("ffn.down.bias", self.ffn_down_bias);
        f("ffn.layer_norm.gamma", self.ffn_ln_gamma);
        f("ffn.layer_norm.beta", self.ffn_ln_beta);
    }
};

template <typename T>
struct ModelWeights {
    Tensor<T> token_embeddings;     // [V, H]
    Tensor<T> position_embeddings;  // [P, H]
    Tensor<T> type_embeddings;      // [T, H]
    Tensor<T> embedding_ln_gamma, embedding_ln_beta;
    std::vector<EncoderLayerWeights<T>> layers;
    Tensor<T> pooler_weight, pooler_bias;          // [H, H], [H]
    Tensor<T> classifier_weight, classifier_bias;  // [C, H], [C]

    template <typename F>
    void for_each_tensor(F&& f) {
        visit(*this, f);
    }
    template <typename F>
    void for_each_tensor(F&& f) const {
        visit(*this, f);
    }

    std::size_t element_count() const {
        std::size_t n = 0;
        for_each_tensor([&](const std::string&, const Tensor<T>& t) { n += t.size(); });
        return n;
    }

    template <typename U>
    ModelWeights<U> cast() const;

private:
    template <typename Self, typename F>
    static void visit(Self& self, F& f) {
        f(std::string("embeddings.token"), self.token_embeddings);
        f(std::string("embeddings.position"), self.position_embeddings);
        f(std::string("embeddings.type"), self.type_embeddings);
        f(std::string("embeddings.layer_norm.gamma"), self.embedding_ln_gamma);
        f(std::string("embeddings.layer_norm.beta"), self.embedding_ln_beta);
        for (std::size_t i = 0; i < self.layers.size(); ++i) {
            const std::string prefix = "encoder.layer." + std::to_string(i) + ".";
            EncoderLayerWeights<T>::visit(self.layers[i],
                                          [&](const char* suffix, auto& t) { f(prefix + suffix, t); });
        }
        f(std::string("pooler.weight"), self.pooler_weight);
        f(std::string("pooler.bias"), self.pooler_bias);
        f(std::string("classifier.weight"), self.classifier_weight);
        f(std::string("classifier.bias"), self.classifier_bias);
    }
};

template <typename T>
template <typename U>
ModelWeights<U> ModelWeights<T>::cast() const {
    ModelWeights<U> out;
    out.layers.resize(layers.size());
    std::vector<const Tensor<T>*> src;
    for_each_tensor([&](const std::string&, const Tensor<T>& t) { src.push_back(&t); });
    std::size_t i = 0;
    out.for_each_tensor([&](const std::string&, Tensor<U>& t) { t = src[i++]->template cast<U>(); });
    return out;
}

/// Canonical tensor names and shapes of a model with this configuration, in storage order.
struct TensorSpec {
    std::string name;
    Shape shape;
};
std::vector<TensorSpec> tensor_specs(const ModelConfig& config);

/// True for parameters exempt from weight decay (biases and layer-norm gamma/beta).
bool is_no_decay_parameter(const std::string& name);

template <typename T>
bool bitwise_equal(const ModelWeights<T>& a, const ModelWeights<T>& b);

/// Zero-filled weights with every shape implied by `config`.
template <typename T>
ModelWeights<T> zeros_like_config(const ModelConfig& config);

template <typename T>
ModelWeights<T> zeros_like(const ModelWeights<T>& weights);

struct ParamBreakdown {
    std::int64_t embeddings = 0;
    std::int64_t per_layer = 0;
    std::int64_t encoder_total = 0;
    std::int64_t pooler = 0;
    std::int64_t classifier = 0;
    std::int64_t total = 0;
};

ParamBreakdown param_count(const ModelConfig& config);

/// Truncated normal(0, 0.02) clipped at two standard deviations for matrices and embeddings;
/// zero biases; unit gamma and zero beta. Deterministic in `seed`.
template <typename T>
ModelWeights<T> init_scratch(const ModelConfig& config, std::uint64_t seed);

/// Fresh classifier head for `num_classes` outputs; updates config.num_classes.
template <typename T>
void reset_classifier(ModelWeights<T>& weights, ModelConfig& config, int num_classes, std::uint64_t seed);

struct ForwardOptions {
    bool training = false;  // enables dropout when config.dropout_prob > 0
    std::uint64_t dropout_seed = 0;
    std::uint64_t step = 0;
};

/// Optional capture of intermediate values for inspection.
template <typename T>
struct ForwardTrace {
    std::vector<Tensor<T>> attention_probs;  // per layer, [B, A, S, S]
    Tensor<T> pooled;                        // [B, H]
};

template <typename T>
Tensor<T> forward(const ModelWeights<T>& weights, const ModelConfig& config, const IdTensor& input_ids,
                  const IdTensor& attention_mask, const ForwardOptions& options = {},
                  ForwardTrace<T>* trace = nullptr);

template <typename T>
struct LossAndGrads {
    T loss;
    Tensor<T> logits;
    ModelWeights<T> grads;
};

/// Mean cross-entropy over the batch and its gradient for every tensor in the model.
template <typename T>
LossAndGrads<T> backward(const ModelWeights<T>& weights, const ModelConfig& config, const IdTensor& input_ids,
                         const IdTensor& attention_mask, std::span<const int> labels,
                         const ForwardOptions& options = {});

}  // namespace prunecoder
