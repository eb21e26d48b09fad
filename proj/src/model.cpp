#include "prunecoder/model.hpp"

#include <cmath>

#include "prunecoder/ops.hpp"
#include "prunecoder/rng.hpp"

namespace prunecoder {

namespace {

constexpr double kMaskedScore = -1e9;

constexpr std::uint64_t kDropoutEmbeddings = 1;
constexpr std::uint64_t kDropoutPooled = 2;
constexpr std::uint64_t dropout_attn_id(std::size_t layer) { return 100 + 2 * layer; }
constexpr std::uint64_t dropout_ffn_id(std::size_t layer) { return 101 + 2 * layer; }

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <typename T>
struct LayerCache {
    Tensor<T> input;  // [N, H]
    Tensor<T> q, k, v;
    Tensor<T> probs;  // [B, A, S, S]
    Tensor<T> context;
    Tensor<T> attn_scale;
    Tensor<T> attn_residual;  // layer-norm input
    Tensor<T> attn_normed;
    Tensor<T> ffn_pre;  // up projection, pre-activation
    Tensor<T> ffn_act;
    Tensor<T> ffn_scale;
    Tensor<T> ffn_residual;
};

template <typename T>
struct Cache {
    Tensor<T> embedding_sum;
    Tensor<T> embedding_scale;
    std::vector<LayerCache<T>> layers;
    Tensor<T> final_hidden;
    Tensor<T> cls;
    Tensor<T> pooled;
    Tensor<T> pooled_scale;
    Tensor<T> pooled_dropped;
};

struct BatchShape {
    std::size_t batch;
    std::size_t seq;
};

BatchShape check_inputs(const ModelConfig& config, const IdTensor& ids, const IdTensor& mask) {
    if (ids.rank() != 2) throw DataError("input_ids must be rank-2 [batch, seq], got " + shape_string(ids.shape()));
    if (mask.shape() != ids.shape()) throw DataError("attention_mask shape must equal input_ids shape");
    const BatchShape bs{ids.dim(0), ids.dim(1)};
    if (bs.seq > static_cast<std::size_t>(config.max_positions)) {
        throw DataError("sequence length " + std::to_string(bs.seq) + " exceeds max_positions " +
                        std::to_string(config.max_positions));
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= config.vocab_size) {
            throw DataError("token id " + std::to_string(ids[i]) + " outside [0, " + std::to_string(config.vocab_size) + ")");
        }
        if (mask[i] != 0 && mask[i] != 1) throw DataError("attention_mask values must be 0 or 1");
    }
    for (std::size_t b = 0; b < bs.batch; ++b) {
        bool any = false;
        for (std::size_t s = 0; s < bs.seq; ++s) any = any || mask[b * bs.seq + s] == 1;
        if (!any) throw DataError("attention_mask row " + std::to_string(b) + " has no unmasked position");
    }
    return bs;
}

template <typename T>
void check_structure(const ModelWeights<T>& w, const ModelConfig& config) {
    config.validate();
    if (w.layers.size() != static_cast<std::size_t>(config.num_layers)) {
        throw UsageError("model has " + std::to_string(w.layers.size()) + " layers but config says " +
                         std::to_string(config.num_layers));
    }
    const Shape tok{static_cast<std::size_t>(config.vocab_size), static_cast<std::size_t>(config.hidden_size)};
    const Shape cls{static_cast<std::size_t>(config.num_classes), static_cast<std::size_t>(config.hidden_size)};
    if (w.token_embeddings.shape() != tok || w.classifier_weight.shape() != cls) {
        throw UsageError("model weights do not match config shapes");
    }
}

template <typename T>
Tensor<T> maybe_dropout(const Tensor<T>& x, double p, const ForwardOptions& opt, std::uint64_t id, Tensor<T>* scale) {
    if (!opt.training || p == 0.0) {
        if (scale) *scale = Tensor<T>();
        return x;
    }
    auto r = ops::dropout(x, p, ops::DropoutKey{opt.dropout_seed, opt.step, id});
    if (scale) *scale = std::move(r.scale);
    return std::move(r.output);
}

// Multiplies by the dropout scale recorded in the forward pass (empty scale = no dropout).
template <typename T>
Tensor<T> undo_dropout(const Tensor<T>& dy, const Tensor<T>& scale) {
    if (scale.size() != dy.size()) return dy;
    return ops::hadamard(dy, scale);
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const IdTensor& mask,
                    const BatchShape& bs, int heads, Tensor<T>& probs) {
    const std::size_t H = q.cols();
    const std::size_t A = static_cast<std::size_t>(heads);
    const std::size_t D = H / A;
    const std::size_t S = bs.seq;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(D)));
    probs = Tensor<T>({bs.batch, A, S, S});
    Tensor<T> context(q.shape());
    std::vector<T> row(S);
    for (std::size_t b = 0; b < bs.batch; ++b) {
        for (std::size_t a = 0; a < A; ++a) {
            for (std::size_t i = 0; i < S; ++i) {
                const T* qi = &q[(b * S + i) * H + a * D];
                T mx = -std::numeric_limits<T>::infinity();
                for (std::size_t j = 0; j < S; ++j) {
                    const T* kj = &k[(b * S + j) * H + a * D];
                    T dot = 0;
                    for (std::size_t d = 0; d < D; ++d) dot += qi[d] * kj[d];
                    row[j] = dot * scale + (mask[b * S + j] ? T{0} : static_cast<T>(kMaskedScore));
                    mx = std::max(mx, row[j]);
                }
                double sum = 0.0;
                for (std::size_t j = 0; j < S; ++j) {
                    row[j] = std::exp(row[j] - mx);
                    sum += row[j];
                }
                T* p = &probs[((b * A + a) * S + i) * S];
                for (std::size_t j = 0; j < S; ++j) p[j] = static_cast<T>(row[j] / sum);
                T* ci = &context[(b * S + i) * H + a * D];
                for (std::size_t j = 0; j < S; ++j) {
                    const T pj = p[j];
                    const T* vj = &v[(b * S + j) * H + a * D];
                    for (std::size_t d = 0; d < D; ++d) ci[d] += pj * vj[d];
                }
            }
        }
    }
    require_finite(context, "attention");
    return context;
}

template <typename T>
struct AttentionGrads {
    Tensor<T> dq, dk, dv;
};

template <typename T>
AttentionGrads<T> attention_backward(const LayerCache<T>& c, const Tensor<T>& dcontext, const BatchShape& bs,
                                     int heads) {
    const std::size_t H = c.q.cols();
    const std::size_t A = static_cast<std::size_t>(heads);
    const std::size_t D = H / A;
    const std::size_t S = bs.seq;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(D)));
    AttentionGrads<T> g{Tensor<T>(c.q.shape()), Tensor<T>(c.k.shape()), Tensor<T>(c.v.shape())};
    std::vector<T> dp(S);
    for (std::size_t b = 0; b < bs.batch; ++b) {
        for (std::size_t a = 0; a < A; ++a) {
            for (std::size_t i = 0; i < S; ++i) {
                const T* p = &c.probs[((b * A + a) * S + i) * S];
                const T* dci = &dcontext[(b * S + i) * H + a * D];
                double dot = 0.0;
                for (std::size_t j = 0; j < S; ++j) {
                    const T* vj = &c.v[(b * S + j) * H + a * D];
                    T* dvj = &g.dv[(b * S + j) * H + a * D];
                    T acc = 0;
                    for (std::size_t d = 0; d < D; ++d) {
                        acc += dci[d] * vj[d];
                        dvj[d] += p[j] * dci[d];
                    }
                    dp[j] = acc;
                    dot += static_cast<double>(p[j]) * acc;
                }
                const T* qi = &c.q[(b * S + i) * H + a * D];
                T* dqi = &g.dq[(b * S + i) * H + a * D];
                for (std::size_t j = 0; j < S; ++j) {
                    const T ds = static_cast<T>(p[j] * (dp[j] - dot)) * scale;
                    if (ds == T{0}) continue;
                    const T* kj = &c.k[(b * S + j) * H + a * D];
                    T* dkj = &g.dk[(b * S + j) * H + a * D];
                    for (std::size_t d = 0; d < D; ++d) {
                        dqi[d] += ds * kj[d];
                        dkj[d] += ds * qi[d];
                    }
                }
            }
        }
    }
    return g;
}

template <typename T>
Tensor<T> run_forward(const ModelWeights<T>& w, const ModelConfig& config, const IdTensor& ids,
                      const IdTensor& mask, const ForwardOptions& opt, Cache<T>* cache, ForwardTrace<T>* trace) {
    check_structure(w, config);
    const BatchShape bs = check_inputs(config, ids, mask);
    const std::size_t H = static_cast<std::size_t>(config.hidden_size);
    const std::size_t N = bs.batch * bs.seq;
    const double eps = config.layer_norm_eps;
    const double p = config.dropout_prob;

    Tensor<T> emb({N, H});
    for (std::size_t b = 0; b < bs.batch; ++b) {
        for (std::size_t s = 0; s < bs.seq; ++s) {
            const std::size_t n = b * bs.seq + s;
            const auto tok = w.token_embeddings.row(static_cast<std::size_t>(ids[n]));
            const auto pos = w.position_embeddings.row(s);
            const auto typ = w.type_embeddings.row(0);
            auto out = emb.row(n);
            for (std::size_t h = 0; h < H; ++h) out[h] = tok[h] + pos[h] + typ[h];
        }
    }
    Tensor<T> x = ops::layer_norm(emb, w.embedding_ln_gamma, w.embedding_ln_beta, eps);
    Tensor<T> scale;
    x = maybe_dropout(x, p, opt, kDropoutEmbeddings, &scale);
    if (cache) {
        cache->embedding_sum = std::move(emb);
        cache->embedding_scale = std::move(scale);
        cache->layers.resize(w.layers.size());
    }
    if (trace) trace->attention_probs.clear();

    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        const auto& L = w.layers[l];
        Tensor<T> q = ops::linear(x, L.q_weight, L.q_bias);
        // q . k_bias is the same for every key position, so softmax cancels it exactly
        Tensor<T> k = ops::linear(x, L.k_weight, Tensor<T>(L.k_bias.shape()));
        Tensor<T> v = ops::linear(x, L.v_weight, L.v_bias);
        Tensor<T> probs;
        Tensor<T> context = attention(q, k, v, mask, bs, config.num_heads, probs);
        Tensor<T> attn_scale;
        Tensor<T> attn_out = maybe_dropout(ops::linear(context, L.attn_out_weight, L.attn_out_bias), p, opt,
                                           dropout_attn_id(l), &attn_scale);
        ops::add_inplace(attn_out, x);
        Tensor<T> normed = ops::layer_norm(attn_out, L.attn_ln_gamma, L.attn_ln_beta, eps);
        Tensor<T> ffn_pre = ops::linear(normed, L.ffn_up_weight, L.ffn_up_bias);
        Tensor<T> ffn_act = ops::gelu(ffn_pre);
        Tensor<T> ffn_scale;
        Tensor<T> ffn_out = maybe_dropout(ops::linear(ffn_act, L.ffn_down_weight, L.ffn_down_bias), p, opt,
                                          dropout_ffn_id(l), &ffn_scale);
        ops::add_inplace(ffn_out, normed);
        Tensor<T> next = ops::layer_norm(ffn_out, L.ffn_ln_gamma, L.ffn_ln_beta, eps);
        if (trace) trace->attention_probs.push_back(probs);
        if (cache) {
            auto& c = cache->layers[l];
            c.input = std::move(x);
            c.q = std::move(q);
            c.k = std::move(k);
            c.v = std::move(v);
            c.probs = std::move(probs);
            c.context = std::move(context);
            c.attn_scale = std::move(attn_scale);
            c.attn_residual = std::move(attn_out);
            c.attn_normed = std::move(normed);
            c.ffn_pre = std::move(ffn_pre);
            c.ffn_act = std::move(ffn_act);
            c.ffn_scale = std::move(ffn_scale);
            c.ffn_residual = std::move(ffn_out);
        }
        x = std::move(next);
    }

    Tensor<T> cls({bs.batch, H});
    for (std::size_t b = 0; b < bs.batch; ++b) {
        const auto src = x.row(b * bs.seq);
        std::copy(src.begin(), src.end(), cls.row(b).begin());
    }
    Tensor<T> pooled = ops::tanh(ops::linear(cls, w.pooler_weight, w.pooler_bias));
    Tensor<T> pooled_scale;
    Tensor<T> pooled_dropped = maybe_dropout(pooled, p, opt, kDropoutPooled, &pooled_scale);
    Tensor<T> logits = ops::linear(pooled_dropped, w.classifier_weight, w.classifier_bias);
    if (trace) trace->pooled = pooled;
    if (cache) {
        cache->final_hidden = std::move(x);
        cache->cls = std::move(cls);
        cache->pooled = std::move(pooled);
        cache->pooled_scale = std::move(pooled_scale);
        cache->pooled_dropped = std::move(pooled_dropped);
    }
    return logits;
}

template <typename T>
void fill_layer_shapes(EncoderLayerWeights<T>& L, std::size_t H, std::size_t I) {
    L.q_weight = L.k_weight = L.v_weight = L.attn_out_weight = Tensor<T>({H, H});
    L.q_bias = L.k_bias = L.v_bias = L.attn_out_bias = Tensor<T>({H});
    L.attn_ln_gamma = L.attn_ln_beta = Tensor<T>({H});
    L.ffn_up_weight = Tensor<T>({I, H});
    L.ffn_up_bias = Tensor<T>({I});
    L.ffn_down_weight = Tensor<T>({H, I});
    L.ffn_down_bias = Tensor<T>({H});
    L.ffn_ln_gamma = L.ffn_ln_beta = Tensor<T>({H});
}

}  // namespace

void ModelConfig::validate() const {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw UsageError("invalid model config: " + what);
    };
    require(num_layers >= 1, "num_layers must be >= 1");
    require(hidden_size >= 1, "hidden_size must be positive");
    require(num_heads >= 1, "num_heads must be positive");
    require(hidden_size % num_heads == 0, "hidden_size must be divisible by num_heads");
    require(intermediate_size >= 1, "intermediate_size must be positive");
    require(vocab_size >= 1, "vocab_size must be positive");
    require(max_positions >= 1, "max_positions must be positive");
    require(type_vocab_size >= 1, "type_vocab_size must be positive");
    require(num_classes >= 2, "num_classes must be >= 2");
    require(layer_norm_eps > 0.0, "layer_norm_eps must be positive");
    require(dropout_prob >= 0.0 && dropout_prob < 1.0, "dropout_prob must lie in [0, 1)");
}

ModelConfig base_config(int vocab_size, int num_classes) {
    ModelConfig c;
    c.vocab_size = vocab_size;
    c.num_classes = num_classes;
    return c;
}

ModelConfig small_config(int vocab_size, int num_classes) {
    ModelConfig c = base_config(vocab_size, num_classes);
    c.num_layers = 6;
    return c;
}

ModelConfig smaller_config(int vocab_size, int num_classes) {
    ModelConfig c = base_config(vocab_size, num_classes);
    c.num_layers = 2;
    return c;
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.num_layers = 2;
    c.hidden_size = 8;
    c.num_heads = 2;
    c.intermediate_size = 16;
    c.vocab_size = 32;
    c.max_positions = 16;
    c.type_vocab_size = 2;
    c.num_classes = 4;
    return c;
}

std::vector<TensorSpec> tensor_specs(const ModelConfig& config) {
    config.validate();
    std::vector<TensorSpec> specs;
    ModelWeights<float> shapes = zeros_like_config<float>(config);
    shapes.for_each_tensor([&](const std::string& name, const TensorF& t) { specs.push_back({name, t.shape()}); });
    return specs;
}

bool is_no_decay_parameter(const std::string& name) {
    return ends_with(name, ".bias") || ends_with(name, ".gamma") || ends_with(name, ".beta");
}

template <typename T>
bool bitwise_equal(const ModelWeights<T>& a, const ModelWeights<T>& b) {
    if (a.layers.size() != b.layers.size()) return false;
    std::vector<const Tensor<T>*> lhs;
    a.for_each_tensor([&](const std::string&, const Tensor<T>& t) { lhs.push_back(&t); });
    std::size_t i = 0;
    bool equal = true;
    b.for_each_tensor([&](const std::string&, const Tensor<T>& t) { equal = equal && bitwise_equal(*lhs[i++], t); });
    return equal;
}

template <typename T>
ModelWeights<T> zeros_like_config(const ModelConfig& config) {
    config.validate();
    const auto H = static_cast<std::size_t>(config.hidden_size);
    const auto I = static_cast<std::size_t>(config.intermediate_size);
    ModelWeights<T> w;
    w.token_embeddings = Tensor<T>({static_cast<std::size_t>(config.vocab_size), H});
    w.position_embeddings = Tensor<T>({static_cast<std::size_t>(config.max_positions), H});
    w.type_embeddings = Tensor<T>({static_cast<std::size_t>(config.type_vocab_size), H});
    w.embedding_ln_gamma = w.embedding_ln_beta = Tensor<T>({H});
    w.layers.resize(static_cast<std::size_t>(config.num_layers));
    for (auto& L : w.layers) fill_layer_shapes(L, H, I);
    w.pooler_weight = Tensor<T>({H, H});
    w.pooler_bias = Tensor<T>({H});
    w.classifier_weight = Tensor<T>({static_cast<std::size_t>(config.num_classes), H});
    w.classifier_bias = Tensor<T>({static_cast<std::size_t>(config.num_classes)});
    return w;
}

template <typename T>
ModelWeights<T> zeros_like(const ModelWeights<T>& weights) {
    ModelWeights<T> out = weights;
    out.for_each_tensor([](const std::string&, Tensor<T>& t) { t.fill(T{0}); });
    return out;
}

ParamBreakdown param_count(const ModelConfig& config) {
    config.validate();
    const std::int64_t V = config.vocab_size, P = config.max_positions, T = config.type_vocab_size;
    const std::int64_t H = config.hidden_size, I = config.intermediate_size, C = config.num_classes;
    const std::int64_t L = config.num_layers;
    ParamBreakdown p;
    p.embeddings = V * H + P * H + T * H + 2 * H;
    p.per_layer = 4 * (H * H + H) + 2 * H + (H * I + I) + (I * H + H) + 2 * H;
    p.encoder_total = L * p.per_layer;
    p.pooler = H * H + H;
    p.classifier = C * H + C;
    p.total = p.embeddings + p.encoder_total + p.pooler + p.classifier;
    return p;
}

template <typename T>
ModelWeights<T> init_scratch(const ModelConfig& config, std::uint64_t seed) {
    ModelWeights<T> w = zeros_like_config<T>(config);
    Rng rng(seed);
    w.for_each_tensor([&](const std::string& name, Tensor<T>& t) {
        if (ends_with(name, ".gamma")) {
            t.fill(T{1});
        } else if (ends_with(name, ".bias") || ends_with(name, ".beta")) {
            t.fill(T{0});
        } else {
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.truncated_normal(0.02));
        }
    });
    return w;
}

template <typename T>
void reset_classifier(ModelWeights<T>& weights, ModelConfig& config, int num_classes, std::uint64_t seed) {
    config.num_classes = num_classes;
    config.validate();
    const auto C = static_cast<std::size_t>(num_classes);
    const auto H = static_cast<std::size_t>(config.hidden_size);
    Rng rng(mix_keys({seed, 0xc1a551f1e5ULL}));
    weights.classifier_weight = Tensor<T>({C, H});
    for (std::size_t i = 0; i < weights.classifier_weight.size(); ++i) {
        weights.classifier_weight[i] = static_cast<T>(rng.truncated_normal(0.02));
    }
    weights.classifier_bias = Tensor<T>({C});
}

template <typename T>
Tensor<T> forward(const ModelWeights<T>& weights, const ModelConfig& config, const IdTensor& input_ids,
                  const IdTensor& attention_mask, const ForwardOptions& options, ForwardTrace<T>* trace) {
    return run_forward<T>(weights, config, input_ids, attention_mask, options, nullptr, trace);
}

template <typename T>
LossAndGrads<T> backward(const ModelWeights<T>& w, const ModelConfig& config, const IdTensor& ids,
                         const IdTensor& mask, std::span<const int> labels, const ForwardOptions& options) {
    Cache<T> cache;
    Tensor<T> logits = run_forward<T>(w, config, ids, mask, options, &cache, nullptr);
    const BatchShape bs{ids.dim(0), ids.dim(1)};
    const std::size_t H = static_cast<std::size_t>(config.hidden_size);
    const double eps = config.layer_norm_eps;
    auto ce = ops::cross_entropy(logits, labels);

    LossAndGrads<T> out{ce.loss, std::move(logits), zeros_like(w)};
    ModelWeights<T>& g = out.grads;

    auto cls_grads = ops::linear_backward(cache.pooled_dropped, w.classifier_weight, ce.dlogits);
    g.classifier_weight = std::move(cls_grads.dweight);
    g.classifier_bias = std::move(cls_grads.dbias);
    Tensor<T> dpooled = ops::tanh_backward(cache.pooled, undo_dropout(cls_grads.dx, cache.pooled_scale));
    auto pool_grads = ops::linear_backward(cache.cls, w.pooler_weight, dpooled);
    g.pooler_weight = std::move(pool_grads.dweight);
    g.pooler_bias = std::move(pool_grads.dbias);

    Tensor<T> dx(cache.final_hidden.shape());
    for (std::size_t b = 0; b < bs.batch; ++b) {
        const auto src = pool_grads.dx.row(b);
        std::copy(src.begin(), src.end(), dx.row(b * bs.seq).begin());
    }

    for (std::size_t l = w.layers.size(); l-- > 0;) {
        const auto& L = w.layers[l];
        const auto& c = cache.layers[l];
        auto& G = g.layers[l];

        auto ffn_ln = ops::layer_norm_backward(c.ffn_residual, L.ffn_ln_gamma, eps, dx);
        G.ffn_ln_gamma = std::move(ffn_ln.dgamma);
        G.ffn_ln_beta = std::move(ffn_ln.dbeta);
        Tensor<T> dnormed = ffn_ln.dx;  // residual branch
        auto down = ops::linear_backward(c.ffn_act, L.ffn_down_weight, undo_dropout(ffn_ln.dx, c.ffn_scale));
        G.ffn_down_weight = std::move(down.dweight);
        G.ffn_down_bias = std::move(down.dbias);
        auto up = ops::linear_backward(c.attn_normed, L.ffn_up_weight, ops::gelu_backward(c.ffn_pre, down.dx));
        G.ffn_up_weight = std::move(up.dweight);
        G.ffn_up_bias = std::move(up.dbias);
        ops::add_inplace(dnormed, up.dx);

        auto attn_ln = ops::layer_norm_backward(c.attn_residual, L.attn_ln_gamma, eps, dnormed);
        G.attn_ln_gamma = std::move(attn_ln.dgamma);
        G.attn_ln_beta = std::move(attn_ln.dbeta);
        Tensor<T> dinput = attn_ln.dx;  // residual branch
        auto proj = ops::linear_backward(c.context, L.attn_out_weight, undo_dropout(attn_ln.dx, c.attn_scale));
        G.attn_out_weight = std::move(proj.dweight);
        G.attn_out_bias = std::move(proj.dbias);
        auto att = attention_backward(c, proj.dx, bs, config.num_heads);
        auto gq = ops::linear_backward(c.input, L.q_weight, att.dq);
        auto gk = ops::linear_backward(c.input, L.k_weight, att.dk);
        auto gv = ops::linear_backward(c.input, L.v_weight, att.dv);
        G.q_weight = std::move(gq.dweight);
        G.q_bias = std::move(gq.dbias);
        G.k_weight = std::move(gk.dweight);
        G.k_bias = Tensor<T>(L.k_bias.shape());
        G.v_weight = std::move(gv.dweight);
        G.v_bias = std::move(gv.dbias);
        ops::add_inplace(dinput, gq.dx);
        ops::add_inplace(dinput, gk.dx);
        ops::add_inplace(dinput, gv.dx);
        dx = std::move(dinput);
    }

    auto emb_ln = ops::layer_norm_backward(cache.embedding_sum, w.embedding_ln_gamma, eps,
                                           undo_dropout(dx, cache.embedding_scale));
    g.embedding_ln_gamma = std::move(emb_ln.dgamma);
    g.embedding_ln_beta = std::move(emb_ln.dbeta);
    for (std::size_t b = 0; b < bs.batch; ++b) {
        for (std::size_t s = 0; s < bs.seq; ++s) {
            const std::size_t n = b * bs.seq + s;
            const auto d = emb_ln.dx.row(n);
            auto tok = g.token_embeddings.row(static_cast<std::size_t>(ids[n]));
            auto pos = g.position_embeddings.row(s);
            auto typ = g.type_embeddings.row(0);
            for (std::size_t h = 0; h < H; ++h) {
                tok[h] += d[h];
                pos[h] += d[h];
                typ[h] += d[h];
            }
        }
    }
    return out;
}

#define PRUNECODER_INSTANTIATE_MODEL(T)                                                                   \
    template bool bitwise_equal(const ModelWeights<T>&, const ModelWeights<T>&);                          \
    template ModelWeights<T> zeros_like_config<T>(const ModelConfig&);                                    \
    template ModelWeights<T> zeros_like(const ModelWeights<T>&);                                          \
    template ModelWeights<T> init_scratch<T>(const ModelConfig&, std::uint64_t);                          \
    template void reset_classifier(ModelWeights<T>&, ModelConfig&, int, std::uint64_t);                   \
    template Tensor<T> forward(const ModelWeights<T>&, const ModelConfig&, const IdTensor&, const IdTensor&, \
                               const ForwardOptions&, ForwardTrace<T>*);                                  \
    template LossAndGrads<T> backward(const ModelWeights<T>&, const ModelConfig&, const IdTensor&,        \
                                      const IdTensor&, std::span<const int>, const ForwardOptions&);

PRUNECODER_INSTANTIATE_MODEL(float)
PRUNECODER_INSTANTIATE_MODEL(double)

#undef PRUNECODER_INSTANTIATE_MODEL

}  // namespace prunecoder
