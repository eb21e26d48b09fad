#include "prunecoder/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "prunecoder/ops.hpp"
#include "prunecoder/rng.hpp"

namespace prunecoder {

namespace {

std::vector<double> flatten(const ModelWeights<double>& w) {
    std::vector<double> flat;
    w.for_each_tensor([&](const std::string&, const TensorD& t) { flat.insert(flat.end(), t.data().begin(), t.data().end()); });
    return flat;
}

void unflatten(std::span<const double> flat, ModelWeights<double>& w) {
    std::size_t at = 0;
    w.for_each_tensor([&](const std::string&, TensorD& t) {
        for (double& x : t.data()) x = flat[at++];
    });
}

}  // namespace

ModelGradCheckResult model_grad_check(const ModelConfig& config, std::uint64_t seed,
                                      const ModelGradCheckOptions& options) {
    config.validate();
    if (options.batch < 1 || options.seq < 2) throw UsageError("gradcheck needs batch >= 1 and seq >= 2");
    if (options.seq > static_cast<std::size_t>(config.max_positions)) {
        throw UsageError("gradcheck seq exceeds max_positions");
    }
    ModelConfig c = config;
    c.dropout_prob = 0.0;

    Rng rng(mix_keys({seed, 0x9c}));
    ModelWeights<double> weights = init_scratch<double>(c, mix_keys({seed, 0x1}));
    weights.for_each_tensor([&](const std::string& name, TensorD& t) {
        const bool embedding = name.rfind("embeddings.", 0) == 0 && t.rank() == 2;
        const double sd = embedding ? options.embedding_perturbation : options.perturbation;
        for (double& x : t.data()) x += sd * rng.normal();
    });

    const std::size_t B = options.batch, S = options.seq;
    IdTensor ids({B, S});
    IdTensor mask({B, S});
    std::vector<int> labels(B);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t s = 0; s < S; ++s) {
            ids[b * S + s] = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(c.vocab_size)));
            mask[b * S + s] = (b == B - 1 && s == S - 1) ? 0 : 1;
        }
        labels[b] = static_cast<int>(rng.below(static_cast<std::uint64_t>(c.num_classes)));
    }

    const auto analytic = backward(weights, c, ids, mask, labels);
    const std::vector<double> point = flatten(weights);
    const std::vector<double> grad = flatten(analytic.grads);

    ModelWeights<double> scratch = weights;
    auto loss = [&](std::span<const double> flat) {
        unflatten(flat, scratch);
        const TensorD logits = forward(scratch, c, ids, mask);
        return ops::cross_entropy(logits, labels).loss;
    };
    const auto r = ops::grad_check_scalar(loss, point, grad, options.step);

    ModelGradCheckResult out;
    out.max_rel_error = r.max_rel_error;
    out.worst_index = r.worst_index;
    out.coordinates = r.coordinates;
    out.loss = analytic.loss;
    std::size_t offset = 0;
    weights.for_each_tensor([&](const std::string& name, const TensorD& t) {
        if (out.worst_tensor.empty() && r.worst_index < offset + t.size()) {
            out.worst_tensor = name;
            out.worst_index = r.worst_index - offset;
        }
        offset += t.size();
    });
    return out;
}

}  // namespace prunecoder
