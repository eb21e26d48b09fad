#include "prunecoder/pruning.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

namespace prunecoder {

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::top: return "top";
        case Strategy::middle: return "middle";
        case Strategy::bottom: return "bottom";
    }
    throw UsageError("unknown pruning strategy");
}

Strategy parse_strategy(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "top") return Strategy::top;
    if (lower == "middle") return Strategy::middle;
    if (lower == "bottom") return Strategy::bottom;
    throw UsageError("unknown pruning strategy '" + std::string(name) + "' (expected top, middle or bottom)");
}

std::string PruneSpec::label() const {
    std::string name = to_string(strategy);
    name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
    return name + " " + std::to_string(k);
}

PruneSpec PruneSpec::parse(std::string_view text) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) {
        throw UsageError("prune spec '" + std::string(text) + "' must look like strategy:k, e.g. middle:6");
    }
    PruneSpec spec;
    spec.strategy = parse_strategy(text.substr(0, colon));
    const auto digits = text.substr(colon + 1);
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), spec.k);
    if (ec != std::errc{} || ptr != digits.data() + digits.size()) {
        throw UsageError("prune spec '" + std::string(text) + "' has a non-integer layer count");
    }
    return spec;
}

std::vector<int> retained_indices(int num_layers, const PruneSpec& spec) {
    if (spec.k < 1 || spec.k > num_layers - 1) {
        throw UsageError("cannot remove k=" + std::to_string(spec.k) + " layers from a " +
                         std::to_string(num_layers) + "-layer model: require 1 <= k <= L-1 = " +
                         std::to_string(num_layers - 1));
    }
    const int keep = num_layers - spec.k;
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(keep));
    switch (spec.strategy) {
        case Strategy::top:
            for (int i = 0; i < keep; ++i) out.push_back(i);
            break;
        case Strategy::bottom:
            for (int i = spec.k; i < num_layers; ++i) out.push_back(i);
            break;
        case Strategy::middle: {
            const int prefix = (keep + 1) / 2;
            const int suffix = keep / 2;
            for (int i = 0; i < prefix; ++i) out.push_back(i);
            for (int i = num_layers - suffix; i < num_layers; ++i) out.push_back(i);
            break;
        }
    }
    return out;
}

template <typename T>
PrunedModel<T> prune_checkpoint(const ModelWeights<T>& weights, const ModelConfig& config, const PruneSpec& spec,
                                std::string source, std::string timestamp) {
    config.validate();
    if (weights.layers.size() != static_cast<std::size_t>(config.num_layers)) {
        throw UsageError("weights hold " + std::to_string(weights.layers.size()) + " layers but config says " +
                         std::to_string(config.num_layers));
    }
    PrunedModel<T> out;
    out.record = PruneRecord{std::move(source), spec, retained_indices(config.num_layers, spec), std::move(timestamp)};
    out.config = config;
    out.config.num_layers = static_cast<int>(out.record.retained.size());

    out.weights.token_embeddings = weights.token_embeddings;
    out.weights.position_embeddings = weights.position_embeddings;
    out.weights.type_embeddings = weights.type_embeddings;
    out.weights.embedding_ln_gamma = weights.embedding_ln_gamma;
    out.weights.embedding_ln_beta = weights.embedding_ln_beta;
    out.weights.layers.reserve(out.record.retained.size());
    for (int idx : out.record.retained) out.weights.layers.push_back(weights.layers[static_cast<std::size_t>(idx)]);
    out.weights.pooler_weight = weights.pooler_weight;
    out.weights.pooler_bias = weights.pooler_bias;
    out.weights.classifier_weight = weights.classifier_weight;
    out.weights.classifier_bias = weights.classifier_bias;
    return out;
}

SizeReport size_report(const ModelConfig& before, const ModelConfig& after) {
    ModelConfig depth_neutral = after;
    depth_neutral.num_layers = before.num_layers;
    if (!(depth_neutral == before)) {
        throw UsageError("size_report: configs differ in more than the layer count");
    }
    if (after.num_layers > before.num_layers) {
        throw UsageError("size_report: 'after' model is deeper than 'before'");
    }
    const ParamBreakdown b = param_count(before);
    const ParamBreakdown a = param_count(after);
    SizeReport r;
    r.layers_removed = before.num_layers - after.num_layers;
    r.encoder_param_reduction_pct = 100.0 * r.layers_removed / before.num_layers;
    r.total_param_reduction_pct = 100.0 * static_cast<double>(b.total - a.total) / static_cast<double>(b.total);
    return r;
}

template PrunedModel<float> prune_checkpoint(const ModelWeights<float>&, const ModelConfig&, const PruneSpec&,
                                             std::string, std::string);
template PrunedModel<double> prune_checkpoint(const ModelWeights<double>&, const ModelConfig&, const PruneSpec&,
                                              std::string, std::string);

}  // namespace prunecoder
