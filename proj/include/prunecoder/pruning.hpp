#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "prunecoder/model.hpp"

namespace prunecoder {

/// Which end of the encoder stack loses layers. Layer 0 sits next to the embeddings,
/// layer L-1 next to the pooler/classifier.
enum class Strategy { top, middle, bottom };

std::string to_string(Strategy s);
Strategy parse_strategy(std::string_view name);

struct PruneSpec {
    Strategy strategy = Strategy::top;
    int k = 1;  // layers removed

    /// Display label such as "Top 6" or "Middle 10".
    std::string label() const;

    /// Parses "top:6", "middle:10", "bottom:2".
    static PruneSpec parse(std::string_view text);

    bool operator==(const PruneSpec&) const = default;
};

/// Provenance of one surgery, embedded in pruned checkpoints.
struct PruneRecord {
    std::string source;  // identifier of the source model (fingerprint or user label)
    PruneSpec spec;
    std::vector<int> retained;  // original layer indices, strictly increasing
    std::string timestamp;

    bool operator==(const PruneRecord&) const = default;
};

/// Original indices of the L - k layers that survive `spec`.
///  - top removes the k highest indices
///  - bottom removes the k lowest indices
///  - middle removes one contiguous block, keeping ceil((L-k)/2) layers at the bottom and
///    floor((L-k)/2) at the top
/// Throws UsageError unless 1 <= k <= L-1.
std::vector<int> retained_indices(int num_layers, const PruneSpec& spec);

template <typename T>
struct PrunedModel {
    ModelWeights<T> weights;
    ModelConfig config;
    PruneRecord record;
};

/// Copies the retained layers bitwise into a shallower model, renumbered 0..L-k-1 in original
/// order. Embeddings, pooler and classifier are carried over untouched.
template <typename T>
PrunedModel<T> prune_checkpoint(const ModelWeights<T>& weights, const ModelConfig& config, const PruneSpec& spec,
                                std::string source = {}, std::string timestamp = "1970-01-01T00:00:00Z");

struct SizeReport {
    int layers_removed = 0;
    double encoder_param_reduction_pct = 0.0;
    double total_param_reduction_pct = 0.0;
};

/// Reduction achieved by going from `before` to `after`. Only the layer count may differ.
SizeReport size_report(const ModelConfig& before, const ModelConfig& after);

}  // namespace prunecoder
