#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "prunecoder/dataset.hpp"
#include "prunecoder/model.hpp"
#include "prunecoder/pruning.hpp"
#include "prunecoder/report.hpp"
#include "prunecoder/train.hpp"

namespace prunecoder {

struct DatasetSplits {
    std::string name;
    EncodedDataset train;
    EncodedDataset validation;
    EncodedDataset test;
};

struct ProtocolOptions {
    std::string model_name = "model";
    std::vector<PruneSpec> specs;
    bool include_baseline = true;
    /// Depths of randomly initialized models trained with the same recipe for comparison.
    std::vector<int> scratch_depths;
    TrainConfig train;
    std::string source_id;  // defaults to the base model fingerprint
    std::string timestamp = "1970-01-01T00:00:00Z";
};

/// One fine-tuned row of the protocol, handed to the sink before the next row starts.
struct ProtocolRun {
    EvalReport report;
    ModelWeights<float> weights;
    ModelConfig config;
    std::vector<PruneRecord> records;
    TrainHistory history;
};

using ProtocolSink = std::function<void(const ProtocolRun&)>;

/// Prunes, re-heads, fine-tunes and evaluates every spec on every dataset, then the scratch
/// models, then the unpruned baseline. Rows come back in that order. Rows of equal depth share
/// a report group, so the best-value flag compares pruned models against each other and against
/// scratch models of the same size.
std::vector<EvalReport> run_protocol(const ModelWeights<float>& base, const ModelConfig& config,
                                     const std::vector<PruneRecord>& base_records,
                                     const std::vector<DatasetSplits>& datasets, const ProtocolOptions& options,
                                     const ProtocolSink& sink = {});

/// Name used for scratch rows, e.g. "Scratch-6L".
std::string scratch_model_name(int depth);

/// Group key shared by all rows with `depth` encoder layers.
std::string depth_group(int depth);

}  // namespace prunecoder
