#include "prunecoder/protocol.hpp"

#include "prunecoder/checkpoint.hpp"
#include "prunecoder/rng.hpp"

namespace prunecoder {

namespace {

constexpr std::uint64_t kHeadKey = 0xc1a55;
constexpr std::uint64_t kScratchKey = 0x5c7a7c4;

struct Variant {
    std::string model;
    std::string strategy;
    ModelWeights<float> weights;
    ModelConfig config;
    std::vector<PruneRecord> records;
};

double percent(double fraction) { return fraction * 100.0; }

}  // namespace

std::string scratch_model_name(int depth) { return "Scratch-" + std::to_string(depth) + "L"; }

std::string depth_group(int depth) { return std::to_string(depth) + " layers"; }

std::vector<EvalReport> run_protocol(const ModelWeights<float>& base, const ModelConfig& config,
                                     const std::vector<PruneRecord>& base_records,
                                     const std::vector<DatasetSplits>& datasets, const ProtocolOptions& options,
                                     const ProtocolSink& sink) {
    config.validate();
    options.train.validate();
    if (datasets.empty()) throw UsageError("protocol needs at least one dataset");
    for (const auto& spec : options.specs) retained_indices(config.num_layers, spec);
    for (int d : options.scratch_depths) {
        if (d < 1) throw UsageError("scratch depth must be >= 1, got " + std::to_string(d));
    }
    const std::string source = options.source_id.empty() ? model_fingerprint(base) : options.source_id;
    const std::uint64_t seed = options.train.seed;

    std::vector<Variant> variants;
    for (const auto& spec : options.specs) {
        auto pruned = prune_checkpoint(base, config, spec, source, options.timestamp);
        auto records = base_records;
        records.push_back(pruned.record);
        variants.push_back({options.model_name, spec.label(), std::move(pruned.weights), pruned.config,
                            std::move(records)});
    }
    for (int d : options.scratch_depths) {
        ModelConfig c = config;
        c.num_layers = d;
        variants.push_back({scratch_model_name(d), std::string(kNoPruneLabel),
                            init_scratch<float>(c, mix_keys({seed, kScratchKey, static_cast<std::uint64_t>(d)})), c,
                            {}});
    }
    if (options.include_baseline) {
        variants.push_back({options.model_name, std::string(kNoPruneLabel), base, config, base_records});
    }

    std::vector<EvalReport> rows;
    for (const auto& v : variants) {
        for (const auto& ds : datasets) {
            ModelWeights<float> weights = v.weights;
            ModelConfig c = v.config;
            reset_classifier(weights, c, static_cast<int>(ds.train.label_names.size()), mix_keys({seed, kHeadKey}));
            auto tuned = finetune(weights, c, ds.train, ds.validation, options.train);
            EvalReport row;
            row.model = v.model;
            row.strategy = v.strategy;
            row.dataset = ds.name;
            row.validation_accuracy = percent(evaluate(tuned.weights, c, ds.validation));
            row.test_accuracy = percent(evaluate(tuned.weights, c, ds.test));
            row.num_layers = c.num_layers;
            row.total_params = param_count(c).total;
            row.group = depth_group(c.num_layers);
            rows.push_back(row);
            if (sink) sink({row, std::move(tuned.weights), c, v.records, std::move(tuned.history)});
        }
    }
    return rows;
}

}  // namespace prunecoder
