#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "prunecoder/model.hpp"
#include "prunecoder/pruning.hpp"

namespace prunecoder {

/// Single-file checkpoint layout (see docs/format.md):
///   "PRNC1\n" | u64 LE header length | JSON header padded with spaces | payload
/// The payload starts on a 64-byte file boundary and each tensor's f32 little-endian data
/// starts at a 64-byte aligned offset within it.
namespace checkpoint_format {
inline constexpr std::string_view magic = "PRNC1\n";
inline constexpr int version = 1;
inline constexpr std::size_t alignment = 64;
}  // namespace checkpoint_format

struct Checkpoint {
    ModelWeights<float> weights;
    ModelConfig config;
    std::vector<PruneRecord> records;
    /// False when the file carried no classifier tensors; the head is then zero-filled and
    /// must be re-initialized before fine-tuning.
    bool has_classifier = true;
    /// Class names in label-id order, present once the head has been fine-tuned on a dataset.
    std::vector<std::string> label_names;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PruneRecord& record);
PruneRecord prune_record_from_json(const nlohmann::json& j);

std::string encode_checkpoint(const ModelWeights<float>& weights, const ModelConfig& config,
                              const std::vector<PruneRecord>& records,
                              const std::vector<std::string>& label_names = {});
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelWeights<float>& weights, const ModelConfig& config,
                     const std::vector<PruneRecord>& records = {},
                     const std::vector<std::string>& label_names = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Structural problems in `weights` relative to `config`: layer count, missing or unexpected
/// tensors, shape mismatches, non-finite values. Empty means valid.
template <typename T>
std::vector<std::string> validate(const ModelWeights<T>& weights, const ModelConfig& config);

/// 16-hex-digit FNV-1a digest over tensor names, shapes and bytes.
std::string model_fingerprint(const ModelWeights<float>& weights);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace prunecoder
