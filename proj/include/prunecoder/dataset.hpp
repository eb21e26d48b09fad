#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prunecoder/tensor.hpp"
#include "prunecoder/tokenizer.hpp"

namespace prunecoder {

enum class Split { train, validation, test };
enum class DataFormat { csv, jsonl };

std::string to_string(Split s);
std::string to_string(DataFormat f);
DataFormat parse_format(std::string_view name);
/// ".csv" -> csv, ".jsonl"/".json" -> jsonl.
DataFormat format_from_path(const std::filesystem::path& path);

struct Example {
    std::string text;
    int label = 0;
};

struct LabeledDataset {
    std::vector<Example> examples;
    std::vector<std::string> label_names;  // sorted; label id = position
    Split split = Split::train;
};

/// Reads a CSV (header row, comma separated, double-quote escaping) or JSONL file.
/// Label ids follow the lexicographic order of the distinct label strings unless
/// `label_names` is given, in which case that mapping is reused and unknown labels are errors.
LabeledDataset load_dataset(const std::filesystem::path& path, DataFormat format, const std::string& text_field,
                            const std::string& label_field, Split split = Split::train,
                            const std::vector<std::string>* label_names = nullptr);

/// Parses CSV content into records. `record_lines[i]` is the 1-based line where record i starts.
std::vector<std::vector<std::string>> parse_csv(std::string_view content, std::vector<std::size_t>* record_lines = nullptr);

/// Writes a header row and one quoted-as-needed record per example; labels are written by name.
void write_csv(const std::filesystem::path& path, const LabeledDataset& dataset, const std::string& text_field = "text",
               const std::string& label_field = "label");

/// Default sequence lengths for short-headline / long-paragraph / long-document corpora.
std::size_t preset_max_len(std::string_view preset);

struct Batch {
    IdTensor input_ids;       // [B, S]
    IdTensor attention_mask;  // [B, S]
    std::vector<int> labels;
};

struct EncodedDataset {
    std::size_t max_len = 0;
    std::vector<EncodedExample> examples;
    std::vector<int> labels;
    std::vector<std::string> label_names;

    std::size_t size() const noexcept { return examples.size(); }
};

EncodedDataset encode_dataset(const LabeledDataset& dataset, const Vocab& vocab, std::size_t max_len);

/// Example order for one epoch: identity, or a Fisher-Yates permutation seeded by (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch, bool shuffle);

Batch make_batch(const EncodedDataset& data, std::span<const std::size_t> indices);

/// Consecutive batches over `epoch_order`; the final batch may be partial.
std::vector<Batch> batches(const EncodedDataset& data, std::size_t batch_size, std::uint64_t seed,
                           std::uint64_t epoch, bool shuffle);

/// Synthetic 4-class task: a random filler sequence with exactly one of four marker words
/// inserted; the class is which marker appears.
struct MarkerTask {
    int num_fillers = 24;
    int min_words = 4;
    int max_words = 12;

    static constexpr int num_classes = 4;
};

Vocab marker_task_vocab(const MarkerTask& task = {});
LabeledDataset generate_marker_dataset(const MarkerTask& task, std::size_t n, std::uint64_t seed,
                                       Split split = Split::train);

}  // namespace prunecoder
