#include "prunecoder/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "prunecoder/errors.hpp"
#include "prunecoder/rng.hpp"

namespace prunecoder {

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset file " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct RawRow {
    std::size_t line;
    std::string text;
    std::string label;
};

std::vector<RawRow> read_csv_rows(const std::filesystem::path& path, const std::string& text_field,
                                  const std::string& label_field) {
    std::vector<std::size_t> lines;
    const auto records = parse_csv(read_file(path), &lines);
    if (records.empty()) throw DataError(path.string() + ": empty file");
    const auto& header = records.front();
    auto column = [&](const std::string& field) {
        const auto it = std::find(header.begin(), header.end(), field);
        if (it == header.end()) throw DataError(path.string() + ": header has no field '" + field + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t text_col = column(text_field);
    const std::size_t label_col = column(label_field);
    std::vector<RawRow> rows;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.size() == 1 && rec[0].empty()) continue;  // blank line
        if (rec.size() != header.size()) {
            throw DataError(path.string() + ":" + std::to_string(lines[r]) + ": expected " +
                            std::to_string(header.size()) + " fields, found " + std::to_string(rec.size()));
        }
        if (rec[label_col].empty()) {
            throw DataError(path.string() + ":" + std::to_string(lines[r]) + ": missing field '" + label_field + "'");
        }
        rows.push_back({lines[r], rec[text_col], rec[label_col]});
    }
    return rows;
}

std::vector<RawRow> read_jsonl_rows(const std::filesystem::path& path, const std::string& text_field,
                                    const std::string& label_field) {
    std::istringstream in(read_file(path));
    std::vector<RawRow> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
        }
        if (!obj.is_object()) throw DataError(path.string() + ":" + std::to_string(line_no) + ": row is not an object");
        auto field = [&](const std::string& name) {
            const auto it = obj.find(name);
            if (it == obj.end() || it->is_null()) {
                throw DataError(path.string() + ":" + std::to_string(line_no) + ": missing field '" + name + "'");
            }
            return it->is_string() ? it->get<std::string>() : it->dump();
        };
        rows.push_back({line_no, field(text_field), field(label_field)});
    }
    return rows;
}

}  // namespace

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "unknown";
}

std::string to_string(DataFormat f) { return f == DataFormat::csv ? "csv" : "jsonl"; }

DataFormat parse_format(std::string_view name) {
    if (name == "csv") return DataFormat::csv;
    if (name == "jsonl" || name == "json") return DataFormat::jsonl;
    throw UsageError("unknown data format '" + std::string(name) + "' (expected csv or jsonl)");
}

DataFormat format_from_path(const std::filesystem::path& path) {
    const std::string ext = path.extension().string();
    if (ext == ".csv") return DataFormat::csv;
    if (ext == ".jsonl" || ext == ".json") return DataFormat::jsonl;
    throw UsageError("cannot infer data format of " + path.string() + " (use .csv or .jsonl)");
}

std::vector<std::vector<std::string>> parse_csv(std::string_view content, std::vector<std::size_t>* record_lines) {
    std::vector<std::vector<std::string>> records;
    if (content.empty()) return records;
    if (content.starts_with("\xEF\xBB\xBF")) content.remove_prefix(3);
    std::vector<std::string> record;
    std::string field;
    std::size_t line = 1, record_line = 1;
    bool quoted = false, field_was_quoted = false;
    auto end_record = [&] {
        record.push_back(std::move(field));
        field.clear();
        records.push_back(std::move(record));
        record.clear();
        if (record_lines) record_lines->push_back(record_line);
        field_was_quoted = false;
    };
    for (std::size_t i = 0; i < content.size(); ++i) {
        const char c = content[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < content.size() && content[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (!field.empty() || field_was_quoted) {
                    throw DataError("line " + std::to_string(line) + ": stray quote inside unquoted field");
                }
                quoted = true;
                field_was_quoted = true;
                break;
            case ',':
                record.push_back(std::move(field));
                field.clear();
                field_was_quoted = false;
                break;
            case '\r':
                break;
            case '\n':
                end_record();
                ++line;
                record_line = line;
                break;
            default:
                if (field_was_quoted) {
                    throw DataError("line " + std::to_string(line) + ": text after closing quote");
                }
                field.push_back(c);
        }
    }
    if (quoted) throw DataError("line " + std::to_string(record_line) + ": unterminated quoted field");
    if (!field.empty() || !record.empty() || field_was_quoted) end_record();
    return records;
}

LabeledDataset load_dataset(const std::filesystem::path& path, DataFormat format, const std::string& text_field,
                            const std::string& label_field, Split split, const std::vector<std::string>* label_names) {
    std::vector<RawRow> rows;
    try {
        rows = format == DataFormat::csv ? read_csv_rows(path, text_field, label_field)
                                         : read_jsonl_rows(path, text_field, label_field);
    } catch (const DataError& e) {
        const std::string msg = e.what();
        if (msg.rfind(path.string(), 0) == 0) throw;
        throw DataError(path.string() + ": " + msg);
    }
    if (rows.empty()) throw DataError(path.string() + ": empty file (no examples)");

    LabeledDataset ds;
    ds.split = split;
    if (label_names) {
        ds.label_names = *label_names;
    } else {
        std::set<std::string> distinct;
        for (const auto& r : rows) distinct.insert(r.label);
        ds.label_names.assign(distinct.begin(), distinct.end());
    }
    std::map<std::string, int> ids;
    for (std::size_t i = 0; i < ds.label_names.size(); ++i) ids.emplace(ds.label_names[i], static_cast<int>(i));
    ds.examples.reserve(rows.size());
    for (auto& r : rows) {
        const auto it = ids.find(r.label);
        if (it == ids.end()) {
            throw DataError(path.string() + ":" + std::to_string(r.line) + ": label '" + r.label +
                            "' is not in the training label set");
        }
        ds.examples.push_back({std::move(r.text), it->second});
    }
    return ds;
}

std::size_t preset_max_len(std::string_view preset) {
    if (preset == "shc" || preset == "short") return 64;
    if (preset == "lpc" || preset == "paragraph") return 256;
    if (preset == "ldc" || preset == "document") return 512;
    throw UsageError("unknown max-length preset '" + std::string(preset) + "'");
}

EncodedDataset encode_dataset(const LabeledDataset& dataset, const Vocab& vocab, std::size_t max_len) {
    EncodedDataset out;
    out.max_len = max_len;
    out.label_names = dataset.label_names;
    out.examples.reserve(dataset.examples.size());
    out.labels.reserve(dataset.examples.size());
    for (const auto& ex : dataset.examples) {
        out.examples.push_back(encode_example(ex.text, vocab, max_len));
        out.labels.push_back(ex.label);
    }
    return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch, bool shuffle) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    if (!shuffle || n < 2) return order;
    Rng rng(mix_keys({seed, epoch, 0x5e1ec7ULL}));
    for (std::size_t i = n - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i + 1));
        std::swap(order[i], order[j]);
    }
    return order;
}

Batch make_batch(const EncodedDataset& data, std::span<const std::size_t> indices) {
    if (indices.empty()) throw UsageError("cannot build an empty batch");
    const std::size_t S = data.max_len;
    Batch b{IdTensor({indices.size(), S}), IdTensor({indices.size(), S}), {}};
    b.labels.reserve(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto& ex = data.examples.at(indices[r]);
        std::copy(ex.input_ids.begin(), ex.input_ids.end(), b.input_ids.row(r).begin());
        std::copy(ex.attention_mask.begin(), ex.attention_mask.end(), b.attention_mask.row(r).begin());
        b.labels.push_back(data.labels[indices[r]]);
    }
    return b;
}

std::vector<Batch> batches(const EncodedDataset& data, std::size_t batch_size, std::uint64_t seed,
                           std::uint64_t epoch, bool shuffle) {
    if (batch_size < 1) throw UsageError("batch_size must be >= 1");
    const auto order = epoch_order(data.size(), seed, epoch, shuffle);
    std::vector<Batch> out;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t len = std::min(batch_size, order.size() - start);
        out.push_back(make_batch(data, std::span<const std::size_t>(order).subspan(start, len)));
    }
    return out;
}

Vocab marker_task_vocab(const MarkerTask& task) {
    std::vector<std::string> tokens{"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
    for (int m = 0; m < MarkerTask::num_classes; ++m) tokens.push_back("mk" + std::to_string(m));
    for (int f = 0; f < task.num_fillers; ++f) tokens.push_back("w" + std::to_string(f));
    return Vocab(std::move(tokens));
}

namespace {

std::string csv_field(const std::string& v) {
    if (v.find_first_of(",\"\r\n") == std::string::npos) return v;
    std::string out = "\"";
    for (char c : v) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

}  // namespace

void write_csv(const std::filesystem::path& path, const LabeledDataset& dataset, const std::string& text_field,
               const std::string& label_field) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << csv_field(text_field) << ',' << csv_field(label_field) << '\n';
    for (const auto& ex : dataset.examples) {
        out << csv_field(ex.text) << ',' << csv_field(dataset.label_names.at(static_cast<std::size_t>(ex.label))) << '\n';
    }
    if (!out) throw DataError("failed writing " + path.string());
}

LabeledDataset generate_marker_dataset(const MarkerTask& task, std::size_t n, std::uint64_t seed, Split split) {
    if (task.min_words < 1 || task.max_words < task.min_words || task.num_fillers < 1) {
        throw UsageError("invalid marker task parameters");
    }
    LabeledDataset ds;
    ds.split = split;
    for (int c = 0; c < MarkerTask::num_classes; ++c) ds.label_names.push_back("class_" + std::to_string(c));
    Rng rng(mix_keys({seed, static_cast<std::uint64_t>(split), 0x3a7c3eULL}));
    const auto span_words = static_cast<std::uint64_t>(task.max_words - task.min_words + 1);
    ds.examples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(rng.below(MarkerTask::num_classes));
        const auto words = static_cast<std::size_t>(task.min_words) + rng.below(span_words);
        const auto marker_at = rng.below(words);
        std::string text;
        for (std::size_t w = 0; w < words; ++w) {
            if (w) text.push_back(' ');
            if (w == marker_at) {
                text += "mk" + std::to_string(label);
            } else {
                text += "w" + std::to_string(rng.below(static_cast<std::uint64_t>(task.num_fillers)));
            }
        }
        ds.examples.push_back({std::move(text), label});
    }
    return ds;
}

}  // namespace prunecoder
