#include "prunecoder/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <map>
#include <sstream>

namespace prunecoder {

namespace {

using json = nlohmann::json;
using Kind = CheckpointError::Kind;

void put_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64_le(std::string_view in) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[i])) << (8 * i);
    return v;
}

void put_f32_le(std::string& out, float f) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float get_f32_le(const char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return std::bit_cast<float>(bits);
}

std::size_t align_up(std::size_t n) {
    const std::size_t a = checkpoint_format::alignment;
    return (n + a - 1) / a * a;
}

template <typename F>
auto header_field(F&& f, const std::string& what) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw CheckpointError(Kind::malformed_header, "checkpoint header: bad " + what + " (" + e.what() + ")");
    }
}

}  // namespace

json to_json(const ModelConfig& c) {
    return json{{"num_layers", c.num_layers},
                {"hidden_size", c.hidden_size},
                {"num_heads", c.num_heads},
                {"intermediate_size", c.intermediate_size},
                {"vocab_size", c.vocab_size},
                {"max_positions", c.max_positions},
                {"type_vocab_size", c.type_vocab_size},
                {"num_classes", c.num_classes},
                {"layer_norm_eps", c.layer_norm_eps},
                {"dropout_prob", c.dropout_prob}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.num_layers = j.at("num_layers").get<int>();
    c.hidden_size = j.at("hidden_size").get<int>();
    c.num_heads = j.at("num_heads").get<int>();
    c.intermediate_size = j.at("intermediate_size").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_positions = j.at("max_positions").get<int>();
    c.type_vocab_size = j.value("type_vocab_size", 2);
    c.num_classes = j.value("num_classes", 2);
    c.layer_norm_eps = j.value("layer_norm_eps", 1e-12);
    c.dropout_prob = j.value("dropout_prob", 0.0);
    return c;
}

json to_json(const PruneRecord& r) {
    return json{{"source", r.source},
                {"strategy", to_string(r.spec.strategy)},
                {"k", r.spec.k},
                {"retained", r.retained},
                {"timestamp", r.timestamp}};
}

PruneRecord prune_record_from_json(const json& j) {
    PruneRecord r;
    r.source = j.at("source").get<std::string>();
    r.spec.strategy = parse_strategy(j.at("strategy").get<std::string>());
    r.spec.k = j.at("k").get<int>();
    r.retained = j.at("retained").get<std::vector<int>>();
    r.timestamp = j.at("timestamp").get<std::string>();
    return r;
}

std::string encode_checkpoint(const ModelWeights<float>& weights, const ModelConfig& config,
                              const std::vector<PruneRecord>& records, const std::vector<std::string>& label_names) {
    const auto violations = validate(weights, config);
    if (!violations.empty()) {
        throw CheckpointError(Kind::invalid_weights, "refusing to save invalid weights: " + violations.front());
    }
    if (!label_names.empty() && label_names.size() != static_cast<std::size_t>(config.num_classes)) {
        throw CheckpointError(Kind::invalid_weights, "label_names has " + std::to_string(label_names.size()) +
                                                         " entries for " + std::to_string(config.num_classes) +
                                                         " classes");
    }
    json tensors = json::object();
    std::size_t offset = 0;
    weights.for_each_tensor([&](const std::string& name, const TensorF& t) {
        offset = align_up(offset);
        const std::size_t len = t.size() * sizeof(float);
        tensors[name] = json{{"dtype", "f32"}, {"shape", t.shape()}, {"byte_offset", offset}, {"byte_length", len}};
        offset += len;
    });
    json records_json = json::array();
    for (const auto& r : records) records_json.push_back(to_json(r));
    json header{{"format_version", checkpoint_format::version},
                {"model_config", to_json(config)},
                {"prune_records", records_json},
                {"tensors", tensors}};
    if (!label_names.empty()) header["label_names"] = label_names;

    std::string header_text = header.dump();
    const std::size_t prefix = checkpoint_format::magic.size() + 8;
    header_text.append(align_up(prefix + header_text.size()) - prefix - header_text.size(), ' ');

    std::string out;
    out.reserve(prefix + header_text.size() + offset);
    out.append(checkpoint_format::magic);
    put_u64_le(out, header_text.size());
    out.append(header_text);
    const std::size_t payload_start = out.size();
    weights.for_each_tensor([&](const std::string&, const TensorF& t) {
        out.resize(payload_start + align_up(out.size() - payload_start), '\0');
        for (float f : t.data()) put_f32_le(out, f);
    });
    return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
    const std::size_t prefix = checkpoint_format::magic.size() + 8;
    if (bytes.size() < checkpoint_format::magic.size() ||
        bytes.substr(0, checkpoint_format::magic.size()) != checkpoint_format::magic) {
        throw CheckpointError(Kind::bad_magic, "not a checkpoint file: bad magic bytes");
    }
    if (bytes.size() < prefix) throw CheckpointError(Kind::truncated, "checkpoint truncated inside the header length");
    const std::uint64_t header_len = get_u64_le(bytes.substr(checkpoint_format::magic.size(), 8));
    if (header_len > bytes.size() - prefix) {
        throw CheckpointError(Kind::truncated, "header length " + std::to_string(header_len) + " exceeds file");
    }
    json header;
    try {
        header = json::parse(bytes.substr(prefix, header_len));
    } catch (const json::parse_error& e) {
        throw CheckpointError(Kind::malformed_header, std::string("checkpoint header is not valid JSON: ") + e.what());
    }
    if (!header.is_object()) throw CheckpointError(Kind::malformed_header, "checkpoint header is not a JSON object");
    const int version = header_field([&] { return header.at("format_version").get<int>(); }, "format_version");
    if (version != checkpoint_format::version) {
        throw CheckpointError(Kind::unsupported_version,
                              "unsupported checkpoint format_version " + std::to_string(version));
    }

    Checkpoint ck;
    ck.config = header_field([&] { return model_config_from_json(header.at("model_config")); }, "model_config");
    try {
        ck.config.validate();
    } catch (const UsageError& e) {
        throw CheckpointError(Kind::malformed_header, std::string("checkpoint model_config: ") + e.what());
    }
    ck.records = header_field(
        [&] {
            std::vector<PruneRecord> out;
            for (const auto& r : header.value("prune_records", json::array())) out.push_back(prune_record_from_json(r));
            return out;
        },
        "prune_records");
    if (header.contains("label_names")) {
        ck.label_names = header_field([&] { return header.at("label_names").get<std::vector<std::string>>(); },
                                      "label_names");
        if (ck.label_names.size() != static_cast<std::size_t>(ck.config.num_classes)) {
            throw CheckpointError(Kind::malformed_header, "checkpoint label_names does not match num_classes");
        }
    }
    const json table = header_field([&] { return header.at("tensors"); }, "tensors");
    if (!table.is_object()) throw CheckpointError(Kind::malformed_header, "checkpoint tensor table is not an object");

    const std::size_t payload_start = prefix + header_len;
    const std::size_t payload_size = bytes.size() - payload_start;
    ck.weights = zeros_like_config<float>(ck.config);

    std::map<std::string, bool> expected;
    ck.weights.for_each_tensor([&](const std::string& name, const TensorF&) { expected[name] = false; });
    for (const auto& [name, entry] : table.items()) {
        if (!expected.contains(name)) {
            throw CheckpointError(Kind::malformed_header, "unexpected tensor '" + name + "' for this model_config", name);
        }
    }
    const bool has_cls_w = table.contains("classifier.weight");
    const bool has_cls_b = table.contains("classifier.bias");
    ck.has_classifier = has_cls_w || has_cls_b;

    struct Extent {
        std::size_t offset, length;
        std::string name;
    };
    std::vector<Extent> extents;
    ck.weights.for_each_tensor([&](const std::string& name, TensorF& t) {
        if (!table.contains(name)) {
            if (!ck.has_classifier && (name == "classifier.weight" || name == "classifier.bias")) return;
            throw CheckpointError(Kind::missing_tensor, "checkpoint is missing tensor '" + name + "'", name);
        }
        const json& e = table.at(name);
        const auto dtype = header_field([&] { return e.at("dtype").get<std::string>(); }, name + ".dtype");
        if (dtype != "f32") {
            throw CheckpointError(Kind::malformed_header, "tensor '" + name + "' has unsupported dtype " + dtype, name);
        }
        const auto shape = header_field([&] { return e.at("shape").get<Shape>(); }, name + ".shape");
        if (shape != t.shape()) {
            throw CheckpointError(Kind::shape_mismatch,
                                  "tensor '" + name + "' has shape " + shape_string(shape) + ", config implies " +
                                      shape_string(t.shape()),
                                  name);
        }
        const auto offset = header_field([&] { return e.at("byte_offset").get<std::size_t>(); }, name + ".byte_offset");
        const auto length = header_field([&] { return e.at("byte_length").get<std::size_t>(); }, name + ".byte_length");
        if (length != t.size() * sizeof(float)) {
            throw CheckpointError(Kind::shape_mismatch,
                                  "tensor '" + name + "' byte_length " + std::to_string(length) + " does not match shape",
                                  name);
        }
        if (offset % checkpoint_format::alignment != 0) {
            throw CheckpointError(Kind::malformed_header, "tensor '" + name + "' byte_offset is not 64-byte aligned", name);
        }
        if (offset > payload_size || length > payload_size - offset) {
            throw CheckpointError(Kind::truncated, "tensor '" + name + "' byte_length exceeds file", name);
        }
        const char* p = bytes.data() + payload_start + offset;
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = get_f32_le(p + 4 * i);
        extents.push_back({offset, length, name});
    });
    std::sort(extents.begin(), extents.end(), [](const Extent& a, const Extent& b) { return a.offset < b.offset; });
    for (std::size_t i = 1; i < extents.size(); ++i) {
        if (extents[i].offset < extents[i - 1].offset + extents[i - 1].length) {
            throw CheckpointError(Kind::malformed_header,
                                  "tensors '" + extents[i - 1].name + "' and '" + extents[i].name + "' overlap",
                                  extents[i].name);
        }
    }
    const auto violations = validate(ck.weights, ck.config);
    if (!violations.empty()) throw CheckpointError(Kind::invalid_weights, "invalid checkpoint: " + violations.front());
    for (const auto& r : ck.records) {
        if (r.retained.empty() || !std::is_sorted(r.retained.begin(), r.retained.end(), std::less_equal<>{})) {
            throw CheckpointError(Kind::malformed_header, "prune record retained indices must be strictly increasing");
        }
    }
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelWeights<float>& weights, const ModelConfig& config,
                     const std::vector<PruneRecord>& records, const std::vector<std::string>& label_names) {
    const std::string bytes = encode_checkpoint(weights, config, records, label_names);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(Kind::io, "cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(Kind::io, "failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(Kind::io, "cannot open checkpoint " + path.string());
    const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    try {
        return decode_checkpoint(bytes);
    } catch (const CheckpointError& e) {
        throw CheckpointError(e.kind(), path.string() + ": " + e.what(), e.tensor());
    }
}

template <typename T>
std::vector<std::string> validate(const ModelWeights<T>& weights, const ModelConfig& config) {
    std::vector<std::string> violations;
    try {
        config.validate();
    } catch (const UsageError& e) {
        violations.emplace_back(e.what());
        return violations;
    }
    if (weights.layers.size() != static_cast<std::size_t>(config.num_layers)) {
        violations.push_back("model has " + std::to_string(weights.layers.size()) + " encoder layers, config expects " +
                             std::to_string(config.num_layers));
    }
    ModelConfig common = config;
    common.num_layers = static_cast<int>(std::min<std::size_t>(weights.layers.size(), config.num_layers));
    std::map<std::string, Shape> expected;
    if (common.num_layers >= 1) {
        for (auto& s : tensor_specs(common)) expected.emplace(std::move(s.name), std::move(s.shape));
    } else {
        ModelConfig one = config;
        one.num_layers = 1;
        for (auto& s : tensor_specs(one)) {
            if (s.name.rfind("encoder.", 0) != 0) expected.emplace(std::move(s.name), std::move(s.shape));
        }
    }
    weights.for_each_tensor([&](const std::string& name, const Tensor<T>& t) {
        const auto it = expected.find(name);
        if (it == expected.end()) return;  // belongs to a surplus layer, already reported
        if (t.shape() != it->second) {
            violations.push_back("tensor '" + name + "' has shape " + shape_string(t.shape()) + ", expected " +
                                 shape_string(it->second));
        } else if (!t.all_finite()) {
            violations.push_back("tensor '" + name + "' contains non-finite values");
        }
    });
    return violations;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string model_fingerprint(const ModelWeights<float>& weights) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    weights.for_each_tensor([&](const std::string& name, const TensorF& t) {
        h = fnv1a64(name, h);
        h = fnv1a64(shape_string(t.shape()), h);
        std::string bytes;
        bytes.reserve(t.size() * 4);
        for (float f : t.data()) put_f32_le(bytes, f);
        h = fnv1a64(bytes, h);
    });
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

template std::vector<std::string> validate(const ModelWeights<float>&, const ModelConfig&);
template std::vector<std::string> validate(const ModelWeights<double>&, const ModelConfig&);

}  // namespace prunecoder
