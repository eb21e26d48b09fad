#include "prunecoder/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "prunecoder/checkpoint.hpp"
#include "prunecoder/dataset.hpp"
#include "prunecoder/errors.hpp"
#include "prunecoder/gradcheck.hpp"
#include "prunecoder/model.hpp"
#include "prunecoder/ops.hpp"
#include "prunecoder/protocol.hpp"
#include "prunecoder/pruning.hpp"
#include "prunecoder/report.hpp"
#include "prunecoder/rng.hpp"
#include "prunecoder/tokenizer.hpp"
#include "prunecoder/train.hpp"

namespace prunecoder {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr const char* kDefaultTimestamp = "1970-01-01T00:00:00Z";

struct DataFlags {
    std::string vocab;
    std::string text_field = "text";
    std::string label_field = "label";
    std::string format;
    int max_len = 0;
};

void add_data_flags(CLI::App* app, DataFlags& f) {
    app->add_option("--vocab", f.vocab, "Vocabulary file, one token per line (default: vocab.txt beside --in)");
    app->add_option("--text-field", f.text_field, "Column or key holding the text")->capture_default_str();
    app->add_option("--label-field", f.label_field, "Column or key holding the label")->capture_default_str();
    app->add_option("--format", f.format, "Data format; inferred from the extension when omitted")
        ->check(CLI::IsMember({"csv", "jsonl"}));
    app->add_option("--max-len", f.max_len, "Sequence length (default: train config max_len, capped by the model)")
        ->check(CLI::NonNegativeNumber);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Inline JSON when the argument starts with '{', otherwise a path to a JSON file.
json parse_json_arg(const std::string& arg, const std::string& what) {
    if (arg.empty()) return json::object();
    const auto first = arg.find_first_not_of(" \t\r\n");
    const std::string text = first != std::string::npos && arg[first] == '{' ? arg : read_text(arg);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw UsageError("bad " + what + " JSON: " + e.what());
    }
}

TrainConfig resolve_train_config(const std::string& arg, const CLI::Option* seed_opt, std::uint64_t seed) {
    TrainConfig tc = train_config_from_json(parse_json_arg(arg, "train config"));
    if (seed_opt->count() > 0) tc.seed = seed;
    return tc;
}

ModelConfig merge_model_config(ModelConfig base, const json& overrides) {
    if (!overrides.is_object()) throw UsageError("model config must be a JSON object");
    json merged = to_json(base);
    for (const auto& [key, value] : overrides.items()) {
        if (!merged.contains(key)) throw UsageError("unknown model config key '" + key + "'");
        merged[key] = value;
    }
    try {
        base = model_config_from_json(merged);
    } catch (const json::exception& e) {
        throw UsageError(std::string("bad model config value: ") + e.what());
    }
    base.validate();
    return base;
}

fs::path vocab_path(const DataFlags& f, const fs::path& checkpoint) {
    if (!f.vocab.empty()) return f.vocab;
    return checkpoint.parent_path() / "vocab.txt";
}

std::size_t resolve_max_len(const DataFlags& f, const TrainConfig& tc, const ModelConfig& mc) {
    const int requested = f.max_len > 0 ? f.max_len : tc.max_len;
    return static_cast<std::size_t>(std::min(requested, mc.max_positions));
}

LabeledDataset read_split(const fs::path& path, const DataFlags& f, Split split,
                          const std::vector<std::string>* label_names) {
    const DataFormat format = f.format.empty() ? format_from_path(path) : parse_format(f.format);
    return load_dataset(path, format, f.text_field, f.label_field, split, label_names);
}

void check_vocab(const Vocab& vocab, const ModelConfig& mc) {
    if (vocab.size() != static_cast<std::size_t>(mc.vocab_size)) {
        throw DataError("vocabulary has " + std::to_string(vocab.size()) + " tokens but the model expects " +
                        std::to_string(mc.vocab_size));
    }
}

std::string join_ints(const std::vector<int>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s + "]";
}

std::string slug(const std::string& text) {
    std::string out;
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u) || c == '.' || c == '-') {
            out.push_back(static_cast<char>(std::tolower(u)));
        } else if (!out.empty() && out.back() != '-') {
            out.push_back('-');
        }
    }
    while (!out.empty() && out.back() == '-') out.pop_back();
    return out;
}

std::string row_slug(const EvalReport& r) {
    const std::string strategy = r.strategy == kNoPruneLabel ? "baseline" : slug(r.strategy);
    return slug(r.model) + "_" + strategy + "_" + slug(r.dataset);
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << content;
    if (!out) throw DataError("failed writing " + path.string());
}

std::string format_history(const TrainHistory& h, bool markdown) {
    std::ostringstream os;
    os << std::fixed;
    if (markdown) {
        os << "| Epoch | Mean Train Loss | Validation Accuracy |\n| ---: | ---: | ---: |\n";
    } else {
        os << "epoch\tmean_train_loss\tvalidation_accuracy\n";
    }
    for (const auto& e : h.epochs) {
        const std::string acc = format_percent(e.validation_accuracy * 100.0) + (e.epoch == h.best_epoch ? "*" : "");
        if (markdown) {
            os << "| " << e.epoch << " | " << std::setprecision(6) << e.mean_train_loss << " | " << acc << " |\n";
        } else {
            os << e.epoch << '\t' << std::setprecision(6) << e.mean_train_loss << '\t' << acc << '\n';
        }
    }
    return os.str();
}

bool is_markdown_path(const fs::path& p) { return p.extension() == ".md" || p.extension() == ".markdown"; }

void log_config(std::ostream& err, const CLI::App* sub, const json& extra = json::object()) {
    err << "[prunecoder " << sub->get_name() << "] resolved configuration:\n" << sub->config_to_str(true, false);
    if (!extra.empty()) err << "resolved = " << extra.dump() << '\n';
}

template <typename T>
std::vector<T> split_list(const std::string& text, T (*parse)(std::string_view)) {
    std::vector<T> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!item.empty()) out.push_back(parse(item));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

int parse_int(std::string_view s) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(std::string(s), &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError("expected an integer, got '" + std::string(s) + "'");
}

PruneSpec parse_spec(std::string_view s) { return PruneSpec::parse(s); }

void configure_threads() {
    const char* env = std::getenv("PRUNECODER_THREADS");
    if (env == nullptr || *env == '\0') return;
    const int n = parse_int(env);
    if (n < 1) throw UsageError("PRUNECODER_THREADS must be >= 1");
    ops::set_num_threads(static_cast<std::size_t>(n));
}

// ---- subcommands -------------------------------------------------------------------------

struct PruneCmd {
    std::string in, out, strategy, timestamp = kDefaultTimestamp, source_id;
    int k = 0;

    void add(CLI::App& app) {
        auto* sub = app.add_subcommand("prune", "Remove k encoder layers from a checkpoint");
        sub->add_option("--in", in, "Source checkpoint")->required();
        sub->add_option("--strategy", strategy, "Which layers to remove")
            ->required()
            ->check(CLI::IsMember({"top", "middle", "bottom"}, CLI::ignore_case));
        sub->add_option("--k", k, "Number of layers to remove (1 <= k <= L-1)")->required();
        sub->add_option("--out", out, "Output checkpoint")->required();
        sub->add_option("--timestamp", timestamp, "Timestamp recorded in the provenance")->capture_default_str();
        sub->add_option("--source-id", source_id, "Source identifier (default: model fingerprint)");
    }

    int run(const CLI::App* sub, std::ostream& out_s, std::ostream& err) {
        log_config(err, sub);
        const Checkpoint ck = load_checkpoint(in);
        const PruneSpec spec{parse_strategy(strategy), k};
        auto pruned = prune_checkpoint(ck.weights, ck.config, spec,
                                       source_id.empty() ? model_fingerprint(ck.weights) : source_id, timestamp);
        auto records = ck.records;
        records.push_back(pruned.record);
        save_checkpoint(out, pruned.weights, pruned.config, records, ck.label_names);
        const auto size = size_report(ck.config, pruned.config);
        out_s << "pruned " << to_string(spec.strategy) << ' ' << spec.k << ": " << ck.config.num_layers << " -> "
              << pruned.config.num_layers << " layers, retained " << join_ints(pruned.record.retained) << '\n'
              << "encoder parameters -" << format_percent(size.encoder_param_reduction_pct) << "%, total -"
              << format_percent(size.total_param_reduction_pct) << "%\n"
              << "wrote " << out << '\n';
        return exit_ok;
    }
};

struct FinetuneCmd {
    std::string in, train, val, config, out, history, log;
    std::uint64_t seed = 42;
    bool keep_head = false;
    DataFlags data;
    CLI::Option* seed_opt = nullptr;

    void add(CLI::App& app) {
        auto* sub = app.add_subcommand("finetune", "Fine-tune a checkpoint on a labeled dataset");
        sub->add_option("--in", in, "Input checkpoint")->required();
        sub->add_option("--train", train, "Training data (CSV or JSONL)")->required();
        sub->add_option("--val", val, "Validation data (CSV or JSONL)")->required();
        sub->add_option("--config", config, "Training config as inline JSON or a JSON file");
        sub->add_option("--out", out, "Output checkpoint (best validation epoch)")->required();
        sub->add_option("--history", history, "Per-epoch history file (.md for markdown, else TSV)")->required();
        sub->add_option("--log", log, "Experiment log to append to (default: experiments.jsonl beside --out)");
        seed_opt = sub->add_option("--seed", seed, "Seed (overrides the config seed)")->capture_default_str();
        sub->add_flag("--keep-head", keep_head, "Keep the existing classifier instead of re-initializing it");
        add_data_flags(sub, data);
    }

    int run(const CLI::App* sub, std::ostream& out_s, std::ostream& err) {
        const TrainConfig tc = resolve_train_config(config, seed_opt, seed);
        Checkpoint ck = load_checkpoint(in);
        const Vocab vocab = Vocab::load(vocab_path(data, in));
        check_vocab(vocab, ck.config);
        const std::size_t max_len = resolve_max_len(data, tc, ck.config);
        log_config(err, sub, {{"train_config", to_json(tc)}, {"max_len", max_len}});

        const auto train_raw = read_split(train, data, Split::train, nullptr);
        const auto val_raw = read_split(val, data, Split::validation, &train_raw.label_names);
        const auto train_set = encode_dataset(train_raw, vocab, max_len);
        const auto val_set = encode_dataset(val_raw, vocab, max_len);
        const int classes = static_cast<int>(train_raw.label_names.size());
        if (keep_head) {
            if (!ck.has_classifier) throw UsageError("--keep-head: checkpoint has no classifier");
            if (classes != ck.config.num_classes) {
                throw UsageError("--keep-head: checkpoint has " + std::to_string(ck.config.num_classes) +
                                 " classes, data has " + std::to_string(classes));
            }
        } else {
            reset_classifier(ck.weights, ck.config, classes, mix_keys({tc.seed, 0xc1a55}));
        }
        const auto result = finetune(ck.weights, ck.config, train_set, val_set, tc);
        save_checkpoint(out, result.weights, ck.config, ck.records, train_raw.label_names);
        write_file(history, format_history(result.history, is_markdown_path(history)));

        const fs::path log_path = log.empty() ? fs::path(out).parent_path() / "experiments.jsonl" : fs::path(log);
        json epochs = json::array();
        for (const auto& e : result.history.epochs) {
            epochs.push_back({{"epoch", e.epoch},
                              {"mean_train_loss", e.mean_train_loss},
                              {"validation_accuracy", e.validation_accuracy}});
        }
        append_experiment_log(log_path, "finetune",
                              {{"best_epoch", result.history.best_epoch},
                               {"best_validation_accuracy", result.history.best_validation_accuracy},
                               {"epochs", epochs}},
                              ck.config, tc, {{"train", train}, {"validation", val}, {"checkpoint", out}});
        out_s << "best epoch " << result.history.best_epoch << ", validation accuracy "
              << format_percent(result.history.best_validation_accuracy * 100.0) << "%\n"
              << "wrote " << out << " and " << history << '\n';
        return exit_ok;
    }
};

struct EvaluateCmd {
    std::string in, data_path;
    int batch_size = 64;
    DataFlags data;

    void add(CLI::App& app) {
        auto* sub = app.add_subcommand("evaluate", "Accuracy of a fine-tuned checkpoint on a labeled dataset");
        sub->add_option("--in", in, "Checkpoint")->required();
        sub->add_option("--data", data_path, "Labeled data (CSV or JSONL)")->required();
        sub->add_option("--batch-size", batch_size, "Evaluation batch size")->capture_default_str()->check(
            CLI::PositiveNumber);
        add_data_flags(sub, data);
    }

    int run(const CLI::App* sub, std::ostream& out_s, std::ostream& err) {
        const Checkpoint ck = load_checkpoint(in);
        if (!ck.has_classifier) throw UsageError("checkpoint has no classifier; fine-tune it first");
        const Vocab vocab = Vocab::load(vocab_path(data, in));
        check_vocab(vocab, ck.config);
        const std::size_t max_len = resolve_max_len(data, TrainConfig{}, ck.config);
        log_config(err, sub, {{"max_len", max_len}});
        const auto raw = read_split(data_path, data, Split::test, ck.label_names.empty() ? nullptr : &ck.label_names);
        if (raw.label_names.size() > static_cast<std::size_t>(ck.config.num_classes)) {
            throw DataError("data has " + std::to_string(raw.label_names.size()) + " labels but the model has " +
                            std::to_string(ck.config.num_classes) + " classes");
        }
        const auto set = encode_dataset(raw, vocab, max_len);
        const double acc = evaluate(ck.weights, ck.config, set, static_cast<std::size_t>(batch_size));
        const auto correct = static_cast<long long>(std::llround(acc * static_cast<double>(set.size())));
        out_s << "accuracy " << format_percent(acc * 100.0) << "% (" << correct << "/" << set.size() << ")\n";
        return exit_ok;
    }
};

struct ReportCmd {
    std::string runs, format = "markdown", dataset;

    void add(CLI::App& app) {
        auto* sub = app.add_subcommand("report", "Render comparison tables from a protocol run directory");
        sub->add_option("--runs", runs, "Directory holding reports.jsonl")->required();
        sub->add_option("--format", format, "Output format")
            ->capture_default_str()
            ->check(CLI::IsMember({"tsv", "markdown", "md"}));
        sub->add_option("--dataset", dataset, "Show validation and testing accuracy for one dataset");
    }

    int run(const CLI::App* sub, std::ostream& out_s, std::ostream& err) {
        log_config(err, sub);
        const auto rows = read_reports_jsonl(fs::path(runs) / "reports.jsonl");
        const ReportFormat f = parse_report_format(format);
        out_s << (dataset.empty() ? comparison_report(rows, f) : dataset_report(rows, dataset, f));
        return exit_ok;
    }
};

struct InspectCmd {
    std::string in;

    void add(CLI::App& app) {
        auto* sub = app.add_subcommand("inspect", "Print configuration, parameter counts and provenance");
        sub->add_option("--in", in, "Checkpoint")->required();
    }

    int run(const CLI::App* sub, std::ostream& out_s, std::ostream& err) {
        log_config(err, sub);
        const Checkpoint ck = load_checkpoint(in);
        const auto& c = ck.config;
        const auto p = param_count(c);
        out_s << "file: " << in << '\n'
              << "format_version: " << checkpoint_format::version << '\n'
              << "model_config: " << to_json(c).dump() << '\n'
              << "layers: " << c.num_layers << '\n'
              << "parameters:\n"
              << "  embeddings: " << p.embeddings << '\n'
              << "  per_layer: " << p.per_layer << '\n'
              << "  encoder: " << p.encoder_total << '\n'
              << "  pooler: " << p.pooler << '\n'
              << "  classifier: " << p.classifier << '\n'
              << "  total: " << p.total << '\n'
              << "classifier: " << (ck.has_classifier ? "present" : "absent") << '\n';
        if (!ck.label_names.empty()) {
            out_s << "labels:";
            for (const auto& l : ck.label_names) out_s << ' ' << l;
            out_s << '\n';
        }
        if (ck.records.empty()) {
            out_s << "provenance: unpruned\n";
        } else {
            out_s << "provenance:\n";
            for (std::size_t i = 0; i < ck.records.size(); ++i) {
                const auto& r = ck.records[i];
                out_s << "  " << i + 1 << ". " << to_string(r.spec.strategy) << ' ' << r.spec.k << " from " << r.source
                      << " at " << r.timestamp << '\n'
                      << "     retained " << join_ints(r.retained) << '\n';
            }
        }
        out_s << "fingerprint: " << model_fingerprint(ck.weights) << '\n';
        return exit_ok;
    }
};

struct GradcheckCmd {
    std::string config;
    int seeds = 5;
    std::uint64_t seed = 0;
    double step = ModelGradCheckOptions{}.step;
    double tolerance = 1e-4;
    std::size_t batch = 2, seq = 4;

    void add(CLI::App& app) {
        auto* sub = app.add_subcommand("gradcheck", "Finite-difference check of every model gradient in float64");
        sub->add_option("--config", config, "Model config overrides (JSON) applied to the tiny preset");
        sub->add_option("--seeds", seeds, "Number of random points")->capture_default_str()->check(CLI::PositiveNumber);
        sub->add_option("--seed", seed, "First seed")->capture_default_str();
        sub->add_option("--step", step, "Finite-difference step h")->capture_default_str();
        sub->add_option("--tolerance", tolerance, "Maximum relative error")->capture_default_str();
        sub->add_option("--batch", batch, "Batch size")->capture_default_str();
        sub->add_option("--seq", seq, "Sequence length")->capture_default_str();
    }

    int run(const CLI::App* sub, std::ostream& out_s, std::ostream& err) {
        const ModelConfig mc = merge_model_config(tiny_config(), parse_json_arg(config, "model config"));
        log_config(err, sub, {{"model_config", to_json(mc)}});
        ModelGradCheckOptions opt;
        opt.batch = batch;
        opt.seq = seq;
        opt.step = step;
        double worst = 0.0;
        for (int i = 0; i < seeds; ++i) {
            const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
            const auto r = model_grad_check(mc, s, opt);
            out_s << "seed " << s << ": max relative error " << std::scientific << std::setprecision(3)
                  << r.max_rel_error << std::defaultfloat << " over " << r.coordinates << " coordinates (worst "
                  << r.worst_tensor << '[' << r.worst_index << "])\n";
            worst = std::max(worst, r.max_rel_error);
        }
        if (worst >= tolerance) {
            throw NumericError("gradient check failed: max relative error " + std::to_string(worst) + " >= " +
                               std::to_string(tolerance));
        }
        out_s << "ok\n";
        return exit_ok;
    }
};

struct ProtocolCmd {
    std::string in, out, config, specs = "top:6,middle:6,bottom:6", scratch, model_name, timestamp = kDefaultTimestamp,
                                   source_id, log;
    std::vector<std::string> datasets;
    std::uint64_t seed = 42;
    bool no_baseline = false, no_checkpoints = false;
    DataFlags data;
    CLI::Option* seed_opt = nullptr;

    void add(CLI::App& app) {
        auto* sub = app.add_subcommand("protocol", "Prune, fine-tune and evaluate every strategy and write the tables");
        sub->add_option("--in", in, "Base checkpoint")->required();
        sub->add_option("--datasets", datasets, "NAME=TRAIN,VAL,TEST (repeatable)")->required();
        sub->add_option("--specs", specs, "Comma-separated prune specs such as top:6,middle:10")->capture_default_str();
        sub->add_option("--scratch-depths", scratch, "Comma-separated depths of scratch-trained comparison models");
        sub->add_flag("--no-baseline", no_baseline, "Skip the unpruned baseline rows");
        sub->add_option("--config", config, "Training config as inline JSON or a JSON file");
        seed_opt = sub->add_option("--seed", seed, "Seed (overrides the config seed)")->capture_default_str();
        sub->add_option("--out", out, "Output directory")->required();
        sub->add_option("--model-name", model_name, "Name shown in the tables (default: checkpoint file stem)");
        sub->add_option("--timestamp", timestamp, "Timestamp recorded in prune provenance")->capture_default_str();
        sub->add_option("--source-id", source_id, "Source identifier (default: model fingerprint)");
        sub->add_option("--log", log, "Experiment log to append to (default: OUT/experiments.jsonl)");
        sub->add_flag("--no-checkpoints", no_checkpoints, "Do not write fine-tuned checkpoints");
        add_data_flags(sub, data);
    }

    int run(const CLI::App* sub, std::ostream& out_s, std::ostream& err) {
        const TrainConfig tc = resolve_train_config(config, seed_opt, seed);
        const Checkpoint ck = load_checkpoint(in);
        const Vocab vocab = Vocab::load(vocab_path(data, in));
        check_vocab(vocab, ck.config);
        const std::size_t max_len = resolve_max_len(data, tc, ck.config);
        log_config(err, sub, {{"train_config", to_json(tc)}, {"max_len", max_len}});

        ProtocolOptions opt;
        opt.model_name = model_name.empty() ? fs::path(in).stem().string() : model_name;
        opt.specs = split_list<PruneSpec>(specs, &parse_spec);
        opt.scratch_depths = split_list<int>(scratch, &parse_int);
        opt.include_baseline = !no_baseline;
        opt.train = tc;
        opt.source_id = source_id;
        opt.timestamp = timestamp;

        std::vector<DatasetSplits> splits;
        for (const auto& d : datasets) {
            const auto eq = d.find('=');
            if (eq == std::string::npos || eq == 0) throw UsageError("--datasets expects NAME=TRAIN,VAL,TEST, got " + d);
            std::vector<std::string> files;
            std::stringstream ss(d.substr(eq + 1));
            for (std::string f; std::getline(ss, f, ',');) files.push_back(f);
            if (files.size() != 3) throw UsageError("--datasets expects three files for " + d.substr(0, eq));
            const auto tr = read_split(files[0], data, Split::train, nullptr);
            const auto va = read_split(files[1], data, Split::validation, &tr.label_names);
            const auto te = read_split(files[2], data, Split::test, &tr.label_names);
            splits.push_back({d.substr(0, eq), encode_dataset(tr, vocab, max_len), encode_dataset(va, vocab, max_len),
                              encode_dataset(te, vocab, max_len)});
        }

        const fs::path dir = out;
        fs::create_directories(dir / "histories");
        if (!no_checkpoints) fs::create_directories(dir / "checkpoints");
        const fs::path log_path = log.empty() ? dir / "experiments.jsonl" : fs::path(log);
        std::map<std::string, std::vector<std::string>> labels_by_dataset;
        for (const auto& s : splits) labels_by_dataset[s.name] = s.train.label_names;

        auto sink = [&](const ProtocolRun& run) {
            const std::string name = row_slug(run.report);
            write_file(dir / "histories" / (name + ".tsv"), format_history(run.history, false));
            if (!no_checkpoints) {
                save_checkpoint(dir / "checkpoints" / (name + ".prnc"), run.weights, run.config, run.records,
                                labels_by_dataset.at(run.report.dataset));
            }
            append_experiment_log(log_path, run.report, run.config, tc);
            out_s << run.report.model << " | " << run.report.strategy << " | " << run.report.dataset << ": test "
                  << format_percent(run.report.test_accuracy) << "%, validation "
                  << format_percent(run.report.validation_accuracy) << "%\n";
        };
        const auto rows = run_protocol(ck.weights, ck.config, ck.records, splits, opt, sink);

        write_reports_jsonl(dir / "reports.jsonl", rows);
        write_file(dir / "report.md", comparison_report(rows, ReportFormat::markdown));
        write_file(dir / "report.tsv", comparison_report(rows, ReportFormat::tsv));
        for (const auto& s : splits) {
            write_file(dir / ("report_" + slug(s.name) + ".md"), dataset_report(rows, s.name, ReportFormat::markdown));
            write_file(dir / ("report_" + slug(s.name) + ".tsv"), dataset_report(rows, s.name, ReportFormat::tsv));
        }
        out_s << '\n' << comparison_report(rows, ReportFormat::markdown);
        return exit_ok;
    }
};

struct InitCmd {
    std::string preset = "tiny", config, vocab, out;
    std::uint64_t seed = 42;

    void add(CLI::App& app) {
        auto* sub = app.add_subcommand("init", "Write a randomly initialized checkpoint");
        sub->add_option("--preset", preset, "Architecture preset")
            ->capture_default_str()
            ->check(CLI::IsMember({"tiny", "smaller", "small", "base"}));
        sub->add_option("--config", config, "Model config overrides as inline JSON or a JSON file");
        sub->add_option("--vocab", vocab, "Vocabulary whose size sets vocab_size");
        sub->add_option("--seed", seed, "Initialization seed")->capture_default_str();
        sub->add_option("--out", out, "Output checkpoint")->required();
    }

    int run(const CLI::App* sub, std::ostream& out_s, std::ostream& err) {
        std::optional<Vocab> v;
        if (!vocab.empty()) v = Vocab::load(vocab);
        const int vsize = v ? static_cast<int>(v->size()) : 30522;
        ModelConfig base = preset == "tiny"      ? tiny_config()
                           : preset == "smaller" ? smaller_config(vsize, 2)
                           : preset == "small"   ? small_config(vsize, 2)
                                                 : base_config(vsize, 2);
        if (v) base.vocab_size = vsize;
        const ModelConfig mc = merge_model_config(base, parse_json_arg(config, "model config"));
        log_config(err, sub, {{"model_config", to_json(mc)}});
        save_checkpoint(out, init_scratch<float>(mc, seed), mc);
        out_s << "wrote " << out << " (" << mc.num_layers << " layers, " << param_count(mc).total << " parameters)\n";
        return exit_ok;
    }
};

struct SynthCmd {
    std::string out;
    std::size_t train = 2000, val = 500, test = 500;
    std::uint64_t seed = 42;

    void add(CLI::App& app) {
        auto* sub = app.add_subcommand("synth", "Generate the synthetic 4-class marker task and its vocabulary");
        sub->add_option("--out", out, "Output directory")->required();
        sub->add_option("--train", train, "Training examples")->capture_default_str();
        sub->add_option("--val", val, "Validation examples")->capture_default_str();
        sub->add_option("--test", test, "Test examples")->capture_default_str();
        sub->add_option("--seed", seed, "Generator seed")->capture_default_str();
    }

    int run(const CLI::App* sub, std::ostream& out_s, std::ostream& err) {
        log_config(err, sub);
        const fs::path dir = out;
        fs::create_directories(dir);
        const MarkerTask task;
        marker_task_vocab(task).save(dir / "vocab.txt");
        write_csv(dir / "train.csv", generate_marker_dataset(task, train, seed, Split::train));
        write_csv(dir / "val.csv", generate_marker_dataset(task, val, seed, Split::validation));
        write_csv(dir / "test.csv", generate_marker_dataset(task, test, seed, Split::test));
        out_s << "wrote vocab.txt, train.csv, val.csv, test.csv to " << dir.string() << '\n';
        return exit_ok;
    }
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Encoder layer pruning toolkit", "prunecoder"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    PruneCmd prune;
    FinetuneCmd finetune_cmd;
    EvaluateCmd evaluate_cmd;
    ReportCmd report;
    InspectCmd inspect;
    GradcheckCmd gradcheck;
    ProtocolCmd protocol;
    InitCmd init;
    SynthCmd synth;
    prune.add(app);
    finetune_cmd.add(app);
    evaluate_cmd.add(app);
    report.add(app);
    inspect.add(app);
    gradcheck.add(app);
    protocol.add(app);
    init.add(app);
    synth.add(app);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        configure_threads();
        const CLI::App* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        if (name == "prune") return prune.run(sub, out, err);
        if (name == "finetune") return finetune_cmd.run(sub, out, err);
        if (name == "evaluate") return evaluate_cmd.run(sub, out, err);
        if (name == "report") return report.run(sub, out, err);
        if (name == "inspect") return inspect.run(sub, out, err);
        if (name == "gradcheck") return gradcheck.run(sub, out, err);
        if (name == "protocol") return protocol.run(sub, out, err);
        if (name == "init") return init.run(sub, out, err);
        if (name == "synth") return synth.run(sub, out, err);
        err << "error: unknown subcommand " << name << '\n';
        return exit_usage;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return exit_usage;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return exit_numeric;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return exit_data;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << '\n';
        return exit_data;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    }
}

}  // namespace prunecoder
