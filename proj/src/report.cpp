#include "prunecoder/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "prunecoder/checkpoint.hpp"

namespace prunecoder {

namespace {

using json = nlohmann::json;

struct TableRow {
    std::string group, model, strategy;
    std::map<std::string, const EvalReport*> by_dataset;
    int num_layers = 0;
    std::int64_t total_params = 0;
};

// Rows keyed by (group, model, strategy), groups and rows in first-appearance order.
std::vector<TableRow> collect_rows(std::span<const EvalReport> rows, std::vector<std::string>& datasets) {
    std::vector<std::string> group_order;
    std::vector<TableRow> table;
    for (const auto& r : rows) {
        if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) datasets.push_back(r.dataset);
        const std::string g = effective_group(r);
        if (std::find(group_order.begin(), group_order.end(), g) == group_order.end()) group_order.push_back(g);
        auto it = std::find_if(table.begin(), table.end(), [&](const TableRow& t) {
            return t.group == g && t.model == r.model && t.strategy == r.strategy;
        });
        if (it == table.end()) {
            table.push_back({g, r.model, r.strategy, {}, r.num_layers, r.total_params});
            it = table.end() - 1;
        }
        it->by_dataset[r.dataset] = &r;
    }
    std::stable_sort(table.begin(), table.end(), [&](const TableRow& a, const TableRow& b) {
        const auto ga = std::find(group_order.begin(), group_order.end(), a.group);
        const auto gb = std::find(group_order.begin(), group_order.end(), b.group);
        return ga < gb;
    });
    return table;
}

// Rounded to the printed precision so flagged ties match what the reader sees.
long long hundredths(double v) { return std::llround(v * 100.0); }

struct Renderer {
    ReportFormat format;
    std::ostringstream os;

    void header(const std::vector<std::string>& cols) {
        line(cols);
        if (format == ReportFormat::markdown) {
            std::vector<std::string> rule;
            for (std::size_t i = 0; i < cols.size(); ++i) rule.push_back(i < 2 ? "---" : "---:");
            line(rule);
        }
    }

    void line(const std::vector<std::string>& cells) {
        if (format == ReportFormat::markdown) {
            os << '|';
            for (const auto& c : cells) os << ' ' << c << " |";
        } else {
            for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "\t" : "") << c_escape(cells[i]);
        }
        os << '\n';
    }

    std::string flagged(double value, bool best) const {
        const std::string v = format_percent(value);
        if (!best) return v;
        return format == ReportFormat::markdown ? "**" + v + "**" : v + "*";
    }

    static std::string c_escape(const std::string& s) {
        std::string out = s;
        std::replace(out.begin(), out.end(), '\t', ' ');
        std::replace(out.begin(), out.end(), '\n', ' ');
        return out;
    }
};

// Best printed value of `metric` among rows of `group` for `dataset`.
template <typename Metric>
long long group_best(const std::vector<TableRow>& table, const std::string& group, const std::string& dataset,
                     Metric metric) {
    long long best = std::numeric_limits<long long>::min();
    for (const auto& t : table) {
        if (t.group != group) continue;
        const auto it = t.by_dataset.find(dataset);
        if (it != t.by_dataset.end()) best = std::max(best, hundredths(metric(*it->second)));
    }
    return best;
}

}  // namespace

json to_json(const EvalReport& r) {
    return json{{"model", r.model},
                {"strategy", r.strategy},
                {"dataset", r.dataset},
                {"validation_accuracy", r.validation_accuracy},
                {"test_accuracy", r.test_accuracy},
                {"num_layers", r.num_layers},
                {"total_params", r.total_params},
                {"group", r.group}};
}

EvalReport eval_report_from_json(const json& j) {
    EvalReport r;
    r.model = j.at("model").get<std::string>();
    r.strategy = j.at("strategy").get<std::string>();
    r.dataset = j.at("dataset").get<std::string>();
    r.validation_accuracy = j.at("validation_accuracy").get<double>();
    r.test_accuracy = j.at("test_accuracy").get<double>();
    r.num_layers = j.value("num_layers", 0);
    r.total_params = j.value("total_params", std::int64_t{0});
    r.group = j.value("group", std::string{});
    auto in_range = [](double v) { return v >= 0.0 && v <= 100.0; };
    if (!in_range(r.validation_accuracy) || !in_range(r.test_accuracy)) {
        throw DataError("report row for " + r.model + " has an accuracy outside [0, 100]");
    }
    return r;
}

std::string effective_group(const EvalReport& r) {
    if (!r.group.empty()) return r.group;
    const auto space = r.strategy.rfind(' ');
    if (space != std::string::npos) return r.model + " k=" + r.strategy.substr(space + 1);
    return r.model;
}

ReportFormat parse_report_format(std::string_view name) {
    if (name == "tsv") return ReportFormat::tsv;
    if (name == "markdown" || name == "md") return ReportFormat::markdown;
    throw UsageError("unknown report format '" + std::string(name) + "' (expected tsv or markdown)");
}

std::string format_percent(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", value);
    return buf;
}

std::string comparison_report(std::span<const EvalReport> rows, ReportFormat format) {
    std::vector<std::string> datasets;
    const auto table = collect_rows(rows, datasets);
    Renderer out{format, {}};
    std::vector<std::string> cols{"Model", "Pruning Strategy"};
    cols.insert(cols.end(), datasets.begin(), datasets.end());
    cols.push_back("Layers");
    cols.push_back("Params");
    out.header(cols);
    const auto test_acc = [](const EvalReport& r) { return r.test_accuracy; };
    for (const auto& t : table) {
        std::vector<std::string> cells{t.model, t.strategy};
        for (const auto& d : datasets) {
            const auto it = t.by_dataset.find(d);
            if (it == t.by_dataset.end()) {
                cells.push_back("-");
                continue;
            }
            const double v = it->second->test_accuracy;
            cells.push_back(out.flagged(v, hundredths(v) == group_best(table, t.group, d, test_acc)));
        }
        cells.push_back(std::to_string(t.num_layers));
        cells.push_back(std::to_string(t.total_params));
        out.line(cells);
    }
    return out.os.str();
}

std::string dataset_report(std::span<const EvalReport> rows, const std::string& dataset, ReportFormat format) {
    std::vector<EvalReport> subset;
    std::copy_if(rows.begin(), rows.end(), std::back_inserter(subset),
                 [&](const EvalReport& r) { return r.dataset == dataset; });
    std::vector<std::string> datasets;
    const auto table = collect_rows(subset, datasets);
    Renderer out{format, {}};
    out.header({"Model", "Pruning Strategy", "Validation Accuracy", "Testing Accuracy"});
    const auto val_acc = [](const EvalReport& r) { return r.validation_accuracy; };
    const auto test_acc = [](const EvalReport& r) { return r.test_accuracy; };
    for (const auto& t : table) {
        const EvalReport& r = *t.by_dataset.at(dataset);
        out.line({t.model, t.strategy,
                  out.flagged(r.validation_accuracy,
                              hundredths(r.validation_accuracy) == group_best(table, t.group, dataset, val_acc)),
                  out.flagged(r.test_accuracy,
                              hundredths(r.test_accuracy) == group_best(table, t.group, dataset, test_acc))});
    }
    return out.os.str();
}

void write_reports_jsonl(const std::filesystem::path& path, std::span<const EvalReport> rows) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& r : rows) out << to_json(r).dump() << '\n';
}

std::vector<EvalReport> read_reports_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open report file " + path.string());
    std::vector<EvalReport> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            rows.push_back(eval_report_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad report row (" + e.what() + ")");
        }
    }
    return rows;
}

std::string config_hash(const ModelConfig& model_config, const TrainConfig& train_config) {
    const json j{{"model_config", to_json(model_config)}, {"train_config", to_json(train_config)}};
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(j.dump());
    return os.str();
}

void append_experiment_log(const std::filesystem::path& path, const std::string& command, const json& metrics,
                           const ModelConfig& model_config, const TrainConfig& train_config, const json& extra) {
    json entry = extra.is_object() ? extra : json::object();
    entry["config_hash"] = config_hash(model_config, train_config);
    entry["seed"] = train_config.seed;
    entry["command"] = command;
    entry["metrics"] = metrics;
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw DataError("cannot append to " + path.string());
    out << entry.dump() << '\n';
}

void append_experiment_log(const std::filesystem::path& path, const EvalReport& row, const ModelConfig& model_config,
                           const TrainConfig& train_config) {
    const json metrics{{"validation_accuracy", row.validation_accuracy},
                       {"test_accuracy", row.test_accuracy},
                       {"num_layers", row.num_layers},
                       {"total_params", row.total_params}};
    const json extra{{"model", row.model}, {"strategy", row.strategy}, {"dataset", row.dataset}};
    append_experiment_log(path, "protocol", metrics, model_config, train_config, extra);
}

}  // namespace prunecoder
