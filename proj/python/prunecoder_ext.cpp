#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "prunecoder/checkpoint.hpp"
#include "prunecoder/cli.hpp"
#include "prunecoder/gradcheck.hpp"
#include "prunecoder/model.hpp"
#include "prunecoder/pruning.hpp"
#include "prunecoder/tokenizer.hpp"

namespace py = pybind11;
using namespace prunecoder;

namespace {

py::array_t<float> to_numpy(const TensorF& t) {
    py::array_t<float> a(t.shape());
    std::copy(t.data().begin(), t.data().end(), a.mutable_data());
    return a;
}

IdTensor ids_from(const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw UsageError("expected a 2-d integer array");
    const Shape shape{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))};
    return IdTensor(shape, std::vector<std::int32_t>(a.data(), a.data() + a.size()));
}

py::dict config_dict(const ModelConfig& c) { return py::module_::import("json").attr("loads")(to_json(c).dump()); }

ModelConfig config_from(const py::dict& d) {
    const std::string text = py::module_::import("json").attr("dumps")(d).cast<std::string>();
    return model_config_from_json(nlohmann::json::parse(text));
}

py::dict record_dict(const PruneRecord& r) {
    py::dict d;
    d["source"] = r.source;
    d["strategy"] = to_string(r.spec.strategy);
    d["k"] = r.spec.k;
    d["retained"] = r.retained;
    d["timestamp"] = r.timestamp;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Encoder layer pruning toolkit";

    py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
    auto data_error = py::register_exception<DataError>(m, "DataError", PyExc_IOError);
    py::register_exception<CheckpointError>(m, "CheckpointError", data_error.ptr());
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    m.def("retained_indices", [](int num_layers, const std::string& strategy, int k) {
        return retained_indices(num_layers, PruneSpec{parse_strategy(strategy), k});
    }, py::arg("num_layers"), py::arg("strategy"), py::arg("k"));

    m.def("param_count", [](const py::dict& config) {
        const auto p = param_count(config_from(config));
        py::dict d;
        d["embeddings"] = p.embeddings;
        d["per_layer"] = p.per_layer;
        d["encoder_total"] = p.encoder_total;
        d["pooler"] = p.pooler;
        d["classifier"] = p.classifier;
        d["total"] = p.total;
        return d;
    });

    m.def("tiny_config", [] { return config_dict(tiny_config()); });
    m.def("base_config", [](int vocab_size, int num_classes) { return config_dict(base_config(vocab_size, num_classes)); },
          py::arg("vocab_size") = 30522, py::arg("num_classes") = 2);

    py::class_<Checkpoint>(m, "Model")
        .def_static("load", &load_checkpoint, py::arg("path"))
        .def_static("init", [](const py::dict& config, std::uint64_t seed) {
            Checkpoint ck;
            ck.config = config_from(config);
            ck.weights = init_scratch<float>(ck.config, seed);
            return ck;
        }, py::arg("config"), py::arg("seed") = 42)
        .def("save", [](const Checkpoint& ck, const std::string& path) {
            save_checkpoint(path, ck.weights, ck.config, ck.records, ck.label_names);
        })
        .def("to_bytes", [](const Checkpoint& ck) {
            return py::bytes(encode_checkpoint(ck.weights, ck.config, ck.records, ck.label_names));
        })
        .def_static("from_bytes", [](const py::bytes& b) { return decode_checkpoint(std::string(b)); })
        .def_property_readonly("config", [](const Checkpoint& ck) { return config_dict(ck.config); })
        .def_property_readonly("num_layers", [](const Checkpoint& ck) { return ck.config.num_layers; })
        .def_property_readonly("has_classifier", [](const Checkpoint& ck) { return ck.has_classifier; })
        .def_property_readonly("label_names", [](const Checkpoint& ck) { return ck.label_names; })
        .def_property_readonly("prune_records", [](const Checkpoint& ck) {
            py::list out;
            for (const auto& r : ck.records) out.append(record_dict(r));
            return out;
        })
        .def("tensor_names", [](const Checkpoint& ck) {
            std::vector<std::string> names;
            ck.weights.for_each_tensor([&](const std::string& n, const TensorF&) { names.push_back(n); });
            return names;
        })
        .def("tensor", [](const Checkpoint& ck, const std::string& name) {
            py::object found = py::none();
            ck.weights.for_each_tensor([&](const std::string& n, const TensorF& t) {
                if (n == name) found = to_numpy(t);
            });
            if (found.is_none()) throw py::key_error(name);
            return found;
        })
        .def("fingerprint", [](const Checkpoint& ck) { return model_fingerprint(ck.weights); })
        .def("validate", [](const Checkpoint& ck) { return validate(ck.weights, ck.config); })
        .def("prune", [](const Checkpoint& ck, const std::string& strategy, int k, std::string source,
                         std::string timestamp) {
            auto p = prune_checkpoint(ck.weights, ck.config, PruneSpec{parse_strategy(strategy), k},
                                      source.empty() ? model_fingerprint(ck.weights) : source, timestamp);
            Checkpoint out{std::move(p.weights), p.config, ck.records, ck.has_classifier, ck.label_names};
            out.records.push_back(p.record);
            return out;
        }, py::arg("strategy"), py::arg("k"), py::arg("source") = "", py::arg("timestamp") = "1970-01-01T00:00:00Z")
        .def("forward", [](const Checkpoint& ck, const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& ids,
                           const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& mask) {
            return to_numpy(forward(ck.weights, ck.config, ids_from(ids), ids_from(mask)));
        }, py::arg("input_ids"), py::arg("attention_mask"));

    py::class_<Vocab>(m, "Vocab")
        .def(py::init<std::vector<std::string>>())
        .def_static("load", &Vocab::load)
        .def("save", [](const Vocab& v, const std::string& path) { v.save(path); })
        .def("__len__", &Vocab::size)
        .def("find", &Vocab::find)
        .def("tokens", &Vocab::tokens)
        .def("tokenize", [](const Vocab& v, const std::string& text) { return wordpiece_tokenize(text, v); })
        .def("encode", [](const Vocab& v, const std::string& text, std::size_t max_len) {
            const auto e = encode_example(text, v, max_len);
            return py::make_tuple(e.input_ids, e.attention_mask);
        }, py::arg("text"), py::arg("max_len"));

    m.def("model_grad_check", [](std::uint64_t seed) { return model_grad_check(tiny_config(), seed).max_rel_error; },
          py::arg("seed") = 0);

    m.def("run_cli", [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
    }, py::arg("args"));
}
