// Python bindings: tensor kernels, heads, presets, synthetic data and the
// transfer pipeline. Arrays cross the boundary as float64 numpy copies.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rnet/dataset.hpp"
#include "rnet/errors.hpp"
#include "rnet/heads.hpp"
#include "rnet/network.hpp"
#include "rnet/pipeline.hpp"
#include "rnet/presets.hpp"
#include "rnet/report.hpp"
#include "rnet/weights.hpp"

namespace py = pybind11;
using namespace rnet;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    const auto info = a.request();
    Shape shape(info.shape.begin(), info.shape.end());
    if (shape.empty()) shape = {1};
    const auto* p = static_cast<const double*>(info.ptr);
    return Tensor(shape, std::vector<double>(p, p + a.size()));
}

Array to_array(const Tensor& t) {
    Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

// rows of a 2-D array as feature vectors
std::vector<Tensor> rows_of(const Array& a) {
    if (a.ndim() != 2) throw DomainError("expected a 2-D array of samples x features");
    std::vector<Tensor> out;
    const auto n = static_cast<std::size_t>(a.shape(0)), d = static_cast<std::size_t>(a.shape(1));
    const double* p = a.data();
    for (std::size_t i = 0; i < n; ++i) out.push_back(Tensor({d}, std::vector<double>(p + i * d, p + (i + 1) * d)));
    return out;
}

// leading axis of an N-D array as a list of tensors
std::vector<Tensor> items_of(const Array& a) {
    if (a.ndim() < 2) throw DomainError("expected a batch array with a leading sample axis");
    Shape item(a.shape() + 1, a.shape() + a.ndim());
    const std::size_t n = static_cast<std::size_t>(a.shape(0)), size = shape_size(item);
    std::vector<Tensor> out;
    const double* p = a.data();
    for (std::size_t i = 0; i < n; ++i) out.emplace_back(item, std::vector<double>(p + i * size, p + (i + 1) * size));
    return out;
}

Array stack(const std::vector<Tensor>& ts) {
    if (ts.empty()) return Array(std::vector<py::ssize_t>{0});
    std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(ts.size())};
    for (auto d : ts.front().shape()) shape.push_back(static_cast<py::ssize_t>(d));
    Array out(shape);
    double* p = out.mutable_data();
    for (const auto& t : ts) p = std::copy(t.data().begin(), t.data().end(), p);
    return out;
}

py::object json_to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json py_to_json(const py::object& o) {
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

HeadTrainConfig head_config(double lr, std::size_t epochs, double c, double tol, std::size_t max_passes,
                            std::uint64_t seed, bool standardize) {
    HeadTrainConfig cfg;
    cfg.learning_rate = lr;
    cfg.epochs = epochs;
    cfg.c = c;
    cfg.tolerance = tol;
    cfg.max_passes = max_passes;
    cfg.seed = seed;
    cfg.standardize = standardize;
    return cfg;
}

PipelineConfig pipeline_config(const py::object& config) {
    return config.is_none() ? PipelineConfig{} : config_from_json(py_to_json(config));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "CNN feature extractors with softmax and linear SVM heads";

    auto base = py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<SpecError>(m, "SpecError", PyExc_ValueError);
    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<TrainingError>(m, "TrainingError", PyExc_ArithmeticError);

    // tensor kernels
    m.def("conv_valid_1d", [](const Array& x, const Array& u, std::int64_t stride) {
        return to_array(conv_valid_1d(to_tensor(x), to_tensor(u), Stride(stride)));
    }, py::arg("x"), py::arg("u"), py::arg("stride") = 1);
    m.def("conv_valid_2d", [](const Array& input, const Array& kernels, const Array& bias, std::int64_t stride) {
        return to_array(conv_valid_2d(to_tensor(input), to_tensor(kernels), to_tensor(bias), Stride(stride)));
    }, py::arg("input"), py::arg("kernels"), py::arg("bias"), py::arg("stride") = 1,
       "Valid cross-correlation of a CxHxW input with OxCxKhxKw kernels.");
    m.def("relu", [](const Array& x) { return to_array(relu(to_tensor(x))); });
    m.def("max_pool_2d", [](const Array& x, std::size_t window, std::int64_t stride) {
        return to_array(max_pool_2d(to_tensor(x), window, Stride(stride)));
    }, py::arg("input"), py::arg("window") = 2, py::arg("stride") = 2);

    // softmax head
    m.def("softmax_probs", [](const Array& q) { return to_array(softmax_probs(to_tensor(q))); });
    m.def("argmax", [](const Array& v) { return argmax(to_tensor(v).data()); });

    py::class_<SoftmaxHead>(m, "SoftmaxHead")
        .def_property_readonly("weights", [](const SoftmaxHead& h) { return to_array(h.weights); })
        .def_property_readonly("intercept", [](const SoftmaxHead& h) { return to_array(h.intercept); })
        .def_property_readonly("class_count", &SoftmaxHead::class_count)
        .def("logits", [](const SoftmaxHead& h, const Array& x) { return to_array(softmax_logits(h, to_tensor(x))); })
        .def("predict", [](const SoftmaxHead& h, const Array& xs) {
            std::vector<std::size_t> out;
            for (const auto& x : rows_of(xs)) out.push_back(softmax_predict(h, x));
            return out;
        });
    m.def("train_softmax", [](const Array& x, const std::vector<std::size_t>& labels, std::size_t classes, double lr,
                              std::size_t epochs, bool standardize) {
        const HeadTrainConfig cfg = head_config(lr, epochs, 10.0, 1e-3, 0, 0, standardize);
        std::vector<double> history;
        SoftmaxHead head = train_softmax(rows_of(x), labels, classes, cfg, &history);
        return py::make_tuple(head, history);
    }, py::arg("features"), py::arg("labels"), py::arg("class_count"), py::arg("learning_rate") = 0.1,
       py::arg("epochs") = 200, py::arg("standardize") = true,
       "Full-batch gradient descent from zero weights; returns (head, loss history).");

    // svm
    m.def("svm_decision", [](const Array& w, double b, const Array& x) {
        return svm_decision(to_tensor(w), b, to_tensor(x));
    });
    m.def("svm_distance", [](const Array& w, double b, const Array& x) {
        return svm_distance(to_tensor(w), b, to_tensor(x));
    });
    m.def("svm_margin", [](const Array& w, double b, const Array& x, const std::vector<int>& y) {
        return svm_margin(to_tensor(w), b, rows_of(x), y);
    });
    m.def("train_binary_svm", [](const Array& x, const std::vector<int>& y, double c, double tol,
                                 std::size_t max_passes, std::uint64_t seed) {
        const auto sol = train_binary_svm(rows_of(x), y, head_config(0.1, 200, c, tol, max_passes, seed, false));
        py::dict out;
        out["w"] = to_array(sol.machine.w);
        out["b"] = sol.machine.b;
        out["alpha"] = sol.alpha;
        out["passes"] = sol.passes;
        out["max_violation"] = sol.max_violation;
        out["converged"] = sol.converged;
        return out;
    }, py::arg("features"), py::arg("labels"), py::arg("c") = 10.0, py::arg("tolerance") = 1e-3,
       py::arg("max_passes") = 0, py::arg("seed") = 0);

    py::class_<SvmHead>(m, "SvmHead")
        .def_property_readonly("class_count", &SvmHead::class_count)
        .def_readonly("c", &SvmHead::c)
        .def("decisions", [](const SvmHead& h, const Array& x) { return svm_decisions(h, to_tensor(x)); })
        .def("predict", [](const SvmHead& h, const Array& xs) {
            std::vector<std::size_t> out;
            for (const auto& x : rows_of(xs)) out.push_back(svm_predict(h, x));
            return out;
        });
    m.def("train_multiclass_svm", [](const Array& x, const std::vector<std::size_t>& labels, std::size_t classes,
                                     double c, double tol, std::uint64_t seed, bool standardize) {
        return train_multiclass_svm(rows_of(x), labels, classes, head_config(0.1, 200, c, tol, 0, seed, standardize));
    }, py::arg("features"), py::arg("labels"), py::arg("class_count"), py::arg("c") = 10.0,
       py::arg("tolerance") = 1e-3, py::arg("seed") = 0, py::arg("standardize") = true);

    // networks
    m.def("preset_names", &preset_names);
    py::class_<TrainedNetwork>(m, "Network")
        .def_static("from_preset", [](const std::string& name, const Shape& input_shape, std::size_t classes,
                                      std::uint64_t seed) {
            return init_weights(preset(name, input_shape, classes), seed);
        }, py::arg("name"), py::arg("input_shape") = Shape{3, 64, 64}, py::arg("class_count") = 6,
           py::arg("seed") = 0)
        .def_static("load", &load_weights)
        .def("save", [](const TrainedNetwork& net, const std::filesystem::path& p) { save_weights(net, p); })
        .def_property_readonly("input_shape", [](const TrainedNetwork& n) { return n.spec.input_shape; })
        .def_property_readonly("cut_index", [](const TrainedNetwork& n) { return n.spec.cut_index; })
        .def_property_readonly("provenance", [](const TrainedNetwork& n) { return n.provenance; })
        .def_property_readonly("layers", [](const TrainedNetwork& n) {
            std::vector<std::string> names;
            for (const auto& l : n.spec.layers) names.push_back(l.name());
            return names;
        })
        .def_property_readonly("shapes", [](const TrainedNetwork& n) { return infer_shapes(n.spec); })
        .def_property_readonly("spec", [](const TrainedNetwork& n) { return json_to_py(spec_to_json(n.spec)); })
        .def("forward", [](const TrainedNetwork& n, const Array& image) {
            py::list out;
            for (const auto& a : forward(n, to_tensor(image))) out.append(to_array(a));
            return out;
        }, "Activations of every layer for one CxHxW image.")
        .def("features", [](const TrainedNetwork& n, const Array& images) {
            return stack(extract_all(n, items_of(images)));
        }, "Flattened cut-layer activations for an N x C x H x W batch.")
        .def("__eq__", [](const TrainedNetwork& a, const TrainedNetwork& b) { return a == b; });

    // data
    m.def("synthesize_dataset", [](std::size_t classes, std::size_t per_class, std::size_t size, double noise,
                                   std::uint64_t seed) {
        const auto ds = synthesize_dataset({classes, per_class, size, noise, seed});
        return py::make_tuple(stack(ds.images), ds.labels, ds.class_names);
    }, py::arg("classes") = 6, py::arg("per_class") = 50, py::arg("image_size") = 64, py::arg("noise_level") = 0.1,
       py::arg("seed") = 0, "Returns (images N x 3 x S x S, labels, class names).");
    m.def("decode_image", [](py::bytes data) {
        const std::string s = data;
        return to_array(decode_image(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())));
    });
    m.def("load_dataset", [](const std::filesystem::path& root, std::size_t h, std::size_t w) {
        const auto ds = load_dataset(root, h, w);
        return py::make_tuple(stack(ds.images), ds.labels, ds.class_names);
    }, py::arg("root"), py::arg("height") = 64, py::arg("width") = 64);
    m.def("split_half", [](const std::vector<std::size_t>& labels, std::uint64_t seed) {
        LabeledDataset ds;
        std::size_t k = 0;
        for (auto l : labels) k = std::max(k, l + 1);
        for (std::size_t c = 0; c < k; ++c) ds.class_names.push_back(std::to_string(c));
        ds.images.assign(labels.size(), Tensor({1}));
        ds.labels = labels;
        const auto s = split_half(ds, seed);
        return py::make_tuple(s.train_indices, s.test_indices);
    }, py::arg("labels"), py::arg("seed") = 7, "Stratified half split; returns (train indices, test indices).");

    // reporting
    m.def("accuracy", &accuracy, py::arg("correct"), py::arg("total"));
    m.def("format_percent", &format_percent);
    m.def("confusion_matrix", &confusion_matrix, py::arg("predictions"), py::arg("labels"), py::arg("class_count"));
    m.def("validate_report", [](const py::object& report) { return validate_report(py_to_json(report)); });
    m.def("render_table", [](const py::object& report) { return render_table(report_from_json(py_to_json(report))); });

    // pipeline; configs are dicts with the same flat keys as the CLI config file
    m.def("default_config", [] { return json_to_py(config_to_json(PipelineConfig{})); });
    m.def("pretrain", [](const py::object& config) {
        const PipelineConfig cfg = pipeline_config(config);
        py::gil_scoped_release release;
        const auto source = load_or_synthesize(cfg.source, cfg.source_synth, cfg.input_shape);
        return pretrain(cfg, source);
    }, py::arg("config") = py::none(), "Pretrain on the configured source and return the network.");
    m.def("compare", [](const TrainedNetwork& pretrained, const py::object& config) {
        PipelineConfig cfg = pipeline_config(config);
        cfg.input_shape = pretrained.spec.input_shape;
        CompareResult result;
        {
            py::gil_scoped_release release;
            const auto target = load_or_synthesize(cfg.target, cfg.target_synth, cfg.input_shape);
            result = finetune_and_compare(cfg, pretrained, target);
        }
        py::dict out;
        out["report"] = json_to_py(report_to_json(result.report));
        out["extractor"] = result.pretrained.extractor;
        out["softmax"] = result.pretrained.softmax;
        out["svm"] = result.pretrained.svm;
        out["train_features"] = stack(result.pretrained.train_features);
        out["test_features"] = stack(result.pretrained.test_features);
        return out;
    }, py::arg("pretrained"), py::arg("config") = py::none(),
       "Fine-tune, extract features once and score both heads on the held-out half.");
}
