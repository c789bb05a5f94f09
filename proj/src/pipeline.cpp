#include "rnet/pipeline.hpp"

#include <bit>
#include <cstdio>
#include <fstream>

#include "rnet/errors.hpp"
#include "rnet/presets.hpp"
#include "rnet/rng.hpp"
#include "rnet/weights.hpp"

namespace rnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Stream : std::uint64_t { kInit = 1, kPretrain = 2, kFinetune = 3, kHeads = 4, kRandomInit = 5 };

std::uint64_t stage_seed(const PipelineConfig& config, Stream stream) { return derive_seed(config.seed, stream); }

template <class T>
void read_key(const json& j, const char* key, T& into) {
    if (j.contains(key) && !j.at(key).is_null()) into = j.at(key).get<T>();
}

// null means unset
template <class T>
void read_optional(const json& j, const char* key, std::optional<T>& into) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    into = v.is_null() ? std::nullopt : std::optional<T>(v.get<T>());
}

}  // namespace

PipelineConfig config_from_json(const json& j, PipelineConfig base) {
    static const std::vector<std::string> known{
        "seed",        "preset",    "cut_index",      "freeze_prefix", "input_size",     "epochs",
        "lr",          "batch_size", "pretrain_epochs", "pretrain_lr",  "head_lr",        "head_epochs",
        "svm_c",       "svm_tol",   "svm_max_passes", "split_seed",    "source",         "target",
        "weights",     "out",       "random_init",    "source_seed",   "target_seed",    "source_noise",
        "target_noise", "per_class"};
    if (!j.is_object()) throw DataError("config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw DataError("unknown config key '" + key + "'");
        }
    }
    try {
        read_key(j, "seed", base.seed);
        read_key(j, "preset", base.preset);
        read_optional(j, "cut_index", base.cut_index);
        read_optional(j, "freeze_prefix", base.freeze_prefix);
        if (j.contains("input_size")) {
            const auto n = j.at("input_size").get<std::size_t>();
            base.input_shape = {3, n, n};
            base.source_synth.image_size = base.target_synth.image_size = n;
        }
        read_key(j, "epochs", base.finetune.epochs);
        read_optional(j, "lr", base.finetune_lr);
        read_key(j, "batch_size", base.finetune.batch_size);
        base.pretrain.batch_size = base.finetune.batch_size;
        read_key(j, "pretrain_epochs", base.pretrain.epochs);
        read_optional(j, "pretrain_lr", base.pretrain_lr);
        read_key(j, "head_lr", base.heads.learning_rate);
        read_key(j, "head_epochs", base.heads.epochs);
        read_key(j, "svm_c", base.heads.c);
        read_key(j, "svm_tol", base.heads.tolerance);
        read_key(j, "svm_max_passes", base.heads.max_passes);
        read_key(j, "split_seed", base.split_seed);
        read_key(j, "random_init", base.random_init);
        read_key(j, "source_seed", base.source_synth.seed);
        read_key(j, "target_seed", base.target_synth.seed);
        read_key(j, "source_noise", base.source_synth.noise_level);
        read_key(j, "target_noise", base.target_synth.noise_level);
        if (j.contains("per_class")) {
            base.source_synth.per_class = base.target_synth.per_class = j.at("per_class").get<std::size_t>();
        }
        if (j.contains("source")) base.source = j.at("source").get<std::string>();
        if (j.contains("target")) base.target = j.at("target").get<std::string>();
        if (j.contains("weights")) base.weights = j.at("weights").get<std::string>();
        if (j.contains("out")) base.report_out = j.at("out").get<std::string>();
    } catch (const json::exception& e) {
        throw DataError(std::string("config value has the wrong type: ") + e.what());
    }
    return base;
}

json config_to_json(const PipelineConfig& c) {
    json j{{"seed", c.seed},
           {"preset", c.preset},
           {"input_size", c.input_shape.at(1)},
           {"epochs", c.finetune.epochs},
           {"lr", c.finetune_lr ? json(*c.finetune_lr) : json(nullptr)},
           {"batch_size", c.finetune.batch_size},
           {"pretrain_epochs", c.pretrain.epochs},
           {"pretrain_lr", c.pretrain_lr ? json(*c.pretrain_lr) : json(nullptr)},
           {"head_lr", c.heads.learning_rate},
           {"head_epochs", c.heads.epochs},
           {"svm_c", c.heads.c},
           {"svm_tol", c.heads.tolerance},
           {"svm_max_passes", c.heads.max_passes},
           {"split_seed", c.split_seed},
           {"random_init", c.random_init},
           {"source_seed", c.source_synth.seed},
           {"target_seed", c.target_synth.seed},
           {"source_noise", c.source_synth.noise_level},
           {"target_noise", c.target_synth.noise_level},
           {"per_class", c.target_synth.per_class},
           {"source", c.source.string()},
           {"target", c.target.string()},
           {"weights", c.weights.string()},
           {"out", c.report_out.string()}};
    j["cut_index"] = c.cut_index ? json(*c.cut_index) : json(nullptr);
    j["freeze_prefix"] = c.freeze_prefix ? json(*c.freeze_prefix) : json(nullptr);
    return j;
}

NetworkSpec pipeline_spec(const PipelineConfig& config, std::size_t class_count) {
    NetworkSpec spec = preset(config.preset, config.input_shape, class_count);
    if (config.cut_index) {
        spec.cut_index = *config.cut_index;
        validate(spec);
    }
    return spec;
}

std::size_t resolved_freeze_prefix(const PipelineConfig& config, const NetworkSpec& spec) {
    if (config.freeze_prefix) {
        if (*config.freeze_prefix > spec.layers.size()) throw DomainError("freeze_prefix exceeds layer count");
        return *config.freeze_prefix;
    }
    for (std::size_t i = spec.cut_index + 1; i-- > 0;) {
        if (spec.layers[i].is<Dense>()) return i;
    }
    return spec.layers.size();
}

LabeledDataset load_or_synthesize(const fs::path& path, const SynthConfig& synth, const Shape& input_shape) {
    if (input_shape.size() != 3 || input_shape[0] != 3) {
        throw DomainError("network input must be 3xHxW, got " + shape_string(input_shape));
    }
    const std::size_t h = input_shape[1], w = input_shape[2];
    if (path.empty()) {
        SynthConfig cfg = synth;
        cfg.image_size = h;
        LabeledDataset ds = synthesize_dataset(cfg);
        if (w != h) {
            for (auto& img : ds.images) img = resize_bilinear(img, h, w);
        }
        return ds;
    }
    if (!fs::exists(path)) throw DataError("dataset path " + path.string() + " does not exist");
    if (fs::is_directory(path)) return load_dataset(path, h, w);
    LabeledDataset ds = load_dataset_container(path);
    for (auto& img : ds.images) {
        if (img.shape() != input_shape) img = resize_bilinear(img, h, w);
    }
    return ds;
}

std::optional<std::string> preset_from_provenance(const std::string& provenance) {
    const std::string key = "preset=";
    const auto at = provenance.find(key);
    if (at == std::string::npos) return std::nullopt;
    const auto start = at + key.size();
    return provenance.substr(start, provenance.find(';', start) - start);
}

TrainedNetwork pretrain(const PipelineConfig& config, const LabeledDataset& source, std::ostream* log) {
    source.check();
    const NetworkSpec spec = pipeline_spec(config, source.class_count());
    TrainConfig tc = config.pretrain;
    tc.learning_rate = config.pretrain_lr.value_or(preset_learning_rate(config.preset));
    tc.seed = stage_seed(config, kPretrain);
    auto on_epoch = [&](const EpochStats& s) {
        if (!log) return;
        char buf[128];
        std::snprintf(buf, sizeof buf, "pretrain epoch %zu/%zu loss %.6f acc %.4f\n", s.epoch, tc.epochs,
                      s.mean_loss, s.accuracy);
        *log << buf << std::flush;
    };
    TrainResult result = sgd_train(init_weights(spec, stage_seed(config, kInit)), source, tc, std::nullopt, on_epoch);
    result.network.provenance = "pretrain:preset=" + config.preset + ";source=" + source.provenance +
                                ";epochs=" + std::to_string(tc.epochs) + ";seed=" + std::to_string(config.seed);
    return std::move(result.network);
}

TrainedNetwork run_pretrain(const PipelineConfig& config, std::ostream* log) {
    if (config.weights.empty()) throw DataError("no weights output path configured");
    const LabeledDataset source = load_or_synthesize(config.source, config.source_synth, config.input_shape);
    TrainedNetwork net = pretrain(config, source, log);
    save_weights(net, config.weights);
    return net;
}

std::vector<Tensor> extract_all(const TrainedNetwork& net, std::span<const Tensor> images) {
    std::vector<Tensor> out;
    out.reserve(images.size());
    for (const auto& img : images) out.push_back(extract_features(net, img));
    return out;
}

std::string feature_checksum(std::span<const Tensor> train, std::span<const Tensor> test) {
    std::vector<std::uint8_t> bytes;
    auto push = [&](std::span<const Tensor> set) {
        for (const auto& t : set) {
            for (double v : t.data()) {
                const auto bits = std::bit_cast<std::uint64_t>(v);
                for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
            }
        }
    };
    push(train);
    push(test);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08x", crc32_of(bytes));
    return buf;
}

namespace {

ReportRow score(const std::string& model, const std::string& head, const std::string& init, std::size_t epochs,
                std::span<const std::size_t> predictions, const LabeledDataset& test, const std::string& checksum) {
    ReportRow row;
    row.model = model;
    row.head = head;
    row.init = init;
    row.epochs = epochs;
    row.confusion = confusion_matrix(predictions, test.labels, test.class_count());
    std::size_t correct = 0;
    for (std::size_t c = 0; c < row.confusion.size(); ++c) correct += row.confusion[c][c];
    row.accuracy_pct = accuracy(correct, test.size());
    row.per_class = per_class_metrics(row.confusion, test.class_names);
    row.feature_checksum = checksum;
    return row;
}

}  // namespace

HeadComparison compare_heads(const PipelineConfig& config, const TrainedNetwork& initial, const SplitPair& split,
                             const std::string& init_tag, std::ostream* log) {
    const NetworkSpec& spec = initial.spec;
    const std::size_t freeze = resolved_freeze_prefix(config, spec);
    HeadComparison out{initial, {}, {}, {}, {}, {}, {}};

    if (config.finetune.epochs > 0 && freeze <= spec.cut_index) {
        TrainConfig tc = config.finetune;
        tc.learning_rate = config.finetune_lr.value_or(preset_learning_rate(config.preset));
        tc.seed = stage_seed(config, kFinetune);
        tc.freeze_prefix = freeze;
        auto on_epoch = [&](const EpochStats& s) {
            if (!log) return;
            char buf[160];
            std::snprintf(buf, sizeof buf, "finetune[%s] epoch %zu/%zu loss %.6f acc %.4f\n", init_tag.c_str(),
                          s.epoch, tc.epochs, s.mean_loss, s.accuracy);
            *log << buf << std::flush;
        };
        out.extractor = sgd_train(initial, split.train, tc, std::nullopt, on_epoch).network;
    }

    out.train_features = extract_all(out.extractor, split.train.images);
    out.test_features = extract_all(out.extractor, split.test.images);
    out.checksum = feature_checksum(out.train_features, out.test_features);

    HeadTrainConfig hc = config.heads;
    hc.seed = stage_seed(config, kHeads);
    const std::size_t k = split.train.class_count();
    const std::vector<Tensor>& shared = out.train_features;
    out.softmax = train_softmax(shared, split.train.labels, k, hc);
    out.svm = train_multiclass_svm(shared, split.train.labels, k, hc);
    if (feature_checksum(shared, out.test_features) != out.checksum) {
        throw TrainingError("feature matrix changed between head fits");
    }

    std::vector<std::size_t> soft_pred, svm_pred;
    for (const auto& x : out.test_features) {
        soft_pred.push_back(softmax_predict(out.softmax, x));
        svm_pred.push_back(svm_predict(out.svm, x));
    }
    const std::string model = init_tag == "pretrained" ? config.preset : config.preset + "(random-init)";
    out.rows.push_back(
        score(model, "softmax", init_tag, config.finetune.epochs, soft_pred, split.test, out.checksum));
    out.rows.push_back(score(model, "svm", init_tag, config.finetune.epochs, svm_pred, split.test, out.checksum));
    if (log) {
        *log << "heads[" << init_tag << "] softmax " << format_percent(out.rows[0].accuracy_pct) << "% svm "
             << format_percent(out.rows[1].accuracy_pct) << "% features crc32 " << out.checksum << "\n";
    }
    return out;
}

CompareResult finetune_and_compare(const PipelineConfig& config, const TrainedNetwork& pretrained,
                                   const LabeledDataset& target, std::ostream* log) {
    target.check();
    TrainedNetwork initial = pretrained;
    if (config.cut_index) {
        initial.spec.cut_index = *config.cut_index;
        validate(initial.spec);
    }
    if (target.images[0].shape() != initial.spec.input_shape) {
        throw DataError("target images are " + shape_string(target.images[0].shape()) + " but the network expects " +
                        shape_string(initial.spec.input_shape));
    }
    const SplitPair split = split_half(target, config.split_seed);
    if (log) {
        *log << "split seed " << config.split_seed << ": train " << split.train.size() << ", test "
             << split.test.size() << "\n";
    }

    CompareResult result{{}, compare_heads(config, initial, split, "pretrained", log), std::nullopt};
    EvalReport& report = result.report;
    report.split_seed = config.split_seed;
    report.train_count = split.train.size();
    report.test_count = split.test.size();
    report.feature_checksum = result.pretrained.checksum;
    report.rows = result.pretrained.rows;
    if (config.random_init) {
        TrainedNetwork fresh = init_weights(initial.spec, stage_seed(config, kRandomInit));
        result.random = compare_heads(config, fresh, split, "random", log);
        report.rows.insert(report.rows.end(), result.random->rows.begin(), result.random->rows.end());
    }
    return result;
}

CompareResult run_finetune_and_compare(const PipelineConfig& config, std::ostream* log) {
    if (config.weights.empty()) throw DataError("no weights path configured");
    const TrainedNetwork pretrained = load_weights(config.weights);
    PipelineConfig effective = config;
    effective.input_shape = pretrained.spec.input_shape;
    const auto recorded = preset_from_provenance(pretrained.provenance);
    if (effective.preset.empty()) {
        effective.preset = recorded.value_or("custom");
    } else if (recorded && *recorded != effective.preset) {
        throw DomainError("weights in " + config.weights.string() + " were pretrained as " + *recorded +
                          ", not " + effective.preset);
    }
    const LabeledDataset target = load_or_synthesize(config.target, config.target_synth, effective.input_shape);
    CompareResult result = finetune_and_compare(effective, pretrained, target, log);
    if (!config.report_out.empty()) {
        std::ofstream out(config.report_out, std::ios::binary | std::ios::trunc);
        out << report_to_json(result.report).dump(2) << "\n";
        if (!out) throw DataError("cannot write report " + config.report_out.string());
    }
    return result;
}

namespace {

Tensor stack(std::span<const Tensor> items) {
    if (items.empty()) throw DomainError("nothing to stack");
    Shape shape{items.size()};
    shape.insert(shape.end(), items[0].shape().begin(), items[0].shape().end());
    std::vector<double> data;
    data.reserve(shape_size(shape));
    for (const auto& t : items) {
        if (t.shape() != items[0].shape()) throw DomainError("cannot stack differently shaped tensors");
        data.insert(data.end(), t.data().begin(), t.data().end());
    }
    return Tensor(std::move(shape), std::move(data));
}

std::vector<Tensor> unstack(const Tensor& t) {
    Shape inner(t.shape().begin() + 1, t.shape().end());
    if (inner.empty()) inner = {1};
    const std::size_t n = t.dim(0), len = shape_size(inner);
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < n; ++i) {
        auto first = t.data().begin() + static_cast<std::ptrdiff_t>(i * len);
        out.emplace_back(inner, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(len)));
    }
    return out;
}

Tensor labels_tensor(std::span<const std::size_t> labels) {
    std::vector<double> v(labels.begin(), labels.end());
    return Tensor::vector(std::move(v));
}

std::vector<std::size_t> labels_from(const Tensor& t, std::size_t classes) {
    std::vector<std::size_t> out;
    for (double v : t.data()) {
        if (v < 0 || v != std::floor(v) || v >= static_cast<double>(classes)) {
            throw FormatError("label tensor holds an invalid class index");
        }
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

}  // namespace

void save_features(const fs::path& path, std::span<const Tensor> features, std::span<const std::size_t> labels,
                   std::span<const std::string> class_names) {
    if (features.size() != labels.size()) throw DomainError("feature and label counts differ");
    const json header{{"kind", "features"}, {"class_names", std::vector<std::string>(class_names.begin(), class_names.end())}};
    const std::vector<NamedTensor> tensors{{"features", stack(features)}, {"labels", labels_tensor(labels)}};
    write_container(path, header, tensors);
}

FeatureSet load_features(const fs::path& path) {
    const Container c = read_container(path);
    if (c.header.value("kind", "") != "features") throw FormatError(path.string() + " is not a feature file");
    FeatureSet fs;
    fs.class_names = c.header.at("class_names").get<std::vector<std::string>>();
    fs.features = unstack(c.get("features"));
    fs.labels = labels_from(c.get("labels"), fs.class_names.size());
    if (fs.labels.size() != fs.features.size()) throw ShapeError("feature and label counts differ");
    return fs;
}

void save_dataset(const fs::path& path, const LabeledDataset& ds) {
    ds.check();
    const json header{{"kind", "dataset"}, {"class_names", ds.class_names}, {"provenance", ds.provenance}};
    const std::vector<NamedTensor> tensors{{"images", stack(ds.images)}, {"labels", labels_tensor(ds.labels)}};
    write_container(path, header, tensors);
}

LabeledDataset load_dataset_container(const fs::path& path) {
    const Container c = read_container(path);
    if (c.header.value("kind", "") != "dataset") throw FormatError(path.string() + " is not a dataset container");
    LabeledDataset ds;
    ds.class_names = c.header.at("class_names").get<std::vector<std::string>>();
    ds.provenance = c.header.value("provenance", path.filename().string());
    const Tensor& images = c.get("images");
    if (images.rank() != 4 || images.dim(1) != 3) throw ShapeError("dataset images must be N x 3 x H x W");
    ds.images = unstack(images);
    ds.labels = labels_from(c.get("labels"), ds.class_names.size());
    ds.check();
    return ds;
}

namespace {

json scaler_json(const Standardizer& s) { return {{"standardized", !s.empty()}}; }

void push_scaler(std::vector<NamedTensor>& tensors, const Standardizer& s) {
    if (s.empty()) return;
    tensors.push_back({"scaler.mean", Tensor::vector(s.mean)});
    tensors.push_back({"scaler.inv_std", Tensor::vector(s.inv_std)});
}

}  // namespace

void save_softmax_head(const fs::path& path, const SoftmaxHead& head) {
    json header{{"kind", "softmax_head"}, {"scaler", scaler_json(head.scaler)}};
    std::vector<NamedTensor> tensors{{"weights", head.weights}, {"intercept", head.intercept}};
    push_scaler(tensors, head.scaler);
    write_container(path, header, tensors);
}

void save_svm_head(const fs::path& path, const SvmHead& head) {
    json header{{"kind", "svm_head"}, {"c", head.c}, {"scaler", scaler_json(head.scaler)}};
    std::vector<NamedTensor> tensors;
    for (std::size_t c = 0; c < head.machines.size(); ++c) {
        tensors.push_back({"machine" + std::to_string(c) + ".w", head.machines[c].w});
        tensors.push_back({"machine" + std::to_string(c) + ".b", Tensor::vector({head.machines[c].b})});
    }
    push_scaler(tensors, head.scaler);
    write_container(path, header, tensors);
}

}  // namespace rnet
