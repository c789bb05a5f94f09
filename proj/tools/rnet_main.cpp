// rnet: synthetic data, pretraining, fine-tune + head comparison, feature
// extraction, head training and report rendering.
//
// Exit codes: 0 success, 1 usage/configuration error, 2 data error,
// 3 numeric or training failure.

#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "rnet/dataset.hpp"
#include "rnet/errors.hpp"
#include "rnet/heads.hpp"
#include "rnet/pipeline.hpp"
#include "rnet/presets.hpp"
#include "rnet/report.hpp"
#include "rnet/weights.hpp"

namespace {

using namespace rnet;

struct Flags {
    PipelineConfig cfg;
    std::string config_path;
    std::size_t cut_index = 0;
    std::size_t freeze_prefix = 0;
    std::size_t epochs = 0;
    double lr = 0.0;
    std::string source, target, weights, out;
};

CLI::Option* opt(CLI::App* app, const std::string& name, auto& var, const std::string& help) {
    return app->add_option(name, var, help)->capture_default_str();
}

void common_seed(CLI::App* app, Flags& f) {
    opt(app, "--seed", f.cfg.seed, "Master seed; every stochastic stage derives its own stream");
    opt(app, "--config", f.config_path, "JSON config with flat keys; flags override it");
}

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File values first, then any flag given on the command line.
PipelineConfig resolve(CLI::App* app, Flags& f, bool finetune_stage) {
    PipelineConfig base;
    // past pretraining the architecture comes from the weight file
    if (finetune_stage) base.preset.clear();
    if (!f.config_path.empty()) {
        std::ifstream in(f.config_path);
        if (!in) throw DataError("cannot read config " + f.config_path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("config " + f.config_path + " is not valid JSON: " + e.what());
        }
        base = config_from_json(j, base);
    }
    auto given = [&](const char* name) { return app->get_option_no_throw(name) && app->count(name) > 0; };
    if (given("--seed")) base.seed = f.cfg.seed;
    if (given("--preset")) base.preset = f.cfg.preset;
    if (given("--cut-index")) base.cut_index = f.cut_index;
    if (given("--freeze-prefix")) base.freeze_prefix = f.freeze_prefix;
    TrainConfig& stage = finetune_stage ? base.finetune : base.pretrain;
    if (given("--epochs")) stage.epochs = f.epochs;
    if (given("--lr")) (finetune_stage ? base.finetune_lr : base.pretrain_lr) = f.lr;
    if (given("--svm-c")) base.heads.c = f.cfg.heads.c;
    if (given("--svm-tol")) base.heads.tolerance = f.cfg.heads.tolerance;
    if (given("--split-seed")) base.split_seed = f.cfg.split_seed;
    if (given("--source")) base.source = f.source;
    if (given("--target")) base.target = f.target;
    if (given("--weights")) base.weights = f.weights;
    if (given("--out")) base.report_out = f.out;
    if (given("--random-init")) base.random_init = f.cfg.random_init;
    if (base.weights.empty()) throw UsageError("--weights is required (flag or config key \"weights\")");
    return base;
}

int fail(const std::string& stage, const std::string& kind, const std::string& what, int code) {
    std::cerr << "rnet " << stage << ": " << kind << ": " << what << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Transfer-learning toolkit: CNN feature extractors with softmax and linear SVM heads"};
    app.require_subcommand(1);
    Flags f;
    const PipelineConfig defaults;

    // synth-data
    auto* synth = app.add_subcommand("synth-data", "Write a synthetic 6-class PPM dataset tree");
    SynthConfig synth_cfg = defaults.target_synth;
    std::string synth_out;
    synth->add_option("--out", synth_out, "Output root directory")->required();
    opt(synth, "--per-class", synth_cfg.per_class, "Samples per class");
    opt(synth, "--size", synth_cfg.image_size, "Image side length");
    opt(synth, "--noise", synth_cfg.noise_level, "Uniform noise amplitude");
    opt(synth, "--classes", synth_cfg.classes, "Number of classes (2..6)");
    opt(synth, "--seed", synth_cfg.seed, "Generator seed");

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "Train a preset on the source dataset and save its weights");
    f.epochs = defaults.pretrain.epochs;
    opt(pre, "--preset", f.cfg.preset, "Architecture preset")->check(CLI::IsMember(preset_names()));
    opt(pre, "--cut-index", f.cut_index, "Feature layer index (default: last layer)");
    opt(pre, "--epochs", f.epochs, "Pretraining epochs");
    pre->add_option("--lr", f.lr, "SGD learning rate (default: 0.05 for alexnet/vgg, 0.01 otherwise)");
    opt(pre, "--source", f.source, "Source dataset directory or container (default: synthetic)");
    opt(pre, "--weights", f.weights, "Output weight file (required here or in --config)");
    common_seed(pre, f);

    // compare
    Flags fc;
    fc.epochs = defaults.finetune.epochs;
    auto* cmp = app.add_subcommand("compare", "Fine-tune from saved weights and compare softmax vs SVM heads");
    fc.cfg.preset.clear();
    opt(cmp, "--preset", fc.cfg.preset, "Expected preset of the weights (default: as recorded in them)")
        ->check(CLI::IsMember(preset_names()));
    opt(cmp, "--cut-index", fc.cut_index, "Feature layer index (default: from weights)");
    opt(cmp, "--freeze-prefix", fc.freeze_prefix, "Leading layers kept frozen (default: all below the last Dense)");
    opt(cmp, "--epochs", fc.epochs, "Fine-tuning epochs (0 skips fine-tuning)");
    cmp->add_option("--lr", fc.lr, "Fine-tuning SGD learning rate (default: per preset, as in pretrain)");
    opt(cmp, "--svm-c", fc.cfg.heads.c, "SVM soft-margin C");
    opt(cmp, "--svm-tol", fc.cfg.heads.tolerance, "SVM KKT tolerance");
    opt(cmp, "--split-seed", fc.cfg.split_seed, "Stratified half-split seed");
    opt(cmp, "--target", fc.target, "Target dataset directory or container (default: synthetic)");
    opt(cmp, "--weights", fc.weights, "Pretrained weight file (required here or in --config)");
    opt(cmp, "--out", fc.out, "Report JSON output path");
    cmp->add_flag("--random-init", fc.cfg.random_init, "Also report a randomly initialised extractor")
        ->capture_default_str();
    common_seed(cmp, fc);

    // extract
    Flags fe;
    auto* ext = app.add_subcommand("extract", "Write cut-layer features of a dataset to a tensor container");
    opt(ext, "--weights", fe.weights, "Weight file (required here or in --config)");
    opt(ext, "--target", fe.target, "Dataset directory or container (default: synthetic)");
    opt(ext, "--cut-index", fe.cut_index, "Feature layer index (default: from weights)");
    opt(ext, "--out", fe.out, "Feature file (required here or in --config)");
    common_seed(ext, fe);

    // train-head
    auto* th = app.add_subcommand("train-head", "Fit a softmax or SVM head on a feature file");
    std::string head_kind = "svm", features_path, head_out;
    HeadTrainConfig hc = defaults.heads;
    th->add_option("--head", head_kind, "Head type")->check(CLI::IsMember({"softmax", "svm"}))->capture_default_str();
    th->add_option("--features", features_path, "Feature file from `extract`")->required();
    th->add_option("--out", head_out, "Head container to write")->capture_default_str();
    opt(th, "--lr", hc.learning_rate, "Softmax learning rate");
    opt(th, "--epochs", hc.epochs, "Softmax epochs");
    opt(th, "--svm-c", hc.c, "SVM soft-margin C");
    opt(th, "--svm-tol", hc.tolerance, "SVM KKT tolerance");
    opt(th, "--seed", hc.seed, "Solver seed");

    // report
    auto* rep = app.add_subcommand("report", "Render a report JSON as a comparison table");
    std::string report_path;
    rep->add_option("report", report_path, "Report JSON file")->required();

    if (argc <= 1) {
        std::cout << app.help();
        return 1;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    std::string stage = "rnet";
    try {
        if (*synth) {
            stage = "synth-data";
            const auto ds = synthesize_dataset(synth_cfg);
            write_dataset_tree(ds, synth_out);
            std::cout << "seed=" << synth_cfg.seed << " wrote " << ds.size() << " images in " << ds.class_count()
                      << " classes to " << synth_out << "\n";
        } else if (*pre) {
            stage = "pretrain";
            const PipelineConfig cfg = resolve(pre, f, false);
            std::cout << "seed=" << cfg.seed << " preset=" << cfg.preset << " epochs=" << cfg.pretrain.epochs << "\n";
            const auto net = run_pretrain(cfg, &std::cout);
            std::cout << "wrote " << cfg.weights.string() << " (" << net.provenance << ")\n";
        } else if (*cmp) {
            stage = "compare";
            const PipelineConfig cfg = resolve(cmp, fc, true);
            std::cout << "seed=" << cfg.seed << " split_seed=" << cfg.split_seed
                      << " preset=" << (cfg.preset.empty() ? "(from weights)" : cfg.preset)
                      << " epochs=" << cfg.finetune.epochs << "\n";
            const auto result = run_finetune_and_compare(cfg, &std::cout);
            std::cout << "\n" << render_report(result.report);
            if (!cfg.report_out.empty()) std::cout << "report written to " << cfg.report_out.string() << "\n";
        } else if (*ext) {
            stage = "extract";
            const PipelineConfig cfg = resolve(ext, fe, true);
            TrainedNetwork net = load_weights(cfg.weights);
            if (cfg.cut_index) {
                net.spec.cut_index = *cfg.cut_index;
                validate(net.spec);
            }
            if (cfg.report_out.empty()) throw UsageError("--out is required (flag or config key \"out\")");
            const auto ds = load_or_synthesize(cfg.target, cfg.target_synth, net.spec.input_shape);
            const auto feats = extract_all(net, ds.images);
            save_features(cfg.report_out, feats, ds.labels, ds.class_names);
            std::cout << "wrote " << feats.size() << " features of dim " << feats.front().size() << " to "
                      << cfg.report_out.string() << "\n";
        } else if (*th) {
            stage = "train-head";
            const auto set = load_features(features_path);
            std::size_t correct = 0;
            if (head_kind == "softmax") {
                const auto head = train_softmax(set.features, set.labels, set.class_names.size(), hc);
                for (std::size_t i = 0; i < set.features.size(); ++i) {
                    correct += softmax_predict(head, set.features[i]) == set.labels[i];
                }
                if (!head_out.empty()) save_softmax_head(head_out, head);
            } else {
                const auto head = train_multiclass_svm(set.features, set.labels, set.class_names.size(), hc);
                for (std::size_t i = 0; i < set.features.size(); ++i) {
                    correct += svm_predict(head, set.features[i]) == set.labels[i];
                }
                if (!head_out.empty()) save_svm_head(head_out, head);
            }
            std::cout << "seed=" << hc.seed << " " << head_kind << " head training accuracy "
                      << format_percent(accuracy(correct, set.features.size())) << "%\n";
        } else if (*rep) {
            stage = "report";
            std::ifstream in(report_path);
            if (!in) throw DataError("cannot read " + report_path);
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(in);
            } catch (const nlohmann::json::exception& e) {
                throw DataError(std::string("malformed JSON: ") + e.what());
            }
            std::cout << render_report(report_from_json(j));
        }
    } catch (const UsageError& e) {
        return fail(stage, "usage error", e.what(), 1);
    } catch (const TrainingError& e) {
        return fail(stage, "training failure", e.what(), 3);
    } catch (const DataError& e) {
        return fail(stage, "data error", e.what(), 2);
    } catch (const SpecError& e) {
        return fail(stage, "invalid network", e.what(), 1);
    } catch (const DomainError& e) {
        return fail(stage, "invalid configuration", e.what(), 1);
    } catch (const std::exception& e) {
        return fail(stage, "failure", e.what(), 3);
    }
    return 0;
}
