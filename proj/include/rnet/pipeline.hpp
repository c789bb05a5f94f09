#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rnet/dataset.hpp"
#include "rnet/heads.hpp"
#include "rnet/network.hpp"
#include "rnet/report.hpp"
#include "rnet/train.hpp"

namespace rnet {

/// Every stochastic stage draws its seed from `seed`: weight init, the
/// pretraining and fine-tuning shuffles, and the head solvers each get their
/// own derived stream. The seed fields inside pretrain/finetune/heads are
/// overwritten, and so are the SGD learning rates: those come from
/// pretrain_lr / finetune_lr, or preset_learning_rate() when unset.
struct PipelineConfig {
    std::uint64_t seed = 1;
    std::string preset = "alexnet-mini";
    std::optional<std::size_t> cut_index;
    /// Unset: freeze everything below the last Dense layer (or the whole
    /// extractor when there is none).
    std::optional<std::size_t> freeze_prefix;
    Shape input_shape{3, 64, 64};
    TrainConfig pretrain{0.0, 10, 16, 0, 0};
    TrainConfig finetune{0.0, 50, 16, 0, 0};
    std::optional<double> pretrain_lr;
    std::optional<double> finetune_lr;
    HeadTrainConfig heads;
    std::uint64_t split_seed = 7;
    /// Synthetic stand-ins used when no source / target path is given.
    SynthConfig source_synth{6, 50, 64, 0.15, 1001};
    SynthConfig target_synth{6, 50, 64, 0.1, 2002};
    /// Also fine-tune from random weights and report those rows.
    bool random_init = false;
    std::filesystem::path source;
    std::filesystem::path target;
    std::filesystem::path weights;
    std::filesystem::path report_out;
};

/// Flat JSON keys mirroring PipelineConfig (preset, cut_index, epochs, lr, ...).
PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {});
nlohmann::json config_to_json(const PipelineConfig& config);

/// Spec for the configured preset with the cut override applied.
NetworkSpec pipeline_spec(const PipelineConfig& config, std::size_t class_count);
std::size_t resolved_freeze_prefix(const PipelineConfig& config, const NetworkSpec& spec);

/// Directory tree, pre-decoded dataset container, or (empty path) the synthetic generator.
LabeledDataset load_or_synthesize(const std::filesystem::path& path, const SynthConfig& synth, const Shape& input_shape);

/// The preset name a pretrain run recorded in the weight provenance, if any.
std::optional<std::string> preset_from_provenance(const std::string& provenance);

/// Trains the preset from seeded random weights on `source` and tags the result.
TrainedNetwork pretrain(const PipelineConfig& config, const LabeledDataset& source, std::ostream* log = nullptr);

/// Loads the source, pretrains, writes config.weights. Fails before training
/// when the source cannot be loaded.
TrainedNetwork run_pretrain(const PipelineConfig& config, std::ostream* log = nullptr);

std::vector<Tensor> extract_all(const TrainedNetwork& net, std::span<const Tensor> images);

/// CRC32 (hex) of the little-endian bytes of every feature in order.
std::string feature_checksum(std::span<const Tensor> train, std::span<const Tensor> test);

struct HeadComparison {
    TrainedNetwork extractor;  // after fine-tuning
    std::vector<Tensor> train_features;
    std::vector<Tensor> test_features;
    SoftmaxHead softmax;
    SvmHead svm;
    std::vector<ReportRow> rows;
    std::string checksum;
};

/// Fine-tune, extract features once, fit both heads on the identical feature
/// matrix and score them on the test half.
HeadComparison compare_heads(const PipelineConfig& config, const TrainedNetwork& initial, const SplitPair& split,
                             const std::string& init_tag, std::ostream* log = nullptr);

struct CompareResult {
    EvalReport report;
    HeadComparison pretrained;
    std::optional<HeadComparison> random;
};

CompareResult finetune_and_compare(const PipelineConfig& config, const TrainedNetwork& pretrained,
                                   const LabeledDataset& target, std::ostream* log = nullptr);

/// Loads weights and target, runs the comparison, writes config.report_out when set.
/// An empty preset takes the name recorded in the weights; a preset that
/// contradicts the recorded one is a DomainError.
CompareResult run_finetune_and_compare(const PipelineConfig& config, std::ostream* log = nullptr);

// Feature and head files reuse the tensor container.
void save_features(const std::filesystem::path& path, std::span<const Tensor> features,
                   std::span<const std::size_t> labels, std::span<const std::string> class_names);
struct FeatureSet {
    std::vector<Tensor> features;
    std::vector<std::size_t> labels;
    std::vector<std::string> class_names;
};
FeatureSet load_features(const std::filesystem::path& path);

void save_dataset(const std::filesystem::path& path, const LabeledDataset& ds);
LabeledDataset load_dataset_container(const std::filesystem::path& path);

void save_softmax_head(const std::filesystem::path& path, const SoftmaxHead& head);
void save_svm_head(const std::filesystem::path& path, const SvmHead& head);

}  // namespace rnet
