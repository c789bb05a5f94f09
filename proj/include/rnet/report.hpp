#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace rnet {

/// 100 * correct / total rounded half-up to two decimals.
double accuracy(std::size_t correct, std::size_t total);

/// Two-decimal rendering of a percentage ("97.86").
std::string format_percent(double pct);

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

/// Entry (i, j) counts samples of true class i predicted as j.
ConfusionMatrix confusion_matrix(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                                 std::size_t classes);

struct ClassMetrics {
    std::string name;
    double precision = 0.0;
    double recall = 0.0;
};

std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm, std::span<const std::string> names);

struct ReportRow {
    std::string model;
    std::string head;  // "softmax" | "svm"
    double accuracy_pct = 0.0;
    std::size_t epochs = 0;
    bool data_aug = false;
    ConfusionMatrix confusion;
    std::vector<ClassMetrics> per_class;
    std::string init = "pretrained";
    std::string feature_checksum;
};

struct EvalReport {
    std::vector<ReportRow> rows;
    std::uint64_t split_seed = 0;
    std::string feature_checksum;
    std::size_t train_count = 0;
    std::size_t test_count = 0;
};

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

/// Empty when `j` satisfies the report schema and its internal consistency
/// rules (confusion sums, accuracy vs trace); otherwise the problems found.
std::vector<std::string> validate_report(const nlohmann::json& j);

/// Fixed-width comparison table, one line per model:
///   Model  Softmax  SVM  Data Aug.  Epoch
std::string render_table(const EvalReport& report);

/// Table followed by one confusion matrix per row.
std::string render_report(const EvalReport& report, std::span<const std::string> class_names = {});

}  // namespace rnet
