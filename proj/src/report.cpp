#include "rnet/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "rnet/errors.hpp"

namespace rnet {

using nlohmann::json;

double accuracy(std::size_t correct, std::size_t total) {
    if (total == 0) throw DomainError("accuracy over zero samples");
    if (correct > total) throw DomainError("more correct predictions than samples");
    const std::uint64_t hundredths = (20000ULL * correct + total) / (2ULL * total);
    return static_cast<double>(hundredths) / 100.0;
}

std::string format_percent(double pct) {
    const long long h = std::llround(pct * 100.0);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%lld.%02lld", h / 100, h % 100);
    return buf;
}

ConfusionMatrix confusion_matrix(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                                 std::size_t classes) {
    if (predictions.size() != labels.size()) {
        throw DomainError("confusion matrix: " + std::to_string(predictions.size()) + " predictions for " +
                          std::to_string(labels.size()) + " labels");
    }
    ConfusionMatrix cm(classes, std::vector<std::size_t>(classes, 0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes || predictions[i] >= classes) throw DomainError("class index out of range");
        ++cm[labels[i]][predictions[i]];
    }
    return cm;
}

std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm, std::span<const std::string> names) {
    std::vector<ClassMetrics> out;
    for (std::size_t c = 0; c < cm.size(); ++c) {
        std::size_t predicted = 0, actual = 0;
        for (std::size_t k = 0; k < cm.size(); ++k) {
            predicted += cm[k][c];
            actual += cm[c][k];
        }
        const double tp = static_cast<double>(cm[c][c]);
        out.push_back({c < names.size() ? names[c] : "class" + std::to_string(c),
                       predicted ? tp / static_cast<double>(predicted) : 0.0,
                       actual ? tp / static_cast<double>(actual) : 0.0});
    }
    return out;
}

json report_to_json(const EvalReport& report) {
    json rows = json::array();
    for (const auto& r : report.rows) {
        json per_class = json::array();
        for (const auto& m : r.per_class) {
            per_class.push_back({{"name", m.name}, {"precision", m.precision}, {"recall", m.recall}});
        }
        rows.push_back({{"model", r.model},
                        {"head", r.head},
                        {"accuracy_pct", r.accuracy_pct},
                        {"epochs", r.epochs},
                        {"data_aug", r.data_aug},
                        {"confusion", r.confusion},
                        {"per_class", per_class},
                        {"init", r.init},
                        {"feature_checksum", r.feature_checksum}});
    }
    return {{"rows", rows},
            {"split_seed", report.split_seed},
            {"feature_checksum", report.feature_checksum},
            {"counts", {{"train", report.train_count}, {"test", report.test_count}}}};
}

EvalReport report_from_json(const json& j) {
    const auto problems = validate_report(j);
    if (!problems.empty()) throw DataError("invalid report: " + problems.front());
    EvalReport report;
    report.split_seed = j.at("split_seed").get<std::uint64_t>();
    report.feature_checksum = j.at("feature_checksum").get<std::string>();
    report.train_count = j.at("counts").at("train").get<std::size_t>();
    report.test_count = j.at("counts").at("test").get<std::size_t>();
    for (const auto& r : j.at("rows")) {
        ReportRow row;
        row.model = r.at("model").get<std::string>();
        row.head = r.at("head").get<std::string>();
        row.accuracy_pct = r.at("accuracy_pct").get<double>();
        row.epochs = r.at("epochs").get<std::size_t>();
        row.data_aug = r.at("data_aug").get<bool>();
        row.confusion = r.at("confusion").get<ConfusionMatrix>();
        for (const auto& m : r.at("per_class")) {
            row.per_class.push_back(
                {m.at("name").get<std::string>(), m.at("precision").get<double>(), m.at("recall").get<double>()});
        }
        row.init = r.value("init", "pretrained");
        row.feature_checksum = r.value("feature_checksum", "");
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::vector<std::string> validate_report(const json& j) {
    std::vector<std::string> problems;
    auto need = [&](const json& obj, const char* key, auto check, const char* type, const std::string& where) {
        if (!obj.is_object() || !obj.contains(key)) {
            problems.push_back(where + "missing '" + key + "'");
            return false;
        }
        if (!check(obj.at(key))) {
            problems.push_back(where + "'" + key + "' must be " + type);
            return false;
        }
        return true;
    };
    const auto is_uint = [](const json& v) { return v.is_number_unsigned(); };
    const auto is_num = [](const json& v) { return v.is_number(); };
    const auto is_str = [](const json& v) { return v.is_string(); };
    const auto is_bool = [](const json& v) { return v.is_boolean(); };
    const auto is_arr = [](const json& v) { return v.is_array(); };
    const auto is_obj = [](const json& v) { return v.is_object(); };

    if (!j.is_object()) return {"report must be a JSON object"};
    need(j, "split_seed", is_uint, "a non-negative integer", "");
    need(j, "feature_checksum", is_str, "a string", "");
    if (need(j, "counts", is_obj, "an object", "")) {
        need(j["counts"], "train", is_uint, "a non-negative integer", "counts: ");
        need(j["counts"], "test", is_uint, "a non-negative integer", "counts: ");
    }
    if (!need(j, "rows", is_arr, "an array", "")) return problems;

    for (std::size_t i = 0; i < j["rows"].size(); ++i) {
        const auto& r = j["rows"][i];
        const std::string where = "rows[" + std::to_string(i) + "]: ";
        need(r, "model", is_str, "a string", where);
        if (need(r, "head", is_str, "a string", where)) {
            const auto head = r["head"].get<std::string>();
            if (head != "softmax" && head != "svm") problems.push_back(where + "head must be softmax or svm");
        }
        const bool has_acc = need(r, "accuracy_pct", is_num, "a number", where);
        need(r, "epochs", is_uint, "a non-negative integer", where);
        need(r, "data_aug", is_bool, "a boolean", where);
        if (need(r, "per_class", is_arr, "an array", where)) {
            for (const auto& m : r["per_class"]) {
                need(m, "name", is_str, "a string", where + "per_class: ");
                need(m, "precision", is_num, "a number", where + "per_class: ");
                need(m, "recall", is_num, "a number", where + "per_class: ");
            }
        }
        if (!need(r, "confusion", is_arr, "an array", where)) continue;
        const auto& cm = r["confusion"];
        std::size_t total = 0, trace = 0;
        bool square = true;
        for (std::size_t a = 0; a < cm.size(); ++a) {
            if (!cm[a].is_array() || cm[a].size() != cm.size()) {
                square = false;
                break;
            }
            for (std::size_t b = 0; b < cm.size(); ++b) {
                if (!cm[a][b].is_number_unsigned()) {
                    square = false;
                    break;
                }
                const auto v = cm[a][b].get<std::size_t>();
                total += v;
                if (a == b) trace += v;
            }
        }
        if (!square) {
            problems.push_back(where + "confusion must be a square matrix of counts");
            continue;
        }
        if (j.contains("counts") && j["counts"].is_object() && j["counts"].contains("test") &&
            j["counts"]["test"].is_number_unsigned() && total != j["counts"]["test"].get<std::size_t>()) {
            problems.push_back(where + "confusion entries sum to " + std::to_string(total) +
                               ", test count is " + j["counts"]["test"].dump());
        }
        if (has_acc && total > 0 && std::abs(r["accuracy_pct"].get<double>() - accuracy(trace, total)) > 0.005) {
            problems.push_back(where + "accuracy_pct disagrees with the confusion trace");
        }
    }
    return problems;
}

std::string render_table(const EvalReport& report) {
    struct Line {
        std::string model, softmax = "n/a", svm = "n/a", aug = "-";
        std::size_t epochs = 0;
    };
    std::vector<Line> lines;
    for (const auto& r : report.rows) {
        auto it = std::find_if(lines.begin(), lines.end(), [&](const Line& l) { return l.model == r.model; });
        if (it == lines.end()) {
            lines.push_back({r.model});
            it = std::prev(lines.end());
        }
        (r.head == "svm" ? it->svm : it->softmax) = format_percent(r.accuracy_pct);
        it->epochs = r.epochs;
        if (r.data_aug) it->aug = "+";
    }
    std::size_t width = 5;
    for (const auto& l : lines) width = std::max(width, l.model.size());

    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s  %8s  %8s  %9s  %5s\n", static_cast<int>(width), "Model", "Softmax", "SVM",
                  "Data Aug.", "Epoch");
    os << buf;
    for (const auto& l : lines) {
        std::snprintf(buf, sizeof buf, "%-*s  %8s  %8s  %9s  %5zu\n", static_cast<int>(width), l.model.c_str(),
                      l.softmax.c_str(), l.svm.c_str(), l.aug.c_str(), l.epochs);
        os << buf;
    }
    return os.str();
}

std::string render_report(const EvalReport& report, std::span<const std::string> class_names) {
    std::ostringstream os;
    os << render_table(report);
    os << "split seed " << report.split_seed << ", train " << report.train_count << ", test " << report.test_count
       << ", features crc32 " << report.feature_checksum << "\n";
    for (const auto& r : report.rows) {
        os << "\n" << r.model << " + " << r.head << " (" << r.init << " init) confusion, rows = true class:\n";
        for (std::size_t i = 0; i < r.confusion.size(); ++i) {
            std::string name = i < class_names.size()       ? class_names[i]
                               : i < r.per_class.size()     ? r.per_class[i].name
                                                            : std::to_string(i);
            char buf[64];
            std::snprintf(buf, sizeof buf, "  %-10s", name.c_str());
            os << buf;
            for (auto v : r.confusion[i]) {
                std::snprintf(buf, sizeof buf, " %5zu", v);
                os << buf;
            }
            os << "\n";
        }
    }
    return os.str();
}

}  // namespace rnet
