#include <algorithm>
#include <cmath>
#include <numeric>

#include "rnet/errors.hpp"
#include "rnet/heads.hpp"
#include "rnet/rng.hpp"

namespace rnet {

double svm_decision(const Tensor& w, double b, const Tensor& x) { return dot(w, x) + b; }

double svm_distance(const Tensor& w, double b, const Tensor& x) {
    const double norm = std::sqrt(dot(w, w));
    if (norm == 0.0) throw DomainError("distance to a hyperplane with zero normal");
    return std::abs(svm_decision(w, b, x)) / norm;
}

double svm_margin(const Tensor& w, double b, std::span<const Tensor> samples, std::span<const int> labels) {
    if (samples.size() != labels.size()) throw DomainError("sample and label counts differ");
    double pos = INFINITY, neg = INFINITY;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double d = svm_distance(w, b, samples[i]);
        if (labels[i] == 1) {
            pos = std::min(pos, d);
        } else if (labels[i] == -1) {
            neg = std::min(neg, d);
        } else {
            throw DomainError("svm labels must be +1 or -1");
        }
    }
    if (std::isinf(pos) || std::isinf(neg)) throw DomainError("margin needs both classes present");
    return pos + neg;
}

namespace {

void check_binary(std::span<const Tensor> xs, std::span<const int> ys) {
    if (xs.size() != ys.size()) throw DomainError("sample and label counts differ");
    bool pos = false, neg = false;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].rank() != 1 || xs[i].size() != xs[0].size()) {
            throw DomainError("sample " + std::to_string(i) + " has inconsistent dimension");
        }
        if (ys[i] == 1) {
            pos = true;
        } else if (ys[i] == -1) {
            neg = true;
        } else {
            throw DomainError("svm labels must be +1 or -1");
        }
    }
    if (!pos || !neg) throw DomainError("binary svm needs both +1 and -1 samples");
}

// Gradient of the dual (minimisation form) at i, projected onto the box.
double projected_gradient(double g, double alpha, double c) {
    if (alpha <= 0.0) return std::min(g, 0.0);
    if (alpha >= c) return std::max(g, 0.0);
    return g;
}

}  // namespace

double svm_dual_objective(std::span<const Tensor> features, std::span<const int> labels,
                          std::span<const double> alpha) {
    const std::size_t d = features.empty() ? 0 : features[0].size();
    std::vector<double> w(d, 0.0);
    double b = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        const double ay = alpha[i] * labels[i];
        for (std::size_t k = 0; k < d; ++k) w[k] += ay * features[i][k];
        b += ay;
        sum += alpha[i];
    }
    return sum - 0.5 * (std::inner_product(w.begin(), w.end(), w.begin(), 0.0) + b * b);
}

SvmSolution train_binary_svm(std::span<const Tensor> features, std::span<const int> labels,
                             const HeadTrainConfig& config, bool record_history) {
    check_binary(features, labels);
    if (!(config.c > 0.0)) throw DomainError("svm C must be positive");
    if (!(config.tolerance > 0.0)) throw DomainError("svm tolerance must be positive");
    const std::size_t n = features.size();
    const std::size_t d = features[0].size();
    const std::size_t max_passes = config.max_passes ? config.max_passes : 10 * n;
    const double c = config.c;

    SvmSolution sol;
    sol.machine = {Tensor({d}), 0.0};
    sol.alpha.assign(n, 0.0);
    Tensor& w = sol.machine.w;
    double& b = sol.machine.b;

    std::vector<double> qii(n);
    for (std::size_t i = 0; i < n; ++i) qii[i] = dot(features[i], features[i]) + 1.0;

    auto gradient = [&](std::size_t i) { return labels[i] * (dot(w, features[i]) + b) - 1.0; };
    double alpha_sum = 0.0;
    auto dual = [&] { return alpha_sum - 0.5 * (dot(w, w) + b * b); };

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(config.seed);
    while (true) {
        double worst = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            worst = std::max(worst, std::abs(projected_gradient(gradient(i), sol.alpha[i], c)));
        }
        sol.max_violation = worst;
        if (worst <= config.tolerance) {
            sol.converged = true;
            break;
        }
        if (sol.passes == max_passes) break;
        rng.shuffle(std::span(order));
        for (std::size_t i : order) {
            const double g = gradient(i);
            if (projected_gradient(g, sol.alpha[i], c) == 0.0) continue;
            const double old = sol.alpha[i];
            const double next = std::clamp(old - g / qii[i], 0.0, c);
            const double step = (next - old) * labels[i];
            if (step == 0.0) continue;
            for (std::size_t k = 0; k < d; ++k) w[k] += step * features[i][k];
            b += step;
            alpha_sum += next - old;
            sol.alpha[i] = next;
            if (record_history) sol.dual_history.push_back(dual());
        }
        ++sol.passes;
    }
    return sol;
}

SvmHead train_multiclass_svm(std::span<const Tensor> features, std::span<const std::size_t> labels,
                             std::size_t class_count, const HeadTrainConfig& config) {
    if (features.size() != labels.size()) throw DomainError("feature and label counts differ");
    if (class_count < 2) throw DomainError("a classifier head needs at least 2 classes");
    std::vector<std::size_t> counts(class_count, 0);
    for (auto l : labels) {
        if (l >= class_count) throw DomainError("label " + std::to_string(l) + " out of range");
        ++counts[l];
    }
    for (std::size_t c = 0; c < class_count; ++c) {
        if (counts[c] == 0) throw DomainError("class " + std::to_string(c) + " has no training samples");
    }

    SvmHead head;
    head.c = config.c;
    if (config.standardize) head.scaler = Standardizer::fit(features);
    const auto xs = head.scaler.apply(features);
    for (std::size_t c = 0; c < class_count; ++c) {
        std::vector<int> ys(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) ys[i] = labels[i] == c ? 1 : -1;
        HeadTrainConfig machine_config = config;
        machine_config.seed = derive_seed(config.seed, c);
        head.machines.push_back(train_binary_svm(xs, ys, machine_config).machine);
    }
    return head;
}

std::vector<double> svm_decisions(const SvmHead& head, const Tensor& x) {
    const Tensor z = head.scaler.apply(x);
    std::vector<double> out;
    out.reserve(head.machines.size());
    for (const auto& m : head.machines) out.push_back(svm_decision(m.w, m.b, z));
    return out;
}

std::size_t svm_predict(const SvmHead& head, const Tensor& x) { return argmax(svm_decisions(head, x)); }

}  // namespace rnet
