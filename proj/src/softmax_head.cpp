#include "rnet/heads.hpp"

#include <algorithm>
#include <cmath>

#include "rnet/errors.hpp"

namespace rnet {

Standardizer Standardizer::fit(std::span<const Tensor> features) {
    if (features.empty()) throw DomainError("cannot fit standardisation on no samples");
    const std::size_t d = features[0].size();
    const auto n = static_cast<double>(features.size());
    Standardizer s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (const auto& x : features) {
        if (x.size() != d) throw DomainError("feature dimension varies across samples");
        for (std::size_t k = 0; k < d; ++k) s.mean[k] += x[k];
    }
    for (auto& m : s.mean) m /= n;
    std::vector<double> var(d, 0.0);
    for (const auto& x : features) {
        for (std::size_t k = 0; k < d; ++k) var[k] += (x[k] - s.mean[k]) * (x[k] - s.mean[k]);
    }
    for (std::size_t k = 0; k < d; ++k) {
        const double sd = std::sqrt(var[k] / n);
        s.inv_std[k] = sd > 1e-12 ? 1.0 / sd : 1.0;
    }
    return s;
}

Tensor Standardizer::apply(const Tensor& x) const {
    if (empty()) return x;
    if (x.size() != mean.size()) {
        throw DomainError("feature of length " + std::to_string(x.size()) + " given to a head fitted on " +
                          std::to_string(mean.size()));
    }
    Tensor out({x.size()});
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = (x[k] - mean[k]) * inv_std[k];
    return out;
}

std::vector<Tensor> Standardizer::apply(std::span<const Tensor> xs) const {
    std::vector<Tensor> out;
    out.reserve(xs.size());
    for (const auto& x : xs) out.push_back(apply(x));
    return out;
}

std::size_t argmax(std::span<const double> values) {
    if (values.empty()) throw DomainError("argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

Tensor softmax_logits(const SoftmaxHead& head, const Tensor& x) {
    const Tensor z = head.scaler.apply(x);
    Tensor q = matvec(head.weights, z);
    if (head.intercept.size() != q.size()) throw DomainError("intercept length differs from class count");
    for (std::size_t c = 0; c < q.size(); ++c) q[c] += head.intercept[c];
    return q;
}

Tensor softmax_probs(const Tensor& q) {
    const double qmax = *std::max_element(q.data().begin(), q.data().end());
    Tensor p = q;
    double z = 0.0;
    for (double& v : p.data()) {
        v = std::exp(v - qmax);
        z += v;
    }
    for (double& v : p.data()) v /= z;
    return p;
}

std::size_t softmax_predict(const SoftmaxHead& head, const Tensor& x) {
    return argmax(softmax_probs(softmax_logits(head, x)).data());
}

namespace {

void check_labelled(std::span<const Tensor> features, std::span<const std::size_t> labels,
                    std::size_t class_count) {
    if (features.empty()) throw DomainError("no training samples");
    if (features.size() != labels.size()) throw DomainError("feature and label counts differ");
    if (class_count < 2) throw DomainError("a classifier head needs at least 2 classes");
    std::vector<std::size_t> counts(class_count, 0);
    const std::size_t d = features[0].size();
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].rank() != 1 || features[i].size() != d) {
            throw DomainError("sample " + std::to_string(i) + " is not a length-" + std::to_string(d) + " vector");
        }
        if (labels[i] >= class_count) throw DomainError("label " + std::to_string(labels[i]) + " out of range");
        ++counts[labels[i]];
    }
    for (std::size_t c = 0; c < class_count; ++c) {
        if (counts[c] == 0) throw DomainError("class " + std::to_string(c) + " has no training samples");
    }
}

double mean_cross_entropy(const SoftmaxHead& head, std::span<const Tensor> xs, std::span<const std::size_t> labels) {
    double total = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        Tensor q = matvec(head.weights, xs[i]);
        for (std::size_t c = 0; c < q.size(); ++c) q[c] += head.intercept[c];
        const double qmax = *std::max_element(q.data().begin(), q.data().end());
        double z = 0.0;
        for (double v : q.data()) z += std::exp(v - qmax);
        total += std::log(z) - (q[labels[i]] - qmax);
    }
    return total / static_cast<double>(xs.size());
}

}  // namespace

double softmax_stable_learning_rate(std::span<const Tensor> features) {
    if (features.empty()) throw DomainError("no samples");
    const std::size_t d = features[0].size() + 1;
    const auto n = static_cast<double>(features.size());
    // Power iteration on M = mean [x;1][x;1]^T without forming M.
    std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d)));
    double lambda = 0.0;
    for (int it = 0; it < 200; ++it) {
        std::vector<double> mv(d, 0.0);
        for (const auto& x : features) {
            double proj = v[d - 1];
            for (std::size_t k = 0; k + 1 < d; ++k) proj += x[k] * v[k];
            for (std::size_t k = 0; k + 1 < d; ++k) mv[k] += proj * x[k];
            mv[d - 1] += proj;
        }
        double norm = 0.0;
        for (auto& m : mv) {
            m /= n;
            norm += m * m;
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) break;
        const double next = norm;
        for (std::size_t k = 0; k < d; ++k) v[k] = mv[k] / norm;
        if (std::abs(next - lambda) <= 1e-10 * next) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    return lambda > 0.0 ? 2.0 / lambda : 1.0;
}

SoftmaxHead train_softmax(std::span<const Tensor> features, std::span<const std::size_t> labels,
                          std::size_t class_count, const HeadTrainConfig& config,
                          std::vector<double>* loss_history) {
    check_labelled(features, labels, class_count);
    if (!(config.learning_rate >= 0.0)) throw DomainError("learning rate must be non-negative");
    const std::size_t d = features[0].size();

    SoftmaxHead head{Tensor({class_count, d}), Tensor({class_count}), {}};
    if (config.standardize) head.scaler = Standardizer::fit(features);
    const auto xs = head.scaler.apply(features);

    double lr = config.learning_rate;
    if (config.clamp_learning_rate && lr > 0.0) lr = std::min(lr, softmax_stable_learning_rate(xs));

    const auto n = static_cast<double>(xs.size());
    if (loss_history) loss_history->clear();
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        Tensor gw({class_count, d});
        Tensor gb({class_count});
        double total = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            Tensor q = matvec(head.weights, xs[i]);
            for (std::size_t c = 0; c < class_count; ++c) q[c] += head.intercept[c];
            const Tensor p = softmax_probs(q);
            const double qmax = *std::max_element(q.data().begin(), q.data().end());
            double z = 0.0;
            for (double v : q.data()) z += std::exp(v - qmax);
            total += std::log(z) - (q[labels[i]] - qmax);
            for (std::size_t c = 0; c < class_count; ++c) {
                const double r = (p[c] - (c == labels[i] ? 1.0 : 0.0)) / n;
                double* row = gw.data().data() + c * d;
                for (std::size_t k = 0; k < d; ++k) row[k] += r * xs[i][k];
                gb[c] += r;
            }
        }
        if (loss_history) loss_history->push_back(total / n);
        for (std::size_t k = 0; k < gw.size(); ++k) head.weights[k] -= lr * gw[k];
        for (std::size_t c = 0; c < class_count; ++c) head.intercept[c] -= lr * gb[c];
    }
    if (loss_history) loss_history->push_back(mean_cross_entropy(head, xs, labels));
    if (!head.weights.all_finite() || !head.intercept.all_finite()) {
        throw TrainingError("softmax head diverged");
    }
    return head;
}

}  // namespace rnet
