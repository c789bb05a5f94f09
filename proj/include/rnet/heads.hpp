#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rnet/tensor.hpp"

namespace rnet {

/// Per-dimension (x - mean) / std with statistics from the training split.
/// Zero-variance dimensions are only centred. Empty means identity.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> inv_std;

    static Standardizer fit(std::span<const Tensor> features);
    bool empty() const noexcept { return mean.empty(); }
    Tensor apply(const Tensor& x) const;
    std::vector<Tensor> apply(std::span<const Tensor> xs) const;
    bool operator==(const Standardizer&) const = default;
};

struct HeadTrainConfig {
    // softmax regression
    double learning_rate = 0.1;
    /// Cap the step at the monotone-descent bound, see softmax_stable_learning_rate.
    bool clamp_learning_rate = true;
    std::size_t epochs = 200;
    std::uint64_t seed = 0;
    // svm
    double c = 10.0;
    double tolerance = 1e-3;
    std::size_t max_passes = 0;  // 0: 10 * sample count
    bool standardize = true;
};

/// Index of the largest entry, lowest index on ties.
std::size_t argmax(std::span<const double> values);

// ---- softmax regression ---------------------------------------------------

struct SoftmaxHead {
    Tensor weights;    // k x d
    Tensor intercept;  // k
    Standardizer scaler;

    std::size_t class_count() const { return intercept.size(); }
    bool operator==(const SoftmaxHead&) const = default;
};

/// q = W x + w0, after the head's standardisation.
Tensor softmax_logits(const SoftmaxHead& head, const Tensor& x);

/// exp(q_c) / sum_j exp(q_j), evaluated after subtracting max(q).
Tensor softmax_probs(const Tensor& q);

std::size_t softmax_predict(const SoftmaxHead& head, const Tensor& x);

/// Largest step for which full-batch gradient descent on mean cross-entropy
/// cannot increase the loss: 2 / lambda_max(mean of [x;1][x;1]^T). The loss
/// Hessian is bounded by that matrix times the softmax Jacobian, whose
/// spectrum lies in [0, 1/2].
double softmax_stable_learning_rate(std::span<const Tensor> features);

/// Full-batch gradient descent on mean cross-entropy from zero weights.
/// `loss_history` receives the loss before every epoch and after the last.
SoftmaxHead train_softmax(std::span<const Tensor> features, std::span<const std::size_t> labels,
                          std::size_t class_count, const HeadTrainConfig& config,
                          std::vector<double>* loss_history = nullptr);

// ---- linear svm -----------------------------------------------------------

struct BinarySvm {
    Tensor w;
    double b = 0.0;
    bool operator==(const BinarySvm&) const = default;
};

double svm_decision(const Tensor& w, double b, const Tensor& x);

/// |<w,x> + b| / ||w||.
double svm_distance(const Tensor& w, double b, const Tensor& x);

/// Closest positive distance plus closest negative distance; labels are +-1.
double svm_margin(const Tensor& w, double b, std::span<const Tensor> samples, std::span<const int> labels);

struct SvmSolution {
    BinarySvm machine;
    std::vector<double> alpha;
    std::vector<double> dual_history;  // dual objective after every coordinate update
    std::size_t passes = 0;
    double max_violation = 0.0;
    bool converged = false;
};

/// Soft-margin linear SVM, min 1/2 (||w||^2 + b^2) + C sum hinge, solved by
/// dual coordinate descent. The bias is learned as the weight of a constant
/// unit feature. Stops once every projected dual gradient is within
/// tolerance or after max_passes seeded-permutation sweeps. No
/// standardisation is applied.
SvmSolution train_binary_svm(std::span<const Tensor> features, std::span<const int> labels,
                             const HeadTrainConfig& config, bool record_history = false);

/// Dual objective sum(alpha) - 1/2 ||sum alpha_i y_i [x_i; 1]||^2.
double svm_dual_objective(std::span<const Tensor> features, std::span<const int> labels,
                          std::span<const double> alpha);

struct SvmHead {
    std::vector<BinarySvm> machines;  // one per class, class vs rest
    double c = 10.0;
    Standardizer scaler;

    std::size_t class_count() const { return machines.size(); }
    bool operator==(const SvmHead&) const = default;
};

SvmHead train_multiclass_svm(std::span<const Tensor> features, std::span<const std::size_t> labels,
                             std::size_t class_count, const HeadTrainConfig& config);

std::vector<double> svm_decisions(const SvmHead& head, const Tensor& x);
std::size_t svm_predict(const SvmHead& head, const Tensor& x);

}  // namespace rnet
