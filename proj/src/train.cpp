#include "rnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rnet/errors.hpp"
#include "rnet/rng.hpp"

namespace rnet {

DenseHead init_dense_head(std::size_t classes, std::size_t feature_dim, std::uint64_t seed) {
    DenseHead head{Tensor({classes, feature_dim}), Tensor({classes})};
    Rng rng(seed);
    const double bound = std::sqrt(6.0 / static_cast<double>(feature_dim));
    for (double& v : head.weights.data()) v = rng.uniform(-bound, bound);
    return head;
}

TrainResult sgd_train(const TrainedNetwork& net, const LabeledDataset& data, const TrainConfig& config,
                      std::optional<DenseHead> head, const EpochCallback& on_epoch) {
    if (data.size() == 0) throw DataError("training set is empty");
    data.check();
    if (config.epochs == 0) throw DomainError("epochs must be >= 1");
    if (config.batch_size == 0) throw DomainError("batch size must be >= 1");
    if (!(config.learning_rate >= 0.0)) throw DomainError("learning rate must be non-negative");
    const std::size_t layers = net.spec.layers.size();
    if (config.freeze_prefix > layers) throw DomainError("freeze_prefix exceeds layer count");

    const std::size_t cut = net.spec.cut_index;
    const std::size_t dim = feature_dim(net.spec);
    const std::size_t classes = data.class_count();
    if (!head) head = init_dense_head(classes, dim, derive_seed(config.seed, 1));
    if (head->weights.shape() != Shape{classes, dim} || head->bias.shape() != Shape{classes}) {
        throw DomainError("training head does not match " + std::to_string(classes) + " classes x " +
                          std::to_string(dim) + " features");
    }

    TrainResult result{net, std::move(*head), {}};
    TrainedNetwork& model = result.network;
    DenseHead& h = result.head;
    // Gradients are only needed down to the first trainable layer.
    const std::size_t first_trainable = config.freeze_prefix;
    const bool backprop = first_trainable <= cut;

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, 0));

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(std::span(order));
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0, batch = 0; start < order.size(); start += config.batch_size, ++batch) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const double inv = 1.0 / static_cast<double>(end - start);
            auto grads = zero_gradients(model);
            Tensor grad_w(h.weights.shape());
            Tensor grad_b(h.bias.shape());
            for (std::size_t s = start; s < end; ++s) {
                const std::size_t idx = order[s];
                const auto acts = forward_until(model, data.images[idx], cut);
                const Tensor feat = acts.back().flattened();
                Tensor q = matvec(h.weights, feat);
                for (std::size_t c = 0; c < classes; ++c) q[c] += h.bias[c];

                const double qmax = *std::max_element(q.data().begin(), q.data().end());
                double z = 0.0;
                for (double v : q.data()) z += std::exp(v - qmax);
                const std::size_t label = data.labels[idx];
                const double loss = std::log(z) - (q[label] - qmax);
                if (!std::isfinite(loss)) {
                    throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                                        std::to_string(batch + 1));
                }
                loss_sum += loss;
                const auto pred = static_cast<std::size_t>(
                    std::distance(q.data().begin(), std::max_element(q.data().begin(), q.data().end())));
                if (pred == label) ++correct;

                // d loss / d q = softmax(q) - onehot(label), averaged over the batch.
                Tensor dq({classes});
                for (std::size_t c = 0; c < classes; ++c) {
                    dq[c] = (std::exp(q[c] - qmax) / z - (c == label ? 1.0 : 0.0)) * inv;
                }
                for (std::size_t c = 0; c < classes; ++c) {
                    double* gw = grad_w.data().data() + c * dim;
                    for (std::size_t k = 0; k < dim; ++k) gw[k] += dq[c] * feat[k];
                    grad_b[c] += dq[c];
                }
                if (backprop) {
                    const Tensor dfeat = matvec_transposed(h.weights, dq).reshaped(acts.back().shape());
                    backward_range(model, data.images[idx], acts, dfeat, first_trainable, cut, grads);
                }
            }
            const double lr = config.learning_rate;
            for (std::size_t i = 0; i < h.weights.size(); ++i) h.weights[i] -= lr * grad_w[i];
            for (std::size_t i = 0; i < h.bias.size(); ++i) h.bias[i] -= lr * grad_b[i];
            if (backprop) {
                for (std::size_t l = first_trainable; l <= cut; ++l) {
                    for (std::size_t k = 0; k < model.params[l].size(); ++k) {
                        Tensor& p = model.params[l][k];
                        const Tensor& g = grads[l][k];
                        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
                    }
                }
            }
        }
        EpochStats stats{epoch + 1, loss_sum / static_cast<double>(data.size()),
                         static_cast<double>(correct) / static_cast<double>(data.size())};
        result.log.push_back(stats);
        if (on_epoch) on_epoch(stats);
    }
    for (const auto& layer : model.params) {
        for (const auto& p : layer) {
            if (!p.all_finite()) throw TrainingError("parameters became non-finite during training");
        }
    }
    return result;
}

}  // namespace rnet
