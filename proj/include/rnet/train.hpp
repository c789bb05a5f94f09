#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "rnet/dataset.hpp"
#include "rnet/network.hpp"

namespace rnet {

struct TrainConfig {
    double learning_rate = 0.01;
    std::size_t epochs = 200;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    /// Leading layers excluded from updates.
    std::size_t freeze_prefix = 0;
};

/// Temporary softmax head used while training the extractor.
struct DenseHead {
    Tensor weights;  // classes x feature_dim
    Tensor bias;     // classes
    bool operator==(const DenseHead&) const = default;
};

DenseHead init_dense_head(std::size_t classes, std::size_t feature_dim, std::uint64_t seed);

struct EpochStats {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double accuracy = 0.0;  // fraction of samples classified right during the epoch
};

struct TrainResult {
    TrainedNetwork network;
    DenseHead head;
    std::vector<EpochStats> log;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch SGD on softmax cross-entropy with a DenseHead attached at the
/// cut layer. Layers past the cut take no part; layers below freeze_prefix
/// are returned bit-identical. Every epoch visits the samples in a fresh
/// seeded permutation. When `head` is empty a head is initialised from the
/// config seed. Throws TrainingError on a non-finite loss.
TrainResult sgd_train(const TrainedNetwork& net, const LabeledDataset& data, const TrainConfig& config,
                      std::optional<DenseHead> head = std::nullopt, const EpochCallback& on_epoch = {});

}  // namespace rnet
