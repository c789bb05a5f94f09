#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rnet/tensor.hpp"

namespace rnet {

struct LayerSpec;

struct Conv {
    std::size_t out_channels = 1;
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t stride = 1;
    bool operator==(const Conv&) const = default;
};

struct Relu {
    bool operator==(const Relu&) const = default;
};

struct MaxPool {
    std::size_t window = 2;
    std::size_t stride = 2;
    bool operator==(const MaxPool&) const = default;
};

struct Flatten {
    bool operator==(const Flatten&) const = default;
};

struct Dense {
    std::size_t out_dim = 1;
    bool operator==(const Dense&) const = default;
};

/// out = in + inner(in); inner must preserve the shape.
struct Residual {
    std::vector<LayerSpec> inner;
    bool operator==(const Residual& other) const;
};

/// Runs every branch on the same input and concatenates along channels.
struct InceptionBlock {
    std::vector<std::vector<LayerSpec>> branches;
    bool operator==(const InceptionBlock& other) const;
};

/// 1x1 squeeze conv + ReLU feeding two expand branches of expand_channels
/// each: 1x1 conv + ReLU + 3x3/1 max pool, and 3x3 conv + ReLU. The pool
/// keeps both branches on the same valid-mode grid.
struct Fire {
    std::size_t squeeze_channels = 1;
    std::size_t expand_channels = 1;
    bool operator==(const Fire&) const = default;
};

struct LayerSpec {
    using Kind = std::variant<Conv, Relu, MaxPool, Flatten, Dense, Residual, InceptionBlock, Fire>;
    Kind kind;

    LayerSpec(Conv v) : kind(std::move(v)) {}
    LayerSpec(Relu v) : kind(v) {}
    LayerSpec(MaxPool v) : kind(v) {}
    LayerSpec(Flatten v) : kind(v) {}
    LayerSpec(Dense v) : kind(v) {}
    LayerSpec(Residual v) : kind(std::move(v)) {}
    LayerSpec(InceptionBlock v) : kind(std::move(v)) {}
    LayerSpec(Fire v) : kind(v) {}

    template <class T>
    bool is() const noexcept {
        return std::holds_alternative<T>(kind);
    }
    std::string name() const;
    bool operator==(const LayerSpec&) const = default;
};

/// Fire modules are sugar for this layer sequence.
std::vector<LayerSpec> expand_fire(const Fire& fire);

struct NetworkSpec {
    Shape input_shape;
    std::vector<LayerSpec> layers;
    /// Layer whose (flattened) output is the feature vector.
    std::size_t cut_index = 0;
    bool operator==(const NetworkSpec&) const = default;
};

/// Output shape after every top-level layer. Throws SpecError naming the
/// first layer whose input violates its preconditions.
std::vector<Shape> infer_shapes(const NetworkSpec& spec);

/// infer_shapes plus the cut index check.
void validate(const NetworkSpec& spec);

/// Parameter tensor shapes of each top-level layer, depth-first, weights
/// before bias for every Conv/Dense.
std::vector<std::vector<Shape>> parameter_shapes(const NetworkSpec& spec);

std::size_t feature_dim(const NetworkSpec& spec);

struct TrainedNetwork {
    NetworkSpec spec;
    std::vector<std::vector<Tensor>> params;
    std::string provenance;
    bool operator==(const TrainedNetwork&) const = default;
};

/// Uniform(-b, b) weights with b = sqrt(6 / fan_in), zero biases.
TrainedNetwork init_weights(const NetworkSpec& spec, std::uint64_t seed);

/// Activation after every layer; the last entry is the network output.
std::vector<Tensor> forward(const TrainedNetwork& net, const Tensor& input);

/// Same, stopping after layer `last` (inclusive).
std::vector<Tensor> forward_until(const TrainedNetwork& net, const Tensor& input, std::size_t last);

/// Flattened activation of the cut layer.
Tensor extract_features(const TrainedNetwork& net, const Tensor& input);

struct Gradients {
    std::vector<std::vector<Tensor>> params;
    Tensor input;
};

/// Zero gradients shaped like net's parameters.
std::vector<std::vector<Tensor>> zero_gradients(const TrainedNetwork& net);

/// Reverse-mode gradients of <upstream, output> for every parameter and the input.
Gradients backward(const TrainedNetwork& net, const Tensor& input, const Tensor& upstream);

/// Backpropagates `upstream`, the gradient w.r.t. activations[last], down to
/// layer `first`, adding parameter gradients into `grads`. Layers below
/// `first` are skipped and no input gradient is formed when first > 0.
/// Returns the gradient w.r.t. the input of layer `first`.
Tensor backward_range(const TrainedNetwork& net, const Tensor& input,
                      std::span<const Tensor> activations, const Tensor& upstream,
                      std::size_t first, std::size_t last,
                      std::vector<std::vector<Tensor>>& grads);

}  // namespace rnet
