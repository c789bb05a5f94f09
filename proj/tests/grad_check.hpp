#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "rnet/network.hpp"

namespace gradcheck {

struct Summary {
    std::size_t checked = 0;
    std::size_t kinks_skipped = 0;
    double worst = 0.0;
    std::string worst_where;
    /// Clean coordinates compared per top-level layer (0 for parameter-free layers).
    std::vector<std::size_t> per_layer;
    /// min(per_layer target, parameter count) for each layer.
    std::vector<std::size_t> wanted;

    bool enough() const {
        for (std::size_t l = 0; l < per_layer.size(); ++l)
            if (per_layer[l] < wanted[l]) return false;
        return true;
    }
};

inline double probe_loss(const rnet::TrainedNetwork& net, const rnet::Tensor& input, const rnet::Tensor& upstream) {
    return rnet::dot(rnet::forward(net, input).back().flattened(), upstream.flattened());
}

/// Compares backward() with central differences of <forward(net, input), upstream>
/// for a random upstream. Per layer, `per_layer` distinct coordinates are drawn
/// across all of that layer's parameter tensors (every coordinate when there
/// are fewer); the same is done for the input. Coordinates whose one-sided
/// slopes disagree sit on a ReLU or max-pool switch and are replaced by fresh
/// draws, counted in kinks_skipped.
inline Summary check(rnet::TrainedNetwork net, rnet::Tensor input, std::uint64_t seed, std::size_t per_layer = 20) {
    rnet::Rng rng(seed);
    const auto out_shape = rnet::forward(net, input).back().shape();
    const rnet::Tensor upstream = oracle::random_tensor(rng, out_shape);
    const rnet::Gradients g = rnet::backward(net, input, upstream);

    Summary s;
    // tensors: list of (value, gradient, label) forming one group
    auto visit = [&](std::vector<rnet::Tensor*> tensors, std::vector<const rnet::Tensor*> grads,
                     const std::string& where) {
        std::size_t total = 0;
        for (auto* t : tensors) total += t->size();
        const std::size_t want = std::min(per_layer, total);
        std::vector<std::size_t> pool(total);
        for (std::size_t i = 0; i < total; ++i) pool[i] = i;
        rng.shuffle(std::span(pool));
        std::size_t done = 0;
        for (std::size_t flat : pool) {
            if (done == want) break;
            std::size_t which = 0;
            while (flat >= tensors[which]->size()) flat -= tensors[which++]->size();
            const auto fd = oracle::central_difference([&] { return probe_loss(net, input, upstream); },
                                                       &(*tensors[which])[flat]);
            if (fd.kink) {
                ++s.kinks_skipped;
                continue;
            }
            const double err = oracle::relative_error((*grads[which])[flat], fd.estimate);
            if (err > s.worst) {
                s.worst = err;
                s.worst_where = where + ".param" + std::to_string(which) + "[" + std::to_string(flat) + "]";
            }
            ++done;
            ++s.checked;
        }
        s.per_layer.push_back(done);
        s.wanted.push_back(want);
    };
    for (std::size_t l = 0; l < net.params.size(); ++l) {
        std::vector<rnet::Tensor*> ts;
        std::vector<const rnet::Tensor*> gs;
        for (std::size_t k = 0; k < net.params[l].size(); ++k) {
            ts.push_back(&net.params[l][k]);
            gs.push_back(&g.params[l][k]);
        }
        if (ts.empty()) {
            s.per_layer.push_back(0);
            s.wanted.push_back(0);
            continue;
        }
        visit(ts, gs, "layer" + std::to_string(l));
    }
    visit({&input}, {&g.input}, "input");
    return s;
}

/// Random small network exercising one layer type.
inline rnet::NetworkSpec single_layer_spec(const std::string& type) {
    using namespace rnet;
    NetworkSpec spec;
    spec.input_shape = {2, 7, 7};
    if (type == "conv") {
        spec.layers = {Conv{3, 3, 2, 2}};
    } else if (type == "dense") {
        spec.input_shape = {1, 1, 6};
        spec.layers = {Flatten{}, Dense{4}};
    } else if (type == "relu") {
        spec.layers = {Conv{3, 2, 2, 1}, Relu{}};
    } else if (type == "max_pool") {
        spec.layers = {Conv{2, 2, 2, 1}, MaxPool{3, 2}};
    } else if (type == "residual") {
        spec.layers = {Residual{{Conv{2, 1, 1, 1}, Relu{}, Conv{2, 1, 1, 1}}}};
    } else if (type == "inception") {
        spec.layers = {InceptionBlock{{{Conv{2, 1, 1, 1}, Relu{}, MaxPool{3, 1}},
                                       {Conv{3, 3, 3, 1}},
                                       {MaxPool{3, 1}, Conv{1, 1, 1, 1}}}}};
    } else if (type == "fire") {
        spec.layers = {Fire{2, 3}};
    }
    spec.cut_index = spec.layers.size() - 1;
    return spec;
}

}  // namespace gradcheck
