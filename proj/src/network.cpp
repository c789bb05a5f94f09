#include "rnet/network.hpp"

#include <cmath>

#include "rnet/errors.hpp"
#include "rnet/rng.hpp"

namespace rnet {

bool Residual::operator==(const Residual& other) const { return inner == other.inner; }
bool InceptionBlock::operator==(const InceptionBlock& other) const { return branches == other.branches; }

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string LayerSpec::name() const {
    return std::visit(Overloaded{
                          [](const Conv&) { return std::string("conv"); },
                          [](const Relu&) { return std::string("relu"); },
                          [](const MaxPool&) { return std::string("max_pool"); },
                          [](const Flatten&) { return std::string("flatten"); },
                          [](const Dense&) { return std::string("dense"); },
                          [](const Residual&) { return std::string("residual"); },
                          [](const InceptionBlock&) { return std::string("inception"); },
                          [](const Fire&) { return std::string("fire"); },
                      },
                      kind);
}

std::vector<LayerSpec> expand_fire(const Fire& fire) {
    const auto e = fire.expand_channels;
    InceptionBlock expand{{
        {Conv{e, 1, 1, 1}, Relu{}, MaxPool{3, 1}},
        {Conv{e, 3, 3, 1}, Relu{}},
    }};
    return {Conv{fire.squeeze_channels, 1, 1, 1}, Relu{}, std::move(expand)};
}

namespace {

// Sequences of layers are the unit of recursion: the network itself, a
// residual body, an inception branch, an expanded fire module.
using Layers = std::span<const LayerSpec>;
using Params = std::span<const Tensor>;

std::size_t param_count(const LayerSpec& layer);

std::size_t param_count(Layers layers) {
    std::size_t n = 0;
    for (const auto& l : layers) n += param_count(l);
    return n;
}

std::size_t param_count(const LayerSpec& layer) {
    return std::visit(Overloaded{
                          [](const Conv&) -> std::size_t { return 2; },
                          [](const Dense&) -> std::size_t { return 2; },
                          [](const Residual& r) { return param_count(Layers(r.inner)); },
                          [](const InceptionBlock& b) {
                              std::size_t n = 0;
                              for (const auto& br : b.branches) n += param_count(Layers(br));
                              return n;
                          },
                          [](const Fire& f) {
                              const auto seq = expand_fire(f);
                              return param_count(Layers(seq));
                          },
                          [](const auto&) -> std::size_t { return 0; },
                      },
                      layer.kind);
}

void positive(std::size_t v, const char* what) {
    if (v == 0) throw DomainError(std::string(what) + " must be >= 1");
}

Shape out_shape(const LayerSpec& layer, const Shape& in, std::vector<Shape>* params);

Shape seq_out_shape(Layers layers, Shape shape, std::vector<Shape>* params) {
    for (const auto& l : layers) shape = out_shape(l, shape, params);
    return shape;
}

// Throws DomainError on any violated precondition; appends parameter shapes
// when `params` is non-null.
Shape out_shape(const LayerSpec& layer, const Shape& in, std::vector<Shape>* params) {
    auto spatial = [&](const char* what) {
        if (in.size() != 3) {
            throw DomainError(std::string(what) + " needs a CxHxW input, got " + shape_string(in));
        }
    };
    return std::visit(
        Overloaded{
            [&](const Conv& c) -> Shape {
                spatial("conv");
                positive(c.out_channels, "conv out_channels");
                positive(c.kernel_h, "conv kernel_h");
                positive(c.kernel_w, "conv kernel_w");
                const Stride s(static_cast<std::int64_t>(c.stride));
                if (c.kernel_h > in[1] || c.kernel_w > in[2]) {
                    throw DomainError("conv kernel exceeds input extent " + shape_string(in));
                }
                if (params) {
                    params->push_back({c.out_channels, in[0], c.kernel_h, c.kernel_w});
                    params->push_back({c.out_channels});
                }
                return {c.out_channels, valid_length(in[1], c.kernel_h, s),
                        valid_length(in[2], c.kernel_w, s)};
            },
            [&](const Relu&) -> Shape { return in; },
            [&](const MaxPool& p) -> Shape {
                spatial("max_pool");
                positive(p.window, "pool window");
                const Stride s(static_cast<std::int64_t>(p.stride));
                if (p.window > in[1] || p.window > in[2]) {
                    throw DomainError("pool window " + std::to_string(p.window) +
                                      " exceeds input extent " + shape_string(in));
                }
                return {in[0], valid_length(in[1], p.window, s), valid_length(in[2], p.window, s)};
            },
            [&](const Flatten&) -> Shape { return {shape_size(in)}; },
            [&](const Dense& d) -> Shape {
                positive(d.out_dim, "dense out_dim");
                if (in.size() != 1) throw DomainError("dense needs a rank-1 input, got " + shape_string(in));
                if (params) {
                    params->push_back({d.out_dim, in[0]});
                    params->push_back({d.out_dim});
                }
                return {d.out_dim};
            },
            [&](const Residual& r) -> Shape {
                const Shape out = seq_out_shape(r.inner, in, params);
                if (out != in) {
                    throw DomainError("residual body maps " + shape_string(in) + " to " +
                                      shape_string(out));
                }
                return in;
            },
            [&](const InceptionBlock& b) -> Shape {
                if (b.branches.empty()) throw DomainError("inception block without branches");
                Shape merged;
                for (const auto& br : b.branches) {
                    const Shape out = seq_out_shape(br, in, params);
                    if (out.size() != 3) throw DomainError("inception branch must stay CxHxW");
                    if (merged.empty()) {
                        merged = out;
                    } else if (out[1] != merged[1] || out[2] != merged[2]) {
                        throw DomainError("inception branches disagree on spatial dims: " +
                                          shape_string(merged) + " vs " + shape_string(out));
                    } else {
                        merged[0] += out[0];
                    }
                }
                return merged;
            },
            [&](const Fire& f) -> Shape {
                positive(f.squeeze_channels, "fire squeeze_channels");
                positive(f.expand_channels, "fire expand_channels");
                const auto seq = expand_fire(f);
                return seq_out_shape(seq, in, params);
            },
        },
        layer.kind);
}

Tensor layer_forward(const LayerSpec& layer, Params p, const Tensor& in);

Tensor seq_forward(Layers layers, Params p, Tensor x) {
    for (const auto& l : layers) {
        const auto n = param_count(l);
        x = layer_forward(l, p.first(n), x);
        p = p.subspan(n);
    }
    return x;
}

Tensor layer_forward(const LayerSpec& layer, Params p, const Tensor& in) {
    return std::visit(Overloaded{
                          [&](const Conv& c) {
                              return conv_valid_2d(in, p[0], p[1], Stride(static_cast<std::int64_t>(c.stride)));
                          },
                          [&](const Relu&) { return relu(in); },
                          [&](const MaxPool& m) {
                              return max_pool_2d(in, m.window, Stride(static_cast<std::int64_t>(m.stride)));
                          },
                          [&](const Flatten&) { return in.flattened(); },
                          [&](const Dense&) {
                              Tensor y = matvec(p[0], in);
                              for (std::size_t i = 0; i < y.size(); ++i) y[i] += p[1][i];
                              return y;
                          },
                          [&](const Residual& r) { return add_tensors(in, seq_forward(r.inner, p, in)); },
                          [&](const InceptionBlock& b) {
                              std::vector<Tensor> outs;
                              for (const auto& br : b.branches) {
                                  const auto n = param_count(Layers(br));
                                  outs.push_back(seq_forward(br, p.first(n), in));
                                  p = p.subspan(n);
                              }
                              return concat_channels(outs);
                          },
                          [&](const Fire& f) {
                              const auto seq = expand_fire(f);
                              return seq_forward(seq, p, in);
                          },
                      },
                      layer.kind);
}

Tensor layer_backward(const LayerSpec& layer, Params p, const Tensor& in, const Tensor& out,
                      const Tensor& grad_out, std::span<Tensor> g);

// Recomputes the inner activations, then walks them in reverse.
Tensor seq_backward(Layers layers, Params p, const Tensor& in, const Tensor& grad_out,
                    std::span<Tensor> g) {
    std::vector<Tensor> acts;
    std::vector<std::size_t> offsets;
    acts.reserve(layers.size() + 1);
    acts.push_back(in);
    std::size_t off = 0;
    for (const auto& l : layers) {
        const auto n = param_count(l);
        offsets.push_back(off);
        acts.push_back(layer_forward(l, p.subspan(off, n), acts.back()));
        off += n;
    }
    Tensor grad = grad_out;
    for (std::size_t i = layers.size(); i-- > 0;) {
        const auto n = param_count(layers[i]);
        grad = layer_backward(layers[i], p.subspan(offsets[i], n), acts[i], acts[i + 1], grad,
                              g.subspan(offsets[i], n));
    }
    return grad;
}

void accumulate(Tensor& into, const Tensor& from) {
    for (std::size_t i = 0; i < into.size(); ++i) into[i] += from[i];
}

Tensor layer_backward(const LayerSpec& layer, Params p, const Tensor& in, const Tensor& out,
                      const Tensor& grad_out, std::span<Tensor> g) {
    if (grad_out.shape() != out.shape()) {
        throw DomainError("upstream gradient " + shape_string(grad_out.shape()) +
                          " does not match activation " + shape_string(out.shape()));
    }
    return std::visit(
        Overloaded{
            [&](const Conv& c) {
                auto cg = conv_valid_2d_backward(in, p[0], Stride(static_cast<std::int64_t>(c.stride)),
                                                 grad_out);
                accumulate(g[0], cg.kernels);
                accumulate(g[1], cg.bias);
                return std::move(cg.input);
            },
            [&](const Relu&) { return relu_backward(in, grad_out); },
            [&](const MaxPool& m) {
                return max_pool_2d_backward(in, m.window, Stride(static_cast<std::int64_t>(m.stride)),
                                            grad_out);
            },
            [&](const Flatten&) { return grad_out.reshaped(in.shape()); },
            [&](const Dense&) {
                const std::size_t rows = p[0].dim(0), cols = p[0].dim(1);
                for (std::size_t r = 0; r < rows; ++r) {
                    const double gr = grad_out[r];
                    double* wr = g[0].data().data() + r * cols;
                    for (std::size_t c = 0; c < cols; ++c) wr[c] += gr * in[c];
                    g[1][r] += gr;
                }
                return matvec_transposed(p[0], grad_out);
            },
            [&](const Residual& r) {
                Tensor gi = seq_backward(r.inner, p, in, grad_out, g);
                accumulate(gi, grad_out);
                return gi;
            },
            [&](const InceptionBlock& b) {
                std::vector<std::size_t> channels;
                std::vector<Tensor> outs;
                std::size_t off = 0;
                for (const auto& br : b.branches) {
                    const auto n = param_count(Layers(br));
                    outs.push_back(seq_forward(br, p.subspan(off, n), in));
                    channels.push_back(outs.back().dim(0));
                    off += n;
                }
                const auto parts = split_channels(grad_out, channels);
                Tensor gi(in.shape());
                off = 0;
                for (std::size_t k = 0; k < b.branches.size(); ++k) {
                    const auto n = param_count(Layers(b.branches[k]));
                    accumulate(gi, seq_backward(b.branches[k], p.subspan(off, n), in, parts[k],
                                                g.subspan(off, n)));
                    off += n;
                }
                return gi;
            },
            [&](const Fire& f) {
                const auto seq = expand_fire(f);
                return seq_backward(seq, p, in, grad_out, g);
            },
        },
        layer.kind);
}

}  // namespace

std::vector<Shape> infer_shapes(const NetworkSpec& spec) {
    std::vector<Shape> shapes;
    Shape shape = spec.input_shape;
    try {
        Tensor probe(shape);
        (void)probe;
    } catch (const DomainError& e) {
        throw SpecError(0, std::string("invalid input shape: ") + e.what());
    }
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        try {
            shape = out_shape(spec.layers[i], shape, nullptr);
        } catch (const DomainError& e) {
            throw SpecError(i, spec.layers[i].name() + ": " + e.what());
        }
        shapes.push_back(shape);
    }
    return shapes;
}

void validate(const NetworkSpec& spec) {
    if (spec.layers.empty()) throw SpecError(0, "network has no layers");
    infer_shapes(spec);
    if (spec.cut_index >= spec.layers.size()) {
        throw SpecError(spec.cut_index, "cut index beyond last layer");
    }
}

std::vector<std::vector<Shape>> parameter_shapes(const NetworkSpec& spec) {
    validate(spec);
    std::vector<std::vector<Shape>> all;
    Shape shape = spec.input_shape;
    for (const auto& layer : spec.layers) {
        all.emplace_back();
        shape = out_shape(layer, shape, &all.back());
    }
    return all;
}

std::size_t feature_dim(const NetworkSpec& spec) {
    validate(spec);
    return shape_size(infer_shapes(spec)[spec.cut_index]);
}

TrainedNetwork init_weights(const NetworkSpec& spec, std::uint64_t seed) {
    TrainedNetwork net{spec, {}, "init:seed=" + std::to_string(seed)};
    Rng rng(seed);
    for (const auto& shapes : parameter_shapes(spec)) {
        auto& layer = net.params.emplace_back();
        for (const auto& s : shapes) {
            Tensor t(s);
            if (s.size() > 1) {
                const std::size_t fan_in = shape_size(s) / s[0];
                const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
                for (double& v : t.data()) v = rng.uniform(-bound, bound);
            }
            layer.push_back(std::move(t));
        }
    }
    return net;
}

std::vector<Tensor> forward_until(const TrainedNetwork& net, const Tensor& input, std::size_t last) {
    const auto& spec = net.spec;
    if (input.shape() != spec.input_shape) {
        throw DomainError("input shape " + shape_string(input.shape()) + " does not match network input " +
                          shape_string(spec.input_shape));
    }
    if (last >= spec.layers.size()) throw DomainError("forward past the last layer");
    std::vector<Tensor> acts;
    acts.reserve(last + 1);
    const Tensor* x = &input;
    for (std::size_t i = 0; i <= last; ++i) {
        acts.push_back(layer_forward(spec.layers[i], net.params[i], *x));
        x = &acts.back();
    }
    return acts;
}

std::vector<Tensor> forward(const TrainedNetwork& net, const Tensor& input) {
    return forward_until(net, input, net.spec.layers.size() - 1);
}

Tensor extract_features(const TrainedNetwork& net, const Tensor& input) {
    return forward_until(net, input, net.spec.cut_index).back().flattened();
}

std::vector<std::vector<Tensor>> zero_gradients(const TrainedNetwork& net) {
    std::vector<std::vector<Tensor>> g;
    for (const auto& layer : net.params) {
        auto& gl = g.emplace_back();
        for (const auto& t : layer) gl.emplace_back(t.shape());
    }
    return g;
}

Tensor backward_range(const TrainedNetwork& net, const Tensor& input,
                      std::span<const Tensor> activations, const Tensor& upstream,
                      std::size_t first, std::size_t last,
                      std::vector<std::vector<Tensor>>& grads) {
    if (last >= activations.size()) throw DomainError("missing activations for backward pass");
    Tensor grad = upstream;
    for (std::size_t i = last + 1; i-- > first;) {
        const Tensor& in = i == 0 ? input : activations[i - 1];
        grad = layer_backward(net.spec.layers[i], net.params[i], in, activations[i], grad, grads[i]);
    }
    return grad;
}

Gradients backward(const TrainedNetwork& net, const Tensor& input, const Tensor& upstream) {
    const auto acts = forward(net, input);
    Gradients g{zero_gradients(net), Tensor{}};
    g.input = backward_range(net, input, acts, upstream, 0, acts.size() - 1, g.params);
    return g;
}

}  // namespace rnet
