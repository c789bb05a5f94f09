#include "rnet/presets.hpp"

#include "rnet/errors.hpp"

namespace rnet {

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"alexnet-mini", "vgg-mini", "googlenet-mini", "resnet-mini",
                                                "squeezenet-mini"};
    return names;
}

double preset_learning_rate(std::string_view name) {
    return (name == "alexnet-mini" || name == "vgg-mini") ? 0.05 : 0.01;
}

namespace {

std::vector<LayerSpec> stem() { return {Conv{16, 5, 5, 2}, Relu{}, MaxPool{2, 2}}; }

void append(std::vector<LayerSpec>& to, std::vector<LayerSpec> more) {
    for (auto& l : more) to.push_back(std::move(l));
}

std::vector<LayerSpec> alexnet() {
    auto layers = stem();
    append(layers, {Conv{32, 3, 3, 1}, Relu{}, MaxPool{2, 2}, Flatten{}, Dense{64}, Relu{}});
    return layers;
}

std::vector<LayerSpec> vgg() {
    return {Conv{8, 3, 3, 1},  Relu{}, Conv{8, 3, 3, 1},  Relu{}, MaxPool{2, 2},
            Conv{16, 3, 3, 1}, Relu{}, Conv{16, 3, 3, 1}, Relu{}, MaxPool{2, 2},
            Flatten{},         Dense{64}, Relu{}};
}

Residual bottleneck(std::size_t channels) {
    return Residual{{Conv{channels, 1, 1, 1}, Relu{}, Conv{channels, 1, 1, 1}}};
}

std::vector<LayerSpec> resnet() {
    auto layers = stem();
    append(layers, {bottleneck(16), Relu{}, Conv{32, 3, 3, 1}, Relu{}, MaxPool{2, 2}, bottleneck(32), Relu{},
                    Flatten{}, Dense{64}, Relu{}});
    return layers;
}

// Every branch shrinks the grid by 4 so the outputs stack without padding.
std::vector<LayerSpec> googlenet() {
    InceptionBlock block{{
        {Conv{8, 1, 1, 1}, Relu{}, MaxPool{5, 1}},
        {Conv{8, 1, 1, 1}, Relu{}, Conv{8, 3, 3, 1}, Relu{}, MaxPool{3, 1}},
        {Conv{4, 1, 1, 1}, Relu{}, Conv{8, 5, 5, 1}, Relu{}},
        {MaxPool{5, 1}, Conv{8, 1, 1, 1}, Relu{}},
    }};
    auto layers = stem();
    append(layers, {std::move(block), MaxPool{2, 2}, Flatten{}, Dense{64}, Relu{}});
    return layers;
}

std::vector<LayerSpec> squeezenet() {
    auto layers = stem();
    append(layers, {Fire{4, 8}, Fire{8, 16}, MaxPool{2, 2}, Flatten{}});
    return layers;
}

}  // namespace

NetworkSpec preset(std::string_view name, const Shape& input_shape, std::size_t class_count) {
    if (class_count < 2) throw DomainError("a classifier needs at least 2 classes");
    if (input_shape.size() != 3 || input_shape[1] < 32 || input_shape[2] < 32) {
        throw DomainError("presets need a CxHxW input with H, W >= 32, got " + shape_string(input_shape));
    }
    NetworkSpec spec;
    spec.input_shape = input_shape;
    if (name == "alexnet-mini") {
        spec.layers = alexnet();
    } else if (name == "vgg-mini") {
        spec.layers = vgg();
    } else if (name == "googlenet-mini") {
        spec.layers = googlenet();
    } else if (name == "resnet-mini") {
        spec.layers = resnet();
    } else if (name == "squeezenet-mini") {
        spec.layers = squeezenet();
    } else {
        throw DomainError("unknown preset '" + std::string(name) + "'");
    }
    spec.cut_index = spec.layers.size() - 1;
    validate(spec);
    return spec;
}

}  // namespace rnet
