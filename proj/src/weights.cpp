#include "rnet/weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "rnet/errors.hpp"

namespace rnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'R', 'N', 'F', 'W'};
constexpr std::size_t kPrefix = 12;  // magic + version + header length

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

double get_f64(const std::uint8_t* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

std::string param_name(std::size_t layer, std::size_t index) {
    return "layer" + std::to_string(layer) + ".param" + std::to_string(index);
}

json layer_to_json(const LayerSpec& layer);

json layers_to_json(std::span<const LayerSpec> layers) {
    json arr = json::array();
    for (const auto& l : layers) arr.push_back(layer_to_json(l));
    return arr;
}

json layer_to_json(const LayerSpec& layer) {
    json j;
    j["type"] = layer.name();
    if (const auto* c = std::get_if<Conv>(&layer.kind)) {
        j["out_channels"] = c->out_channels;
        j["kernel_h"] = c->kernel_h;
        j["kernel_w"] = c->kernel_w;
        j["stride"] = c->stride;
    } else if (const auto* p = std::get_if<MaxPool>(&layer.kind)) {
        j["window"] = p->window;
        j["stride"] = p->stride;
    } else if (const auto* d = std::get_if<Dense>(&layer.kind)) {
        j["out_dim"] = d->out_dim;
    } else if (const auto* r = std::get_if<Residual>(&layer.kind)) {
        j["inner"] = layers_to_json(r->inner);
    } else if (const auto* b = std::get_if<InceptionBlock>(&layer.kind)) {
        json branches = json::array();
        for (const auto& br : b->branches) branches.push_back(layers_to_json(br));
        j["branches"] = branches;
    } else if (const auto* f = std::get_if<Fire>(&layer.kind)) {
        j["squeeze_channels"] = f->squeeze_channels;
        j["expand_channels"] = f->expand_channels;
    }
    return j;
}

LayerSpec layer_from_json(const json& j);

std::vector<LayerSpec> layers_from_json(const json& arr) {
    std::vector<LayerSpec> out;
    for (const auto& l : arr) out.push_back(layer_from_json(l));
    return out;
}

LayerSpec layer_from_json(const json& j) {
    const auto type = j.at("type").get<std::string>();
    if (type == "conv") {
        return Conv{j.at("out_channels").get<std::size_t>(), j.at("kernel_h").get<std::size_t>(),
                    j.at("kernel_w").get<std::size_t>(), j.at("stride").get<std::size_t>()};
    }
    if (type == "relu") return Relu{};
    if (type == "max_pool") return MaxPool{j.at("window").get<std::size_t>(), j.at("stride").get<std::size_t>()};
    if (type == "flatten") return Flatten{};
    if (type == "dense") return Dense{j.at("out_dim").get<std::size_t>()};
    if (type == "residual") return Residual{layers_from_json(j.at("inner"))};
    if (type == "inception") {
        InceptionBlock b;
        for (const auto& br : j.at("branches")) b.branches.push_back(layers_from_json(br));
        return b;
    }
    if (type == "fire") {
        return Fire{j.at("squeeze_channels").get<std::size_t>(), j.at("expand_channels").get<std::size_t>()};
    }
    throw FormatError("unknown layer type '" + type + "'");
}

}  // namespace

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    constexpr std::size_t kChunk = 1u << 30;
    for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
        const auto n = std::min(kChunk, bytes.size() - off);
        crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    }
    return static_cast<std::uint32_t>(crc);
}

const Tensor& Container::get(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return t.tensor;
    }
    throw FormatError("container has no tensor '" + name + "'");
}

std::vector<std::uint8_t> encode_container(const json& header, std::span<const NamedTensor> tensors) {
    json h = header;
    json table = json::array();
    std::size_t offset = 0;
    for (const auto& t : tensors) {
        table.push_back({{"name", t.name}, {"shape", t.tensor.shape()}, {"offset", offset}});
        offset += t.tensor.size() * sizeof(double);
    }
    h["tensors"] = table;
    const std::string text = h.dump();

    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    out.reserve(kPrefix + text.size() + offset + 4);
    put_u32(out, kContainerVersion);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& t : tensors) {
        for (double v : t.tensor.data()) put_f64(out, v);
    }
    put_u32(out, crc32_of(out));
    return out;
}

Container decode_container(std::span<const std::uint8_t> bytes) {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("not a tensor container (bad magic)");
    }
    if (bytes.size() < kPrefix + 4) throw ChecksumError("container truncated");
    const std::uint32_t version = get_u32(bytes.data() + 4);
    if (version != kContainerVersion) {
        throw VersionError("container version " + std::to_string(version) + " unsupported (expected " +
                           std::to_string(kContainerVersion) + ")");
    }
    const std::size_t body = bytes.size() - 4;
    if (crc32_of(bytes.first(body)) != get_u32(bytes.data() + body)) {
        throw ChecksumError("container checksum mismatch (truncated or corrupted)");
    }
    const std::size_t header_len = get_u32(bytes.data() + 8);
    if (kPrefix + header_len > body) throw FormatError("container header length exceeds file");

    Container c;
    try {
        c.header = json::parse(bytes.begin() + kPrefix, bytes.begin() + static_cast<std::ptrdiff_t>(kPrefix + header_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("container header is not valid JSON: ") + e.what());
    }
    const auto* payload = bytes.data() + kPrefix + header_len;
    const std::size_t payload_len = body - kPrefix - header_len;
    std::size_t expected_offset = 0;
    try {
        for (const auto& entry : c.header.at("tensors")) {
            const auto name = entry.at("name").get<std::string>();
            const auto shape = entry.at("shape").get<Shape>();
            const auto offset = entry.at("offset").get<std::size_t>();
            if (shape.empty() || std::find(shape.begin(), shape.end(), 0u) != shape.end()) {
                throw ShapeError("tensor '" + name + "' has invalid shape " + shape_string(shape));
            }
            const std::size_t len = shape_size(shape) * sizeof(double);
            if (offset != expected_offset || offset + len > payload_len) {
                throw ShapeError("tensor '" + name + "' of shape " + shape_string(shape) +
                                 " does not fit the payload layout");
            }
            std::vector<double> data(shape_size(shape));
            for (std::size_t i = 0; i < data.size(); ++i) data[i] = get_f64(payload + offset + 8 * i);
            c.tensors.push_back({name, Tensor(shape, std::move(data))});
            expected_offset = offset + len;
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("container tensor table malformed: ") + e.what());
    }
    if (expected_offset != payload_len) {
        throw ShapeError("payload holds " + std::to_string(payload_len) + " bytes, tensor table declares " +
                         std::to_string(expected_offset));
    }
    c.header.erase("tensors");
    return c;
}

void write_container(const fs::path& path, const json& header, std::span<const NamedTensor> tensors) {
    const auto bytes = encode_container(header, tensors);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("cannot write " + path.string());
}

Container read_container(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return decode_container(bytes);
}

json spec_to_json(const NetworkSpec& spec) {
    return {{"input_shape", spec.input_shape}, {"layers", layers_to_json(spec.layers)}, {"cut_index", spec.cut_index}};
}

NetworkSpec spec_from_json(const json& j) {
    try {
        return {j.at("input_shape").get<Shape>(), layers_from_json(j.at("layers")),
                j.at("cut_index").get<std::size_t>()};
    } catch (const json::exception& e) {
        throw FormatError(std::string("network spec malformed: ") + e.what());
    }
}

std::vector<std::uint8_t> encode_weights(const TrainedNetwork& net) {
    validate(net.spec);
    std::vector<NamedTensor> tensors;
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        for (std::size_t k = 0; k < net.params[i].size(); ++k) {
            tensors.push_back({param_name(i, k), net.params[i][k]});
        }
    }
    const json header{{"kind", "network"}, {"spec", spec_to_json(net.spec)}, {"provenance", net.provenance}};
    return encode_container(header, tensors);
}

TrainedNetwork decode_weights(std::span<const std::uint8_t> bytes) {
    Container c = decode_container(bytes);
    if (c.header.value("kind", "") != "network") throw FormatError("container does not hold a network");
    TrainedNetwork net;
    net.spec = spec_from_json(c.header.at("spec"));
    net.provenance = c.header.value("provenance", "");
    std::vector<std::vector<Shape>> shapes;
    try {
        shapes = parameter_shapes(net.spec);
    } catch (const SpecError& e) {
        throw ShapeError(std::string("embedded network spec is inconsistent: ") + e.what());
    }
    std::size_t next = 0;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        auto& layer = net.params.emplace_back();
        for (std::size_t k = 0; k < shapes[i].size(); ++k, ++next) {
            if (next >= c.tensors.size()) throw ShapeError("file is missing " + param_name(i, k));
            auto& t = c.tensors[next];
            if (t.name != param_name(i, k) || t.tensor.shape() != shapes[i][k]) {
                throw ShapeError("tensor '" + t.name + "' has shape " + shape_string(t.tensor.shape()) +
                                 ", spec requires " + param_name(i, k) + " of shape " +
                                 shape_string(shapes[i][k]));
            }
            layer.push_back(std::move(t.tensor));
        }
    }
    if (next != c.tensors.size()) throw ShapeError("file has tensors beyond those the spec declares");
    return net;
}

void save_weights(const TrainedNetwork& net, const fs::path& path) {
    const auto bytes = encode_weights(net);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("cannot write " + path.string());
}

TrainedNetwork load_weights(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return decode_weights(bytes);
}

}  // namespace rnet
