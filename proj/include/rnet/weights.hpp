#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rnet/network.hpp"

namespace rnet {

// Binary tensor container shared by weight, feature and head files:
//
//   "RNFW" | u32 version | u32 header length | UTF-8 JSON header |
//   little-endian f64 payload | u32 CRC32 of all preceding bytes
//
// The header lists every tensor as {name, shape, offset}, offset counted in
// bytes from the start of the payload, tensors stored in declaration order.

inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

struct Container {
    nlohmann::json header;  // without the "tensors" table
    std::vector<NamedTensor> tensors;

    const Tensor& get(const std::string& name) const;
};

std::vector<std::uint8_t> encode_container(const nlohmann::json& header, std::span<const NamedTensor> tensors);
Container decode_container(std::span<const std::uint8_t> bytes);

void write_container(const std::filesystem::path& path, const nlohmann::json& header,
                     std::span<const NamedTensor> tensors);
Container read_container(const std::filesystem::path& path);

nlohmann::json spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const nlohmann::json& j);

std::vector<std::uint8_t> encode_weights(const TrainedNetwork& net);
TrainedNetwork decode_weights(std::span<const std::uint8_t> bytes);

void save_weights(const TrainedNetwork& net, const std::filesystem::path& path);
TrainedNetwork load_weights(const std::filesystem::path& path);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

}  // namespace rnet
