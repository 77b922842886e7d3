#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "snd/network.hpp"
#include "snd/optim.hpp"

namespace snd {

using Json = nlohmann::json;

Json spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const Json& j);

/// Layer list, parameter names and shapes, seed and gain. Parameter values
/// live in a separate little-endian f32 blob, in manifest order.
Json network_manifest(const Network& net);
/// Rebuilds the topology from a manifest; parameters hold their seeded init
/// until read_parameters() overwrites them.
Network network_from_manifest(const Json& manifest);

void append_values(std::span<const float> values, std::vector<float>& blob);
void append_parameters(const std::vector<Param<float>>& params, std::vector<float>& blob);
/// Reads parameters starting at `offset`; returns the offset past them.
std::size_t read_parameters(std::vector<Param<float>>& params, std::span<const float> blob, std::size_t offset);

std::string rng_to_string(const std::mt19937_64& rng);
/// Throws LoadError on malformed input.
std::mt19937_64 rng_from_string(const std::string& text);

/// Step count and hyperparameters; moments go to the blob via append_adam().
Json adam_manifest(const Adam& adam);
void append_adam(const Adam& adam, std::vector<float>& blob);
/// Restores moments shaped like `params`. Returns the offset past them.
std::size_t read_adam(Adam& adam, const Json& manifest, const std::vector<Param<float>>& params,
                      std::span<const float> blob, std::size_t offset);

void write_f32_file(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_f32_file(const std::filesystem::path& path);

/// FNV-1a over the little-endian bytes of the values.
std::uint64_t blob_checksum(std::span<const float> values);

void save_network(const Network& net, const std::filesystem::path& prefix);
Network load_network(const std::filesystem::path& prefix);

/// One-line compact JSON header, '\n', then little-endian f32 payload.
/// The header must carry a "shape" array whose product is the payload length.
void write_framed_f32(const std::filesystem::path& path, const Json& header, std::span<const float> values);
std::pair<Json, std::vector<float>> read_framed_f32(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace snd
