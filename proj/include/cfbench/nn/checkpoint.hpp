#pragma once

#include "cfbench/nn/network.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cfbench::nn {

/// Versioned container:
///   "CFBCKPT\0" | u32 LE version | u64 LE json length | JSON layer map |
///   u64 LE float count | float32 LE parameter blob
/// The JSON document carries `kind`, `metadata`, and one entry per network
/// with its architecture and blob offset.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  struct Entry {
    std::string name;
    Network<float> network;
  };

  std::string kind;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<Entry> networks;

  const Network<float>& get(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace cfbench::nn
