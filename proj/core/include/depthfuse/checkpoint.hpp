#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "depthfuse/network.hpp"
#include "depthfuse/optim.hpp"

namespace depthfuse {

// Binary layout, all integers little-endian:
//   "DFCK", u32 version
//   tensor list: parameters
//   tensor list: optimizer slots
//   u64 optimizer step, u64 iteration
//   string rng state, string config fingerprint, string config JSON
// A tensor list is u32 count then, per tensor, string name, u32 rank (4),
// rank x u32 dims, and row-major float32 data. A string is u32 length then
// bytes.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  Parameters<float> params;
  OptimizerState<float> optimizer;
  std::uint64_t iteration = 0;
  std::string rng_state;
  std::string fingerprint;
  std::string config_json;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
// Throws FormatError with the byte offset of the first inconsistency.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace depthfuse
