#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "depthfuse/network.hpp"
#include "depthfuse/trainer.hpp"

namespace dfuse {

// Everything a training run depends on. Omitted JSON keys take the defaults
// below; unknown keys are rejected.
struct RunConfig {
  depthfuse::NetworkConfig network;
  depthfuse::TrainConfig train;

  void validate() const;
};

// Throws ConfigError naming the offending key.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Every field, keys sorted, compact. Parsing the result yields the same
// config again.
std::string canonical_json(const RunConfig& config);

// 64-bit FNV-1a of the canonical JSON, as 16 lowercase hex digits.
std::string fingerprint(const RunConfig& config);
std::string fnv1a64_hex(std::string_view bytes);

}  // namespace dfuse
