#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace dfuse {

// Jet-style false colour over [lo, hi]: lo maps to blue, hi to red.
// Returns interleaved 8-bit RGB.
std::vector<std::uint8_t> colorize_depth(std::span<const float> depth, float lo, float hi);

// Colorized over the map's own min..max.
std::vector<std::uint8_t> colorize_depth(std::span<const float> depth);

// 8-bit RGB PNG.
void write_png(const std::filesystem::path& path, std::size_t height, std::size_t width,
               std::span<const std::uint8_t> rgb);

}  // namespace dfuse
