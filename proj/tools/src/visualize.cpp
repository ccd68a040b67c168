#include "dfuse/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "depthfuse/error.hpp"

namespace dfuse {

std::vector<std::uint8_t> colorize_depth(std::span<const float> depth, float lo, float hi) {
  std::vector<std::uint8_t> out(depth.size() * 3);
  const float span = hi > lo ? hi - lo : 1.0f;
  auto channel = [](float v) {
    return static_cast<std::uint8_t>(std::lround(255.0f * std::clamp(v, 0.0f, 1.0f)));
  };
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const float t = std::clamp((depth[i] - lo) / span, 0.0f, 1.0f);
    out[3 * i + 0] = channel(1.5f - std::abs(4.0f * t - 3.0f));
    out[3 * i + 1] = channel(1.5f - std::abs(4.0f * t - 2.0f));
    out[3 * i + 2] = channel(1.5f - std::abs(4.0f * t - 1.0f));
  }
  return out;
}

std::vector<std::uint8_t> colorize_depth(std::span<const float> depth) {
  if (depth.empty()) return {};
  const auto [lo, hi] = std::minmax_element(depth.begin(), depth.end());
  return colorize_depth(depth, *lo, *hi);
}

void write_png(const std::filesystem::path& path, std::size_t height, std::size_t width,
               std::span<const std::uint8_t> rgb) {
  if (rgb.size() != height * width * 3) throw depthfuse::ConfigError("write_png: buffer size does not match image");
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!file) throw depthfuse::IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw depthfuse::IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw depthfuse::IoError("failed writing PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(rgb.data() + y * width * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace dfuse
