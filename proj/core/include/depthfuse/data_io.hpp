#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace depthfuse {

// One aligned RGB/depth example. rgb is planar (3 x H x W); depth and valid
// are H x W.
struct Sample {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> rgb;
  std::vector<float> depth;
  std::vector<std::uint8_t> valid;
  std::string id;

  std::size_t pixels() const noexcept { return height * width; }
  void validate() const;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB, row-major
};

struct DepthImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;  // row-major; 0 marks an invalid pixel
};

// Binary PPM (P6, maxval 255).
void write_ppm(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_ppm(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_ppm(const RgbImage& image);
RgbImage decode_ppm(std::span<const std::uint8_t> bytes);

// "DPTH" raw depth: magic, u32 height, u32 width, u32 reserved (all little
// endian), then height*width float32 values, row-major.
inline constexpr std::size_t kDepthHeaderBytes = 16;
void write_depth(const std::filesystem::path& path, const DepthImage& depth);
DepthImage read_depth(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_depth(const DepthImage& depth);
DepthImage decode_depth(std::span<const std::uint8_t> bytes);

// Colours are quantised to 8 bits on write; invalid pixels are stored as 0.
void write_sample(const std::filesystem::path& rgb_path, const std::filesystem::path& depth_path,
                  const Sample& sample);
Sample read_sample(const std::filesystem::path& rgb_path, const std::filesystem::path& depth_path);

// Colour-only sample (depth 0, nothing valid), e.g. for prediction.
Sample image_sample(const RgbImage& image, std::string id);

enum class Split { kTrain, kVal, kTest };

std::string to_string(Split split);
Split parse_split(const std::string& text);

struct ManifestEntry {
  std::filesystem::path rgb;
  std::filesystem::path depth;
  Split split = Split::kTrain;
};

// Entries in file order. Relative paths are resolved against the manifest's
// directory when loading.
struct Manifest {
  std::vector<ManifestEntry> entries;

  Manifest filter(Split split) const;
  std::size_t count(Split split) const;
};

// CSV with header "rgb,depth,split", UTF-8, LF line endings.
Manifest load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

std::vector<Sample> load_samples(const Manifest& manifest);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace depthfuse
