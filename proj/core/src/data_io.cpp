#include "depthfuse/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_set>

#include "depthfuse/error.hpp"

namespace depthfuse {
namespace {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little endian; add byte swapping for this platform");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  return v;
}

// Reads one header token of a PPM, skipping whitespace and # comments.
std::string ppm_token(std::span<const std::uint8_t> bytes, std::size_t& pos, std::size_t* token_start = nullptr) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  if (token_start) *token_start = start;
  while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') ++pos;
  if (start == pos) throw FormatError("ppm: truncated header", start);
  return std::string(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                     bytes.begin() + static_cast<std::ptrdiff_t>(pos));
}

std::size_t ppm_number(std::span<const std::uint8_t> bytes, std::size_t& pos, const char* field,
                       std::size_t* token_start = nullptr) {
  std::size_t start = pos;
  const std::string tok = ppm_token(bytes, pos, &start);
  if (!std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); }) ||
      tok.size() > 9) {
    throw FormatError(std::string("ppm: bad ") + field + " '" + tok + "'", start);
  }
  if (token_start) *token_start = start;
  return static_cast<std::size_t>(std::stoul(tok));
}

std::uint8_t quantize(float v) {
  const float scaled = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f);
  return static_cast<std::uint8_t>(scaled);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

void Sample::validate() const {
  if (rgb.size() != 3 * pixels() || depth.size() != pixels() || valid.size() != pixels()) {
    throw DataError("sample " + id + ": image, depth and mask sizes disagree");
  }
  for (std::size_t i = 0; i < pixels(); ++i) {
    if (valid[i] && !(depth[i] > 0.0f && std::isfinite(depth[i]))) {
      throw DataError("sample " + id + ": valid pixel " + std::to_string(i) + " has depth " +
                      std::to_string(depth[i]));
    }
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to " + path.string() + " failed");
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
  if (image.pixels.size() != 3 * image.height * image.width) {
    throw DataError("ppm: pixel buffer does not match " + std::to_string(image.height) + "x" +
                    std::to_string(image.width));
  }
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

RgbImage decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  const std::string magic = ppm_token(bytes, pos);
  if (magic != "P6") throw FormatError("ppm: expected magic P6, found '" + magic + "'", 0);
  RgbImage image;
  image.width = ppm_number(bytes, pos, "width");
  image.height = ppm_number(bytes, pos, "height");
  std::size_t maxval_at = pos;
  const std::size_t maxval = ppm_number(bytes, pos, "maxval", &maxval_at);
  if (maxval != 255) throw FormatError("ppm: only maxval 255 is supported", maxval_at);
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("ppm: truncated header", pos);
  ++pos;
  const std::size_t needed = 3 * image.width * image.height;
  if (bytes.size() - pos < needed) {
    throw FormatError("ppm: truncated pixel data, expected " + std::to_string(needed) + " bytes",
                      bytes.size());
  }
  image.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + needed));
  return image;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  write_file(path, encode_ppm(image));
}

RgbImage read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

std::vector<std::uint8_t> encode_depth(const DepthImage& depth) {
  if (depth.values.size() != depth.height * depth.width) {
    throw DataError("depth: value buffer does not match " + std::to_string(depth.height) + "x" +
                    std::to_string(depth.width));
  }
  std::vector<std::uint8_t> out{'D', 'P', 'T', 'H'};
  out.reserve(kDepthHeaderBytes + 4 * depth.values.size());
  put_u32(out, static_cast<std::uint32_t>(depth.height));
  put_u32(out, static_cast<std::uint32_t>(depth.width));
  put_u32(out, 0);
  for (float v : depth.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

DepthImage decode_depth(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kDepthHeaderBytes) throw FormatError("depth: truncated header", bytes.size());
  if (std::memcmp(bytes.data(), "DPTH", 4) != 0) throw FormatError("depth: bad magic, expected DPTH", 0);
  DepthImage depth;
  depth.height = get_u32(bytes, 4);
  depth.width = get_u32(bytes, 8);
  const std::size_t count = depth.height * depth.width;
  const std::size_t needed = kDepthHeaderBytes + 4 * count;
  if (bytes.size() < needed) {
    throw FormatError("depth: truncated data, expected " + std::to_string(needed) + " bytes", bytes.size());
  }
  if (bytes.size() > needed) throw FormatError("depth: trailing bytes after data", needed);
  depth.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t offset = kDepthHeaderBytes + 4 * i;
    const float v = std::bit_cast<float>(get_u32(bytes, offset));
    if (!std::isfinite(v) || v < 0.0f) {
      throw FormatError("depth: value " + std::to_string(v) + " is negative or not finite", offset);
    }
    depth.values[i] = v;
  }
  return depth;
}

void write_depth(const std::filesystem::path& path, const DepthImage& depth) {
  write_file(path, encode_depth(depth));
}

DepthImage read_depth(const std::filesystem::path& path) { return decode_depth(read_file(path)); }

void write_sample(const std::filesystem::path& rgb_path, const std::filesystem::path& depth_path,
                  const Sample& sample) {
  sample.validate();
  const std::size_t n = sample.pixels();
  RgbImage image{sample.height, sample.width, std::vector<std::uint8_t>(3 * n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) image.pixels[3 * i + c] = quantize(sample.rgb[c * n + i]);
  }
  DepthImage depth{sample.height, sample.width, std::vector<float>(n)};
  for (std::size_t i = 0; i < n; ++i) depth.values[i] = sample.valid[i] ? sample.depth[i] : 0.0f;
  write_ppm(rgb_path, image);
  write_depth(depth_path, depth);
}

Sample read_sample(const std::filesystem::path& rgb_path, const std::filesystem::path& depth_path) {
  const RgbImage image = read_ppm(rgb_path);
  DepthImage depth = read_depth(depth_path);
  if (image.height != depth.height || image.width != depth.width) {
    throw DataError("sample " + rgb_path.string() + ": image is " + std::to_string(image.height) + "x" +
                    std::to_string(image.width) + " but depth is " + std::to_string(depth.height) + "x" +
                    std::to_string(depth.width));
  }
  Sample s = image_sample(image, rgb_path.stem().string());
  s.depth = std::move(depth.values);
  for (std::size_t i = 0; i < s.pixels(); ++i) s.valid[i] = s.depth[i] > 0.0f ? 1 : 0;
  return s;
}

Sample image_sample(const RgbImage& image, std::string id) {
  if (image.pixels.size() != image.height * image.width * 3) throw DataError("image buffer does not match its size");
  Sample s;
  s.height = image.height;
  s.width = image.width;
  s.id = std::move(id);
  const std::size_t n = s.pixels();
  s.rgb.resize(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) s.rgb[c * n + i] = static_cast<float>(image.pixels[3 * i + c]) / 255.0f;
  }
  s.depth.assign(n, 0.0f);
  s.valid.assign(n, 0);
  return s;
}

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  throw DataError("unknown split tag '" + text + "'");
}

Manifest Manifest::filter(Split split) const {
  Manifest out;
  std::copy_if(entries.begin(), entries.end(), std::back_inserter(out.entries),
               [split](const ManifestEntry& e) { return e.split == split; });
  return out;
}

std::size_t Manifest::count(Split split) const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(),
                                                [split](const ManifestEntry& e) { return e.split == split; }));
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const std::filesystem::path base = path.parent_path();
  Manifest manifest;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::unordered_set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (!header_seen) {
      if (fields != std::vector<std::string>{"rgb", "depth", "split"}) {
        throw ManifestError("expected header 'rgb,depth,split'", line_no);
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 3) throw ManifestError("expected 3 fields, found " + std::to_string(fields.size()), line_no);
    ManifestEntry e;
    try {
      e.split = parse_split(fields[2]);
    } catch (const DataError&) {
      throw ManifestError("unknown split tag '" + fields[2] + "'", line_no);
    }
    e.rgb = std::filesystem::path(fields[0]).is_absolute() ? std::filesystem::path(fields[0]) : base / fields[0];
    e.depth = std::filesystem::path(fields[1]).is_absolute() ? std::filesystem::path(fields[1]) : base / fields[1];
    for (const auto& p : {e.rgb, e.depth}) {
      if (!std::filesystem::exists(p)) throw ManifestError("missing file " + p.string(), line_no);
      const std::string key = std::filesystem::weakly_canonical(p).string();
      if (!seen.insert(key).second) throw ManifestError("duplicate path " + p.string(), line_no);
    }
    manifest.entries.push_back(std::move(e));
  }
  if (!header_seen) throw ManifestError("empty manifest", line_no);
  return manifest;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ostringstream out;
  out << "rgb,depth,split\n";
  for (const auto& e : manifest.entries) {
    out << e.rgb.generic_string() << ',' << e.depth.generic_string() << ',' << to_string(e.split) << '\n';
  }
  const std::string text = out.str();
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<Sample> load_samples(const Manifest& manifest) {
  std::vector<Sample> samples;
  samples.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) samples.push_back(read_sample(e.rgb, e.depth));
  return samples;
}

}  // namespace depthfuse
