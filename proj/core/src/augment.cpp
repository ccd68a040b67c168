#include "depthfuse/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "depthfuse/error.hpp"

namespace depthfuse {
namespace {

void check_std(const std::array<float, 3>& std) {
  for (float s : std) {
    if (!(s > 0.0f)) throw ConfigError("normalization std must be positive per channel");
  }
}

float luminance(float r, float g, float b) { return 0.299f * r + 0.587f * g + 0.114f * b; }

}  // namespace

void AugmentSpec::validate() const {
  if (!(scale_min > 0.0) || scale_min > scale_max) throw ConfigError("augment: need 0 < scale_min <= scale_max");
  if (rotation_deg < 0.0) throw ConfigError("augment: rotation_deg must be non-negative");
  if (!(jitter_min > 0.0) || jitter_min > jitter_max) throw ConfigError("augment: need 0 < jitter_min <= jitter_max");
  if (flip_probability < 0.0 || flip_probability > 1.0) throw ConfigError("augment: flip_probability outside [0, 1]");
  check_std(std);
}

AugmentDraw draw_augment(const AugmentSpec& spec, Rng& rng) {
  AugmentDraw d;
  d.scale = uniform(rng, spec.scale_min, spec.scale_max);
  d.rotation_deg = uniform(rng, -spec.rotation_deg, spec.rotation_deg);
  d.flip = bernoulli(rng, spec.flip_probability);
  d.brightness = uniform(rng, spec.jitter_min, spec.jitter_max);
  d.contrast = uniform(rng, spec.jitter_min, spec.jitter_max);
  d.saturation = uniform(rng, spec.jitter_min, spec.jitter_max);
  return d;
}

SourcePoint source_point(const AugmentDraw& draw, std::size_t width, std::size_t height, double x,
                         double y) {
  const double cx = 0.5 * static_cast<double>(width);
  const double cy = 0.5 * static_cast<double>(height);
  // undo flip
  if (draw.flip) x = static_cast<double>(width) - x;
  // undo rotation
  const double a = draw.rotation_deg * std::numbers::pi / 180.0;
  const double dx = x - cx, dy = y - cy;
  const double rx = std::cos(a) * dx + std::sin(a) * dy;
  const double ry = -std::sin(a) * dx + std::cos(a) * dy;
  // undo the zoom about the centre
  return SourcePoint{cx + rx / draw.scale, cy + ry / draw.scale};
}

Sample apply_geometry(const Sample& sample, const AugmentDraw& draw) {
  sample.validate();
  if (!(draw.scale > 0.0)) throw ConfigError("augment: scale must be positive");
  const std::size_t h = sample.height, w = sample.width, n = sample.pixels();
  Sample out;
  out.height = h;
  out.width = w;
  out.id = sample.id;
  out.rgb.assign(3 * n, 0.0f);
  out.depth.assign(n, 0.0f);
  out.valid.assign(n, 0);
  const bool identity = draw.scale == 1.0 && draw.rotation_deg == 0.0 && !draw.flip;
  if (identity) {
    out.rgb = sample.rgb;
    out.depth = sample.depth;
    out.valid = sample.valid;
    return out;
  }
  const float inv_scale = static_cast<float>(1.0 / draw.scale);
  for (std::size_t v = 0; v < h; ++v) {
    for (std::size_t u = 0; u < w; ++u) {
      const SourcePoint src =
          source_point(draw, w, h, static_cast<double>(u) + 0.5, static_cast<double>(v) + 0.5);
      const std::size_t i = v * w + u;
      // depth: nearest source pixel
      const double fx = std::floor(src.x), fy = std::floor(src.y);
      if (fx >= 0.0 && fy >= 0.0 && fx < static_cast<double>(w) && fy < static_cast<double>(h)) {
        const std::size_t j = static_cast<std::size_t>(fy) * w + static_cast<std::size_t>(fx);
        if (sample.valid[j]) {
          out.valid[i] = 1;
          out.depth[i] = sample.depth[j] * inv_scale;
        }
      }
      // colour: bilinear over pixel centres, zero outside
      const double sx = src.x - 0.5, sy = src.y - 0.5;
      const double x0 = std::floor(sx), y0 = std::floor(sy);
      const double ax = sx - x0, ay = sy - y0;
      for (std::size_t c = 0; c < 3; ++c) {
        const float* plane = sample.rgb.data() + c * n;
        double acc = 0.0;
        for (int ddy = 0; ddy < 2; ++ddy) {
          for (int ddx = 0; ddx < 2; ++ddx) {
            const double px = x0 + ddx, py = y0 + ddy;
            if (px < 0.0 || py < 0.0 || px >= static_cast<double>(w) || py >= static_cast<double>(h)) continue;
            const double wgt = (ddx ? ax : 1.0 - ax) * (ddy ? ay : 1.0 - ay);
            acc += wgt * plane[static_cast<std::size_t>(py) * w + static_cast<std::size_t>(px)];
          }
        }
        out.rgb[c * n + i] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Sample apply_augment(const Sample& sample, const AugmentSpec& spec, const AugmentDraw& draw) {
  check_std(spec.std);
  Sample out = apply_geometry(sample, draw);
  const std::size_t n = out.pixels();
  float* r = out.rgb.data();
  float* g = r + n;
  float* b = g + n;
  if (draw.brightness != 1.0 || draw.contrast != 1.0 || draw.saturation != 1.0) {
    const float br = static_cast<float>(draw.brightness);
    for (float& x : out.rgb) x = std::clamp(x * br, 0.0f, 1.0f);
    double mean_lum = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean_lum += luminance(r[i], g[i], b[i]);
    const float m = static_cast<float>(mean_lum / static_cast<double>(n));
    const float ct = static_cast<float>(draw.contrast);
    for (float& x : out.rgb) x = std::clamp(m + ct * (x - m), 0.0f, 1.0f);
    const float sat = static_cast<float>(draw.saturation);
    for (std::size_t i = 0; i < n; ++i) {
      const float lum = luminance(r[i], g[i], b[i]);
      r[i] = std::clamp(lum + sat * (r[i] - lum), 0.0f, 1.0f);
      g[i] = std::clamp(lum + sat * (g[i] - lum), 0.0f, 1.0f);
      b[i] = std::clamp(lum + sat * (b[i] - lum), 0.0f, 1.0f);
    }
  }
  normalize(out.rgb, spec.mean, spec.std);
  return out;
}

Sample augment(const Sample& sample, const AugmentSpec& spec, Rng& rng) {
  spec.validate();
  return apply_augment(sample, spec, draw_augment(spec, rng));
}

void normalize(std::span<float> rgb, const std::array<float, 3>& mean, const std::array<float, 3>& std) {
  check_std(std);
  if (rgb.size() % 3 != 0) throw ConfigError("normalize: expected a planar 3-channel image");
  const std::size_t n = rgb.size() / 3;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < n; ++i) rgb[c * n + i] = (rgb[c * n + i] - mean[c]) / std[c];
  }
}

void denormalize(std::span<float> rgb, const std::array<float, 3>& mean, const std::array<float, 3>& std) {
  check_std(std);
  if (rgb.size() % 3 != 0) throw ConfigError("denormalize: expected a planar 3-channel image");
  const std::size_t n = rgb.size() / 3;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < n; ++i) rgb[c * n + i] = rgb[c * n + i] * std[c] + mean[c];
  }
}

}  // namespace depthfuse
