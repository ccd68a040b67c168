#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "depthfuse/data_io.hpp"
#include "depthfuse/random.hpp"

namespace depthfuse {

struct AugmentSpec {
  double scale_min = 1.0;
  double scale_max = 1.5;
  double rotation_deg = 5.0;  // angle drawn from [-rotation_deg, +rotation_deg]
  double jitter_min = 0.6;
  double jitter_max = 1.4;
  double flip_probability = 0.5;
  std::array<float, 3> mean{0.5f, 0.5f, 0.5f};
  std::array<float, 3> std{0.25f, 0.25f, 0.25f};

  void validate() const;
};

// Concrete random choices for one sample.
struct AugmentDraw {
  double scale = 1.0;
  double rotation_deg = 0.0;
  bool flip = false;
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
};

AugmentDraw draw_augment(const AugmentSpec& spec, Rng& rng);

// Scale -> rotate -> flip -> jitter -> normalize. Geometry is applied in a
// single inverse-mapped resampling pass: colour bilinear, depth
// nearest-neighbour. Scaling zooms about the centre by s and divides depth
// by s; pixels that map outside the source, or onto invalid source pixels,
// become invalid.
Sample apply_augment(const Sample& sample, const AugmentSpec& spec, const AugmentDraw& draw);

Sample augment(const Sample& sample, const AugmentSpec& spec, Rng& rng);

// Geometric step only (no jitter or normalization).
Sample apply_geometry(const Sample& sample, const AugmentDraw& draw);

// Source coordinate (continuous, pixel centres at +0.5) that output pixel
// (x, y) samples under the draw's geometry.
struct SourcePoint {
  double x;
  double y;
};
SourcePoint source_point(const AugmentDraw& draw, std::size_t width, std::size_t height, double x,
                         double y);

// Per-channel (x - mean) / std over a planar 3 x H x W image, in place.
void normalize(std::span<float> rgb, const std::array<float, 3>& mean, const std::array<float, 3>& std);
void denormalize(std::span<float> rgb, const std::array<float, 3>& mean, const std::array<float, 3>& std);

}  // namespace depthfuse
