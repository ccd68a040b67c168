#include "depthfuse/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "depthfuse/error.hpp"
#include "depthfuse/random.hpp"

namespace depthfuse {
namespace {

struct Camera {
  double focal;          // pixels
  double inv_far;        // 1 / d_max
  double inv_span;       // 1/d_min - 1/d_max
  double height;         // camera height above the plane, metres
  double cx;

  // Row coordinate where the plane sits at depth z.
  double row_at_depth(double z, double rows) const { return rows * (1.0 / z - inv_far) / inv_span; }
};

Camera make_camera(const SyntheticSceneSpec& spec) {
  Camera cam;
  cam.focal = static_cast<double>(spec.height);
  cam.inv_far = 1.0 / spec.d_max;
  cam.inv_span = 1.0 / spec.d_min - 1.0 / spec.d_max;
  cam.height = static_cast<double>(spec.height) / (cam.focal * cam.inv_span);
  cam.cx = 0.5 * static_cast<double>(spec.width);
  return cam;
}

enum class Kind { kBox, kSphere };

struct Primitive {
  Kind kind;
  double depth;       // box face depth, or sphere centre depth
  double size_x;      // metres: box width or sphere radius
  double size_y;      // metres: box height
  double center_x;    // pixels
  double albedo[3];
};

struct Rgb {
  double r, g, b;
};

// Atmospheric falloff towards a haze colour; depth is readable from how
// washed-out a surface looks.
Rgb shade(const double albedo[3], double z, const SyntheticSceneSpec& spec) {
  const double t = std::exp(-std::log(6.0) * (z - spec.d_min) / (spec.d_max - spec.d_min));
  const double haze[3] = {0.78, 0.82, 0.90};
  return Rgb{albedo[0] * t + haze[0] * (1.0 - t), albedo[1] * t + haze[1] * (1.0 - t),
             albedo[2] * t + haze[2] * (1.0 - t)};
}

}  // namespace

void SyntheticSceneSpec::validate() const {
  if (height == 0 || width == 0) throw ConfigError("synthetic: image size must be positive");
  if (!(d_min > 0.0) || !(d_min < d_max)) throw ConfigError("synthetic: need 0 < d_min < d_max");
  if (min_primitives > max_primitives) throw ConfigError("synthetic: min_primitives > max_primitives");
}

double ground_plane_depth(const SyntheticSceneSpec& spec, double y) {
  const Camera cam = make_camera(spec);
  return 1.0 / (cam.inv_far + cam.inv_span * y / static_cast<double>(spec.height));
}

Sample render_scene(const SyntheticSceneSpec& spec, std::size_t index) {
  spec.validate();
  const Camera cam = make_camera(spec);
  Rng rng(derive_seed(spec.seed, index));
  const std::size_t h = spec.height, w = spec.width, n = h * w;
  const double rows = static_cast<double>(h);

  std::vector<Primitive> prims(spec.min_primitives +
                               uniform_index(rng, spec.max_primitives - spec.min_primitives + 1));
  const double log_near = std::log(spec.d_min * 1.2), log_far = std::log(spec.d_max * 0.85);
  for (auto& p : prims) {
    p.kind = bernoulli(rng, 0.5) ? Kind::kBox : Kind::kSphere;
    p.depth = std::exp(uniform(rng, log_near, log_far));
    p.size_x = uniform(rng, 0.3, 1.0) * cam.height;
    p.size_y = uniform(rng, 0.5, 1.5) * cam.height;
    p.center_x = uniform(rng, 0.0, static_cast<double>(w));
    for (double& a : p.albedo) a = uniform(rng, 0.05, 0.6);
  }
  const double plane_albedo[3] = {0.35, 0.30, 0.22};

  Sample s;
  s.height = h;
  s.width = w;
  s.rgb.assign(3 * n, 0.0f);
  s.depth.assign(n, 0.0f);
  s.valid.assign(n, 1);
  char id[32];
  std::snprintf(id, sizeof(id), "scene_%05zu", index);
  s.id = id;

  for (std::size_t v = 0; v < h; ++v) {
    const double y = static_cast<double>(v) + 0.5;
    for (std::size_t u = 0; u < w; ++u) {
      const double x = static_cast<double>(u) + 0.5;
      double z = ground_plane_depth(spec, y);
      // world-anchored checker on the plane, 1 camera-height tiles
      const double wx = (x - cam.cx) * z / cam.focal / cam.height;
      const double wz = z / cam.height;
      const bool dark = (static_cast<long>(std::floor(wx)) + static_cast<long>(std::floor(wz))) % 2 != 0;
      double albedo[3];
      for (int c = 0; c < 3; ++c) albedo[c] = plane_albedo[c] * (dark ? 0.75 : 1.0);

      for (const auto& p : prims) {
        const double bottom = cam.row_at_depth(p.depth, rows);
        double hit = INFINITY;
        if (p.kind == Kind::kBox) {
          const double half_w = 0.5 * cam.focal * p.size_x / p.depth;
          const double top = bottom - cam.focal * p.size_y / p.depth;
          if (std::abs(x - p.center_x) <= half_w && y >= top && y <= bottom) hit = p.depth;
        } else {
          const double radius_px = cam.focal * p.size_x / p.depth;
          const double cy = bottom - radius_px;
          const double r2 = ((x - p.center_x) * (x - p.center_x) + (y - cy) * (y - cy)) / (radius_px * radius_px);
          if (r2 <= 1.0) hit = p.depth - p.size_x * std::sqrt(1.0 - r2);
        }
        if (hit < z) {
          z = hit;
          std::copy(std::begin(p.albedo), std::end(p.albedo), albedo);
        }
      }
      z = std::clamp(z, spec.d_min, spec.d_max);
      const Rgb c = shade(albedo, z, spec);
      const std::size_t i = v * w + u;
      // stored at 8-bit precision so a write/read cycle is lossless
      s.rgb[i] = static_cast<float>(std::round(std::clamp(c.r, 0.0, 1.0) * 255.0)) / 255.0f;
      s.rgb[n + i] = static_cast<float>(std::round(std::clamp(c.g, 0.0, 1.0) * 255.0)) / 255.0f;
      s.rgb[2 * n + i] = static_cast<float>(std::round(std::clamp(c.b, 0.0, 1.0) * 255.0)) / 255.0f;
      s.depth[i] = static_cast<float>(z);
    }
  }
  return s;
}

std::vector<Sample> generate_samples(const SyntheticSceneSpec& spec, std::size_t count,
                                     std::size_t first_index) {
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(render_scene(spec, first_index + i));
  return out;
}

Manifest generate_synthetic(const SyntheticSceneSpec& spec, const SplitCounts& counts,
                            const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir.string() + ": " + ec.message());
  Manifest manifest;
  for (std::size_t i = 0; i < counts.total(); ++i) {
    const Sample s = render_scene(spec, i);
    const std::string rgb = s.id + ".ppm";
    const std::string depth = s.id + ".dpth";
    write_sample(out_dir / rgb, out_dir / depth, s);
    const Split split = i < counts.train ? Split::kTrain
                        : i < counts.train + counts.val ? Split::kVal
                                                        : Split::kTest;
    manifest.entries.push_back(ManifestEntry{rgb, depth, split});
  }
  write_manifest(out_dir / "manifest.csv", manifest);
  return manifest;
}

}  // namespace depthfuse
