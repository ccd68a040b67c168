#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "depthfuse/data_io.hpp"

namespace depthfuse {

// Pinhole camera over a ground plane, with upright boxes and spheres resting
// on the plane. Inverse depth of the plane is linear in the image row: the
// top edge sits at d_max and the bottom edge at d_min.
struct SyntheticSceneSpec {
  std::size_t height = 32;
  std::size_t width = 32;
  double d_min = 1.0;
  double d_max = 10.0;
  std::size_t min_primitives = 0;
  std::size_t max_primitives = 4;
  std::uint64_t seed = 1;

  void validate() const;
};

// Plane depth at a (continuous) image row coordinate measured from the top
// edge; pixel row v has its centre at v + 0.5.
double ground_plane_depth(const SyntheticSceneSpec& spec, double y);

// Scene `index` of the stream defined by spec.seed.
Sample render_scene(const SyntheticSceneSpec& spec, std::size_t index);

std::vector<Sample> generate_samples(const SyntheticSceneSpec& spec, std::size_t count,
                                     std::size_t first_index = 0);

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
  std::size_t total() const noexcept { return train + val + test; }
};

// Writes scene_NNNNN.ppm / scene_NNNNN.dpth files and manifest.csv (relative
// paths) into out_dir. Scenes are assigned train, then val, then test.
Manifest generate_synthetic(const SyntheticSceneSpec& spec, const SplitCounts& counts,
                            const std::filesystem::path& out_dir);

}  // namespace depthfuse
