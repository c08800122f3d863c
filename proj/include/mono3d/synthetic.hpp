#pragma once

#include "mono3d/domain.hpp"

#include <cstdint>

namespace mono3d {

/// Procedural stereo video with exact flows: a smoothly textured background
/// panning at constant speed and a few textured discs moving over it, each
/// layer with its own horizontal disparity (nearer layers shift more).
struct SyntheticScene {
  int frames = 8;
  int height = 128;
  int width = 128;
  int objects = 3;
  double background_disparity = 2.0;  // px
  double object_disparity_min = 4.0;  // px
  double object_disparity_max = 8.0;  // px
  double max_speed = 2.0;             // px per frame
  double fps = 25.0;
  std::uint64_t seed = 1;
};

/// Flows follow the backward-warp convention of `warp`: content moving by
/// +d between frames has flow -d at its new position.
StereoClip make_synthetic_clip(const SyntheticScene& scene);

}  // namespace mono3d
