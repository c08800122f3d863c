#pragma once

#include "mono3d/domain.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace mono3d {

/// Middlebury `.flo` tag, the float spelling of "PIEH".
inline constexpr float kFloMagic = 202021.25f;

/// Little-endian Middlebury flow file: magic, int32 width, int32 height,
/// then row-major interleaved (u, v) float32.
FlowField load_flo(const std::filesystem::path& path);
void write_flo(const FlowField& flow, const std::filesystem::path& path);

/// Backward warp with bilinear sampling and clamp-to-edge coordinates.
Frame warp(const Frame& frame, const FlowField& flow);

/// External optical-flow estimator, invoked once per consecutive frame pair
/// with `{prev}`, `{next}` and `{out}` (a .flo path) substituted.
struct FlowEstimator {
  std::string command;
};

/// Flow i relates frames[i] to frames[i+1] and is cached as
/// `cache_dir/%04d.flo`; a cached file newer than both frames is reused.
std::vector<FlowField> estimate_flows(const std::vector<std::filesystem::path>& frames,
                                      const FlowEstimator& estimator,
                                      const std::filesystem::path& cache_dir);

/// Writes the clip's frames to `work_dir/frames` and estimates into
/// `work_dir/flow`.
std::vector<FlowField> estimate_flows(const VideoClip& clip, const FlowEstimator& estimator,
                                      const std::filesystem::path& work_dir);

}  // namespace mono3d
