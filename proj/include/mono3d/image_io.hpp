#pragma once

#include "mono3d/domain.hpp"

#include <filesystem>
#include <vector>

namespace mono3d {

namespace fs = std::filesystem;

/// 8-bit RGB PNG. Alpha is dropped, grey is expanded.
Frame read_png(const fs::path& path);
void write_png(const Frame& frame, const fs::path& path);

/// Sorted `*.png` files of a directory.
std::vector<fs::path> list_frames(const fs::path& dir);
VideoClip read_frame_dir(const fs::path& dir, double fps = 25.0);
/// Writes `%05d.png`, starting at 0.
void write_frame_dir(const VideoClip& clip, const fs::path& dir);

/// Directory holding `left/` and `right/` frame folders, optionally with
/// `flow_left/` and `flow_right/` (`%04d.flo`, flow i relates frames i, i+1).
StereoClip read_stereo_dir(const fs::path& dir, double fps = 25.0);
void write_stereo_dir(const StereoClip& clip, const fs::path& dir);

/// YUV4MPEG2 with BT.601 full-range conversion; C444 and C420 (jpeg siting).
VideoClip read_y4m(const fs::path& path);
void write_y4m(const VideoClip& clip, const fs::path& path, bool subsample_420 = false);

/// Reads either a frame directory or a `.y4m` file.
VideoClip read_video(const fs::path& path, double fps = 25.0);

}  // namespace mono3d
