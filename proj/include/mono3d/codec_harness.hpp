#pragma once

#include "mono3d/domain.hpp"
#include "mono3d/model.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mono3d {

/// External encoder/decoder pair driven through command templates.
/// `encode_cmd` sees {in} (a printf-style PNG pattern), {out} (the encoded
/// file), {bitrate_kbps} and {fps}; `decode_cmd` sees {in} (the encoded
/// file) and {out} (a PNG pattern).
struct CodecProfile {
  std::string codec_id;
  std::string encode_cmd;
  std::string decode_cmd;
  std::string container = "mkv";
  bool rate_controlled = true;

  void validate() const;
};

/// `MONO3D_FFMPEG`, then the path found at build time, then `ffmpeg` on
/// PATH. Empty when none runs.
std::string find_ffmpeg();

/// h264, h265, vp9, av1 (rate-controlled) and lossless (FFV1 RGB).
std::vector<std::string> builtin_codec_ids();
CodecProfile builtin_profile(const std::string& codec_id, const std::string& ffmpeg);

struct RoundTrip {
  VideoClip decoded;
  std::uintmax_t bytes = 0;
  double bitrate_mbps = 0.0;
};

/// 8 * bytes / (frames / fps) / 1e6.
double measured_bitrate_mbps(std::uintmax_t bytes, std::size_t frames, double fps);

/// Writes PNGs, encodes, decodes with the profile's decoder alone and reads
/// the frames back. `work_dir` is created and kept; empty means a fresh
/// temporary directory that is removed afterwards.
RoundTrip encode_roundtrip(const VideoClip& clip, const CodecProfile& profile,
                           double target_kbps, const std::filesystem::path& work_dir = {});

VideoClip side_by_side_pack(const StereoClip& clip);
StereoClip side_by_side_unpack(const VideoClip& packed);

struct RdOptions {
  int msssim_scales = 5;
  bool side_by_side = true;
  std::filesystem::path work_dir;  // empty: temporary
};

/// For each profile and bitrate: mononize, round-trip, restore and score
/// MS-SSIM of the restored views against the originals; plus the
/// side-by-side baseline. Quality and bitrate are averaged over clips.
std::vector<RDPoint> rd_sweep(const Mono3dModel<float>& model, std::span<const StereoClip> clips,
                              std::span<const CodecProfile> profiles,
                              std::span<const double> bitrates_kbps, const RdOptions& options);

std::string rd_csv(std::span<const RDPoint> points);

struct TimingRow {
  int height = 0;
  int width = 0;
  int runs = 0;
  double encode_ms = 0.0;  // median per frame
  double decode_ms = 0.0;
};

/// Median over `runs` warm, recurrent frames per resolution; frames are
/// prepared beforehand so only network time is measured.
std::vector<TimingRow> timing_bench(const Mono3dModel<float>& model,
                                    std::span<const std::pair<int, int>> resolutions,
                                    int runs = 50, int warmup = 3);

}  // namespace mono3d
