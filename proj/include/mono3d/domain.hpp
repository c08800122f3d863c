#pragma once

#include "mono3d/planar.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mono3d {

using Rng = std::mt19937_64;

enum class BitDepth { kFloat32, kU8 };

/// RGB image in [0,1]. Values tagged kU8 sit exactly on the 1/255 grid.
class Frame : public Planar<float> {
 public:
  Frame() = default;
  Frame(int height, int width, BitDepth depth = BitDepth::kFloat32);
  explicit Frame(Planar<float> pixels, BitDepth depth = BitDepth::kFloat32);

  BitDepth depth() const { return depth_; }
  void set_depth(BitDepth d) { depth_ = d; }

  /// Interleaved RGB bytes, row-major.
  static Frame from_bytes(std::span<const std::uint8_t> rgb, int height, int width);
  std::vector<std::uint8_t> to_bytes() const;

  bool all_finite() const;
  bool on_u8_grid() const;

 private:
  BitDepth depth_ = BitDepth::kFloat32;
};

std::uint8_t to_byte(float v);
inline float from_byte(std::uint8_t b) { return float(b) / 255.0f; }

/// Clamp to [0,1], round half away from zero onto the 1/255 grid.
Frame frame_to_u8(const Frame& f);
/// Reinterprets a byte grid frame as float; values are unchanged.
Frame u8_to_frame(const Frame& f);

struct StereoFrame {
  Frame left;
  Frame right;

  StereoFrame() = default;
  StereoFrame(Frame l, Frame r);
};

/// Dense 2-channel displacement field (u, v) in pixels. Consumed by backward
/// warping: warp(prev, flow)(x, y) samples prev at (x + u, y + v).
class FlowField : public Planar<float> {
 public:
  FlowField() = default;
  FlowField(int height, int width) : Planar<float>(2, height, width) {}
  explicit FlowField(Planar<float> data);

  float u(int y, int x) const { return (*this)(0, y, x); }
  float v(int y, int x) const { return (*this)(1, y, x); }
  bool all_finite() const { return matrix().allFinite(); }
};

struct VideoClip {
  std::vector<Frame> frames;
  double fps = 25.0;

  VideoClip() = default;
  VideoClip(std::vector<Frame> f, double rate);
  std::size_t size() const { return frames.size(); }
  int height() const { return frames.at(0).height(); }
  int width() const { return frames.at(0).width(); }
  void validate() const;
};

struct StereoClip {
  std::vector<StereoFrame> frames;
  double fps = 25.0;
  std::optional<std::vector<FlowField>> flows_left;
  std::optional<std::vector<FlowField>> flows_right;

  std::size_t size() const { return frames.size(); }
  int height() const { return frames.at(0).left.height(); }
  int width() const { return frames.at(0).left.width(); }
  bool has_flows() const { return flows_left.has_value() && flows_right.has_value(); }
  void validate() const;

  VideoClip left_stream() const;
  VideoClip right_stream() const;
};

/// Scalars of the objective and training schedule.
struct HyperParams {
  double lambda1 = 1.7;
  double lambda2 = 1.3;
  double alpha = 0.1;
  double beta = 0.99;
  double gamma = 10.0;
  double eps_charbonnier = 1e-6;
  double eps_temporal = 1e-3;
  int N_seq = 4;
  int B_batch = 16;
  int crop = 256;
  double lr_init = 1e-4;
  double plateau_factor = 3.33;
  int epochs_image = 200;
  int epochs_video = 300;

  void validate() const;
  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

enum class TrainMode { kImage, kVideo };

struct TrainConfig {
  TrainMode mode = TrainMode::kImage;
  bool cns_enabled = false;
  std::string dataset;
  std::string checkpoint_dir = "checkpoints";
  std::string init_checkpoint;
  std::uint64_t seed = 0;
  /// 0 means the mode's epoch count from HyperParams.
  int max_epochs = 0;
  /// 0 means one pass over the training sequences per epoch.
  int iterations_per_epoch = 0;
  /// Hard iteration budget across all epochs; 0 disables it.
  int max_iterations = 0;
  int plateau_patience = 10;
  double plateau_threshold = 1e-4;
  std::array<int, 3> channels{64, 128, 192};
  int residual_blocks = 3;
  int cns_quality_min = 30;
  int cns_quality_max = 70;
  double cns_tau = 4.0;
  int cns_jitter_max_shift = 2;
  double cns_inter_probability = 0.75;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct Config {
  HyperParams hp;
  TrainConfig train;
  friend bool operator==(const Config&, const Config&) = default;
};

/// Flat `key = value` text; `#` starts a comment. Absent keys keep defaults,
/// unknown keys are rejected.
Config load_config(const std::filesystem::path& path);
Config parse_config(const std::string& text, const std::string& origin = "<string>");
std::string format_config(const Config& c);
void save_config(const Config& c, const std::filesystem::path& path);
std::vector<std::string> config_keys();

enum class StreamKind { kMononized, kSideBySide };
std::string to_string(StreamKind k);

struct RDPoint {
  double bitrate_mbps = 0.0;
  double quality = 0.0;
  std::string codec_id;
  StreamKind stream_kind = StreamKind::kMononized;
  double target_kbps = 0.0;
  double quality_left = 0.0;
  double quality_right = 0.0;

  void validate() const;
};

}  // namespace mono3d
