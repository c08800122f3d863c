#include "mono3d/codec_harness.hpp"

#include "mono3d/degrade.hpp"
#include "mono3d/image_io.hpp"
#include "mono3d/metrics.hpp"
#include "mono3d/pipeline.hpp"
#include "mono3d/process.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>

namespace mono3d {

namespace {

std::string number(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

fs::path fresh_temp_dir() {
  std::random_device rd;
  for (int attempt = 0; attempt < 16; ++attempt) {
    std::ostringstream name;
    name << "mono3d-" << std::hex << rd() << rd();
    const fs::path p = fs::temp_directory_path() / name.str();
    if (fs::create_directory(p)) return p;
  }
  throw std::runtime_error("cannot create a temporary directory");
}

class TempDir {
 public:
  explicit TempDir(const fs::path& requested)
      : path_(requested.empty() ? fresh_temp_dir() : requested), owned_(requested.empty()) {
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    if (owned_) fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  bool owned_;
};

bool runs(const std::string& ffmpeg) {
  return !ffmpeg.empty() && run_command(shell_quote(ffmpeg) + " -version").exit_code == 0;
}

double mean_ms_ssim(const std::vector<Frame>& a, const std::vector<Frame>& b, int scales) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += ms_ssim(a[i], b[i], scales);
  return s / double(a.size());
}

std::vector<Frame> view(const StereoClip& c, bool left) {
  std::vector<Frame> out;
  for (const auto& f : c.frames) out.push_back(left ? f.left : f.right);
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void CodecProfile::validate() const {
  if (codec_id.empty()) throw std::invalid_argument("codec profile without an id");
  std::vector<std::string> enc_keys{"in", "out", "fps"};
  if (rate_controlled) enc_keys.push_back("bitrate_kbps");
  require_placeholders(encode_cmd, enc_keys);
  require_placeholders(decode_cmd, {"in", "out"});
  if (container.empty()) throw std::invalid_argument(codec_id + ": empty container extension");
}

std::string find_ffmpeg() {
  if (const char* env = std::getenv("MONO3D_FFMPEG"); env && runs(env)) return env;
#ifdef MONO3D_FFMPEG_DEFAULT
  if (runs(MONO3D_FFMPEG_DEFAULT)) return MONO3D_FFMPEG_DEFAULT;
#endif
  if (runs("ffmpeg")) return "ffmpeg";
  return {};
}

std::vector<std::string> builtin_codec_ids() { return {"h264", "h265", "vp9", "av1", "lossless"}; }

CodecProfile builtin_profile(const std::string& codec_id, const std::string& ffmpeg) {
  if (ffmpeg.empty()) throw std::runtime_error("no ffmpeg available for profile " + codec_id);
  const std::string f = shell_quote(ffmpeg) + " -y -nostdin -loglevel error";
  const std::string input = f + " -framerate {fps} -i {in}";
  const std::string rate = " -b:v {bitrate_kbps}k -maxrate {bitrate_kbps}k -bufsize {bitrate_kbps}k";
  CodecProfile p;
  p.codec_id = codec_id;
  p.decode_cmd = f + " -i {in} -pix_fmt rgb24 -start_number 0 {out}";
  if (codec_id == "h264") {
    p.encode_cmd = input + " -c:v libx264 -preset medium" + rate +
                   " -x264-params nal-hrd=cbr -pix_fmt yuv420p {out}";
    p.container = "mkv";
  } else if (codec_id == "h265") {
    p.encode_cmd = input + " -c:v libx265 -preset medium" + rate +
                   " -x265-params log-level=error:strict-cbr=1 -pix_fmt yuv420p {out}";
    p.container = "mkv";
  } else if (codec_id == "vp9") {
    p.encode_cmd = input + " -c:v libvpx-vp9 -deadline good -cpu-used 4" + rate +
                   " -minrate {bitrate_kbps}k -pix_fmt yuv420p {out}";
    p.container = "webm";
  } else if (codec_id == "av1") {
    p.encode_cmd = input + " -c:v libaom-av1 -cpu-used 6 -row-mt 1" + rate +
                   " -pix_fmt yuv420p {out}";
    p.container = "mkv";
  } else if (codec_id == "lossless") {
    p.encode_cmd = input + " -c:v ffv1 -pix_fmt bgr0 {out}";
    p.container = "mkv";
    p.rate_controlled = false;
  } else {
    throw std::invalid_argument("unknown codec '" + codec_id + "' (known: h264, h265, vp9, av1, lossless)");
  }
  return p;
}

double measured_bitrate_mbps(std::uintmax_t bytes, std::size_t frames, double fps) {
  if (frames == 0 || !(fps > 0)) throw std::invalid_argument("bitrate needs frames and a positive fps");
  return 8.0 * double(bytes) / (double(frames) / fps) / 1e6;
}

RoundTrip encode_roundtrip(const VideoClip& clip, const CodecProfile& profile,
                           double target_kbps, const fs::path& work_dir) {
  clip.validate();
  profile.validate();
  TempDir work(work_dir);
  const fs::path in_dir = work.path() / "in", out_dir = work.path() / "out";
  fs::remove_all(in_dir);
  fs::remove_all(out_dir);
  fs::create_directories(out_dir);
  write_frame_dir(clip, in_dir);
  const fs::path stream = work.path() / ("stream." + profile.container);
  fs::remove(stream);

  const std::map<std::string, std::string> enc{
      {"in", shell_quote(in_dir / "%05d.png")},
      {"out", shell_quote(stream)},
      {"bitrate_kbps", number(target_kbps)},
      {"fps", number(clip.fps)}};
  const auto e = run_command(substitute(profile.encode_cmd, enc));
  if (e.exit_code != 0 || !fs::exists(stream))
    throw std::runtime_error(profile.codec_id + " encoder failed (status " +
                             std::to_string(e.exit_code) + "): " + e.output);
  const auto d = run_command(substitute(
      profile.decode_cmd, {{"in", shell_quote(stream)}, {"out", shell_quote(out_dir / "%05d.png")}}));
  if (d.exit_code != 0)
    throw std::runtime_error(profile.codec_id + " decoder failed (status " +
                             std::to_string(d.exit_code) + "): " + d.output);

  RoundTrip r;
  r.decoded = read_frame_dir(out_dir, clip.fps);
  if (r.decoded.size() != clip.size())
    throw std::runtime_error(profile.codec_id + ": decoded " + std::to_string(r.decoded.size()) +
                             " frames, encoded " + std::to_string(clip.size()));
  if (r.decoded.height() != clip.height() || r.decoded.width() != clip.width())
    throw std::runtime_error(profile.codec_id + ": decoded frame size differs from the input");
  r.bytes = fs::file_size(stream);
  r.bitrate_mbps = measured_bitrate_mbps(r.bytes, clip.size(), clip.fps);
  return r;
}

VideoClip side_by_side_pack(const StereoClip& clip) {
  clip.validate();
  VideoClip out;
  out.fps = clip.fps;
  const int h = clip.height(), w = clip.width();
  for (const auto& f : clip.frames) {
    Frame p(h, 2 * w, f.left.depth());
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          p(c, y, x) = f.left(c, y, x);
          p(c, y, x + w) = f.right(c, y, x);
        }
    out.frames.push_back(std::move(p));
  }
  return out;
}

StereoClip side_by_side_unpack(const VideoClip& packed) {
  packed.validate();
  if (packed.width() % 2 != 0)
    throw std::invalid_argument("side_by_side_unpack: odd width " + std::to_string(packed.width()));
  StereoClip out;
  out.fps = packed.fps;
  const int w = packed.width() / 2;
  for (const auto& p : packed.frames)
    out.frames.emplace_back(crop(p, 0, 0, p.height(), w), crop(p, 0, w, p.height(), w));
  return out;
}

std::vector<RDPoint> rd_sweep(const Mono3dModel<float>& model, std::span<const StereoClip> clips,
                              std::span<const CodecProfile> profiles,
                              std::span<const double> bitrates_kbps, const RdOptions& options) {
  if (clips.empty()) throw std::invalid_argument("rd_sweep: no clips");
  if (profiles.empty()) throw std::invalid_argument("rd_sweep: no codec profiles");
  if (bitrates_kbps.empty()) throw std::invalid_argument("rd_sweep: no bitrates");
  std::vector<VideoClip> mono;
  std::vector<VideoClip> packed;
  for (const auto& c : clips) {
    mono.push_back(mononize_clip(model, c).mono);
    if (options.side_by_side) packed.push_back(side_by_side_pack(c));
  }

  TempDir work(options.work_dir);
  std::vector<RDPoint> points;
  for (const auto& profile : profiles)
    for (double kbps : bitrates_kbps)
      for (StreamKind kind : {StreamKind::kMononized, StreamKind::kSideBySide}) {
        if (kind == StreamKind::kSideBySide && !options.side_by_side) continue;
        RDPoint pt;
        pt.codec_id = profile.codec_id;
        pt.stream_kind = kind;
        pt.target_kbps = kbps;
        for (std::size_t i = 0; i < clips.size(); ++i) {
          const auto job = work.path() / (profile.codec_id + "_" + number(kbps) + "_" +
                                           to_string(kind) + "_" + std::to_string(i));
          StereoClip restored;
          if (kind == StreamKind::kMononized) {
            const auto rt = encode_roundtrip(mono[i], profile, kbps, job);
            pt.bitrate_mbps += rt.bitrate_mbps;
            restored = restore_clip(model, rt.decoded).stereo;
          } else {
            // The baseline carries both views in the same budget.
            const auto rt = encode_roundtrip(packed[i], profile, kbps, job);
            pt.bitrate_mbps += rt.bitrate_mbps;
            restored = side_by_side_unpack(rt.decoded);
          }
          pt.quality_left +=
              mean_ms_ssim(view(restored, true), view(clips[i], true), options.msssim_scales);
          pt.quality_right +=
              mean_ms_ssim(view(restored, false), view(clips[i], false), options.msssim_scales);
        }
        const double n = double(clips.size());
        pt.bitrate_mbps /= n;
        pt.quality_left /= n;
        pt.quality_right /= n;
        pt.quality = 0.5 * (pt.quality_left + pt.quality_right);
        points.push_back(pt);
      }
  return points;
}

std::string rd_csv(std::span<const RDPoint> points) {
  std::ostringstream out;
  out << std::setprecision(8)
      << "codec_id,stream_kind,target_kbps,measured_mbps,ms_ssim_left,ms_ssim_right,ms_ssim_mean\n";
  for (const auto& p : points)
    out << p.codec_id << ',' << to_string(p.stream_kind) << ',' << p.target_kbps << ','
        << p.bitrate_mbps << ',' << p.quality_left << ',' << p.quality_right << ',' << p.quality
        << '\n';
  return out.str();
}

std::vector<TimingRow> timing_bench(const Mono3dModel<float>& model,
                                    std::span<const std::pair<int, int>> resolutions, int runs,
                                    int warmup) {
  if (runs < 1 || warmup < 0) throw std::invalid_argument("timing_bench: runs must be >= 1");
  NoGradGuard no_grad;
  using clock = std::chrono::steady_clock;
  std::vector<TimingRow> rows;
  Rng rng(7);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  for (const auto& [h, w] : resolutions) {
    require_pyramid_dims(h, w);
    Planar<float> l(3, h, w), r(3, h, w);
    for (Eigen::Index i = 0; i < l.size(); ++i) {
      l.data()[i] = unit(rng);
      r.data()[i] = unit(rng);
    }
    const auto L = Var<float>::constant(l), R = Var<float>::constant(r);
    FeaturePyramid<float> enc_prev, dec_prev_l, dec_prev_r;
    std::vector<double> enc_ms, dec_ms;
    for (int i = 0; i < warmup + runs; ++i) {
      const bool has_prev = i > 0;
      const auto t0 = clock::now();
      auto e = model.encode(L, R, has_prev ? &enc_prev : nullptr);
      auto m = quantize(e.mono);
      const auto t1 = clock::now();
      auto d = model.decode(m, has_prev ? &dec_prev_l : nullptr, has_prev ? &dec_prev_r : nullptr);
      const auto t2 = clock::now();
      enc_prev = std::move(e.fused);
      dec_prev_l = std::move(d.left_pyramid);
      dec_prev_r = std::move(d.right_pyramid);
      if (i < warmup) continue;
      enc_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      dec_ms.push_back(std::chrono::duration<double, std::milli>(t2 - t1).count());
    }
    rows.push_back({h, w, runs, median(enc_ms), median(dec_ms)});
  }
  return rows;
}

}  // namespace mono3d
