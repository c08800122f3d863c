#include "mono3d/flow_warp.hpp"

#include "mono3d/image_io.hpp"
#include "mono3d/ops.hpp"
#include "mono3d/process.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mono3d {

static_assert(std::endian::native == std::endian::little, ".flo I/O assumes a little-endian host");

FlowField load_flo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open flow file " + path.string());
  float magic = 0;
  std::int32_t w = 0, h = 0;
  in.read(reinterpret_cast<char*>(&magic), 4);
  if (!in) throw std::runtime_error(path.string() + ": truncated header");
  if (magic != kFloMagic) throw std::runtime_error(path.string() + ": bad magic");
  in.read(reinterpret_cast<char*>(&w), 4);
  in.read(reinterpret_cast<char*>(&h), 4);
  if (!in) throw std::runtime_error(path.string() + ": truncated header");
  if (w <= 0 || h <= 0)
    throw std::runtime_error(path.string() + ": invalid dimensions " + std::to_string(w) + "x" +
                             std::to_string(h));
  std::vector<float> data(std::size_t(w) * h * 2);
  in.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.size() * 4));
  if (in.gcount() != std::streamsize(data.size() * 4))
    throw std::runtime_error(path.string() + ": truncated data");
  FlowField flow(h, w);
  const std::size_t n = std::size_t(w) * h;
  for (std::size_t i = 0; i < n; ++i) {
    flow.channel_data(0)[i] = data[2 * i];
    flow.channel_data(1)[i] = data[2 * i + 1];
  }
  if (!flow.all_finite()) throw std::runtime_error(path.string() + ": non-finite flow values");
  return flow;
}

void write_flo(const FlowField& flow, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write flow file " + path.string());
  const float magic = kFloMagic;
  const std::int32_t w = flow.width(), h = flow.height();
  out.write(reinterpret_cast<const char*>(&magic), 4);
  out.write(reinterpret_cast<const char*>(&w), 4);
  out.write(reinterpret_cast<const char*>(&h), 4);
  const std::size_t n = std::size_t(w) * h;
  std::vector<float> data(n * 2);
  for (std::size_t i = 0; i < n; ++i) {
    data[2 * i] = flow.channel_data(0)[i];
    data[2 * i + 1] = flow.channel_data(1)[i];
  }
  out.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size() * 4));
  if (!out) throw std::runtime_error("short write: " + path.string());
}

Frame warp(const Frame& frame, const FlowField& flow) {
  if (!frame.same_spatial(flow))
    throw std::invalid_argument("warp: frame " + frame.shape_string() + " vs flow " +
                                flow.shape_string());
  return Frame(kernels::warp<float>(frame, flow), frame.depth() == BitDepth::kU8
                                                       ? BitDepth::kFloat32
                                                       : frame.depth());
}

std::vector<FlowField> estimate_flows(const std::vector<std::filesystem::path>& frames,
                                      const FlowEstimator& estimator,
                                      const std::filesystem::path& cache_dir) {
  namespace fs = std::filesystem;
  require_placeholders(estimator.command, {"prev", "next", "out"});
  fs::create_directories(cache_dir);
  std::vector<FlowField> flows;
  char name[32];
  for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
    std::snprintf(name, sizeof name, "%04zu.flo", i);
    const fs::path out = cache_dir / name;
    const bool cached = fs::exists(out) &&
                        fs::last_write_time(out) >= fs::last_write_time(frames[i]) &&
                        fs::last_write_time(out) >= fs::last_write_time(frames[i + 1]);
    if (!cached) {
      const std::string cmd = substitute(estimator.command, {{"prev", shell_quote(frames[i])},
                                                             {"next", shell_quote(frames[i + 1])},
                                                             {"out", shell_quote(out)}});
      const auto result = run_command(cmd);
      if (result.exit_code != 0)
        throw std::runtime_error("flow estimator exited with status " +
                                 std::to_string(result.exit_code) + ": " + result.output);
      if (!fs::exists(out))
        throw std::runtime_error("flow estimator produced no output file " + out.string() +
                                 ": " + result.output);
    }
    flows.push_back(load_flo(out));
  }
  return flows;
}

std::vector<FlowField> estimate_flows(const VideoClip& clip, const FlowEstimator& estimator,
                                      const std::filesystem::path& work_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(work_dir / "frames");
  char name[32];
  for (std::size_t i = 0; i < clip.frames.size(); ++i) {
    std::snprintf(name, sizeof name, "%05zu.png", i);
    const fs::path p = work_dir / "frames" / name;
    // Unchanged frames keep their timestamps so cached flows stay valid.
    if (fs::exists(p) && read_png(p).to_bytes() == clip.frames[i].to_bytes()) continue;
    write_png(clip.frames[i], p);
  }
  return estimate_flows(list_frames(work_dir / "frames"), estimator, work_dir / "flow");
}

}  // namespace mono3d
