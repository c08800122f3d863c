#include "mono3d/image_io.hpp"

#include "mono3d/flow_warp.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mono3d {

Frame read_png(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw std::runtime_error("cannot read PNG " + path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " + msg);
  }
  return Frame::from_bytes(buf, int(image.height), int(image.width));
}

void write_png(const Frame& frame, const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = png_uint_32(frame.width());
  image.height = png_uint_32(frame.height());
  image.format = PNG_FORMAT_RGB;
  const auto bytes = frame.to_bytes();
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr))
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + image.message);
}

std::vector<fs::path> list_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

VideoClip read_frame_dir(const fs::path& dir, double fps) {
  const auto paths = list_frames(dir);
  if (paths.empty()) throw std::runtime_error("no PNG frames in " + dir.string());
  std::vector<Frame> frames;
  for (const auto& p : paths) frames.push_back(read_png(p));
  return VideoClip(std::move(frames), fps);
}

void write_frame_dir(const VideoClip& clip, const fs::path& dir) {
  fs::create_directories(dir);
  char name[32];
  for (std::size_t i = 0; i < clip.frames.size(); ++i) {
    std::snprintf(name, sizeof name, "%05zu.png", i);
    write_png(clip.frames[i], dir / name);
  }
}

namespace {

std::vector<FlowField> read_flow_dir(const fs::path& dir, std::size_t expected) {
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".flo") paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  if (paths.size() != expected)
    throw std::runtime_error(dir.string() + ": expected " + std::to_string(expected) +
                             " .flo files, found " + std::to_string(paths.size()));
  std::vector<FlowField> flows;
  for (const auto& p : paths) flows.push_back(load_flo(p));
  return flows;
}

}  // namespace

StereoClip read_stereo_dir(const fs::path& dir, double fps) {
  StereoClip clip;
  clip.fps = fps;
  auto left = read_frame_dir(dir / "left", fps);
  auto right = read_frame_dir(dir / "right", fps);
  if (left.size() != right.size())
    throw std::runtime_error(dir.string() + ": left/right frame counts differ");
  for (std::size_t i = 0; i < left.size(); ++i)
    clip.frames.emplace_back(std::move(left.frames[i]), std::move(right.frames[i]));
  if (fs::is_directory(dir / "flow_left"))
    clip.flows_left = read_flow_dir(dir / "flow_left", clip.size() - 1);
  if (fs::is_directory(dir / "flow_right"))
    clip.flows_right = read_flow_dir(dir / "flow_right", clip.size() - 1);
  clip.validate();
  return clip;
}

void write_stereo_dir(const StereoClip& clip, const fs::path& dir) {
  write_frame_dir(clip.left_stream(), dir / "left");
  write_frame_dir(clip.right_stream(), dir / "right");
  char name[32];
  auto write_flows = [&](const std::optional<std::vector<FlowField>>& flows, const char* sub) {
    if (!flows) return;
    fs::create_directories(dir / sub);
    for (std::size_t i = 0; i < flows->size(); ++i) {
      std::snprintf(name, sizeof name, "%04zu.flo", i);
      write_flo((*flows)[i], dir / sub / name);
    }
  };
  write_flows(clip.flows_left, "flow_left");
  write_flows(clip.flows_right, "flow_right");
}

// ---------------------------------------------------------------------------
// YUV4MPEG2

namespace {

struct Yuv {
  double y, u, v;
};

Yuv rgb_to_yuv(double r, double g, double b) {
  return {0.299 * r + 0.587 * g + 0.114 * b, -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0,
          0.5 * r - 0.418688 * g - 0.081312 * b + 128.0};
}

std::uint8_t sat(double v) { return std::uint8_t(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

VideoClip read_y4m(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  if (header.rfind("YUV4MPEG2", 0) != 0) throw std::runtime_error(path.string() + ": not a y4m file");
  int W = 0, H = 0;
  double fps = 25.0;
  std::string chroma = "420jpeg";
  std::istringstream hs(header.substr(9));
  std::string tok;
  while (hs >> tok) {
    if (tok[0] == 'W') W = std::stoi(tok.substr(1));
    else if (tok[0] == 'H') H = std::stoi(tok.substr(1));
    else if (tok[0] == 'F') {
      auto colon = tok.find(':');
      fps = std::stod(tok.substr(1, colon - 1)) / std::stod(tok.substr(colon + 1));
    } else if (tok[0] == 'C') chroma = tok.substr(1);
  }
  if (W <= 0 || H <= 0) throw std::runtime_error(path.string() + ": missing dimensions");
  const bool is444 = chroma.rfind("444", 0) == 0;
  if (!is444 && chroma.rfind("420", 0) != 0)
    throw std::runtime_error(path.string() + ": unsupported chroma " + chroma);
  const int cw = is444 ? W : (W + 1) / 2, ch = is444 ? H : (H + 1) / 2;
  std::vector<std::uint8_t> y(std::size_t(W) * H), u(std::size_t(cw) * ch), v(u.size());
  std::vector<Frame> frames;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("FRAME", 0) != 0) throw std::runtime_error(path.string() + ": bad frame header");
    in.read(reinterpret_cast<char*>(y.data()), std::streamsize(y.size()));
    in.read(reinterpret_cast<char*>(u.data()), std::streamsize(u.size()));
    in.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.size()));
    if (!in) throw std::runtime_error(path.string() + ": truncated frame");
    std::vector<std::uint8_t> rgb(std::size_t(W) * H * 3);
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        const std::size_t ci = is444 ? std::size_t(r) * W + c : std::size_t(r / 2) * cw + c / 2;
        const double Y = y[std::size_t(r) * W + c], Cb = u[ci] - 128.0, Cr = v[ci] - 128.0;
        std::uint8_t* px = &rgb[(std::size_t(r) * W + c) * 3];
        px[0] = sat(Y + 1.402 * Cr);
        px[1] = sat(Y - 0.344136 * Cb - 0.714136 * Cr);
        px[2] = sat(Y + 1.772 * Cb);
      }
    frames.push_back(Frame::from_bytes(rgb, H, W));
  }
  return VideoClip(std::move(frames), fps);
}

void write_y4m(const VideoClip& clip, const fs::path& path, bool subsample_420) {
  clip.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const int W = clip.width(), H = clip.height();
  const int fps_num = int(std::lround(clip.fps * 1000)), fps_den = 1000;
  out << "YUV4MPEG2 W" << W << " H" << H << " F" << fps_num << ":" << fps_den << " Ip A1:1 C"
      << (subsample_420 ? "420jpeg" : "444") << "\n";
  const int cw = subsample_420 ? (W + 1) / 2 : W, ch = subsample_420 ? (H + 1) / 2 : H;
  for (const auto& f : clip.frames) {
    std::vector<std::uint8_t> y(std::size_t(W) * H);
    std::vector<double> u(std::size_t(cw) * ch, 0.0), v(u.size(), 0.0), n(u.size(), 0.0);
    const auto bytes = f.to_bytes();
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        const std::uint8_t* px = &bytes[(std::size_t(r) * W + c) * 3];
        const Yuv p = rgb_to_yuv(px[0], px[1], px[2]);
        y[std::size_t(r) * W + c] = sat(p.y);
        const std::size_t ci =
            subsample_420 ? std::size_t(r / 2) * cw + c / 2 : std::size_t(r) * W + c;
        u[ci] += p.u;
        v[ci] += p.v;
        n[ci] += 1;
      }
    out << "FRAME\n";
    out.write(reinterpret_cast<const char*>(y.data()), std::streamsize(y.size()));
    std::vector<std::uint8_t> plane(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) plane[i] = sat(u[i] / n[i]);
    out.write(reinterpret_cast<const char*>(plane.data()), std::streamsize(plane.size()));
    for (std::size_t i = 0; i < v.size(); ++i) plane[i] = sat(v[i] / n[i]);
    out.write(reinterpret_cast<const char*>(plane.data()), std::streamsize(plane.size()));
  }
}

VideoClip read_video(const fs::path& path, double fps) {
  if (path.extension() == ".y4m") return read_y4m(path);
  return read_frame_dir(path, fps);
}

}  // namespace mono3d
