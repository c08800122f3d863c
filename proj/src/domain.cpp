#include "mono3d/domain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace mono3d {

Frame::Frame(int height, int width, BitDepth depth)
    : Planar<float>(3, height, width), depth_(depth) {}

Frame::Frame(Planar<float> pixels, BitDepth depth)
    : Planar<float>(std::move(pixels)), depth_(depth) {
  if (channels() != 3)
    throw std::invalid_argument("Frame: expected 3 channels, got " +
                                std::to_string(channels()));
}

Frame Frame::from_bytes(std::span<const std::uint8_t> rgb, int height, int width) {
  if (rgb.size() != std::size_t(height) * width * 3)
    throw std::invalid_argument("Frame::from_bytes: buffer size mismatch");
  Frame f(height, width, BitDepth::kU8);
  const std::size_t n = std::size_t(height) * width;
  for (int c = 0; c < 3; ++c) {
    float* dst = f.channel_data(c);
    for (std::size_t i = 0; i < n; ++i) dst[i] = from_byte(rgb[i * 3 + c]);
  }
  return f;
}

std::vector<std::uint8_t> Frame::to_bytes() const {
  const std::size_t n = std::size_t(pixels());
  std::vector<std::uint8_t> out(n * 3);
  for (int c = 0; c < 3; ++c) {
    const float* src = channel_data(c);
    for (std::size_t i = 0; i < n; ++i) out[i * 3 + c] = to_byte(src[i]);
  }
  return out;
}

bool Frame::all_finite() const { return matrix().allFinite(); }

bool Frame::on_u8_grid() const {
  const float* p = data();
  for (Eigen::Index i = 0; i < size(); ++i)
    if (from_byte(to_byte(p[i])) != p[i]) return false;
  return true;
}

std::uint8_t to_byte(float v) {
  if (!(v > 0.0f)) return 0;  // also maps NaN to 0
  if (v >= 1.0f) return 255;
  return static_cast<std::uint8_t>(std::lround(double(v) * 255.0));
}

Frame frame_to_u8(const Frame& f) {
  Frame out(f.height(), f.width(), BitDepth::kU8);
  const float* src = f.data();
  float* dst = out.data();
  for (Eigen::Index i = 0; i < f.size(); ++i) dst[i] = from_byte(to_byte(src[i]));
  return out;
}

Frame u8_to_frame(const Frame& f) {
  Frame out = f;
  out.set_depth(BitDepth::kFloat32);
  return out;
}

StereoFrame::StereoFrame(Frame l, Frame r) : left(std::move(l)), right(std::move(r)) {
  if (!left.same_shape(right))
    throw std::invalid_argument("StereoFrame: left/right dimensions differ");
}

FlowField::FlowField(Planar<float> data) : Planar<float>(std::move(data)) {
  if (channels() != 2)
    throw std::invalid_argument("FlowField: expected 2 channels");
}

VideoClip::VideoClip(std::vector<Frame> f, double rate) : frames(std::move(f)), fps(rate) {
  validate();
}

void VideoClip::validate() const {
  if (frames.empty()) throw std::invalid_argument("VideoClip: empty");
  if (!(fps > 0)) throw std::invalid_argument("VideoClip: fps must be positive");
  for (const auto& f : frames)
    if (!f.same_shape(frames.front()))
      throw std::invalid_argument("VideoClip: frame dimensions differ");
}

void StereoClip::validate() const {
  if (frames.empty()) throw std::invalid_argument("StereoClip: empty");
  if (!(fps > 0)) throw std::invalid_argument("StereoClip: fps must be positive");
  const auto& ref = frames.front().left;
  for (const auto& sf : frames)
    if (!sf.left.same_shape(ref) || !sf.right.same_shape(ref))
      throw std::invalid_argument("StereoClip: frame dimensions differ");
  auto check = [&](const std::optional<std::vector<FlowField>>& flows, const char* side) {
    if (!flows) return;
    if (flows->size() + 1 != frames.size())
      throw std::invalid_argument(std::string("StereoClip: ") + side +
                                  " flow count must be frame count - 1");
    for (const auto& fl : *flows)
      if (fl.height() != ref.height() || fl.width() != ref.width())
        throw std::invalid_argument(std::string("StereoClip: ") + side +
                                    " flow dimensions differ from frames");
  };
  check(flows_left, "left");
  check(flows_right, "right");
}

VideoClip StereoClip::left_stream() const {
  std::vector<Frame> out;
  for (const auto& f : frames) out.push_back(f.left);
  return VideoClip(std::move(out), fps);
}

VideoClip StereoClip::right_stream() const {
  std::vector<Frame> out;
  for (const auto& f : frames) out.push_back(f.right);
  return VideoClip(std::move(out), fps);
}

void HyperParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0)) throw std::invalid_argument(std::string(name) + " must be positive");
  };
  positive(lambda1, "lambda1");
  positive(lambda2, "lambda2");
  positive(alpha, "alpha");
  positive(gamma, "gamma");
  positive(eps_charbonnier, "eps_charbonnier");
  positive(eps_temporal, "eps_temporal");
  positive(N_seq, "N_seq");
  positive(B_batch, "B_batch");
  positive(crop, "crop");
  positive(lr_init, "lr_init");
  positive(plateau_factor, "plateau_factor");
  positive(epochs_image, "epochs_image");
  positive(epochs_video, "epochs_video");
  if (!(beta > 0 && beta < 1)) throw std::invalid_argument("beta must be in (0,1)");
}

void TrainConfig::validate() const {
  for (int c : channels)
    if (c <= 0 || c % 2 != 0)
      throw std::invalid_argument("channels must be positive and even");
  if (residual_blocks < 1) throw std::invalid_argument("residual_blocks must be >= 1");
  if (cns_quality_min < 1 || cns_quality_max > 100 || cns_quality_min > cns_quality_max)
    throw std::invalid_argument("cns quality range must satisfy 1 <= min <= max <= 100");
  if (!(cns_tau > 0)) throw std::invalid_argument("cns_tau must be positive");
  if (cns_jitter_max_shift < 1) throw std::invalid_argument("cns_jitter_max_shift must be >= 1");
  if (cns_inter_probability < 0 || cns_inter_probability > 1)
    throw std::invalid_argument("cns_inter_probability must be in [0,1]");
  if (plateau_patience < 1) throw std::invalid_argument("plateau_patience must be >= 1");
  if (max_epochs < 0 || iterations_per_epoch < 0 || max_iterations < 0)
    throw std::invalid_argument("epoch/iteration budgets must be non-negative");
}

std::string to_string(StreamKind k) {
  return k == StreamKind::kMononized ? "mononized" : "side-by-side";
}

void RDPoint::validate() const {
  if (!(bitrate_mbps > 0)) throw std::invalid_argument("RDPoint: bitrate must be positive");
  if (!(quality >= 0 && quality <= 1))
    throw std::invalid_argument("RDPoint: quality must lie in [0,1]");
}

// ---------------------------------------------------------------------------
// Config text format

namespace {

struct Field {
  std::string key;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;
};

std::string trim(std::string s) {
  auto ws = [](unsigned char ch) { return std::isspace(ch) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("trailing characters");
  return v;
}

long long parse_int(const std::string& s) {
  std::size_t used = 0;
  long long v = std::stoll(s, &used);
  if (used != s.size()) throw std::invalid_argument("trailing characters");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument("expected a boolean");
}

template <typename Member>
Field double_field(std::string key, Member m) {
  return {key, [m](const Config& c) { return fmt_double(m(const_cast<Config&>(c))); },
          [m](Config& c, const std::string& v) { m(c) = parse_double(v); }};
}

template <typename Member>
Field int_field(std::string key, Member m) {
  return {key, [m](const Config& c) { return std::to_string(m(const_cast<Config&>(c))); },
          [m](Config& c, const std::string& v) {
            m(c) = static_cast<std::remove_reference_t<decltype(m(c))>>(parse_int(v));
          }};
}

template <typename Member>
Field string_field(std::string key, Member m) {
  return {key, [m](const Config& c) { return m(const_cast<Config&>(c)); },
          [m](Config& c, const std::string& v) { m(c) = v; }};
}

template <typename Member>
Field bool_field(std::string key, Member m) {
  return {key, [m](const Config& c) { return std::string(m(const_cast<Config&>(c)) ? "true" : "false"); },
          [m](Config& c, const std::string& v) { m(c) = parse_bool(v); }};
}

#define HP(name) [](Config& c) -> auto& { return c.hp.name; }
#define TC(name) [](Config& c) -> auto& { return c.train.name; }

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      double_field("lambda1", HP(lambda1)),
      double_field("lambda2", HP(lambda2)),
      double_field("alpha", HP(alpha)),
      double_field("beta", HP(beta)),
      double_field("gamma", HP(gamma)),
      double_field("eps_charbonnier", HP(eps_charbonnier)),
      double_field("eps_temporal", HP(eps_temporal)),
      int_field("N_seq", HP(N_seq)),
      int_field("B_batch", HP(B_batch)),
      int_field("crop", HP(crop)),
      double_field("lr_init", HP(lr_init)),
      double_field("plateau_factor", HP(plateau_factor)),
      int_field("epochs_image", HP(epochs_image)),
      int_field("epochs_video", HP(epochs_video)),
      {"mode",
       [](const Config& c) { return std::string(c.train.mode == TrainMode::kImage ? "image" : "video"); },
       [](Config& c, const std::string& v) {
         if (v == "image") c.train.mode = TrainMode::kImage;
         else if (v == "video") c.train.mode = TrainMode::kVideo;
         else throw std::invalid_argument("expected image or video");
       }},
      bool_field("cns_enabled", TC(cns_enabled)),
      string_field("dataset", TC(dataset)),
      string_field("checkpoint_dir", TC(checkpoint_dir)),
      string_field("init_checkpoint", TC(init_checkpoint)),
      int_field("seed", TC(seed)),
      int_field("max_epochs", TC(max_epochs)),
      int_field("iterations_per_epoch", TC(iterations_per_epoch)),
      int_field("max_iterations", TC(max_iterations)),
      int_field("plateau_patience", TC(plateau_patience)),
      double_field("plateau_threshold", TC(plateau_threshold)),
      {"channels",
       [](const Config& c) {
         const auto& ch = c.train.channels;
         return std::to_string(ch[0]) + "," + std::to_string(ch[1]) + "," + std::to_string(ch[2]);
       },
       [](Config& c, const std::string& v) {
         std::array<int, 3> ch{};
         std::stringstream ss(v);
         std::string part;
         int i = 0;
         while (std::getline(ss, part, ',')) {
           if (i >= 3) throw std::invalid_argument("expected three comma-separated integers");
           ch[i++] = int(parse_int(trim(part)));
         }
         if (i != 3) throw std::invalid_argument("expected three comma-separated integers");
         c.train.channels = ch;
       }},
      int_field("residual_blocks", TC(residual_blocks)),
      int_field("cns_quality_min", TC(cns_quality_min)),
      int_field("cns_quality_max", TC(cns_quality_max)),
      double_field("cns_tau", TC(cns_tau)),
      int_field("cns_jitter_max_shift", TC(cns_jitter_max_shift)),
      double_field("cns_inter_probability", TC(cns_inter_probability)),
  };
  return all;
}

#undef HP
#undef TC

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

Config parse_config(const std::string& text, const std::string& origin) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos)
      throw std::runtime_error(where + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    const auto& fs = fields();
    auto it = std::find_if(fs.begin(), fs.end(), [&](const Field& f) { return f.key == key; });
    if (it == fs.end()) throw std::runtime_error(where + ": unknown key '" + key + "'");
    try {
      it->set(cfg, value);
    } catch (const std::exception& e) {
      throw std::runtime_error(where + ": malformed value for '" + key + "': " + e.what());
    }
  }
  cfg.hp.validate();
  cfg.train.validate();
  return cfg;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config file not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string format_config(const Config& c) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(c) + "\n";
  return out;
}

void save_config(const Config& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config: " + path.string());
  out << format_config(c);
}

}  // namespace mono3d
