#include "mono3d/degrade.hpp"

#include "mono3d/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mono3d {

template <typename S>
Var<S> quantize(const Var<S>& x) {
  const auto& v = x.value();
  if (!v.matrix().allFinite()) throw std::invalid_argument("quantize: non-finite input");
  Planar<S> q = v;
  q.matrix() = q.matrix().unaryExpr([](S s) { return S(from_byte(to_byte(float(s)))); });
  return ops::straight_through(x, std::move(q));
}

template Var<float> quantize(const Var<float>&);
template Var<double> quantize(const Var<double>&);

Frame quantize(const Frame& f) {
  if (!f.all_finite()) throw std::invalid_argument("quantize: non-finite input");
  return frame_to_u8(f);
}

void NoiseSpec::validate() const {
  if (intra_quality < 1 || intra_quality > 100)
    throw std::invalid_argument("NoiseSpec: quality must lie in [1,100]");
  if (jitter_max_shift < 1) throw std::invalid_argument("NoiseSpec: jitter_max_shift must be >= 1");
  if (!(tau > 0)) throw std::invalid_argument("NoiseSpec: tau must be positive");
}

std::array<int, 64> quantization_table(int quality) {
  static constexpr std::array<int, 64> kLuma = {
      16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
      14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
      18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
      49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
  if (quality < 1 || quality > 100)
    throw std::invalid_argument("quantization_table: quality must lie in [1,100]");
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<int, 64> t{};
  for (int i = 0; i < 64; ++i) t[i] = std::clamp((kLuma[i] * scale + 50) / 100, 1, 255);
  return t;
}

namespace {

const Eigen::Matrix<double, 8, 8>& dct_matrix() {
  static const Eigen::Matrix<double, 8, 8> m = [] {
    Eigen::Matrix<double, 8, 8> d;
    const double pi = std::acos(-1.0);
    for (int k = 0; k < 8; ++k)
      for (int n = 0; n < 8; ++n)
        d(k, n) = (k == 0 ? std::sqrt(1.0 / 8) : std::sqrt(2.0 / 8)) *
                  std::cos(pi * (2 * n + 1) * k / 16.0);
    return d;
  }();
  return m;
}

}  // namespace

Frame intra_noise(const Frame& f, int quality) {
  if (f.height() % kDctBlock != 0 || f.width() % kDctBlock != 0)
    throw std::invalid_argument("intra_noise: dimensions must be multiples of 8, got " +
                                std::to_string(f.height()) + "x" + std::to_string(f.width()));
  const auto table = quantization_table(quality);
  const auto& D = dct_matrix();
  Frame out(f.height(), f.width());
  Eigen::Matrix<double, 8, 8> block, coef;
  for (int c = 0; c < 3; ++c)
    for (int by = 0; by < f.height(); by += kDctBlock)
      for (int bx = 0; bx < f.width(); bx += kDctBlock) {
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) block(y, x) = double(f(c, by + y, bx + x)) * 255.0;
        coef = D * block * D.transpose();
        for (int v = 0; v < 8; ++v)
          for (int u = 0; u < 8; ++u) {
            const double q = table[v * 8 + u];
            coef(v, u) = std::round(coef(v, u) / q) * q;
          }
        block = D.transpose() * coef * D;
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x)
            out(c, by + y, bx + x) = float(std::clamp(block(y, x) / 255.0, 0.0, 1.0));
      }
  return out;
}

Frame inter_noise(const Frame& f, const FlowField& flow, const NoiseSpec& spec) {
  spec.validate();
  if (flow.height() != f.height() || flow.width() != f.width())
    throw std::invalid_argument("inter_noise: flow dimensions differ from frame");
  Rng rng(spec.rng_seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const int s = spec.jitter_max_shift;
  const int side = 2 * s + 1;
  std::uniform_int_distribution<int> pick(0, side * side - 2);
  const int H = f.height(), W = f.width();

  Frame out = f;
  for (int by = 0; by < H; by += kMacroblock)
    for (int bx = 0; bx < W; bx += kMacroblock) {
      const int bh = std::min(kMacroblock, H - by), bw = std::min(kMacroblock, W - bx);
      double su = 0, sv = 0, suu = 0, svv = 0;
      for (int y = by; y < by + bh; ++y)
        for (int x = bx; x < bx + bw; ++x) {
          const double u = flow.u(y, x), v = flow.v(y, x);
          su += u;
          sv += v;
          suu += u * u;
          svv += v * v;
        }
      const double n = double(bh) * bw;
      const double var = std::max(0.0, suu / n - (su / n) * (su / n)) +
                         std::max(0.0, svv / n - (sv / n) * (sv / n));
      const double p = std::min(1.0, var / spec.tau);
      if (!(coin(rng) < p)) continue;
      int k = pick(rng);
      if (k >= (side * side) / 2) ++k;  // skip the zero displacement
      const int dy = k / side - s, dx = k % side - s;
      for (int c = 0; c < 3; ++c)
        for (int y = by; y < by + bh; ++y)
          for (int x = bx; x < bx + bw; ++x)
            out(c, y, x) = f(c, std::clamp(y + dy, 0, H - 1), std::clamp(x + dx, 0, W - 1));
    }
  return out;
}

Frame pad_edge(const Frame& f, int height, int width) {
  if (height < f.height() || width < f.width())
    throw std::invalid_argument("pad_edge: target smaller than frame");
  Frame out(height, width, f.depth());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        out(c, y, x) = f(c, std::min(y, f.height() - 1), std::min(x, f.width() - 1));
  return out;
}

Frame crop(const Frame& f, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || top + height > f.height() || left + width > f.width())
    throw std::invalid_argument("crop: window outside frame");
  Frame out(height, width, f.depth());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out(c, y, x) = f(c, top + y, left + x);
  return out;
}

CnsResult cns_apply(std::span<const Frame> frames, std::span<const FlowField> flows,
                    const CnsConfig& config, Rng& rng) {
  if (frames.empty()) throw std::invalid_argument("cns_apply: no frames");
  if (flows.size() + 1 != frames.size() && !(frames.size() == 1 && flows.empty()))
    throw std::invalid_argument("cns_apply: expected " + std::to_string(frames.size() - 1) +
                                " flows, got " + std::to_string(flows.size()));
  CnsResult result;
  if (!config.enabled) {
    result.frames.assign(frames.begin(), frames.end());
    result.modes.assign(frames.size(), NoiseMode::kIntra);
    return result;
  }
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> quality(config.quality_min, config.quality_max);
  std::uniform_int_distribution<std::uint64_t> seed;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const Frame& f = frames[t];
    const bool inter = t > 0 && coin(rng) < config.inter_probability;
    if (inter) {
      NoiseSpec spec;
      spec.mode = NoiseMode::kInter;
      spec.tau = config.tau;
      spec.jitter_max_shift = config.jitter_max_shift;
      spec.rng_seed = seed(rng);
      result.frames.push_back(inter_noise(f, flows[t - 1], spec));
      result.modes.push_back(NoiseMode::kInter);
    } else {
      const int q = quality(rng);
      const int ph = (f.height() + kDctBlock - 1) / kDctBlock * kDctBlock;
      const int pw = (f.width() + kDctBlock - 1) / kDctBlock * kDctBlock;
      Frame noisy = (ph == f.height() && pw == f.width())
                        ? intra_noise(f, q)
                        : crop(intra_noise(pad_edge(f, ph, pw), q), 0, 0, f.height(), f.width());
      result.frames.push_back(std::move(noisy));
      result.modes.push_back(NoiseMode::kIntra);
    }
  }
  return result;
}

}  // namespace mono3d
