#include "mono3d/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

namespace mono3d {

namespace {

struct Wave {
  double kx, ky, phase;
  std::array<double, 3> amp;
};

struct Texture {
  std::array<double, 3> base;
  std::vector<Wave> waves;

  std::array<double, 3> at(double x, double y) const {
    auto c = base;
    for (const auto& w : waves) {
      const double s = std::sin(w.kx * x + w.ky * y + w.phase);
      for (int i = 0; i < 3; ++i) c[i] += w.amp[i] * s;
    }
    for (auto& v : c) v = std::clamp(v, 0.02, 0.98);
    return c;
  }
};

Texture random_texture(Rng& rng, double min_period, double max_period, int count) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Texture t;
  for (auto& b : t.base) b = 0.3 + 0.4 * unit(rng);
  for (int i = 0; i < count; ++i) {
    const double period = min_period * std::pow(max_period / min_period, unit(rng));
    const double angle = 2 * std::numbers::pi * unit(rng);
    const double k = 2 * std::numbers::pi / period;
    Wave w{k * std::cos(angle), k * std::sin(angle), 2 * std::numbers::pi * unit(rng), {}};
    const double strength = 0.25 / count * (0.5 + unit(rng));
    for (auto& a : w.amp) a = strength * (0.4 + 0.6 * unit(rng));
    t.waves.push_back(w);
  }
  return t;
}

struct Layer {
  Texture texture;
  double x0, y0, vx, vy;  // position at t = 0 and velocity
  double radius;          // <= 0 for the background
  double disparity;

  double cx(int t) const { return x0 + vx * t; }
  double cy(int t) const { return y0 + vy * t; }
};

struct Sample {
  std::array<double, 3> rgb;
  int owner;
};

/// Scene as seen at continuous position (x, y) by a view offset `shift`
/// per unit disparity (0 for the left view, 1 for the right).
Sample render(const std::vector<Layer>& layers, double x, double y, int t, double shift) {
  const Layer& bg = layers.front();
  const double bx = x + shift * bg.disparity - bg.cx(t), by = y - bg.cy(t);
  Sample s{bg.texture.at(bx, by), 0};
  for (std::size_t k = 1; k < layers.size(); ++k) {
    const Layer& o = layers[k];
    const double lx = x + shift * o.disparity - o.cx(t), ly = y - o.cy(t);
    const double alpha = std::clamp(o.radius - std::hypot(lx, ly) + 0.5, 0.0, 1.0);
    if (alpha <= 0) continue;
    const auto c = o.texture.at(lx, ly);
    for (int i = 0; i < 3; ++i) s.rgb[i] = alpha * c[i] + (1 - alpha) * s.rgb[i];
    if (alpha >= 0.5) s.owner = int(k);
  }
  return s;
}

}  // namespace

StereoClip make_synthetic_clip(const SyntheticScene& scene) {
  if (scene.frames < 1 || scene.height < 1 || scene.width < 1 || scene.objects < 0)
    throw std::invalid_argument("make_synthetic_clip: invalid scene size");
  Rng rng(scene.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto speed = [&] { return scene.max_speed * (2 * unit(rng) - 1); };

  std::vector<Layer> layers;
  layers.push_back({random_texture(rng, 12.0, 64.0, 6), 0, 0, speed(), speed(), 0,
                    scene.background_disparity});
  for (int k = 0; k < scene.objects; ++k) {
    const double r = std::min(scene.height, scene.width) * (0.1 + 0.1 * unit(rng));
    const double d = scene.object_disparity_min +
                     (scene.object_disparity_max - scene.object_disparity_min) * unit(rng);
    layers.push_back({random_texture(rng, 6.0, 24.0, 4), scene.width * (0.2 + 0.6 * unit(rng)),
                      scene.height * (0.2 + 0.6 * unit(rng)), speed(), speed(), r, d});
  }
  // Nearer layers are drawn last.
  std::sort(layers.begin() + 1, layers.end(),
            [](const Layer& a, const Layer& b) { return a.disparity < b.disparity; });

  StereoClip clip;
  clip.fps = scene.fps;
  clip.flows_left.emplace();
  clip.flows_right.emplace();
  for (int t = 0; t < scene.frames; ++t) {
    Frame views[2] = {Frame(scene.height, scene.width), Frame(scene.height, scene.width)};
    FlowField flows[2] = {FlowField(scene.height, scene.width),
                          FlowField(scene.height, scene.width)};
    for (int v = 0; v < 2; ++v)
      for (int y = 0; y < scene.height; ++y)
        for (int x = 0; x < scene.width; ++x) {
          const Sample s = render(layers, x, y, t, v);
          for (int c = 0; c < 3; ++c) views[v](c, y, x) = float(s.rgb[c]);
          flows[v](0, y, x) = float(-layers[s.owner].vx);
          flows[v](1, y, x) = float(-layers[s.owner].vy);
        }
    clip.frames.emplace_back(frame_to_u8(views[0]), frame_to_u8(views[1]));
    if (t > 0) {
      clip.flows_left->push_back(std::move(flows[0]));
      clip.flows_right->push_back(std::move(flows[1]));
    }
  }
  return clip;
}

}  // namespace mono3d
