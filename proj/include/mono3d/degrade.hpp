#pragma once

#include "mono3d/autograd.hpp"
#include "mono3d/domain.hpp"

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace mono3d {

/// 8-bit quantization layer: forward rounds onto the 1/255 grid (after
/// clamping to [0,1]); backward passes the gradient through unchanged.
template <typename S>
Var<S> quantize(const Var<S>& x);

Frame quantize(const Frame& f);

enum class NoiseMode { kIntra, kInter };

inline constexpr int kMacroblock = 16;
inline constexpr int kDctBlock = 8;

struct NoiseSpec {
  NoiseMode mode = NoiseMode::kIntra;
  int intra_quality = 50;
  double tau = 4.0;            // flow variance (px^2) at which jitter becomes certain
  int jitter_max_shift = 2;    // pixels
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// JPEG luminance table scaled by the libjpeg quality mapping.
std::array<int, 64> quantization_table(int quality);

/// Orthonormal 8x8 DCT, table quantization, inverse DCT, clamp. Operates on
/// the 0..255 scale without level shift, so a zero frame stays zero.
/// Dimensions must be multiples of 8.
Frame intra_noise(const Frame& f, int quality);

/// Per 16x16 macroblock: with probability min(1, Var(flow)/tau) the block is
/// replaced by its content displaced by a uniform non-zero offset in
/// [-s, s]^2, sources clamped to the frame border.
Frame inter_noise(const Frame& f, const FlowField& flow, const NoiseSpec& spec);

struct CnsConfig {
  bool enabled = true;
  int quality_min = 30;
  int quality_max = 70;
  double tau = 4.0;
  int jitter_max_shift = 2;
  double inter_probability = 0.75;
};

struct CnsResult {
  std::vector<Frame> frames;
  std::vector<NoiseMode> modes;
};

/// Codec-noise simulation over one training sequence. The first frame is
/// always intra-coded; later frames are inter with `inter_probability`.
/// `flows[t-1]` relates frame t-1 to frame t. Dimensions that are not
/// multiples of 8 are edge-padded for the DCT and cropped back.
CnsResult cns_apply(std::span<const Frame> frames, std::span<const FlowField> flows,
                    const CnsConfig& config, Rng& rng);

Frame pad_edge(const Frame& f, int height, int width);
Frame crop(const Frame& f, int top, int left, int height, int width);

}  // namespace mono3d
