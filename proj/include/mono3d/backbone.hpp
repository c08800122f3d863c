#pragma once

#include "mono3d/nn.hpp"

#include <array>
#include <string>
#include <vector>

namespace mono3d {

/// Widths and depths of the encoder/decoder bodies.
struct ArchConfig {
  std::array<int, 3> channels{64, 128, 192};
  int residual_blocks = 3;
  int offset_groups = 2;

  void validate() const;
  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

inline constexpr int kPyramidLevels = 3;

/// Three feature maps; level l has spatial size (H/2^l, W/2^l), l = 0..2.
template <typename S>
struct FeaturePyramid {
  std::array<Var<S>, kPyramidLevels> levels;

  int height() const { return levels[0].height(); }
  int width() const { return levels[0].width(); }
  std::array<int, kPyramidLevels> channels() const {
    return {levels[0].channels(), levels[1].channels(), levels[2].channels()};
  }
  bool same_shape(const FeaturePyramid& o) const;
  FeaturePyramid detach() const;
};

/// Throws unless both dimensions admit two stride-2 halvings.
void require_pyramid_dims(int height, int width);

template <typename S>
FeaturePyramid<S> zero_pyramid(int height, int width, const std::array<int, 3>& channels);

/// Conv-act-conv with identity shortcut, no normalisation.
template <typename S>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(ParameterSet<S>& params, const std::string& name, int channels, Rng& rng);
  Var<S> operator()(const Var<S>& x) const;

 private:
  Conv2d<S> first_;
  Conv2d<S> second_;
};

/// ResNet-style extractor: per level a (strided, beyond level 1) convolution
/// followed by residual blocks.
template <typename S>
class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  FeatureExtractor(ParameterSet<S>& params, const std::string& name, int in_channels,
                   const ArchConfig& arch, Rng& rng);

  FeaturePyramid<S> extract(const Var<S>& image) const;

 private:
  ArchConfig arch_;
  std::array<Conv2d<S>, kPyramidLevels> heads_;
  std::array<std::vector<ResidualBlock<S>>, kPyramidLevels> blocks_;
};

/// Mirror of the extractor. Each level first fuses the previous time step's
/// pyramid (concatenation + 1x1 conv; zeros on a cold start), levels 1-2 mix
/// the skip input with the upsampled coarser output through trainable
/// coefficients, and the upsampling step is bilinear resize + 3x3 conv.
template <typename S>
class Reconstructor {
 public:
  Reconstructor() = default;
  Reconstructor(ParameterSet<S>& params, const std::string& name, int out_channels,
                const ArchConfig& arch, Rng& rng);

  /// Output is unbounded; callers quantize. `previous` may be null.
  Var<S> reconstruct(const FeaturePyramid<S>& pyramid,
                     const FeaturePyramid<S>* previous) const;

 private:
  ArchConfig arch_;
  std::array<Conv2d<S>, kPyramidLevels> recurrent_;
  std::array<std::vector<ResidualBlock<S>>, kPyramidLevels> blocks_;
  std::array<Conv2d<S>, kPyramidLevels - 1> upsample_;
  std::array<Var<S>, kPyramidLevels - 1> skip_weight_;
  std::array<Var<S>, kPyramidLevels - 1> up_weight_;
  Conv2d<S> tail_;
};

}  // namespace mono3d
