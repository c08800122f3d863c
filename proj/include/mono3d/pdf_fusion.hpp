#pragma once

#include "mono3d/backbone.hpp"

#include <array>
#include <string>
#include <utility>

namespace mono3d {

/// Modulated deformable 3x3 convolution whose offsets and masks are
/// predicted from its own input. The predictors start at zero, so a fresh
/// layer samples the regular grid with masks of 0.5.
template <typename S>
class DeformableConv {
 public:
  static constexpr int kTaps = 9;

  struct Output {
    Var<S> features;
    Var<S> offsets;  // groups*18 channels
    Var<S> masks;    // groups*9 channels, in (0,1)
  };

  DeformableConv() = default;
  DeformableConv(ParameterSet<S>& params, const std::string& name, int in_channels,
                 int out_channels, int groups, Rng& rng);

  Output forward(const Var<S>& x) const;
  int groups() const { return groups_; }
  Conv2d<S>& offset_predictor() { return offset_pred_; }
  Conv2d<S>& mask_predictor() { return mask_pred_; }

 private:
  int groups_ = 2;
  Conv2d<S> offset_pred_;
  Conv2d<S> mask_pred_;
  Var<S> weight_;
  Var<S> bias_;
};

/// Coarse-to-fine deformable fusion over a three-level pyramid: level 3 is
/// one deformable convolution; levels 2 and 1 aggregate their own deformable
/// output with the bilinearly upsampled coarser result by a 1x1 convolution.
template <typename S>
class PyramidDeformableFusion {
 public:
  struct Trace {
    FeaturePyramid<S> output;
    std::array<Var<S>, kPyramidLevels> offsets;
    std::array<Var<S>, kPyramidLevels> masks;
  };

  PyramidDeformableFusion() = default;
  PyramidDeformableFusion(ParameterSet<S>& params, const std::string& name,
                          const std::array<int, 3>& in_channels,
                          const std::array<int, 3>& out_channels, int groups, Rng& rng);

  FeaturePyramid<S> operator()(const FeaturePyramid<S>& input) const {
    return forward(input).output;
  }
  Trace forward(const FeaturePyramid<S>& input) const;

  DeformableConv<S>& level(int l) { return deform_[l]; }

 private:
  std::array<int, 3> in_channels_{};
  std::array<DeformableConv<S>, kPyramidLevels> deform_;
  std::array<Conv2d<S>, kPyramidLevels - 1> aggregate_;
};

/// Encoder-side fusion of left/right pyramids (concatenated per level, one
/// offset group per view) into one pyramid of the same widths.
template <typename S>
FeaturePyramid<S> fuse(const PyramidDeformableFusion<S>& pdf, const FeaturePyramid<S>& left,
                       const FeaturePyramid<S>& right);

/// Decoder-side split: the module emits 2*C_l channels per level, the first
/// half is the left pyramid.
template <typename S>
std::pair<FeaturePyramid<S>, FeaturePyramid<S>> split(const PyramidDeformableFusion<S>& pdf,
                                                       const FeaturePyramid<S>& mono);

}  // namespace mono3d
