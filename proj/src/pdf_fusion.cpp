#include "mono3d/pdf_fusion.hpp"

#include <cmath>
#include <stdexcept>

namespace mono3d {

template <typename S>
DeformableConv<S>::DeformableConv(ParameterSet<S>& params, const std::string& name,
                                  int in_channels, int out_channels, int groups, Rng& rng)
    : groups_(groups),
      offset_pred_(params, name + ".offset", in_channels, groups * 2 * kTaps, 3, 1, rng,
                   Init::kZero),
      mask_pred_(params, name + ".mask", in_channels, groups * kTaps, 3, 1, rng, Init::kZero) {
  if (in_channels % groups != 0)
    throw std::invalid_argument("DeformableConv: input channels not divisible by groups");
  Planar<S> w(out_channels, in_channels, kTaps);
  const double bound = std::sqrt(6.0 / ((1.0 + kLeakySlope * kLeakySlope) * in_channels * kTaps));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = S(dist(rng));
  weight_ = params.add(name + ".weight", std::move(w));
  bias_ = params.add(name + ".bias", Planar<S>(out_channels, 1, 1));
}

template <typename S>
typename DeformableConv<S>::Output DeformableConv<S>::forward(const Var<S>& x) const {
  Output out;
  out.offsets = offset_pred_(x);
  out.masks = ops::sigmoid(mask_pred_(x));
  out.features = ops::deform_conv2d(x, out.offsets, out.masks, weight_, bias_, groups_);
  return out;
}

template <typename S>
PyramidDeformableFusion<S>::PyramidDeformableFusion(ParameterSet<S>& params,
                                                    const std::string& name,
                                                    const std::array<int, 3>& in_channels,
                                                    const std::array<int, 3>& out_channels,
                                                    int groups, Rng& rng)
    : in_channels_(in_channels) {
  for (int l = 0; l < kPyramidLevels; ++l) {
    const std::string lv = name + ".level" + std::to_string(l + 1);
    deform_[l] = DeformableConv<S>(params, lv + ".deform", in_channels[l], out_channels[l],
                                   groups, rng);
    if (l < kPyramidLevels - 1)
      aggregate_[l] = Conv2d<S>(params, lv + ".aggregate", out_channels[l] + out_channels[l + 1],
                                out_channels[l], 1, 1, rng);
  }
}

template <typename S>
typename PyramidDeformableFusion<S>::Trace PyramidDeformableFusion<S>::forward(
    const FeaturePyramid<S>& input) const {
  for (int l = 0; l < kPyramidLevels; ++l)
    if (input.levels[l].channels() != in_channels_[l])
      throw std::invalid_argument("PyramidDeformableFusion: level " + std::to_string(l + 1) +
                                  " has " + std::to_string(input.levels[l].channels()) +
                                  " channels, expected " + std::to_string(in_channels_[l]));
  for (int l = 1; l < kPyramidLevels; ++l)
    if (input.levels[l].height() * 2 != input.levels[l - 1].height() ||
        input.levels[l].width() * 2 != input.levels[l - 1].width())
      throw std::invalid_argument("PyramidDeformableFusion: level sizes must halve");

  Trace trace;
  Var<S> coarser;
  for (int l = kPyramidLevels - 1; l >= 0; --l) {
    auto d = deform_[l].forward(input.levels[l]);
    trace.offsets[l] = d.offsets;
    trace.masks[l] = d.masks;
    Var<S> y = activate(d.features);
    if (coarser.defined()) {
      auto up = ops::resize_bilinear(coarser, y.height(), y.width());
      const std::array<Var<S>, 2> both{y, up};
      y = aggregate_[l](ops::concat_channels<S>(both));
    }
    trace.output.levels[l] = y;
    coarser = y;
  }
  return trace;
}

template <typename S>
FeaturePyramid<S> fuse(const PyramidDeformableFusion<S>& pdf, const FeaturePyramid<S>& left,
                       const FeaturePyramid<S>& right) {
  if (!left.same_shape(right)) throw std::invalid_argument("fuse: left/right pyramids differ");
  FeaturePyramid<S> cat;
  for (int l = 0; l < kPyramidLevels; ++l) {
    const std::array<Var<S>, 2> both{left.levels[l], right.levels[l]};
    cat.levels[l] = ops::concat_channels<S>(both);
  }
  return pdf(cat);
}

template <typename S>
std::pair<FeaturePyramid<S>, FeaturePyramid<S>> split(const PyramidDeformableFusion<S>& pdf,
                                                       const FeaturePyramid<S>& mono) {
  FeaturePyramid<S> both = pdf(mono);
  FeaturePyramid<S> left, right;
  for (int l = 0; l < kPyramidLevels; ++l) {
    const int c = both.levels[l].channels() / 2;
    left.levels[l] = ops::slice_channels(both.levels[l], 0, c);
    right.levels[l] = ops::slice_channels(both.levels[l], c, c);
  }
  return {left, right};
}

template class DeformableConv<float>;
template class DeformableConv<double>;
template class PyramidDeformableFusion<float>;
template class PyramidDeformableFusion<double>;
template FeaturePyramid<float> fuse(const PyramidDeformableFusion<float>&,
                                    const FeaturePyramid<float>&, const FeaturePyramid<float>&);
template FeaturePyramid<double> fuse(const PyramidDeformableFusion<double>&,
                                     const FeaturePyramid<double>&,
                                     const FeaturePyramid<double>&);
template std::pair<FeaturePyramid<float>, FeaturePyramid<float>> split(
    const PyramidDeformableFusion<float>&, const FeaturePyramid<float>&);
template std::pair<FeaturePyramid<double>, FeaturePyramid<double>> split(
    const PyramidDeformableFusion<double>&, const FeaturePyramid<double>&);

}  // namespace mono3d
