#include "mono3d/backbone.hpp"

#include <stdexcept>

namespace mono3d {

void ArchConfig::validate() const {
  for (int c : channels)
    if (c <= 0 || c % offset_groups != 0)
      throw std::invalid_argument("ArchConfig: channel widths must be positive multiples of " +
                                  std::to_string(offset_groups));
  if (residual_blocks < 1) throw std::invalid_argument("ArchConfig: residual_blocks must be >= 1");
  if (offset_groups < 1) throw std::invalid_argument("ArchConfig: offset_groups must be >= 1");
}

void require_pyramid_dims(int height, int width) {
  if (height <= 0 || width <= 0 || height % 4 != 0 || width % 4 != 0)
    throw std::invalid_argument("feature pyramid needs dimensions divisible by 4, got " +
                                std::to_string(height) + "x" + std::to_string(width));
}

template <typename S>
bool FeaturePyramid<S>::same_shape(const FeaturePyramid& o) const {
  for (int l = 0; l < kPyramidLevels; ++l)
    if (!levels[l].value().same_shape(o.levels[l].value())) return false;
  return true;
}

template <typename S>
FeaturePyramid<S> FeaturePyramid<S>::detach() const {
  FeaturePyramid out;
  for (int l = 0; l < kPyramidLevels; ++l) out.levels[l] = levels[l].detach();
  return out;
}

template <typename S>
FeaturePyramid<S> zero_pyramid(int height, int width, const std::array<int, 3>& channels) {
  require_pyramid_dims(height, width);
  FeaturePyramid<S> p;
  for (int l = 0; l < kPyramidLevels; ++l)
    p.levels[l] = Var<S>::constant(Planar<S>(channels[l], height >> l, width >> l));
  return p;
}

template <typename S>
ResidualBlock<S>::ResidualBlock(ParameterSet<S>& params, const std::string& name, int channels,
                                Rng& rng)
    : first_(params, name + ".conv1", channels, channels, 3, 1, rng),
      second_(params, name + ".conv2", channels, channels, 3, 1, rng, Init::kHeScaled) {}

template <typename S>
Var<S> ResidualBlock<S>::operator()(const Var<S>& x) const {
  return ops::add(x, second_(activate(first_(x))));
}

template <typename S>
FeatureExtractor<S>::FeatureExtractor(ParameterSet<S>& params, const std::string& name,
                                      int in_channels, const ArchConfig& arch, Rng& rng)
    : arch_(arch) {
  arch.validate();
  int prev = in_channels;
  for (int l = 0; l < kPyramidLevels; ++l) {
    const std::string lv = name + ".level" + std::to_string(l + 1);
    heads_[l] = Conv2d<S>(params, lv + ".head", prev, arch.channels[l], 3, l == 0 ? 1 : 2, rng);
    for (int b = 0; b < arch.residual_blocks; ++b)
      blocks_[l].emplace_back(params, lv + ".block" + std::to_string(b), arch.channels[l], rng);
    prev = arch.channels[l];
  }
}

template <typename S>
FeaturePyramid<S> FeatureExtractor<S>::extract(const Var<S>& image) const {
  require_pyramid_dims(image.height(), image.width());
  FeaturePyramid<S> out;
  Var<S> x = image;
  for (int l = 0; l < kPyramidLevels; ++l) {
    x = activate(heads_[l](x));
    for (const auto& block : blocks_[l]) x = block(x);
    out.levels[l] = x;
  }
  return out;
}

template <typename S>
Reconstructor<S>::Reconstructor(ParameterSet<S>& params, const std::string& name,
                                int out_channels, const ArchConfig& arch, Rng& rng)
    : arch_(arch) {
  arch.validate();
  for (int l = 0; l < kPyramidLevels; ++l) {
    const std::string lv = name + ".level" + std::to_string(l + 1);
    const int c = arch.channels[l];
    recurrent_[l] = Conv2d<S>(params, lv + ".recurrent", 2 * c, c, 1, 1, rng);
    for (int b = 0; b < arch.residual_blocks; ++b)
      blocks_[l].emplace_back(params, lv + ".block" + std::to_string(b), c, rng);
    if (l < kPyramidLevels - 1) {
      upsample_[l] = Conv2d<S>(params, lv + ".upsample", arch.channels[l + 1], c, 3, 1, rng);
      skip_weight_[l] = params.add(lv + ".skip_coeff", Planar<S>::Scalar1(S(1)));
      up_weight_[l] = params.add(lv + ".up_coeff", Planar<S>::Scalar1(S(1)));
    }
  }
  tail_ = Conv2d<S>(params, name + ".tail", arch.channels[0], out_channels, 3, 1, rng);
}

template <typename S>
Var<S> Reconstructor<S>::reconstruct(const FeaturePyramid<S>& pyramid,
                                     const FeaturePyramid<S>* previous) const {
  for (int l = 0; l < kPyramidLevels; ++l)
    if (pyramid.levels[l].channels() != arch_.channels[l])
      throw std::invalid_argument("Reconstructor: pyramid level " + std::to_string(l + 1) +
                                  " has " + std::to_string(pyramid.levels[l].channels()) +
                                  " channels, expected " + std::to_string(arch_.channels[l]));
  FeaturePyramid<S> zeros;
  if (previous == nullptr) {
    zeros = zero_pyramid<S>(pyramid.height(), pyramid.width(), arch_.channels);
    previous = &zeros;
  } else if (!previous->same_shape(pyramid)) {
    throw std::invalid_argument("Reconstructor: recurrent pyramid shape differs from input");
  }

  Var<S> up;
  for (int l = kPyramidLevels - 1; l >= 0; --l) {
    const std::array<Var<S>, 2> both{pyramid.levels[l], previous->levels[l]};
    Var<S> x = activate(recurrent_[l](ops::concat_channels<S>(both)));
    if (up.defined()) x = ops::linear_combine(x, skip_weight_[l], up, up_weight_[l]);
    for (const auto& block : blocks_[l]) x = block(x);
    if (l > 0) {
      const auto& target = pyramid.levels[l - 1];
      up = activate(upsample_[l - 1](ops::resize_bilinear(x, target.height(), target.width())));
    } else {
      up = x;
    }
  }
  return tail_(up);
}

template struct FeaturePyramid<float>;
template struct FeaturePyramid<double>;
template FeaturePyramid<float> zero_pyramid(int, int, const std::array<int, 3>&);
template FeaturePyramid<double> zero_pyramid(int, int, const std::array<int, 3>&);
template class ResidualBlock<float>;
template class ResidualBlock<double>;
template class FeatureExtractor<float>;
template class FeatureExtractor<double>;
template class Reconstructor<float>;
template class Reconstructor<double>;

}  // namespace mono3d
