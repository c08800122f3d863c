#pragma once

#include "mono3d/domain.hpp"
#include "mono3d/ops.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace mono3d {

/// Ordered, named collection of trainable leaves.
template <typename S>
class ParameterSet {
 public:
  Var<S> add(const std::string& name, Planar<S> init);
  const Var<S>& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<std::pair<std::string, Var<S>>>& entries() const { return entries_; }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Var<S>>> entries_;
};

enum class Init { kHe, kHeScaled, kZero };

/// Convolution weights plus the call that applies them.
template <typename S>
struct Conv2d {
  Var<S> weight;
  Var<S> bias;
  int kernel = 3;
  int stride = 1;

  Conv2d() = default;
  Conv2d(ParameterSet<S>& params, const std::string& name, int in_channels, int out_channels,
         int kernel, int stride, Rng& rng, Init init = Init::kHe);

  Var<S> operator()(const Var<S>& x) const {
    return ops::conv2d(x, weight, bias, kernel, stride);
  }
};

inline constexpr float kLeakySlope = 0.1f;

template <typename S>
Var<S> activate(const Var<S>& x) {
  return ops::leaky_relu(x, S(kLeakySlope));
}

}  // namespace mono3d
