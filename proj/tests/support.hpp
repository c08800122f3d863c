#pragma once

#include "mono3d/autograd.hpp"
#include "mono3d/domain.hpp"
#include "mono3d/ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace mono3d::test {

template <typename S>
Planar<S> random_planar(int c, int h, int w, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Planar<S> p(c, h, w);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = S(u(rng));
  return p;
}

inline Frame random_frame(int h, int w, Rng& rng) {
  return Frame(random_planar<float>(3, h, w, rng, 0.0, 1.0));
}

/// Random frame on the 8-bit grid.
inline Frame random_u8_frame(int h, int w, Rng& rng) {
  return frame_to_u8(random_frame(h, w, rng));
}

struct GradCheck {
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double analytic_norm = 0.0;
};

/// Central differences of the scalar `loss()` with respect to `leaf`,
/// compared with the gradient from `backward`.
inline GradCheck check_gradient(Var<double> leaf, const std::function<Var<double>()>& loss,
                                double h = 1e-6) {
  leaf.zero_grad();
  backward(loss());
  const Planar<double> analytic =
      leaf.has_grad() ? leaf.grad()
                      : Planar<double>(leaf.channels(), leaf.height(), leaf.width());
  auto& v = leaf.mutable_value();
  double diff2 = 0, a2 = 0, n2 = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double saved = v.data()[i];
    v.data()[i] = saved + h;
    const double up = loss().item();
    v.data()[i] = saved - h;
    const double down = loss().item();
    v.data()[i] = saved;
    const double numeric = (up - down) / (2 * h);
    const double a = analytic.data()[i];
    diff2 += (a - numeric) * (a - numeric);
    a2 += a * a;
    n2 += numeric * numeric;
  }
  GradCheck r;
  r.analytic_norm = std::sqrt(a2);
  const double denom = std::max(std::sqrt(a2), std::sqrt(n2));
  r.rel_error = denom > 0 ? std::sqrt(diff2) / denom : 0.0;
  return r;
}

/// Sum of `w * x` with a fixed random `w`: turns any tensor into a scalar
/// with a non-trivial upstream gradient.
inline Var<double> project(const Var<double>& x, std::uint64_t seed = 99) {
  Rng rng(seed);
  const auto w = random_planar<double>(x.channels(), x.height(), x.width(), rng);
  // mse(x, x - w) = mean(w^2) is constant; use mse(x, w) whose gradient is
  // 2 (x - w) / n, non-trivial everywhere.
  return ops::mse(x, Var<double>::constant(w));
}

}  // namespace mono3d::test
