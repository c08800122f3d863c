#include "mono3d/losses.hpp"

#include "mono3d/ops.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace mono3d {

template <typename S>
Var<S> charbonnier(const Var<S>& x, double eps) {
  return ops::charbonnier_mean(x, eps);
}

template <typename S>
Var<S> grad_xy(const Var<S>& frame) {
  return ops::grad_xy(frame);
}

namespace {

template <typename S>
Var<S> mean_of(std::vector<Var<S>> terms) {
  std::vector<double> w(terms.size(), 1.0 / double(terms.size()));
  return ops::weighted_sum<S>(terms, w);
}

void require_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b || a == 0)
    throw std::invalid_argument(std::string(what) + ": sequence lengths differ or are empty");
}

}  // namespace

template <typename S>
Var<S> monocular_loss(std::span<const Var<S>> mono, std::span<const Var<S>> input_left,
                      const HyperParams& hp) {
  require_lengths(mono.size(), input_left.size(), "monocular_loss");
  std::vector<Var<S>> per_frame;
  for (std::size_t t = 0; t < mono.size(); ++t) {
    auto fidelity = ops::mse(mono[t], input_left[t]);
    auto edges = charbonnier(ops::sub(grad_xy(mono[t]), grad_xy(input_left[t])),
                             hp.eps_charbonnier);
    const std::array<Var<S>, 2> terms{fidelity, edges};
    const std::array<double, 2> w{1.0, hp.alpha};
    per_frame.push_back(ops::weighted_sum<S>(terms, w));
  }
  return mean_of(std::move(per_frame));
}

template <typename S>
Var<S> invertibility_loss(std::span<const Var<S>> out_left, std::span<const Var<S>> out_right,
                          std::span<const Var<S>> input_left, std::span<const Var<S>> input_right,
                          const HyperParams& hp) {
  require_lengths(out_left.size(), out_right.size(), "invertibility_loss");
  require_lengths(out_left.size(), input_left.size(), "invertibility_loss");
  require_lengths(out_left.size(), input_right.size(), "invertibility_loss");
  std::vector<Var<S>> per_frame;
  for (std::size_t t = 0; t < out_left.size(); ++t) {
    const std::array<Var<S>, 2> terms{ops::mse(out_left[t], input_left[t]),
                                      ops::mse(out_right[t], input_right[t])};
    const std::array<double, 2> w{1.0 - hp.beta, hp.beta};
    per_frame.push_back(ops::weighted_sum<S>(terms, w));
  }
  return mean_of(std::move(per_frame));
}

template <typename S>
Var<S> temporal_loss(std::span<const Var<S>> mono, std::span<const Var<S>> out_left,
                     std::span<const Var<S>> out_right, std::span<const FlowField> flows_left,
                     std::span<const FlowField> flows_right, const HyperParams& hp) {
  require_lengths(mono.size(), out_left.size(), "temporal_loss");
  require_lengths(mono.size(), out_right.size(), "temporal_loss");
  const std::size_t n = mono.size();
  if (flows_left.size() + 1 != n || flows_right.size() + 1 != n)
    throw std::invalid_argument("temporal_loss: missing flows (need " + std::to_string(n - 1) +
                                " per view)");
  if (n == 1) return Var<S>::constant(Planar<S>::Scalar1(S(0)));
  std::vector<Var<S>> per_step;
  for (std::size_t t = 1; t < n; ++t) {
    const Planar<S> fl = flows_left[t - 1].template cast<S>();
    const Planar<S> fr = flows_right[t - 1].template cast<S>();
    const std::array<Var<S>, 3> terms{ops::mse(ops::warp(mono[t - 1], fl), mono[t]),
                                      ops::mse(ops::warp(out_left[t - 1], fl), out_left[t]),
                                      ops::mse(ops::warp(out_right[t - 1], fr), out_right[t])};
    const std::array<double, 3> w{1.0, 1.0, hp.gamma};
    per_step.push_back(ops::weighted_sum<S>(terms, w));
  }
  return mean_of(std::move(per_step));
}

template <typename S>
Var<S> total_loss(const Var<S>& monocular, const Var<S>& invertibility,
                  const std::optional<Var<S>>& temporal, const HyperParams& hp) {
  std::vector<Var<S>> terms{monocular, invertibility};
  std::vector<double> w{1.0, hp.lambda1};
  if (temporal) {
    terms.push_back(*temporal);
    w.push_back(hp.lambda2);
  }
  for (const auto& t : terms)
    if (!std::isfinite(double(t.item())))
      throw std::domain_error("total_loss: non-finite component loss");
  return ops::weighted_sum<S>(terms, w);
}

#define MONO3D_INSTANTIATE_LOSSES(S)                                                        \
  template Var<S> charbonnier(const Var<S>&, double);                                       \
  template Var<S> grad_xy(const Var<S>&);                                                   \
  template Var<S> monocular_loss(std::span<const Var<S>>, std::span<const Var<S>>,          \
                                 const HyperParams&);                                       \
  template Var<S> invertibility_loss(std::span<const Var<S>>, std::span<const Var<S>>,      \
                                     std::span<const Var<S>>, std::span<const Var<S>>,      \
                                     const HyperParams&);                                   \
  template Var<S> temporal_loss(std::span<const Var<S>>, std::span<const Var<S>>,           \
                                std::span<const Var<S>>, std::span<const FlowField>,        \
                                std::span<const FlowField>, const HyperParams&);            \
  template Var<S> total_loss(const Var<S>&, const Var<S>&, const std::optional<Var<S>>&,    \
                             const HyperParams&);

MONO3D_INSTANTIATE_LOSSES(float)
MONO3D_INSTANTIATE_LOSSES(double)

#undef MONO3D_INSTANTIATE_LOSSES

}  // namespace mono3d
