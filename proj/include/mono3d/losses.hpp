#pragma once

#include "mono3d/autograd.hpp"
#include "mono3d/domain.hpp"

#include <optional>
#include <span>

namespace mono3d {

/// Training objectives. Squared norms are per-element means; every term is
/// averaged over the frames of a sequence (over the N-1 transitions for the
/// temporal term).
template <typename S>
struct Losses {
  Var<S> monocular;
  Var<S> invertibility;
  Var<S> temporal;  // undefined in image mode
  Var<S> total;
};

/// mean(sqrt(x^2 + eps^2)).
template <typename S>
Var<S> charbonnier(const Var<S>& x, double eps);

/// Forward differences, [d/dx ; d/dy] stacked along channels.
template <typename S>
Var<S> grad_xy(const Var<S>& frame);

template <typename S>
Var<S> monocular_loss(std::span<const Var<S>> mono, std::span<const Var<S>> input_left,
                      const HyperParams& hp);

template <typename S>
Var<S> invertibility_loss(std::span<const Var<S>> out_left, std::span<const Var<S>> out_right,
                          std::span<const Var<S>> input_left, std::span<const Var<S>> input_right,
                          const HyperParams& hp);

/// `flows_*[t-1]` maps frame t-1 onto frame t by backward warping; the mono
/// stream uses the left flows.
template <typename S>
Var<S> temporal_loss(std::span<const Var<S>> mono, std::span<const Var<S>> out_left,
                     std::span<const Var<S>> out_right, std::span<const FlowField> flows_left,
                     std::span<const FlowField> flows_right, const HyperParams& hp);

/// L_M + lambda1 L_I (+ lambda2 L_T when present).
template <typename S>
Var<S> total_loss(const Var<S>& monocular, const Var<S>& invertibility,
                  const std::optional<Var<S>>& temporal, const HyperParams& hp);

}  // namespace mono3d
