#pragma once

#include "mono3d/autograd.hpp"

#include <span>
#include <vector>

/// Differentiable tensor operations on channel-planar values. Every function
/// records its backward rule only when an input requires a gradient.
namespace mono3d::ops {

/// Dense convolution, zero padding kernel/2. `weight` is (Cout, Cin, k*k),
/// `bias` is (Cout, 1, 1).
template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& weight, const Var<S>& bias, int kernel,
              int stride = 1);

/// Modulated deformable 3x3 convolution, stride 1, padding 1. `offsets` has
/// groups*18 channels ordered (group, tap, [dy, dx]); `masks` has groups*9
/// channels ordered (group, tap). Input channels are split evenly between
/// offset groups. Samples falling outside the map read zero.
template <typename S>
Var<S> deform_conv2d(const Var<S>& x, const Var<S>& offsets, const Var<S>& masks,
                     const Var<S>& weight, const Var<S>& bias, int groups);

template <typename S> Var<S> leaky_relu(const Var<S>& x, S slope);
template <typename S> Var<S> sigmoid(const Var<S>& x);
template <typename S> Var<S> add(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> sub(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> scale(const Var<S>& x, S factor);

/// ca * a + cb * b with trainable 1x1x1 coefficients.
template <typename S>
Var<S> linear_combine(const Var<S>& a, const Var<S>& ca, const Var<S>& b, const Var<S>& cb);

template <typename S> Var<S> concat_channels(std::span<const Var<S>> parts);
template <typename S> Var<S> slice_channels(const Var<S>& x, int begin, int count);

/// Bilinear resampling with half-pixel centres (edge-clamped taps).
template <typename S> Var<S> resize_bilinear(const Var<S>& x, int height, int width);

/// Forward value is `forward`; the backward pass treats the op as identity.
template <typename S> Var<S> straight_through(const Var<S>& x, Planar<S> forward);

/// Backward warp by a constant flow: out(x,y) = bilinear x at (x+u, y+v),
/// coordinates clamped to the border. No gradient reaches the flow.
template <typename S> Var<S> warp(const Var<S>& x, const Planar<S>& flow);

/// Forward differences: channels [0,C) hold d/dx, [C,2C) hold d/dy. The last
/// column (resp. row) is zero.
template <typename S> Var<S> grad_xy(const Var<S>& x);

/// Mean squared difference, a 1x1x1 result.
template <typename S> Var<S> mse(const Var<S>& a, const Var<S>& b);
/// Mean of sqrt(x^2 + eps^2), a 1x1x1 result.
template <typename S> Var<S> charbonnier_mean(const Var<S>& x, double eps);
/// sum_i weights[i] * terms[i] for 1x1x1 terms.
template <typename S>
Var<S> weighted_sum(std::span<const Var<S>> terms, std::span<const double> weights);

}  // namespace mono3d::ops

namespace mono3d::kernels {

/// Plain (non-recording) kernels shared by ops and by image-space code.
template <typename S>
Planar<S> warp(const Planar<S>& x, const Planar<S>& flow);
template <typename S>
Planar<S> resize_bilinear(const Planar<S>& x, int height, int width);
template <typename S>
Planar<S> conv2d(const Planar<S>& x, const Planar<S>& weight, const Planar<S>& bias,
                 int kernel, int stride = 1);

}  // namespace mono3d::kernels
