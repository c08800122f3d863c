#include "mono3d/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace mono3d {

template <typename Scalar>
void backward(const Var<Scalar>& root) {
  using NodeT = detail::Node<Scalar>;
  if (!root.defined() || root.value().size() != 1)
    throw std::invalid_argument("backward: root must be a scalar");
  if (!root.requires_grad()) return;

  // Owning handles: releasing a node's parents must not free pending nodes.
  std::vector<std::shared_ptr<NodeT>> order;
  std::unordered_set<NodeT*> visited;
  std::vector<std::pair<std::shared_ptr<NodeT>, std::size_t>> stack{{root.shared(), 0}};
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      const auto& p = node->parents[next++];
      if (p && p->requires_grad && visited.insert(p.get()).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad = Planar<Scalar>::Scalar1(Scalar(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* n = it->get();
    if (!n->backward) continue;  // leaf
    if (!n->grad.empty()) n->backward(*n);
    n->grad = Planar<Scalar>();
    n->backward = nullptr;
    n->parents.clear();
  }
}

template void backward<float>(const Var<float>&);
template void backward<double>(const Var<double>&);

namespace {

template <typename S>
using Mat = typename Planar<S>::Matrix;

void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

template <typename S>
void im2col(const Planar<S>& x, int k, int stride, int pad, int ho, int wo, Mat<S>& cols) {
  const int C = x.channels(), H = x.height(), W = x.width();
  cols.resize(Eigen::Index(C) * k * k, Eigen::Index(ho) * wo);
  for (int c = 0; c < C; ++c) {
    const S* src = x.channel_data(c);
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        S* dst = cols.row((Eigen::Index(c) * k + ky) * k + kx).data();
        for (int oy = 0; oy < ho; ++oy) {
          S* d = dst + Eigen::Index(oy) * wo;
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) {
            std::fill(d, d + wo, S(0));
            continue;
          }
          const S* row = src + Eigen::Index(iy) * W;
          if (stride == 1) {
            const int shift = kx - pad;
            const int lo = std::max(0, -shift), hi = std::min(wo, W - shift);
            std::fill(d, d + std::max(lo, 0), S(0));
            if (hi > lo) std::copy(row + lo + shift, row + hi + shift, d + lo);
            std::fill(d + std::max(hi, lo), d + wo, S(0));
          } else {
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              d[ox] = (ix >= 0 && ix < W) ? row[ix] : S(0);
            }
          }
        }
      }
  }
}

template <typename S>
void col2im(const Mat<S>& cols, int k, int stride, int pad, int ho, int wo, Planar<S>& gx) {
  const int C = gx.channels(), H = gx.height(), W = gx.width();
  for (int c = 0; c < C; ++c) {
    S* dst = gx.channel_data(c);
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const S* src = cols.row((Eigen::Index(c) * k + ky) * k + kx).data();
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          const S* s = src + Eigen::Index(oy) * wo;
          S* row = dst + Eigen::Index(iy) * W;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) row[ix] += s[ox];
          }
        }
      }
  }
}

struct ResizeTaps {
  std::vector<int> lo, hi;
  std::vector<double> frac;
};

ResizeTaps resize_taps(int in, int out) {
  ResizeTaps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  const double scale = double(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = std::max((o + 0.5) * scale - 0.5, 0.0);
    int i0 = std::min(int(std::floor(src)), in - 1);
    t.lo[o] = i0;
    t.hi[o] = std::min(i0 + 1, in - 1);
    t.frac[o] = src - i0;
  }
  return t;
}

/// Per-pixel bilinear taps of a backward warp with border clamping.
template <typename S>
struct WarpTaps {
  std::vector<int> idx;  // 4 per pixel
  std::vector<S> w;      // 4 per pixel
};

template <typename S>
WarpTaps<S> warp_taps(const Planar<S>& flow) {
  const int H = flow.height(), W = flow.width();
  WarpTaps<S> t;
  t.idx.resize(std::size_t(H) * W * 4);
  t.w.resize(std::size_t(H) * W * 4);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const std::size_t p = std::size_t(y) * W + x;
      double sx = std::clamp(double(x) + double(flow(0, y, x)), 0.0, double(W - 1));
      double sy = std::clamp(double(y) + double(flow(1, y, x)), 0.0, double(H - 1));
      int x0 = std::min(int(std::floor(sx)), W - 1), y0 = std::min(int(std::floor(sy)), H - 1);
      int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
      double lx = sx - x0, ly = sy - y0;
      int* id = &t.idx[p * 4];
      S* w = &t.w[p * 4];
      id[0] = y0 * W + x0;
      id[1] = y0 * W + x1;
      id[2] = y1 * W + x0;
      id[3] = y1 * W + x1;
      w[0] = S((1 - ly) * (1 - lx));
      w[1] = S((1 - ly) * lx);
      w[2] = S(ly * (1 - lx));
      w[3] = S(ly * lx);
    }
  return t;
}

template <typename S>
Planar<S> apply_warp(const Planar<S>& x, const WarpTaps<S>& t) {
  Planar<S> out(x.channels(), x.height(), x.width());
  const Eigen::Index n = x.pixels();
  for (int c = 0; c < x.channels(); ++c) {
    const S* src = x.channel_data(c);
    S* dst = out.channel_data(c);
    for (Eigen::Index p = 0; p < n; ++p) {
      const int* id = &t.idx[p * 4];
      const S* w = &t.w[p * 4];
      dst[p] = w[0] * src[id[0]] + w[1] * src[id[1]] + w[2] * src[id[2]] + w[3] * src[id[3]];
    }
  }
  return out;
}

template <typename S>
Planar<S> apply_resize(const Planar<S>& x, const ResizeTaps& ty, const ResizeTaps& tx, int H,
                       int W) {
  Planar<S> out(x.channels(), H, W);
  const int Wi = x.width();
  for (int c = 0; c < x.channels(); ++c) {
    const S* src = x.channel_data(c);
    S* dst = out.channel_data(c);
    for (int y = 0; y < H; ++y) {
      const S* r0 = src + Eigen::Index(ty.lo[y]) * Wi;
      const S* r1 = src + Eigen::Index(ty.hi[y]) * Wi;
      const S fy = S(ty.frac[y]);
      for (int xo = 0; xo < W; ++xo) {
        const S fx = S(tx.frac[xo]);
        const int a = tx.lo[xo], b = tx.hi[xo];
        const S top = r0[a] + (r0[b] - r0[a]) * fx;
        const S bot = r1[a] + (r1[b] - r1[a]) * fx;
        dst[Eigen::Index(y) * W + xo] = top + (bot - top) * fy;
      }
    }
  }
  return out;
}

}  // namespace

namespace kernels {

template <typename S>
Planar<S> warp(const Planar<S>& x, const Planar<S>& flow) {
  check(flow.channels() == 2 && x.same_spatial(flow), "warp: flow/frame dimensions differ");
  return apply_warp(x, warp_taps(flow));
}

template <typename S>
Planar<S> resize_bilinear(const Planar<S>& x, int height, int width) {
  return apply_resize(x, resize_taps(x.height(), height), resize_taps(x.width(), width), height,
                      width);
}

template <typename S>
Planar<S> conv2d(const Planar<S>& x, const Planar<S>& weight, const Planar<S>& bias,
                 int kernel, int stride) {
  return ops::conv2d(Var<S>::constant(x), Var<S>::constant(weight), Var<S>::constant(bias),
                     kernel, stride)
      .value();
}

}  // namespace kernels

namespace ops {

template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& weight, const Var<S>& bias, int kernel,
              int stride) {
  const auto& xv = x.value();
  const auto& wv = weight.value();
  const int cin = xv.channels(), cout = wv.channels();
  check(wv.height() == cin && wv.width() == kernel * kernel,
        "conv2d: weight " + wv.shape_string() + " does not match input " + xv.shape_string());
  check(bias.value().channels() == cout && bias.value().pixels() == 1, "conv2d: bias shape");
  check(stride >= 1 && kernel >= 1 && kernel % 2 == 1, "conv2d: bad kernel/stride");
  const int pad = kernel / 2;
  const int H = xv.height(), W = xv.width();
  const int ho = (H + 2 * pad - kernel) / stride + 1;
  const int wo = (W + 2 * pad - kernel) / stride + 1;
  const bool direct = kernel == 1 && stride == 1;

  auto cols = std::make_shared<Mat<S>>();
  Planar<S> out(cout, ho, wo);
  if (direct) {
    out.matrix().noalias() = wv.matrix() * xv.matrix();
  } else {
    im2col(xv, kernel, stride, pad, ho, wo, *cols);
    out.matrix().noalias() = wv.matrix() * (*cols);
  }
  out.matrix().colwise() += bias.value().matrix().col(0);

  return Var<S>::make(std::move(out), {x, weight, bias},
                      [cols, kernel, stride, pad, ho, wo, direct](detail::Node<S>& n) {
                        const auto& g = n.grad.matrix();
                        auto& xn = *n.parents[0];
                        auto& wn = *n.parents[1];
                        auto& bn = *n.parents[2];
                        const Mat<S>& input = direct ? xn.value.matrix() : *cols;
                        if (wn.requires_grad) {
                          Mat<S> gw = g * input.transpose();
                          wn.accumulate(gw);
                        }
                        if (bn.requires_grad) {
                          Mat<S> gb = g.rowwise().sum();
                          bn.accumulate(gb);
                        }
                        if (xn.requires_grad) {
                          Mat<S> gcols = wn.value.matrix().transpose() * g;
                          if (direct) {
                            xn.accumulate(gcols);
                          } else {
                            col2im(gcols, kernel, stride, pad, ho, wo, xn.grad_buffer());
                          }
                        }
                      });
}

template <typename S>
Var<S> deform_conv2d(const Var<S>& x, const Var<S>& offsets, const Var<S>& masks,
                     const Var<S>& weight, const Var<S>& bias, int groups) {
  constexpr int K = 9;
  const auto& xv = x.value();
  const int C = xv.channels(), H = xv.height(), W = xv.width();
  const Eigen::Index HW = xv.pixels();
  check(groups >= 1 && C % groups == 0, "deform_conv2d: channels not divisible by groups");
  check(offsets.value().channels() == groups * 2 * K,
        "deform_conv2d: expected " + std::to_string(groups * 2 * K) + " offset channels, got " +
            std::to_string(offsets.value().channels()));
  check(masks.value().channels() == groups * K,
        "deform_conv2d: expected " + std::to_string(groups * K) + " mask channels, got " +
            std::to_string(masks.value().channels()));
  check(offsets.value().same_spatial(xv) && masks.value().same_spatial(xv),
        "deform_conv2d: offset/mask spatial size differs from input");
  const auto& wv = weight.value();
  check(wv.height() == C && wv.width() == K, "deform_conv2d: weight shape");
  const int cout = wv.channels();
  check(bias.value().channels() == cout, "deform_conv2d: bias shape");
  const int cpg = C / groups;

  // Sampling taps per (group, tap, pixel).
  struct Tap {
    int idx[4];
    S w[4];
    S ly, lx;
    bool any;
    unsigned char valid;
  };
  auto taps = std::make_shared<std::vector<Tap>>(std::size_t(groups) * K * HW);
  const auto& ov = offsets.value();
  for (int g = 0; g < groups; ++g)
    for (int k = 0; k < K; ++k) {
      const S* dy = ov.channel_data(g * 2 * K + 2 * k);
      const S* dx = ov.channel_data(g * 2 * K + 2 * k + 1);
      Tap* t = taps->data() + (std::size_t(g) * K + k) * HW;
      const int ky = k / 3 - 1, kx = k % 3 - 1;
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) {
          const Eigen::Index p = Eigen::Index(y) * W + xx;
          Tap& tp = t[p];
          const S py = S(y + ky) + dy[p];
          const S px = S(xx + kx) + dx[p];
          tp.any = !(py <= S(-1) || py >= S(H) || px <= S(-1) || px >= S(W));
          if (!tp.any) {
            for (int i = 0; i < 4; ++i) tp.idx[i] = 0, tp.w[i] = 0;
            tp.ly = tp.lx = 0;
            tp.valid = 0;
            continue;
          }
          const int y0 = int(std::floor(py)), x0 = int(std::floor(px));
          const int y1 = y0 + 1, x1 = x0 + 1;
          tp.ly = py - S(y0);
          tp.lx = px - S(x0);
          const S hy = S(1) - tp.ly, hx = S(1) - tp.lx;
          const int ys[4] = {y0, y0, y1, y1}, xs[4] = {x0, x1, x0, x1};
          const S ws[4] = {hy * hx, hy * tp.lx, tp.ly * hx, tp.ly * tp.lx};
          tp.valid = 0;
          for (int i = 0; i < 4; ++i) {
            const bool in = ys[i] >= 0 && ys[i] < H && xs[i] >= 0 && xs[i] < W;
            if (in) tp.valid |= static_cast<unsigned char>(1u << i);
            tp.idx[i] = in ? ys[i] * W + xs[i] : 0;
            tp.w[i] = in ? ws[i] : S(0);
          }
        }
    }

  auto cols = std::make_shared<Mat<S>>(Eigen::Index(C) * K, HW);
  const auto& mv = masks.value();
  for (int c = 0; c < C; ++c) {
    const int g = c / cpg;
    const S* src = xv.channel_data(c);
    for (int k = 0; k < K; ++k) {
      const Tap* t = taps->data() + (std::size_t(g) * K + k) * HW;
      const S* m = mv.channel_data(g * K + k);
      S* dst = cols->row(Eigen::Index(c) * K + k).data();
      for (Eigen::Index p = 0; p < HW; ++p) {
        const Tap& tp = t[p];
        const S v = tp.w[0] * src[tp.idx[0]] + tp.w[1] * src[tp.idx[1]] +
                    tp.w[2] * src[tp.idx[2]] + tp.w[3] * src[tp.idx[3]];
        dst[p] = m[p] * v;
      }
    }
  }
  Planar<S> out(cout, H, W);
  out.matrix().noalias() = wv.matrix() * (*cols);
  out.matrix().colwise() += bias.value().matrix().col(0);

  return Var<S>::make(
      std::move(out), {x, offsets, masks, weight, bias},
      [taps, cols, groups, cpg, C, H, W, HW](detail::Node<S>& n) {
        const auto& g = n.grad.matrix();
        auto& xn = *n.parents[0];
        auto& on = *n.parents[1];
        auto& mn = *n.parents[2];
        auto& wn = *n.parents[3];
        auto& bn = *n.parents[4];
        if (wn.requires_grad) {
          Mat<S> gw = g * cols->transpose();
          wn.accumulate(gw);
        }
        if (bn.requires_grad) {
          Mat<S> gb = g.rowwise().sum();
          bn.accumulate(gb);
        }
        if (!(xn.requires_grad || on.requires_grad || mn.requires_grad)) return;
        Mat<S> gcols = wn.value.matrix().transpose() * g;
        Planar<S>* gx = xn.requires_grad ? &xn.grad_buffer() : nullptr;
        Planar<S>* go = on.requires_grad ? &on.grad_buffer() : nullptr;
        Planar<S>* gm = mn.requires_grad ? &mn.grad_buffer() : nullptr;
        const auto& mv = mn.value;
        for (int c = 0; c < C; ++c) {
          const int grp = c / cpg;
          const S* src = xn.value.channel_data(c);
          S* dsrc = gx ? gx->channel_data(c) : nullptr;
          for (int k = 0; k < 9; ++k) {
            const auto* t = taps->data() + (std::size_t(grp) * 9 + k) * HW;
            const S* m = mv.channel_data(grp * 9 + k);
            const S* gc = gcols.row(Eigen::Index(c) * 9 + k).data();
            S* dm = gm ? gm->channel_data(grp * 9 + k) : nullptr;
            S* ddy = go ? go->channel_data(grp * 18 + 2 * k) : nullptr;
            S* ddx = go ? go->channel_data(grp * 18 + 2 * k + 1) : nullptr;
            for (Eigen::Index p = 0; p < HW; ++p) {
              const auto& tp = t[p];
              if (!tp.any) continue;
              const S v1 = (tp.valid & 1u) ? src[tp.idx[0]] : S(0);
              const S v2 = (tp.valid & 2u) ? src[tp.idx[1]] : S(0);
              const S v3 = (tp.valid & 4u) ? src[tp.idx[2]] : S(0);
              const S v4 = (tp.valid & 8u) ? src[tp.idx[3]] : S(0);
              const S val = tp.w[0] * v1 + tp.w[1] * v2 + tp.w[2] * v3 + tp.w[3] * v4;
              if (dm) dm[p] += gc[p] * val;
              const S dv = gc[p] * m[p];
              if (dsrc)
                for (int i = 0; i < 4; ++i) dsrc[tp.idx[i]] += dv * tp.w[i];
              if (go) {
                const S hy = S(1) - tp.ly, hx = S(1) - tp.lx;
                ddy[p] += dv * (-hx * v1 - tp.lx * v2 + hx * v3 + tp.lx * v4);
                ddx[p] += dv * (-hy * v1 + hy * v2 - tp.ly * v3 + tp.ly * v4);
              }
            }
          }
        }
        (void)H;
        (void)W;
      });
}

template <typename S>
Var<S> leaky_relu(const Var<S>& x, S slope) {
  Planar<S> out = x.value();
  out.matrix() = out.matrix().unaryExpr([slope](S v) { return v > S(0) ? v : v * slope; });
  return Var<S>::make(std::move(out), {x}, [slope](detail::Node<S>& n) {
    auto& xn = *n.parents[0];
    Mat<S> g = n.grad.matrix().binaryExpr(
        xn.value.matrix(), [slope](S gv, S xv) { return xv > S(0) ? gv : gv * slope; });
    xn.accumulate(g);
  });
}

template <typename S>
Var<S> sigmoid(const Var<S>& x) {
  Planar<S> out = x.value();
  out.matrix() = out.matrix().unaryExpr([](S v) { return S(1) / (S(1) + std::exp(-v)); });
  return Var<S>::make(out, {x}, [](detail::Node<S>& n) {
    const auto& y = n.value.matrix();
    Mat<S> g = n.grad.matrix().cwiseProduct(y.cwiseProduct((S(1) - y.array()).matrix()));
    n.parents[0]->accumulate(g);
  });
}

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a.value(), b.value(), "add");
  Planar<S> out(a.channels(), a.height(), a.width(), a.value().matrix() + b.value().matrix());
  return Var<S>::make(std::move(out), {a, b}, [](detail::Node<S>& n) {
    n.parents[0]->accumulate(n.grad.matrix());
    n.parents[1]->accumulate(n.grad.matrix());
  });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Planar<S> out(a.channels(), a.height(), a.width(), a.value().matrix() - b.value().matrix());
  return Var<S>::make(std::move(out), {a, b}, [](detail::Node<S>& n) {
    n.parents[0]->accumulate(n.grad.matrix());
    n.parents[1]->accumulate(-n.grad.matrix());
  });
}

template <typename S>
Var<S> scale(const Var<S>& x, S factor) {
  Planar<S> out(x.channels(), x.height(), x.width(), x.value().matrix() * factor);
  return Var<S>::make(std::move(out), {x}, [factor](detail::Node<S>& n) {
    n.parents[0]->accumulate(n.grad.matrix() * factor);
  });
}

template <typename S>
Var<S> linear_combine(const Var<S>& a, const Var<S>& ca, const Var<S>& b, const Var<S>& cb) {
  require_same_shape(a.value(), b.value(), "linear_combine");
  check(ca.value().size() == 1 && cb.value().size() == 1, "linear_combine: scalar coefficients");
  const S sa = ca.item(), sb = cb.item();
  Planar<S> out(a.channels(), a.height(), a.width(),
                sa * a.value().matrix() + sb * b.value().matrix());
  return Var<S>::make(std::move(out), {a, ca, b, cb}, [sa, sb](detail::Node<S>& n) {
    const auto& g = n.grad.matrix();
    auto& an = *n.parents[0];
    auto& can = *n.parents[1];
    auto& bn = *n.parents[2];
    auto& cbn = *n.parents[3];
    an.accumulate(g * sa);
    bn.accumulate(g * sb);
    if (can.requires_grad)
      can.accumulate(Mat<S>::Constant(1, 1, g.cwiseProduct(an.value.matrix()).sum()));
    if (cbn.requires_grad)
      cbn.accumulate(Mat<S>::Constant(1, 1, g.cwiseProduct(bn.value.matrix()).sum()));
  });
}

template <typename S>
Var<S> concat_channels(std::span<const Var<S>> parts) {
  check(!parts.empty(), "concat_channels: no inputs");
  const int H = parts[0].height(), W = parts[0].width();
  int total = 0;
  for (const auto& p : parts) {
    check(p.height() == H && p.width() == W, "concat_channels: spatial size mismatch");
    total += p.channels();
  }
  Planar<S> out(total, H, W);
  std::vector<int> starts;
  int row = 0;
  for (const auto& p : parts) {
    starts.push_back(row);
    out.matrix().middleRows(row, p.channels()) = p.value().matrix();
    row += p.channels();
  }
  std::vector<Var<S>> inputs(parts.begin(), parts.end());
  return Var<S>::make(std::move(out), inputs, [starts](detail::Node<S>& n) {
    for (std::size_t i = 0; i < n.parents.size(); ++i) {
      auto& pn = *n.parents[i];
      if (!pn.requires_grad) continue;
      Mat<S> g = n.grad.matrix().middleRows(starts[i], pn.value.channels());
      pn.accumulate(g);
    }
  });
}

template <typename S>
Var<S> slice_channels(const Var<S>& x, int begin, int count) {
  check(begin >= 0 && count > 0 && begin + count <= x.channels(), "slice_channels: out of range");
  Planar<S> out(count, x.height(), x.width(), x.value().matrix().middleRows(begin, count));
  return Var<S>::make(std::move(out), {x}, [begin, count](detail::Node<S>& n) {
    auto& xn = *n.parents[0];
    xn.grad_buffer().matrix().middleRows(begin, count) += n.grad.matrix();
  });
}

template <typename S>
Var<S> resize_bilinear(const Var<S>& x, int height, int width) {
  check(height > 0 && width > 0, "resize_bilinear: bad size");
  auto ty = resize_taps(x.height(), height);
  auto tx = resize_taps(x.width(), width);
  Planar<S> out = apply_resize(x.value(), ty, tx, height, width);
  return Var<S>::make(std::move(out), {x}, [ty, tx, height, width](detail::Node<S>& n) {
    auto& xn = *n.parents[0];
    auto& gx = xn.grad_buffer();
    const int Wi = gx.width();
    for (int c = 0; c < gx.channels(); ++c) {
      const S* g = n.grad.channel_data(c);
      S* d = gx.channel_data(c);
      for (int y = 0; y < height; ++y) {
        S* r0 = d + Eigen::Index(ty.lo[y]) * Wi;
        S* r1 = d + Eigen::Index(ty.hi[y]) * Wi;
        const S fy = S(ty.frac[y]);
        for (int xo = 0; xo < width; ++xo) {
          const S gv = g[Eigen::Index(y) * width + xo];
          const S fx = S(tx.frac[xo]);
          const int a = tx.lo[xo], b = tx.hi[xo];
          const S gt = gv * (S(1) - fy), gb = gv * fy;
          r0[a] += gt * (S(1) - fx);
          r0[b] += gt * fx;
          r1[a] += gb * (S(1) - fx);
          r1[b] += gb * fx;
        }
      }
    }
  });
}

template <typename S>
Var<S> straight_through(const Var<S>& x, Planar<S> forward) {
  require_same_shape(x.value(), forward, "straight_through");
  return Var<S>::make(std::move(forward), {x}, [](detail::Node<S>& n) {
    n.parents[0]->accumulate(n.grad.matrix());
  });
}

template <typename S>
Var<S> warp(const Var<S>& x, const Planar<S>& flow) {
  check(flow.channels() == 2 && x.value().same_spatial(flow), "warp: flow/frame dimensions differ");
  auto taps = std::make_shared<WarpTaps<S>>(warp_taps(flow));
  Planar<S> out = apply_warp(x.value(), *taps);
  return Var<S>::make(std::move(out), {x}, [taps](detail::Node<S>& n) {
    auto& gx = n.parents[0]->grad_buffer();
    const Eigen::Index P = gx.pixels();
    for (int c = 0; c < gx.channels(); ++c) {
      const S* g = n.grad.channel_data(c);
      S* d = gx.channel_data(c);
      for (Eigen::Index p = 0; p < P; ++p) {
        const int* id = &taps->idx[p * 4];
        const S* w = &taps->w[p * 4];
        for (int i = 0; i < 4; ++i) d[id[i]] += w[i] * g[p];
      }
    }
  });
}

template <typename S>
Var<S> grad_xy(const Var<S>& x) {
  const auto& xv = x.value();
  const int C = xv.channels(), H = xv.height(), W = xv.width();
  Planar<S> out(2 * C, H, W);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int i = 0; i < W; ++i) {
        out(c, y, i) = i + 1 < W ? xv(c, y, i + 1) - xv(c, y, i) : S(0);
        out(C + c, y, i) = y + 1 < H ? xv(c, y + 1, i) - xv(c, y, i) : S(0);
      }
  return Var<S>::make(std::move(out), {x}, [C, H, W](detail::Node<S>& n) {
    auto& gx = n.parents[0]->grad_buffer();
    const auto& g = n.grad;
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        for (int i = 0; i < W; ++i) {
          if (i + 1 < W) {
            gx(c, y, i + 1) += g(c, y, i);
            gx(c, y, i) -= g(c, y, i);
          }
          if (y + 1 < H) {
            gx(c, y + 1, i) += g(C + c, y, i);
            gx(c, y, i) -= g(C + c, y, i);
          }
        }
  });
}

template <typename S>
Var<S> mse(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a.value(), b.value(), "mse");
  const double n = double(a.value().size());
  const double v = (a.value().matrix().template cast<double>() -
                    b.value().matrix().template cast<double>())
                       .squaredNorm() /
                   n;
  return Var<S>::make(Planar<S>::Scalar1(S(v)), {a, b}, [n](detail::Node<S>& node) {
    const S g = node.grad.matrix()(0, 0);
    auto& an = *node.parents[0];
    auto& bn = *node.parents[1];
    Mat<S> d = (an.value.matrix() - bn.value.matrix()) * S(2.0 * double(g) / n);
    if (an.requires_grad) an.accumulate(d);
    if (bn.requires_grad) bn.accumulate(-d);
  });
}

template <typename S>
Var<S> charbonnier_mean(const Var<S>& x, double eps) {
  const double n = double(x.value().size());
  const double e2 = eps * eps;
  double acc = 0.0;
  const S* p = x.value().data();
  for (Eigen::Index i = 0; i < x.value().size(); ++i) {
    const double v = p[i];
    acc += std::sqrt(v * v + e2);
  }
  return Var<S>::make(Planar<S>::Scalar1(S(acc / n)), {x}, [n, e2](detail::Node<S>& node) {
    const double g = node.grad.matrix()(0, 0);
    auto& xn = *node.parents[0];
    Mat<S> d = xn.value.matrix().unaryExpr([g, n, e2](S v) {
      const double dv = double(v);
      return S(g * dv / std::sqrt(dv * dv + e2) / n);
    });
    xn.accumulate(d);
  });
}

template <typename S>
Var<S> weighted_sum(std::span<const Var<S>> terms, std::span<const double> weights) {
  check(terms.size() == weights.size(), "weighted_sum: size mismatch");
  double v = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    check(terms[i].value().size() == 1, "weighted_sum: terms must be scalars");
    v += weights[i] * double(terms[i].item());
  }
  std::vector<double> w(weights.begin(), weights.end());
  std::vector<Var<S>> inputs(terms.begin(), terms.end());
  return Var<S>::make(Planar<S>::Scalar1(S(v)), inputs, [w](detail::Node<S>& n) {
    const S g = n.grad.matrix()(0, 0);
    for (std::size_t i = 0; i < n.parents.size(); ++i)
      n.parents[i]->accumulate(Mat<S>::Constant(1, 1, S(double(g) * w[i])));
  });
}

}  // namespace ops

#define MONO3D_INSTANTIATE_OPS(S)                                                             \
  template Var<S> ops::conv2d(const Var<S>&, const Var<S>&, const Var<S>&, int, int);         \
  template Var<S> ops::deform_conv2d(const Var<S>&, const Var<S>&, const Var<S>&,             \
                                     const Var<S>&, const Var<S>&, int);                      \
  template Var<S> ops::leaky_relu(const Var<S>&, S);                                          \
  template Var<S> ops::sigmoid(const Var<S>&);                                                \
  template Var<S> ops::add(const Var<S>&, const Var<S>&);                                     \
  template Var<S> ops::sub(const Var<S>&, const Var<S>&);                                     \
  template Var<S> ops::scale(const Var<S>&, S);                                               \
  template Var<S> ops::linear_combine(const Var<S>&, const Var<S>&, const Var<S>&,            \
                                      const Var<S>&);                                         \
  template Var<S> ops::concat_channels(std::span<const Var<S>>);                              \
  template Var<S> ops::slice_channels(const Var<S>&, int, int);                               \
  template Var<S> ops::resize_bilinear(const Var<S>&, int, int);                              \
  template Var<S> ops::straight_through(const Var<S>&, Planar<S>);                            \
  template Var<S> ops::warp(const Var<S>&, const Planar<S>&);                                 \
  template Var<S> ops::grad_xy(const Var<S>&);                                                \
  template Var<S> ops::mse(const Var<S>&, const Var<S>&);                                     \
  template Var<S> ops::charbonnier_mean(const Var<S>&, double);                               \
  template Var<S> ops::weighted_sum(std::span<const Var<S>>, std::span<const double>);        \
  template Planar<S> kernels::warp(const Planar<S>&, const Planar<S>&);                       \
  template Planar<S> kernels::resize_bilinear(const Planar<S>&, int, int);                    \
  template Planar<S> kernels::conv2d(const Planar<S>&, const Planar<S>&, const Planar<S>&,    \
                                     int, int);

MONO3D_INSTANTIATE_OPS(float)
MONO3D_INSTANTIATE_OPS(double)

#undef MONO3D_INSTANTIATE_OPS

}  // namespace mono3d
