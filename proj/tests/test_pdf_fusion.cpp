#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mono3d/pdf_fusion.hpp"
#include "support.hpp"

using namespace mono3d;
using test::random_planar;
using V = Var<double>;

namespace {

/// Brute-force modulated deformable convolution for integer offsets: every
/// tap reads x at (y + ky + dy, x + kx + dx), zero outside.
Planar<double> shifted_conv_oracle(const Planar<double>& x, const Planar<double>& w,
                                   const Planar<double>& b, int dy, int dx) {
  Planar<double> out(w.channels(), x.height(), x.width());
  for (int o = 0; o < w.channels(); ++o)
    for (int y = 0; y < x.height(); ++y)
      for (int xx = 0; xx < x.width(); ++xx) {
        double acc = b(o, 0, 0);
        for (int c = 0; c < x.channels(); ++c)
          for (int k = 0; k < 9; ++k) {
            const int sy = y + k / 3 - 1 + dy, sx = xx + k % 3 - 1 + dx;
            if (sy < 0 || sx < 0 || sy >= x.height() || sx >= x.width()) continue;
            acc += w(o, c, k) * x(c, sy, sx);
          }
        out(o, y, xx) = acc;
      }
  return out;
}

Planar<double> offsets_of(int groups, int h, int w, double dy, double dx) {
  Planar<double> p(groups * 18, h, w);
  for (int g = 0; g < groups; ++g)
    for (int k = 0; k < 9; ++k) {
      p.matrix().row(g * 18 + 2 * k).setConstant(dy);
      p.matrix().row(g * 18 + 2 * k + 1).setConstant(dx);
    }
  return p;
}

double rel_diff(const Planar<double>& a, const Planar<double>& b) {
  return (a.matrix() - b.matrix()).norm() / std::max(1e-300, b.matrix().norm());
}

template <typename S>
FeaturePyramid<S> random_pyramid(int h, int w, const std::array<int, 3>& c, Rng& rng) {
  FeaturePyramid<S> p;
  for (int l = 0; l < kPyramidLevels; ++l)
    p.levels[l] = Var<S>::constant(random_planar<S>(c[l], h >> l, w >> l, rng));
  return p;
}

template <typename S>
void randomize(Conv2d<S>& conv, Rng& rng, double scale) {
  auto& w = conv.weight.mutable_value();
  w = random_planar<S>(w.channels(), w.height(), w.width(), rng, -scale, scale);
}

}  // namespace

TEST_CASE("zero offsets and unit masks reduce to a dense 3x3 convolution") {
  Rng rng(21);
  for (int groups : {1, 2}) {
    const auto x = random_planar<double>(4, 16, 16, rng);
    const auto w = random_planar<double>(5, 4, 9, rng);
    const auto b = random_planar<double>(5, 1, 1, rng);
    const auto got = ops::deform_conv2d(V::constant(x), V::constant(offsets_of(groups, 16, 16, 0, 0)),
                                        V::constant(Planar<double>::Constant(groups * 9, 16, 16, 1)),
                                        V::constant(w), V::constant(b), groups);
    CHECK(rel_diff(got.value(), kernels::conv2d(x, w, b, 3)) < 1e-12);
  }
}

TEST_CASE("integer offsets equal a brute-force shifted convolution") {
  Rng rng(22);
  const auto x = random_planar<double>(2, 8, 8, rng);
  const auto w = random_planar<double>(3, 2, 9, rng);
  const auto b = random_planar<double>(3, 1, 1, rng);
  for (auto [dy, dx] : std::array<std::pair<int, int>, 4>{{{1, 0}, {0, -2}, {-1, 1}, {3, 2}}}) {
    CAPTURE(dy);
    CAPTURE(dx);
    const auto got = ops::deform_conv2d(V::constant(x), V::constant(offsets_of(1, 8, 8, dy, dx)),
                                        V::constant(Planar<double>::Constant(9, 8, 8, 1)),
                                        V::constant(w), V::constant(b), 1);
    CHECK(rel_diff(got.value(), shifted_conv_oracle(x, w, b, dy, dx)) < 1e-12);
  }
}

TEST_CASE("samples outside the map read zero and masks scale each tap") {
  Rng rng(23);
  const auto x = random_planar<double>(2, 6, 6, rng);
  const auto w = random_planar<double>(3, 2, 9, rng);
  const auto b = random_planar<double>(3, 1, 1, rng);
  const auto far = ops::deform_conv2d(V::constant(x), V::constant(offsets_of(1, 6, 6, 50, -50)),
                                      V::constant(Planar<double>::Constant(9, 6, 6, 1)),
                                      V::constant(w), V::constant(b), 1);
  for (int o = 0; o < 3; ++o)
    CHECK(far.value().matrix().row(o).cwiseAbs().maxCoeff() == doctest::Approx(std::abs(b(o, 0, 0))));

  // Half masks halve the bias-free response.
  Planar<double> zero_b(3, 1, 1);
  const auto full = ops::deform_conv2d(V::constant(x), V::constant(offsets_of(1, 6, 6, 0, 0)),
                                       V::constant(Planar<double>::Constant(9, 6, 6, 1)),
                                       V::constant(w), V::constant(zero_b), 1);
  const auto half = ops::deform_conv2d(V::constant(x), V::constant(offsets_of(1, 6, 6, 0, 0)),
                                       V::constant(Planar<double>::Constant(9, 6, 6, 0.5)),
                                       V::constant(w), V::constant(zero_b), 1);
  CHECK(rel_diff(half.value(), Planar<double>(3, 6, 6, 0.5 * full.value().matrix())) < 1e-14);
}

TEST_CASE("a fresh deformable layer samples the regular grid with masks of one half") {
  Rng rng(24);
  ParameterSet<double> params;
  DeformableConv<double> layer(params, "d", 4, 6, 2, rng);
  const auto out = layer.forward(V::constant(random_planar<double>(4, 8, 8, rng)));
  CHECK(out.offsets.value().matrix().cwiseAbs().maxCoeff() == 0.0);
  CHECK(out.masks.value().matrix().minCoeff() == 0.5);
  CHECK(out.masks.value().matrix().maxCoeff() == 0.5);
  CHECK(out.offsets.channels() == 36);
  CHECK(out.masks.channels() == 18);
  CHECK(out.features.value().shape_string() == "6x8x8");
}

TEST_CASE("offset predictor gradient matches finite differences") {
  Rng rng(25);
  ParameterSet<double> params;
  DeformableConv<double> layer(params, "d", 2, 3, 2, rng);
  randomize(layer.offset_predictor(), rng, 0.3);
  randomize(layer.mask_predictor(), rng, 0.3);
  const auto x = V::constant(random_planar<double>(2, 4, 4, rng));
  auto loss = [&] { return test::project(layer.forward(x).features); };
  CHECK(test::check_gradient(layer.offset_predictor().weight, loss, 1e-7).rel_error < 1e-5);
  CHECK(test::check_gradient(layer.mask_predictor().weight, loss).rel_error < 1e-6);
  CHECK(test::check_gradient(layer.offset_predictor().bias, loss, 1e-7).rel_error < 1e-5);
}

TEST_CASE("fusion keeps widths and sizes; split doubles then halves") {
  Rng rng(26);
  const std::array<int, 3> c{4, 6, 8};
  ParameterSet<float> params;
  PyramidDeformableFusion<float> enc(params, "fusion", {8, 12, 16}, c, 2, rng);
  PyramidDeformableFusion<float> dec(params, "split", c, {8, 12, 16}, 2, rng);
  const auto l = random_pyramid<float>(16, 8, c, rng);
  const auto r = random_pyramid<float>(16, 8, c, rng);
  const auto fused = fuse(enc, l, r);
  CHECK(fused.channels() == c);
  CHECK(fused.height() == 16);
  CHECK(fused.width() == 8);
  CHECK(fused.levels[2].height() == 4);

  // Zero-disparity stereo is valid.
  const auto same = fuse(enc, l, l);
  for (const auto& lv : same.levels) CHECK(lv.value().matrix().allFinite());

  const auto [sl, sr] = split(dec, fused);
  CHECK(sl.channels() == c);
  CHECK(sr.channels() == c);
  const auto [sl2, sr2] = split(dec, fused);
  for (int i = 0; i < kPyramidLevels; ++i) {
    CHECK(sl.levels[i].value() == sl2.levels[i].value());
    CHECK(sr.levels[i].value() == sr2.levels[i].value());
  }

  const auto zero = zero_pyramid<float>(16, 8, c);
  const auto [zl, zr] = split(dec, zero);
  for (int i = 0; i < kPyramidLevels; ++i) {
    CHECK(zl.levels[i].value().matrix().allFinite());
    CHECK(zr.levels[i].value().matrix().allFinite());
  }
  CHECK_THROWS(fuse(enc, l, random_pyramid<float>(8, 8, c, rng)));
}

TEST_CASE("the two offset groups sample different locations on asymmetric input") {
  Rng rng(27);
  const std::array<int, 3> c{4, 6, 8};
  ParameterSet<double> params;
  PyramidDeformableFusion<double> pdf(params, "fusion", {8, 12, 16}, c, 2, rng);
  for (int l = 0; l < kPyramidLevels; ++l) randomize(pdf.level(l).offset_predictor(), rng, 0.2);
  const auto left = random_pyramid<double>(8, 8, c, rng);
  const auto right = random_pyramid<double>(8, 8, c, rng);
  FeaturePyramid<double> both;
  for (int l = 0; l < kPyramidLevels; ++l) {
    const std::array<V, 2> parts{left.levels[l], right.levels[l]};
    both.levels[l] = ops::concat_channels<double>(parts);
  }
  const auto trace = pdf.forward(both);
  for (int l = 0; l < kPyramidLevels; ++l) {
    const auto& off = trace.offsets[l].value().matrix();
    REQUIRE(off.rows() == 36);
    CHECK((off.topRows(18) - off.bottomRows(18)).cwiseAbs().maxCoeff() > 1e-3);
  }
}
