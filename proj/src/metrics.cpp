#include "mono3d/metrics.hpp"

#include "mono3d/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mono3d {

namespace {

using Plane = Eigen::ArrayXXd;  // rows = height

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void require_same(const Planar<float>& a, const Planar<float>& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape " + a.shape_string() + " vs " +
                                b.shape_string());
}

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> g{};
  double sum = 0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    sum += g[i];
  }
  for (auto& v : g) v /= sum;
  return g;
}

/// Separable Gaussian filter keeping only fully covered positions.
Plane filter_valid(const Plane& x) {
  static const auto g = gaussian_taps();
  const Eigen::Index h = x.rows(), w = x.cols();
  const Eigen::Index oh = h - kWindow + 1, ow = w - kWindow + 1;
  Plane tmp = Plane::Zero(h, ow);
  for (int k = 0; k < kWindow; ++k) tmp += g[k] * x.middleCols(k, ow);
  Plane out = Plane::Zero(oh, ow);
  for (int k = 0; k < kWindow; ++k) out += g[k] * tmp.middleRows(k, oh);
  return out;
}

Plane channel(const Frame& f, int c) {
  Plane p(f.height(), f.width());
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) p(y, x) = f(c, y, x);
  return p;
}

struct SsimParts {
  double ssim;
  double cs;
};

SsimParts ssim_parts(const Plane& x, const Plane& y) {
  if (x.rows() < kWindow || x.cols() < kWindow)
    throw std::invalid_argument("ssim: frame smaller than the 11x11 window");
  const Plane mx = filter_valid(x), my = filter_valid(y);
  const Plane sxx = filter_valid(x * x) - mx * mx;
  const Plane syy = filter_valid(y * y) - my * my;
  const Plane sxy = filter_valid(x * y) - mx * my;
  const Plane cs = (2 * sxy + kC2) / (sxx + syy + kC2);
  const Plane lum = (2 * mx * my + kC1) / (mx * mx + my * my + kC1);
  return {(lum * cs).mean(), cs.mean()};
}

Plane pool2(const Plane& x) {
  const Eigen::Index h = x.rows() / 2, w = x.cols() / 2;
  Plane out(h, w);
  for (Eigen::Index i = 0; i < h; ++i)
    for (Eigen::Index j = 0; j < w; ++j)
      out(i, j) = 0.25 * (x(2 * i, 2 * j) + x(2 * i + 1, 2 * j) + x(2 * i, 2 * j + 1) +
                          x(2 * i + 1, 2 * j + 1));
  return out;
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

std::vector<Frame> frames_of(const StereoClip& c, bool left) {
  std::vector<Frame> out;
  for (const auto& f : c.frames) out.push_back(left ? f.left : f.right);
  return out;
}

template <typename Metric>
double clip_mean(std::span<const Frame> a, std::span<const Frame> b, Metric m) {
  double sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += m(a[i], b[i]);
  return sum / double(a.size());
}

}  // namespace

double psnr(const Frame& a, const Frame& b) {
  require_same(a, b, "psnr");
  const auto ba = a.to_bytes(), bb = b.to_bytes();
  double se = 0;
  for (std::size_t i = 0; i < ba.size(); ++i) {
    const double d = double(ba[i]) - double(bb[i]);
    se += d * d;
  }
  if (se == 0) return kPsnrCap;
  const double mse = se / double(ba.size());
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double ssim(const Frame& a, const Frame& b) {
  require_same(a, b, "ssim");
  double sum = 0;
  for (int c = 0; c < a.channels(); ++c) sum += ssim_parts(channel(a, c), channel(b, c)).ssim;
  return sum / a.channels();
}

int ms_ssim_min_side(int scales) { return kWindow << (scales - 1); }

double ms_ssim(const Frame& a, const Frame& b, int scales) {
  require_same(a, b, "ms_ssim");
  if (scales < 1 || scales > kMsSsimScales)
    throw std::invalid_argument("ms_ssim: scales must be in [1, 5]");
  const int need = ms_ssim_min_side(scales);
  if (std::min(a.height(), a.width()) < need)
    throw std::invalid_argument("ms_ssim: " + std::to_string(scales) + " scales need a side of " +
                                std::to_string(need) + " px, frame is " +
                                std::to_string(a.height()) + "x" + std::to_string(a.width()));
  double wsum = 0;
  for (int s = 0; s < scales; ++s) wsum += kMsSsimWeights[s];
  double total = 0;
  for (int c = 0; c < a.channels(); ++c) {
    Plane x = channel(a, c), y = channel(b, c);
    double value = 1.0;
    for (int s = 0; s < scales; ++s) {
      const auto parts = ssim_parts(x, y);
      const double w = kMsSsimWeights[s] / wsum;
      // Negative structure terms would make fractional powers undefined.
      const double term = s + 1 == scales ? parts.ssim : parts.cs;
      value *= std::pow(std::max(term, 0.0), w);
      if (s + 1 < scales) {
        x = pool2(x);
        y = pool2(y);
      }
    }
    total += value;
  }
  return total / a.channels();
}

Planar<float> warping_deviation(const Frame& prev, const Frame& cur, const FlowField& flow) {
  require_same(prev, cur, "warping_deviation");
  if (!prev.same_spatial(flow))
    throw std::invalid_argument("warping_deviation: flow " + flow.shape_string() + " vs frame " +
                                prev.shape_string());
  Planar<float> w = kernels::warp<float>(prev, flow);
  w.matrix() = (w.matrix() - cur.matrix()).cwiseAbs();
  return w;
}

TemporalReport temporal_deviation(std::span<const Frame> generated,
                                  std::span<const Frame> reference,
                                  std::span<const FlowField> flows, double eps,
                                  std::string stream) {
  if (generated.size() != reference.size())
    throw std::invalid_argument("temporal_deviation: stream lengths differ (" +
                                std::to_string(generated.size()) + " vs " +
                                std::to_string(reference.size()) + ")");
  if (generated.size() < 2) throw std::invalid_argument("temporal_deviation: need >= 2 frames");
  if (flows.size() + 1 != generated.size())
    throw std::invalid_argument("temporal_deviation: expected " +
                                std::to_string(generated.size() - 1) + " flows");
  if (!(eps > 0)) throw std::invalid_argument("temporal_deviation: eps must be positive");
  TemporalReport r;
  r.stream = std::move(stream);
  for (std::size_t t = 1; t < generated.size(); ++t) {
    const auto d = warping_deviation(generated[t - 1], generated[t], flows[t - 1]);
    const auto dref = warping_deviation(reference[t - 1], reference[t], flows[t - 1]);
    const auto logs = ((d.matrix().array().cast<double>() + eps) /
                       (dref.matrix().array().cast<double>() + eps))
                          .log();
    r.sigma.push_back(std::exp(logs.mean()));
  }
  r.geometric_mean = geometric_mean(r.sigma);
  return r;
}

double geometric_mean(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("geometric_mean: no values");
  double s = 0;
  for (double v : values) {
    if (!(v > 0)) throw std::invalid_argument("geometric_mean: values must be positive");
    s += std::log(v);
  }
  return std::exp(s / double(values.size()));
}

DiffMap diff_map(const Frame& a, const Frame& b, double scale) {
  require_same(a, b, "diff_map");
  DiffMap d;
  const auto diff = (a.matrix() - b.matrix()).cwiseAbs();
  d.mad = double(diff.template cast<double>().mean()) * 255.0;
  Planar<float> img(a.channels(), a.height(), a.width());
  img.matrix() = (diff * float(scale)).cwiseMin(1.0f);
  d.image = Frame(std::move(img));
  return d;
}

ClipEvaluation evaluate_clip(const std::string& name, const StereoClip& input,
                             const VideoClip& mono, const StereoClip& restored,
                             const EvaluationRequest& request) {
  input.validate();
  if (mono.size() != input.size() || restored.size() != input.size())
    throw std::invalid_argument(name + ": frame counts differ between input, mono and restored");
  const auto in_l = frames_of(input, true), in_r = frames_of(input, false);
  const auto out_l = frames_of(restored, true), out_r = frames_of(restored, false);
  ClipEvaluation e{name, int(input.size()), nan(), nan(), nan(), nan(), nan(), nan(),
                   nan(),  nan(),           nan(), nan(), nan(), nan()};
  if (request.psnr) {
    e.psnr_mono = clip_mean(mono.frames, in_l, psnr);
    e.psnr_left = clip_mean(out_l, in_l, psnr);
    e.psnr_right = clip_mean(out_r, in_r, psnr);
  }
  if (request.ssim) {
    e.ssim_mono = clip_mean(mono.frames, in_l, ssim);
    e.ssim_left = clip_mean(out_l, in_l, ssim);
    e.ssim_right = clip_mean(out_r, in_r, ssim);
  }
  if (request.msssim) {
    auto m = [&](const Frame& a, const Frame& b) { return ms_ssim(a, b, request.msssim_scales); };
    e.msssim_mono = clip_mean(mono.frames, in_l, m);
    e.msssim_left = clip_mean(out_l, in_l, m);
    e.msssim_right = clip_mean(out_r, in_r, m);
  }
  if (request.temporal) {
    if (!input.has_flows())
      throw std::invalid_argument(name + ": temporal metric needs flow_left/ and flow_right/");
    e.sigma_mono =
        temporal_deviation(mono.frames, in_l, *input.flows_left, request.eps).geometric_mean;
    e.sigma_left = temporal_deviation(out_l, in_l, *input.flows_left, request.eps).geometric_mean;
    e.sigma_right =
        temporal_deviation(out_r, in_r, *input.flows_right, request.eps).geometric_mean;
  }
  return e;
}

ClipEvaluation aggregate(std::span<const ClipEvaluation> rows) {
  if (rows.empty()) throw std::invalid_argument("aggregate: no rows");
  ClipEvaluation a{"mean", 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  auto arith = [&](double ClipEvaluation::*f) {
    double s = 0;
    for (const auto& r : rows) s += r.*f;
    a.*f = s / double(rows.size());
  };
  auto geo = [&](double ClipEvaluation::*f) {
    if (std::isnan(rows.front().*f)) {
      a.*f = nan();
      return;
    }
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r.*f);
    a.*f = geometric_mean(v);
  };
  for (auto f : {&ClipEvaluation::psnr_mono, &ClipEvaluation::psnr_left,
                 &ClipEvaluation::psnr_right, &ClipEvaluation::ssim_mono,
                 &ClipEvaluation::ssim_left, &ClipEvaluation::ssim_right,
                 &ClipEvaluation::msssim_mono, &ClipEvaluation::msssim_left,
                 &ClipEvaluation::msssim_right})
    arith(f);
  for (auto f : {&ClipEvaluation::sigma_mono, &ClipEvaluation::sigma_left,
                 &ClipEvaluation::sigma_right})
    geo(f);
  for (const auto& r : rows) a.frames += r.frames;
  return a;
}

namespace {

const std::array<std::pair<const char*, double ClipEvaluation::*>, 12> kColumns{{
    {"psnr_mono", &ClipEvaluation::psnr_mono},
    {"psnr_left", &ClipEvaluation::psnr_left},
    {"psnr_right", &ClipEvaluation::psnr_right},
    {"ssim_mono", &ClipEvaluation::ssim_mono},
    {"ssim_left", &ClipEvaluation::ssim_left},
    {"ssim_right", &ClipEvaluation::ssim_right},
    {"msssim_mono", &ClipEvaluation::msssim_mono},
    {"msssim_left", &ClipEvaluation::msssim_left},
    {"msssim_right", &ClipEvaluation::msssim_right},
    {"sigma_mono", &ClipEvaluation::sigma_mono},
    {"sigma_left", &ClipEvaluation::sigma_left},
    {"sigma_right", &ClipEvaluation::sigma_right},
}};

void csv_row(std::ostringstream& out, const ClipEvaluation& r) {
  out << r.clip << ',' << r.frames;
  for (const auto& [name, f] : kColumns) {
    out << ',';
    if (!std::isnan(r.*f)) out << r.*f;
  }
  out << '\n';
}

nlohmann::json json_row(const ClipEvaluation& r) {
  nlohmann::json j = {{"clip", r.clip}, {"frames", r.frames}};
  for (const auto& [name, f] : kColumns)
    j[name] = std::isnan(r.*f) ? nlohmann::json() : nlohmann::json(r.*f);
  return j;
}

}  // namespace

std::string evaluation_csv(std::span<const ClipEvaluation> rows, const ClipEvaluation* total) {
  std::ostringstream out;
  out << std::setprecision(8) << "clip,frames";
  for (const auto& [name, f] : kColumns) out << ',' << name;
  out << '\n';
  for (const auto& r : rows) csv_row(out, r);
  if (total) csv_row(out, *total);
  return out.str();
}

std::string evaluation_json(std::span<const ClipEvaluation> rows, const ClipEvaluation* total) {
  nlohmann::json j;
  j["clips"] = nlohmann::json::array();
  for (const auto& r : rows) j["clips"].push_back(json_row(r));
  if (total) j["aggregate"] = json_row(*total);
  return j.dump(2);
}

}  // namespace mono3d
