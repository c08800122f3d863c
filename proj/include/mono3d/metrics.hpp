#pragma once

#include "mono3d/domain.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mono3d {

inline constexpr double kPsnrCap = 99.0;

/// On the 8-bit grid with peak 255; identical frames give kPsnrCap.
double psnr(const Frame& a, const Frame& b);

/// Gaussian-window SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03, data range 1),
/// valid-region mean, averaged over channels.
double ssim(const Frame& a, const Frame& b);

inline constexpr int kMsSsimScales = 5;
inline constexpr double kMsSsimWeights[kMsSsimScales] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

/// Multi-scale SSIM with 2x2 average-pool downsampling. `scales` below 5
/// uses the leading weights renormalised to sum to one. Throws when the
/// smaller side is under 11 * 2^(scales-1).
double ms_ssim(const Frame& a, const Frame& b, int scales = kMsSsimScales);
int ms_ssim_min_side(int scales = kMsSsimScales);

/// |warp(prev, flow) - cur| per pixel and channel.
Planar<float> warping_deviation(const Frame& prev, const Frame& cur, const FlowField& flow);

struct TemporalReport {
  std::string stream;
  std::vector<double> sigma;  // one per transition t = 1..n-1
  double geometric_mean = 1.0;
};

/// Per transition: exp(mean ln((D + eps) / (D_ref + eps))) with D the
/// warping deviation of `generated`, D_ref that of `reference`, both warped
/// with the reference flows.
TemporalReport temporal_deviation(std::span<const Frame> generated,
                                  std::span<const Frame> reference,
                                  std::span<const FlowField> flows, double eps = 1e-3,
                                  std::string stream = {});

double geometric_mean(std::span<const double> values);

struct DiffMap {
  Frame image;        // clamp(scale * |a - b|)
  double mad = 0.0;   // mean absolute difference on the 0..255 scale
};

DiffMap diff_map(const Frame& a, const Frame& b, double scale = 100.0);

/// Quality of one clip in the table layout: rows of the three streams
/// (mononized vs input left, restored left, restored right) per metric.
/// Metrics that were not requested hold NaN.
struct ClipEvaluation {
  std::string clip;
  int frames = 0;
  double psnr_mono, psnr_left, psnr_right;
  double ssim_mono, ssim_left, ssim_right;
  double msssim_mono, msssim_left, msssim_right;
  double sigma_mono, sigma_left, sigma_right;
};

struct EvaluationRequest {
  bool psnr = true;
  bool ssim = true;
  bool msssim = false;
  bool temporal = false;
  int msssim_scales = kMsSsimScales;
  double eps = 1e-3;
};

/// Requests temporal metrics only when `input` carries flows (the mono
/// stream is judged with the left flows).
ClipEvaluation evaluate_clip(const std::string& name, const StereoClip& input,
                             const VideoClip& mono, const StereoClip& restored,
                             const EvaluationRequest& request);

/// Arithmetic mean for PSNR/SSIM/MS-SSIM, geometric mean for sigma.
ClipEvaluation aggregate(std::span<const ClipEvaluation> rows);

std::string evaluation_csv(std::span<const ClipEvaluation> rows, const ClipEvaluation* total);
std::string evaluation_json(std::span<const ClipEvaluation> rows, const ClipEvaluation* total);

}  // namespace mono3d
