// Acceptance suite: prints one PASS/FAIL line per criterion. Exits nonzero
// when a criterion fails that is not listed with --known-failure.
// Usage: acceptance [work_dir] [--known-failure N]...

#include "mono3d/codec_harness.hpp"
#include "mono3d/flow_warp.hpp"
#include "mono3d/image_io.hpp"
#include "mono3d/metrics.hpp"
#include "mono3d/pipeline.hpp"
#include "mono3d/process.hpp"
#include "mono3d/synthetic.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

using namespace mono3d;

namespace {

// Pinned tolerances and budgets.
constexpr double kQuantizeSeconds = 10;
constexpr double kDeformRelTol = 1e-5;
constexpr double kDeformSeconds = 30;
constexpr double kLossRelTol = 1e-6;
constexpr double kGradRelTol = 1e-3;
constexpr double kLossSeconds = 120;
constexpr double kShuffleFactor = 1.05;
constexpr double kSigmaSeconds = 60;
constexpr double kMonoPsnrMin = 30;
constexpr double kRightPsnrMin = 28;
constexpr int kMaxIterations = 3000;
constexpr double kToySeconds = 4 * 3600;
constexpr double kLowBitrateKbps = 200;
constexpr double kLowBitrateMaxMbps = 0.5;
constexpr int kAblationMsSsimScales = 4;
constexpr double kCompatKbps = 300;
constexpr double kFormatSeconds = 60;

// Toy training setup shared by the trained criteria.
constexpr int kToyIterations = 600;

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

std::vector<int> failed;

void report(int id, bool pass, const std::string& detail) {
  if (!pass) failed.push_back(id);
  std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

template <typename F>
void guarded(int id, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, false, std::string("exception: ") + e.what());
  }
}

// ------------------------------------------------------------------ 1

void quantization() {
  const auto t0 = clock_type::now();
  bool forward_ok = true;
  for (int b = 0; b < 256; ++b) {
    const float x = float(b) / 255.0f;
    forward_ok &= quantize(Var<float>::constant(Planar<float>::Scalar1(x))).item() == x;
  }
  Rng rng(101);
  const auto x = test::random_planar<float>(1, 1, 1000, rng, -0.2, 1.2);
  const auto q = quantize(Var<float>::constant(x)).value();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = std::clamp(double(x.data()[i]), 0.0, 1.0);
    forward_ok &= q.data()[i] == float(std::lround(v * 255.0)) / 255.0f;
  }

  // Gradient through the layer against the gradient of the same loss taken
  // directly at the quantized value.
  const auto init = test::random_planar<double>(3, 8, 8, rng, 0, 1);
  auto a = Var<double>::leaf(init);
  backward(test::project(quantize(a)));
  auto b = Var<double>::leaf(quantize(Var<double>::constant(init)).value());
  backward(test::project(b));
  const bool ste_ok = a.grad() == b.grad();
  const double s = seconds_since(t0);
  report(1, forward_ok && ste_ok && s < kQuantizeSeconds,
         "forward " + std::string(forward_ok ? "exact" : "mismatch") + ", straight-through " +
             (ste_ok ? "exact" : "mismatch") + ", " + fmt(s) + " s");
}

// ------------------------------------------------------------------ 2

/// Direct dense 3x3 convolution with zero padding.
Planar<double> dense_conv_oracle(const Planar<double>& x, const Planar<double>& w,
                                 const Planar<double>& bias) {
  const int C = x.channels(), H = x.height(), W = x.width(), O = w.channels();
  Planar<double> out(O, H, W);
  for (int o = 0; o < O; ++o)
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx) {
        double s = bias(o, 0, 0);
        for (int c = 0; c < C; ++c)
          for (int k = 0; k < 9; ++k) {
            const int sy = y + k / 3 - 1, sx = xx + k % 3 - 1;
            if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
            s += w(o, c, k) * x(c, sy, sx);
          }
        out(o, y, xx) = s;
      }
  return out;
}

void deformable_reduction() {
  const auto t0 = clock_type::now();
  Rng rng(202);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int groups = 1 + trial % 2, C = 4, O = 5;
    const auto x = test::random_planar<double>(C, 16, 16, rng);
    const auto w = test::random_planar<double>(O, C, 9, rng);
    const auto bias = test::random_planar<double>(O, 1, 1, rng);
    const auto got = ops::deform_conv2d(Var<double>::constant(x),
                                        Var<double>::constant(Planar<double>(groups * 18, 16, 16)),
                                        Var<double>::constant(Planar<double>::Constant(groups * 9, 16, 16, 1.0)),
                                        Var<double>::constant(w), Var<double>::constant(bias), groups)
                         .value();
    const auto ref = dense_conv_oracle(x, w, bias);
    const double rel = (got.matrix() - ref.matrix()).cwiseAbs().maxCoeff() /
                       std::max(ref.matrix().cwiseAbs().maxCoeff(), 1e-300);
    worst = std::max(worst, rel);
  }
  const double s = seconds_since(t0);
  report(2, worst <= kDeformRelTol && s < kDeformSeconds,
         "20 inputs 16x16, max relative error " + fmt(worst) + " (tol " + fmt(kDeformRelTol) + "), " +
             fmt(s) + " s");
}

// ------------------------------------------------------------------ 3

std::vector<Planar<double>> random_frames(int n, Rng& rng) {
  std::vector<Planar<double>> out;
  for (int i = 0; i < n; ++i) out.push_back(test::random_planar<double>(3, 8, 8, rng, 0, 1));
  return out;
}

std::vector<FlowField> random_flows(int n, Rng& rng) {
  std::vector<FlowField> out;
  for (int i = 0; i < n; ++i) out.emplace_back(test::random_planar<float>(2, 8, 8, rng, -2.5, 2.5));
  return out;
}

std::vector<Var<double>> constants(const std::vector<Planar<double>>& xs) {
  std::vector<Var<double>> out;
  for (const auto& x : xs) out.push_back(Var<double>::constant(x));
  return out;
}

void loss_oracles() {
  const auto t0 = clock_type::now();
  Rng rng(303);
  double worst_value = 0;
  for (int trial = 0; trial < 10; ++trial) {
    HyperParams hp;
    hp.alpha = 0.05 + 0.1 * trial;
    hp.beta = 0.1 + 0.08 * trial;
    hp.gamma = 0.5 + trial;
    const auto M = random_frames(4, rng), L = random_frames(4, rng), R = random_frames(4, rng);
    const auto IL = random_frames(4, rng), IR = random_frames(4, rng);
    const auto fl = random_flows(3, rng), fr = random_flows(3, rng);
    const auto m = constants(M), l = constants(L), r = constants(R), il = constants(IL),
               ir = constants(IR);
    worst_value = std::max({worst_value,
                            oracle::relative(monocular_loss<double>(m, il, hp).item(),
                                             oracle::monocular(M, IL, hp)),
                            oracle::relative(invertibility_loss<double>(l, r, il, ir, hp).item(),
                                             oracle::invertibility(L, R, IL, IR, hp)),
                            oracle::relative(temporal_loss<double>(m, l, r, fl, fr, hp).item(),
                                             oracle::temporal(M, L, R, fl, fr, hp))});
  }

  HyperParams hp;
  hp.eps_charbonnier = 1e-3;
  const auto il = constants(random_frames(3, rng)), ir = constants(random_frames(3, rng));
  const auto fl = random_flows(2, rng), fr = random_flows(2, rng);
  std::vector<Var<double>> m, l, r;
  for (int t = 0; t < 3; ++t) {
    m.push_back(Var<double>::leaf(test::random_planar<double>(3, 8, 8, rng, 0, 1)));
    l.push_back(Var<double>::leaf(test::random_planar<double>(3, 8, 8, rng, 0, 1)));
    r.push_back(Var<double>::leaf(test::random_planar<double>(3, 8, 8, rng, 0, 1)));
  }
  const std::function<Var<double>()> total = [&] {
    return total_loss<double>(monocular_loss<double>(m, il, hp),
                              invertibility_loss<double>(l, r, il, ir, hp),
                              temporal_loss<double>(m, l, r, fl, fr, hp), hp);
  };
  double worst_grad = 0;
  for (int t = 0; t < 3; ++t)
    for (auto* v : {&m[t], &l[t], &r[t]})
      worst_grad = std::max(worst_grad, test::check_gradient(*v, total).rel_error);
  const double s = seconds_since(t0);
  report(3, worst_value <= kLossRelTol && worst_grad <= kGradRelTol && s < kLossSeconds,
         "oracle relative error " + fmt(worst_value) + " (tol " + fmt(kLossRelTol) +
             "), gradient relative error " + fmt(worst_grad) + " (tol " + fmt(kGradRelTol) + "), " +
             fmt(s) + " s");
}

// ------------------------------------------------------------------ 4

void temporal_metric() {
  const auto t0 = clock_type::now();
  SyntheticScene scene;
  scene.frames = 16;
  const auto clip = make_synthetic_clip(scene);
  bool self_ok = true;
  for (bool left : {true, false}) {
    const auto ref = left ? clip.left_stream().frames : clip.right_stream().frames;
    const auto& flows = left ? *clip.flows_left : *clip.flows_right;
    const auto rep = temporal_deviation(ref, ref, flows);
    self_ok &= rep.geometric_mean == 1.0;
    for (double s : rep.sigma) self_ok &= s == 1.0;
  }
  const auto ref = clip.left_stream().frames;
  auto shuffled = ref;
  Rng rng(404);
  do {
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
  } while (shuffled == ref);
  const double shuf = temporal_deviation(shuffled, ref, *clip.flows_left).geometric_mean;
  const double s = seconds_since(t0);
  report(4, self_ok && shuf > kShuffleFactor && s < kSigmaSeconds,
         std::string("self ") + (self_ok ? "exactly 1" : "not 1") + ", shuffled " + fmt(shuf) +
             " (need > " + fmt(kShuffleFactor) + "), " + fmt(s) + " s");
}

// ------------------------------------------------------------ toy models

struct ToyRun {
  std::unique_ptr<Mono3dModel<float>> model;
  long iterations = 0;
  double seconds = 0;
};

ToyRun train_toy(const StereoClip& clip, TrainMode mode, bool cns, const fs::path& dir) {
  Config c;
  c.hp.N_seq = 4;
  c.hp.B_batch = 1;
  c.hp.crop = 64;
  c.hp.lr_init = 1e-3;
  c.train.mode = mode;
  c.train.cns_enabled = cns;
  c.train.channels = {16, 24, 32};
  c.train.residual_blocks = 1;
  c.train.iterations_per_epoch = 50;
  c.train.max_iterations = kToyIterations;
  c.train.max_epochs = 100000;
  c.train.checkpoint_dir = dir.string();
  c.train.seed = 1;
  const auto t0 = clock_type::now();
  Trainer trainer(c, DatasetIndex::from_clips({clip}));
  trainer.run([&](const EpochRecord& r) {
    std::cerr << "  " << dir.filename().string() << " epoch " << r.epoch << " iter " << r.iteration
              << " loss " << r.loss << "\n";
  });
  ToyRun run;
  run.iterations = trainer.iteration();
  run.seconds = seconds_since(t0);
  run.model = load_model(dir / "last.ckpt");
  return run;
}

double mean_psnr(std::span<const Frame> a, std::span<const Frame> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += psnr(a[i], b[i]);
  return s / double(a.size());
}

std::vector<Frame> right_view(const StereoClip& c) { return c.right_stream().frames; }

// --------------------------------------------------------------- 5 and 6

void toy_overfit(const StereoClip& clip, const ToyRun& video, const ToyRun& image) {
  const auto mono = mononize_clip(*video.model, clip).mono;
  const auto restored = restore_clip(*video.model, mono).stereo;
  const double p_mono = mean_psnr(mono.frames, clip.left_stream().frames);
  const double p_right = mean_psnr(right_view(restored), right_view(clip));
  const double copy = mean_psnr(clip.left_stream().frames, right_view(clip));
  const bool pass = p_mono >= kMonoPsnrMin && p_right >= kRightPsnrMin && p_right > copy &&
                    video.iterations <= kMaxIterations && video.seconds <= kToySeconds;
  report(5, pass,
         "mono " + fmt(p_mono) + " dB (need >= " + fmt(kMonoPsnrMin) + "), right " + fmt(p_right) +
             " dB (need >= " + fmt(kRightPsnrMin) + "), copy baseline " + fmt(copy) + " dB, " +
             std::to_string(video.iterations) + " iterations, " + fmt(video.seconds) + " s");

  auto sigma_right = [&](const Mono3dModel<float>& model) {
    const auto r = restore_clip(model, mononize_clip(model, clip).mono).stereo;
    return temporal_deviation(right_view(r), right_view(clip), *clip.flows_right).geometric_mean;
  };
  const double s_video = sigma_right(*video.model), s_image = sigma_right(*image.model);
  report(6, s_video <= s_image && video.iterations == image.iterations,
         "sigma right: video " + fmt(s_video) + ", image " + fmt(s_image) + ", " +
             std::to_string(image.iterations) + " iterations each");
}

// ------------------------------------------------------------------ 7

void cns_ablation(const StereoClip& clip, const ToyRun& off, const ToyRun& on, const std::string& ffmpeg,
                  const fs::path& work) {
  const auto profile = builtin_profile("h264", ffmpeg);
  auto score = [&](const Mono3dModel<float>& model, const std::string& tag, double& mbps) {
    const auto mono = mononize_clip(model, clip).mono;
    const auto rt = encode_roundtrip(mono, profile, kLowBitrateKbps, work / ("ablation_" + tag));
    mbps = rt.bitrate_mbps;
    const auto restored = restore_clip(model, rt.decoded).stereo;
    double s = 0;
    for (std::size_t t = 0; t < clip.size(); ++t)
      s += ms_ssim(restored.frames[t].right, clip.frames[t].right, kAblationMsSsimScales);
    return s / double(clip.size());
  };
  double mbps_off = 0, mbps_on = 0;
  const double q_off = score(*off.model, "off", mbps_off);
  const double q_on = score(*on.model, "on", mbps_on);
  const bool low = mbps_off <= kLowBitrateMaxMbps && mbps_on <= kLowBitrateMaxMbps;
  report(7, low && q_on >= q_off && off.iterations == on.iterations,
         "h264 " + fmt(kLowBitrateKbps) + " kbps target (measured " + fmt(mbps_off) + " / " +
             fmt(mbps_on) + " Mbps), right MS-SSIM CNS on " + fmt(q_on, 6) + ", off " + fmt(q_off, 6));
}

// ------------------------------------------------------------------ 8

void compatibility(const StereoClip& clip, const Mono3dModel<float>& model, const std::string& ffmpeg,
                   const fs::path& work) {
  const auto mono = mononize_clip(model, clip).mono;
  bool pass = true;
  std::string detail;
  for (const auto& id : builtin_codec_ids()) {
    const auto profile = builtin_profile(id, ffmpeg);
    const auto job = work / ("compat_" + id);
    fs::remove_all(job);
    bool ok = false;
    try {
      encode_roundtrip(mono, profile, kCompatKbps, job);
      // Decode again with nothing but the decoder's defaults.
      const auto plain = job / "plain";
      fs::create_directories(plain);
      const auto r = run_command(shell_quote(ffmpeg) + " -nostdin -loglevel error -i " +
                                 shell_quote((job / ("stream." + profile.container)).string()) + " " +
                                 shell_quote((plain / "%05d.png").string()));
      if (r.exit_code == 0) {
        const auto decoded = read_frame_dir(plain);
        ok = decoded.size() == mono.size() && decoded.height() == mono.height() &&
             decoded.width() == mono.width();
      }
    } catch (const std::exception& e) {
      std::cerr << "  " << id << ": " << e.what() << "\n";
    }
    pass &= ok;
    detail += (detail.empty() ? "" : ", ") + id + (ok ? " ok" : " FAILED");
  }
  report(8, pass, detail + " (" + std::to_string(mono.size()) + " frames " +
                      std::to_string(mono.height()) + "x" + std::to_string(mono.width()) + ")");
}

// ------------------------------------------------------------------ 9

void caps_and_formats(const fs::path& work) {
  const auto t0 = clock_type::now();
  Rng rng(909);
  const Frame a = test::random_u8_frame(180, 184, rng);
  const bool caps = psnr(a, a) == kPsnrCap && ssim(a, a) == 1.0 && ms_ssim(a, a) == 1.0;

  const FlowField flow(test::random_planar<float>(2, 37, 53, rng, -40, 40));
  const auto flo = work / "roundtrip.flo";
  write_flo(flow, flo);
  const bool flo_ok = load_flo(flo) == flow;

  SyntheticScene scene;
  scene.frames = 3;
  scene.height = 36;
  scene.width = 52;
  const auto clip = make_synthetic_clip(scene);
  const auto back = side_by_side_unpack(side_by_side_pack(clip));
  bool sbs_ok = back.size() == clip.size();
  for (std::size_t t = 0; sbs_ok && t < clip.size(); ++t)
    sbs_ok = back.frames[t].left == clip.frames[t].left && back.frames[t].right == clip.frames[t].right;
  const double s = seconds_since(t0);
  report(9, caps && flo_ok && sbs_ok && s < kFormatSeconds,
         std::string("caps ") + (caps ? "ok" : "wrong") + ", .flo " + (flo_ok ? "bit-exact" : "differs") +
             ", side-by-side " + (sbs_ok ? "bit-exact" : "differs") + ", " + fmt(s) + " s");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  fs::path work = fs::temp_directory_path() / "mono3d_acceptance";
  std::vector<int> known;
  app.add_option("work_dir", work, "Checkpoints and codec streams go here");
  app.add_option("--known-failure", known, "Criterion expected to fail; reported but not fatal");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  guarded(1, quantization);
  guarded(2, deformable_reduction);
  guarded(3, loss_oracles);
  guarded(4, temporal_metric);

  const auto clip = make_synthetic_clip(SyntheticScene{});
  ToyRun video, image, cns;
  bool trained = false;
  try {
    video = train_toy(clip, TrainMode::kVideo, false, work / "video");
    image = train_toy(clip, TrainMode::kImage, false, work / "image");
    cns = train_toy(clip, TrainMode::kVideo, true, work / "video_cns");
    trained = true;
  } catch (const std::exception& e) {
    for (int id : {5, 6, 7, 8}) report(id, false, std::string("training failed: ") + e.what());
  }
  const std::string ffmpeg = find_ffmpeg();
  if (trained) {
    guarded(5, [&] { toy_overfit(clip, video, image); });
    if (ffmpeg.empty()) {
      report(7, false, "no ffmpeg found");
      report(8, false, "no ffmpeg found");
    } else {
      guarded(7, [&] { cns_ablation(clip, video, cns, ffmpeg, work); });
      guarded(8, [&] { compatibility(clip, *video.model, ffmpeg, work); });
    }
  }
  guarded(9, [&] { caps_and_formats(work); });

  int unexpected = 0;
  for (int id : failed) {
    const bool is_known = std::find(known.begin(), known.end(), id) != known.end();
    if (!is_known) ++unexpected;
    std::cout << "criterion " << id << " failed" << (is_known ? " (known failure)" : "") << "\n";
  }
  std::cout << (failed.empty() ? "all criteria passed"
                               : std::to_string(failed.size()) + " failed, " +
                                     std::to_string(unexpected) + " unexpected")
            << std::endl;
  return unexpected == 0 ? 0 : 1;
}
