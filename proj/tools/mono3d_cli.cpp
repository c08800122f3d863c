// mono3d: train, mononize, restore, evaluate and benchmark from the shell.
// Exit status: 0 success, 2 usage error, 1 runtime failure.

#include "mono3d/codec_harness.hpp"
#include "mono3d/flow_warp.hpp"
#include "mono3d/image_io.hpp"
#include "mono3d/metrics.hpp"
#include "mono3d/pipeline.hpp"
#include "mono3d/process.hpp"
#include "mono3d/synthetic.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

using namespace mono3d;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing ") + what);
  if (!fs::exists(path)) throw UsageError(std::string(what) + " not found: " + path);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

bool is_y4m(const fs::path& p) { return p.extension() == ".y4m"; }

void write_video(const VideoClip& clip, const fs::path& out) {
  if (is_y4m(out)) {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_y4m(clip, out);
  } else {
    write_frame_dir(clip, out);
  }
}

std::pair<int, int> parse_resolution(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw UsageError("resolution must look like HxW: " + s);
  try {
    return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw UsageError("resolution must look like HxW: " + s);
  }
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config, mode, init_checkpoint, resume, out, dataset;
  std::int64_t seed = -1;
  int max_iterations = -1;
};

int cmd_train(const TrainArgs& a) {
  Config cfg;
  if (!a.config.empty()) {
    require_file(a.config, "config file");
    try {
      cfg = load_config(a.config);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (!a.mode.empty()) cfg.train.mode = a.mode == "video" ? TrainMode::kVideo : TrainMode::kImage;
  if (!a.dataset.empty()) cfg.train.dataset = a.dataset;
  if (!a.init_checkpoint.empty()) cfg.train.init_checkpoint = a.init_checkpoint;
  if (!a.out.empty()) cfg.train.checkpoint_dir = a.out;
  if (a.seed >= 0) cfg.train.seed = std::uint64_t(a.seed);
  if (a.max_iterations >= 0) cfg.train.max_iterations = a.max_iterations;
  if (cfg.train.dataset.empty()) throw UsageError("no dataset given (--dataset or config 'dataset')");
  if (!fs::is_directory(cfg.train.dataset))
    throw UsageError("dataset not found: " + cfg.train.dataset);
  if (!cfg.train.init_checkpoint.empty()) require_file(cfg.train.init_checkpoint, "init checkpoint");
  if (!a.resume.empty()) require_file(a.resume, "resume checkpoint");
  try {
    cfg.hp.validate();
    cfg.train.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  Trainer trainer(cfg);
  if (!a.resume.empty())
    trainer.resume(a.resume);
  else if (!cfg.train.init_checkpoint.empty())
    trainer.init_from(cfg.train.init_checkpoint);
  std::cerr << "training " << (cfg.train.mode == TrainMode::kVideo ? "video" : "image")
            << " model, " << trainer.model().parameter_count() << " parameters, "
            << trainer.iterations_per_epoch() << " iterations/epoch\n";
  trainer.run([](const EpochRecord& r) {
    std::cerr << "epoch " << r.epoch << " iter " << r.iteration << " loss " << r.loss
              << " (M " << r.monocular << ", I " << r.invertibility << ", T " << r.temporal
              << ") lr " << r.lr << "\n";
  });
  return 0;
}

// ------------------------------------------------------- mononize/restore

int cmd_mononize(const std::string& model_path, const std::string& in, const std::string& out) {
  require_file(model_path, "model file");
  require_file(in, "input");
  const auto model = load_model(model_path);
  const auto result = mononize_clip(*model, read_stereo_dir(in));
  if (result.padded)
    std::cerr << "note: frame size is not a multiple of 4; padded for the network and cropped back\n";
  write_video(result.mono, out);
  return 0;
}

int cmd_restore(const std::string& model_path, const std::string& in, const std::string& out) {
  require_file(model_path, "model file");
  require_file(in, "input");
  const auto model = load_model(model_path);
  const auto result = restore_clip(*model, read_video(in));
  if (result.padded)
    std::cerr << "note: frame size is not a multiple of 4; padded for the network and cropped back\n";
  write_stereo_dir(result.stereo, out);
  return 0;
}

// ------------------------------------------------------------- evaluate

struct EvalArgs {
  std::string model, dataset, metrics = "psnr,ssim", out_csv, out_json, split = "test";
  int msssim_scales = kMsSsimScales;
};

int cmd_evaluate(const EvalArgs& a) {
  require_file(a.model, "model file");
  if (a.dataset.empty() || !fs::is_directory(a.dataset))
    throw UsageError("dataset not found: " + a.dataset);
  EvaluationRequest req;
  req.psnr = req.ssim = false;
  req.msssim_scales = a.msssim_scales;
  for (const auto& m : split_list(a.metrics)) {
    if (m == "psnr") req.psnr = true;
    else if (m == "ssim") req.ssim = true;
    else if (m == "msssim") req.msssim = true;
    else if (m == "temporal") req.temporal = true;
    else throw UsageError("unknown metric '" + m + "' (psnr, ssim, msssim, temporal)");
  }
  const auto model = load_model(a.model);
  const auto index = DatasetIndex::scan(a.dataset, a.split == "train" ? Split::kTrain : Split::kTest);
  std::vector<ClipEvaluation> rows;
  for (std::size_t s = 0; s < index.sequences.size(); ++s) {
    const auto& seq = index.sequences[s];
    if (req.temporal && !seq.has_flows())
      throw std::runtime_error("temporal metric needs flows: missing " +
                               (seq.left_dir.parent_path() / "flow_left").string() + " or " +
                               (seq.left_dir.parent_path() / "flow_right").string());
    const StereoClip clip = index.load(s, 0, seq.frame_count);
    const auto mono = mononize_clip(*model, clip).mono;
    const auto restored = restore_clip(*model, mono).stereo;
    rows.push_back(evaluate_clip(seq.left_dir.parent_path().filename().string(), clip, mono,
                                 restored, req));
  }
  const auto total = aggregate(rows);
  const std::string csv = evaluation_csv(rows, &total);
  if (a.out_csv.empty())
    std::cout << csv;
  else
    write_text(a.out_csv, csv);
  if (!a.out_json.empty()) write_text(a.out_json, evaluation_json(rows, &total) + "\n");
  return 0;
}

// ------------------------------------------------------------- rd-sweep

struct RdArgs {
  std::string model, dataset, codecs, bitrates, out_csv, ffmpeg, split = "test", work_dir;
  int msssim_scales = kMsSsimScales;
  bool no_side_by_side = false;
};

int cmd_rd_sweep(const RdArgs& a) {
  require_file(a.model, "model file");
  if (a.dataset.empty() || !fs::is_directory(a.dataset))
    throw UsageError("dataset not found: " + a.dataset);
  const auto codec_ids = split_list(a.codecs);
  if (codec_ids.empty()) throw UsageError("empty codec list");
  std::vector<double> bitrates;
  for (const auto& b : split_list(a.bitrates)) {
    try {
      bitrates.push_back(std::stod(b));
    } catch (const std::exception&) {
      throw UsageError("bad bitrate '" + b + "'");
    }
    if (!(bitrates.back() > 0)) throw UsageError("bitrates must be positive");
  }
  if (bitrates.empty()) throw UsageError("empty bitrate list");
  const std::string ffmpeg = a.ffmpeg.empty() ? find_ffmpeg() : a.ffmpeg;
  if (ffmpeg.empty()) throw std::runtime_error("ffmpeg not found (set MONO3D_FFMPEG or --ffmpeg)");
  std::vector<CodecProfile> profiles;
  for (const auto& id : codec_ids) {
    try {
      profiles.push_back(builtin_profile(id, ffmpeg));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  const auto model = load_model(a.model);
  const auto index = DatasetIndex::scan(a.dataset, a.split == "train" ? Split::kTrain : Split::kTest);
  std::vector<StereoClip> clips;
  for (std::size_t s = 0; s < index.sequences.size(); ++s)
    clips.push_back(index.load(s, 0, index.sequences[s].frame_count));
  RdOptions opt;
  opt.msssim_scales = a.msssim_scales;
  opt.side_by_side = !a.no_side_by_side;
  opt.work_dir = a.work_dir;
  const auto points = rd_sweep(*model, clips, profiles, bitrates, opt);
  const std::string csv = rd_csv(points);
  if (a.out_csv.empty())
    std::cout << csv;
  else
    write_text(a.out_csv, csv);
  return 0;
}

// --------------------------------------------------------------- timing

struct TimingArgs {
  std::string model, resolutions = "480x720,720x1280,1080x1920";
  int runs = 50, warmup = 3;
  std::vector<int> channels;
  int residual_blocks = 3;
};

int cmd_timing(const TimingArgs& a) {
  if (a.runs < 1) throw UsageError("--runs must be >= 1");
  std::unique_ptr<Mono3dModel<float>> model;
  if (!a.model.empty()) {
    require_file(a.model, "model file");
    model = load_model(a.model);
  } else {
    ArchConfig arch;
    if (!a.channels.empty()) {
      if (a.channels.size() != 3) throw UsageError("--channels takes three widths");
      arch.channels = {a.channels[0], a.channels[1], a.channels[2]};
    }
    arch.residual_blocks = a.residual_blocks;
    try {
      arch.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    model = std::make_unique<Mono3dModel<float>>(arch, 0);
  }
  std::vector<std::pair<int, int>> res;
  for (const auto& r : split_list(a.resolutions)) res.push_back(parse_resolution(r));
  if (res.empty()) throw UsageError("no resolutions");
  std::cout << "height,width,runs,encode_ms,decode_ms\n";
  for (const auto& row : timing_bench(*model, res, a.runs, a.warmup))
    std::cout << row.height << ',' << row.width << ',' << row.runs << ',' << row.encode_ms << ','
              << row.decode_ms << '\n';
  return 0;
}

// ---------------------------------------------------------------- misc

int cmd_estimate_flows(const std::string& in, const std::string& command, const std::string& cache) {
  if (command.empty()) throw UsageError("missing --command");
  if (!fs::is_directory(in)) throw UsageError("frame directory not found: " + in);
  try {
    require_placeholders(command, {"prev", "next", "out"});
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto flows = estimate_flows(list_frames(in), FlowEstimator{command},
                                    cache.empty() ? fs::path(in) / "flow" : fs::path(cache));
  std::cerr << flows.size() << " flow fields\n";
  return 0;
}

int cmd_diff_map(const std::string& a, const std::string& b, const std::string& out, double scale) {
  require_file(a, "first image");
  require_file(b, "second image");
  const auto d = diff_map(read_png(a), read_png(b), scale);
  if (!out.empty()) write_png(d.image, out);
  std::cout << "mad," << d.mad << '\n';
  return 0;
}

int cmd_synth(const std::string& out, int frames, int size, std::uint64_t seed) {
  if (frames < 1 || size < 16) throw UsageError("need >= 1 frame and size >= 16");
  SyntheticScene scene;
  scene.frames = frames;
  scene.height = scene.width = size;
  scene.seed = seed;
  write_stereo_dir(make_synthetic_clip(scene), out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stereo video to mononized video and back"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model (image stage, then video stage)");
  t->add_option("--config", train.config, "key = value configuration file");
  t->add_option("--mode", train.mode, "image or video")->check(CLI::IsMember({"image", "video"}));
  t->add_option("--dataset", train.dataset, "Dataset root (overrides the config)");
  t->add_option("--init-checkpoint", train.init_checkpoint, "Initial weights (video stage)");
  t->add_option("--resume", train.resume, "Continue a run from its checkpoint");
  t->add_option("--seed", train.seed, "Random seed");
  t->add_option("--max-iterations", train.max_iterations, "Iteration budget");
  t->add_option("--out", train.out, "Checkpoint directory");

  std::string model, in, out;
  auto* m = app.add_subcommand("mononize", "Stereo clip (left/, right/) to mononized frames");
  m->add_option("--model", model)->required();
  m->add_option("--in", in, "Stereo directory")->required();
  m->add_option("--out", out, "Frame directory or .y4m")->required();

  auto* r = app.add_subcommand("restore", "Mononized frames to a stereo clip");
  r->add_option("--model", model)->required();
  r->add_option("--in", in, "Frame directory or .y4m")->required();
  r->add_option("--out", out, "Output directory (left/, right/)")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("evaluate", "Quality and temporal coherence over a dataset");
  e->add_option("--model", ev.model)->required();
  e->add_option("--dataset", ev.dataset)->required();
  e->add_option("--metrics", ev.metrics, "psnr,ssim,msssim,temporal");
  e->add_option("--split", ev.split)->check(CLI::IsMember({"train", "test"}));
  e->add_option("--msssim-scales", ev.msssim_scales)->check(CLI::Range(1, 5));
  e->add_option("--out-csv", ev.out_csv);
  e->add_option("--out-json", ev.out_json);

  RdArgs rd;
  auto* s = app.add_subcommand("rd-sweep", "Rate-distortion sweep through external codecs");
  s->add_option("--model", rd.model)->required();
  s->add_option("--dataset", rd.dataset)->required();
  s->add_option("--codecs", rd.codecs, "h264,h265,vp9,av1,lossless")->required();
  s->add_option("--bitrates", rd.bitrates, "Target kbps list")->required();
  s->add_option("--out-csv", rd.out_csv);
  s->add_option("--ffmpeg", rd.ffmpeg);
  s->add_option("--split", rd.split)->check(CLI::IsMember({"train", "test"}));
  s->add_option("--msssim-scales", rd.msssim_scales)->check(CLI::Range(1, 5));
  s->add_option("--work-dir", rd.work_dir, "Keep intermediate streams here");
  s->add_flag("--no-side-by-side", rd.no_side_by_side);

  TimingArgs tm;
  auto* ti = app.add_subcommand("timing", "Per-frame encode/decode time");
  ti->add_option("--model", tm.model, "Checkpoint (default: untrained model)");
  ti->add_option("--resolutions", tm.resolutions, "HxW list");
  ti->add_option("--runs", tm.runs);
  ti->add_option("--warmup", tm.warmup);
  ti->add_option("--channels", tm.channels, "Widths of an untrained model")->expected(3);
  ti->add_option("--residual-blocks", tm.residual_blocks);

  std::string command, cache;
  auto* fl = app.add_subcommand("estimate-flows", "Run an external flow estimator over a frame directory");
  fl->add_option("--in", in)->required();
  fl->add_option("--command", command, "Template with {prev} {next} {out}")->required();
  fl->add_option("--cache", cache);

  std::string a_img, b_img;
  double scale = 100.0;
  auto* dm = app.add_subcommand("diff-map", "Amplified difference image and mean absolute difference");
  dm->add_option("a", a_img)->required();
  dm->add_option("b", b_img)->required();
  dm->add_option("--out", out);
  dm->add_option("--scale", scale);

  int frames = 8, size = 128;
  std::uint64_t seed = 1;
  auto* sy = app.add_subcommand("synth", "Write a procedural stereo clip with exact flows");
  sy->add_option("--out", out)->required();
  sy->add_option("--frames", frames);
  sy->add_option("--size", size);
  sy->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*t) return cmd_train(train);
    if (*m) return cmd_mononize(model, in, out);
    if (*r) return cmd_restore(model, in, out);
    if (*e) return cmd_evaluate(ev);
    if (*s) return cmd_rd_sweep(rd);
    if (*ti) return cmd_timing(tm);
    if (*fl) return cmd_estimate_flows(in, command, cache);
    if (*dm) return cmd_diff_map(a_img, b_img, out, scale);
    if (*sy) return cmd_synth(out, frames, size, seed);
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 2;
}
