#include "mono3d/pipeline.hpp"

#include "mono3d/flow_warp.hpp"
#include "mono3d/image_io.hpp"
#include "mono3d/ops.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mono3d {

namespace {

FlowField crop_flow(const FlowField& f, int top, int left, int height, int width) {
  FlowField out(height, width);
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out(c, y, x) = f(c, top + y, left + x);
  return out;
}

std::vector<fs::path> list_flows(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".flo") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

bool is_sequence_dir(const fs::path& dir) {
  return fs::is_directory(dir / "left") && fs::is_directory(dir / "right");
}

SequenceEntry describe_sequence(const fs::path& dir) {
  SequenceEntry e;
  e.left_dir = dir / "left";
  e.right_dir = dir / "right";
  const auto nl = list_frames(e.left_dir).size();
  const auto nr = list_frames(e.right_dir).size();
  if (nl != nr)
    throw std::runtime_error(dir.string() + ": left has " + std::to_string(nl) +
                             " frames, right has " + std::to_string(nr));
  e.frame_count = int(nl);
  if (fs::is_directory(dir / "flow_left") && fs::is_directory(dir / "flow_right")) {
    e.flow_left_dir = dir / "flow_left";
    e.flow_right_dir = dir / "flow_right";
  }
  return e;
}

Var<float> constant(const Frame& f) { return Var<float>::constant(static_cast<const Planar<float>&>(f)); }

Frame to_frame(const Var<float>& v, BitDepth depth = BitDepth::kFloat32) {
  return Frame(v.value(), depth);
}

int round_up4(int v) { return (v + 3) / 4 * 4; }

}  // namespace

bool SequenceEntry::has_flows() const {
  if (clip) return clip->has_flows();
  return !flow_left_dir.empty() && !flow_right_dir.empty();
}

DatasetIndex DatasetIndex::scan(const fs::path& root, Split split) {
  if (!fs::is_directory(root)) throw std::runtime_error("dataset not found: " + root.string());
  fs::path base = root;
  const fs::path sub = root / (split == Split::kTrain ? "train" : "test");
  if (fs::is_directory(sub)) base = sub;
  DatasetIndex index;
  index.split = split;
  if (is_sequence_dir(base)) {
    index.sequences.push_back(describe_sequence(base));
  } else {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(base))
      if (e.is_directory() && is_sequence_dir(e.path())) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) index.sequences.push_back(describe_sequence(d));
  }
  if (index.sequences.empty())
    throw std::runtime_error(base.string() + ": no sequences (expected left/ and right/ folders)");
  index.validate();
  return index;
}

DatasetIndex DatasetIndex::from_clips(std::vector<StereoClip> clips, Split split) {
  DatasetIndex index;
  index.split = split;
  for (auto& c : clips) {
    c.validate();
    SequenceEntry e;
    e.frame_count = int(c.size());
    e.clip = std::make_shared<const StereoClip>(std::move(c));
    index.sequences.push_back(std::move(e));
  }
  index.validate();
  return index;
}

bool DatasetIndex::has_flows() const {
  return std::all_of(sequences.begin(), sequences.end(),
                     [](const SequenceEntry& s) { return s.has_flows(); });
}

void DatasetIndex::validate() const {
  if (sequences.empty()) throw std::invalid_argument("dataset index is empty");
  for (const auto& s : sequences) {
    if (s.frame_count <= 0) throw std::invalid_argument("dataset sequence without frames");
    if (!s.clip && s.has_flows()) {
      const auto nl = list_flows(s.flow_left_dir).size();
      const auto nr = list_flows(s.flow_right_dir).size();
      if (int(nl) != s.frame_count - 1 || int(nr) != s.frame_count - 1)
        throw std::invalid_argument(s.left_dir.parent_path().string() + ": expected " +
                                    std::to_string(s.frame_count - 1) + " flows per view");
    }
  }
}

StereoClip DatasetIndex::load(std::size_t sequence, int first, int count) const {
  const auto& s = sequences.at(sequence);
  if (first < 0 || count < 1 || first + count > s.frame_count)
    throw std::out_of_range("frames [" + std::to_string(first) + ", " +
                            std::to_string(first + count) + ") outside a sequence of " +
                            std::to_string(s.frame_count));
  StereoClip out;
  if (s.clip) {
    out.fps = s.clip->fps;
    out.frames.assign(s.clip->frames.begin() + first, s.clip->frames.begin() + first + count);
    if (s.clip->has_flows()) {
      out.flows_left.emplace(s.clip->flows_left->begin() + first,
                             s.clip->flows_left->begin() + first + count - 1);
      out.flows_right.emplace(s.clip->flows_right->begin() + first,
                              s.clip->flows_right->begin() + first + count - 1);
    }
    return out;
  }
  const auto lp = list_frames(s.left_dir), rp = list_frames(s.right_dir);
  for (int i = first; i < first + count; ++i)
    out.frames.emplace_back(read_png(lp[i]), read_png(rp[i]));
  if (s.has_flows()) {
    const auto fl = list_flows(s.flow_left_dir), fr = list_flows(s.flow_right_dir);
    out.flows_left.emplace();
    out.flows_right.emplace();
    for (int i = first; i < first + count - 1; ++i) {
      out.flows_left->push_back(load_flo(fl[i]));
      out.flows_right->push_back(load_flo(fr[i]));
    }
  }
  return out;
}

Batch sample_batch(const DatasetIndex& index, int batch_size, int frames_per_sequence, int crop,
                   bool with_flows, Rng& rng) {
  if (batch_size < 1 || frames_per_sequence < 1)
    throw std::invalid_argument("sample_batch: batch size and sequence length must be >= 1");
  if (with_flows && !index.has_flows())
    throw std::invalid_argument("sample_batch: dataset has no flows");
  std::uniform_int_distribution<std::size_t> pick(0, index.sequences.size() - 1);
  Batch batch;
  for (int b = 0; b < batch_size; ++b) {
    const std::size_t s = pick(rng);
    const int frames = index.sequences[s].frame_count;
    if (frames < frames_per_sequence)
      throw std::invalid_argument("sample_batch: sequence " + std::to_string(s) + " has " +
                                  std::to_string(frames) + " frames, need " +
                                  std::to_string(frames_per_sequence));
    const int first =
        std::uniform_int_distribution<int>(0, frames - frames_per_sequence)(rng);
    StereoClip clip = index.load(s, first, frames_per_sequence);
    const int h = clip.height(), w = clip.width();
    const int ch = crop > 0 ? crop : h, cw = crop > 0 ? crop : w;
    if (ch > h || cw > w)
      throw std::invalid_argument("sample_batch: crop " + std::to_string(crop) +
                                  " larger than frame " + std::to_string(h) + "x" +
                                  std::to_string(w));
    const int top = std::uniform_int_distribution<int>(0, h - ch)(rng);
    const int left = std::uniform_int_distribution<int>(0, w - cw)(rng);
    TrainingSequence seq;
    for (const auto& f : clip.frames)
      seq.frames.emplace_back(mono3d::crop(f.left, top, left, ch, cw),
                              mono3d::crop(f.right, top, left, ch, cw));
    if (with_flows)
      for (int i = 0; i + 1 < frames_per_sequence; ++i) {
        seq.flows_left.push_back(crop_flow((*clip.flows_left)[i], top, left, ch, cw));
        seq.flows_right.push_back(crop_flow((*clip.flows_right)[i], top, left, ch, cw));
      }
    batch.push_back(std::move(seq));
  }
  return batch;
}

ForwardResult forward_train(const TrainingSequence& seq, const Mono3dModel<float>& model,
                            const HyperParams& hp, const ForwardOptions& options) {
  const std::size_t n = seq.frames.size();
  if (n == 0) throw std::invalid_argument("forward_train: empty sequence");
  std::vector<Var<float>> in_left, in_right;
  for (const auto& f : seq.frames) {
    in_left.push_back(constant(f.left));
    in_right.push_back(constant(f.right));
  }

  ForwardResult r;
  FeaturePyramid<float> previous;
  for (std::size_t t = 0; t < n; ++t) {
    auto step = model.encode(in_left[t], in_right[t], t > 0 ? &previous : nullptr);
    r.mono.push_back(options.quantize ? quantize(step.mono) : step.mono);
    previous = std::move(step.fused);
  }

  r.decoder_in = r.mono;
  if (options.cns && options.cns->enabled) {
    if (!options.rng) throw std::invalid_argument("forward_train: codec-noise simulation needs an rng");
    std::vector<Frame> frames;
    for (const auto& m : r.mono) frames.push_back(to_frame(m));
    const auto noisy = cns_apply(frames, seq.flows_left, *options.cns, *options.rng);
    for (std::size_t t = 0; t < n; ++t)
      r.decoder_in[t] = ops::straight_through(r.mono[t], quantize(noisy.frames[t]));
  }

  FeaturePyramid<float> prev_left, prev_right;
  for (std::size_t t = 0; t < n; ++t) {
    auto step = model.decode(r.decoder_in[t], t > 0 ? &prev_left : nullptr,
                             t > 0 ? &prev_right : nullptr);
    r.left.push_back(step.left);
    r.right.push_back(step.right);
    prev_left = std::move(step.left_pyramid);
    prev_right = std::move(step.right_pyramid);
  }

  auto& L = r.losses;
  L.monocular = monocular_loss<float>(r.mono, in_left, hp);
  L.invertibility = invertibility_loss<float>(r.left, r.right, in_left, in_right, hp);
  std::optional<Var<float>> temporal;
  if (options.temporal && n > 1) {
    L.temporal = temporal_loss<float>(r.mono, r.left, r.right, seq.flows_left, seq.flows_right, hp);
    temporal = L.temporal;
  }
  L.total = total_loss<float>(L.monocular, L.invertibility, temporal, hp);
  return r;
}

Adam::Adam(std::vector<std::pair<std::string, Var<float>>> params, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [n, p] : params_) {
    m_.push_back(Planar<float>::Zero(p.channels(), p.height(), p.width()));
    v_.push_back(Planar<float>::Zero(p.channels(), p.height(), p.width()));
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  const float step = float(lr / c1);
  const float b1 = float(beta1_), b2 = float(beta2_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].second;
    if (!p.has_grad()) continue;
    const auto& g = p.grad().matrix().array();
    auto m = m_[i].matrix().array();
    auto v = v_[i].matrix().array();
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g.square();
    p.mutable_value().matrix().array() -=
        step * m / ((v / float(c2)).sqrt() + float(eps_));
  }
}

void Adam::save_state(Checkpoint& ckpt) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ckpt.tensors.emplace_back("adam.m." + params_[i].first, m_[i]);
    ckpt.tensors.emplace_back("adam.v." + params_[i].first, v_[i]);
  }
  ckpt.meta["adam_steps"] = t_;
}

void Adam::load_state(const Checkpoint& ckpt) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto* m = ckpt.find("adam.m." + params_[i].first);
    const auto* v = ckpt.find("adam.v." + params_[i].first);
    if (!m || !v) throw std::runtime_error("checkpoint lacks optimizer state for " + params_[i].first);
    if (!m->same_shape(m_[i]) || !v->same_shape(v_[i]))
      throw std::runtime_error("optimizer state shape mismatch for " + params_[i].first);
    m_[i] = *m;
    v_[i] = *v;
  }
  t_ = ckpt.meta.at("adam_steps").get<long>();
}

PlateauScheduler::PlateauScheduler(double lr, double factor, int patience, double threshold)
    : lr_(lr),
      factor_(factor),
      patience_(patience),
      threshold_(threshold),
      best_(std::numeric_limits<double>::infinity()) {
  if (!(lr > 0) || !(factor > 1) || patience < 1 || threshold < 0)
    throw std::invalid_argument("PlateauScheduler: invalid settings");
}

bool PlateauScheduler::step(double value) {
  if (value < best_ * (1.0 - threshold_)) {
    best_ = value;
    bad_epochs_ = 0;
    return false;
  }
  if (++bad_epochs_ < patience_) return false;
  lr_ /= factor_;
  bad_epochs_ = 0;
  return true;
}

nlohmann::json PlateauScheduler::state() const {
  return {{"lr", lr_}, {"best", std::isfinite(best_) ? nlohmann::json(best_) : nlohmann::json()},
          {"bad_epochs", bad_epochs_}};
}

void PlateauScheduler::load_state(const nlohmann::json& j) {
  lr_ = j.at("lr").get<double>();
  best_ = j.at("best").is_null() ? std::numeric_limits<double>::infinity()
                                 : j.at("best").get<double>();
  bad_epochs_ = j.at("bad_epochs").get<int>();
}

ArchConfig arch_from_config(const TrainConfig& train) {
  ArchConfig a;
  a.channels = train.channels;
  a.residual_blocks = train.residual_blocks;
  a.validate();
  return a;
}

CnsConfig cns_from_config(const TrainConfig& train) {
  CnsConfig c;
  c.enabled = train.cns_enabled;
  c.quality_min = train.cns_quality_min;
  c.quality_max = train.cns_quality_max;
  c.tau = train.cns_tau;
  c.jitter_max_shift = train.cns_jitter_max_shift;
  c.inter_probability = train.cns_inter_probability;
  return c;
}

namespace {

nlohmann::json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},         {"iteration", r.iteration},
          {"lr", r.lr},               {"loss", r.loss},
          {"monocular", r.monocular}, {"invertibility", r.invertibility},
          {"temporal", r.temporal},   {"seconds", r.seconds}};
}

EpochRecord record_from_json(const nlohmann::json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch");
  r.iteration = j.at("iteration");
  r.lr = j.at("lr");
  r.loss = j.at("loss");
  r.monocular = j.at("monocular");
  r.invertibility = j.at("invertibility");
  r.temporal = j.at("temporal");
  r.seconds = j.at("seconds");
  return r;
}

DatasetIndex index_for(const Config& c) {
  if (c.train.dataset.empty()) throw std::invalid_argument("no dataset configured");
  return DatasetIndex::scan(c.train.dataset, Split::kTrain);
}

}  // namespace

Trainer::Trainer(Config config) : Trainer(config, index_for(config)) {}

Trainer::Trainer(Config config, DatasetIndex index)
    : config_(std::move(config)),
      index_(std::move(index)),
      model_(arch_from_config(config_.train), config_.train.seed),
      adam_(model_.named_parameters()),
      scheduler_(config_.hp.lr_init, config_.hp.plateau_factor, config_.train.plateau_patience,
                 config_.train.plateau_threshold),
      cns_(cns_from_config(config_.train)),
      rng_(config_.train.seed ^ 0x9e3779b97f4a7c15ULL),
      best_loss_(std::numeric_limits<double>::infinity()) {
  config_.hp.validate();
  config_.train.validate();
  index_.validate();
  const bool video = config_.train.mode == TrainMode::kVideo;
  if ((video || cns_.enabled) && !index_.has_flows())
    throw std::invalid_argument(video ? "video mode requires flows for every sequence"
                                      : "codec-noise simulation requires flows");
  model_.set_recurrent(video);
}

int Trainer::iterations_per_epoch() const {
  if (config_.train.iterations_per_epoch > 0) return config_.train.iterations_per_epoch;
  const int b = config_.hp.B_batch;
  return std::max<int>(1, (int(index_.sequences.size()) + b - 1) / b);
}

int Trainer::epoch_budget() const {
  if (config_.train.max_epochs > 0) return config_.train.max_epochs;
  return config_.train.mode == TrainMode::kVideo ? config_.hp.epochs_video
                                                 : config_.hp.epochs_image;
}

void Trainer::init_from(const fs::path& checkpoint) {
  model_.load(load_checkpoint(checkpoint));
  model_.set_recurrent(config_.train.mode == TrainMode::kVideo);
}

void Trainer::resume(const fs::path& checkpoint) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  model_.load(ckpt);
  adam_.load_state(ckpt);
  const auto& t = ckpt.meta.at("training");
  scheduler_.load_state(t.at("scheduler"));
  iteration_ = t.at("iteration").get<long>();
  epoch_ = t.at("epoch").get<int>();
  best_loss_ = t.at("best_loss").is_null() ? std::numeric_limits<double>::infinity()
                                           : t.at("best_loss").get<double>();
  std::istringstream rs(t.at("rng").get<std::string>());
  rs >> rng_;
  history_.clear();
  for (const auto& r : t.at("history")) history_.push_back(record_from_json(r));
  model_.set_recurrent(config_.train.mode == TrainMode::kVideo);
}

EpochRecord Trainer::step() {
  const auto start = std::chrono::steady_clock::now();
  const bool video = config_.train.mode == TrainMode::kVideo;
  const auto& hp = config_.hp;
  const Batch batch = sample_batch(index_, hp.B_batch, video ? hp.N_seq : 1, hp.crop,
                                   video || cns_.enabled, rng_);
  ForwardOptions opt;
  opt.temporal = video;
  opt.cns = &cns_;
  opt.rng = &rng_;
  model_.zero_grad();
  EpochRecord rec;
  const float inv_b = 1.0f / float(batch.size());
  for (const auto& seq : batch) {
    ForwardResult fr;
    try {
      fr = forward_train(seq, model_, hp, opt);
    } catch (const std::domain_error& e) {
      throw std::runtime_error("iteration " + std::to_string(iteration_ + 1) + ": " + e.what() +
                               " (lr " + std::to_string(lr()) + ")");
    }
    backward(ops::scale(fr.losses.total, inv_b));
    rec.loss += fr.losses.total.item() * inv_b;
    rec.monocular += fr.losses.monocular.item() * inv_b;
    rec.invertibility += fr.losses.invertibility.item() * inv_b;
    if (fr.losses.temporal.defined()) rec.temporal += fr.losses.temporal.item() * inv_b;
  }
  adam_.step(scheduler_.lr());
  ++iteration_;
  rec.epoch = epoch_;
  rec.iteration = iteration_;
  rec.lr = scheduler_.lr();
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

EpochRecord Trainer::run_epoch() {
  EpochRecord sum;
  int steps = 0;
  const int per_epoch = iterations_per_epoch();
  const long budget = config_.train.max_iterations;
  for (int i = 0; i < per_epoch && (budget == 0 || iteration_ < budget); ++i) {
    const auto r = step();
    sum.loss += r.loss;
    sum.monocular += r.monocular;
    sum.invertibility += r.invertibility;
    sum.temporal += r.temporal;
    sum.seconds += r.seconds;
    ++steps;
  }
  if (steps == 0) throw std::logic_error("run_epoch: iteration budget already spent");
  sum.loss /= steps;
  sum.monocular /= steps;
  sum.invertibility /= steps;
  sum.temporal /= steps;
  sum.lr = scheduler_.lr();
  sum.epoch = ++epoch_;
  sum.iteration = iteration_;
  scheduler_.step(sum.loss);
  history_.push_back(sum);

  const fs::path dir = config_.train.checkpoint_dir;
  if (!dir.empty()) {
    const bool improved = sum.loss < best_loss_;
    if (improved) best_loss_ = sum.loss;
    save(dir / "last.ckpt");
    if (improved) save(dir / "best.ckpt");
    write_log();
  } else if (sum.loss < best_loss_) {
    best_loss_ = sum.loss;
  }
  return sum;
}

std::vector<EpochRecord> Trainer::run(const std::function<void(const EpochRecord&)>& on_epoch) {
  std::vector<EpochRecord> out;
  const long budget = config_.train.max_iterations;
  while (epoch_ < epoch_budget() && (budget == 0 || iteration_ < budget)) {
    out.push_back(run_epoch());
    if (on_epoch) on_epoch(out.back());
  }
  return out;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ckpt = model_.to_checkpoint();
  adam_.save_state(ckpt);
  std::ostringstream rs;
  rs << rng_;
  nlohmann::json history = nlohmann::json::array();
  for (const auto& r : history_) history.push_back(to_json(r));
  ckpt.meta["mode"] = config_.train.mode == TrainMode::kVideo ? "video" : "image";
  ckpt.meta["training"] = {
      {"iteration", iteration_},
      {"epoch", epoch_},
      {"best_loss", std::isfinite(best_loss_) ? nlohmann::json(best_loss_) : nlohmann::json()},
      {"scheduler", scheduler_.state()},
      {"rng", rs.str()},
      {"history", history},
      {"config", format_config(config_)}};
  return ckpt;
}

void Trainer::save(const fs::path& path) const { save_checkpoint(checkpoint(), path); }

void Trainer::write_log() const {
  nlohmann::json log;
  log["mode"] = config_.train.mode == TrainMode::kVideo ? "video" : "image";
  log["seed"] = config_.train.seed;
  log["parameters"] = model_.parameter_count();
  log["epochs"] = nlohmann::json::array();
  for (const auto& r : history_) log["epochs"].push_back(to_json(r));
  const fs::path dir = config_.train.checkpoint_dir;
  fs::create_directories(dir);
  std::ofstream out(dir / "train_log.json");
  out << log.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write " + (dir / "train_log.json").string());
}

std::unique_ptr<Mono3dModel<float>> load_model(const fs::path& checkpoint) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  auto model = std::make_unique<Mono3dModel<float>>(ckpt.arch, 0);
  model->load(ckpt);
  return model;
}

MononizeResult mononize_clip(const Mono3dModel<float>& model, const StereoClip& clip) {
  clip.validate();
  NoGradGuard no_grad;
  const int h = clip.height(), w = clip.width();
  const int ph = round_up4(h), pw = round_up4(w);
  MononizeResult r;
  r.padded = ph != h || pw != w;
  r.mono.fps = clip.fps;
  FeaturePyramid<float> previous;
  for (std::size_t t = 0; t < clip.size(); ++t) {
    const auto& f = clip.frames[t];
    auto step = model.encode(constant(r.padded ? pad_edge(f.left, ph, pw) : f.left),
                             constant(r.padded ? pad_edge(f.right, ph, pw) : f.right),
                             t > 0 ? &previous : nullptr);
    Frame mono = quantize(to_frame(step.mono));
    if (r.padded) mono = crop(mono, 0, 0, h, w);
    mono.set_depth(BitDepth::kU8);
    r.mono.frames.push_back(std::move(mono));
    previous = std::move(step.fused);
  }
  return r;
}

RestoreResult restore_clip(const Mono3dModel<float>& model, const VideoClip& mono) {
  mono.validate();
  NoGradGuard no_grad;
  const int h = mono.height(), w = mono.width();
  const int ph = round_up4(h), pw = round_up4(w);
  RestoreResult r;
  r.padded = ph != h || pw != w;
  r.stereo.fps = mono.fps;
  FeaturePyramid<float> prev_left, prev_right;
  for (std::size_t t = 0; t < mono.size(); ++t) {
    Frame in = quantize(mono.frames[t]);
    if (r.padded) in = pad_edge(in, ph, pw);
    auto step = model.decode(constant(in), t > 0 ? &prev_left : nullptr,
                             t > 0 ? &prev_right : nullptr);
    Frame left = quantize(to_frame(step.left)), right = quantize(to_frame(step.right));
    if (r.padded) {
      left = crop(left, 0, 0, h, w);
      right = crop(right, 0, 0, h, w);
    }
    left.set_depth(BitDepth::kU8);
    right.set_depth(BitDepth::kU8);
    r.stereo.frames.emplace_back(std::move(left), std::move(right));
    prev_left = std::move(step.left_pyramid);
    prev_right = std::move(step.right_pyramid);
  }
  return r;
}

}  // namespace mono3d
