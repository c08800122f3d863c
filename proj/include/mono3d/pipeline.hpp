#pragma once

#include "mono3d/degrade.hpp"
#include "mono3d/losses.hpp"
#include "mono3d/model.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mono3d {

enum class Split { kTrain, kTest };

/// One stereo sequence on disk (`left/`, `right/`, optional `flow_left/`,
/// `flow_right/`) or held in memory.
struct SequenceEntry {
  std::filesystem::path left_dir;
  std::filesystem::path right_dir;
  std::filesystem::path flow_left_dir;   // empty when absent
  std::filesystem::path flow_right_dir;  // empty when absent
  int frame_count = 0;
  std::shared_ptr<const StereoClip> clip;  // set for in-memory sequences

  bool has_flows() const;
};

struct DatasetIndex {
  std::vector<SequenceEntry> sequences;
  Split split = Split::kTrain;

  /// `root/train` or `root/test` when present, otherwise `root` itself.
  /// Sequences are the directories holding a `left/` folder (the root may
  /// be one).
  static DatasetIndex scan(const std::filesystem::path& root, Split split = Split::kTrain);
  static DatasetIndex from_clips(std::vector<StereoClip> clips, Split split = Split::kTrain);

  bool has_flows() const;
  void validate() const;
  /// Loads frames [first, first+count) and the flows between them.
  StereoClip load(std::size_t sequence, int first, int count) const;
};

/// N consecutive stereo frames sharing one crop window.
struct TrainingSequence {
  std::vector<StereoFrame> frames;
  std::vector<FlowField> flows_left;
  std::vector<FlowField> flows_right;
};

using Batch = std::vector<TrainingSequence>;

/// B sequences of `frames_per_sequence` frames, each cropped to `crop`
/// (the whole frame when crop equals its size). Flows are loaded when
/// `with_flows`.
Batch sample_batch(const DatasetIndex& index, int batch_size, int frames_per_sequence, int crop,
                   bool with_flows, Rng& rng);

/// Recurrence follows `model.recurrent()`.
struct ForwardOptions {
  bool temporal = true;
  bool quantize = true;  // off only in tests
  const CnsConfig* cns = nullptr;
  Rng* rng = nullptr;  // needed when cns is enabled
};

struct ForwardResult {
  Losses<float> losses;
  std::vector<Var<float>> mono;        // quantized encoder output
  std::vector<Var<float>> decoder_in;  // after codec-noise simulation
  std::vector<Var<float>> left;
  std::vector<Var<float>> right;
};

/// Encode, quantize, optionally degrade, and decode each frame in order,
/// threading the recurrent pyramids; then evaluates the objective.
ForwardResult forward_train(const TrainingSequence& seq, const Mono3dModel<float>& model,
                            const HyperParams& hp, const ForwardOptions& options);

/// Adam with bias correction over a parameter list.
class Adam {
 public:
  explicit Adam(std::vector<std::pair<std::string, Var<float>>> params, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  void step(double lr);
  long steps() const { return t_; }

  void save_state(Checkpoint& ckpt) const;
  void load_state(const Checkpoint& ckpt);

 private:
  std::vector<std::pair<std::string, Var<float>>> params_;
  std::vector<Planar<float>> m_, v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

/// Divides the learning rate by `factor` once the monitored value has not
/// improved by a relative `threshold` for `patience` consecutive epochs.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor, int patience, double threshold);

  /// Returns true when the learning rate was reduced.
  bool step(double value);
  double lr() const { return lr_; }
  double best() const { return best_; }
  int bad_epochs() const { return bad_epochs_; }

  nlohmann::json state() const;
  void load_state(const nlohmann::json& j);

 private:
  double lr_, factor_;
  int patience_;
  double threshold_;
  double best_;
  int bad_epochs_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  long iteration = 0;
  double lr = 0.0;
  double loss = 0.0;
  double monocular = 0.0;
  double invertibility = 0.0;
  double temporal = 0.0;
  double seconds = 0.0;
};

ArchConfig arch_from_config(const TrainConfig& train);

/// Two-stage training driver. Checkpoints `last.ckpt` after every epoch and
/// `best.ckpt` on improvement, plus `train_log.json`.
class Trainer {
 public:
  explicit Trainer(Config config);
  Trainer(Config config, DatasetIndex index);

  /// Weights only (video stage from an image-stage model).
  void init_from(const std::filesystem::path& checkpoint);
  /// Weights, optimizer, scheduler, counters and RNG state.
  void resume(const std::filesystem::path& checkpoint);

  /// One optimizer step; returns the batch-mean losses.
  EpochRecord step();
  EpochRecord run_epoch();
  /// Runs until the epoch or iteration budget is spent.
  std::vector<EpochRecord> run(const std::function<void(const EpochRecord&)>& on_epoch = {});

  Checkpoint checkpoint() const;
  void save(const std::filesystem::path& path) const;

  Mono3dModel<float>& model() { return model_; }
  const Config& config() const { return config_; }
  double lr() const { return scheduler_.lr(); }
  long iteration() const { return iteration_; }
  int epoch() const { return epoch_; }
  const std::vector<EpochRecord>& history() const { return history_; }
  int iterations_per_epoch() const;
  int epoch_budget() const;

 private:
  void write_log() const;

  Config config_;
  DatasetIndex index_;
  Mono3dModel<float> model_;
  Adam adam_;
  PlateauScheduler scheduler_;
  CnsConfig cns_;
  Rng rng_;
  long iteration_ = 0;
  int epoch_ = 0;
  double best_loss_;
  std::vector<EpochRecord> history_;
};

CnsConfig cns_from_config(const TrainConfig& train);

/// Loads a checkpoint into a fresh model of the recorded architecture.
std::unique_ptr<Mono3dModel<float>> load_model(const std::filesystem::path& checkpoint);

struct MononizeResult {
  VideoClip mono;
  bool padded = false;  // input was edge-padded to a multiple of 4 and cropped back
};

struct RestoreResult {
  StereoClip stereo;
  bool padded = false;
};

/// Stateless across calls; the recurrent state lives only within one clip.
MononizeResult mononize_clip(const Mono3dModel<float>& model, const StereoClip& clip);
/// Input frames off the 8-bit grid are quantized first.
RestoreResult restore_clip(const Mono3dModel<float>& model, const VideoClip& mono);

}  // namespace mono3d
