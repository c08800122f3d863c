#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mono3d/image_io.hpp"
#include "mono3d/pipeline.hpp"
#include "mono3d/synthetic.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mono3d;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("mono3d_test_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

StereoClip toy_clip(int frames = 6, int size = 16, std::uint64_t seed = 1) {
  SyntheticScene s;
  s.frames = frames;
  s.height = size;
  s.width = size;
  s.objects = 1;
  s.seed = seed;
  return make_synthetic_clip(s);
}

Config toy_config(TrainMode mode) {
  Config c;
  c.hp.N_seq = 3;
  c.hp.B_batch = 2;
  c.hp.crop = 8;
  c.hp.lr_init = 1e-3;
  c.train.mode = mode;
  c.train.channels = {4, 6, 8};
  c.train.residual_blocks = 1;
  c.train.iterations_per_epoch = 3;
  c.train.checkpoint_dir = "";
  c.train.seed = 17;
  return c;
}

TrainingSequence whole_sequence(const StereoClip& clip, int n) {
  TrainingSequence seq;
  for (int t = 0; t < n; ++t) seq.frames.push_back(clip.frames[t]);
  for (int t = 0; t + 1 < n; ++t) {
    seq.flows_left.push_back((*clip.flows_left)[t]);
    seq.flows_right.push_back((*clip.flows_right)[t]);
  }
  return seq;
}

Planar<double> as_double(const Var<float>& v) { return v.value().cast<double>(); }

double eval_loss(const TrainingSequence& seq, const Mono3dModel<float>& model, const HyperParams& hp,
                 bool temporal) {
  NoGradGuard guard;
  ForwardOptions opt;
  opt.temporal = temporal;
  return forward_train(seq, model, hp, opt).losses.total.item();
}

ArchConfig toy_arch() {
  ArchConfig a;
  a.channels = {4, 6, 8};
  a.residual_blocks = 1;
  return a;
}

}  // namespace

TEST_CASE("dataset scanning and loading from disk") {
  const auto root = scratch("dataset");
  write_stereo_dir(toy_clip(5, 16, 1), root / "train" / "a");
  write_stereo_dir(toy_clip(4, 16, 2), root / "train" / "b");
  write_stereo_dir(toy_clip(3, 16, 3), root / "test" / "c");
  const auto train = DatasetIndex::scan(root, Split::kTrain);
  REQUIRE(train.sequences.size() == 2);
  CHECK(train.has_flows());
  CHECK(train.sequences[0].frame_count == 5);
  const auto test_split = DatasetIndex::scan(root, Split::kTest);
  CHECK(test_split.sequences.size() == 1);

  const auto part = train.load(0, 1, 3);
  CHECK(part.size() == 3);
  CHECK(part.flows_left->size() == 2);
  CHECK(part.frames[0].left == toy_clip(5, 16, 1).frames[1].left);
  CHECK_THROWS(train.load(1, 2, 3));

  // A single sequence directory is itself a dataset.
  CHECK(DatasetIndex::scan(root / "train" / "a").sequences.size() == 1);
  CHECK_THROWS(DatasetIndex::scan(root / "missing"));
  fs::create_directories(root / "empty");
  CHECK_THROWS(DatasetIndex::scan(root / "empty"));
}

TEST_CASE("batch sampling") {
  const auto index = DatasetIndex::from_clips({toy_clip(6, 16, 1), toy_clip(6, 16, 2)});
  Rng r1(5), r2(5);
  const auto a = sample_batch(index, 16, 4, 8, true, r1);
  const auto b = sample_batch(index, 16, 4, 8, true, r2);
  REQUIRE(a.size() == 16);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].frames.size() == 4);
    CHECK(a[i].flows_left.size() == 3);
    CHECK(a[i].frames[0].left.height() == 8);
    CHECK(a[i].frames[3].right == b[i].frames[3].right);
    CHECK(a[i].flows_right[1] == b[i].flows_right[1]);
  }

  // Crop equal to the frame size is the whole frame.
  const auto one = DatasetIndex::from_clips({toy_clip(4, 16, 3)});
  Rng r3(6);
  const auto full = sample_batch(one, 1, 4, 16, false, r3);
  CHECK(full[0].frames[2].left == toy_clip(4, 16, 3).frames[2].left);
  CHECK(full[0].flows_left.empty());

  Rng r4(7);
  CHECK_THROWS(sample_batch(one, 1, 5, 8, false, r4));
  CHECK_THROWS(sample_batch(one, 1, 2, 32, false, r4));
  StereoClip bare = toy_clip(4, 16, 4);
  bare.flows_left.reset();
  bare.flows_right.reset();
  CHECK_THROWS(sample_batch(DatasetIndex::from_clips({bare}), 1, 2, 8, true, r4));
}

TEST_CASE("forward pass: shapes, quantized mono and decoder input") {
  const auto clip = toy_clip(4);
  const auto seq = whole_sequence(clip, 4);
  Mono3dModel<float> model(toy_arch(), 3);
  HyperParams hp;
  const auto r = forward_train(seq, model, hp, ForwardOptions{});
  REQUIRE(r.mono.size() == 4);
  REQUIRE(r.left.size() == 4);
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK(r.decoder_in[t].value() == r.mono[t].value());
    CHECK(Frame(r.mono[t].value()).on_u8_grid());
    CHECK(r.right[t].value().shape_string() == "3x16x16");
  }
  CHECK(r.losses.temporal.defined());

  ForwardOptions image;
  image.temporal = false;
  const auto ri = forward_train(seq, model, hp, image);
  CHECK_FALSE(ri.losses.temporal.defined());
  CHECK(ri.losses.total.item() ==
        doctest::Approx(ri.losses.monocular.item() + hp.lambda1 * ri.losses.invertibility.item()));
}

TEST_CASE("forward pass total loss matches the straight-line objective") {
  const auto clip = toy_clip(4);
  const auto seq = whole_sequence(clip, 4);
  Mono3dModel<float> model(toy_arch(), 4);
  HyperParams hp;
  ForwardOptions opt;
  opt.quantize = false;
  const auto r = forward_train(seq, model, hp, opt);
  std::vector<Planar<double>> M, L, R, IL, IR;
  for (std::size_t t = 0; t < 4; ++t) {
    M.push_back(as_double(r.mono[t]));
    L.push_back(as_double(r.left[t]));
    R.push_back(as_double(r.right[t]));
    IL.push_back(seq.frames[t].left.cast<double>());
    IR.push_back(seq.frames[t].right.cast<double>());
  }
  const double expected = oracle::monocular(M, IL, hp) +
                          hp.lambda1 * oracle::invertibility(L, R, IL, IR, hp) +
                          hp.lambda2 * oracle::temporal(M, L, R, seq.flows_left, seq.flows_right, hp);
  CHECK(oracle::relative(r.losses.total.item(), expected) < 1e-6);
}

TEST_CASE("recurrence makes outputs depend on frame order") {
  const auto clip = toy_clip(4);
  Mono3dModel<float> model(toy_arch(), 5);
  HyperParams hp;
  TrainingSequence fwd, rev;
  for (int t = 0; t < 4; ++t) {
    fwd.frames.push_back(clip.frames[t]);
    rev.frames.push_back(clip.frames[3 - t]);
  }
  ForwardOptions opt;
  opt.temporal = false;
  const auto a = forward_train(fwd, model, hp, opt);
  const auto b = forward_train(rev, model, hp, opt);
  // Frame 3 of the forward pass and frame 0 of the reversed pass see the
  // same input but different history.
  CHECK_FALSE(a.right[3].value() == b.right[0].value());
  model.set_recurrent(false);
  const auto c = forward_train(fwd, model, hp, opt);
  const auto d = forward_train(rev, model, hp, opt);
  CHECK(c.right[3].value() == d.right[0].value());
}

TEST_CASE("codec-noise simulation feeds the decoder a degraded 8-bit stream") {
  const auto clip = toy_clip(4);
  const auto seq = whole_sequence(clip, 4);
  Mono3dModel<float> model(toy_arch(), 6);
  HyperParams hp;
  CnsConfig cns;
  cns.quality_min = cns.quality_max = 10;
  Rng rng(1);
  ForwardOptions opt;
  opt.cns = &cns;
  opt.rng = &rng;
  const auto r = forward_train(seq, model, hp, opt);
  CHECK_FALSE(r.decoder_in[0].value() == r.mono[0].value());
  for (const auto& d : r.decoder_in) CHECK(Frame(d.value()).on_u8_grid());
  opt.rng = nullptr;
  CHECK_THROWS(forward_train(seq, model, hp, opt));
}

TEST_CASE("adam and the plateau schedule") {
  auto p = Var<float>::leaf(Planar<float>::Constant(1, 1, 1, 1.0f));
  Adam adam({{"p", p}});
  backward(ops::mse(p, Var<float>::constant(Planar<float>(1, 1, 1))));
  adam.step(0.1);
  // First bias-corrected Adam step moves by lr * sign(g).
  CHECK(p.value()(0, 0, 0) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(adam.steps() == 1);

  PlateauScheduler s(1e-4, 3.33, 10, 1e-4);
  CHECK_FALSE(s.step(1.0));
  for (int i = 0; i < 9; ++i) CHECK_FALSE(s.step(1.0));
  CHECK(s.lr() == 1e-4);
  CHECK(s.step(1.0));
  CHECK(s.lr() == doctest::Approx(3.003e-5).epsilon(1e-3));
  CHECK(s.bad_epochs() == 0);
  CHECK_FALSE(s.step(0.5));
  CHECK(s.best() == 0.5);

  PlateauScheduler t(1.0, 2.0, 1, 0.0);
  t.load_state(s.state());
  CHECK(t.lr() == s.lr());
  CHECK(t.best() == s.best());
}

TEST_CASE("training lowers the loss on a fixed toy batch") {
  auto c = toy_config(TrainMode::kImage);
  c.hp.crop = 16;
  c.hp.B_batch = 1;
  const auto clip = toy_clip(4, 16, 8);
  Trainer trainer(c, DatasetIndex::from_clips({clip}));
  const auto seq = whole_sequence(clip, 1);
  const double before = eval_loss(seq, trainer.model(), c.hp, false);
  for (int i = 0; i < 100; ++i) trainer.step();
  const double after = eval_loss(seq, trainer.model(), c.hp, false);
  CHECK(after < before);
  CHECK(trainer.iteration() == 100);
}

TEST_CASE("training is reproducible and resumable") {
  const auto index = DatasetIndex::from_clips({toy_clip(6, 16, 1), toy_clip(6, 16, 2)});
  auto c = toy_config(TrainMode::kVideo);
  c.train.cns_enabled = true;

  Trainer a(c, index), b(c, index);
  const auto ea = a.run_epoch();
  const auto eb = b.run_epoch();
  CHECK(ea.loss == eb.loss);
  CHECK(ea.temporal > 0);

  const auto dir = scratch("resume");
  a.save(dir / "epoch1.ckpt");
  const auto a2 = a.run_epoch();
  const auto a3 = a.run_epoch();

  Trainer r(c, index);
  r.resume(dir / "epoch1.ckpt");
  CHECK(r.epoch() == 1);
  CHECK(r.iteration() == 3);
  const auto r2 = r.run_epoch();
  const auto r3 = r.run_epoch();
  CHECK(r2.loss == a2.loss);
  CHECK(r3.loss == a3.loss);
  CHECK(r.history().size() == 3);
}

TEST_CASE("budgets, checkpoints and the training log") {
  const auto dir = scratch("budget");
  auto c = toy_config(TrainMode::kImage);
  c.train.checkpoint_dir = (dir / "ck").string();
  c.train.max_iterations = 7;
  Trainer t(c, DatasetIndex::from_clips({toy_clip(4, 16, 1)}));
  CHECK(t.epoch_budget() == 200);
  int callbacks = 0;
  const auto records = t.run([&](const EpochRecord&) { ++callbacks; });
  CHECK(t.iteration() == 7);
  CHECK(records.size() == 3);
  CHECK(callbacks == 3);
  CHECK(fs::exists(dir / "ck" / "last.ckpt"));
  CHECK(fs::exists(dir / "ck" / "best.ckpt"));
  const auto log = nlohmann::json::parse(std::ifstream(dir / "ck" / "train_log.json"));
  CHECK(log["epochs"].size() == 3);
  CHECK(log["mode"] == "image");

  // Image stage into video stage.
  auto v = toy_config(TrainMode::kVideo);
  v.train.max_epochs = 1;
  Trainer video(v, DatasetIndex::from_clips({toy_clip(4, 16, 1)}));
  video.init_from(dir / "ck" / "last.ckpt");
  CHECK(video.model().recurrent());
  CHECK(video.run().size() == 1);

  // Video mode needs flows.
  StereoClip bare = toy_clip(4, 16, 1);
  bare.flows_left.reset();
  bare.flows_right.reset();
  CHECK_THROWS(Trainer(v, DatasetIndex::from_clips({bare})));
  auto no_data = toy_config(TrainMode::kImage);
  CHECK_THROWS(Trainer{no_data});
}

TEST_CASE("mononize and restore clips") {
  Mono3dModel<float> model(toy_arch(), 9);
  auto clip = toy_clip(3, 16, 2);
  clip.fps = 30;
  const auto m1 = mononize_clip(model, clip);
  const auto m2 = mononize_clip(model, clip);
  CHECK_FALSE(m1.padded);
  REQUIRE(m1.mono.size() == 3);
  CHECK(m1.mono.fps == 30);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(m1.mono.frames[t] == m2.mono.frames[t]);
    CHECK(m1.mono.frames[t].on_u8_grid());
    CHECK(m1.mono.frames[t].depth() == BitDepth::kU8);
  }
  const auto r = restore_clip(model, m1.mono);
  CHECK(r.stereo.size() == 3);
  CHECK(r.stereo.fps == 30);
  CHECK(r.stereo.height() == 16);
  for (const auto& f : r.stereo.frames) CHECK(f.right.on_u8_grid());

  // Odd sizes are edge-padded and cropped back.
  StereoClip odd;
  Rng rng(3);
  for (int t = 0; t < 2; ++t) odd.frames.emplace_back(test::random_u8_frame(13, 10, rng), test::random_u8_frame(13, 10, rng));
  const auto mo = mononize_clip(model, odd);
  CHECK(mo.padded);
  CHECK(mo.mono.height() == 13);
  CHECK(mo.mono.width() == 10);
  const auto ro = restore_clip(model, mo.mono);
  CHECK(ro.padded);
  CHECK(ro.stereo.width() == 10);

  // Any monocular clip decodes, including ones the encoder never produced.
  VideoClip plain;
  for (int t = 0; t < 2; ++t) plain.frames.push_back(test::random_frame(16, 16, rng));
  const auto g = restore_clip(model, plain);
  CHECK(g.stereo.size() == 2);
  for (const auto& f : g.stereo.frames) CHECK(f.left.all_finite());
}
