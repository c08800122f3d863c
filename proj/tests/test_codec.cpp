#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mono3d/codec_harness.hpp"
#include "mono3d/degrade.hpp"
#include "mono3d/image_io.hpp"
#include "mono3d/process.hpp"
#include "mono3d/synthetic.hpp"

#include <algorithm>

using namespace mono3d;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("mono3d_test_codec_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

StereoClip toy_clip(int frames, int h, int w, std::uint64_t seed = 1) {
  SyntheticScene s;
  s.frames = frames;
  s.height = h;
  s.width = w;
  s.seed = seed;
  return make_synthetic_clip(s);
}

ArchConfig toy_arch() {
  ArchConfig a;
  a.channels = {4, 6, 8};
  a.residual_blocks = 1;
  return a;
}

}  // namespace

TEST_CASE("measured bitrate") {
  CHECK(measured_bitrate_mbps(2500000, 100, 25) == doctest::Approx(5.0));
  CHECK(measured_bitrate_mbps(0, 10, 25) == 0.0);
  CHECK_THROWS(measured_bitrate_mbps(100, 0, 25));
  CHECK_THROWS(measured_bitrate_mbps(100, 10, 0));
}

TEST_CASE("side-by-side packing") {
  const auto clip = toy_clip(2, 12, 20);
  const auto packed = side_by_side_pack(clip);
  CHECK(packed.size() == 2);
  CHECK(packed.height() == 12);
  CHECK(packed.width() == 40);
  const auto back = side_by_side_unpack(packed);
  REQUIRE(back.size() == 2);
  for (std::size_t t = 0; t < 2; ++t) {
    CHECK(back.frames[t].left == clip.frames[t].left);
    CHECK(back.frames[t].right == clip.frames[t].right);
  }

  StereoClip same;
  same.frames.emplace_back(clip.frames[0].left, clip.frames[0].left);
  const auto p = side_by_side_pack(same).frames[0];
  CHECK(crop(p, 0, 0, 12, 20) == crop(p, 0, 20, 12, 20));

  VideoClip odd;
  odd.frames.push_back(Frame(4, 5));
  CHECK_THROWS_AS(side_by_side_unpack(odd), std::invalid_argument);
}

TEST_CASE("profiles") {
  const auto ids = builtin_codec_ids();
  CHECK(std::find(ids.begin(), ids.end(), "h264") != ids.end());
  CHECK(std::find(ids.begin(), ids.end(), "lossless") != ids.end());
  CHECK_THROWS_AS(builtin_profile("mpeg1", "ffmpeg"), std::invalid_argument);
  CHECK_THROWS(builtin_profile("h264", ""));
  for (const auto& id : ids) CHECK_NOTHROW(builtin_profile(id, "ffmpeg").validate());
  CodecProfile bad;
  bad.codec_id = "x";
  CHECK_THROWS(bad.validate());
}

TEST_CASE("timing bench") {
  Mono3dModel<float> model(toy_arch(), 3);
  const std::vector<std::pair<int, int>> res{{16, 16}, {32, 48}};
  const auto rows = timing_bench(model, res, 3, 1);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].height == 32);
  CHECK(rows[1].width == 48);
  CHECK(rows[1].runs == 3);
  for (const auto& r : rows) {
    CHECK(r.encode_ms > 0);
    CHECK(r.decode_ms > 0);
  }
  CHECK_THROWS(timing_bench(model, res, 0, 1));
}

TEST_CASE("codec round trips") {
  const auto ffmpeg = find_ffmpeg();
  if (ffmpeg.empty()) {
    MESSAGE("ffmpeg not available, skipping codec round trips");
    return;
  }
  const auto clip = toy_clip(6, 64, 64).left_stream();

  SUBCASE("lossless is bit-exact") {
    const auto rt = encode_roundtrip(clip, builtin_profile("lossless", ffmpeg), 0);
    REQUIRE(rt.decoded.size() == clip.size());
    for (std::size_t t = 0; t < clip.size(); ++t) CHECK(rt.decoded.frames[t] == clip.frames[t]);
    CHECK(rt.bytes > 0);
  }

  SUBCASE("h264 decodes with a plain decoder invocation") {
    const auto work = scratch("h264");
    const auto rt = encode_roundtrip(clip, builtin_profile("h264", ffmpeg), 300, work);
    CHECK(rt.decoded.size() == clip.size());
    CHECK(rt.decoded.height() == 64);
    CHECK(rt.decoded.width() == 64);
    CHECK(rt.bitrate_mbps == doctest::Approx(measured_bitrate_mbps(rt.bytes, 6, clip.fps)));

    const auto out = work / "plain";
    fs::create_directories(out);
    const auto r = run_command(shell_quote(ffmpeg) + " -nostdin -loglevel error -i " +
                               shell_quote(work / "stream.mkv") + " " + shell_quote(out / "%05d.png"));
    REQUIRE(r.exit_code == 0);
    const auto plain = read_frame_dir(out);
    CHECK(plain.size() == clip.size());
    CHECK(plain.height() == 64);
    CHECK(plain.width() == 64);
  }

  SUBCASE("a failing encoder is reported") {
    CodecProfile p = builtin_profile("h264", ffmpeg);
    p.encode_cmd = "false {in} {out} {bitrate_kbps} {fps}";
    CHECK_THROWS_AS(encode_roundtrip(clip, p, 100), std::runtime_error);
  }
}

TEST_CASE("rd sweep") {
  const auto ffmpeg = find_ffmpeg();
  if (ffmpeg.empty()) {
    MESSAGE("ffmpeg not available, skipping the rd sweep");
    return;
  }
  Mono3dModel<float> model(toy_arch(), 4);
  const std::vector<StereoClip> clips{toy_clip(3, 32, 32)};
  const std::vector<CodecProfile> profiles{builtin_profile("h264", ffmpeg),
                                           builtin_profile("lossless", ffmpeg)};
  const std::vector<double> rates{100, 400};
  RdOptions opt;
  opt.msssim_scales = 2;
  const auto points = rd_sweep(model, clips, profiles, rates, opt);
  REQUIRE(points.size() == profiles.size() * rates.size() * 2);
  for (const auto& p : points) {
    CHECK(p.bitrate_mbps > 0);
    CHECK(p.quality > 0);
    CHECK(p.quality <= 1.0 + 1e-12);
    CHECK(p.quality == doctest::Approx(0.5 * (p.quality_left + p.quality_right)));
  }
  const auto csv = rd_csv(points);
  CHECK(csv.rfind("codec_id,stream_kind,target_kbps", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == int(points.size()) + 1);

  opt.side_by_side = false;
  CHECK(rd_sweep(model, clips, profiles, rates, opt).size() == profiles.size() * rates.size());
  CHECK_THROWS(rd_sweep(model, clips, std::span<const CodecProfile>{}, rates, opt));
}
