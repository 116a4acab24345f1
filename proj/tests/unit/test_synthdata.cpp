#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "cascade/metrics.hpp"
#include "cascade/synthdata.hpp"
#include "helpers.hpp"

using namespace cascade;

namespace {
std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}
}  // namespace

TEST_SUITE("synthdata") {
  TEST_CASE("identities are deterministic and distinct") {
    CHECK(to_json(gen_identity(7)) == to_json(gen_identity(7)));
    CHECK(gen_identity(7).face_hue != gen_identity(8).face_hue);
    int collisions = 0;
    for (std::uint64_t s = 0; s < 100; ++s)
      if (gen_identity(2 * s + 100).face_hue == gen_identity(2 * s + 101).face_hue) ++collisions;
    CHECK(collisions < 1);
  }

  TEST_CASE("identity json round trip") {
    const auto a = gen_identity(3);
    CHECK(to_json(identity_from_json(to_json(a))) == to_json(a));
  }

  TEST_CASE("the face stays inside the frame at every pose") {
    const KeypointLayout layout;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto id = gen_identity(s);
      for (int t = 0; t < 160; ++t)
        for (const auto& p : face_keypoints(id, t, 1.0, layout)) {
          CHECK(p.x >= 0);
          CHECK(p.x <= 63);
          CHECK(p.y >= 0);
          CHECK(p.y <= 63);
        }
    }
  }

  TEST_CASE("closed and fully open envelopes give constant gaps") {
    const auto id = gen_identity(4);
    const KeypointLayout layout;
    const auto gap = mouth_gap(id.resolution);
    std::vector<double> times{0, 1, 2, 3, 4, 5};
    for (float env : {0.0f, 1.0f}) {
      const auto clip = render_clip(id, times, std::vector<float>(times.size(), env), layout, 16);
      for (const auto& kp : clip.landmarks.keypoints)
        CHECK(mouth_aperture(kp, layout) == doctest::Approx(env == 0 ? gap.g_min : gap.g_max).epsilon(1e-5));
    }
  }

  TEST_CASE("gap series correlates perfectly with the envelope") {
    const auto clip = gen_clip(gen_identity(9), 120, 77);
    const KeypointLayout layout = KeypointLayout::for_count(clip.landmarks.k);
    std::vector<double> g, e;
    for (std::size_t i = 0; i < clip.landmarks.size(); ++i) {
      g.push_back(mouth_aperture(clip.landmarks.keypoints[i], layout));
      e.push_back(clip.audio.envelope[i]);
    }
    CHECK(metrics::pearson(g, e).r == doctest::Approx(1.0).epsilon(1e-9));
  }

  TEST_CASE("clips are aligned and deterministic") {
    const auto id = gen_identity(1);
    const auto a = gen_clip(id, 30, 5);
    const auto b = gen_clip(id, 30, 5);
    CHECK(a.video.size() == 30);
    CHECK(a.landmarks.size() == 30);
    CHECK(a.audio.size() == 30);
    CHECK(a.audio.features.size() == 30u * a.audio.dim);
    CHECK(a.audio.envelope == b.audio.envelope);
    CHECK(testutil::bit_equal(a.video.frames[17], b.video.frames[17]));
  }

  TEST_CASE("envelope stays in [0,1] and features start with it") {
    const auto env = synth_envelope(200, 12);
    for (float v : env) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    const auto feat = audio_features(env, 16);
    for (int i = 0; i < 200; ++i) CHECK(feat[i * 16] == env[i]);
    CHECK_THROWS_AS(audio_features(env, 2), std::invalid_argument);
  }

  TEST_CASE("split ratios and counts") {
    const auto r = split_ratios_for_percent(12.5);
    CHECK(r.train == doctest::Approx(0.1125));
    CHECK(r.val == doctest::Approx(0.0125));
    CHECK(r.test == doctest::Approx(0.875));
    CHECK(split_counts(16, r)[2] == 14);
    const auto c = split_counts(8, {0.45, 0.05, 0.5});
    CHECK(c[2] == 4);
    CHECK(c[0] + c[1] + c[2] == 8);
  }

  TEST_CASE("datasets are identity-disjoint and reproducible") {
    testutil::TempDir tmp("dataset");
    DatasetOptions o;
    o.n_identities = 8;
    o.clips_per_identity = 1;
    o.frames_per_clip = 6;
    const auto m = make_dataset(o, tmp.path / "a");
    CHECK(m.test.size() == 4);
    std::set<std::string> train(m.train.begin(), m.train.end());
    for (const auto& t : m.test) CHECK(train.count(t) == 0);
    for (const auto& v : m.val) CHECK(train.count(v) == 0);
    make_dataset(o, tmp.path / "b");
    CHECK(slurp(tmp.path / "a" / "manifest.json") == slurp(tmp.path / "b" / "manifest.json"));
    const auto loaded = load_manifest(tmp.path / "a");
    CHECK(loaded.clips.size() == 8);
    const auto clips = load_split(loaded, "test");
    CHECK(clips.size() == 4);
    CHECK(clips[0].video.size() == 6);
  }

  TEST_CASE("clip files round trip") {
    testutil::TempDir tmp("clip_io");
    const auto clip = gen_clip(gen_identity(3), 8, 2);
    write_clip(tmp.path / "c", clip);
    const auto back = read_clip(tmp.path / "c");
    CHECK(back.video.size() == 8);
    CHECK(back.audio.features == clip.audio.features);
    CHECK(back.audio.envelope == clip.audio.envelope);
    CHECK(back.landmarks.keypoints[5][3].x == clip.landmarks.keypoints[5][3].x);
    // 8-bit PNG storage
    CHECK(testutil::diff_max(back.video.frames[4], clip.video.frames[4]) <= 0.5 / 255 + 1e-6);
    CHECK_THROWS(read_clip(tmp.path / "missing"));
  }

  TEST_CASE("edit_audio splices the features") {
    const auto clip = gen_clip(gen_identity(6), 50, 8);
    const auto& a = clip.audio;
    SUBCASE("delete") {
      const auto [out, plan] = edit_audio(a, {EditOp::Delete, 10, 19, 0, 3});
      REQUIRE(out.size() == 40);
      for (int i = 0; i < 10; ++i) CHECK(out.envelope[i] == a.envelope[i]);
      for (int i = 20; i < 50; ++i) CHECK(out.envelope[i - 10] == a.envelope[i]);
      for (int i = 0; i < 10 * a.dim; ++i) CHECK(out.features[i] == a.features[i]);
      for (int i = 20 * a.dim; i < 50 * a.dim; ++i) CHECK(out.features[i - 10 * a.dim] == a.features[i]);
    }
    SUBCASE("empty insert is a no-op") {
      const auto [out, plan] = edit_audio(a, {EditOp::Insert, 10, 10, 0, 3});
      CHECK(out.features == a.features);
      CHECK(out.envelope == a.envelope);
    }
    SUBCASE("substitute") {
      const auto [out, plan] = edit_audio(a, {EditOp::Substitute, 10, 19, 15, 3});
      CHECK(out.size() == 55);
      CHECK(plan.anchor_before == 9);
      CHECK(plan.anchor_after == 20);
      for (int i = 20; i < 50; ++i) CHECK(out.envelope[i + 5] == a.envelope[i]);
    }
  }

  TEST_CASE("edit ground truth keeps original frames outside the interval") {
    const auto clip = gen_clip(gen_identity(6), 30, 8);
    const auto [audio, plan] = edit_audio(clip.audio, {EditOp::Substitute, 10, 14, 8, 4});
    const auto gt = render_edit_ground_truth(clip, audio, plan, KeypointLayout::for_count(clip.landmarks.k));
    CHECK(gt.video.size() == 33);
    for (auto [o, n] : plan.output_index_map) CHECK(testutil::bit_equal(gt.video.frames[n], clip.video.frames[o]));
  }
}
