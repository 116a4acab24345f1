#include <doctest.h>

#include "cascade/config.hpp"
#include "cascade/refine_diffusion.hpp"
#include "helpers.hpp"

using namespace cascade;

TEST_SUITE("refine_diffusion") {
  TEST_CASE("temporal fusion arithmetic") {
    const Tensor x = testutil::uniform({1, 3, 4, 4}, 1);
    const Tensor f = temporal_fuse(x, x, x);
    CHECK(f.shape() == Shape{1, 9, 4, 4});
    for (int s = 0; s < 3; ++s)
      for (std::size_t k = 0; k < x.size(); ++k) CHECK(f[s * x.size() + k] == x[k]);
    const Tensor p({1, 3, 4, 4}, 0.0f), n({1, 3, 4, 4}, 2.0f), fu({1, 3, 4, 4}, 4.0f);
    const Tensor g = temporal_fuse(p, n, fu);
    const float expect[3] = {1.0f, 2.0f, 3.0f};
    for (int s = 0; s < 3; ++s)
      for (std::size_t k = 0; k < x.size(); ++k) CHECK(g[s * x.size() + k] == expect[s]);
  }

  TEST_CASE("fused slot is (C_p + C_n) * 0.5 bit for bit") {
    const Tensor a = testutil::uniform({1, 3, 4, 4}, 2, -3, 3);
    const Tensor b = testutil::uniform({1, 3, 4, 4}, 3, -3, 3);
    const Tensor c = testutil::uniform({1, 3, 4, 4}, 4, -3, 3);
    const Tensor g = temporal_fuse(a, b, c);
    for (std::size_t k = 0; k < a.size(); ++k) {
      CHECK(g[k] == (a[k] + b[k]) * 0.5f);
      CHECK(g[2 * a.size() + k] == (c[k] + b[k]) * 0.5f);
    }
  }

  TEST_CASE("stage 2 condition replicates the interval ends") {
    Rng rng(5);
    const Tensor lat = rng.normal_like({3, 3, 4, 4});
    const Tensor c = stage2_condition(lat);
    CHECK(c.shape() == Shape{3, 12, 4, 4});
    const std::size_t p3 = 3 * 16;
    const Tensor l0 = lat.sample(0);
    // first frame: current, then C_p* = C_n
    for (std::size_t k = 0; k < p3; ++k) {
      CHECK(c[k] == l0[k]);
      CHECK(c[p3 + k] == l0[k]);
    }
    const Tensor l2 = lat.sample(2);
    const float* last = c.plane(2, 0);
    for (std::size_t k = 0; k < p3; ++k) CHECK(last[3 * p3 + k] == l2[k]);
  }

  TEST_CASE("variant names") {
    for (auto v : {RefineVariant::Full, RefineVariant::LandmarkOnly, RefineVariant::ZeroedCV})
      CHECK(parse_refine_variant(to_string(v)) == v);
    CHECK_THROWS_AS(parse_refine_variant("nope"), std::invalid_argument);
  }

  TEST_CASE("refinement length and determinism") {
    RunConfig cfg;
    cfg.stage2.base = 8;
    const AutoEncoder ae({64, 64}, 8, 1);
    DiffusionModel model("stage2", stage2_spec(cfg), make_schedule(cfg.T), 2);
    model.variant = to_string(RefineVariant::Full);
    Rng rng(3);
    for (auto& [n, p] : model.net->params().items())
      for (auto& v : p->value.vec()) v += float(rng.normal() * 0.02);
    const auto clip = gen_clip(gen_identity(2), 20, 4);
    CHECK(refine_interval({}, clip.audio, 3, model, ae, 4, 1).empty());
    std::vector<Tensor> frames(clip.video.frames.begin() + 4, clip.video.frames.begin() + 7);
    const auto a = refine_interval(frames, clip.audio, 4, model, ae, 4, 9);
    const auto b = refine_interval(frames, clip.audio, 4, model, ae, 4, 9);
    REQUIRE(a.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(testutil::bit_equal(a[i], b[i]));
    CHECK(variant_of(model) == RefineVariant::Full);
  }
}
