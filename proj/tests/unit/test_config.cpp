#include <doctest.h>

#include "cascade/config.hpp"
#include "cascade/io.hpp"
#include "helpers.hpp"

using namespace cascade;

TEST_SUITE("config") {
  TEST_CASE("defaults are the desk-scale settings") {
    const RunConfig c;
    CHECK(c.resolution == 64);
    CHECK(c.f == 4);
    CHECK(c.T == 200);
    CHECK(c.ddim_steps == 20);
    CHECK(c.K == 32);
    CHECK(c.D == 16);
    CHECK(c.n_identities == 16);
    CHECK(c.clips_per_identity == 2);
    CHECK(c.frames_per_clip == 200);
    CHECK_NOTHROW(validate(c));
  }

  TEST_CASE("json round trip") {
    RunConfig c;
    c.stage1.steps = 17;
    c.data_dir = "elsewhere";
    CHECK(to_json(config_from_json(to_json(c))) == to_json(c));
  }

  TEST_CASE("dotted overrides") {
    const RunConfig c = apply_overrides(RunConfig{}, {"stage1.steps=200", "data_dir=/tmp/x", "ae.lr=0.01",
                                                      "split_ratios=[0.5,0,0.5]"});
    CHECK(c.stage1.steps == 200);
    CHECK(c.data_dir == "/tmp/x");
    CHECK(c.ae.lr == 0.01);
    CHECK(c.split_ratios == std::vector<double>{0.5, 0, 0.5});
    CHECK_THROWS_AS(apply_overrides(RunConfig{}, {"stage1.stepz=3"}), std::invalid_argument);
    CHECK_THROWS_AS(apply_overrides(RunConfig{}, {"novalue"}), std::invalid_argument);
  }

  TEST_CASE("validation") {
    RunConfig c;
    c.ddim_steps = 300;
    CHECK_THROWS_AS(validate(c), std::invalid_argument);
    c = RunConfig{};
    c.resolution = 62;
    CHECK_THROWS_AS(validate(c), std::invalid_argument);
  }

  TEST_CASE("config files reject unknown keys") {
    testutil::TempDir tmp("config");
    io::write_json(tmp.path / "ok.json", {{"ddim_steps", 10}, {"stage2", {{"steps", 5}}}});
    const RunConfig c = load_config(tmp.path / "ok.json");
    CHECK(c.ddim_steps == 10);
    CHECK(c.stage2.steps == 5);
    CHECK(c.stage2.seed == RunConfig{}.stage2.seed);
    io::write_json(tmp.path / "bad.json", {{"ddim_stepz", 10}});
    CHECK_THROWS_AS(load_config(tmp.path / "bad.json"), std::invalid_argument);
  }
}
