#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cascade/checkpoint.hpp"
#include "cascade/cli.hpp"
#include "cascade/edit_pipeline.hpp"
#include "cascade/io.hpp"
#include "helpers.hpp"

using namespace cascade;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// A small dataset and untrained tiny models: enough to drive every command.
struct Fixture {
  testutil::TempDir tmp{"cli"};
  fs::path data = tmp.path / "data";
  fs::path ckpt = tmp.path / "ckpt";
  std::vector<std::string> small{"--set", "n_identities=4", "clips_per_identity=1", "frames_per_clip=40",
                                 "split_ratios=[0.5,0,0.5]"};

  void gen() {
    auto args = std::vector<std::string>{"gen-data", "--out", data.string()};
    args.insert(args.end(), small.begin(), small.end());
    REQUIRE(invoke(args).code == 0);
  }

  void tiny_checkpoints() {
    RunConfig cfg;
    cfg.stage1.base = cfg.stage2.base = 8;
    io::ensure_dir(ckpt);
    save_checkpoint(checkpoint_path(ckpt, "ae"), AutoEncoder({64, 64}, 8, 1).to_checkpoint());
    save_checkpoint(checkpoint_path(ckpt, "warp"), WarpModel({64, 64}, 8, 16, 2).to_checkpoint());
    save_checkpoint(checkpoint_path(ckpt, "stage1"),
                    DiffusionModel("stage1", stage1_spec(cfg), make_schedule(cfg.T), 3).to_checkpoint());
    DiffusionModel s2("stage2", stage2_spec(cfg), make_schedule(cfg.T), 4);
    s2.variant = "full";
    save_checkpoint(checkpoint_path(ckpt, "stage2"), s2.to_checkpoint());
  }

  fs::path first_test_clip() const {
    const auto m = load_manifest(data);
    for (const auto& c : m.clips)
      if (c.split == "test") return data / c.path;
    FAIL("no test clip");
    return {};
  }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help and usage errors") {
    for (const char* sub : {"gen-data", "train", "edit", "eval"}) {
      const auto r = invoke({sub, "--help"});
      CHECK(r.code == 0);
      CHECK(r.out.find("--set") != std::string::npos);
    }
    CHECK(invoke({}).code == cli::kUsage);
    CHECK(invoke({"gen-data", "--bogus"}).code == cli::kUsage);
    CHECK(invoke({"train", "--stage", "stage9"}).code == cli::kUsage);
    CHECK(invoke({"gen-data", "--set", "nokey=1"}).code == cli::kUsage);
  }

  TEST_CASE("gen-data writes the dataset and is idempotent") {
    Fixture f;
    f.gen();
    const std::string first = slurp(f.data / "manifest.json");
    f.gen();
    CHECK(slurp(f.data / "manifest.json") == first);
    const auto m = load_manifest(f.data);
    CHECK(m.clips.size() == 4);
    CHECK(m.clips[0].length == 40);
    CHECK(fs::exists(f.data / "config.json"));
  }

  TEST_CASE("--split 12.5 sets the paper ratios") {
    testutil::TempDir tmp("cli_split");
    const auto r = invoke({"gen-data", "--out", (tmp.path / "d").string(), "--split", "12.5", "--set",
                        "clips_per_identity=1", "frames_per_clip=4"});
    REQUIRE(r.code == 0);
    const auto m = load_manifest(tmp.path / "d");
    CHECK(m.ratios.train == doctest::Approx(0.1125));
    CHECK(m.ratios.val == doctest::Approx(0.0125));
    CHECK(m.ratios.test == doctest::Approx(0.875));
    CHECK(m.test.size() == 14);
  }

  TEST_CASE("training needs its dependency checkpoints") {
    Fixture f;
    f.gen();
    io::ensure_dir(f.ckpt);
    save_checkpoint(checkpoint_path(f.ckpt, "ae"), AutoEncoder({64, 64}, 8, 1).to_checkpoint());
    const auto r = invoke({"train", "--stage", "stage2", "--data", f.data.string(), "--ckpt-dir", f.ckpt.string()});
    CHECK(r.code == cli::kDependency);
    CHECK(r.err.find("warp") != std::string::npos);
  }

  TEST_CASE("training writes a checkpoint, one CSV row per logged step and a config snapshot") {
    Fixture f;
    f.gen();
    const std::vector<std::string> args{"train", "--stage", "ae", "--data", f.data.string(), "--ckpt-dir",
                                        f.ckpt.string(), "--set", "ae.steps=5", "ae.batch=2", "ae.width=8",
                                        "log_every=2"};
    REQUIRE(invoke(args).code == 0);
    const std::string csv = slurp(f.ckpt / "ae.loss.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3);  // header, steps 0, 2, 4
    CHECK(fs::exists(f.ckpt / "ae.config.json"));
    const std::string hash = io::file_hash(f.ckpt / "ae.ckpt");
    REQUIRE(invoke(args).code == 0);
    CHECK(io::file_hash(f.ckpt / "ae.ckpt") == hash);
  }

  TEST_CASE("edit length laws, seed fallback and eval") {
    Fixture f;
    f.gen();
    f.tiny_checkpoints();
    const fs::path clip = f.first_test_clip();
    const auto edit = [&](std::vector<std::string> extra, const fs::path& out) {
      std::vector<std::string> a{"edit", "--clip", clip.string(), "--ckpt-dir", f.ckpt.string(), "--out",
                                 out.string(), "--set", "ddim_steps=2"};
      a.insert(a.end(), extra.begin(), extra.end());
      return invoke(a);
    };
    REQUIRE(edit({"--op", "delete", "--start", "10", "--end", "19"}, f.tmp.path / "del").code == 0);
    CHECK(read_clip(f.tmp.path / "del").video.size() == 30);
    const auto sub = edit({"--op", "substitute", "--start", "10", "--end", "19", "--new-len", "15",
                           "--reference-out", (f.tmp.path / "ref").string()},
                          f.tmp.path / "sub");
    REQUIRE(sub.code == 0);
    const auto edited = read_clip(f.tmp.path / "sub");
    CHECK(edited.video.size() == 45);
    CHECK(fs::exists(f.tmp.path / "sub" / "edit_plan.json"));
    CHECK(fs::exists(f.tmp.path / "sub" / "config.json"));

    // Out-of-interval frames are the originals (after PNG storage both ways).
    const auto orig = read_clip(clip);
    CHECK(testutil::bit_equal(edited.video.frames[5], orig.video.frames[5]));
    CHECK(testutil::bit_equal(edited.video.frames[30], orig.video.frames[25]));

    // CASCADE_EDIT_SEED is used when --seed is absent.
    setenv("CASCADE_EDIT_SEED", "77", 1);
    REQUIRE(edit({"--start", "10", "--end", "12", "--new-len", "4"}, f.tmp.path / "env").code == 0);
    unsetenv("CASCADE_EDIT_SEED");
    REQUIRE(edit({"--start", "10", "--end", "12", "--new-len", "4", "--seed", "77"}, f.tmp.path / "flag").code == 0);
    REQUIRE(edit({"--start", "10", "--end", "12", "--new-len", "4", "--seed", "78"}, f.tmp.path / "other").code == 0);
    const auto a = read_clip(f.tmp.path / "env"), b = read_clip(f.tmp.path / "flag"), c = read_clip(f.tmp.path / "other");
    CHECK(testutil::bit_equal(a.video.frames[11], b.video.frames[11]));
    CHECK(a.audio.envelope != c.audio.envelope);

    // eval against itself and against the rendered ground truth
    const auto self = invoke({"eval", "--edited", (f.tmp.path / "sub").string(), "--reference",
                           (f.tmp.path / "sub").string(), "--ckpt-dir", f.ckpt.string(), "--out",
                           (f.tmp.path / "rep_self").string()});
    REQUIRE(self.code == 0);
    CHECK(io::read_json(f.tmp.path / "rep_self" / "report.json").at("psnr") == 99.0);
    CHECK(fs::exists(f.tmp.path / "rep_self" / "report.txt"));
    const auto gt = invoke({"eval", "--edited", (f.tmp.path / "sub").string(), "--reference",
                         (f.tmp.path / "ref").string(), "--ckpt-dir", f.ckpt.string(), "--out",
                         (f.tmp.path / "rep_gt").string()});
    CHECK(gt.code == 0);
    const auto mis = invoke({"eval", "--edited", (f.tmp.path / "sub").string(), "--reference", clip.string(),
                          "--ckpt-dir", f.ckpt.string(), "--out", (f.tmp.path / "rep_bad").string()});
    CHECK(mis.code != 0);
  }

  TEST_CASE("edit without a checkpoint flag is a usage error") {
    Fixture f;
    f.gen();
    const auto r = invoke({"edit", "--clip", f.first_test_clip().string(), "--out", (f.tmp.path / "x").string(),
                        "--start", "3", "--end", "4"});
    CHECK(r.code == cli::kUsage);
    const auto missing = invoke({"edit", "--clip", f.first_test_clip().string(), "--ckpt-dir",
                              (f.tmp.path / "none").string(), "--out", (f.tmp.path / "x").string(),
                              "--start", "3", "--end", "4"});
    CHECK(missing.code == cli::kDependency);
  }

  TEST_CASE("bad edit intervals are usage errors") {
    Fixture f;
    f.gen();
    f.tiny_checkpoints();
    const auto r = invoke({"edit", "--clip", f.first_test_clip().string(), "--ckpt-dir", f.ckpt.string(), "--out",
                        (f.tmp.path / "x").string(), "--start", "0", "--end", "4"});
    CHECK(r.code == cli::kUsage);
  }
}
