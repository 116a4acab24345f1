// End-to-end acceptance run. Trains every stage at the default desk-scale
// config, then measures each criterion and prints one PASS/FAIL line per
// criterion. Exit status is nonzero when any criterion fails.
//
// usage: acceptance <work_dir> [--reuse]
//   --reuse keeps checkpoints already present in work_dir (for iterating).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cascade/cli.hpp"
#include "cascade/diffusion.hpp"
#include "cascade/edit_pipeline.hpp"
#include "cascade/io.hpp"
#include "cascade/metrics.hpp"
#include "cascade/reference.hpp"

namespace fs = std::filesystem;
using namespace cascade;
using nn::Var;

namespace {

struct Outcome {
  std::string id;
  std::string title;
  bool pass = false;
  std::string detail;
  double seconds = 0;
};

std::vector<Outcome> g_outcomes;
nlohmann::json g_measured;

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Runs one criterion; an exception counts as a failure with its message.
void criterion(const std::string& id, const std::string& title,
               const std::function<bool(std::string&)>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o{id, title};
  try {
    o.pass = body(o.detail);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail += std::string(o.detail.empty() ? "" : "; ") + "exception: " + e.what();
  }
  o.seconds = seconds_since(t0);
  std::cout << "[" << id << "] " << (o.pass ? "pass" : "FAIL") << " in " << fmt(o.seconds, 1)
            << " s: " << o.detail << std::endl;
  g_outcomes.push_back(o);
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.vec().begin(), a.vec().end(), b.vec().begin());
}

// ---------------------------------------------------------------- C1

double brute_ssim(const Tensor& a, const Tensor& b) {
  const Shape s = a.shape();
  double acc = 0;
  for (int c = 0; c < s.c; ++c) acc += reference::ssim_plane(a.plane(0, c), b.plane(0, c), s.h, s.w, 8, 1.0);
  return acc / s.c;
}

bool exact_suite(std::string& detail) {
  bool ok = true;
  auto note = [&](bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail += what + " failed; ";
    }
  };
  const auto [ws, we] = interp_weights(1, 4);
  note(ws == 0.75 && we == 0.25, "interp_weights(1,4)");

  Rng rng(77);
  const Tensor cp = rng.normal_like({1, 3, 16, 16}), cn = rng.normal_like({1, 3, 16, 16}),
               cf = rng.normal_like({1, 3, 16, 16});
  const Tensor fused = temporal_fuse(cp, cn, cf);
  bool fuse_ok = fused.shape() == Shape{1, 9, 16, 16};
  for (std::size_t k = 0; fuse_ok && k < cn.size(); ++k) {
    fuse_ok = fused[k] == (cp[k] + cn[k]) * 0.5f && fused[cn.size() + k] == cn[k] &&
              fused[2 * cn.size() + k] == (cf[k] + cn[k]) * 0.5f;
  }
  note(fuse_ok, "temporal_fuse bit-exact");

  const Tensor frame = render_frame(gen_identity(3), 7, 0.4);
  const Shape fs = frame.shape();
  note(bit_equal(apply_flow(frame, Tensor({1, 2, fs.h, fs.w})), frame), "apply_flow(zero)");

  const NoiseSchedule s = make_schedule(200);
  const Tensor z0 = rng.normal_like({2, 3, 8, 8}), eps = rng.normal_like({2, 3, 8, 8});
  double worst = 0;
  for (int t : {1, 50, 200}) {
    // independent product of (1 - beta)
    long double ab = 1;
    for (int k = 1; k <= t; ++k) ab *= 1.0L - (1e-4L + (0.02L - 1e-4L) * (k - 1) / 199.0L);
    const Tensor zt = forward_diffuse(z0, t, eps, s);
    const Tensor zero_noise = forward_diffuse(z0, t, Tensor(z0.shape()), s);
    for (std::size_t i = 0; i < z0.size(); ++i) {
      const double want = std::sqrt(double(ab)) * z0[i] + std::sqrt(1.0 - double(ab)) * eps[i];
      worst = std::max(worst, std::abs(zt[i] - want));
      worst = std::max(worst, std::abs(zero_noise[i] - std::sqrt(double(ab)) * z0[i]));
    }
  }
  note(worst <= 1e-5, "forward_diffuse affine identity (max err " + fmt(worst, 8) + ")");

  const auto clip = gen_clip(gen_identity(5), 40, 6);
  double fworst = 0;
  for (const EditSpec spec : {EditSpec{EditOp::Substitute, 12, 20, 9, 0}, EditSpec{EditOp::Insert, 3, 3, 4, 0},
                              EditSpec{EditOp::Delete, 30, 37, 0, 0}}) {
    const auto plan = plan_edit(40, spec);
    std::vector<Tensor> frames = clip.video.frames;
    frames.resize(plan.output_length, clip.video.frames.back());
    const int lo = plan.generated_begin() - 2, hi = plan.anchor_after_output() + 1;
    double acc = 0;
    int count = 0;
    for (int k = 0; k + 1 < plan.output_length; ++k) {
      if ((k >= lo && k <= hi) || (k + 1 >= lo && k + 1 <= hi)) {
        acc += brute_ssim(frames[k], frames[k + 1]);
        ++count;
      }
    }
    fworst = std::max(fworst, std::abs(metrics::f_ssim(frames, plan) - acc / count));
  }
  note(fworst <= 1e-12, "f_ssim vs brute force (max err " + fmt(fworst, 15) + ")");
  if (ok) detail = "weights, fuse, zero flow, forward identities, f_ssim oracle all exact";
  return ok;
}

// ---------------------------------------------------------------- C2

struct ToyDenoiser : Denoiser {
  Var w, b;
  Var predict(const Var& z_t, std::span<const int>, const ConditionPack& cond) override {
    return nn::conv2d(nn::concat_channels({z_t, nn::constant(cond.image)}), w, b, {1, 0});
  }
};

bool gradient_check(std::string& detail) {
  const auto s = make_schedule(200);
  Rng init(5);
  const Tensor z0 = init.normal_like({3, 2, 3, 3});
  const ConditionPack cond{init.normal_like({3, 2, 3, 3}), {}};
  const Tensor w0 = init.normal_like({2, 4, 1, 1});
  const Tensor b0 = init.normal_like({2, 1, 1, 1});
  ToyDenoiser toy;
  toy.w = nn::parameter(w0);
  toy.b = nn::parameter(b0);
  Rng rng(9);
  nn::backward(training_loss(toy, z0, cond, s, rng));
  auto loss_with = [&](const Tensor& w, const Tensor& b) {
    ToyDenoiser d;
    d.w = nn::constant(w);
    d.b = nn::constant(b);
    Rng r(9);
    return double(training_loss(d, z0, cond, s, r)->value[0]);
  };
  // The loss is quadratic in the parameters, so a wide step has no
  // truncation error and keeps float rounding small.
  const double h = 0.5;
  double worst = 0;
  auto check = [&](double analytic, double numeric) {
    worst = std::max(worst, std::abs(analytic - numeric) / std::max(1e-3, std::abs(numeric)));
  };
  for (std::size_t i = 0; i < w0.size(); ++i) {
    Tensor wp = w0, wm = w0;
    wp[i] += h;
    wm[i] -= h;
    check(toy.w->grad[i], (loss_with(wp, b0) - loss_with(wm, b0)) / (2 * h));
  }
  for (std::size_t i = 0; i < b0.size(); ++i) {
    Tensor bp = b0, bm = b0;
    bp[i] += h;
    bm[i] -= h;
    check(toy.b->grad[i], (loss_with(w0, bp) - loss_with(w0, bm)) / (2 * h));
  }
  g_measured["gradcheck_max_rel_err"] = worst;
  detail = "max relative error " + fmt(worst, 8) + " over 10 parameters (limit 1e-4)";
  return worst <= 1e-4;
}

// ---------------------------------------------------------------- training

void train_all(const RunConfig& cfg, bool reuse) {
  const fs::path ck = cfg.ckpt_dir;
  if (!reuse || !fs::exists(fs::path(cfg.data_dir) / "manifest.json")) cli::cmd_gen_data(cfg);
  auto stage = [&](const std::string& name, const std::string& file, const std::string& variant) {
    if (reuse && fs::exists(ck / (file + ".ckpt"))) {
      std::cout << "reusing " << file << ".ckpt\n";
      return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    cli::cmd_train(name, cfg, variant, &std::cout);
    const double sec = seconds_since(t0);
    g_measured["train_seconds"][file] = sec;
    std::cout << "trained " << file << " in " << fmt(sec, 1) << " s" << std::endl;
  };
  stage("ae", "ae", "full");
  stage("warp", "warp", "full");
  stage("stage1", "stage1", "full");
  stage("stage2", "stage2", "full");
  stage("stage2", "stage2_landmark_only", "landmark_only");
}

// ---------------------------------------------------------------- held-out edits

struct HeldoutEdit {
  const SyntheticClip* clip = nullptr;
  EditSpec spec;
  EditPlan plan;
  AudioFeatureSequence audio;
  SyntheticClip truth;
  EditResult result;
  std::vector<Tensor> landmark_only;
};

// One substitute or insert edit per held-out clip, away from the clip ends.
std::vector<HeldoutEdit> run_heldout_edits(const std::vector<SyntheticClip>& clips,
                                           const PipelineModels& models, const DiffusionModel& lo,
                                           const RunConfig& cfg) {
  std::vector<HeldoutEdit> edits;
  Rng rng(2024);
  EditOptions opt;
  opt.ddim_steps = cfg.ddim_steps;
  opt.audio_context = cfg.audio_context;
  for (std::size_t k = 0; k < clips.size(); ++k) {
    const auto& c = clips[k];
    const int n = static_cast<int>(c.video.size());
    HeldoutEdit e;
    e.clip = &c;
    const int new_len = rng.integer(8, 16);
    const int start = rng.integer(20, n - 40);
    if (k % 3 == 2) {
      e.spec = {EditOp::Insert, start, start, new_len, 500 + k};
    } else {
      e.spec = {EditOp::Substitute, start, start + rng.integer(5, 15), new_len, 500 + k};
    }
    std::tie(e.audio, e.plan) = edit_audio(c.audio, e.spec);
    const auto layout = KeypointLayout::for_count(c.landmarks.k);
    e.truth = render_edit_ground_truth(c, e.audio, e.plan, layout);
    opt.seed = e.spec.seed;
    e.result = run_edit(c.video, c.landmarks, e.audio, e.plan, models, layout, opt);
    std::vector<Tensor> targets;
    for (const auto& l : e.result.landmarks) targets.push_back(l.image);
    e.landmark_only = refine_interval(targets, e.audio, e.plan.generated_begin(), lo, models.ae,
                                      cfg.ddim_steps, Rng::mix(e.spec.seed) ^ 0x57a9e2ULL,
                                      cfg.audio_context);
    edits.push_back(std::move(e));
  }
  return edits;
}

std::vector<Tensor> generated_truth(const HeldoutEdit& e) {
  const auto& f = e.truth.video.frames;
  return {f.begin() + e.plan.generated_begin(), f.begin() + e.plan.generated_begin() + e.plan.bs};
}

// ---------------------------------------------------------------- C9

std::string run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) {
    std::string joined;
    for (const auto& a : args) joined += a + " ";
    throw std::runtime_error("cascade " + joined + "exited " + std::to_string(code) + ": " + err.str());
  }
  return out.str();
}

nlohmann::json pipeline_once(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string data = (dir / "data").string(), ck = (dir / "ckpt").string();
  // reduced scale; the point is bit-for-bit repeatability of every stage
  const std::vector<std::string> sets = {
      "--set",           "n_identities=4",   "frames_per_clip=60", "ae.steps=30",
      "warp.steps=30",   "stage1.steps=30",  "stage2.steps=30",    "log_every=10",
      "data_dir=" + data, "ckpt_dir=" + ck};
  auto cmd = [&](std::vector<std::string> a) {
    a.insert(a.end(), sets.begin(), sets.end());
    return run_cli(a);
  };
  cmd({"gen-data"});
  for (const char* st : {"ae", "warp", "stage1", "stage2"}) cmd({"train", "--stage", st});
  const auto m = load_manifest(data);
  const auto& test_clip = m.clips.at(std::distance(
      m.clips.begin(), std::find_if(m.clips.begin(), m.clips.end(),
                                    [](const ClipEntry& c) { return c.split == "test"; })));
  const std::string edited = (dir / "edit").string(), ref = (dir / "ref").string();
  cmd({"edit", "--clip", (fs::path(data) / test_clip.path).string(), "--ckpt-dir", ck, "--out", edited,
       "--start", "20", "--end", "27", "--op", "substitute", "--new-len", "10", "--seed", "3",
       "--reference-out", ref});
  cmd({"eval", "--edited", edited, "--reference", ref, "--ckpt-dir", ck, "--out", (dir / "eval").string()});
  auto report = io::read_json(dir / "eval" / "report.json");
  report.erase("config");  // holds the run paths, which differ by design
  return report;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <work_dir> [--reuse]\n";
    return 2;
  }
  const fs::path work = argv[1];
  const bool reuse = argc > 2 && std::string(argv[2]) == "--reuse";
  fs::create_directories(work);
  const auto t_start = std::chrono::steady_clock::now();

  criterion("C1", "exact-arithmetic suite", exact_suite);
  criterion("C2", "training-loss gradient check", gradient_check);

  RunConfig cfg;
  cfg.data_dir = (work / "data").string();
  cfg.ckpt_dir = (work / "ckpt").string();
  bool trained = false;
  try {
    train_all(cfg, reuse);
    trained = true;
  } catch (const std::exception& e) {
    std::cout << "training failed: " << e.what() << std::endl;
  }

  std::optional<PipelineModels> models;
  std::optional<DiffusionModel> lo;
  std::vector<SyntheticClip> test;
  std::vector<HeldoutEdit> edits;
  if (trained) {
    models.emplace(load_pipeline(cfg.ckpt_dir));
    lo.emplace(load_checkpoint(fs::path(cfg.ckpt_dir) / "stage2_landmark_only.ckpt"), "stage2");
    test = load_split(load_manifest(cfg.data_dir), "test");
  }
  auto need_models = [&](std::string& detail) {
    if (!trained) detail = "training did not complete";
    return trained;
  };

  criterion("C3", "autoencoder held-out PSNR >= 28 dB", [&](std::string& d) {
    if (!need_models(d)) return false;
    std::vector<Tensor> frames;
    for (const auto& c : test)
      for (std::size_t i = 0; i < c.video.size(); i += 10) frames.push_back(c.video.frames[i]);
    const Tensor x = concat_batch(frames);
    const Tensor y = models->ae.decode(models->ae.encode(x));
    const double p = metrics::psnr(y, x);
    g_measured["ae_heldout_psnr"] = p;
    d = "PSNR " + fmt(p, 2) + " dB on " + std::to_string(frames.size()) + " held-out frames";
    return p >= 28.0;
  });

  if (trained) {
    const auto t0 = std::chrono::steady_clock::now();
    edits = run_heldout_edits(test, *models, *lo, cfg);
    std::cout << "ran " << edits.size() << " held-out edits in " << fmt(seconds_since(t0), 1) << " s"
              << std::endl;
  }

  criterion("C4", "Stage 1 sync r >= 0.7 over >= 8 held-out edits", [&](std::string& d) {
    if (!need_models(d)) return false;
    std::vector<double> sig, env;
    double mean_r = 0;
    for (const auto& e : edits) {
      const auto layout = KeypointLayout::for_count(e.clip->landmarks.k);
      const Rect roi = mouth_roi(e.clip->landmarks.keypoints, layout, 3, {});
      std::vector<double> s1, e1;
      for (int i = 0; i < e.plan.bs; ++i) {
        s1.push_back(landmark_mouth_signal(e.result.landmarks[i].image, roi));
        e1.push_back(e.audio.envelope[e.plan.generated_begin() + i]);
      }
      mean_r += metrics::pearson(s1, e1).r;
      sig.insert(sig.end(), s1.begin(), s1.end());
      env.insert(env.end(), e1.begin(), e1.end());
    }
    mean_r /= std::max<std::size_t>(1, edits.size());
    const auto r = metrics::pearson(sig, env);
    g_measured["stage1_sync_r_pooled"] = r.r;
    g_measured["stage1_sync_r_mean_per_edit"] = mean_r;
    d = "pooled r " + fmt(r.r, 3) + " over " + std::to_string(edits.size()) + " edits, " +
        std::to_string(sig.size()) + " frames (mean per-edit r " + fmt(mean_r, 3) + ")";
    return edits.size() >= 8 && !r.degenerate && r.r >= 0.7;
  });

  criterion("C5", "warp near-identity: PSNR >= 25 dB, mean flow <= 0.02", [&](std::string& d) {
    if (!need_models(d)) return false;
    std::vector<Tensor> src, ldm;
    for (const auto& c : test) {
      const auto layout = KeypointLayout::for_count(c.landmarks.k);
      for (std::size_t i = 0; i < c.video.size(); i += 25) {
        src.push_back(c.video.frames[i]);
        ldm.push_back(rasterize(c.landmarks.keypoints[i], layout, models->warp.resolution()).image);
      }
    }
    const Tensor x = concat_batch(src), l = concat_batch(ldm);
    const Tensor code = models->warp.motion_encode(l, l);
    const Tensor flow = models->warp.estimate_flow(code, x);
    const Tensor y = apply_flow(x, flow);
    const Shape fs = flow.shape();
    double norm = 0;
    for (int n = 0; n < fs.n; ++n)
      for (std::size_t p = 0; p < fs.plane(); ++p) {
        const double fx = flow.plane(n, 0)[p], fy = flow.plane(n, 1)[p];
        norm += std::sqrt(fx * fx + fy * fy);
      }
    norm /= double(fs.n) * fs.plane();
    const double p = metrics::psnr(y, x);
    g_measured["warp_identity_psnr"] = p;
    g_measured["warp_identity_mean_flow"] = norm;
    d = "PSNR " + fmt(p, 2) + " dB, mean flow norm " + fmt(norm, 5) + " over " +
        std::to_string(fs.n) + " held-out frames";
    return p >= 25.0 && norm <= 0.02;
  });

  criterion("C6", "stitching law over 20 random mixed edits", [&](std::string& d) {
    if (!need_models(d)) return false;
    Rng rng(606);
    EditOptions opt;
    opt.ddim_steps = cfg.ddim_steps;
    int bad = 0, counts[3] = {0, 0, 0};
    for (int k = 0; k < 20; ++k) {
      const auto& c = test[rng.integer(0, static_cast<int>(test.size()) - 1)];
      const int n = static_cast<int>(c.video.size());
      const int op = k % 3;  // insert, delete, substitute in turn
      const int start = rng.integer(1, n - 20);
      EditSpec spec;
      if (op == 0) spec = {EditOp::Insert, start, start, rng.integer(1, 6), std::uint64_t(k)};
      else if (op == 1) spec = {EditOp::Delete, start, start + rng.integer(0, 10), 0, std::uint64_t(k)};
      else spec = {EditOp::Substitute, start, start + rng.integer(0, 10), rng.integer(1, 6), std::uint64_t(k)};
      ++counts[op];
      const auto [audio, plan] = edit_audio(c.audio, spec);
      opt.seed = spec.seed;
      const auto r = run_edit(c.video, c.landmarks, audio, plan, *models,
                              KeypointLayout::for_count(c.landmarks.k), opt);
      // independent bookkeeping, not the plan's own index map
      const int removed = op == 0 ? 0 : spec.end - spec.start + 1;
      const int bs = op == 1 ? 0 : spec.new_len;
      const int gen_begin = op == 0 ? spec.start + 1 : spec.start;
      const int want_len = n - removed + bs;
      if (static_cast<int>(r.video.size()) != want_len) {
        ++bad;
        continue;
      }
      for (int o = 0; o < want_len; ++o) {
        if (o >= gen_begin && o < gen_begin + bs) continue;
        const int orig = o < gen_begin ? o : o - bs + removed;
        if (!bit_equal(r.video.frames[o], c.video.frames[orig])) {
          ++bad;
          break;
        }
      }
    }
    d = std::to_string(20 - bad) + "/20 edits exact (" + std::to_string(counts[0]) + " insert, " +
        std::to_string(counts[1]) + " delete, " + std::to_string(counts[2]) + " substitute)";
    return bad == 0;
  });

  criterion("C7", "refined >= coarse + 1 dB, landmark-only strictly lowest", [&](std::string& d) {
    if (!need_models(d)) return false;
    std::vector<Tensor> coarse, refined, ldm_only, truth;
    for (const auto& e : edits) {
      const auto g = generated_truth(e);
      truth.insert(truth.end(), g.begin(), g.end());
      coarse.insert(coarse.end(), e.result.coarse.begin(), e.result.coarse.end());
      refined.insert(refined.end(), e.result.refined.begin(), e.result.refined.end());
      ldm_only.insert(ldm_only.end(), e.landmark_only.begin(), e.landmark_only.end());
    }
    const double pc = metrics::psnr(coarse, truth), pr = metrics::psnr(refined, truth),
                 pl = metrics::psnr(ldm_only, truth);
    g_measured["psnr_coarse"] = pc;
    g_measured["psnr_refined"] = pr;
    g_measured["psnr_landmark_only"] = pl;
    d = "refined " + fmt(pr, 2) + " dB, coarse " + fmt(pc, 2) + " dB, landmark-only " + fmt(pl, 2) +
        " dB over " + std::to_string(truth.size()) + " generated frames";
    return pr >= pc + 1.0 && pl < pc && pl < pr;
  });

  criterion("C8", "F-SSIM edited >= 0.9 x ground truth", [&](std::string& d) {
    if (!need_models(d)) return false;
    double fe = 0, fg = 0;
    for (const auto& e : edits) {
      fe += metrics::f_ssim(e.result.video.frames, e.plan);
      fg += metrics::f_ssim(e.truth.video.frames, e.plan);
    }
    fe /= edits.size();
    fg /= edits.size();
    g_measured["f_ssim_edited"] = fe;
    g_measured["f_ssim_truth"] = fg;
    d = "edited " + fmt(fe, 4) + " vs truth " + fmt(fg, 4) + " (ratio " + fmt(fe / fg, 4) + ")";
    return fe >= 0.9 * fg;
  });

  criterion("C9", "two seeded CLI pipeline runs give identical reports", [&](std::string& d) {
    const auto a = pipeline_once(work / "repeat_a");
    const auto b = pipeline_once(work / "repeat_b");
    d = "psnr " + fmt(a.value("psnr", 0.0), 6) + " / " + fmt(b.value("psnr", 0.0), 6) +
        ", sync " + fmt(a.value("sync_r", 0.0), 6) + " / " + fmt(b.value("sync_r", 0.0), 6);
    d += a == b ? ", all report values equal" : ", reports differ";
    return a == b;
  });

  const double total = seconds_since(t_start);
  g_measured["total_seconds"] = total;
  io::write_json(work / "acceptance.json", g_measured);

  std::cout << "\n";
  int failed = 0;
  for (const auto& o : g_outcomes) {
    std::cout << o.id << " " << (o.pass ? "PASS" : "FAIL") << "  " << o.title << "  (" << o.detail << ")\n";
    failed += !o.pass;
  }
  std::cout << "total " << fmt(total / 60.0, 1) << " min, " << failed << " failed" << std::endl;
  return failed ? 1 : 0;
}
