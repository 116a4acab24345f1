#include "cascade/cli.hpp"

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "cascade/checkpoint.hpp"
#include "cascade/edit_pipeline.hpp"
#include "cascade/errors.hpp"
#include "cascade/io.hpp"
#include "cascade/ipiw.hpp"
#include "cascade/latent_ae.hpp"
#include "cascade/metrics.hpp"
#include "cascade/motion_diffusion.hpp"
#include "cascade/refine_diffusion.hpp"

namespace fs = std::filesystem;

namespace cascade::cli {

namespace {

ProgressFn progress_printer(std::ostream* os, const std::string& stage) {
  if (!os) return {};
  // Trainers only report on logging steps.
  return [os, stage](int step, int total, double loss) {
    *os << stage << " step " << step << "/" << total << " loss " << loss << "\n";
    os->flush();
  };
}

void write_snapshot(const fs::path& path, const RunConfig& cfg) {
  io::write_json(path, to_json(cfg));
}

}  // namespace

DatasetOptions dataset_options(const RunConfig& cfg) {
  DatasetOptions o;
  o.n_identities = cfg.n_identities;
  o.clips_per_identity = cfg.clips_per_identity;
  o.frames_per_clip = cfg.frames_per_clip;
  if (cfg.split_ratios.size() != 3) throw std::invalid_argument("split_ratios needs 3 values");
  o.ratios = {cfg.split_ratios[0], cfg.split_ratios[1], cfg.split_ratios[2]};
  o.resolution = {cfg.resolution, cfg.resolution};
  o.k = cfg.K;
  o.feature_dim = cfg.D;
  o.seed = cfg.data_seed;
  return o;
}

DatasetManifest cmd_gen_data(const RunConfig& cfg) {
  validate(cfg);
  auto m = make_dataset(dataset_options(cfg), cfg.data_dir);
  write_snapshot(fs::path(cfg.data_dir) / "config.json", cfg);
  return m;
}

fs::path cmd_train(const std::string& stage, const RunConfig& cfg, const std::string& variant,
                   std::ostream* progress) {
  validate(cfg);
  const fs::path dir = cfg.ckpt_dir;
  // Dependencies first so a missing one fails before any data is loaded.
  if (stage != "ae" && stage != "stage1" && stage != "warp" && stage != "stage2")
    throw std::invalid_argument("unknown stage: " + stage);
  std::vector<std::string> needs;
  if (stage == "stage1" || stage == "stage2") needs.push_back("ae");
  if (stage == "stage2") needs.push_back("warp");
  std::string missing;
  for (const auto& n : needs)
    if (!fs::exists(checkpoint_path(dir, n))) missing += (missing.empty() ? "" : ", ") + n;
  if (!missing.empty())
    throw DependencyError(missing, "training " + stage + " needs checkpoint(s) missing from " +
                                       dir.string() + ": " + missing);
  std::optional<AutoEncoder> ae;
  std::optional<WarpModel> warp;
  if (!needs.empty()) ae.emplace(require_checkpoint(dir, "ae"));
  if (stage == "stage2") warp.emplace(require_checkpoint(dir, "warp"));

  const auto manifest = load_manifest(cfg.data_dir);
  io::ensure_dir(dir);
  TrainLog log;
  auto report = progress_printer(progress, stage);
  std::string name = stage;
  Checkpoint ckpt;
  if (stage == "ae") {
    ckpt = train_ae(manifest, cfg, &log, report).to_checkpoint();
  } else if (stage == "stage1") {
    ckpt = train_stage1(manifest, *ae, cfg, &log, report).to_checkpoint();
  } else if (stage == "warp") {
    ckpt = train_warp(manifest, cfg, &log, report).to_checkpoint();
  } else {
    const RefineVariant v = parse_refine_variant(variant);
    if (v != RefineVariant::Full) name = "stage2_" + to_string(v);
    ckpt = train_stage2(manifest, *ae, *warp, cfg, v, &log, report).to_checkpoint();
  }
  const fs::path path = checkpoint_path(dir, name);
  save_checkpoint(path, ckpt);
  log.write_csv(dir / (name + ".loss.csv"));
  write_snapshot(dir / (name + ".config.json"), cfg);
  return path;
}

std::uint64_t env_seed(std::uint64_t fallback) {
  const char* s = std::getenv("CASCADE_EDIT_SEED");
  if (!s || !*s) return fallback;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string("CASCADE_EDIT_SEED is not an integer: ") + s);
  }
}

fs::path cmd_edit(const RunConfig& cfg, const EditRequest& req) {
  validate(cfg);
  const auto models = load_pipeline(req.ckpt_dir);
  const auto clip = read_clip(req.clip);
  if (clip.landmarks.size() != clip.video.size() || clip.audio.size() != clip.video.size())
    throw std::invalid_argument("clip frames, keypoints and features are misaligned");
  const auto [audio, plan] = edit_audio(clip.audio, req.spec);
  const auto layout = KeypointLayout::for_count(clip.landmarks.k);
  EditOptions opt;
  opt.ddim_steps = cfg.ddim_steps;
  opt.audio_context = cfg.audio_context;
  opt.seed = req.spec.seed;
  const auto result = run_edit(clip.video, clip.landmarks, audio, plan, models, layout, opt);
  write_edit(req.out, clip, result, audio, plan, {{"seed", req.spec.seed}});
  write_snapshot(req.out / "config.json", cfg);
  if (req.reference_out) {
    const auto gt = render_edit_ground_truth(clip, audio, plan, layout);
    write_clip(*req.reference_out, gt);
    io::write_json(*req.reference_out / "edit_plan.json", to_json(plan));
  }
  return req.out;
}

fs::path cmd_eval(const RunConfig& cfg, const fs::path& edited, const fs::path& reference,
                  const fs::path& ckpt_dir, const fs::path& out) {
  const AutoEncoder ae(require_checkpoint(ckpt_dir, "ae"));
  const auto e = read_clip(edited);
  const auto r = read_clip(reference);
  const auto plan = edit_plan_from_json(io::read_json(edited / "edit_plan.json"));
  if (e.video.size() != r.video.size())
    throw std::invalid_argument("edited and reference lengths differ: " +
                                std::to_string(e.video.size()) + " vs " +
                                std::to_string(r.video.size()));
  if (static_cast<int>(e.video.size()) != plan.output_length)
    throw std::invalid_argument("edited clip length does not match its edit plan");
  if (e.audio.size() != e.video.size())
    throw std::invalid_argument("edited clip audio is misaligned with its frames");
  auto report = metrics::evaluate(e.video.frames, r.video.frames, plan, e.audio.envelope, ae,
                                  identity_mouth_roi(r.identity));
  report.config["run"] = to_json(cfg);
  io::ensure_dir(out);
  const fs::path path = out / "report.json";
  io::write_json(path, metrics::to_json(report));
  io::write_text(out / "report.txt", metrics::format_table(report));
  write_snapshot(out / "config.json", cfg);
  return path;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cascaded diffusion talking-head editor (desk scale)", "cascade"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  std::string config_path;
  std::vector<std::string> sets;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--set", sets, "Override a config key, e.g. --set stage1.steps=200")
        ->take_all();
  };

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
  add_common(gen);
  std::optional<double> split_percent;
  std::string gen_out;
  gen->add_option("--split", split_percent, "Train+val share in percent (50, 25, 12.5)")
      ->check(CLI::Range(0.0, 100.0));
  gen->add_option("--out", gen_out, "Dataset directory (default: config data_dir)");

  auto* train = app.add_subcommand("train", "Train one stage");
  add_common(train);
  std::string stage;
  std::string variant = "full";
  std::string train_ckpt;
  train->add_option("--stage", stage, "ae, stage1, warp or stage2")
      ->required()
      ->check(CLI::IsMember({"ae", "stage1", "warp", "stage2"}));
  train->add_option("--variant", variant, "Stage 2 conditioning: full, landmark_only, zeroed_cv")
      ->check(CLI::IsMember({"full", "landmark_only", "zeroed_cv"}));
  train->add_option("--ckpt-dir", train_ckpt, "Checkpoint directory (default: config ckpt_dir)");
  std::string train_data;
  train->add_option("--data", train_data, "Dataset directory (default: config data_dir)");

  auto* edit = app.add_subcommand("edit", "Edit one clip");
  add_common(edit);
  EditRequest req;
  std::string op = "substitute";
  std::optional<std::uint64_t> seed;
  std::string reference_out;
  edit->add_option("--clip", req.clip, "Clip directory")->required()->check(CLI::ExistingDirectory);
  edit->add_option("--ckpt-dir", req.ckpt_dir, "Directory with all four checkpoints")->required();
  edit->add_option("--out", req.out, "Output clip directory")->required();
  edit->add_option("--op", op, "insert, delete or substitute")
      ->check(CLI::IsMember({"insert", "delete", "substitute"}));
  edit->add_option("--start", req.spec.start, "First edited frame")->required();
  edit->add_option("--end", req.spec.end, "Last edited frame (= start for insert)")->required();
  edit->add_option("--new-len", req.spec.new_len, "Replacement length (0 for delete)");
  edit->add_option("--seed", seed, "Edit seed (default: CASCADE_EDIT_SEED, else 0)");
  edit->add_option("--reference-out", reference_out,
                   "Also write the synthetic ground truth of the edit here");

  auto* eval = app.add_subcommand("eval", "Score an edited clip against a reference");
  add_common(eval);
  std::string edited, reference, eval_ckpt, eval_out;
  eval->add_option("--edited", edited, "Edited clip directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--reference", reference, "Reference clip directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval->add_option("--ckpt-dir", eval_ckpt, "Checkpoint directory holding ae.ckpt")->required();
  eval->add_option("--out", eval_out, "Report directory")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << "error: " << e.what() << "\n" << sub->help();
    return kUsage;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    cfg = apply_overrides(cfg, sets);
    if (gen->parsed()) {
      if (split_percent) {
        const auto r = split_ratios_for_percent(*split_percent);
        cfg.split_ratios = {r.train, r.val, r.test};
      }
      if (!gen_out.empty()) cfg.data_dir = gen_out;
      const auto m = cmd_gen_data(cfg);
      out << (m.root / "manifest.json").string() << "\n";
    } else if (train->parsed()) {
      if (!train_ckpt.empty()) cfg.ckpt_dir = train_ckpt;
      if (!train_data.empty()) cfg.data_dir = train_data;
      out << cmd_train(stage, cfg, variant, &err).string() << "\n";
    } else if (edit->parsed()) {
      req.spec.op = parse_edit_op(op);
      req.spec.seed = seed ? *seed : env_seed(0);
      if (!reference_out.empty()) req.reference_out = reference_out;
      out << cmd_edit(cfg, req).string() << "\n";
    } else if (eval->parsed()) {
      const auto path = cmd_eval(cfg, edited, reference, eval_ckpt, eval_out);
      out << path.string() << "\n" << metrics::format_table(metrics::report_from_json(io::read_json(path)));
    }
    return kOk;
  } catch (const DependencyError& e) {
    err << "dependency error (" << e.stage() << "): " << e.what() << "\n";
    return kDependency;
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << "\n";
    return kDivergence;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace cascade::cli
