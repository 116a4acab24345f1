#include "cascade/edit_pipeline.hpp"

#include <stdexcept>

#include "cascade/errors.hpp"
#include "cascade/io.hpp"

namespace cascade {

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, const std::string& stage) {
  return dir / (stage + ".ckpt");
}

Checkpoint require_checkpoint(const std::filesystem::path& ckpt_dir, const std::string& stage) {
  const auto p = checkpoint_path(ckpt_dir, stage);
  if (!std::filesystem::exists(p)) {
    throw DependencyError(stage, "missing " + stage + " checkpoint: " + p.string());
  }
  return load_checkpoint(p);
}

PipelineModels load_pipeline(const std::filesystem::path& ckpt_dir) {
  PipelineModels m{AutoEncoder(require_checkpoint(ckpt_dir, "ae")),
                   DiffusionModel(require_checkpoint(ckpt_dir, "stage1"), "stage1"),
                   WarpModel(require_checkpoint(ckpt_dir, "warp")),
                   DiffusionModel(require_checkpoint(ckpt_dir, "stage2"), "stage2")};
  if (!(m.ae.resolution() == m.warp.resolution())) {
    throw std::invalid_argument("autoencoder and warp checkpoints disagree on resolution");
  }
  return m;
}

EditResult run_edit(const VideoClip& video, const LandmarkSequence& landmarks,
                    const AudioFeatureSequence& audio_edited, const EditPlan& plan,
                    const PipelineModels& models, const KeypointLayout& layout,
                    const EditOptions& opt) {
  if (static_cast<int>(video.size()) != plan.original_length ||
      landmarks.size() != video.size()) {
    throw std::invalid_argument("run_edit: clip does not match the edit plan");
  }
  if (static_cast<int>(audio_edited.size()) != plan.output_length) {
    throw std::invalid_argument("run_edit: edited audio does not match the edit plan");
  }
  const Shape fs = video.frames.at(0).shape();
  const Resolution res{fs.h, fs.w};
  if (!(models.ae.resolution() == res) || !(models.warp.resolution() == res)) {
    throw std::invalid_argument("run_edit: checkpoint resolution does not match the clip");
  }

  EditResult r;
  r.video.fps = video.fps;
  r.video.identity_id = video.identity_id;
  if (plan.bs > 0) {
    const int a = plan.anchor_before, e = plan.anchor_after;
    const Keypoints& kp_a = landmarks.keypoints[a];
    const Keypoints& kp_e = landmarks.keypoints[e];
    const AnchorPair anchors{rasterize(kp_a, layout, res), rasterize(kp_e, layout, res),
                             plan.anchor_before_output(), plan.anchor_after_output()};
    r.landmarks = synth_landmark_interval(anchors, audio_edited, plan.bs, models.stage1, models.ae,
                                          opt.ddim_steps, Rng::mix(opt.seed) ^ 0x57a9e1ULL,
                                          opt.audio_context);
    const auto mid = interpolate_frames(video.frames[a], video.frames[e], plan.bs, &kp_a, &kp_e);
    std::vector<Tensor> interp_ldms, target_ldms;
    for (const auto& kp : mid.keypoints) interp_ldms.push_back(rasterize(kp, layout, res).image);
    for (const auto& l : r.landmarks) target_ldms.push_back(l.image);
    r.coarse = warp_interval(mid.frames, interp_ldms, target_ldms, models.warp);
    const bool landmark_only = variant_of(models.stage2) == RefineVariant::LandmarkOnly;
    r.refined = refine_interval(landmark_only ? target_ldms : r.coarse, audio_edited,
                                plan.generated_begin(), models.stage2, models.ae, opt.ddim_steps,
                                Rng::mix(opt.seed) ^ 0x57a9e2ULL, opt.audio_context);
  }
  r.video.frames.resize(plan.output_length);
  for (const auto& [orig, o] : plan.output_index_map) r.video.frames[o] = video.frames[orig];
  for (int k = 0; k < plan.bs; ++k) r.video.frames[plan.generated_begin() + k] = r.refined[k];
  return r;
}

void write_edit(const std::filesystem::path& dir, const SyntheticClip& source, const EditResult& r,
                const AudioFeatureSequence& audio_edited, const EditPlan& plan,
                const nlohmann::json& extra) {
  SyntheticClip out;
  out.identity = source.identity;
  out.video = r.video;
  out.audio = audio_edited;
  out.times.assign(plan.output_length, 0.0);
  for (const auto& [orig, o] : plan.output_index_map) out.times[o] = source.times.at(orig);
  const double t0 = source.times.at(plan.anchor_before), t1 = source.times.at(plan.anchor_after);
  for (int j = 1; j <= plan.bs; ++j) {
    out.times[plan.generated_begin() + j - 1] = t0 + (t1 - t0) * j / (plan.bs + 1.0);
  }
  write_clip(dir, out, extra);
  nlohmann::json pj = to_json(plan);
  for (const auto& [k, v] : extra.items()) pj[k] = v;
  io::write_json(dir / "edit_plan.json", pj);
}

}  // namespace cascade
