#include "cascade/refine_diffusion.hpp"

#include <stdexcept>

namespace cascade {

Tensor temporal_fuse(const Tensor& c_p, const Tensor& c_n, const Tensor& c_f) {
  const Shape s = c_n.shape();
  if (c_p.shape() != s || c_f.shape() != s || s.n != 1 || s.c != 3) {
    throw std::invalid_argument("temporal_fuse: inputs must share one {1,3,h,w} shape");
  }
  Tensor out({1, 9, s.h, s.w});
  const std::size_t p3 = c_n.size();
  float* o = out.data();
  for (std::size_t k = 0; k < p3; ++k) {
    o[k] = (c_p[k] + c_n[k]) * 0.5f;
    o[p3 + k] = c_n[k];
    o[2 * p3 + k] = (c_f[k] + c_n[k]) * 0.5f;
  }
  return out;
}

std::string to_string(RefineVariant v) {
  switch (v) {
    case RefineVariant::Full: return "full";
    case RefineVariant::LandmarkOnly: return "landmark_only";
    case RefineVariant::ZeroedCV: return "zeroed_cv";
  }
  return "?";
}

RefineVariant parse_refine_variant(const std::string& s) {
  if (s == "full") return RefineVariant::Full;
  if (s == "landmark_only") return RefineVariant::LandmarkOnly;
  if (s == "zeroed_cv") return RefineVariant::ZeroedCV;
  throw std::invalid_argument("unknown refine variant " + s);
}

DenoiserSpec stage2_spec(const RunConfig& cfg) {
  DenoiserSpec sp;
  sp.h = sp.w = cfg.resolution / cfg.f;
  sp.base = cfg.stage2.base;
  sp.cond_channels = 12;
  sp.context_len = 2 * cfg.audio_context + 1;
  sp.context_dim = cfg.D;
  return sp;
}

Tensor stage2_condition(const Tensor& latents) {
  const Shape s = latents.shape();
  const int n = s.n;
  Tensor out({n, 12, s.h, s.w});
  const std::size_t p3 = 3 * s.plane();
  for (int k = 0; k < n; ++k) {
    const Tensor cur = latents.sample(k);
    const Tensor fused = temporal_fuse(k > 0 ? latents.sample(k - 1) : cur, cur,
                                       k + 1 < n ? latents.sample(k + 1) : cur);
    float* dst = out.plane(k, 0);
    std::copy_n(cur.data(), p3, dst);
    std::copy_n(fused.data(), 3 * p3, dst + p3);
  }
  return out;
}

std::vector<Tensor> coarse_interval(const SyntheticClip& clip, int anchor_before, int bs,
                                    const std::vector<Tensor>& target_ldms, const WarpModel& warp,
                                    const KeypointLayout& layout) {
  const int a = anchor_before, e = anchor_before + bs + 1;
  const auto mid = interpolate_frames(clip.video.frames.at(a), clip.video.frames.at(e), bs,
                                      &clip.landmarks.keypoints.at(a), &clip.landmarks.keypoints.at(e));
  const Resolution res = warp.resolution();
  std::vector<Tensor> interp_ldms;
  for (const auto& kp : mid.keypoints) interp_ldms.push_back(rasterize(kp, layout, res).image);
  return warp_interval(mid.frames, interp_ldms, target_ldms, warp);
}

namespace {

struct Stage2Interval {
  int clip = 0;
  int anchor_before = 0;
  int bs = 0;
  Tensor cond;  // {bs, 12, h, w}
};

struct Stage2Data {
  std::vector<Tensor> gt_latents;  // per clip {n,3,h,w}
  std::vector<Stage2Interval> intervals;
};

// Precomputes, for random intervals, the conditioning latents of every
// frame: coarse warps toward ground-truth landmarks, or landmark latents.
Stage2Data build_stage2_data(const std::vector<SyntheticClip>& clips, const AutoEncoder& ae,
                             const WarpModel& warp, const RunConfig& cfg, RefineVariant variant,
                             int n_intervals, std::uint64_t seed) {
  const KeypointLayout layout = KeypointLayout::for_count(cfg.K);
  const auto ldm_cache = cache_landmarks(clips, ae, layout);
  Stage2Data d;
  std::vector<int> lengths;
  for (const auto& c : clips) {
    d.gt_latents.push_back(ae.encode(concat_batch(c.video.frames)));
    lengths.push_back(static_cast<int>(c.video.size()));
  }
  Rng rng(seed);
  Rng jitter_rng(Rng::mix(seed) ^ 0x7177e5ULL);
  const double j = cfg.stage2.mouth_jitter;
  for (int k = 0; k < n_intervals; ++k) {
    const IntervalSample s = sample_interval(lengths, cfg.stage2.min_bs, cfg.stage2.max_bs, rng);
    Stage2Interval iv{s.clip, s.anchor_before, s.bs, {}};
    const auto& cache = ldm_cache[s.clip];
    const int first = s.anchor_before + 1;
    std::vector<Tensor> targets(cache.ldm.begin() + first, cache.ldm.begin() + first + s.bs);
    if (j > 0.0) {
      // Stage 1 mouths are imperfect at inference; train on imperfect ones too.
      const Shape fs = clips[s.clip].video.frames.at(0).shape();
      for (int i = 0; i < s.bs; ++i) {
        const double factor = jitter_rng.uniform(1.0 - j, 1.0 + j);
        targets[i] = rasterize(scale_mouth_opening(clips[s.clip].landmarks.keypoints[first + i], layout, factor),
                               layout, {fs.h, fs.w}).image;
      }
    }
    Tensor lat;
    if (variant == RefineVariant::Full) {
      lat = ae.encode(concat_batch(coarse_interval(clips[s.clip], s.anchor_before, s.bs, targets, warp, layout)));
    } else if (j > 0.0) {
      lat = ae.encode(concat_batch(targets));
    } else {
      lat = slice_batch(cache.latents, first, first + s.bs);
    }
    iv.cond = stage2_condition(lat);
    if (variant == RefineVariant::ZeroedCV) iv.cond.zero();
    d.intervals.push_back(std::move(iv));
  }
  return d;
}

DiffusionBatch stage2_batch(const Stage2Data& d, const std::vector<SyntheticClip>& clips,
                            const RunConfig& cfg, int batch, Rng& rng) {
  std::vector<Tensor> z0, cond, audio;
  for (int b = 0; b < batch; ++b) {
    const auto& iv = d.intervals[rng.integer(0, static_cast<int>(d.intervals.size()) - 1)];
    const int i = rng.integer(0, iv.bs - 1);
    const int t = iv.anchor_before + 1 + i;
    z0.push_back(slice_batch(d.gt_latents[iv.clip], t, t + 1));
    cond.push_back(slice_batch(iv.cond, i, i + 1));
    audio.push_back(audio_window(clips[iv.clip].audio, t, cfg.audio_context).tokens);
  }
  return {concat_batch(z0), {concat_batch(cond), concat_batch(audio)}};
}

}  // namespace

DiffusionModel train_stage2(const std::vector<SyntheticClip>& train,
                            const std::vector<SyntheticClip>& heldout, const AutoEncoder& ae,
                            const WarpModel& warp, const RunConfig& cfg, RefineVariant variant,
                            TrainLog* log, const ProgressFn& progress) {
  if (train.empty()) throw std::invalid_argument("train_stage2: no training clips");
  const std::uint64_t seed = cfg.stage2.seed;
  const int n_intervals = std::max(32, 24 * static_cast<int>(train.size()));
  const Stage2Data data = build_stage2_data(train, ae, warp, cfg, variant, n_intervals, Rng::mix(seed) ^ 0x1);
  DiffusionModel model("stage2", stage2_spec(cfg), make_schedule(cfg.T, cfg.beta_start, cfg.beta_end), seed);
  DiffusionBatch held;
  if (!heldout.empty()) {
    const Stage2Data hd = build_stage2_data(heldout, ae, warp, cfg, variant, 16, Rng::mix(seed) ^ 0x2);
    Rng hr(Rng::mix(seed) ^ 0x3);
    held = stage2_batch(hd, heldout, cfg, 64, hr);
  }
  train_diffusion(
      model, cfg.stage2, cfg.log_every,
      [&](Rng& rng) { return stage2_batch(data, train, cfg, cfg.stage2.batch, rng); },
      heldout.empty() ? nullptr : &held, log, progress);
  model.variant = to_string(variant);
  model.guidance = cfg.stage2.guidance;
  return model;
}

DiffusionModel train_stage2(const DatasetManifest& manifest, const AutoEncoder& ae,
                            const WarpModel& warp, const RunConfig& cfg, RefineVariant variant,
                            TrainLog* log, const ProgressFn& progress) {
  const auto train = load_split(manifest, "train");
  if (train.empty()) throw std::invalid_argument("train_stage2: train split is empty");
  auto held = load_split(manifest, "val");
  if (held.empty()) held = load_split(manifest, "test");
  return train_stage2(train, held, ae, warp, cfg, variant, log, progress);
}

RefineVariant variant_of(const DiffusionModel& model) {
  return parse_refine_variant(model.variant.empty() ? "full" : model.variant);
}

std::vector<Tensor> refine_interval(const std::vector<Tensor>& condition_frames,
                                    const AudioFeatureSequence& audio, int first_audio_index,
                                    const DiffusionModel& model, const AutoEncoder& ae,
                                    int ddim_steps, std::uint64_t seed, int context) {
  if (condition_frames.empty()) return {};
  const int n = static_cast<int>(condition_frames.size());
  Tensor cond = stage2_condition(ae.encode(concat_batch(condition_frames)));
  if (variant_of(model) == RefineVariant::ZeroedCV) cond.zero();
  std::vector<Tensor> tokens;
  for (int k = 0; k < n; ++k) tokens.push_back(audio_window(audio, first_audio_index + k, context).tokens);
  // coarse frames are a usable starting point; landmark latents are not
  const bool use_prior = variant_of(model) == RefineVariant::Full;
  const Tensor prior = use_prior ? first_group(cond) : Tensor();
  const Tensor z = model.sample({std::move(cond), concat_batch(tokens)}, ddim_steps, seed,
                                use_prior ? &prior : nullptr);
  const Tensor imgs = ae.decode(z);
  std::vector<Tensor> out;
  for (int k = 0; k < n; ++k) out.push_back(imgs.sample(k));
  return out;
}

}  // namespace cascade
