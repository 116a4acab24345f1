#include "cascade/motion_diffusion.hpp"

#include <algorithm>
#include <stdexcept>

namespace cascade {

std::pair<double, double> interp_weights(int i, int bs) {
  if (bs < 1 || i < 1 || i > bs) {
    throw std::invalid_argument("interp_weights: need 1 <= i <= bs");
  }
  return {static_cast<double>(bs - i) / bs, static_cast<double>(i) / bs};
}

AudioWindow audio_window(const AudioFeatureSequence& audio, int center, int context) {
  const int n = static_cast<int>(audio.size());
  if (n == 0) throw std::invalid_argument("audio_window: empty audio");
  if (center < 0 || center >= n) throw std::invalid_argument("audio_window: center out of range");
  const int len = 2 * context + 1;
  AudioWindow w{Tensor({1, len, audio.dim, 1})};
  for (int k = 0; k < len; ++k) {
    const auto f = audio.frame(std::clamp(center - context + k, 0, n - 1));
    std::copy(f.begin(), f.end(), w.tokens.data() + static_cast<std::size_t>(k) * audio.dim);
  }
  return w;
}

ConditionPack build_condition(const Tensor& start, const Tensor& end, const AudioWindow& window,
                              int i, int bs) {
  const Shape s = start.shape();
  if (s != end.shape() || s.n != 1 || s.c != 3) {
    throw std::invalid_argument("build_condition: anchors must both be {1,3,H,W}");
  }
  const auto [ws, we] = interp_weights(i, bs);
  Tensor img({1, 9, s.h, s.w});
  const std::size_t plane3 = 3 * s.plane();
  float* blend = img.data();
  for (std::size_t k = 0; k < plane3; ++k) {
    blend[k] = static_cast<float>(ws * start[k] + we * end[k]);
  }
  std::copy(start.vec().begin(), start.vec().end(), img.data() + plane3);
  std::copy(end.vec().begin(), end.vec().end(), img.data() + 2 * plane3);
  return {std::move(img), window.tokens};
}

ConditionPack build_condition(const AnchorPair& anchors, const AudioWindow& window, int i, int bs) {
  if (anchors.start_index >= anchors.end_index) {
    throw std::invalid_argument("build_condition: start anchor must precede end anchor");
  }
  return build_condition(anchors.start_ldm.image, anchors.end_ldm.image, window, i, bs);
}

Tensor encode_condition(const AutoEncoder& ae, const Tensor& image_condition) {
  const Shape s = image_condition.shape();
  if (s.c % 3) throw std::invalid_argument("encode_condition: channels must be a multiple of 3");
  const int groups = s.c / 3;
  // Regroup {N, 3g, H, W} into {N*g, 3, H, W}; the memory layout already matches.
  const Tensor z = ae.encode(image_condition.reshaped({s.n * groups, 3, s.h, s.w}));
  const Shape zs = z.shape();
  return z.reshaped({s.n, s.c, zs.h, zs.w});
}

Tensor first_group(const Tensor& latents) {
  const Shape s = latents.shape();
  if (s.c < 3) throw std::invalid_argument("first_group: need at least 3 channels");
  Tensor out({s.n, 3, s.h, s.w});
  for (int n = 0; n < s.n; ++n) std::copy_n(latents.plane(n, 0), 3 * s.plane(), out.plane(n, 0));
  return out;
}

DenoiserSpec stage1_spec(const RunConfig& cfg) {
  DenoiserSpec sp;
  sp.h = sp.w = cfg.resolution / cfg.f;
  sp.base = cfg.stage1.base;
  sp.cond_channels = 9;
  sp.context_len = 2 * cfg.audio_context + 1;
  sp.context_dim = cfg.D;
  return sp;
}

std::vector<LandmarkClipCache> cache_landmarks(const std::vector<SyntheticClip>& clips,
                                               const AutoEncoder& ae, const KeypointLayout& layout) {
  std::vector<LandmarkClipCache> out;
  for (const auto& c : clips) {
    LandmarkClipCache cache;
    cache.clip = &c;
    const Shape fs = c.video.frames.at(0).shape();
    for (const auto& kp : c.landmarks.keypoints) {
      cache.ldm.push_back(rasterize(kp, layout, {fs.h, fs.w}).image);
    }
    cache.latents = ae.encode(concat_batch(cache.ldm));
    out.push_back(std::move(cache));
  }
  return out;
}

IntervalSample sample_interval(const std::vector<int>& clip_lengths, int min_bs, int max_bs,
                               Rng& rng) {
  IntervalSample s;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    s.clip = rng.integer(0, static_cast<int>(clip_lengths.size()) - 1);
    const int n = clip_lengths[s.clip];
    const int hi = std::min(max_bs, n - 2);
    if (hi < min_bs) continue;
    s.bs = rng.integer(min_bs, hi);
    s.anchor_before = rng.integer(0, n - 2 - s.bs);
    s.i = rng.integer(1, s.bs);
    return s;
  }
  throw std::invalid_argument("sample_interval: clips are too short for the interval range");
}

namespace {

DiffusionBatch stage1_batch(const std::vector<LandmarkClipCache>& caches, const AutoEncoder& ae,
                            const RunConfig& cfg, int batch, Rng& rng) {
  std::vector<int> lengths;
  for (const auto& c : caches) lengths.push_back(static_cast<int>(c.ldm.size()));
  std::vector<Tensor> z0, blends, starts, ends, audio;
  for (int b = 0; b < batch; ++b) {
    const IntervalSample s = sample_interval(lengths, cfg.stage1.min_bs, cfg.stage1.max_bs, rng);
    const auto& c = caches[s.clip];
    const int a = s.anchor_before, e = s.anchor_before + s.bs + 1, t = a + s.i;
    const ConditionPack cp = build_condition(c.ldm[a], c.ldm[e],
                                             audio_window(c.clip->audio, t, cfg.audio_context), s.i, s.bs);
    blends.push_back(slice_batch(cp.image.reshaped({3, 3, cp.image.shape().h, cp.image.shape().w}), 0, 1));
    starts.push_back(slice_batch(c.latents, a, a + 1));
    ends.push_back(slice_batch(c.latents, e, e + 1));
    z0.push_back(slice_batch(c.latents, t, t + 1));
    audio.push_back(cp.audio);
  }
  const Tensor zb = ae.encode(concat_batch(blends));
  const Shape ls = zb.shape();
  Tensor cond({batch, 9, ls.h, ls.w});
  const std::size_t p3 = 3 * ls.plane();
  for (int b = 0; b < batch; ++b) {
    float* dst = cond.plane(b, 0);
    std::copy_n(zb.plane(b, 0), p3, dst);
    std::copy_n(starts[b].data(), p3, dst + p3);
    std::copy_n(ends[b].data(), p3, dst + 2 * p3);
  }
  return {concat_batch(z0), {std::move(cond), concat_batch(audio)}};
}

}  // namespace

DiffusionModel train_stage1(const std::vector<SyntheticClip>& train,
                            const std::vector<SyntheticClip>& heldout, const AutoEncoder& ae,
                            const RunConfig& cfg, TrainLog* log, const ProgressFn& progress) {
  if (train.empty()) throw std::invalid_argument("train_stage1: no training clips");
  const KeypointLayout layout = KeypointLayout::for_count(cfg.K);
  const auto caches = cache_landmarks(train, ae, layout);
  DiffusionModel model("stage1", stage1_spec(cfg), make_schedule(cfg.T, cfg.beta_start, cfg.beta_end),
                       cfg.stage1.seed);
  DiffusionBatch held;
  if (!heldout.empty()) {
    const auto held_caches = cache_landmarks(heldout, ae, layout);
    Rng hr(Rng::mix(cfg.stage1.seed) ^ 0x4e1dULL);
    held = stage1_batch(held_caches, ae, cfg, 64, hr);
  }
  train_diffusion(
      model, cfg.stage1, cfg.log_every,
      [&](Rng& rng) { return stage1_batch(caches, ae, cfg, cfg.stage1.batch, rng); },
      heldout.empty() ? nullptr : &held, log, progress);
  model.guidance = cfg.stage1.guidance;
  return model;
}

DiffusionModel train_stage1(const DatasetManifest& manifest, const AutoEncoder& ae,
                            const RunConfig& cfg, TrainLog* log, const ProgressFn& progress) {
  const auto train = load_split(manifest, "train");
  if (train.empty()) throw std::invalid_argument("train_stage1: train split is empty");
  auto held = load_split(manifest, "val");
  if (held.empty()) held = load_split(manifest, "test");
  return train_stage1(train, held, ae, cfg, log, progress);
}

std::vector<LandmarkImage> synth_landmark_interval(const AnchorPair& anchors,
                                                   const AudioFeatureSequence& audio, int bs,
                                                   const DiffusionModel& model,
                                                   const AutoEncoder& ae, int ddim_steps,
                                                   std::uint64_t seed, int context) {
  if (bs == 0) return {};
  if (bs < 0) throw std::invalid_argument("synth_landmark_interval: bs must be >= 0");
  if (anchors.end_index - anchors.start_index != bs + 1) {
    throw std::invalid_argument("synth_landmark_interval: anchors do not bracket bs frames");
  }
  if (anchors.end_index >= static_cast<int>(audio.size()) || anchors.start_index < 0) {
    throw std::invalid_argument("synth_landmark_interval: audio does not cover the interval");
  }
  std::vector<Tensor> conds, tokens;
  for (int i = 1; i <= bs; ++i) {
    ConditionPack cp = build_condition(anchors, audio_window(audio, anchors.start_index + i, context), i, bs);
    conds.push_back(std::move(cp.image));
    tokens.push_back(std::move(cp.audio));
  }
  const ConditionPack cond{encode_condition(ae, concat_batch(conds)), concat_batch(tokens)};
  // start from the noised anchor blend rather than pure noise
  const Tensor prior = first_group(cond.image);
  const Tensor z = model.sample(cond, ddim_steps, seed, &prior);
  const Tensor imgs = ae.decode(z);
  std::vector<LandmarkImage> out;
  for (int i = 0; i < bs; ++i) out.push_back({imgs.sample(i), anchors.start_ldm.source_k});
  return out;
}

}  // namespace cascade
