#include "cascade/ipiw.hpp"

#include <cmath>
#include <stdexcept>

#include "cascade/errors.hpp"
#include "cascade/kernels.hpp"

namespace cascade {

using nn::Var;

InterpolatedFrames interpolate_frames(const Tensor& frame_start, const Tensor& frame_end, int bs,
                                      const Keypoints* kp_start, const Keypoints* kp_end) {
  if (frame_start.shape() != frame_end.shape()) {
    throw std::invalid_argument("interpolate_frames: shape mismatch");
  }
  if (bs < 0) throw std::invalid_argument("interpolate_frames: bs must be >= 0");
  const bool with_kp = kp_start && kp_end;
  if (with_kp && kp_start->size() != kp_end->size()) {
    throw std::invalid_argument("interpolate_frames: keypoint count mismatch");
  }
  InterpolatedFrames out;
  for (int i = 1; i <= bs; ++i) {
    const double wt = static_cast<double>(i) / (bs + 1);
    const float we = static_cast<float>(wt), ws = static_cast<float>(1.0 - wt);
    Tensor f(frame_start.shape());
    for (std::size_t k = 0; k < f.size(); ++k) f[k] = ws * frame_start[k] + we * frame_end[k];
    out.frames.push_back(std::move(f));
    if (with_kp) {
      Keypoints kp(kp_start->size());
      for (std::size_t k = 0; k < kp.size(); ++k) {
        kp[k] = {ws * (*kp_start)[k].x + we * (*kp_end)[k].x, ws * (*kp_start)[k].y + we * (*kp_end)[k].y};
      }
      out.keypoints.push_back(std::move(kp));
    }
  }
  return out;
}

Tensor apply_flow(const Tensor& source, const Tensor& flow) {
  const Shape s = source.shape(), f = flow.shape();
  if (f.c != 2 || f.h != s.h || f.w != s.w || (s.n != f.n && s.n != 1)) {
    throw std::invalid_argument("apply_flow: flow " + f.str() + " incompatible with " + s.str());
  }
  return kernels::grid_sample(source, flow);
}

WarpModel::WarpModel(Resolution res, int width, int code_dim, std::uint64_t seed)
    : res_(res), width_(width), code_dim_(code_dim) {
  if (res.h % 8 || res.w % 8) throw std::invalid_argument("warp resolution must be divisible by 8");
  build(seed);
}

WarpModel::WarpModel(const Checkpoint& ckpt) {
  const auto& m = ckpt.meta;
  if (m.value("kind", "") != "warp") throw std::invalid_argument("checkpoint is not a warp model");
  res_ = {m.at("resolution").at(0), m.at("resolution").at(1)};
  width_ = m.at("width");
  code_dim_ = m.at("code_dim");
  build(0);
  restore(ps_, ckpt);
}

void WarpModel::build(std::uint64_t seed) {
  Rng rng(seed);
  const int w = width_;
  enc_convs_.emplace_back(ps_, "motion.conv0", 9, 16, 3, 2, rng);
  enc_convs_.emplace_back(ps_, "motion.conv1", 16, 32, 3, 2, rng);
  enc_convs_.emplace_back(ps_, "motion.conv2", 32, 32, 3, 2, rng);
  enc_convs_.emplace_back(ps_, "motion.conv3", 32, 16, 3, 1, rng);
  enc_fc_ = nn::Linear(ps_, "motion.fc", 16 * (res_.h / 8) * (res_.w / 8), code_dim_, rng);
  const int cin[5] = {12, w, w, w, w};
  const int stride[5] = {1, 2, 1, 1, 1};
  for (int b = 0; b < 5; ++b) {
    const std::string n = "flow.block" + std::to_string(b);
    AdaBlock blk;
    blk.conv = nn::Conv2d(ps_, n + ".conv", cin[b], w, 3, stride[b], rng);
    blk.scale = nn::Linear(ps_, n + ".ada_scale", code_dim_, w, rng, true);
    blk.shift = nn::Linear(ps_, n + ".ada_shift", code_dim_, w, rng, true);
    blocks_.push_back(std::move(blk));
  }
  flow_out_ = nn::Conv2d(ps_, "flow.out", w, 2, 3, 1, rng, true);
}

Var WarpModel::ada(const AdaBlock& b, const Var& x, const Var& code) const {
  Var h = nn::group_norm(b.conv(x), nn::default_groups(width_), nullptr, nullptr);
  return nn::silu(nn::modulate(h, b.scale(code), b.shift(code)));
}

Var WarpModel::motion_code(const Var& source_ldm, const Var& target_ldm) const {
  Var h = nn::concat_channels({source_ldm, target_ldm, nn::sub(target_ldm, source_ldm)});
  for (const auto& c : enc_convs_) h = nn::silu(c(h));
  return enc_fc_(h);
}

Var WarpModel::flow(const Var& code, const Var& source_frame) const {
  const Shape s = source_frame->value.shape();
  if (s.c != 3 || s.h != res_.h || s.w != res_.w) {
    throw std::invalid_argument("warp: frame shape " + s.str() + " does not match model");
  }
  Var h0 = ada(blocks_[0], nn::pixel_unshuffle(source_frame, 2), code);
  Var h = ada(blocks_[1], h0, code);
  h = ada(blocks_[2], h, code);
  h = ada(blocks_[3], h, code);
  h = ada(blocks_[4], nn::add(nn::upsample_nearest2x(h), h0), code);
  return nn::upsample_bilinear2x(flow_out_(h));
}

Tensor WarpModel::motion_encode(const Tensor& source_ldm, const Tensor& target_ldm) const {
  if (source_ldm.shape() != target_ldm.shape()) {
    throw std::invalid_argument("motion_encode: landmark images differ in shape");
  }
  nn::NoGradGuard no_grad;
  return motion_code(nn::constant(source_ldm), nn::constant(target_ldm))->value;
}

Tensor WarpModel::estimate_flow(const Tensor& code, const Tensor& source_frame) const {
  nn::NoGradGuard no_grad;
  return flow(nn::constant(code), nn::constant(source_frame))->value;
}

Tensor WarpModel::warp(const Tensor& source_frame, const Tensor& source_ldm,
                       const Tensor& target_ldm) const {
  return apply_flow(source_frame, estimate_flow(motion_encode(source_ldm, target_ldm), source_frame));
}

Checkpoint WarpModel::to_checkpoint(nlohmann::json extra) const {
  nlohmann::json meta = {{"kind", "warp"},
                         {"resolution", {res_.h, res_.w}},
                         {"width", width_},
                         {"code_dim", code_dim_}};
  for (const auto& [k, v] : extra.items()) meta[k] = v;
  return snapshot(ps_, meta);
}

std::vector<Tensor> warp_interval(const std::vector<Tensor>& interp_frames,
                                  const std::vector<Tensor>& interp_ldms,
                                  const std::vector<Tensor>& target_ldms, const WarpModel& model) {
  if (interp_frames.size() != interp_ldms.size() || interp_frames.size() != target_ldms.size()) {
    throw std::invalid_argument("warp_interval: sequence lengths differ");
  }
  if (interp_frames.empty()) return {};
  const Tensor out = model.warp(concat_batch(interp_frames), concat_batch(interp_ldms),
                                concat_batch(target_ldms));
  std::vector<Tensor> frames;
  for (int n = 0; n < out.shape().n; ++n) frames.push_back(out.sample(n));
  return frames;
}

WarpPair sample_warp_pair(const std::vector<SyntheticClip>& clips, const KeypointLayout& layout,
                          const WarpConfig& wc, Rng& rng) {
  const auto& clip = clips[rng.integer(0, static_cast<int>(clips.size()) - 1)];
  const int n = static_cast<int>(clip.video.size());
  const Tensor& f0 = clip.video.frames[0];
  const Resolution res{f0.shape().h, f0.shape().w};
  const auto ldm = [&](const Keypoints& kp) { return rasterize(kp, layout, res).image; };
  WarpPair p;
  const double u = rng.uniform();
  int t;
  if (u < wc.crossfade_fraction && n >= 3) {
    const int span = rng.integer(2, std::min(17, n - 1));
    const int a = rng.integer(0, n - 1 - span);
    const int b = a + span;
    t = rng.integer(a + 1, b - 1);
    const auto mid = interpolate_frames(clip.video.frames[a], clip.video.frames[b], span - 1,
                                        &clip.landmarks.keypoints[a], &clip.landmarks.keypoints[b]);
    p.source = mid.frames[t - a - 1];
    p.source_ldm = ldm(mid.keypoints[t - a - 1]);
  } else {
    t = rng.integer(0, n - 1);
    const int s = u < wc.crossfade_fraction + wc.same_pair_fraction
                      ? t
                      : std::clamp(t + rng.integer(-16, 16), 0, n - 1);
    p.source = clip.video.frames[s];
    p.source_ldm = ldm(clip.landmarks.keypoints[s]);
  }
  p.target = clip.video.frames[t];
  p.target_ldm = ldm(clip.landmarks.keypoints[t]);
  return p;
}

WarpModel train_warp(const std::vector<SyntheticClip>& clips, const RunConfig& cfg, TrainLog* log,
                     const ProgressFn& progress) {
  if (clips.empty()) throw std::invalid_argument("train_warp: no training clips");
  const WarpConfig& wc = cfg.warp;
  const Tensor& f0 = clips[0].video.frames.at(0);
  const Resolution res{f0.shape().h, f0.shape().w};
  const KeypointLayout layout = KeypointLayout::for_count(cfg.K);
  WarpModel model(res, wc.width, wc.code_dim, wc.seed);
  nn::Adam opt(model.params(), {.lr = static_cast<float>(wc.lr)});
  Rng rng(Rng::mix(wc.seed) ^ 0x3a4b);
  if (log) log->columns = {"step", "loss", "l1", "tv"};
  for (int step = 0; step < wc.steps; ++step) {
    std::vector<Tensor> src, src_ldm, tgt, tgt_ldm;
    for (int b = 0; b < wc.batch; ++b) {
      WarpPair p = sample_warp_pair(clips, layout, wc, rng);
      src.push_back(std::move(p.source));
      src_ldm.push_back(std::move(p.source_ldm));
      tgt.push_back(std::move(p.target));
      tgt_ldm.push_back(std::move(p.target_ldm));
    }
    const Tensor source = concat_batch(src);
    model.params().zero_grad();
    Var code = model.motion_code(nn::constant(concat_batch(src_ldm)), nn::constant(concat_batch(tgt_ldm)));
    Var flow = model.flow(code, nn::constant(source));
    Var l1 = nn::l1_loss(nn::grid_sample(source, flow), concat_batch(tgt));
    Var tv = nn::total_variation(flow);
    Var loss = nn::weighted_sum({l1, tv}, {1.0f, static_cast<float>(wc.tv_weight)});
    const double lv = loss->value[0];
    if (!std::isfinite(lv)) {
      throw DivergenceError("warp loss is not finite at step " + std::to_string(step));
    }
    nn::backward(loss);
    opt.step(lr_factor(step, wc.steps));
    if (step % cfg.log_every == 0 || step + 1 == wc.steps) {
      if (log) log->add({static_cast<double>(step), lv, l1->value[0], tv->value[0]});
      if (progress) progress(step, wc.steps, lv);
    }
  }
  return model;
}

WarpModel train_warp(const DatasetManifest& manifest, const RunConfig& cfg, TrainLog* log,
                     const ProgressFn& progress) {
  const auto clips = load_split(manifest, "train");
  if (clips.empty()) throw std::invalid_argument("train_warp: train split is empty");
  return train_warp(clips, cfg, log, progress);
}

}  // namespace cascade
