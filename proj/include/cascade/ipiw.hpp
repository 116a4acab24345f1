#pragma once

#include <cstdint>
#include <vector>

#include "cascade/checkpoint.hpp"
#include "cascade/config.hpp"
#include "cascade/landmarks.hpp"
#include "cascade/nn/layers.hpp"
#include "cascade/synthdata.hpp"
#include "cascade/train_util.hpp"

namespace cascade {

struct InterpolatedFrames {
  std::vector<Tensor> frames;
  std::vector<Keypoints> keypoints;  // empty when no keypoints were given
};

/// Cross-fade: frame i (1-based) = (1 - i/(bs+1)) start + i/(bs+1) end.
/// Keypoints, when both sets are given, use the same weights.
InterpolatedFrames interpolate_frames(const Tensor& frame_start, const Tensor& frame_end, int bs,
                                      const Keypoints* kp_start = nullptr,
                                      const Keypoints* kp_end = nullptr);

/// Backward warp: out(p) = source(p + flow(p)), bilinear, border clamped.
/// flow is {N,2,H,W} in normalized grid units.
Tensor apply_flow(const Tensor& source, const Tensor& flow);

/// Motion encoder plus AdaIN-modulated flow estimator.
class WarpModel {
 public:
  WarpModel(Resolution res, int width, int code_dim, std::uint64_t seed);
  explicit WarpModel(const Checkpoint& ckpt);

  /// {N,3,H,W} source and target landmark images -> {N,code_dim,1,1}.
  nn::Var motion_code(const nn::Var& source_ldm, const nn::Var& target_ldm) const;
  /// Flow {N,2,H,W} for a source frame under a motion code.
  nn::Var flow(const nn::Var& code, const nn::Var& source_frame) const;

  Tensor motion_encode(const Tensor& source_ldm, const Tensor& target_ldm) const;
  Tensor estimate_flow(const Tensor& code, const Tensor& source_frame) const;
  /// motion_encode, estimate_flow and apply_flow for a batch.
  Tensor warp(const Tensor& source_frame, const Tensor& source_ldm, const Tensor& target_ldm) const;

  int code_dim() const { return code_dim_; }
  Resolution resolution() const { return res_; }
  nn::ParamStore& params() { return ps_; }
  Checkpoint to_checkpoint(nlohmann::json extra = {}) const;

 private:
  void build(std::uint64_t seed);

  struct AdaBlock {
    nn::Conv2d conv;
    nn::Linear scale, shift;
  };
  nn::Var ada(const AdaBlock& b, const nn::Var& x, const nn::Var& code) const;

  Resolution res_;
  int width_;
  int code_dim_;
  nn::ParamStore ps_;
  std::vector<nn::Conv2d> enc_convs_;
  nn::Linear enc_fc_;
  std::vector<AdaBlock> blocks_;
  nn::Conv2d flow_out_;
};

/// Per-frame warp of interpolated frames from their landmark geometry toward
/// the target landmark images.
std::vector<Tensor> warp_interval(const std::vector<Tensor>& interp_frames,
                                  const std::vector<Tensor>& interp_ldms,
                                  const std::vector<Tensor>& target_ldms, const WarpModel& model);

/// One training example: warp source toward target.
struct WarpPair {
  Tensor source, source_ldm, target, target_ldm;
};
/// Draws a pair from the clips: a plain intra-clip pair (s, t) or, with
/// probability crossfade_fraction, a cross-fade of two frames around t.
WarpPair sample_warp_pair(const std::vector<SyntheticClip>& clips, const KeypointLayout& layout,
                          const WarpConfig& wc, Rng& rng);

WarpModel train_warp(const std::vector<SyntheticClip>& clips, const RunConfig& cfg,
                     TrainLog* log = nullptr, const ProgressFn& progress = {});
WarpModel train_warp(const DatasetManifest& manifest, const RunConfig& cfg,
                     TrainLog* log = nullptr, const ProgressFn& progress = {});

}  // namespace cascade
