#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "cascade/diffusion.hpp"
#include "cascade/landmarks.hpp"
#include "cascade/latent_ae.hpp"
#include "cascade/synthdata.hpp"

namespace cascade {

/// Dual-linear anchor weights for frame i of bs: ((bs - i)/bs, i/bs).
std::pair<double, double> interp_weights(int i, int bs);

/// Anchor landmark images; indices are positions in the (edited) audio
/// sequence, so generated frame i sits at start_index + i.
struct AnchorPair {
  LandmarkImage start_ldm;
  LandmarkImage end_ldm;
  int start_index = 0;
  int end_index = 0;
};

/// Features of frames center-c .. center+c, edge-replicated at the sequence
/// ends, as tokens {1, 2c+1, D, 1}.
struct AudioWindow {
  Tensor tokens;
};
AudioWindow audio_window(const AudioFeatureSequence& audio, int center, int context = 4);

/// Image condition {1, 9, H, W} = [w_start*start + w_end*end, start, end]
/// and the window as cross-attention tokens.
ConditionPack build_condition(const Tensor& start, const Tensor& end, const AudioWindow& window,
                              int i, int bs);
ConditionPack build_condition(const AnchorPair& anchors, const AudioWindow& window, int i, int bs);

/// Encodes every 3-channel group of an image-space condition.
Tensor encode_condition(const AutoEncoder& ae, const Tensor& image_condition);

/// Channels 0..2 of every row, e.g. the blend latent of an encoded condition.
Tensor first_group(const Tensor& latents);

DenoiserSpec stage1_spec(const RunConfig& cfg);

/// Precomputed landmark images and latents of one clip.
struct LandmarkClipCache {
  const SyntheticClip* clip = nullptr;
  std::vector<Tensor> ldm;  // {1,3,H,W} per frame
  Tensor latents;           // {n,3,h,w}
};
std::vector<LandmarkClipCache> cache_landmarks(const std::vector<SyntheticClip>& clips,
                                               const AutoEncoder& ae, const KeypointLayout& layout);

/// A random training interval: anchors a and a+bs+1 with bs in [min_bs,
/// max_bs], and a frame i in [1, bs].
struct IntervalSample {
  int clip = 0;
  int anchor_before = 0;
  int bs = 0;
  int i = 0;
};
IntervalSample sample_interval(const std::vector<int>& clip_lengths, int min_bs, int max_bs,
                               Rng& rng);

DiffusionModel train_stage1(const std::vector<SyntheticClip>& train,
                            const std::vector<SyntheticClip>& heldout, const AutoEncoder& ae,
                            const RunConfig& cfg, TrainLog* log = nullptr,
                            const ProgressFn& progress = {});
DiffusionModel train_stage1(const DatasetManifest& manifest, const AutoEncoder& ae,
                            const RunConfig& cfg, TrainLog* log = nullptr,
                            const ProgressFn& progress = {});

/// Landmark images for the bs frames between the anchors, sampled
/// independently per frame and decoded with the autoencoder.
std::vector<LandmarkImage> synth_landmark_interval(const AnchorPair& anchors,
                                                   const AudioFeatureSequence& audio, int bs,
                                                   const DiffusionModel& model,
                                                   const AutoEncoder& ae, int ddim_steps,
                                                   std::uint64_t seed, int context = 4);

}  // namespace cascade
