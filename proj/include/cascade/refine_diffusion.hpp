#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cascade/diffusion.hpp"
#include "cascade/ipiw.hpp"
#include "cascade/latent_ae.hpp"
#include "cascade/motion_diffusion.hpp"

namespace cascade {

/// C_V = [0.5 (C_p + C_n), C_n, 0.5 (C_f + C_n)], each {1,3,h,w}.
Tensor temporal_fuse(const Tensor& c_p, const Tensor& c_n, const Tensor& c_f);

/// What the refiner is conditioned on.
enum class RefineVariant {
  Full,          // coarse warped-frame latents
  LandmarkOnly,  // landmark-image latents in place of coarse frames
  ZeroedCV,      // no image conditioning, audio only
};
std::string to_string(RefineVariant v);
RefineVariant parse_refine_variant(const std::string& s);

DenoiserSpec stage2_spec(const RunConfig& cfg);

/// Condition {n, 12, h, w} for a run of consecutive frame latents: the
/// current latent followed by its temporal fusion. Missing neighbors at the
/// ends are replaced by the current frame.
Tensor stage2_condition(const Tensor& latents);

/// Coarse frames for an interval of a clip: cross-fade the anchors, then warp
/// each frame toward the given target landmark images.
std::vector<Tensor> coarse_interval(const SyntheticClip& clip, int anchor_before, int bs,
                                    const std::vector<Tensor>& target_ldms, const WarpModel& warp,
                                    const KeypointLayout& layout);

DiffusionModel train_stage2(const std::vector<SyntheticClip>& train,
                            const std::vector<SyntheticClip>& heldout, const AutoEncoder& ae,
                            const WarpModel& warp, const RunConfig& cfg, RefineVariant variant,
                            TrainLog* log = nullptr, const ProgressFn& progress = {});
DiffusionModel train_stage2(const DatasetManifest& manifest, const AutoEncoder& ae,
                            const WarpModel& warp, const RunConfig& cfg, RefineVariant variant,
                            TrainLog* log = nullptr, const ProgressFn& progress = {});

RefineVariant variant_of(const DiffusionModel& model);

/// Refines condition frames (coarse frames, or landmark images for the
/// landmark-only variant). Frame k uses the audio window around
/// first_audio_index + k. Output length equals input length.
std::vector<Tensor> refine_interval(const std::vector<Tensor>& condition_frames,
                                    const AudioFeatureSequence& audio, int first_audio_index,
                                    const DiffusionModel& model, const AutoEncoder& ae,
                                    int ddim_steps, std::uint64_t seed, int context = 4);

}  // namespace cascade
