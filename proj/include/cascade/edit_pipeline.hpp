#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cascade/edit_plan.hpp"
#include "cascade/ipiw.hpp"
#include "cascade/latent_ae.hpp"
#include "cascade/motion_diffusion.hpp"
#include "cascade/refine_diffusion.hpp"
#include "cascade/synthdata.hpp"

namespace cascade {

/// The four trained networks an edit needs.
struct PipelineModels {
  AutoEncoder ae;
  DiffusionModel stage1;
  WarpModel warp;
  DiffusionModel stage2;
};

/// Checkpoint file for a stage ("ae", "stage1", "warp", "stage2") in dir.
std::filesystem::path checkpoint_path(const std::filesystem::path& dir, const std::string& stage);
/// Loads all four; a missing file raises DependencyError naming the stage.
PipelineModels load_pipeline(const std::filesystem::path& ckpt_dir);
/// Loads one checkpoint or raises DependencyError naming the stage.
Checkpoint require_checkpoint(const std::filesystem::path& ckpt_dir, const std::string& stage);

struct EditResult {
  VideoClip video;
  std::vector<LandmarkImage> landmarks;  // Stage-1 output per generated frame
  std::vector<Tensor> coarse;            // warped frames
  std::vector<Tensor> refined;           // Stage-2 frames, as stitched in
};

struct EditOptions {
  int ddim_steps = 20;
  int audio_context = 4;
  std::uint64_t seed = 0;
};

/// Runs Stage 1, interpolation-warping and Stage 2 over the edit interval and
/// stitches the result between untouched original frames.
EditResult run_edit(const VideoClip& video, const LandmarkSequence& landmarks,
                    const AudioFeatureSequence& audio_edited, const EditPlan& plan,
                    const PipelineModels& models, const KeypointLayout& layout,
                    const EditOptions& opt);

/// Output clip in the dataset layout plus edit_plan.json.
void write_edit(const std::filesystem::path& dir, const SyntheticClip& source, const EditResult& r,
                const AudioFeatureSequence& audio_edited, const EditPlan& plan,
                const nlohmann::json& extra = {});

}  // namespace cascade
