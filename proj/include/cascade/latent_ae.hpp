#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "cascade/checkpoint.hpp"
#include "cascade/config.hpp"
#include "cascade/landmarks.hpp"
#include "cascade/nn/layers.hpp"
#include "cascade/synthdata.hpp"
#include "cascade/train_util.hpp"

namespace cascade {

/// Convolutional autoencoder between {N,3,H,W} images and {N,3,H/4,W/4}
/// latents. Latents are standardized per channel with constants fitted on
/// the training data.
class AutoEncoder {
 public:
  AutoEncoder(Resolution res, int width, std::uint64_t seed);
  explicit AutoEncoder(const Checkpoint& ckpt);

  Tensor encode(const Tensor& images) const;
  /// Output is in [0, 1] for any latent.
  Tensor decode(const Tensor& latents) const;

  /// Unstandardized differentiable paths, for training.
  nn::Var encode_raw(const nn::Var& x) const;
  nn::Var decode_raw(const nn::Var& z) const;

  Resolution resolution() const { return res_; }
  Shape latent_shape(int n = 1) const { return {n, 3, res_.h / 4, res_.w / 4}; }
  nn::ParamStore& params() { return ps_; }
  std::array<float, 3> latent_shift{0, 0, 0};
  std::array<float, 3> latent_scale{1, 1, 1};

  Checkpoint to_checkpoint(nlohmann::json extra = {}) const;

 private:
  void build(std::uint64_t seed);
  void check_image(const Tensor& images) const;

  Resolution res_;
  int width_;
  nn::ParamStore ps_;
  nn::Conv2d e_in_, e_down_, e_out_;
  nn::ResBlock e_res_;
  nn::GroupNorm e_norm_;
  nn::Conv2d d_in_, d_up_, d_out_;
  nn::ResBlock d_res_;
  nn::GroupNorm d_norm_;
};

/// Training examples for the autoencoder: RGB frames and rasterized landmark
/// images of the same clips.
struct AeTrainingSet {
  std::vector<Tensor> frames;
  std::vector<Tensor> landmarks;
};
AeTrainingSet ae_training_set(const std::vector<SyntheticClip>& clips, const KeypointLayout& layout);

/// Trains on the set; throws std::invalid_argument when it is empty and
/// DivergenceError on a non-finite loss.
AutoEncoder train_ae(const AeTrainingSet& data, const RunConfig& cfg, TrainLog* log = nullptr,
                     const ProgressFn& progress = {});
AutoEncoder train_ae(const DatasetManifest& manifest, const RunConfig& cfg,
                     TrainLog* log = nullptr, const ProgressFn& progress = {});

}  // namespace cascade
