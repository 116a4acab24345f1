#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <span>
#include <vector>

#include <json.hpp>

#include "cascade/checkpoint.hpp"
#include "cascade/config.hpp"
#include "cascade/nn/layers.hpp"
#include "cascade/rng.hpp"
#include "cascade/tensor.hpp"
#include "cascade/train_util.hpp"

namespace cascade {

struct NoiseSchedule {
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alphas_bar;
  /// alphas_bar for t in 1..T; t = 0 gives 1 (clean data).
  double abar(int t) const { return t == 0 ? 1.0 : alphas_bar.at(t - 1); }
};

NoiseSchedule make_schedule(int T, double beta_start = 1e-4, double beta_end = 0.02);
nlohmann::json to_json(const NoiseSchedule& s);
NoiseSchedule schedule_from_json(const nlohmann::json& j);

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps, for 1 <= t <= T.
Tensor forward_diffuse(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& s);
/// Per-sample timesteps, one per batch entry.
Tensor forward_diffuse(const Tensor& z0, std::span<const int> t, const Tensor& eps,
                       const NoiseSchedule& s);

/// Conditioning for one batch. image is channel-concatenated with z_t;
/// audio holds context tokens {N, L, D, 1} for cross-attention. Either may
/// be empty.
struct ConditionPack {
  Tensor image;
  Tensor audio;
  /// Rows [begin, end) of every member.
  ConditionPack slice(int begin, int end) const;
};

/// Audio token value marking "no audio". Envelopes are never negative, so a
/// window of these cannot come from real features.
inline constexpr float kNullAudio = -1.0f;
/// Copy of cond with every audio token set to kNullAudio.
ConditionPack without_audio(const ConditionPack& cond);

class Denoiser {
 public:
  virtual ~Denoiser() = default;
  /// Predicts the noise in z_t.
  virtual nn::Var predict(const nn::Var& z_t, std::span<const int> t,
                          const ConditionPack& cond) = 0;
};

/// Epsilon-prediction MSE at uniformly drawn t in [1, T]. Throws
/// DivergenceError when the loss is not finite.
nn::Var training_loss(Denoiser& denoiser, const Tensor& z0, const ConditionPack& cond,
                      const NoiseSchedule& s, Rng& rng);

/// Evenly strided descending timesteps, first element T.
std::vector<int> ddim_timesteps(int T, int n_steps);

/// Deterministic DDIM (eta = 0) from pure noise to t = 0. The noise of batch
/// row n is drawn from a stream derived from (seed, n), so results do not
/// depend on how frames are batched.
///
/// With a linear schedule abar_T stays well above zero, so z_T still carries
/// sqrt(abar_T) of the clean latent. When prior_mean is given (same shape as
/// the output) sampling starts from sqrt(abar_T) prior_mean + sqrt(1 - abar_T)
/// noise instead of pure noise, matching what the denoiser saw in training.
///
/// guidance != 1 mixes in the audio-free prediction:
/// eps = eps_null + guidance (eps_cond - eps_null).
Tensor ddim_sample(Denoiser& denoiser, const ConditionPack& cond, const NoiseSchedule& s,
                   int n_steps, std::uint64_t seed, Shape shape,
                   const Tensor* prior_mean = nullptr, double guidance = 1.0);
/// Initial noise used by ddim_sample.
Tensor ddim_initial_noise(Shape shape, std::uint64_t seed);

// ---------------------------------------------------------------------------

struct DenoiserSpec {
  int latent_c = 3;
  int h = 16;
  int w = 16;
  int base = 32;
  int levels = 2;
  bool attention = true;
  /// Also add a linear embedding of the whole audio window to the timestep
  /// embedding, so every residual block sees it (needs attention inputs).
  bool audio_embed = true;
  int cond_channels = 0;
  int context_len = 9;
  int context_dim = 16;
  int emb_dim = 128;
};
nlohmann::json to_json(const DenoiserSpec& s);
DenoiserSpec denoiser_spec_from_json(const nlohmann::json& j);

/// Sinusoidal embedding of integer timesteps, {N, dim, 1, 1}.
Tensor timestep_embedding(std::span<const int> t, int dim);

/// Conditional UNet: conditioning images concatenated to the input, a
/// residual stack per level with skip concatenation, and cross-attention to
/// audio tokens at the bottleneck. The flattened audio window is also added
/// to the timestep embedding.
class UNet : public Denoiser {
 public:
  UNet(const DenoiserSpec& spec, std::uint64_t seed);
  nn::Var predict(const nn::Var& z_t, std::span<const int> t,
                  const ConditionPack& cond) override;
  nn::ParamStore& params() { return ps_; }
  const DenoiserSpec& spec() const { return spec_; }

 private:
  DenoiserSpec spec_;
  nn::ParamStore ps_;
  nn::Linear temb1_, temb2_, aemb_;
  nn::Conv2d conv_in_;
  std::vector<nn::ResBlock> down_blocks_;
  std::vector<nn::Conv2d> downsamples_;
  nn::ResBlock mid1_, mid2_;
  nn::CrossAttentionBlock attn_;
  nn::Var context_pos_;
  std::vector<nn::Conv2d> upsamples_;
  std::vector<nn::ResBlock> up_blocks_;
  nn::GroupNorm norm_out_;
  nn::Conv2d conv_out_;
};

/// A trained denoiser with its schedule; kind names the pipeline stage.
struct DiffusionModel {
  std::string kind;
  std::string variant;  // conditioning variant, when the stage has several
  NoiseSchedule schedule;
  std::unique_ptr<UNet> net;
  double guidance = 1.0;  // audio guidance at sampling time

  DiffusionModel(std::string kind, const DenoiserSpec& spec, const NoiseSchedule& s,
                 std::uint64_t seed);
  /// Throws std::invalid_argument when the checkpoint holds another kind.
  DiffusionModel(const Checkpoint& ckpt, const std::string& expected_kind);
  Checkpoint to_checkpoint(nlohmann::json extra = {}) const;
  /// DDIM over a batch of conditions.
  Tensor sample(const ConditionPack& cond, int n_steps, std::uint64_t seed,
                const Tensor* prior_mean = nullptr) const;
};

/// One training batch: clean latents and their conditioning.
struct DiffusionBatch {
  Tensor z0;
  ConditionPack cond;
};

/// Mean denoising loss over a fixed batch with timesteps and noise drawn
/// from a fixed seed, so successive evaluations are comparable.
double heldout_loss(DiffusionModel& model, const DiffusionBatch& batch, std::uint64_t seed);

/// Adam on training_loss over batches from next_batch. Logs step, loss and,
/// when a held-out batch is given, its loss at the first and last steps.
/// With tc.audio_dropout > 0 that share of rows trains on the null audio.
void train_diffusion(DiffusionModel& model, const DiffusionTrainConfig& tc, int log_every,
                     const std::function<DiffusionBatch(Rng&)>& next_batch,
                     const DiffusionBatch* heldout, TrainLog* log, const ProgressFn& progress);

}  // namespace cascade
