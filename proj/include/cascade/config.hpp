#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace cascade {

struct AeConfig {
  int steps = 600;
  int batch = 16;
  double lr = 2e-3;
  int width = 32;
  double landmark_fraction = 0.25;  // share of landmark images per batch
  double latent_penalty = 1e-4;
  std::uint64_t seed = 11;
};

struct DiffusionTrainConfig {
  int steps = 1200;
  int batch = 16;
  double lr = 1e-3;
  int base = 32;
  int min_bs = 4;
  int max_bs = 16;
  std::uint64_t seed = 21;
  /// Share of training rows whose audio is replaced by the null window.
  double audio_dropout = 0.0;
  /// Audio guidance scale used when sampling; 1 samples the conditional model.
  double guidance = 1.0;
  /// Stage 2 only: training targets get their mouth opening scaled by a
  /// factor drawn from [1 - j, 1 + j], so the coarse mouth can be wrong.
  double mouth_jitter = 0.0;
};

struct WarpConfig {
  int steps = 1200;
  int batch = 16;
  double lr = 1e-3;
  int width = 32;
  int code_dim = 128;
  double tv_weight = 0.01;
  double same_pair_fraction = 0.2;
  double crossfade_fraction = 0.5;
  std::uint64_t seed = 31;
};

struct RunConfig {
  int resolution = 64;
  int f = 4;
  int K = 32;
  int D = 16;
  int T = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int ddim_steps = 20;
  int audio_context = 4;

  int n_identities = 16;
  int clips_per_identity = 2;
  int frames_per_clip = 200;
  std::vector<double> split_ratios{0.45, 0.05, 0.5};
  std::uint64_t data_seed = 1234;

  AeConfig ae;
  DiffusionTrainConfig stage1{1200, 16, 1e-3, 32, 4, 16, 21, 0.15, 7.0};
  WarpConfig warp;
  DiffusionTrainConfig stage2{1200, 16, 1e-3, 32, 4, 16, 41};
  int log_every = 50;

  std::string data_dir = "data";
  std::string ckpt_dir = "ckpt";
  std::string out_dir = "out";
};

nlohmann::json to_json(const RunConfig& c);
RunConfig config_from_json(const nlohmann::json& j);

/// Applies "a.b.c=value" overrides. The value is parsed as JSON when
/// possible, otherwise taken as a string. Unknown keys are rejected.
RunConfig apply_overrides(const RunConfig& base, const std::vector<std::string>& sets);

/// Reads a config file; missing keys keep their defaults, unknown keys throw.
RunConfig load_config(const std::filesystem::path& path);

/// Throws std::invalid_argument on inconsistent settings.
void validate(const RunConfig& c);

}  // namespace cascade
