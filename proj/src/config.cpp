#include "cascade/config.hpp"

#include <stdexcept>

#include "cascade/io.hpp"

namespace cascade {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AeConfig, steps, batch, lr, width,
                                                landmark_fraction, latent_penalty, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DiffusionTrainConfig, steps, batch, lr, base,
                                                min_bs, max_bs, seed, audio_dropout,
                                                guidance, mouth_jitter)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(WarpConfig, steps, batch, lr, width, code_dim,
                                                tv_weight, same_pair_fraction,
                                                crossfade_fraction, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RunConfig, resolution, f, K, D, T, beta_start,
                                                beta_end, ddim_steps, audio_context,
                                                n_identities, clips_per_identity,
                                                frames_per_clip, split_ratios, data_seed, ae,
                                                stage1, warp, stage2, log_every, data_dir,
                                                ckpt_dir, out_dir)

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  nlohmann::to_json(j, c);
  return j;
}

namespace {

// Every key in `given` must exist in `reference`, recursively.
void check_known_keys(const nlohmann::json& given, const nlohmann::json& reference,
                      const std::string& prefix) {
  for (const auto& [k, v] : given.items()) {
    if (!reference.contains(k)) throw std::invalid_argument("unknown config key " + prefix + k);
    if (v.is_object() && reference.at(k).is_object()) {
      check_known_keys(v, reference.at(k), prefix + k + ".");
    }
  }
}

}  // namespace

RunConfig config_from_json(const nlohmann::json& j) {
  // Missing nested keys must keep RunConfig's defaults (stage1 and stage2
  // differ), so merge over the full default document before parsing.
  nlohmann::json full = to_json(RunConfig{});
  check_known_keys(j, full, "");
  full.merge_patch(j);
  RunConfig c;
  try {
    nlohmann::from_json(full, c);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad config value: ") + e.what());
  }
  validate(c);
  return c;
}

RunConfig apply_overrides(const RunConfig& base, const std::vector<std::string>& sets) {
  nlohmann::json j = to_json(base);
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw std::invalid_argument("override must look like key=value: " + s);
    }
    std::string key = s.substr(0, eq);
    const std::string raw = s.substr(eq + 1);
    std::string pointer = "/" + key;
    for (auto& ch : pointer)
      if (ch == '.') ch = '/';
    const nlohmann::json::json_pointer ptr(pointer);
    if (!j.contains(ptr)) throw std::invalid_argument("unknown config key " + key);
    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    if (j.at(ptr).is_number() && !value.is_number()) {
      throw std::invalid_argument("config key " + key + " expects a number");
    }
    j[ptr] = value;
  }
  return config_from_json(j);
}

RunConfig load_config(const std::filesystem::path& path) {
  return config_from_json(io::read_json(path));
}

void validate(const RunConfig& c) {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid config: ") + what);
  };
  need(c.resolution >= 16 && c.resolution % 16 == 0, "resolution must be a multiple of 16");
  need(c.f == 4, "only f = 4 is supported");
  need(c.K >= 16, "K must be >= 16");
  need(c.D >= 3, "D must be >= 3");
  need(c.T >= 1 && c.ddim_steps >= 1 && c.ddim_steps <= c.T, "need 1 <= ddim_steps <= T");
  need(c.audio_context >= 0, "audio_context must be >= 0");
  need(c.split_ratios.size() == 3, "split_ratios needs three entries");
  need(c.stage1.min_bs >= 1 && c.stage1.min_bs <= c.stage1.max_bs, "stage1 bs range");
  need(c.stage2.min_bs >= 1 && c.stage2.min_bs <= c.stage2.max_bs, "stage2 bs range");
  need(c.log_every >= 1, "log_every must be >= 1");
}

}  // namespace cascade
