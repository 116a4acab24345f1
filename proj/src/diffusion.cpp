#include "cascade/diffusion.hpp"

#include <cmath>
#include <stdexcept>

#include "cascade/errors.hpp"

namespace cascade {

using nn::Var;

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("schedule needs T >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::invalid_argument("schedule needs 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.T = T;
  double prod = 1.0;
  for (int i = 0; i < T; ++i) {
    const double b = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (T - 1);
    s.betas.push_back(b);
    prod *= 1.0 - b;
    s.alphas_bar.push_back(prod);
  }
  return s;
}

nlohmann::json to_json(const NoiseSchedule& s) {
  return {{"T", s.T}, {"beta_start", s.betas.front()}, {"beta_end", s.betas.back()}};
}

NoiseSchedule schedule_from_json(const nlohmann::json& j) {
  return make_schedule(j.at("T"), j.at("beta_start"), j.at("beta_end"));
}

Tensor forward_diffuse(const Tensor& z0, std::span<const int> t, const Tensor& eps,
                       const NoiseSchedule& s) {
  if (z0.shape() != eps.shape()) {
    throw std::invalid_argument("forward_diffuse: shape mismatch " + z0.shape().str() +
                                " vs " + eps.shape().str());
  }
  const int n = z0.shape().n;
  if (static_cast<int>(t.size()) != n) {
    throw std::invalid_argument("forward_diffuse: one timestep per sample required");
  }
  Tensor out(z0.shape());
  const std::size_t per = z0.size() / std::max(1, n);
  for (int b = 0; b < n; ++b) {
    if (t[b] < 1 || t[b] > s.T) throw std::invalid_argument("forward_diffuse: t out of range");
    const double ab = s.abar(t[b]);
    const float ca = static_cast<float>(std::sqrt(ab));
    const float cb = static_cast<float>(std::sqrt(1.0 - ab));
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) out[i] = ca * z0[i] + cb * eps[i];
  }
  return out;
}

Tensor forward_diffuse(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& s) {
  std::vector<int> ts(z0.shape().n, t);
  return forward_diffuse(z0, ts, eps, s);
}

namespace {

Tensor slice_rows(const Tensor& t, int begin, int end) {
  if (t.empty()) return {};
  Shape s = t.shape();
  const std::size_t per = t.size() / s.n;
  s.n = end - begin;
  return Tensor(s, std::vector<float>(t.vec().begin() + begin * per, t.vec().begin() + end * per));
}

}  // namespace

ConditionPack ConditionPack::slice(int begin, int end) const {
  return {slice_rows(image, begin, end), slice_rows(audio, begin, end)};
}

ConditionPack without_audio(const ConditionPack& cond) {
  ConditionPack out = cond;
  for (auto& v : out.audio.vec()) v = kNullAudio;
  return out;
}

Var training_loss(Denoiser& denoiser, const Tensor& z0, const ConditionPack& cond,
                  const NoiseSchedule& s, Rng& rng) {
  const int n = z0.shape().n;
  std::vector<int> t(n);
  for (auto& v : t) v = rng.integer(1, s.T);
  Tensor eps = rng.normal_like(z0.shape());
  Tensor zt = forward_diffuse(z0, t, eps, s);
  Var pred = denoiser.predict(nn::constant(std::move(zt)), t, cond);
  Var loss = nn::mse_loss(pred, eps);
  if (!std::isfinite(loss->value[0])) {
    throw DivergenceError("diffusion loss is not finite");
  }
  return loss;
}

std::vector<int> ddim_timesteps(int T, int n_steps) {
  if (n_steps < 1 || n_steps > T) throw std::invalid_argument("ddim needs 1 <= n_steps <= T");
  std::vector<int> ts;
  for (int k = n_steps; k >= 1; --k) {
    ts.push_back(static_cast<int>((static_cast<long>(k) * T) / n_steps));
  }
  return ts;
}

Tensor ddim_initial_noise(Shape shape, std::uint64_t seed) {
  Tensor z(shape);
  const std::size_t per = z.size() / shape.n;
  Shape one = shape;
  one.n = 1;
  for (int b = 0; b < shape.n; ++b) {
    Rng rng(Rng::mix(seed) ^ Rng::mix(0x51ed5eedULL + static_cast<std::uint64_t>(b)));
    Tensor e = rng.normal_like(one);
    std::copy(e.vec().begin(), e.vec().end(), z.vec().begin() + b * per);
  }
  return z;
}

Tensor ddim_sample(Denoiser& denoiser, const ConditionPack& cond, const NoiseSchedule& s,
                   int n_steps, std::uint64_t seed, Shape shape, const Tensor* prior_mean,
                   double guidance) {
  nn::NoGradGuard no_grad;
  Tensor z = ddim_initial_noise(shape, seed);
  const std::vector<int> ts = ddim_timesteps(s.T, n_steps);
  if (prior_mean) {
    if (prior_mean->shape() != shape) {
      throw std::invalid_argument("ddim_sample: prior mean shape " + prior_mean->shape().str() +
                                  " does not match " + shape.str());
    }
    const double a = std::sqrt(s.abar(ts.front())), b = std::sqrt(1.0 - s.abar(ts.front()));
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] = static_cast<float>(a * (*prior_mean)[i] + b * z[i]);
    }
  }
  const bool guided = guidance != 1.0;
  // Conditional and audio-free rows share one batch.
  ConditionPack both;
  if (guided) {
    if (cond.audio.empty()) throw std::invalid_argument("ddim_sample: guidance needs audio");
    const ConditionPack null = without_audio(cond);
    both.audio = concat_batch({cond.audio, null.audio});
    if (!cond.image.empty()) both.image = concat_batch({cond.image, null.image});
  }
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const int t = ts[k];
    const int t_prev = k + 1 < ts.size() ? ts[k + 1] : 0;
    Tensor eps;
    if (guided) {
      const std::vector<int> tv(2 * shape.n, t);
      const Tensor e2 = denoiser.predict(nn::constant(concat_batch({z, z})), tv, both)->value;
      eps = Tensor(shape);
      const std::size_t half = z.size();
      for (std::size_t i = 0; i < half; ++i) {
        eps[i] = static_cast<float>(e2[half + i] + guidance * (e2[i] - e2[half + i]));
      }
    } else {
      const std::vector<int> tv(shape.n, t);
      eps = denoiser.predict(nn::constant(z), tv, cond)->value;
    }
    const double ab = s.abar(t);
    const double ab_prev = s.abar(t_prev);
    const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    const double pa = std::sqrt(ab_prev), pb = std::sqrt(1.0 - ab_prev);
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double x0 = (z[i] - sb * eps[i]) / sa;
      z[i] = static_cast<float>(pa * x0 + pb * eps[i]);
    }
  }
  return z;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const DenoiserSpec& s) {
  return {{"latent_c", s.latent_c},       {"h", s.h},
          {"w", s.w},                     {"base", s.base},
          {"levels", s.levels},           {"attention", s.attention},
          {"audio_embed", s.audio_embed},
          {"cond_channels", s.cond_channels}, {"context_len", s.context_len},
          {"context_dim", s.context_dim}, {"emb_dim", s.emb_dim}};
}

DenoiserSpec denoiser_spec_from_json(const nlohmann::json& j) {
  DenoiserSpec s;
  s.latent_c = j.at("latent_c");
  s.h = j.at("h");
  s.w = j.at("w");
  s.base = j.at("base");
  s.levels = j.at("levels");
  s.attention = j.at("attention");
  s.audio_embed = j.value("audio_embed", false);
  s.cond_channels = j.at("cond_channels");
  s.context_len = j.at("context_len");
  s.context_dim = j.at("context_dim");
  s.emb_dim = j.at("emb_dim");
  return s;
}

Tensor timestep_embedding(std::span<const int> t, int dim) {
  const int half = dim / 2;
  Tensor out({static_cast<int>(t.size()), dim, 1, 1});
  for (std::size_t n = 0; n < t.size(); ++n) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      out.at(n, i, 0, 0) = static_cast<float>(std::sin(t[n] * freq));
      out.at(n, half + i, 0, 0) = static_cast<float>(std::cos(t[n] * freq));
    }
  }
  return out;
}

namespace {

int level_channels(const DenoiserSpec& s, int level) {
  return s.base * std::min(1 << level, 2);
}

}  // namespace

UNet::UNet(const DenoiserSpec& spec, std::uint64_t seed) : spec_(spec) {
  if (spec.h % (1 << spec.levels) || spec.w % (1 << spec.levels)) {
    throw std::invalid_argument("latent size must be divisible by 2^levels");
  }
  Rng rng(seed);
  const int e = spec.emb_dim;
  temb1_ = nn::Linear(ps_, "temb.0", spec.base * 2, e, rng);
  temb2_ = nn::Linear(ps_, "temb.1", e, e, rng);
  if (spec.attention && spec.audio_embed) {
    aemb_ = nn::Linear(ps_, "audio_emb", spec.context_len * spec.context_dim, e, rng);
  }
  conv_in_ = nn::Conv2d(ps_, "conv_in", spec.latent_c + spec.cond_channels, spec.base, 3, 1, rng);
  for (int l = 0; l < spec.levels; ++l) {
    const int c = level_channels(spec, l);
    const int cin = l == 0 ? spec.base : level_channels(spec, l);
    down_blocks_.emplace_back(ps_, "down." + std::to_string(l) + ".res", cin, c, e, rng);
    downsamples_.emplace_back(ps_, "down." + std::to_string(l) + ".pool", c,
                              level_channels(spec, l + 1), 3, 2, rng);
  }
  const int cm = level_channels(spec, spec.levels);
  mid1_ = nn::ResBlock(ps_, "mid.res1", cm, cm, e, rng);
  if (spec.attention) {
    attn_ = nn::CrossAttentionBlock(ps_, "mid.attn", cm, spec.context_dim, rng);
    Tensor pos({1, spec.context_len, spec.context_dim, 1});
    for (auto& v : pos.vec()) v = static_cast<float>(0.02 * rng.normal());
    context_pos_ = ps_.add("mid.context_pos", std::move(pos));
  }
  mid2_ = nn::ResBlock(ps_, "mid.res2", cm, cm, e, rng);
  upsamples_.resize(spec.levels);
  up_blocks_.resize(spec.levels);
  for (int l = spec.levels - 1; l >= 0; --l) {
    const int c = level_channels(spec, l);
    const int cdeep = level_channels(spec, l + 1);
    upsamples_[l] = nn::Conv2d(ps_, "up." + std::to_string(l) + ".conv", cdeep, c, 3, 1, rng);
    up_blocks_[l] = nn::ResBlock(ps_, "up." + std::to_string(l) + ".res", 2 * c, c, e, rng);
  }
  norm_out_ = nn::GroupNorm(ps_, "norm_out", spec.base);
  conv_out_ = nn::Conv2d(ps_, "conv_out", spec.base, spec.latent_c, 3, 1, rng, true);
}

Var UNet::predict(const Var& z_t, std::span<const int> t, const ConditionPack& cond) {
  const Shape zs = z_t->value.shape();
  if (zs.c != spec_.latent_c || zs.h != spec_.h || zs.w != spec_.w) {
    throw std::invalid_argument("denoiser input shape " + zs.str() + " does not match spec");
  }
  Var x = z_t;
  if (spec_.cond_channels > 0) {
    const Shape cs = cond.image.shape();
    if (cs.n != zs.n || cs.c != spec_.cond_channels || cs.h != zs.h || cs.w != zs.w) {
      throw std::invalid_argument("condition image shape " + cs.str() + " does not match spec");
    }
    x = nn::concat_channels({z_t, nn::constant(cond.image)});
  }
  Var emb = temb2_(nn::silu(temb1_(nn::constant(timestep_embedding(t, spec_.base * 2)))));
  if (spec_.attention) {
    const Shape as = cond.audio.shape();
    if (as.n != zs.n || as.c != spec_.context_len || as.h != spec_.context_dim) {
      throw std::invalid_argument("audio context shape " + as.str() + " does not match spec");
    }
    if (spec_.audio_embed) {
      emb = nn::add(emb, aemb_(nn::constant(cond.audio.reshaped({as.n, as.c * as.h, 1, 1}))));
    }
  }
  Var h = conv_in_(x);
  std::vector<Var> skips;
  for (int l = 0; l < spec_.levels; ++l) {
    h = down_blocks_[l](h, emb);
    skips.push_back(h);
    h = downsamples_[l](h);
  }
  h = mid1_(h, emb);
  if (spec_.attention) {
    h = attn_(h, nn::add_broadcast_batch(nn::constant(cond.audio), context_pos_));
  }
  h = mid2_(h, emb);
  for (int l = spec_.levels - 1; l >= 0; --l) {
    h = upsamples_[l](nn::upsample_nearest2x(h));
    h = up_blocks_[l](nn::concat_channels({h, skips[l]}), emb);
  }
  return conv_out_(nn::silu(norm_out_(h)));
}

}  // namespace cascade

namespace cascade {

DiffusionModel::DiffusionModel(std::string k, const DenoiserSpec& spec, const NoiseSchedule& s,
                               std::uint64_t seed)
    : kind(std::move(k)), schedule(s), net(std::make_unique<UNet>(spec, seed)) {}

DiffusionModel::DiffusionModel(const Checkpoint& ckpt, const std::string& expected_kind) {
  kind = ckpt.meta.value("kind", "");
  if (kind != expected_kind) {
    throw std::invalid_argument("checkpoint holds a '" + kind + "' model, expected '" +
                                expected_kind + "'");
  }
  variant = ckpt.meta.value("variant", "");
  guidance = ckpt.meta.value("guidance", 1.0);
  schedule = schedule_from_json(ckpt.meta.at("schedule"));
  net = std::make_unique<UNet>(denoiser_spec_from_json(ckpt.meta.at("denoiser")), 0);
  restore(net->params(), ckpt);
}

Checkpoint DiffusionModel::to_checkpoint(nlohmann::json extra) const {
  nlohmann::json meta = {{"kind", kind},
                         {"schedule", to_json(schedule)},
                         {"denoiser", to_json(net->spec())},
                         {"guidance", guidance}};
  if (!variant.empty()) meta["variant"] = variant;
  for (const auto& [k, v] : extra.items()) meta[k] = v;
  return snapshot(net->params(), meta);
}

Tensor DiffusionModel::sample(const ConditionPack& cond, int n_steps, std::uint64_t seed,
                              const Tensor* prior_mean) const {
  const DenoiserSpec& sp = net->spec();
  const int n = !cond.image.empty() ? cond.image.shape().n : cond.audio.shape().n;
  return ddim_sample(*net, cond, schedule, n_steps, seed, {n, sp.latent_c, sp.h, sp.w},
                     prior_mean, guidance);
}

double heldout_loss(DiffusionModel& model, const DiffusionBatch& batch, std::uint64_t seed) {
  nn::NoGradGuard no_grad;
  Rng rng(seed);
  double total = 0.0;
  const int n = batch.z0.shape().n;
  for_chunks(n, 32, [&](int b, int e) {
    Rng chunk_rng = rng.fork(static_cast<std::uint64_t>(b));
    const Tensor z0 = slice_batch(batch.z0, b, e);
    total += training_loss(*model.net, z0, batch.cond.slice(b, e), model.schedule, chunk_rng)
                 ->value[0] * (e - b);
  });
  return total / n;
}

void train_diffusion(DiffusionModel& model, const DiffusionTrainConfig& tc, int log_every,
                     const std::function<DiffusionBatch(Rng&)>& next_batch,
                     const DiffusionBatch* heldout, TrainLog* log, const ProgressFn& progress) {
  nn::Adam opt(model.net->params(), {.lr = static_cast<float>(tc.lr)});
  Rng data_rng(Rng::mix(tc.seed) ^ 0xda7a);
  Rng noise_rng(Rng::mix(tc.seed) ^ 0x0153);
  Rng drop_rng(Rng::mix(tc.seed) ^ 0xd209);
  const std::uint64_t heldout_seed = Rng::mix(tc.seed) ^ 0x4e1d;
  if (log) log->columns = {"step", "loss", "heldout_loss"};
  for (int step = 0; step < tc.steps; ++step) {
    const bool logging = step % log_every == 0 || step + 1 == tc.steps;
    double held = std::nan("");
    if (heldout && step == 0) held = heldout_loss(model, *heldout, heldout_seed);
    DiffusionBatch batch = next_batch(data_rng);
    if (tc.audio_dropout > 0.0 && !batch.cond.audio.empty()) {
      Tensor& a = batch.cond.audio;
      const std::size_t per = a.size() / a.shape().n;
      for (int n = 0; n < a.shape().n; ++n) {
        if (drop_rng.uniform() < tc.audio_dropout) {
          std::fill_n(a.data() + n * per, per, kNullAudio);
        }
      }
    }
    model.net->params().zero_grad();
    Var loss = training_loss(*model.net, batch.z0, batch.cond, model.schedule, noise_rng);
    nn::backward(loss);
    opt.step(lr_factor(step, tc.steps));
    if (logging) {
      if (log) log->add({static_cast<double>(step), loss->value[0], held});
      if (progress) progress(step, tc.steps, loss->value[0]);
    }
  }
  if (heldout && log) {
    log->add({static_cast<double>(tc.steps), std::nan(""), heldout_loss(model, *heldout, heldout_seed)});
  }
}

}  // namespace cascade
