#include "cascade/latent_ae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cascade/errors.hpp"

namespace cascade {

using nn::Var;

AutoEncoder::AutoEncoder(Resolution res, int width, std::uint64_t seed)
    : res_(res), width_(width) {
  if (res.h % 4 || res.w % 4) throw std::invalid_argument("resolution must be divisible by 4");
  build(seed);
}

AutoEncoder::AutoEncoder(const Checkpoint& ckpt) {
  const auto& m = ckpt.meta;
  if (m.value("kind", "") != "ae") throw std::invalid_argument("checkpoint is not an autoencoder");
  res_ = {m.at("resolution").at(0), m.at("resolution").at(1)};
  width_ = m.at("width");
  build(0);
  restore(ps_, ckpt);
  latent_shift = m.at("latent_shift");
  latent_scale = m.at("latent_scale");
}

void AutoEncoder::build(std::uint64_t seed) {
  Rng rng(seed);
  const int w = width_;
  e_in_ = nn::Conv2d(ps_, "enc.in", 12, w, 3, 1, rng);
  e_down_ = nn::Conv2d(ps_, "enc.down", w, 2 * w, 3, 2, rng);
  e_res_ = nn::ResBlock(ps_, "enc.res", 2 * w, 2 * w, 0, rng);
  e_norm_ = nn::GroupNorm(ps_, "enc.norm", 2 * w);
  e_out_ = nn::Conv2d(ps_, "enc.out", 2 * w, 3, 3, 1, rng, true);
  d_in_ = nn::Conv2d(ps_, "dec.in", 3, 2 * w, 3, 1, rng);
  d_res_ = nn::ResBlock(ps_, "dec.res", 2 * w, 2 * w, 0, rng);
  d_up_ = nn::Conv2d(ps_, "dec.up", 2 * w, w, 3, 1, rng);
  d_norm_ = nn::GroupNorm(ps_, "dec.norm", w);
  d_out_ = nn::Conv2d(ps_, "dec.out", w, 12, 3, 1, rng, true);
}

// The latent is a 4x box-filtered thumbnail plus a learned correction; the
// decoder adds a learned residual to the bilinear upsampling of the latent.
Var AutoEncoder::encode_raw(const Var& x) const {
  Var base = nn::avg_pool2x(nn::avg_pool2x(x));
  Var h = nn::silu(e_in_(nn::pixel_unshuffle(x, 2)));
  h = e_res_(e_down_(h), nullptr);
  return nn::add(base, e_out_(nn::silu(e_norm_(h))));
}

Var AutoEncoder::decode_raw(const Var& z) const {
  Var base = nn::upsample_bilinear2x(nn::upsample_bilinear2x(z));
  Var h = d_res_(d_in_(z), nullptr);
  h = nn::silu(d_norm_(d_up_(nn::upsample_nearest2x(h))));
  return nn::clamp(nn::add(base, nn::pixel_shuffle(d_out_(h), 2)), 0.0f, 1.0f);
}

void AutoEncoder::check_image(const Tensor& images) const {
  const Shape s = images.shape();
  if (s.c != 3 || s.h % 4 || s.w % 4) {
    throw std::invalid_argument("encode: image shape " + s.str() + " is not 3 x (4k) x (4k)");
  }
  if (s.h != res_.h || s.w != res_.w) {
    throw std::invalid_argument("encode: image shape " + s.str() + " does not match model resolution");
  }
}

Tensor AutoEncoder::encode(const Tensor& images) const {
  check_image(images);
  nn::NoGradGuard no_grad;
  std::vector<Tensor> parts;
  for_chunks(images.shape().n, 64, [&](int b, int e) {
    Tensor z = encode_raw(nn::constant(slice_batch(images, b, e)))->value;
    const Shape s = z.shape();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < 3; ++c) {
        float* p = z.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) p[i] = (p[i] - latent_shift[c]) / latent_scale[c];
      }
    parts.push_back(std::move(z));
  });
  return concat_batch(parts);
}

Tensor AutoEncoder::decode(const Tensor& latents) const {
  const Shape s = latents.shape();
  if (s.c != 3 || s.h * 4 != res_.h || s.w * 4 != res_.w) {
    throw std::invalid_argument("decode: latent shape " + s.str() + " does not match model");
  }
  nn::NoGradGuard no_grad;
  std::vector<Tensor> parts;
  for_chunks(s.n, 64, [&](int b, int e) {
    Tensor z = slice_batch(latents, b, e);
    for (int n = 0; n < z.shape().n; ++n)
      for (int c = 0; c < 3; ++c) {
        float* p = z.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) p[i] = p[i] * latent_scale[c] + latent_shift[c];
      }
    Tensor x = decode_raw(nn::constant(std::move(z)))->value;
    for (auto& v : x.vec()) v = std::clamp(v, 0.0f, 1.0f);
    parts.push_back(std::move(x));
  });
  return concat_batch(parts);
}

Checkpoint AutoEncoder::to_checkpoint(nlohmann::json extra) const {
  nlohmann::json meta = {{"kind", "ae"},
                         {"resolution", {res_.h, res_.w}},
                         {"width", width_},
                         {"f", 4},
                         {"latent_shift", latent_shift},
                         {"latent_scale", latent_scale}};
  for (const auto& [k, v] : extra.items()) meta[k] = v;
  return snapshot(ps_, meta);
}

AeTrainingSet ae_training_set(const std::vector<SyntheticClip>& clips, const KeypointLayout& layout) {
  AeTrainingSet set;
  for (const auto& clip : clips) {
    const Resolution res{clip.video.frames.at(0).shape().h, clip.video.frames.at(0).shape().w};
    for (std::size_t i = 0; i < clip.video.size(); ++i) {
      set.frames.push_back(clip.video.frames[i]);
      if (i < clip.landmarks.size()) {
        set.landmarks.push_back(rasterize(clip.landmarks.keypoints[i], layout, res).image);
      }
    }
  }
  return set;
}

namespace {

// Channel permutation, per-channel gain and horizontal flip, so that a few
// training identities cover more of the color space.
void augment_into(const Tensor& src, Tensor& batch, int n, Rng& rng) {
  const Shape s = src.shape();
  std::array<int, 3> perm{0, 1, 2};
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  std::array<float, 3> gain{};
  for (auto& g : gain) g = static_cast<float>(rng.uniform(0.75, 1.1));
  const bool flip = rng.uniform() < 0.5;
  for (int c = 0; c < 3; ++c) {
    const float* in = src.plane(0, perm[c]);
    float* out = batch.plane(n, c);
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        const float v = in[y * s.w + (flip ? s.w - 1 - x : x)];
        out[y * s.w + x] = std::min(1.0f, v * gain[c]);
      }
  }
}

void copy_into(const Tensor& src, Tensor& batch, int n) {
  std::copy(src.vec().begin(), src.vec().end(), batch.plane(n, 0));
}

}  // namespace

AutoEncoder train_ae(const AeTrainingSet& data, const RunConfig& cfg, TrainLog* log,
                     const ProgressFn& progress) {
  if (data.frames.empty()) throw std::invalid_argument("train_ae: empty training set");
  const AeConfig& ac = cfg.ae;
  const Shape fs = data.frames[0].shape();
  const Resolution res{fs.h, fs.w};
  AutoEncoder ae(res, ac.width, ac.seed);
  nn::Adam opt(ae.params(), {.lr = static_cast<float>(ac.lr)});
  Rng rng(Rng::mix(ac.seed) ^ 0xae);
  const int n_ldm = data.landmarks.empty()
                        ? 0
                        : static_cast<int>(std::round(ac.batch * ac.landmark_fraction));
  for (int step = 0; step < ac.steps; ++step) {
    Tensor batch({ac.batch, 3, fs.h, fs.w});
    for (int n = 0; n < ac.batch; ++n) {
      if (n < n_ldm) {
        copy_into(data.landmarks[rng.integer(0, static_cast<int>(data.landmarks.size()) - 1)], batch, n);
      } else {
        augment_into(data.frames[rng.integer(0, static_cast<int>(data.frames.size()) - 1)], batch, n, rng);
      }
    }
    ae.params().zero_grad();
    Var z = ae.encode_raw(nn::constant(batch));
    Var rec = nn::mse_loss(ae.decode_raw(z), batch);
    Var loss = nn::add(rec, nn::scale(nn::mse_loss(z, Tensor(z->value.shape())),
                                      static_cast<float>(ac.latent_penalty)));
    const double lv = loss->value[0];
    if (!std::isfinite(lv)) {
      throw DivergenceError("autoencoder loss is not finite at step " + std::to_string(step));
    }
    nn::backward(loss);
    opt.step(lr_factor(step, ac.steps));
    if (step % cfg.log_every == 0 || step + 1 == ac.steps) {
      if (log) log->add({static_cast<double>(step), lv, rec->value[0]});
      if (progress) progress(step, ac.steps, lv);
    }
  }
  if (log) log->columns = {"step", "loss", "recon_mse"};

  // Per-channel standardization over a fixed sample of the training data.
  std::vector<Tensor> sample;
  Rng srng(Rng::mix(ac.seed) ^ 0x5ca1e);
  for (int i = 0; i < 256; ++i) {
    const bool ldm = !data.landmarks.empty() && i < static_cast<int>(256 * ac.landmark_fraction);
    const auto& pool = ldm ? data.landmarks : data.frames;
    sample.push_back(pool[srng.integer(0, static_cast<int>(pool.size()) - 1)]);
  }
  const Tensor z = ae.encode(concat_batch(sample));
  for (int c = 0; c < 3; ++c) {
    double s = 0, sq = 0;
    std::size_t cnt = 0;
    for (int n = 0; n < z.shape().n; ++n) {
      const float* p = z.plane(n, c);
      for (std::size_t i = 0; i < z.shape().plane(); ++i) {
        s += p[i];
        sq += static_cast<double>(p[i]) * p[i];
        ++cnt;
      }
    }
    const double mean = s / cnt;
    const double sd = std::sqrt(std::max(1e-12, sq / cnt - mean * mean));
    ae.latent_shift[c] = static_cast<float>(mean);
    ae.latent_scale[c] = static_cast<float>(sd);
  }
  return ae;
}

AutoEncoder train_ae(const DatasetManifest& manifest, const RunConfig& cfg, TrainLog* log,
                     const ProgressFn& progress) {
  const auto clips = load_split(manifest, "train");
  if (clips.empty()) throw std::invalid_argument("train_ae: train split is empty");
  return train_ae(ae_training_set(clips, KeypointLayout::for_count(cfg.K)), cfg, log, progress);
}

}  // namespace cascade
