#include "cascade/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "cascade/errors.hpp"
#include "cascade/io.hpp"
#include "cascade/rng.hpp"

namespace cascade {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::uint64_t kFeatureProjectionSeed = 0xA0D10F3A7ULL;

double luminance(const RGB& c) { return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]; }

RGB hsv(double h, double s, double v) {
  h = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(h);
  const double f = h - i;
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

struct Pose {
  double cx, cy, theta;
};

Pose pose_at(const IdentityParams& id, double time) {
  const double w = 2.0 * kPi / id.pose_period;
  return {(id.resolution.w - 1) / 2.0 + id.pose_amp[0] * std::sin(w * time + id.pose_phase[0]),
          (id.resolution.h - 1) / 2.0 + id.pose_amp[1] * std::sin(w * time + id.pose_phase[1]),
          id.pose_amp[2] * std::sin(w * time + id.pose_phase[2])};
}

// Face-local layout, all in pixels.
struct FaceLocal {
  double a, b;
  double eye_y, eye_dx, eye_rx, eye_ry, pupil_r;
  double mouth_y, mouth_half_w, inner_half_w, lip_t, gap;
};

FaceLocal face_local(const IdentityParams& id, double envelope) {
  const double s = id.resolution.scale();
  FaceLocal f{};
  f.a = id.face_axes[0];
  f.b = id.face_axes[1];
  f.eye_y = -0.28 * f.b;
  f.eye_dx = id.eye_spacing / 2.0;
  f.eye_rx = 2.8 * s;
  f.eye_ry = 1.7 * s;
  f.pupil_r = 1.1 * s;
  f.mouth_y = 0.38 * f.b;
  f.mouth_half_w = id.mouth_width / 2.0;
  f.inner_half_w = 0.42 * id.mouth_width;
  f.lip_t = 1.5 * s;
  f.gap = mouth_gap(id.resolution).at(envelope);
  return f;
}

inline bool in_ellipse(double x, double y, double cx, double cy, double rx, double ry) {
  const double u = (x - cx) / rx;
  const double v = (y - cy) / ry;
  return u * u + v * v <= 1.0;
}

}  // namespace

MouthGap mouth_gap(Resolution res) {
  return {0.5 * res.scale(), 8.0 * res.scale()};
}

IdentityParams gen_identity(std::uint64_t seed, Resolution res) {
  Rng rng(seed);
  IdentityParams p;
  p.seed = seed;
  p.resolution = res;
  const double s = res.scale();
  const double skin_h = rng.uniform();
  do {
    p.face_hue = hsv(skin_h, rng.uniform(0.2, 0.6), rng.uniform(0.72, 0.97));
  } while (luminance(p.face_hue) < 0.5);
  const double bg_h = std::fmod(skin_h + rng.uniform(0.25, 0.75), 1.0);
  do {
    p.background = hsv(bg_h, rng.uniform(0.15, 0.6), rng.uniform(0.55, 0.95));
  } while (luminance(p.background) < 0.42);
  for (int c = 0; c < 3; ++c) {
    static constexpr RGB kLipTint{0.78, 0.22, 0.28};
    p.lip_color[c] = 0.5 * p.face_hue[c] + 0.5 * kLipTint[c];
  }
  p.face_axes = {rng.uniform(14.0, 18.0) * s, rng.uniform(18.0, 22.0) * s};
  p.eye_spacing = rng.uniform(10.0, 14.0) * s;
  p.mouth_width = rng.uniform(10.0, 14.0) * s;
  p.pose_amp = {rng.uniform(1.0, 3.0) * s, rng.uniform(0.5, 2.0) * s, rng.uniform(0.02, 0.08)};
  for (auto& ph : p.pose_phase) ph = rng.uniform(0.0, 2.0 * kPi);
  p.pose_period = rng.uniform(40.0, 80.0);
  return p;
}

nlohmann::json to_json(const IdentityParams& p) {
  return {{"face_hue", p.face_hue},       {"background", p.background},
          {"lip_color", p.lip_color},     {"face_axes", p.face_axes},
          {"eye_spacing", p.eye_spacing}, {"mouth_width", p.mouth_width},
          {"pose_amp", p.pose_amp},       {"pose_phase", p.pose_phase},
          {"pose_period", p.pose_period}, {"resolution", {p.resolution.h, p.resolution.w}},
          {"seed", p.seed}};
}

IdentityParams identity_from_json(const nlohmann::json& j) {
  IdentityParams p;
  p.face_hue = j.at("face_hue");
  p.background = j.at("background");
  p.lip_color = j.at("lip_color");
  p.face_axes = j.at("face_axes");
  p.eye_spacing = j.at("eye_spacing");
  p.mouth_width = j.at("mouth_width");
  p.pose_amp = j.at("pose_amp");
  p.pose_phase = j.at("pose_phase");
  p.pose_period = j.at("pose_period");
  p.resolution = {j.at("resolution").at(0), j.at("resolution").at(1)};
  p.seed = j.at("seed");
  return p;
}

Keypoints face_keypoints(const IdentityParams& id, double time, double envelope,
                         const KeypointLayout& layout) {
  const Pose pose = pose_at(id, time);
  const FaceLocal f = face_local(id, envelope);
  const double cs = std::cos(pose.theta);
  const double sn = std::sin(pose.theta);
  Keypoints kp;
  kp.reserve(layout.total());
  auto emit = [&](double lx, double ly) {
    kp.push_back({static_cast<float>(pose.cx + cs * lx - sn * ly),
                  static_cast<float>(pose.cy + sn * lx + cs * ly)});
  };
  for (int k = 0; k < layout.head; ++k) {
    const double phi = 2.0 * kPi * k / layout.head;
    emit(f.a * std::sin(phi), -f.b * std::cos(phi));
  }
  const int per_eye = layout.eyes / 2;
  for (int e = 0; e < 2; ++e) {
    const double ex = (e == 0 ? -1 : 1) * f.eye_dx;
    for (int k = 0; k < per_eye; ++k) {
      const double phi = 2.0 * kPi * k / per_eye;
      emit(ex - f.eye_rx * std::cos(phi), f.eye_y - f.eye_ry * std::sin(phi));
    }
  }
  const double my = f.mouth_y;
  emit(-f.mouth_half_w, my);
  emit(f.mouth_half_w, my);
  emit(0.0, my - f.gap / 2.0);
  emit(0.0, my + f.gap / 2.0);
  const int outer = layout.mouth - 4;
  const int pairs = (outer + 1) / 2;
  for (int k = 0; k < outer; ++k) {
    const int pair = k / 2;
    const double u = pairs == 1 ? 0.0 : -0.6 + 1.2 * pair / (pairs - 1);
    const double half_h = (f.gap / 2.0 + f.lip_t) * std::sqrt(1.0 - u * u);
    emit(u * f.mouth_half_w, my + (k % 2 == 0 ? -half_h : half_h));
  }
  return kp;
}

Tensor render_frame(const IdentityParams& id, double time, double envelope) {
  const Resolution res = id.resolution;
  const Pose pose = pose_at(id, time);
  const FaceLocal f = face_local(id, envelope);
  const double cs = std::cos(pose.theta);
  const double sn = std::sin(pose.theta);
  static constexpr RGB kSclera{0.96, 0.96, 0.94};
  static constexpr RGB kPupil{0.16, 0.12, 0.10};
  static constexpr RGB kMouth{0.06, 0.03, 0.03};
  constexpr int kSub = 4;
  Tensor img({1, 3, res.h, res.w});
#pragma omp parallel for schedule(static)
  for (int y = 0; y < res.h; ++y) {
    for (int x = 0; x < res.w; ++x) {
      RGB acc{0, 0, 0};
      for (int sy = 0; sy < kSub; ++sy)
        for (int sx = 0; sx < kSub; ++sx) {
          const double px = x + (sx + 0.5) / kSub - 0.5 - pose.cx;
          const double py = y + (sy + 0.5) / kSub - 0.5 - pose.cy;
          const double lx = cs * px + sn * py;
          const double ly = -sn * px + cs * py;
          const RGB* c = &id.background;
          if (in_ellipse(lx, ly, 0, 0, f.a, f.b)) {
            c = &id.face_hue;
            for (int e = -1; e <= 1; e += 2) {
              if (in_ellipse(lx, ly, e * f.eye_dx, f.eye_y, f.eye_rx, f.eye_ry)) {
                c = in_ellipse(lx, ly, e * f.eye_dx, f.eye_y, f.pupil_r, f.pupil_r)
                        ? &kPupil
                        : &kSclera;
              }
            }
            if (in_ellipse(lx, ly, 0, f.mouth_y, f.mouth_half_w, f.gap / 2 + f.lip_t)) {
              c = &id.lip_color;
              if (in_ellipse(lx, ly, 0, f.mouth_y, f.inner_half_w, f.gap / 2)) c = &kMouth;
            }
          }
          for (int k = 0; k < 3; ++k) acc[k] += (*c)[k];
        }
      for (int k = 0; k < 3; ++k) {
        img.at(0, k, y, x) = static_cast<float>(acc[k] / (kSub * kSub));
      }
    }
  }
  return img;
}

std::vector<float> synth_envelope(int n_frames, std::uint64_t seed) {
  std::vector<float> env(std::max(0, n_frames), 0.0f);
  Rng rng(seed);
  int i = 0;
  while (i < n_frames) {
    const int len = rng.integer(3, 8);
    const double amp = rng.uniform(0.2, 1.0);
    for (int j = 0; j < len && i + j < n_frames; ++j) {
      env[i + j] = static_cast<float>(amp * 0.5 * (1.0 - std::cos(2.0 * kPi * (j + 1) / (len + 1))));
    }
    i += len;
  }
  return env;
}

std::vector<float> audio_features(std::span<const float> envelope, int dim) {
  if (dim < 3) throw std::invalid_argument("feature dim must be >= 3");
  constexpr int kWindow = 5;
  const int proj_rows = dim - 2;
  std::vector<double> proj(static_cast<std::size_t>(proj_rows) * kWindow);
  Rng rng(kFeatureProjectionSeed);
  for (auto& v : proj) v = rng.normal() / std::sqrt(static_cast<double>(kWindow));
  const int n = static_cast<int>(envelope.size());
  std::vector<float> out(static_cast<std::size_t>(n) * dim);
  for (int i = 0; i < n; ++i) {
    float* f = out.data() + static_cast<std::size_t>(i) * dim;
    f[0] = envelope[i];
    f[1] = i == 0 ? 0.0f : envelope[i] - envelope[i - 1];
    for (int r = 0; r < proj_rows; ++r) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) {
        const int j = std::clamp(i + k - kWindow / 2, 0, n - 1);
        acc += proj[r * kWindow + k] * envelope[j];
      }
      f[2 + r] = static_cast<float>(acc);
    }
  }
  return out;
}

SyntheticClip render_clip(const IdentityParams& id, std::vector<double> times,
                          std::vector<float> envelope, const KeypointLayout& layout,
                          int feature_dim, double fps) {
  if (times.size() != envelope.size()) {
    throw std::invalid_argument("render_clip: times and envelope differ in length");
  }
  SyntheticClip clip;
  clip.identity = id;
  clip.video.fps = fps;
  clip.landmarks.k = layout.total();
  for (std::size_t i = 0; i < times.size(); ++i) {
    clip.video.frames.push_back(render_frame(id, times[i], envelope[i]));
    clip.landmarks.keypoints.push_back(face_keypoints(id, times[i], envelope[i], layout));
  }
  clip.audio.dim = feature_dim;
  clip.audio.features = audio_features(envelope, feature_dim);
  clip.audio.envelope = std::move(envelope);
  clip.times = std::move(times);
  return clip;
}

SyntheticClip gen_clip(const IdentityParams& id, int n_frames, std::uint64_t seed,
                       const KeypointLayout& layout, int feature_dim) {
  if (n_frames < 2) throw std::invalid_argument("gen_clip: n_frames must be >= 2");
  std::vector<double> times(n_frames);
  for (int i = 0; i < n_frames; ++i) times[i] = i;
  return render_clip(id, std::move(times), synth_envelope(n_frames, seed), layout,
                     feature_dim);
}

Rect identity_mouth_roi(const IdentityParams& id) {
  const FaceLocal f = face_local(id, 1.0);
  const double rot = std::abs(f.mouth_y) * std::sin(id.pose_amp[2]) + f.mouth_half_w *
                     (1.0 - std::cos(id.pose_amp[2]));
  const double margin = id.resolution.scale();
  const double half_w = f.mouth_half_w + id.pose_amp[0] + rot + margin;
  const double half_h = f.gap / 2.0 + f.lip_t + id.pose_amp[1] + rot + margin;
  const double cx = (id.resolution.w - 1) / 2.0;
  const double cy = (id.resolution.h - 1) / 2.0 + f.mouth_y;
  Rect r;
  r.x = std::max(0, static_cast<int>(std::floor(cx - half_w)));
  r.y = std::max(0, static_cast<int>(std::floor(cy - half_h)));
  r.w = std::min(id.resolution.w, static_cast<int>(std::ceil(cx + half_w)) + 1) - r.x;
  r.h = std::min(id.resolution.h, static_cast<int>(std::ceil(cy + half_h)) + 1) - r.y;
  return r;
}

std::pair<AudioFeatureSequence, EditPlan> edit_audio(const AudioFeatureSequence& audio,
                                                     const EditSpec& spec) {
  const EditPlan plan = plan_edit(static_cast<int>(audio.size()), spec);
  const std::vector<float> fresh = synth_envelope(plan.bs, spec.seed);
  AudioFeatureSequence out;
  out.dim = audio.dim;
  out.envelope.reserve(plan.output_length);
  for (int i = 0; i <= plan.anchor_before; ++i) out.envelope.push_back(audio.envelope[i]);
  out.envelope.insert(out.envelope.end(), fresh.begin(), fresh.end());
  for (int i = plan.anchor_after; i < plan.original_length; ++i) {
    out.envelope.push_back(audio.envelope[i]);
  }
  // Kept frames keep their original features bit-exact; only the inserted
  // segment gets features computed over the spliced envelope.
  const std::vector<float> spliced = audio_features(out.envelope, audio.dim);
  out.features.resize(static_cast<std::size_t>(plan.output_length) * audio.dim);
  const std::size_t d = audio.dim;
  for (const auto& [orig, o] : plan.output_index_map) {
    std::copy_n(audio.features.begin() + orig * d, d, out.features.begin() + o * d);
  }
  for (int j = 0; j < plan.bs; ++j) {
    const std::size_t o = plan.generated_begin() + j;
    std::copy_n(spliced.begin() + o * d, d, out.features.begin() + o * d);
  }
  return {std::move(out), plan};
}

SyntheticClip render_edit_ground_truth(const SyntheticClip& original,
                                       const AudioFeatureSequence& edited_audio,
                                       const EditPlan& plan,
                                       const KeypointLayout& layout) {
  if (static_cast<int>(edited_audio.size()) != plan.output_length) {
    throw std::invalid_argument("edited audio length does not match plan");
  }
  SyntheticClip gt;
  gt.identity = original.identity;
  gt.video.fps = original.video.fps;
  gt.video.identity_id = original.video.identity_id;
  gt.landmarks.k = layout.total();
  gt.audio = edited_audio;
  gt.times.resize(plan.output_length);
  gt.video.frames.resize(plan.output_length);
  gt.landmarks.keypoints.resize(plan.output_length);
  for (const auto& [orig, o] : plan.output_index_map) {
    gt.times[o] = original.times[orig];
    gt.video.frames[o] = original.video.frames[orig];
    gt.landmarks.keypoints[o] = original.landmarks.keypoints[orig];
  }
  const double t0 = original.times[plan.anchor_before];
  const double t1 = original.times[plan.anchor_after];
  for (int j = 1; j <= plan.bs; ++j) {
    const int o = plan.generated_begin() + j - 1;
    const double t = t0 + (t1 - t0) * j / (plan.bs + 1.0);
    gt.times[o] = t;
    gt.video.frames[o] = render_frame(gt.identity, t, edited_audio.envelope[o]);
    gt.landmarks.keypoints[o] = face_keypoints(gt.identity, t, edited_audio.envelope[o], layout);
  }
  return gt;
}

// ---------------------------------------------------------------------------

SplitRatios split_ratios_for_percent(double train_val_percent) {
  const double tv = train_val_percent / 100.0;
  if (!(tv > 0.0 && tv < 1.0)) throw std::invalid_argument("split percent must be in (0,100)");
  return {tv * 0.9, tv * 0.1, 1.0 - tv};
}

std::array<int, 3> split_counts(int n_identities, const SplitRatios& r) {
  const double sum = r.train + r.val + r.test;
  if (std::abs(sum - 1.0) > 1e-9 || r.train < 0 || r.val < 0 || r.test < 0) {
    throw std::invalid_argument("split ratios must be non-negative and sum to 1");
  }
  // A small epsilon keeps products like 16 * 0.875 from flooring to 13.
  const int val = static_cast<int>(std::floor(n_identities * r.val + 1e-9));
  const int test = static_cast<int>(std::floor(n_identities * r.test + 1e-9));
  return {n_identities - val - test, val, test};
}

const std::vector<std::string>& DatasetManifest::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw std::invalid_argument("unknown split " + name);
}

namespace {

std::string numbered(const char* prefix, int i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*d", prefix, width, i);
  return buf;
}

}  // namespace

void write_clip(const std::filesystem::path& dir, const SyntheticClip& clip,
                const nlohmann::json& extra_meta) {
  io::ensure_dir(dir / "frames");
  for (std::size_t i = 0; i < clip.video.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%05zu.png", i);
    io::write_png(dir / "frames" / name, clip.video.frames[i]);
  }
  std::vector<float> kp;
  for (const auto& frame : clip.landmarks.keypoints)
    for (const auto& p : frame) {
      kp.push_back(p.x);
      kp.push_back(p.y);
    }
  io::write_f32(dir / "keypoints.f32", kp);
  io::write_f32(dir / "features.f32", clip.audio.features);
  io::write_f32(dir / "envelope.f32", clip.audio.envelope);
  const Shape fs = clip.video.frames.empty() ? Shape{} : clip.video.frames[0].shape();
  nlohmann::json meta = {
      {"fps", clip.video.fps},
      {"n_frames", clip.video.size()},
      {"H", fs.h},
      {"W", fs.w},
      {"K", clip.landmarks.k},
      {"D", clip.audio.dim},
      {"identity_id", clip.video.identity_id},
      {"identity", to_json(clip.identity)},
      {"times", clip.times},
      {"keypoints_shape", {clip.landmarks.keypoints.size(), clip.landmarks.k, 2}},
      {"features_shape", {clip.audio.size(), clip.audio.dim}},
      {"envelope_shape", {clip.audio.size()}},
  };
  for (const auto& [k, v] : extra_meta.items()) meta[k] = v;
  io::write_json(dir / "meta.json", meta);
}

SyntheticClip read_clip(const std::filesystem::path& dir) {
  const nlohmann::json meta = io::read_json(dir / "meta.json");
  SyntheticClip clip;
  clip.identity = identity_from_json(meta.at("identity"));
  clip.times = meta.at("times").get<std::vector<double>>();
  clip.video.fps = meta.at("fps");
  clip.video.identity_id = meta.at("identity_id");
  const int n = meta.at("n_frames");
  for (int i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%05d.png", i);
    clip.video.frames.push_back(io::read_png(dir / "frames" / name));
  }
  clip.landmarks.k = meta.at("K");
  const auto kp = io::read_f32(dir / "keypoints.f32");
  const std::size_t per = static_cast<std::size_t>(clip.landmarks.k) * 2;
  if (per > 0 && !kp.empty()) {
    if (kp.size() != per * n) throw IoError("keypoints.f32 size mismatch in " + dir.string());
    for (int i = 0; i < n; ++i) {
      Keypoints frame(clip.landmarks.k);
      for (int k = 0; k < clip.landmarks.k; ++k) {
        frame[k] = {kp[i * per + 2 * k], kp[i * per + 2 * k + 1]};
      }
      clip.landmarks.keypoints.push_back(std::move(frame));
    }
  }
  clip.audio.dim = meta.at("D");
  clip.audio.features = io::read_f32(dir / "features.f32");
  clip.audio.envelope = io::read_f32(dir / "envelope.f32");
  if (static_cast<int>(clip.audio.envelope.size()) != n ||
      clip.audio.features.size() != static_cast<std::size_t>(n) * clip.audio.dim) {
    throw IoError("audio arrays do not match frame count in " + dir.string());
  }
  return clip;
}

DatasetManifest make_dataset(const DatasetOptions& opt, const std::filesystem::path& out_dir) {
  if (opt.n_identities < 4) throw std::invalid_argument("need at least 4 identities");
  if (opt.clips_per_identity < 1) throw std::invalid_argument("need at least 1 clip per identity");
  const auto counts = split_counts(opt.n_identities, opt.ratios);
  const KeypointLayout layout = KeypointLayout::for_count(opt.k);
  io::ensure_dir(out_dir);

  // Identity-first partition over a seeded permutation.
  std::vector<int> order(opt.n_identities);
  for (int i = 0; i < opt.n_identities; ++i) order[i] = i;
  Rng perm(Rng::mix(opt.seed ^ 0x5b117ULL));
  std::shuffle(order.begin(), order.end(), perm.engine());
  std::vector<std::string> split_of(opt.n_identities);
  for (int r = 0; r < opt.n_identities; ++r) {
    split_of[order[r]] = r < counts[0] ? "train" : (r < counts[0] + counts[1] ? "val" : "test");
  }

  DatasetManifest m;
  m.root = out_dir;
  m.ratios = opt.ratios;
  for (int i = 0; i < opt.n_identities; ++i) {
    const std::string id_name = numbered("id", i, 3);
    const std::uint64_t id_seed = Rng::mix(opt.seed * 1000003ULL + static_cast<std::uint64_t>(i));
    const IdentityParams identity = gen_identity(id_seed, opt.resolution);
    const std::string& split = split_of[i];
    (split == "train" ? m.train : split == "val" ? m.val : m.test).push_back(id_name);
    for (int c = 0; c < opt.clips_per_identity; ++c) {
      const std::string clip_name = numbered("clip", c, 2);
      const std::uint64_t clip_seed = Rng::mix(id_seed + static_cast<std::uint64_t>(c) + 1);
      SyntheticClip clip = gen_clip(identity, opt.frames_per_clip, clip_seed, layout, opt.feature_dim);
      clip.video.fps = opt.fps;
      clip.video.identity_id = id_name;
      const std::string rel = split + "/" + id_name + "/" + clip_name;
      write_clip(out_dir / rel, clip,
                 {{"clip_id", clip_name},
                  {"split", split},
                  {"seeds", {{"identity", id_seed}, {"clip", clip_seed}}}});
      m.clips.push_back({id_name, clip_name, split, rel, opt.frames_per_clip});
    }
  }
  m.config = {{"n_identities", opt.n_identities},
              {"clips_per_identity", opt.clips_per_identity},
              {"frames_per_clip", opt.frames_per_clip},
              {"resolution", {opt.resolution.h, opt.resolution.w}},
              {"K", opt.k},
              {"D", opt.feature_dim},
              {"fps", opt.fps},
              {"seed", opt.seed}};
  nlohmann::json clips = nlohmann::json::array();
  for (const auto& c : m.clips) {
    clips.push_back({{"identity", c.identity_id}, {"clip_id", c.clip_id}, {"split", c.split},
                     {"path", c.path}, {"length", c.length}});
  }
  io::write_json(out_dir / "manifest.json",
                 {{"split_ratios", {opt.ratios.train, opt.ratios.val, opt.ratios.test}},
                  {"splits", {{"train", m.train}, {"val", m.val}, {"test", m.test}}},
                  {"clips", clips},
                  {"config", m.config}});
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& root) {
  const nlohmann::json j = io::read_json(root / "manifest.json");
  DatasetManifest m;
  m.root = root;
  const auto r = j.at("split_ratios").get<std::vector<double>>();
  m.ratios = {r.at(0), r.at(1), r.at(2)};
  m.train = j.at("splits").at("train").get<std::vector<std::string>>();
  m.val = j.at("splits").at("val").get<std::vector<std::string>>();
  m.test = j.at("splits").at("test").get<std::vector<std::string>>();
  for (const auto& c : j.at("clips")) {
    m.clips.push_back({c.at("identity"), c.at("clip_id"), c.at("split"), c.at("path"), c.at("length")});
  }
  m.config = j.at("config");
  return m;
}

std::vector<SyntheticClip> load_split(const DatasetManifest& m, const std::string& split) {
  std::vector<SyntheticClip> out;
  for (const auto& c : m.clips) {
    if (c.split == split) out.push_back(read_clip(m.root / c.path));
  }
  return out;
}

}  // namespace cascade
