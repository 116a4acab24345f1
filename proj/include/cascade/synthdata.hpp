#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cascade/edit_plan.hpp"
#include "cascade/landmarks.hpp"
#include "cascade/tensor.hpp"

namespace cascade {

using RGB = std::array<double, 3>;

/// Procedural face identity. Lengths are in pixels at the resolution the
/// identity was generated for.
struct IdentityParams {
  RGB face_hue{};
  RGB background{};
  RGB lip_color{};
  std::array<double, 2> face_axes{};  // (a, b) horizontal, vertical
  double eye_spacing = 0;
  double mouth_width = 0;
  std::array<double, 3> pose_amp{};    // dx, dy (px), dtheta (rad)
  std::array<double, 3> pose_phase{};  // radians
  double pose_period = 60;             // frames
  Resolution resolution{};
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const IdentityParams& p);
IdentityParams identity_from_json(const nlohmann::json& j);

IdentityParams gen_identity(std::uint64_t seed, Resolution res = {});

/// Mouth-opening range: gap = g_min + envelope * (g_max - g_min).
struct MouthGap {
  double g_min;
  double g_max;
  double at(double envelope) const { return g_min + envelope * (g_max - g_min); }
};
MouthGap mouth_gap(Resolution res);

struct VideoClip {
  std::vector<Tensor> frames;  // each {1,3,H,W} in [0,1]
  double fps = 25.0;
  std::string identity_id;
  std::size_t size() const { return frames.size(); }
};

struct LandmarkSequence {
  std::vector<Keypoints> keypoints;
  int k = 0;
  std::size_t size() const { return keypoints.size(); }
};

/// Per-frame audio features (row-major, dim values per frame) and the scalar
/// mouth-drive envelope they derive from.
struct AudioFeatureSequence {
  std::vector<float> features;
  std::vector<float> envelope;
  int dim = 16;
  std::size_t size() const { return envelope.size(); }
  std::span<const float> frame(std::size_t i) const {
    return {features.data() + i * dim, static_cast<std::size_t>(dim)};
  }
};

/// One generated clip with everything needed to re-render it.
struct SyntheticClip {
  IdentityParams identity;
  std::vector<double> times;  // pose-clock value of every frame
  VideoClip video;
  LandmarkSequence landmarks;
  AudioFeatureSequence audio;
};

/// Envelope of raised-cosine "phoneme" pulses, 3-8 frames each, amplitude
/// in [0.2, 1].
std::vector<float> synth_envelope(int n_frames, std::uint64_t seed);

/// Features per frame: [envelope, delta envelope, fixed projection of the
/// 5-frame envelope window]. dim must be >= 3.
std::vector<float> audio_features(std::span<const float> envelope, int dim);

/// Face geometry at one instant.
Keypoints face_keypoints(const IdentityParams& id, double time, double envelope,
                         const KeypointLayout& layout);
/// Renders the face with 4x4 supersampling.
Tensor render_frame(const IdentityParams& id, double time, double envelope);

SyntheticClip render_clip(const IdentityParams& id, std::vector<double> times,
                          std::vector<float> envelope, const KeypointLayout& layout,
                          int feature_dim, double fps = 25.0);

SyntheticClip gen_clip(const IdentityParams& id, int n_frames, std::uint64_t seed,
                       const KeypointLayout& layout = {}, int feature_dim = 16);

/// Mouth region covering every pose the identity can take.
Rect identity_mouth_roi(const IdentityParams& id);

/// Splices edited audio: out-of-interval frames are copied, the inserted
/// segment is a fresh envelope of new_len frames drawn from spec.seed.
std::pair<AudioFeatureSequence, EditPlan> edit_audio(const AudioFeatureSequence& audio,
                                                     const EditSpec& spec);

/// Ground truth for an edit of a synthetic clip: kept frames are the
/// originals; generated frames are rendered from the edited envelope with the
/// pose clock interpolated linearly between the anchors.
SyntheticClip render_edit_ground_truth(const SyntheticClip& original,
                                       const AudioFeatureSequence& edited_audio,
                                       const EditPlan& plan,
                                       const KeypointLayout& layout);

// ---------------------------------------------------------------------------
// On-disk dataset

struct SplitRatios {
  double train = 0.45;
  double val = 0.05;
  double test = 0.5;
};

/// Train+val share in percent (50, 25 or 12.5) to ratios with a 9:1
/// train:val split of the remainder.
SplitRatios split_ratios_for_percent(double train_val_percent);

struct ClipEntry {
  std::string identity_id;
  std::string clip_id;
  std::string split;
  std::string path;  // relative to root
  int length = 0;
};

struct DatasetManifest {
  std::filesystem::path root;
  SplitRatios ratios;
  std::vector<std::string> train, val, test;
  std::vector<ClipEntry> clips;
  nlohmann::json config;

  const std::vector<std::string>& split(const std::string& name) const;
};

struct DatasetOptions {
  int n_identities = 16;
  int clips_per_identity = 2;
  int frames_per_clip = 200;
  SplitRatios ratios{};
  Resolution resolution{};
  int k = 32;
  int feature_dim = 16;
  double fps = 25.0;
  std::uint64_t seed = 1234;
};

/// Per-split identity counts: floor per split, remainder to train.
std::array<int, 3> split_counts(int n_identities, const SplitRatios& r);

DatasetManifest make_dataset(const DatasetOptions& opt,
                             const std::filesystem::path& out_dir);
DatasetManifest load_manifest(const std::filesystem::path& root);

void write_clip(const std::filesystem::path& dir, const SyntheticClip& clip,
                const nlohmann::json& extra_meta = {});
/// Reads frames, keypoints, features, envelope and meta. Keypoints are empty
/// when the clip has none.
SyntheticClip read_clip(const std::filesystem::path& dir);

/// All clips of the named split, loaded into memory.
std::vector<SyntheticClip> load_split(const DatasetManifest& m, const std::string& split);

}  // namespace cascade
