#pragma once

#include <span>
#include <vector>

#include "cascade/tensor.hpp"

namespace cascade {

struct Resolution {
  int h = 64;
  int w = 64;
  friend bool operator==(const Resolution&, const Resolution&) = default;
  /// Geometry is specified at 64 px and scaled by this factor.
  double scale() const { return h / 64.0; }
};

/// Pixel coordinates; x is the column, y the row. Pixel centers sit on
/// integer coordinates.
struct Point2 {
  float x = 0.0f;
  float y = 0.0f;
};
using Keypoints = std::vector<Point2>;

enum class Region { Head, Eyes, Mouth };

/// Index layout of a keypoint set: head contour first, then both eyes, then
/// the mouth. Within the mouth block the order is left corner, right corner,
/// inner upper-lip center, inner lower-lip center, then outer-lip points
/// alternating upper and lower.
struct KeypointLayout {
  int head = 12;
  int eyes = 8;
  int mouth = 12;

  static KeypointLayout for_count(int k);
  int total() const { return head + eyes + mouth; }
  int mouth_begin() const { return head + eyes; }
  int upper_lip_center() const { return mouth_begin() + 2; }
  int lower_lip_center() const { return mouth_begin() + 3; }
  Region region(int index) const;
  std::vector<Region> regions() const;
};

/// Dense-landmark image: region-coded Gaussian dots on a zero background.
struct LandmarkImage {
  Tensor image;  // {1,3,H,W}
  int source_k = 0;
};

/// Splat radius in sigmas; pixels further away stay exactly zero.
inline constexpr double kSplatRadiusSigmas = 3.0;

/// Gaussian splat per keypoint (sigma 1 px at 64x64, scaled with resolution),
/// head -> R, eyes -> G, mouth -> B, combined by per-pixel maximum.
LandmarkImage rasterize(std::span<const Point2> keypoints,
                        std::span<const Region> regions, Resolution res);
LandmarkImage rasterize(const Keypoints& keypoints, const KeypointLayout& layout,
                        Resolution res);

/// Distance between the inner upper- and lower-lip center keypoints.
double mouth_aperture(const Keypoints& keypoints, const KeypointLayout& layout);

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
};

struct ApertureThresholds {
  double dark = 0.12;   // luminance at or below counts fully as mouth interior
  double light = 0.32;  // luminance at or above counts as not interior
};

/// Vertical extent in pixels of the dark mouth-interior blob inside roi.
/// Each row contributes its darkest pixel's darkness, a soft 0..1 ramp
/// between the two luminance thresholds.
double aperture_from_frame(const Tensor& frame, Rect roi,
                           ApertureThresholds th = {});

/// Mouth opening read off a landmark image: intensity-weighted vertical
/// standard deviation of the mouth channel inside roi.
double landmark_mouth_signal(const Tensor& landmark_image, Rect roi);

/// Mouth keypoints with their vertical offset from the corner line scaled by
/// factor (1 keeps the set, 0 closes the mouth). Other keypoints are copied.
Keypoints scale_mouth_opening(const Keypoints& kp, const KeypointLayout& layout, double factor);

/// Bounding box of the mouth keypoints over a set of frames, grown by margin
/// and clipped to the frame.
Rect mouth_roi(std::span<const Keypoints> frames, const KeypointLayout& layout,
               int margin, Resolution res);

}  // namespace cascade
