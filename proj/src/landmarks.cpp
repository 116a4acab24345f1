#include "cascade/landmarks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cascade {

KeypointLayout KeypointLayout::for_count(int k) {
  if (k < 16) throw std::invalid_argument("keypoint count must be at least 16");
  KeypointLayout l;
  l.head = k * 3 / 8;
  l.eyes = (k / 4) & ~1;
  l.mouth = k - l.head - l.eyes;
  return l;
}

Region KeypointLayout::region(int index) const {
  if (index < head) return Region::Head;
  if (index < head + eyes) return Region::Eyes;
  return Region::Mouth;
}

std::vector<Region> KeypointLayout::regions() const {
  std::vector<Region> r(total());
  for (int i = 0; i < total(); ++i) r[i] = region(i);
  return r;
}

LandmarkImage rasterize(std::span<const Point2> keypoints,
                        std::span<const Region> regions, Resolution res) {
  if (keypoints.size() != regions.size()) {
    throw std::invalid_argument("rasterize: one region per keypoint required");
  }
  LandmarkImage out{Tensor({1, 3, res.h, res.w}), static_cast<int>(keypoints.size())};
  const double sigma = res.scale();
  const double radius = kSplatRadiusSigmas * sigma;
  const double r2max = radius * radius;
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t k = 0; k < keypoints.size(); ++k) {
    const double kx = keypoints[k].x;
    const double ky = keypoints[k].y;
    if (!(kx >= 0.0 && kx <= res.w - 1 && ky >= 0.0 && ky <= res.h - 1)) {
      throw std::invalid_argument("rasterize: keypoint outside frame");
    }
    const int channel = static_cast<int>(regions[k]);
    float* plane = out.image.plane(0, channel);
    const int x0 = std::max(0, static_cast<int>(std::ceil(kx - radius)));
    const int x1 = std::min(res.w - 1, static_cast<int>(std::floor(kx + radius)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(ky - radius)));
    const int y1 = std::min(res.h - 1, static_cast<int>(std::floor(ky + radius)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - kx;
        const double dy = y - ky;
        const double r2 = dx * dx + dy * dy;
        if (r2 >= r2max) continue;
        const float v = static_cast<float>(std::exp(-r2 * inv2s2));
        float& dst = plane[y * res.w + x];
        dst = std::max(dst, v);
      }
  }
  return out;
}

LandmarkImage rasterize(const Keypoints& keypoints, const KeypointLayout& layout,
                        Resolution res) {
  if (static_cast<int>(keypoints.size()) != layout.total()) {
    throw std::invalid_argument("rasterize: keypoint count does not match layout");
  }
  const auto regions = layout.regions();
  return rasterize(keypoints, regions, res);
}

double mouth_aperture(const Keypoints& keypoints, const KeypointLayout& layout) {
  const Point2 a = keypoints.at(layout.upper_lip_center());
  const Point2 b = keypoints.at(layout.lower_lip_center());
  return std::hypot(static_cast<double>(a.x) - b.x, static_cast<double>(a.y) - b.y);
}

namespace {

void check_roi(const Tensor& frame, Rect roi) {
  const Shape s = frame.shape();
  if (roi.w <= 0 || roi.h <= 0) throw std::invalid_argument("degenerate ROI");
  if (roi.x < 0 || roi.y < 0 || roi.x + roi.w > s.w || roi.y + roi.h > s.h) {
    throw std::invalid_argument("ROI outside frame");
  }
}

}  // namespace

double aperture_from_frame(const Tensor& frame, Rect roi, ApertureThresholds th) {
  check_roi(frame, roi);
  if (frame.shape().c != 3) throw std::invalid_argument("aperture: RGB frame expected");
  double extent = 0.0;
  for (int y = roi.y; y < roi.y + roi.h; ++y) {
    double row_dark = 0.0;
    for (int x = roi.x; x < roi.x + roi.w; ++x) {
      const double lum = 0.299 * frame.at(0, 0, y, x) + 0.587 * frame.at(0, 1, y, x) +
                         0.114 * frame.at(0, 2, y, x);
      const double d = std::clamp((th.light - lum) / (th.light - th.dark), 0.0, 1.0);
      row_dark = std::max(row_dark, d);
    }
    extent += row_dark;
  }
  return extent;
}

double landmark_mouth_signal(const Tensor& landmark_image, Rect roi) {
  check_roi(landmark_image, roi);
  double mass = 0.0, my = 0.0, myy = 0.0;
  for (int y = roi.y; y < roi.y + roi.h; ++y)
    for (int x = roi.x; x < roi.x + roi.w; ++x) {
      const double v = std::max(0.0f, landmark_image.at(0, 2, y, x));
      mass += v;
      my += v * y;
      myy += v * y * y;
    }
  if (mass <= 1e-9) return 0.0;
  const double mean = my / mass;
  return std::sqrt(std::max(0.0, myy / mass - mean * mean));
}

Keypoints scale_mouth_opening(const Keypoints& kp, const KeypointLayout& layout, double factor) {
  if (static_cast<int>(kp.size()) != layout.total()) {
    throw std::invalid_argument("scale_mouth_opening: keypoint count does not match layout");
  }
  Keypoints out = kp;
  const int m = layout.mouth_begin();
  const double line = 0.5 * (kp[m].y + kp[m + 1].y);
  for (int i = m + 2; i < layout.total(); ++i) {
    out[i].y = static_cast<float>(line + factor * (kp[i].y - line));
  }
  return out;
}

Rect mouth_roi(std::span<const Keypoints> frames, const KeypointLayout& layout,
               int margin, Resolution res) {
  if (frames.empty()) throw std::invalid_argument("mouth_roi: no frames");
  double x0 = res.w, y0 = res.h, x1 = 0, y1 = 0;
  for (const auto& kp : frames)
    for (int i = layout.mouth_begin(); i < layout.total(); ++i) {
      x0 = std::min<double>(x0, kp.at(i).x);
      x1 = std::max<double>(x1, kp.at(i).x);
      y0 = std::min<double>(y0, kp.at(i).y);
      y1 = std::max<double>(y1, kp.at(i).y);
    }
  Rect r;
  r.x = std::max(0, static_cast<int>(std::floor(x0)) - margin);
  r.y = std::max(0, static_cast<int>(std::floor(y0)) - margin);
  const int xe = std::min(res.w, static_cast<int>(std::ceil(x1)) + margin + 1);
  const int ye = std::min(res.h, static_cast<int>(std::ceil(y1)) + margin + 1);
  r.w = xe - r.x;
  r.h = ye - r.y;
  return r;
}

}  // namespace cascade
