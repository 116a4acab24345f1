#include <doctest.h>

#include <cmath>

#include "cascade/landmarks.hpp"
#include "cascade/synthdata.hpp"
#include "helpers.hpp"

using namespace cascade;

TEST_SUITE("landmarks") {
  TEST_CASE("empty keypoint set rasterizes to zeros") {
    const auto img = rasterize(std::span<const Point2>{}, std::span<const Region>{}, Resolution{});
    CHECK(img.image.shape() == Shape{1, 3, 64, 64});
    CHECK(testutil::peak(img.image) == 0.0);
  }

  TEST_CASE("single mouth keypoint peaks at its pixel in the blue channel") {
    const Point2 p{32, 32};
    const Region r = Region::Mouth;
    const auto img = rasterize(std::span(&p, 1), std::span(&r, 1), Resolution{}).image;
    CHECK(img.at(0, 2, 32, 32) == 1.0f);
    float best = 0;
    int by = -1, bx = -1;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (img.at(0, 2, y, x) > best) best = img.at(0, 2, y, x), by = y, bx = x;
    CHECK(by == 32);
    CHECK(bx == 32);
    for (int c : {0, 1})
      for (int i = 0; i < 64 * 64; ++i) CHECK(img.plane(0, c)[i] == 0.0f);
  }

  TEST_CASE("rasterization is translation equivariant for interior keypoints") {
    const auto id = gen_identity(5);
    const KeypointLayout layout;
    const Keypoints kp = face_keypoints(id, 3.0, 0.4, layout);
    Keypoints shifted = kp;
    for (auto& p : shifted) p.x += 3;
    const auto a = rasterize(kp, layout, {}).image;
    const auto b = rasterize(shifted, layout, {}).image;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 64; ++y)
        for (int x = 3; x < 64; ++x) CHECK(b.at(0, c, y, x) == doctest::Approx(a.at(0, c, y, x - 3)).epsilon(1e-6));
  }

  TEST_CASE("mouth aperture is the lip-center distance") {
    const KeypointLayout layout;
    Keypoints kp(layout.total(), Point2{10, 10});
    CHECK(mouth_aperture(kp, layout) == 0.0);
    kp[layout.upper_lip_center()] = {32, 30};
    kp[layout.lower_lip_center()] = {32, 34};
    CHECK(mouth_aperture(kp, layout) == doctest::Approx(4.0));
  }

  TEST_CASE("mouth aperture over a generated clip follows the envelope") {
    const auto id = gen_identity(11);
    const auto clip = gen_clip(id, 60, 3);
    const auto gap = mouth_gap(id.resolution);
    const KeypointLayout layout = KeypointLayout::for_count(clip.landmarks.k);
    for (std::size_t i = 0; i < clip.landmarks.size(); ++i)
      CHECK(mouth_aperture(clip.landmarks.keypoints[i], layout) ==
            doctest::Approx(gap.at(clip.audio.envelope[i])).epsilon(1e-4));
  }

  TEST_CASE("aperture read from rendered frames") {
    const auto id = gen_identity(17);
    const Rect roi = identity_mouth_roi(id);
    const auto gap = mouth_gap(id.resolution);
    CHECK(aperture_from_frame(render_frame(id, 0.0, 0.0), roi) <= 1.0);
    const double open = aperture_from_frame(render_frame(id, 7.0, 1.0), roi);
    CHECK(std::abs(open - gap.g_max) <= 1.0);
    CHECK(aperture_from_frame(Tensor({1, 3, 64, 64}, 1.0f), roi) == 0.0);
  }

  TEST_CASE("landmark mouth signal grows with the opening") {
    const auto id = gen_identity(2);
    const KeypointLayout layout;
    std::vector<Keypoints> frames{face_keypoints(id, 0, 0.0, layout), face_keypoints(id, 0, 1.0, layout)};
    const Rect roi = mouth_roi(frames, layout, 3, {});
    const double closed = landmark_mouth_signal(rasterize(frames[0], layout, {}).image, roi);
    const double open = landmark_mouth_signal(rasterize(frames[1], layout, {}).image, roi);
    CHECK(open > closed);
  }

  TEST_CASE("scaling the mouth opening") {
    const auto id = gen_identity(4);
    const KeypointLayout layout;
    const Keypoints kp = face_keypoints(id, 0, 0.8, layout);
    const Keypoints same = scale_mouth_opening(kp, layout, 1.0);
    for (int i = 0; i < layout.total(); ++i) {
      CHECK(same[i].x == kp[i].x);
      CHECK(same[i].y == doctest::Approx(kp[i].y).epsilon(1e-6));
    }
    const Keypoints half = scale_mouth_opening(kp, layout, 0.5);
    // only the vertical part of the lip-center gap halves
    const Point2 u = kp[layout.upper_lip_center()], l = kp[layout.lower_lip_center()];
    CHECK(mouth_aperture(half, layout) == doctest::Approx(std::hypot(l.x - u.x, 0.5 * (l.y - u.y))).epsilon(1e-5));
    for (int i = 0; i < layout.mouth_begin() + 2; ++i) {
      CHECK(half[i].x == kp[i].x);
      CHECK(half[i].y == kp[i].y);
    }
    const Keypoints shut = scale_mouth_opening(kp, layout, 0.0);
    const float line = 0.5f * (kp[layout.mouth_begin()].y + kp[layout.mouth_begin() + 1].y);
    for (int i = layout.mouth_begin() + 2; i < layout.total(); ++i) CHECK(shut[i].y == doctest::Approx(line));
    CHECK_THROWS_AS(scale_mouth_opening(Keypoints(5), layout, 1.0), std::invalid_argument);
  }

  TEST_CASE("layout for other keypoint counts") {
    const auto l = KeypointLayout::for_count(32);
    CHECK(l.total() == 32);
    CHECK(l.region(0) == Region::Head);
    CHECK(l.region(l.mouth_begin()) == Region::Mouth);
    CHECK_THROWS_AS(KeypointLayout::for_count(3), std::invalid_argument);
  }
}
