#pragma once

#include <vector>

#include "strcn/dataset.hpp"
#include "strcn/geometry.hpp"
#include "strcn/image.hpp"

namespace strcn {

struct CropConstants {
  double eye_line_offset = 0.4;   // scales (0, y_left - y_right)
  double lateral_margin = 0.6;    // scales (x_right - x_left, 0)
  double height_scale = 2.2;      // times inter-ocular distance
  double width_scale = 1.8;       // times inter-ocular distance
};

struct CropRect {
  Vec2 topleft;
  double height = 0.0;
  double width = 0.0;
};

/// Face crop window from the two eye centers. Throws GeometryError when the
/// eyes coincide.
CropRect crop_rect(const Vec2& eye_left, const Vec2& eye_right, const CropConstants& consts);

/// Extracts the rect (clamped to the frame) and resizes to out_h x out_w with
/// align-corners bilinear sampling. Throws GeometryError if the rect misses
/// the frame entirely.
Image crop_frame(const Image& frame, const CropRect& rect, int out_h, int out_w);

/// Local weighted mean transform: per control point, a quadratic polynomial
/// fitted over its n-point neighborhood and constrained to interpolate the
/// point's own correspondence; evaluation blends the local polynomials with
/// a compact smooth kernel normalized by each point's neighborhood radius.
class LwmTransform {
 public:
  /// Fits the map control[i] -> target[i]. neighborhood >= 6 points.
  /// Throws SingularFitError when a local fit is rank deficient.
  static LwmTransform fit(const std::vector<Vec2>& control, const std::vector<Vec2>& target,
                          int neighborhood = 12);

  /// Evaluates the blended map. Outside every kernel support the nearest
  /// control point's polynomial is used and *inside_support is set false.
  Vec2 apply(const Vec2& p, bool* inside_support = nullptr) const;

  int size() const { return static_cast<int>(points_.size()); }

 private:
  struct LocalFit {
    Vec2 center;
    double radius;           // distance to the (n-1)th nearest control point
    double coeff_x[6];       // quadratic in (dx, dy) around center
    double coeff_y[6];
  };
  std::vector<Vec2> points_;
  std::vector<LocalFit> fits_;
};

/// Inverse-mapped warp: each output pixel (x, y) samples the source at
/// transform(x, y). The optional valid mask is 0 where the blend had no
/// kernel support and the nearest-control fallback was used.
Image lwm_warp(const LwmTransform& transform, const Image& source, int out_h, int out_w,
               std::vector<std::uint8_t>* valid = nullptr);

/// Aligns every frame to frame 0 via LWM on the landmark track, then crops
/// with the frame-0 eye geometry and resizes. Sampling is composed (one
/// interpolation per output pixel).
FrameSequence align_sequence(const FrameSequence& seq, const LandmarkTrack& track,
                             const CropConstants& consts, int out_h, int out_w,
                             int neighborhood = 12);

}  // namespace strcn
