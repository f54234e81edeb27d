#include "strcn/spatial.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "strcn/errors.hpp"

namespace strcn {

CropRect crop_rect(const Vec2& eye_left, const Vec2& eye_right, const CropConstants& consts) {
  const double dist = distance(eye_left, eye_right);
  if (dist <= 0.0) throw GeometryError("crop_rect: coincident eye centers");
  CropRect rect;
  rect.topleft.x = eye_left.x - consts.lateral_margin * (eye_right.x - eye_left.x);
  rect.topleft.y = eye_left.y + consts.eye_line_offset * (eye_left.y - eye_right.y);
  rect.height = consts.height_scale * dist;
  rect.width = consts.width_scale * dist;
  return rect;
}

namespace {

// Clamp the rect's corner span to the frame; throws when nothing remains.
struct Span {
  double y0, y1, x0, x1;
};

Span clamp_rect(const Image& frame, const CropRect& rect) {
  if (rect.height <= 0.0 || rect.width <= 0.0) throw GeometryError("crop: empty rect");
  Span s;
  s.y0 = std::max(rect.topleft.y, 0.0);
  s.x0 = std::max(rect.topleft.x, 0.0);
  s.y1 = std::min(rect.topleft.y + rect.height - 1.0, frame.h - 1.0);
  s.x1 = std::min(rect.topleft.x + rect.width - 1.0, frame.w - 1.0);
  if (s.y1 < s.y0 || s.x1 < s.x0) throw GeometryError("crop: rect outside frame");
  return s;
}

}  // namespace

Image crop_frame(const Image& frame, const CropRect& rect, int out_h, int out_w) {
  const Span s = clamp_rect(frame, rect);
  Image out(out_h, out_w, frame.c);
  const double sy = out_h > 1 ? (s.y1 - s.y0) / (out_h - 1) : 0.0;
  const double sx = out_w > 1 ? (s.x1 - s.x0) / (out_w - 1) : 0.0;
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x)
      for (int ch = 0; ch < frame.c; ++ch)
        out.at(y, x, ch) = sample_bilinear(frame, s.y0 + y * sy, s.x0 + x * sx, ch);
  return out;
}

namespace {

// W(r) = 1 - 3r^2 + 2r^3 on [0,1), zero outside.
double lwm_kernel(double r) {
  if (r >= 1.0) return 0.0;
  return 1.0 - 3.0 * r * r + 2.0 * r * r * r;
}

void quadratic_basis(double dx, double dy, double* phi) {
  phi[0] = 1.0;
  phi[1] = dx;
  phi[2] = dy;
  phi[3] = dx * dx;
  phi[4] = dx * dy;
  phi[5] = dy * dy;
}

double eval_quadratic(const double* coeff, double dx, double dy) {
  double phi[6];
  quadratic_basis(dx, dy, phi);
  double v = 0.0;
  for (int k = 0; k < 6; ++k) v += coeff[k] * phi[k];
  return v;
}

}  // namespace

LwmTransform LwmTransform::fit(const std::vector<Vec2>& control, const std::vector<Vec2>& target,
                               int neighborhood) {
  const int n_points = static_cast<int>(control.size());
  if (target.size() != control.size())
    throw StrcnError("lwm_fit: control/target size mismatch");
  if (neighborhood < 6) throw StrcnError("lwm_fit: neighborhood must be >= 6 for quadratic fits");
  if (n_points < neighborhood)
    throw StrcnError("lwm_fit: need at least as many control points as neighborhood size");

  LwmTransform t;
  t.points_ = control;
  t.fits_.resize(n_points);

  std::vector<int> order(n_points);
  for (int i = 0; i < n_points; ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return distance(control[a], control[i]) < distance(control[b], control[i]);
    });
    // order[0] is the point itself; its n-1 nearest neighbors follow.
    const int last = neighborhood - 1;
    LocalFit& fit = t.fits_[i];
    fit.center = control[i];
    fit.radius = distance(control[order[last]], control[i]);
    if (fit.radius <= 0.0) throw SingularFitError("lwm_fit: duplicated control points");

    // Constrained least squares: the constant term is pinned so the local
    // polynomial interpolates this point's own correspondence; the other 5
    // coefficients are fitted over the neighbors.
    const int rows = neighborhood - 1;
    Eigen::MatrixXd A(rows, 5);
    Eigen::VectorXd bx(rows), by(rows);
    for (int r = 0; r < rows; ++r) {
      const Vec2& p = control[order[r + 1]];
      double phi[6];
      quadratic_basis(p.x - fit.center.x, p.y - fit.center.y, phi);
      for (int k = 0; k < 5; ++k) A(r, k) = phi[k + 1];
      bx(r) = target[order[r + 1]].x - target[i].x;
      by(r) = target[order[r + 1]].y - target[i].y;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    qr.setThreshold(1e-10);
    if (qr.rank() < 5)
      throw SingularFitError("lwm_fit: rank-deficient neighborhood around control point " +
                             std::to_string(i));
    const Eigen::VectorXd cx = qr.solve(bx);
    const Eigen::VectorXd cy = qr.solve(by);
    fit.coeff_x[0] = target[i].x;
    fit.coeff_y[0] = target[i].y;
    for (int k = 0; k < 5; ++k) {
      fit.coeff_x[k + 1] = cx(k);
      fit.coeff_y[k + 1] = cy(k);
    }
  }
  return t;
}

Vec2 LwmTransform::apply(const Vec2& p, bool* inside_support) const {
  double weight_sum = 0.0;
  double fx = 0.0, fy = 0.0;
  double best_dist = std::numeric_limits<double>::infinity();
  int nearest = 0;
  for (std::size_t i = 0; i < fits_.size(); ++i) {
    const LocalFit& fit = fits_[i];
    const double dx = p.x - fit.center.x;
    const double dy = p.y - fit.center.y;
    const double dist = std::sqrt(dx * dx + dy * dy);
    if (dist < best_dist) {
      best_dist = dist;
      nearest = static_cast<int>(i);
    }
    const double w = lwm_kernel(dist / fit.radius);
    if (w > 0.0) {
      weight_sum += w;
      fx += w * eval_quadratic(fit.coeff_x, dx, dy);
      fy += w * eval_quadratic(fit.coeff_y, dx, dy);
    }
  }
  if (weight_sum > 0.0) {
    if (inside_support) *inside_support = true;
    return {fx / weight_sum, fy / weight_sum};
  }
  // Nearest-control extrapolation outside every kernel support.
  if (inside_support) *inside_support = false;
  const LocalFit& fit = fits_[nearest];
  return {eval_quadratic(fit.coeff_x, p.x - fit.center.x, p.y - fit.center.y),
          eval_quadratic(fit.coeff_y, p.x - fit.center.x, p.y - fit.center.y)};
}

Image lwm_warp(const LwmTransform& transform, const Image& source, int out_h, int out_w,
               std::vector<std::uint8_t>* valid) {
  Image out(out_h, out_w, source.c);
  if (valid) valid->assign(static_cast<std::size_t>(out_h) * out_w, 1);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      bool inside = true;
      const Vec2 src = transform.apply({static_cast<double>(x), static_cast<double>(y)}, &inside);
      if (valid && !inside) (*valid)[static_cast<std::size_t>(y) * out_w + x] = 0;
      for (int ch = 0; ch < source.c; ++ch)
        out.at(y, x, ch) = sample_bilinear(source, src.y, src.x, ch);
    }
  return out;
}

FrameSequence align_sequence(const FrameSequence& seq, const LandmarkTrack& track,
                             const CropConstants& consts, int out_h, int out_w,
                             int neighborhood) {
  track.validate(seq.length());
  const FrameLandmarks& ref = track.frames[0];
  const CropRect rect = crop_rect(ref.eye_left, ref.eye_right, consts);

  FrameSequence out;
  out.fps = seq.fps;
  out.subject_id = seq.subject_id;
  out.label = seq.label;
  out.source_id = seq.source_id;
  out.frames.reserve(seq.frames.size());

  // Output grid in reference coordinates (same clamped span as crop_frame).
  const Image& first = seq.frames[0];
  const double y0 = std::max(rect.topleft.y, 0.0);
  const double x0 = std::max(rect.topleft.x, 0.0);
  const double y1 = std::min(rect.topleft.y + rect.height - 1.0, first.h - 1.0);
  const double x1 = std::min(rect.topleft.x + rect.width - 1.0, first.w - 1.0);
  if (y1 < y0 || x1 < x0) throw GeometryError("align_sequence: crop rect outside frame");
  const double sy = out_h > 1 ? (y1 - y0) / (out_h - 1) : 0.0;
  const double sx = out_w > 1 ? (x1 - x0) / (out_w - 1) : 0.0;

  const std::vector<Vec2> ref_points(ref.points.begin(), ref.points.end());
  for (int t = 0; t < seq.length(); ++t) {
    const Image& src = seq.frames[t];
    Image frame(out_h, out_w, src.c);
    if (t == 0) {
      frame = crop_frame(src, rect, out_h, out_w);
    } else {
      const std::vector<Vec2> cur_points(track.frames[t].points.begin(),
                                         track.frames[t].points.end());
      const LwmTransform warp = LwmTransform::fit(ref_points, cur_points, neighborhood);
      for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
          const Vec2 p = warp.apply({x0 + x * sx, y0 + y * sy});
          for (int ch = 0; ch < src.c; ++ch)
            frame.at(y, x, ch) = sample_bilinear(src, p.y, p.x, ch);
        }
    }
    // Warp interpolation can overshoot [0,1] by rounding only; clamp keeps
    // the sequence invariant intact.
    for (double& v : frame.data) v = std::clamp(v, 0.0, 1.0);
    out.frames.push_back(std::move(frame));
  }
  out.validate();
  return out;
}

}  // namespace strcn
