#include "strcn/magnify.hpp"

#include <algorithm>
#include <cmath>

#include "strcn/errors.hpp"

namespace strcn {

namespace {

constexpr double kGauss5[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

// Symmetric padding index.
int reflect(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

Image blur5(const Image& img) {
  Image tmp(img.h, img.w, img.c);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) {
        double s = 0.0;
        for (int k = -2; k <= 2; ++k) s += kGauss5[k + 2] * img.at(y, reflect(x + k, img.w), ch);
        tmp.at(y, x, ch) = s;
      }
  Image out(img.h, img.w, img.c);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) {
        double s = 0.0;
        for (int k = -2; k <= 2; ++k) s += kGauss5[k + 2] * tmp.at(reflect(y + k, img.h), x, ch);
        out.at(y, x, ch) = s;
      }
  return out;
}

Image downsample2(const Image& img) {
  const Image smooth = blur5(img);
  Image out((img.h + 1) / 2, (img.w + 1) / 2, img.c);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) out.at(y, x, ch) = smooth.at(2 * y, 2 * x, ch);
  return out;
}

}  // namespace

LaplacianPyramid build_pyramid(const Image& img, int levels) {
  if (levels < 1) throw StrcnError("build_pyramid: need at least 1 level");
  if (img.h < (1 << levels) || img.w < (1 << levels))
    throw StrcnError("build_pyramid: image too small for " + std::to_string(levels) + " levels");

  LaplacianPyramid pyr;
  Image current = img;
  for (int l = 0; l < levels; ++l) {
    Image down = downsample2(current);
    Image up = resize_bilinear(down, current.h, current.w);
    Image band(current.h, current.w, current.c);
    for (std::size_t i = 0; i < band.data.size(); ++i)
      band.data[i] = current.data[i] - up.data[i];
    pyr.bands.push_back(std::move(band));
    current = std::move(down);
  }
  pyr.residual = std::move(current);
  return pyr;
}

Image reconstruct(const LaplacianPyramid& pyramid) {
  Image current = pyramid.residual;
  for (int l = pyramid.levels() - 1; l >= 0; --l) {
    const Image& band = pyramid.bands[l];
    Image up = resize_bilinear(current, band.h, band.w);
    for (std::size_t i = 0; i < up.data.size(); ++i) up.data[i] += band.data[i];
    current = std::move(up);
  }
  return current;
}

void MagnificationConfig::validate(double fps) const {
  if (alpha < 0.0) throw ConfigError("magnify: alpha must be >= 0");
  if (spatial_wavelength <= 0.0) throw ConfigError("magnify: spatial wavelength must be > 0");
  if (levels < 1) throw ConfigError("magnify: levels must be >= 1");
  if (!(0.0 < cutoff_lo && cutoff_lo < cutoff_hi && cutoff_hi < fps / 2.0))
    throw ConfigError("magnify: need 0 < cutoff_lo < cutoff_hi < fps/2");
}

std::vector<double> iir_bandpass(const std::vector<double>& series, double cutoff_lo,
                                 double cutoff_hi, double fps) {
  if (series.size() < 2) throw StrcnError("iir_bandpass: series too short");
  const double r_hi = 1.0 - std::exp(-6.283185307179586 * cutoff_hi / fps);
  const double r_lo = 1.0 - std::exp(-6.283185307179586 * cutoff_lo / fps);
  std::vector<double> out(series.size());
  double y_hi = series[0];
  double y_lo = series[0];
  out[0] = 0.0;
  for (std::size_t t = 1; t < series.size(); ++t) {
    y_hi += r_hi * (series[t] - y_hi);
    y_lo += r_lo * (series[t] - y_lo);
    out[t] = y_hi - y_lo;
  }
  return out;
}

double bounded_alpha(double alpha, double band_value, double spatial_wavelength) {
  const double magnitude = std::abs(band_value);
  if (magnitude < 1e-300) return alpha;
  const double alpha_c = std::max(0.0, spatial_wavelength / (8.0 * magnitude) - 1.0);
  return std::min(alpha, alpha_c);
}

FrameSequence magnify(const FrameSequence& seq, const MagnificationConfig& cfg) {
  if (seq.length() < 2) throw StrcnError("magnify: need at least 2 frames");
  cfg.validate(seq.fps);

  const int T = seq.length();
  std::vector<LaplacianPyramid> pyramids;
  pyramids.reserve(T);
  for (const Image& frame : seq.frames) pyramids.push_back(build_pyramid(frame, cfg.levels));

  // Temporal pass over every pyramid band pixel; the residual lowpass is
  // carried through unamplified.
  std::vector<double> series(T), filtered;
  for (int l = 0; l < cfg.levels; ++l) {
    const std::size_t n = pyramids[0].bands[l].data.size();
    for (std::size_t i = 0; i < n; ++i) {
      for (int t = 0; t < T; ++t) series[t] = pyramids[t].bands[l].data[i];
      filtered = iir_bandpass(series, cfg.cutoff_lo, cfg.cutoff_hi, seq.fps);
      for (int t = 0; t < T; ++t) {
        const double delta = filtered[t];
        pyramids[t].bands[l].data[i] =
            series[t] + bounded_alpha(cfg.alpha, delta, cfg.spatial_wavelength) * delta;
      }
    }
  }

  FrameSequence out;
  out.fps = seq.fps;
  out.subject_id = seq.subject_id;
  out.label = seq.label;
  out.source_id = seq.source_id;
  out.frames.reserve(T);
  for (int t = 0; t < T; ++t) {
    Image frame = reconstruct(pyramids[t]);
    for (double& v : frame.data) v = std::clamp(v, 0.0, 1.0);
    out.frames.push_back(std::move(frame));
  }
  out.validate();
  return out;
}

}  // namespace strcn
