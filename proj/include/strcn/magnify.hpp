#pragma once

#include <vector>

#include "strcn/dataset.hpp"
#include "strcn/image.hpp"

namespace strcn {

/// Difference-of-Gaussians pyramid; bands[0] is the finest level.
/// Reconstruction is exact by construction.
struct LaplacianPyramid {
  std::vector<Image> bands;
  Image residual;
  int levels() const { return static_cast<int>(bands.size()); }
};

LaplacianPyramid build_pyramid(const Image& img, int levels);
Image reconstruct(const LaplacianPyramid& pyramid);

struct MagnificationConfig {
  double alpha = 8.0;
  double spatial_wavelength = 16.0;  // pixels, bounds the usable amplification
  double cutoff_lo = 0.05;           // Hz
  double cutoff_hi = 0.4;            // Hz
  int levels = 4;

  void validate(double fps) const;
};

/// First-order IIR bandpass: difference of two one-pole lowpasses with
/// poles mapped from the Hz cutoffs, both started at the first sample.
std::vector<double> iir_bandpass(const std::vector<double>& series, double cutoff_lo,
                                 double cutoff_hi, double fps);

/// Amplification actually applied at one pixel of one band:
/// min(alpha, max(0, wavelength / (8 |band_value|) - 1)).
double bounded_alpha(double alpha, double band_value, double spatial_wavelength);

/// Eulerian magnification: per-band temporal filtering, bounded add-back,
/// reconstruction, and a final clip to [0,1].
FrameSequence magnify(const FrameSequence& seq, const MagnificationConfig& cfg);

}  // namespace strcn
