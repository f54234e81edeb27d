#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "strcn/dataset.hpp"
#include "strcn/image.hpp"

namespace strcn {

/// Accumulated |frame_t - frame_0| over sequences (channel mean first).
/// Accumulation commutes, so partial maps can be merged in any order.
struct DifferenceHeatMap {
  int h = 0;
  int w = 0;
  std::vector<double> values;
  int sequence_count = 0;

  void accumulate(const FrameSequence& magnified);
  void merge(const DifferenceHeatMap& other);
};

struct BinaryMask {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> mask;
  double percentile = 0.0;
  double threshold = 0.0;
  int active_count = 0;
};

/// Keeps values strictly above the (100-p)th nearest-rank percentile.
/// p = 100 is special-cased to an all-ones mask. Throws DegenerateMaskError
/// when nothing exceeds the threshold.
BinaryMask mask_from_heatmap(const DifferenceHeatMap& heatmap, double p);

void save_mask_artifact(const DifferenceHeatMap& heatmap, const BinaryMask& mask,
                        const std::filesystem::path& path);
void load_mask_artifact(const std::filesystem::path& path, DifferenceHeatMap* heatmap,
                        BinaryMask* mask);

/// Masked pixels (row-major order) by time by channel; time axis resampled
/// to target_frames with linear interpolation.
struct AppearanceTensor {
  int active_pixels = 0;
  int frames = 0;
  int channels = 0;
  std::vector<double> data;  // [pixel][frame][channel]

  double at(int pixel, int frame, int ch) const {
    return data[(static_cast<std::size_t>(pixel) * frames + frame) * channels + ch];
  }
};

AppearanceTensor build_strcn_a_input(const FrameSequence& seq, const BinaryMask& mask,
                                     int target_frames = 30);

/// Index of the frame whose difference from frame 0 has the largest pixel
/// standard deviation; ties break to the smallest index in [1, T-1].
int locate_apex(const FrameSequence& seq);

// --- Variational optical flow ---------------------------------------------

struct FlowParams {
  double lorentzian_sigma = 0.03;   // on [0,1] intensities
  double smoothness_weight = 0.05;
  int levels = 3;
  int warp_iterations = 10;
  int solver_iterations = 10;       // Gauss-Seidel sweeps per IRLS pass
  int relaxation_passes = 3;        // IRLS weight updates per warp
};

struct FlowField {
  int h = 0;
  int w = 0;
  std::vector<double> u;  // horizontal displacement, pixels
  std::vector<double> v;  // vertical displacement, pixels
};

struct FlowResult {
  FlowField flow;
  bool converged = true;
  // Energy trace per pyramid level (coarse first); non-increasing within
  // each level by construction.
  std::vector<std::vector<double>> energy_trace;
};

/// Coarse-to-fine Lorentzian-penalized flow between two same-size frames.
/// Color inputs are converted to grayscale first.
FlowResult estimate_flow(const Image& onset, const Image& apex, const FlowParams& params);

/// Robust energy the solver minimizes; exposed for tests.
double flow_energy(const Image& onset_gray, const Image& apex_gray, const FlowField& flow,
                   const FlowParams& params);

/// Normalization statistic: 99th-percentile absolute displacement component,
/// fitted on the training split only.
struct FlowScale {
  double scale = 1.0;
};

FlowScale fit_flow_scale(const std::vector<FlowField>& training_flows);

/// (u,v)/scale flattened as [y][x][2].
std::vector<double> build_strcn_g_input(const FlowField& flow, const FlowScale& scale);

}  // namespace strcn
