#include "strcn/connectivity.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "strcn/errors.hpp"

namespace strcn {

void DifferenceHeatMap::accumulate(const FrameSequence& magnified) {
  const Image first = to_gray(magnified.frames[0]);
  if (values.empty()) {
    h = first.h;
    w = first.w;
    values.assign(static_cast<std::size_t>(h) * w, 0.0);
  }
  if (first.h != h || first.w != w)
    throw ShapeError("difference_heatmap: sequence dimensions do not match accumulator");
  for (int t = 0; t < magnified.length(); ++t) {
    const Image g = to_gray(magnified.frames[t]);
    for (std::size_t i = 0; i < values.size(); ++i)
      values[i] += std::abs(g.data[i] - first.data[i]);
  }
  ++sequence_count;
}

void DifferenceHeatMap::merge(const DifferenceHeatMap& other) {
  if (values.empty()) {
    *this = other;
    return;
  }
  if (other.h != h || other.w != w) throw ShapeError("difference_heatmap: merge size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) values[i] += other.values[i];
  sequence_count += other.sequence_count;
}

BinaryMask mask_from_heatmap(const DifferenceHeatMap& heatmap, double p) {
  if (!(p > 0.0 && p <= 100.0)) throw ConfigError("mask: percentile must be in (0, 100]");
  if (heatmap.values.empty()) throw StrcnError("mask: empty heat map");

  BinaryMask out;
  out.h = heatmap.h;
  out.w = heatmap.w;
  out.percentile = p;
  out.mask.assign(heatmap.values.size(), 0);

  if (p == 100.0) {
    // Under strict '>' no threshold selects everything; by convention the
    // full-percentile mask keeps all pixels.
    std::fill(out.mask.begin(), out.mask.end(), 1);
    out.active_count = static_cast<int>(out.mask.size());
    out.threshold = -std::numeric_limits<double>::infinity();
    return out;
  }

  std::vector<double> sorted(heatmap.values);
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  // Nearest-rank percentile at (100 - p).
  const std::size_t rank =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((100.0 - p) / 100.0 * n)));
  out.threshold = sorted[rank - 1];

  int count = 0;
  for (std::size_t i = 0; i < heatmap.values.size(); ++i) {
    if (heatmap.values[i] > out.threshold) {
      out.mask[i] = 1;
      ++count;
    }
  }
  out.active_count = count;
  if (count == 0)
    throw DegenerateMaskError("mask: no heat-map value strictly exceeds the threshold");
  return out;
}

namespace {
constexpr char kMaskMagic[8] = {'S', 'T', 'R', 'C', 'N', 'M', 'K', '1'};
}

void save_mask_artifact(const DifferenceHeatMap& heatmap, const BinaryMask& mask,
                        const std::filesystem::path& path) {
  if (heatmap.h != mask.h || heatmap.w != mask.w)
    throw ShapeError("mask artifact: heat map and mask sizes differ");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write mask artifact: " + path.string());
  out.write(kMaskMagic, sizeof(kMaskMagic));
  const std::int32_t h = mask.h, w = mask.w;
  out.write(reinterpret_cast<const char*>(&h), sizeof(h));
  out.write(reinterpret_cast<const char*>(&w), sizeof(w));
  out.write(reinterpret_cast<const char*>(&mask.percentile), sizeof(double));
  out.write(reinterpret_cast<const char*>(&mask.threshold), sizeof(double));
  out.write(reinterpret_cast<const char*>(heatmap.values.data()),
            static_cast<std::streamsize>(heatmap.values.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(mask.mask.data()),
            static_cast<std::streamsize>(mask.mask.size()));
  if (!out) throw IoError("mask artifact write failed: " + path.string());
}

void load_mask_artifact(const std::filesystem::path& path, DifferenceHeatMap* heatmap,
                        BinaryMask* mask) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open mask artifact: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMaskMagic, sizeof(magic)) != 0)
    throw IoError("bad mask artifact magic: " + path.string());
  std::int32_t h = 0, w = 0;
  double percentile = 0.0, threshold = 0.0;
  in.read(reinterpret_cast<char*>(&h), sizeof(h));
  in.read(reinterpret_cast<char*>(&w), sizeof(w));
  in.read(reinterpret_cast<char*>(&percentile), sizeof(double));
  in.read(reinterpret_cast<char*>(&threshold), sizeof(double));
  const std::size_t n = static_cast<std::size_t>(h) * w;
  std::vector<double> values(n);
  std::vector<std::uint8_t> bits(n);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)));
  in.read(reinterpret_cast<char*>(bits.data()), static_cast<std::streamsize>(n));
  if (!in) throw IoError("truncated mask artifact: " + path.string());
  if (heatmap) {
    heatmap->h = h;
    heatmap->w = w;
    heatmap->values = std::move(values);
  }
  if (mask) {
    mask->h = h;
    mask->w = w;
    mask->percentile = percentile;
    mask->threshold = threshold;
    mask->mask = std::move(bits);
    mask->active_count = static_cast<int>(std::count(mask->mask.begin(), mask->mask.end(), 1));
  }
}

AppearanceTensor build_strcn_a_input(const FrameSequence& seq, const BinaryMask& mask,
                                     int target_frames) {
  if (seq.length() < 2) throw StrcnError("strcn-a input: need at least 2 frames");
  if (seq.height() != mask.h || seq.width() != mask.w)
    throw ShapeError("strcn-a input: mask and frame dimensions differ");
  if (mask.active_count <= 0) throw DegenerateMaskError("strcn-a input: empty mask");

  const int T = seq.length();
  const int C = seq.channels();
  const int d2 = mask.active_count;

  // Masked pixels in row-major scan order, per original frame.
  std::vector<double> columns(static_cast<std::size_t>(d2) * T * C);
  for (int t = 0; t < T; ++t) {
    const Image& f = seq.frames[t];
    int row = 0;
    for (int i = 0; i < mask.h * mask.w; ++i) {
      if (!mask.mask[i]) continue;
      for (int ch = 0; ch < C; ++ch)
        columns[(static_cast<std::size_t>(row) * T + t) * C + ch] =
            f.data[static_cast<std::size_t>(i) * C + ch];
      ++row;
    }
  }

  AppearanceTensor out;
  out.active_pixels = d2;
  out.frames = target_frames;
  out.channels = C;
  out.data.assign(static_cast<std::size_t>(d2) * target_frames * C, 0.0);
  for (int k = 0; k < target_frames; ++k) {
    const double pos = target_frames > 1
                           ? static_cast<double>(k) * (T - 1) / (target_frames - 1)
                           : 0.0;
    const int t0 = std::min(static_cast<int>(std::floor(pos)), T - 1);
    const int t1 = std::min(t0 + 1, T - 1);
    const double f = pos - t0;
    for (int row = 0; row < d2; ++row)
      for (int ch = 0; ch < C; ++ch) {
        const double a = columns[(static_cast<std::size_t>(row) * T + t0) * C + ch];
        const double b = columns[(static_cast<std::size_t>(row) * T + t1) * C + ch];
        out.data[(static_cast<std::size_t>(row) * target_frames + k) * C + ch] =
            a * (1.0 - f) + b * f;
      }
  }
  return out;
}

int locate_apex(const FrameSequence& seq) {
  if (seq.length() < 2) throw StrcnError("locate_apex: need at least 2 frames");
  const Image& first = seq.frames[0];
  const std::size_t n = first.data.size();

  int best_t = 1;
  double best_sigma = -1.0;
  for (int t = 1; t < seq.length(); ++t) {
    const Image& f = seq.frames[t];
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = f.data[i] - first.data[i];
      sum += d;
      sum2 += d * d;
    }
    const double mean = sum / n;
    const double sigma = std::sqrt(std::max(0.0, sum2 / n - mean * mean));
    if (sigma > best_sigma) {  // strict '>' ties break to the smallest t
      best_sigma = sigma;
      best_t = t;
    }
  }
  return best_t;
}

FlowScale fit_flow_scale(const std::vector<FlowField>& training_flows) {
  std::vector<double> magnitudes;
  for (const FlowField& f : training_flows) {
    for (double x : f.u) magnitudes.push_back(std::abs(x));
    for (double x : f.v) magnitudes.push_back(std::abs(x));
  }
  if (magnitudes.empty()) throw StrcnError("flow scale: no training flows");
  std::sort(magnitudes.begin(), magnitudes.end());
  const std::size_t rank = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(0.99 * magnitudes.size())));
  FlowScale s;
  s.scale = std::max(magnitudes[rank - 1], 1e-9);
  return s;
}

std::vector<double> build_strcn_g_input(const FlowField& flow, const FlowScale& scale) {
  for (double x : flow.u)
    if (!std::isfinite(x)) throw NonFiniteError("strcn-g input: non-finite u");
  for (double x : flow.v)
    if (!std::isfinite(x)) throw NonFiniteError("strcn-g input: non-finite v");
  std::vector<double> out(flow.u.size() * 2);
  for (std::size_t i = 0; i < flow.u.size(); ++i) {
    out[2 * i] = flow.u[i] / scale.scale;
    out[2 * i + 1] = flow.v[i] / scale.scale;
  }
  return out;
}

}  // namespace strcn
