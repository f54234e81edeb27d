#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "strcn/dataset.hpp"
#include "strcn/errors.hpp"
#include "strcn/rng.hpp"

namespace strcn {

namespace {

constexpr double kTau = 6.283185307179586;

struct GaussianBlob {
  double cx, cy, sigma, amplitude;
  double eval(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    return amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
  }
};

// Band-limited analytic texture: a fixed sum of random cosines. Smooth,
// differentiable, and exactly translatable, which keeps the sub-pixel
// motion of the rendered frames free of resampling artifacts.
struct CosineTexture {
  std::vector<double> wx, wy, phase, amp;

  static CosineTexture make(Rng& rng, int components, double min_wavelength,
                            double max_wavelength, double amplitude) {
    CosineTexture t;
    for (int k = 0; k < components; ++k) {
      const double wavelength = rng.uniform(min_wavelength, max_wavelength);
      const double angle = rng.uniform(0.0, kTau);
      const double freq = kTau / wavelength;
      t.wx.push_back(freq * std::cos(angle));
      t.wy.push_back(freq * std::sin(angle));
      t.phase.push_back(rng.uniform(0.0, kTau));
      t.amp.push_back(amplitude);
    }
    return t;
  }

  double eval(double x, double y) const {
    double v = 0.0;
    for (std::size_t k = 0; k < wx.size(); ++k)
      v += amp[k] * std::cos(wx[k] * x + wy[k] * y + phase[k]);
    return v;
  }
};

struct FaceTemplate {
  double width, height;
  Vec2 eye_left, eye_right;
  std::vector<GaussianBlob> features;
  CosineTexture texture;

  double eval(double x, double y) const {
    double v = 0.55 - 0.05 * (y / height - 0.5);
    for (const GaussianBlob& b : features) v += b.eval(x, y);
    return v + texture.eval(x, y);
  }
};

FaceTemplate make_face(Rng& rng, int h, int w) {
  FaceTemplate face;
  face.width = w;
  face.height = h;
  const double jx = 0.015 * w;
  face.eye_left = {0.30 * w + rng.uniform(-jx, jx), 0.35 * h + rng.uniform(-jx, jx)};
  face.eye_right = {0.70 * w + rng.uniform(-jx, jx), 0.35 * h + rng.uniform(-jx, jx)};
  const double iod = distance(face.eye_left, face.eye_right);
  face.features.push_back({face.eye_left.x, face.eye_left.y, iod / 6.0, -0.30});
  face.features.push_back({face.eye_right.x, face.eye_right.y, iod / 6.0, -0.30});
  face.features.push_back({0.5 * w, 0.72 * h, iod / 4.0, -0.18});           // mouth
  face.features.push_back({0.5 * w, 0.55 * h, iod / 8.0, 0.10});            // nose tip
  face.texture = CosineTexture::make(rng, 40, 0.15 * std::min(h, w), 0.5 * std::min(h, w), 0.012);
  return face;
}

// Class regions inside the crop window implied by the default crop constants.
Vec2 class_region(int cls, int h, int w) {
  static const double kFractions[][2] = {
      {0.35, 0.60}, {0.62, 0.60}, {0.48, 0.80}, {0.30, 0.78}, {0.66, 0.78}, {0.48, 0.48},
  };
  const int n = static_cast<int>(sizeof(kFractions) / sizeof(kFractions[0]));
  const auto& f = kFractions[cls % n];
  return {f[0] * w, f[1] * h};
}

// 68 control points covering the face; they translate rigidly with the head.
std::array<Vec2, 68> canonical_points(const FaceTemplate& face) {
  std::array<Vec2, 68> pts;
  int i = 0;
  const double w = face.width, h = face.height;
  const double cx = 0.5 * w, cy = 0.55 * h;
  // jaw / face outline: 28 points
  for (int k = 0; k < 28; ++k) {
    const double a = kTau * k / 28.0;
    pts[i++] = {cx + 0.42 * w * std::cos(a), cy + 0.40 * h * std::sin(a)};
  }
  // brows: 2 x 5
  for (int side = 0; side < 2; ++side) {
    const Vec2 eye = side == 0 ? face.eye_left : face.eye_right;
    for (int k = 0; k < 5; ++k)
      pts[i++] = {eye.x + (k - 2) * 0.035 * w, eye.y - 0.08 * h};
  }
  // eye rings: 2 x 6
  for (int side = 0; side < 2; ++side) {
    const Vec2 eye = side == 0 ? face.eye_left : face.eye_right;
    for (int k = 0; k < 6; ++k) {
      const double a = kTau * k / 6.0;
      pts[i++] = {eye.x + 0.05 * w * std::cos(a), eye.y + 0.035 * h * std::sin(a)};
    }
  }
  // nose bridge + base: 6
  for (int k = 0; k < 4; ++k) pts[i++] = {cx, 0.40 * h + k * 0.05 * h};
  pts[i++] = {cx - 0.06 * w, 0.58 * h};
  pts[i++] = {cx + 0.06 * w, 0.58 * h};
  // mouth ring: 12
  for (int k = 0; k < 12; ++k) {
    const double a = kTau * k / 12.0;
    pts[i++] = {cx + 0.12 * w * std::cos(a), 0.72 * h + 0.05 * h * std::sin(a)};
  }
  // cheeks: 2
  pts[i++] = {cx - 0.25 * w, 0.62 * h};
  pts[i++] = {cx + 0.25 * w, 0.62 * h};
  return pts;
}

double quantize16(double v) {
  const double q = std::round(std::clamp(v, 0.0, 1.0) * 65535.0);
  return q / 65535.0;
}

}  // namespace

SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec) {
  if (spec.n_subjects <= 0 || spec.seqs_per_subject <= 0 || spec.frames < 2 ||
      spec.height <= 0 || spec.width <= 0 || spec.classes <= 0)
    throw StrcnError("synthetic spec: all counts must be positive and frames >= 2");
  if (spec.motion_amplitude_px < 0.0)
    throw StrcnError("synthetic spec: motion amplitude must be >= 0");

  SyntheticDataset ds;
  ds.manifest.num_classes = spec.classes;
  for (int c = 0; c < spec.classes; ++c)
    ds.manifest.class_names.push_back("class" + std::to_string(c));

  const int T = spec.frames;
  for (int s = 0; s < spec.n_subjects; ++s) {
    Rng subject_rng(derive_seed(spec.seed, "subject" + std::to_string(s)));
    const FaceTemplate face = make_face(subject_rng, spec.height, spec.width);
    const auto base_points = canonical_points(face);

    for (int j = 0; j < spec.seqs_per_subject; ++j) {
      const int global_index = s * spec.seqs_per_subject + j;
      const int label = global_index % spec.classes;
      const std::string tag = "s" + std::to_string(s) + "_" + std::to_string(j);
      Rng rng(derive_seed(spec.seed, "seq" + tag));

      GaussianBlob bump;
      const Vec2 region = class_region(label, spec.height, spec.width);
      bump.cx = region.x + rng.uniform(-0.015, 0.015) * spec.width;
      bump.cy = region.y + rng.uniform(-0.015, 0.015) * spec.height;
      bump.sigma = 0.06 * std::min(spec.height, spec.width);
      bump.amplitude = 0.22 * rng.uniform(0.9, 1.1);

      // Expression motion direction: class-specific with a little jitter.
      const double dir_angle = kTau * label / spec.classes + rng.uniform(-0.25, 0.25);
      const Vec2 motion_dir = {std::cos(dir_angle), std::sin(dir_angle)};
      const int t_peak = std::max(1, static_cast<int>(std::lround((0.45 + 0.2 * rng.next_double()) * (T - 1))));

      // Small rigid head drift, removed later by alignment.
      const double drift_angle = rng.uniform(0.0, kTau);
      const Vec2 drift_dir = {std::cos(drift_angle), std::sin(drift_angle)};
      const double drift_mag = 0.25 * spec.motion_amplitude_px;

      FrameSequence seq;
      seq.fps = spec.fps;
      seq.subject_id = "subject" + std::to_string(s);
      seq.label = label;
      seq.source_id = "seq_" + tag;
      LandmarkTrack track;

      for (int t = 0; t < T; ++t) {
        const double ramp = t <= t_peak
                                ? static_cast<double>(t) / t_peak
                                : 1.0 - 0.7 * static_cast<double>(t - t_peak) /
                                            std::max(1, T - 1 - t_peak);
        const Vec2 disp = motion_dir * (spec.motion_amplitude_px * ramp);
        const Vec2 drift = drift_dir * (drift_mag * t / (T - 1));

        Image frame(spec.height, spec.width, 1);
        for (int y = 0; y < spec.height; ++y)
          for (int x = 0; x < spec.width; ++x) {
            double v = face.eval(x - drift.x, y - drift.y);
            v += bump.eval(x - drift.x - disp.x, y - drift.y - disp.y);
            frame.at(y, x) = quantize16(std::clamp(v, 0.02, 0.98));
          }
        seq.frames.push_back(std::move(frame));

        FrameLandmarks fl;
        fl.eye_left = face.eye_left + drift;
        fl.eye_right = face.eye_right + drift;
        for (int k = 0; k < 68; ++k) fl.points[k] = base_points[k] + drift;
        track.frames.push_back(fl);
      }
      seq.validate();

      ManifestEntry entry;
      entry.seq_dir = "seq_" + tag;
      entry.landmark_file = "landmarks_" + tag + ".csv";
      entry.subject_id = seq.subject_id;
      entry.label = label;
      ds.manifest.entries.push_back(entry);
      ds.sequences.push_back(std::move(seq));
      ds.tracks.push_back(std::move(track));
    }
  }
  ds.manifest.validate();
  return ds;
}

void write_synthetic_dataset(const SyntheticDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    const ManifestEntry& entry = ds.manifest.entries[i];
    const auto seq_dir = dir / entry.seq_dir;
    std::filesystem::create_directories(seq_dir);
    const FrameSequence& seq = ds.sequences[i];
    for (int t = 0; t < seq.length(); ++t) {
      std::ostringstream name;
      name << "frame_" << (t < 10 ? "00" : t < 100 ? "0" : "") << t << ".pgm";
      write_image(seq.frames[t], seq_dir / name.str(), 16);
    }
    save_landmarks(ds.tracks[i], dir / entry.landmark_file);
  }
  DatasetManifest copy = ds.manifest;
  copy.root = dir;
  save_manifest(copy, dir / "manifest.csv");
}

}  // namespace strcn
