#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "strcn/geometry.hpp"
#include "strcn/image.hpp"

namespace strcn {

/// One labeled clip: T frames sharing H x W x C, intensities in [0,1].
struct FrameSequence {
  std::vector<Image> frames;
  double fps = 30.0;
  std::string subject_id;
  int label = 0;
  std::string source_id;

  int length() const { return static_cast<int>(frames.size()); }
  int height() const { return frames.empty() ? 0 : frames[0].h; }
  int width() const { return frames.empty() ? 0 : frames[0].w; }
  int channels() const { return frames.empty() ? 0 : frames[0].c; }

  /// Throws StrcnError if any invariant is violated (T >= 2, equal dims,
  /// C in {1,3}, finite intensities in [0,1], fps > 0).
  void validate() const;
};

struct FrameLandmarks {
  Vec2 eye_left;
  Vec2 eye_right;
  std::array<Vec2, 68> points;
};

struct LandmarkTrack {
  std::vector<FrameLandmarks> frames;

  int length() const { return static_cast<int>(frames.size()); }
  void validate(int expected_length) const;
};

struct ManifestEntry {
  std::string seq_dir;
  std::string landmark_file;
  std::string subject_id;
  int label = 0;
};

struct DatasetManifest {
  std::filesystem::path root;  // paths in entries are relative to this
  std::vector<ManifestEntry> entries;
  std::vector<std::string> class_names;
  int num_classes = 0;

  void validate() const;
};

FrameSequence load_sequence(const std::filesystem::path& dir, const ManifestEntry& entry,
                            double fps);
LandmarkTrack load_landmarks(const std::filesystem::path& file, int expected_length);
void save_landmarks(const LandmarkTrack& track, const std::filesystem::path& file);

DatasetManifest load_manifest(const std::filesystem::path& csv_path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv_path);

// --- Synthetic oracle datasets -------------------------------------------

/// Parameters for the synthetic face generator. Each class plants a small
/// bright blob in a class-specific facial region and translates it sub-pixel
/// along a rise-and-fall ramp; the whole head drifts slightly and the
/// landmark track follows that drift exactly.
struct SyntheticSpec {
  int n_subjects = 6;
  int seqs_per_subject = 10;
  int frames = 24;
  int height = 48;
  int width = 36;
  int classes = 3;
  double motion_amplitude_px = 2.0;
  double fps = 30.0;
  std::uint64_t seed = 7;
};

struct SyntheticDataset {
  DatasetManifest manifest;
  std::vector<FrameSequence> sequences;  // parallel to manifest.entries
  std::vector<LandmarkTrack> tracks;
};

/// Pure function of the spec: identical spec gives bitwise-identical output.
SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec);

/// Writes frames (16-bit PGM), landmark CSVs and manifest.csv under dir.
void write_synthetic_dataset(const SyntheticDataset& ds, const std::filesystem::path& dir);

}  // namespace strcn
