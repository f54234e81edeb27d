#include "strcn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "strcn/errors.hpp"

namespace strcn {

void FrameSequence::validate() const {
  if (frames.size() < 2) throw StrcnError("FrameSequence: need at least 2 frames");
  if (fps <= 0.0) throw StrcnError("FrameSequence: fps must be positive");
  const Image& first = frames[0];
  if (first.c != 1 && first.c != 3) throw StrcnError("FrameSequence: channels must be 1 or 3");
  for (const Image& f : frames) {
    if (!f.same_dims(first)) throw StrcnError("FrameSequence: inconsistent frame dimensions");
    for (double v : f.data)
      if (!std::isfinite(v) || v < 0.0 || v > 1.0)
        throw StrcnError("FrameSequence: intensity outside [0,1]");
  }
}

void LandmarkTrack::validate(int expected_length) const {
  if (length() != expected_length)
    throw StrcnError("LandmarkTrack: length " + std::to_string(length()) +
                     " does not match sequence length " + std::to_string(expected_length));
  for (const FrameLandmarks& f : frames) {
    auto finite = [](const Vec2& p) { return std::isfinite(p.x) && std::isfinite(p.y); };
    if (!finite(f.eye_left) || !finite(f.eye_right))
      throw StrcnError("LandmarkTrack: non-finite eye center");
    for (const Vec2& p : f.points)
      if (!finite(p)) throw StrcnError("LandmarkTrack: non-finite control point");
  }
}

void DatasetManifest::validate() const {
  if (num_classes <= 0) throw StrcnError("manifest: num_classes must be positive");
  for (const ManifestEntry& e : entries) {
    if (e.label < 0 || e.label >= num_classes)
      throw StrcnError("manifest: label " + std::to_string(e.label) + " out of range for " +
                       e.seq_dir);
  }
}

namespace {

std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw IoError("sequence directory missing: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm" || ext == ".png")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

FrameSequence load_sequence(const std::filesystem::path& dir, const ManifestEntry& entry,
                            double fps) {
  const auto files = list_frame_files(dir);
  if (files.size() < 2) throw IoError("sequence needs at least 2 frames: " + dir.string());

  FrameSequence seq;
  seq.fps = fps;
  seq.subject_id = entry.subject_id;
  seq.label = entry.label;
  seq.source_id = entry.seq_dir;
  seq.frames.reserve(files.size());
  for (const auto& file : files) {
    Image img = read_image(file);
    if (!seq.frames.empty() && !img.same_dims(seq.frames[0]))
      throw StrcnError("inconsistent frame dimensions in " + dir.string());
    seq.frames.push_back(std::move(img));
  }
  seq.validate();
  return seq;
}

LandmarkTrack load_landmarks(const std::filesystem::path& file, int expected_length) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open landmark file: " + file.string());

  LandmarkTrack track;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_csv_line(line);
    // 2 eye centers + 68 points, all as x,y pairs
    if (fields.size() != 2 * (2 + 68))
      throw StrcnError("landmark row has " + std::to_string(fields.size()) +
                       " values, expected 140: " + file.string());
    std::vector<double> vals(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i) {
      try {
        vals[i] = std::stod(fields[i]);
      } catch (const std::exception&) {
        throw StrcnError("unparseable landmark value '" + fields[i] + "' in " + file.string());
      }
      if (!std::isfinite(vals[i]))
        throw StrcnError("non-finite landmark coordinate in " + file.string());
    }
    FrameLandmarks fl;
    fl.eye_left = {vals[0], vals[1]};
    fl.eye_right = {vals[2], vals[3]};
    for (int i = 0; i < 68; ++i) fl.points[i] = {vals[4 + 2 * i], vals[5 + 2 * i]};
    track.frames.push_back(fl);
  }
  track.validate(expected_length);
  return track;
}

void save_landmarks(const LandmarkTrack& track, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write landmark file: " + file.string());
  out.precision(17);
  for (const FrameLandmarks& f : track.frames) {
    out << f.eye_left.x << ',' << f.eye_left.y << ',' << f.eye_right.x << ',' << f.eye_right.y;
    for (const Vec2& p : f.points) out << ',' << p.x << ',' << p.y;
    out << '\n';
  }
}

DatasetManifest load_manifest(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open manifest: " + csv_path.string());

  DatasetManifest manifest;
  manifest.root = csv_path.parent_path();
  std::string line;
  int max_label = -1;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 4)
      throw StrcnError("manifest row needs 4 fields (seq_dir,landmark_file,subject_id,label): " +
                       line);
    ManifestEntry e;
    e.seq_dir = fields[0];
    e.landmark_file = fields[1];
    e.subject_id = fields[2];
    e.label = std::stoi(fields[3]);
    max_label = std::max(max_label, e.label);
    manifest.entries.push_back(e);
  }

  // Optional class-name table next to the manifest.
  const auto classes_path = manifest.root / "classes.csv";
  if (std::filesystem::exists(classes_path)) {
    std::ifstream cls(classes_path);
    while (std::getline(cls, line)) {
      if (line.empty() || line[0] == '#') continue;
      const auto fields = split_csv_line(line);
      if (fields.size() == 2) manifest.class_names.push_back(fields[1]);
    }
  }
  manifest.num_classes =
      std::max(max_label + 1, static_cast<int>(manifest.class_names.size()));
  if (manifest.class_names.empty())
    for (int i = 0; i < manifest.num_classes; ++i)
      manifest.class_names.push_back("class" + std::to_string(i));
  manifest.validate();

  // Referenced paths must exist at load time.
  for (const ManifestEntry& e : manifest.entries) {
    if (!std::filesystem::exists(manifest.root / e.seq_dir))
      throw IoError("manifest references missing sequence dir: " + e.seq_dir);
    if (!std::filesystem::exists(manifest.root / e.landmark_file))
      throw IoError("manifest references missing landmark file: " + e.landmark_file);
  }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw IoError("cannot write manifest: " + csv_path.string());
  for (const ManifestEntry& e : manifest.entries)
    out << e.seq_dir << ',' << e.landmark_file << ',' << e.subject_id << ',' << e.label << '\n';

  std::ofstream cls(csv_path.parent_path() / "classes.csv");
  for (std::size_t i = 0; i < manifest.class_names.size(); ++i)
    cls << i << ',' << manifest.class_names[i] << '\n';
}

}  // namespace strcn
