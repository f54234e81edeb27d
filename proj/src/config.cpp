#include "strcn/config.hpp"

#include <fstream>
#include <sstream>

#include "strcn/errors.hpp"
#include "strcn/rng.hpp"

namespace strcn {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_string(buffer.str());
}

KeyValueConfig KeyValueConfig::from_string(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto pos = stripped.find('=');
    if (pos == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + " is not key = value: " + line);
    const std::string key = trim(stripped.substr(0, pos));
    const std::string value = trim(stripped.substr(pos + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    cfg.entries_[key] = value;
  }
  return cfg;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not a number: " + it->second);
  }
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    std::size_t used = 0;
    const int v = std::stoi(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an integer: " + it->second);
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: " + v);
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an unsigned integer: " + it->second);
  }
}

void KeyValueConfig::apply_overrides(const std::vector<std::string>& overrides) {
  for (const std::string& item : overrides) {
    const auto pos = item.find('=');
    if (pos == std::string::npos || pos == 0)
      throw ConfigError("override is not key=value: " + item);
    entries_[trim(item.substr(0, pos))] = trim(item.substr(pos + 1));
  }
}

std::string KeyValueConfig::canonical() const {
  std::ostringstream out;
  for (const auto& [key, value] : entries_) out << key << " = " << value << "\n";
  return out.str();
}

std::uint64_t KeyValueConfig::hash() const { return fnv1a(canonical()); }

std::string KeyValueConfig::hash_hex() const {
  std::ostringstream out;
  out << std::hex << hash();
  return out.str();
}

void KeyValueConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config: " + path.string());
  out << canonical();
}

KeyValueConfig resolve_config(const KeyValueConfig& user) {
  KeyValueConfig cfg = user;
  auto def = [&](const std::string& key, const std::string& value) {
    if (!cfg.has(key)) cfg.set(key, value);
  };

  def("variant", "A");
  const bool geometric = cfg.get_string("variant", "A") == "G";

  def("data.manifest", "");
  def("data.fps", "30");
  def("out.dir", "out");
  def("seed", "1");
  def("jobs", "1");

  def("crop.eye_line_offset", "0.4");
  def("crop.lateral_margin", "0.6");
  def("crop.height_scale", "2.2");
  def("crop.width_scale", "1.8");
  def("align.h", geometric ? "300" : "64");
  def("align.w", geometric ? "245" : "48");
  def("align.neighborhood", "12");

  def("magnify.alpha", "8");
  def("magnify.lambda", "16");
  def("magnify.cutoff_lo", "0.05");
  def("magnify.cutoff_hi", "0.4");
  def("magnify.levels", "4");

  def("mask.p", "30");
  def("encode.frames", "30");

  def("flow.sigma", "0.03");
  def("flow.mu", "0.05");
  def("flow.levels", "3");
  def("flow.warps", "10");
  def("flow.sweeps", "10");
  def("flow.passes", "3");

  def("model.feature_maps", "32");
  def("model.rcl_layers", "4");
  def("model.rcl_iterations", "3");

  def("train.lr0", "0.001");
  def("train.momentum", "0.9");
  def("train.weight_decay", "0.0005");
  def("train.damping", "0.8");
  def("train.batch", "20");
  def("train.stop_tolerance", "0.001");
  def("train.max_epochs", "200");
  def("train.augment", "false");

  def("protocol", "loso");
  def("lovo.test_fraction", "0.05");
  def("lovo.literal", "false");

  def("synth.subjects", "6");
  def("synth.seqs_per_subject", "10");
  def("synth.frames", "24");
  def("synth.height", "48");
  def("synth.width", "36");
  def("synth.classes", "3");
  def("synth.motion_px", "2");
  return cfg;
}

TrainHyper hyper_from_config(const KeyValueConfig& cfg) {
  TrainHyper hyper;
  hyper.lr0 = cfg.get_double("train.lr0", hyper.lr0);
  hyper.momentum = cfg.get_double("train.momentum", hyper.momentum);
  hyper.weight_decay = cfg.get_double("train.weight_decay", hyper.weight_decay);
  hyper.lr_damping = cfg.get_double("train.damping", hyper.lr_damping);
  hyper.batch_size = cfg.get_int("train.batch", hyper.batch_size);
  hyper.stop_tolerance = cfg.get_double("train.stop_tolerance", hyper.stop_tolerance);
  hyper.max_epochs = cfg.get_int("train.max_epochs", hyper.max_epochs);
  hyper.seed = cfg.get_u64("seed", 1);
  if (hyper.lr0 <= 0 || hyper.batch_size < 1 || hyper.lr_damping <= 0 || hyper.lr_damping >= 1.0)
    throw ConfigError("train.*: lr0 and batch must be positive, damping in (0,1)");
  return hyper;
}

PipelineConfig pipeline_from_config(const KeyValueConfig& cfg) {
  PipelineConfig p;
  p.variant = variant_from_string(cfg.get_string("variant", "A"));
  p.crop.eye_line_offset = cfg.get_double("crop.eye_line_offset", 0.4);
  p.crop.lateral_margin = cfg.get_double("crop.lateral_margin", 0.6);
  p.crop.height_scale = cfg.get_double("crop.height_scale", 2.2);
  p.crop.width_scale = cfg.get_double("crop.width_scale", 1.8);
  if (p.crop.height_scale <= 0 || p.crop.width_scale <= 0)
    throw ConfigError("crop.height_scale / crop.width_scale must be positive");

  p.align_h = cfg.get_int("align.h", p.variant == Variant::kGeometric ? 300 : 64);
  p.align_w = cfg.get_int("align.w", p.variant == Variant::kGeometric ? 245 : 48);
  p.lwm_neighborhood = cfg.get_int("align.neighborhood", 12);
  if (p.align_h < 16 || p.align_w < 16)
    throw ConfigError("align.h / align.w too small (minimum 16)");

  p.magnify.alpha = cfg.get_double("magnify.alpha", 8.0);
  p.magnify.spatial_wavelength = cfg.get_double("magnify.lambda", 16.0);
  p.magnify.cutoff_lo = cfg.get_double("magnify.cutoff_lo", 0.05);
  p.magnify.cutoff_hi = cfg.get_double("magnify.cutoff_hi", 0.4);
  p.magnify.levels = cfg.get_int("magnify.levels", 4);

  p.mask_percentile = cfg.get_double("mask.p", 30.0);
  if (!(p.mask_percentile > 0.0 && p.mask_percentile <= 100.0))
    throw ConfigError("mask.p must be in (0, 100]");
  p.target_frames = cfg.get_int("encode.frames", 30);
  if (p.target_frames < 2) throw ConfigError("encode.frames must be >= 2");

  p.flow.lorentzian_sigma = cfg.get_double("flow.sigma", 0.03);
  p.flow.smoothness_weight = cfg.get_double("flow.mu", 0.05);
  p.flow.levels = cfg.get_int("flow.levels", 3);
  p.flow.warp_iterations = cfg.get_int("flow.warps", 10);
  p.flow.solver_iterations = cfg.get_int("flow.sweeps", 10);
  p.flow.relaxation_passes = cfg.get_int("flow.passes", 3);

  p.feature_maps = cfg.get_int("model.feature_maps", 32);
  p.rcl_layers = cfg.get_int("model.rcl_layers", 4);
  p.rcl_iterations = cfg.get_int("model.rcl_iterations", 3);

  p.hyper = hyper_from_config(cfg);
  p.augment_enabled = cfg.get_bool("train.augment", false);
  p.aug.seed = cfg.get_u64("seed", 1);
  p.seed = cfg.get_u64("seed", 1);
  p.jobs = cfg.get_int("jobs", 1);
  if (p.jobs < 1) throw ConfigError("jobs must be >= 1");
  return p;
}

SyntheticSpec synthetic_from_config(const KeyValueConfig& cfg) {
  SyntheticSpec spec;
  spec.n_subjects = cfg.get_int("synth.subjects", spec.n_subjects);
  spec.seqs_per_subject = cfg.get_int("synth.seqs_per_subject", spec.seqs_per_subject);
  spec.frames = cfg.get_int("synth.frames", spec.frames);
  spec.height = cfg.get_int("synth.height", spec.height);
  spec.width = cfg.get_int("synth.width", spec.width);
  spec.classes = cfg.get_int("synth.classes", spec.classes);
  spec.motion_amplitude_px = cfg.get_double("synth.motion_px", spec.motion_amplitude_px);
  spec.fps = cfg.get_double("data.fps", spec.fps);
  spec.seed = cfg.get_u64("seed", spec.seed);
  return spec;
}

}  // namespace strcn
