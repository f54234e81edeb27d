#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "strcn/dataset.hpp"
#include "strcn/eval.hpp"

namespace strcn {

/// Flat `section.key = value` configuration. Lines starting with '#' are
/// comments. Canonical form (sorted keys) backs the config hash.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig from_file(const std::filesystem::path& path);
  static KeyValueConfig from_string(const std::string& text);

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;

  /// "key=value" strings, e.g. from the command line. Malformed items throw.
  void apply_overrides(const std::vector<std::string>& overrides);

  const std::map<std::string, std::string>& entries() const { return entries_; }
  std::string canonical() const;
  std::uint64_t hash() const;
  std::string hash_hex() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> entries_;
};

/// Materializes every known key with its default (the stock experimental
/// constants), variant-aware for the alignment output size. The result is
/// what gets hashed and persisted per run.
KeyValueConfig resolve_config(const KeyValueConfig& user);

/// Builds the pipeline configuration from a resolved config. Throws
/// ConfigError naming the offending key on validation failure.
PipelineConfig pipeline_from_config(const KeyValueConfig& resolved);

SyntheticSpec synthetic_from_config(const KeyValueConfig& resolved);

TrainHyper hyper_from_config(const KeyValueConfig& resolved);

}  // namespace strcn
