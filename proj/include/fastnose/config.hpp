#pragma once

#include "fastnose/heater_control.hpp"

#include <map>
#include <string>
#include <vector>

namespace fastnose {

/// Line-oriented `key = value` configuration with [section] headers.
///
/// Only keys present in the built-in defaults are accepted; anything else
/// is a hard error. `FASTNOSE_<SECTION>_<KEY>` environment variables win
/// over file values.
class Config {
public:
  /// Built-in defaults (same values as config/default.ini).
  static Config defaults();
  /// Defaults, overlaid by `path` (if non-empty), then by the environment.
  static Config load(const std::string& path);

  void merge_text(const std::string& text, const std::string& origin);
  void apply_env();
  void set(const std::string& section, const std::string& key, const std::string& value);

  bool has(const std::string& section, const std::string& key) const;
  const std::string& get(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key) const;
  long long get_int(const std::string& section, const std::string& key) const;

  /// Sorted `section.key=value` lines; stable input for hashing.
  std::string canonical() const;

private:
  std::map<std::string, std::map<std::string, std::string>> values_;
};

/// "150:25, 400:25" -> [{150, 25}, {400, 25}].
std::vector<CycleStep> parse_profile(const std::string& text);

std::string default_config_path();

}  // namespace fastnose
