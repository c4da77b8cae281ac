// Copyright 2026 The hdmi_lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Flat key/value run configuration with per-field provenance. Resolution
// order: preset defaults, then a `key = value` config file, then flags.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hdmi/adapt.hpp"
#include "hdmi/shiftdata.hpp"

namespace hdmi {

enum class Provenance { kDefault, kFile, kFlag };

std::string_view to_string(Provenance p);

struct ConfigField {
  std::string value;
  Provenance provenance = Provenance::kDefault;
};

class ResolvedConfig {
 public:
  // Every known key, in a stable order.
  static const std::vector<std::string>& known_keys();
  static std::string known_keys_list();
  static bool is_known(std::string_view key);

  // `file_values` and `flag_values` are raw strings keyed by config key.
  static ResolvedConfig resolve(const std::map<std::string, std::string>& file_values,
                                const std::map<std::string, std::string>& flag_values);

  // Parses `key = value` lines; '#' starts a comment. Throws ConfigError on
  // unknown keys or malformed lines, IoError when unreadable.
  static std::map<std::string, std::string> parse_file(const std::filesystem::path& path);
  static std::map<std::string, std::string> parse_text(std::string_view text, const std::string& origin);

  const std::string& get(std::string_view key) const;
  Provenance provenance(std::string_view key) const;
  const std::map<std::string, ConfigField>& fields() const { return fields_; }

  double get_real(std::string_view key) const;
  int get_int(std::string_view key) const;
  std::uint64_t get_seed() const;
  bool get_bool(std::string_view key) const;

  ShiftSpec shift_spec() const;
  SourceConfig source_config() const;
  AdaptConfig adapt_config() const;
  std::filesystem::path output_root() const;

  // Type-checks every field and cross-field constraints.
  void validate() const;

  // {"values": {...}, "provenance": {...}}
  nlohmann::json to_json() const;
  static ResolvedConfig from_json(const nlohmann::json& j);

  bool operator==(const ResolvedConfig& other) const;

 private:
  std::map<std::string, ConfigField> fields_;
};

// Defaults for a named preset (`desk` or `blobs`).
std::map<std::string, std::string> preset_defaults(std::string_view preset);

std::vector<double> parse_real_list(std::string_view text, std::string_view what);
std::vector<int> parse_int_list(std::string_view text, std::string_view what);

}  // namespace hdmi
