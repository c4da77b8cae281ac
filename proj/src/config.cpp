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

#include "hdmi/config.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

#include "hdmi/errors.hpp"
#include "hdmi/textio.hpp"

namespace hdmi {
namespace {

// Key order here is the order of known_keys() and of serialized configs.
const std::vector<std::pair<std::string, std::string>>& desk_table() {
  static const std::vector<std::pair<std::string, std::string>> table = {
      {"preset", "desk"},
      {"generator", "two_moons"},
      {"n_source", "600"},
      {"n_target", "600"},
      {"noise_sd", "0.08"},
      {"rotation_deg", "40"},
      {"translation", ""},
      {"scale", "1"},
      {"k", "2"},
      {"seed", "1"},
      {"m", "2"},
      {"variant", "IC"},
      {"dropout", "0.5"},
      {"source_steps", "1000"},
      {"source_lr", "0.01"},
      {"source_batch_size", "64"},
      {"objective", "hdmi"},
      {"lambda", "0.5"},
      {"divergence", "cross_entropy"},
      {"reduction", "mean"},
      {"anchor", "seeded_random"},
      {"stop_grad_anchor", "false"},
      {"steps", "1000"},
      {"batch_size", "64"},
      {"lr", "0.01"},
      {"momentum", "0.9"},
      {"nesterov", "true"},
      {"weight_decay", "0.0005"},
      {"extractor_lr_multiplier", "1"},
      {"freeze_classifiers", "true"},
      {"shared_extractor", "true"},
      {"train_mode_loss", "true"},
      {"eval_every", "25"},
      {"out", "runs"},
  };
  return table;
}

std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "default") return Provenance::kDefault;
  if (s == "file") return Provenance::kFile;
  if (s == "flag") return Provenance::kFlag;
  throw ConfigError("unknown provenance '" + std::string(s) + "'");
}

}  // namespace

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kFile:
      return "file";
    case Provenance::kFlag:
      return "flag";
    case Provenance::kDefault:
      break;
  }
  return "default";
}

std::map<std::string, std::string> preset_defaults(std::string_view preset) {
  std::map<std::string, std::string> d;
  for (const auto& [k, v] : desk_table()) d[k] = v;
  if (const char* env = std::getenv("HDMI_LAB_OUT"); env != nullptr && *env != '\0') d["out"] = env;
  if (preset == "desk") return d;
  if (preset == "blobs") {
    d["preset"] = "blobs";
    d["generator"] = "gauss_blobs";
    d["k"] = "3";
    d["noise_sd"] = "1";
    d["rotation_deg"] = "0";
    d["translation"] = "2,1";
    d["scale"] = "1";
    return d;
  }
  throw ConfigError("unknown preset '" + std::string(preset) + "' (known: desk, blobs)");
}

const std::vector<std::string>& ResolvedConfig::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [key, v] : desk_table()) k.push_back(key);
    return k;
  }();
  return keys;
}

std::string ResolvedConfig::known_keys_list() {
  std::string out;
  for (const auto& k : known_keys()) out += (out.empty() ? "" : ", ") + k;
  return out;
}

bool ResolvedConfig::is_known(std::string_view key) {
  for (const auto& k : known_keys()) {
    if (k == key) return true;
  }
  return false;
}

std::map<std::string, std::string> ResolvedConfig::parse_text(std::string_view text, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (!is_known(key)) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown key '" + key +
                        "'; known keys: " + known_keys_list());
    }
    out[key] = value;
  }
  return out;
}

std::map<std::string, std::string> ResolvedConfig::parse_file(const std::filesystem::path& path) {
  return parse_text(read_text_file(path), path.string());
}

ResolvedConfig ResolvedConfig::resolve(const std::map<std::string, std::string>& file_values,
                                       const std::map<std::string, std::string>& flag_values) {
  for (const auto* src : {&file_values, &flag_values}) {
    for (const auto& [k, v] : *src) {
      if (!is_known(k)) throw ConfigError("unknown key '" + k + "'; known keys: " + known_keys_list());
    }
  }
  std::string preset = "desk";
  if (auto it = file_values.find("preset"); it != file_values.end()) preset = it->second;
  if (auto it = flag_values.find("preset"); it != flag_values.end()) preset = it->second;

  ResolvedConfig cfg;
  for (const auto& [k, v] : preset_defaults(preset)) cfg.fields_[k] = {v, Provenance::kDefault};
  for (const auto& [k, v] : file_values) cfg.fields_[k] = {v, Provenance::kFile};
  for (const auto& [k, v] : flag_values) cfg.fields_[k] = {v, Provenance::kFlag};
  cfg.validate();
  return cfg;
}

const std::string& ResolvedConfig::get(std::string_view key) const {
  auto it = fields_.find(std::string(key));
  if (it == fields_.end()) throw ConfigError("unknown key '" + std::string(key) + "'; known keys: " + known_keys_list());
  return it->second.value;
}

Provenance ResolvedConfig::provenance(std::string_view key) const {
  auto it = fields_.find(std::string(key));
  if (it == fields_.end()) throw ConfigError("unknown key '" + std::string(key) + "'");
  return it->second.provenance;
}

double ResolvedConfig::get_real(std::string_view key) const {
  double v = 0.0;
  if (!parse_real(get(key), v) || !std::isfinite(v)) {
    throw ConfigError("key '" + std::string(key) + "' expects a number, got '" + get(key) + "'");
  }
  return v;
}

int ResolvedConfig::get_int(std::string_view key) const {
  int v = 0;
  if (!parse_int(get(key), v)) {
    throw ConfigError("key '" + std::string(key) + "' expects an integer, got '" + get(key) + "'");
  }
  return v;
}

std::uint64_t ResolvedConfig::get_seed() const {
  const int s = get_int("seed");
  if (s < 0) throw ConfigError("seed must be >= 0");
  return static_cast<std::uint64_t>(s);
}

bool ResolvedConfig::get_bool(std::string_view key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + std::string(key) + "' expects true/false, got '" + v + "'");
}

ShiftSpec ResolvedConfig::shift_spec() const {
  ShiftSpec s;
  s.generator = generator_from_string(get("generator"));
  s.n_source = get_int("n_source");
  s.n_target = get_int("n_target");
  s.noise_sd = get_real("noise_sd");
  s.rotation_deg = get_real("rotation_deg");
  if (!get("translation").empty()) s.translation = parse_real_list(get("translation"), "translation");
  s.scale = get_real("scale");
  s.num_classes = get_int("k");
  s.seed = get_seed();
  return s;
}

SourceConfig ResolvedConfig::source_config() const {
  SourceConfig c;
  c.num_hypotheses = get_int("m");
  c.variant = variant_from_string(get("variant"));
  c.dropout_rate = get_real("dropout");
  c.steps = get_int("source_steps");
  c.batch_size = get_int("source_batch_size");
  c.lr = get_real("source_lr");
  c.momentum = get_real("momentum");
  c.nesterov = get_bool("nesterov");
  c.weight_decay = get_real("weight_decay");
  c.seed = get_seed();
  c.eval_every = get_int("eval_every");
  return c;
}

AdaptConfig ResolvedConfig::adapt_config() const {
  AdaptConfig c;
  c.objective = objective_from_string(get("objective"));
  c.lambda = get_real("lambda");
  c.divergence = divergence_from_string(get("divergence"));
  c.reduction = reduction_from_string(get("reduction"));
  if (get("anchor") == "seeded_random") {
    c.anchor_policy = AnchorPolicy::seeded_random();
  } else {
    c.anchor_policy = AnchorPolicy::fixed_index(get_int("anchor"));
  }
  c.stop_grad_anchor = get_bool("stop_grad_anchor");
  c.steps = get_int("steps");
  c.batch_size = get_int("batch_size");
  c.lr = get_real("lr");
  c.momentum = get_real("momentum");
  c.nesterov = get_bool("nesterov");
  c.weight_decay = get_real("weight_decay");
  c.extractor_lr_multiplier = get_real("extractor_lr_multiplier");
  c.freeze_classifiers = get_bool("freeze_classifiers");
  c.shared_extractor = get_bool("shared_extractor");
  c.train_mode_loss = get_bool("train_mode_loss");
  c.seed = get_seed();
  c.eval_every = get_int("eval_every");
  return c;
}

std::filesystem::path ResolvedConfig::output_root() const { return get("out"); }

void ResolvedConfig::validate() const {
  for (const auto& k : known_keys()) {
    if (!fields_.contains(k)) throw ConfigError("missing key '" + k + "'");
  }
  preset_defaults(get("preset"));
  const ShiftSpec spec = shift_spec();
  spec.validate();
  const SourceConfig src = source_config();
  src.validate();
  const AdaptConfig ad = adapt_config();
  ad.validate();

  if (get("translation").empty() == false && provenance("rotation_deg") != Provenance::kDefault &&
      spec.rotation_deg != 0.0) {
    throw ConfigError("rotation_deg and translation are mutually exclusive shifts");
  }
  if (ad.anchor_policy.fixed && *ad.anchor_policy.fixed >= src.num_hypotheses) {
    throw ConfigError("anchor " + get("anchor") + " out of range for m = " + get("m"));
  }
  const bool needs_pairs = ad.objective == Objective::kHdOnly || ad.objective == Objective::kCondEntropyHd;
  if (needs_pairs && src.num_hypotheses < 2) {
    throw ConfigError("objective " + get("objective") + " needs m >= 2 (hypothesis disparity is empty for m = 1)");
  }
  if (!ad.shared_extractor && src.num_hypotheses < 2) {
    throw ConfigError("shared_extractor = false needs m >= 2");
  }
}

nlohmann::json ResolvedConfig::to_json() const {
  nlohmann::json values = nlohmann::json::object();
  nlohmann::json prov = nlohmann::json::object();
  for (const auto& [k, f] : fields_) {
    values[k] = f.value;
    prov[k] = std::string(to_string(f.provenance));
  }
  return {{"values", values}, {"provenance", prov}};
}

ResolvedConfig ResolvedConfig::from_json(const nlohmann::json& j) {
  ResolvedConfig cfg;
  for (const auto& [k, v] : j.at("values").items()) {
    if (!is_known(k)) throw ConfigError("unknown key '" + k + "'; known keys: " + known_keys_list());
    cfg.fields_[k] = {v.get<std::string>(), provenance_from_string(j.at("provenance").at(k).get<std::string>())};
  }
  cfg.validate();
  return cfg;
}

bool ResolvedConfig::operator==(const ResolvedConfig& other) const {
  if (fields_.size() != other.fields_.size()) return false;
  for (const auto& [k, f] : fields_) {
    auto it = other.fields_.find(k);
    if (it == other.fields_.end() || it->second.value != f.value || it->second.provenance != f.provenance) return false;
  }
  return true;
}

std::vector<double> parse_real_list(std::string_view text, std::string_view what) {
  std::vector<double> out;
  for (auto field : split_fields(text)) {
    double v = 0.0;
    if (!parse_real(field, v) || !std::isfinite(v)) {
      throw ConfigError(std::string(what) + ": '" + std::string(field) + "' is not a number");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<int> parse_int_list(std::string_view text, std::string_view what) {
  std::vector<int> out;
  for (auto field : split_fields(text)) {
    const std::string f = trim(field);
    if (const auto dots = f.find(".."); dots != std::string::npos) {
      int lo = 0;
      int hi = 0;
      if (!parse_int(std::string_view(f).substr(0, dots), lo) || !parse_int(std::string_view(f).substr(dots + 2), hi) ||
          hi < lo) {
        throw ConfigError(std::string(what) + ": bad range '" + f + "'");
      }
      for (int v = lo; v <= hi; ++v) out.push_back(v);
      continue;
    }
    int v = 0;
    if (!parse_int(f, v)) throw ConfigError(std::string(what) + ": '" + f + "' is not an integer");
    out.push_back(v);
  }
  return out;
}

}  // namespace hdmi
