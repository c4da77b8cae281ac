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

#include "hdmi/shiftdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "hdmi/errors.hpp"
#include "hdmi/random.hpp"
#include "hdmi/textio.hpp"

namespace hdmi {
namespace {

constexpr double kBlobRadius = 3.0;

RowVector blob_center(int k, int num_classes) {
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(num_classes);
  RowVector c(2);
  c << kBlobRadius * std::cos(angle), kBlobRadius * std::sin(angle);
  return c;
}

// Distance from p to the half circle of radius 1 about `center` spanning
// angles [lo, lo + pi].
double arc_distance(const RowVector& p, double cx, double cy, double lo) {
  const double dx = p(0) - cx;
  const double dy = p(1) - cy;
  double angle = std::atan2(dy, dx);
  while (angle < lo) angle += 2.0 * std::numbers::pi;
  while (angle >= lo + 2.0 * std::numbers::pi) angle -= 2.0 * std::numbers::pi;
  if (angle <= lo + std::numbers::pi) return std::abs(std::hypot(dx, dy) - 1.0);
  const double e1 = std::hypot(dx - std::cos(lo), dy - std::sin(lo));
  const double e2 = std::hypot(dx - std::cos(lo + std::numbers::pi), dy - std::sin(lo + std::numbers::pi));
  return std::min(e1, e2);
}

std::vector<int> balanced_counts(int n, int num_classes) {
  std::vector<int> counts(num_classes, n / num_classes);
  for (int k = 0; k < n % num_classes; ++k) ++counts[k];
  return counts;
}

}  // namespace

void Dataset::validate() const {
  if (num_classes < 1) throw ConfigError("dataset needs K >= 1");
  if (!x.allFinite()) throw DomainError("dataset '" + domain_tag + "' has non-finite features");
  if (!y) return;
  if (static_cast<Eigen::Index>(y->size()) != x.rows()) throw ShapeError("label count does not match row count");
  std::vector<int> counts(num_classes, 0);
  for (std::size_t i = 0; i < y->size(); ++i) {
    const int label = (*y)[i];
    if (label < 0 || label >= num_classes) {
      throw DomainError("label " + std::to_string(label) + " at row " + std::to_string(i) + " outside [0, " +
                        std::to_string(num_classes) + ")");
    }
    ++counts[label];
  }
  for (int k = 0; k < num_classes; ++k) {
    if (counts[k] == 0) throw DomainError("class " + std::to_string(k) + " has no samples");
  }
}

std::string_view to_string(Generator g) { return g == Generator::kGaussBlobs ? "gauss_blobs" : "two_moons"; }

Generator generator_from_string(std::string_view s) {
  if (s == "two_moons") return Generator::kTwoMoons;
  if (s == "gauss_blobs") return Generator::kGaussBlobs;
  throw ConfigError("unknown generator '" + std::string(s) + "' (expected two_moons or gauss_blobs)");
}

void ShiftSpec::validate() const {
  if (num_classes < 2) throw ConfigError("K must be >= 2");
  if (generator == Generator::kTwoMoons && num_classes != 2) throw ConfigError("two_moons requires K = 2");
  if (n_source < num_classes || n_target < num_classes) throw ConfigError("n_source and n_target must be >= K");
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw ConfigError("noise_sd must be >= 0");
  if (!std::isfinite(rotation_deg)) throw ConfigError("rotation must be finite");
  if (!translation.empty() && translation.size() != 2) throw ConfigError("translation must have 2 components");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("scale must be positive");
}

nlohmann::json ShiftSpec::to_json() const {
  nlohmann::json j;
  j["generator"] = std::string(to_string(generator));
  j["n_source"] = n_source;
  j["n_target"] = n_target;
  j["noise_sd"] = noise_sd;
  if (is_rotation()) {
    j["shift"] = {{"rotation_deg", rotation_deg}};
  } else {
    j["shift"] = {{"translation", translation}, {"scale", scale}};
  }
  j["K"] = num_classes;
  j["seed"] = seed;
  return j;
}

ShiftSpec ShiftSpec::from_json(const nlohmann::json& j) {
  ShiftSpec s;
  s.generator = generator_from_string(j.at("generator").get<std::string>());
  s.n_source = j.at("n_source").get<int>();
  s.n_target = j.at("n_target").get<int>();
  s.noise_sd = j.at("noise_sd").get<double>();
  const auto& shift = j.at("shift");
  if (shift.contains("rotation_deg")) {
    s.rotation_deg = shift.at("rotation_deg").get<double>();
  } else {
    s.translation = shift.at("translation").get<std::vector<double>>();
    s.scale = shift.at("scale").get<double>();
  }
  s.num_classes = j.at("K").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.validate();
  return s;
}

Dataset sample_process(const ShiftSpec& spec, int n, std::uint64_t stream_seed) {
  spec.validate();
  std::mt19937_64 rng(stream_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);

  const std::vector<int> counts = balanced_counts(n, spec.num_classes);
  Matrix x(n, 2);
  Labels y;
  y.reserve(n);
  Eigen::Index row = 0;
  for (int k = 0; k < spec.num_classes; ++k) {
    for (int c = 0; c < counts[k]; ++c, ++row) {
      double px = 0.0;
      double py = 0.0;
      if (spec.generator == Generator::kTwoMoons) {
        const double t = angle(rng);
        if (k == 0) {
          px = std::cos(t);
          py = std::sin(t);
        } else {
          px = 1.0 - std::cos(t);
          py = 0.5 - std::sin(t);
        }
      } else {
        const RowVector center = blob_center(k, spec.num_classes);
        px = center(0);
        py = center(1);
      }
      x(row, 0) = px + spec.noise_sd * noise(rng);
      x(row, 1) = py + spec.noise_sd * noise(rng);
      y.push_back(k);
    }
  }
  // Interleave classes.
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  Dataset ds;
  ds.x = gather_rows(x, order);
  ds.y = gather_labels(y, order);
  ds.num_classes = spec.num_classes;
  return ds;
}

RowVector shift_point(const ShiftSpec& spec, const RowVector& centroid, const RowVector& x) {
  const RowVector d = x - centroid;
  RowVector out(2);
  if (spec.is_rotation()) {
    const double r = spec.rotation_deg * std::numbers::pi / 180.0;
    out << std::cos(r) * d(0) - std::sin(r) * d(1), std::sin(r) * d(0) + std::cos(r) * d(1);
    return centroid + out;
  }
  out << spec.translation[0], spec.translation[1];
  return centroid + spec.scale * d + out;
}

RowVector unshift_point(const ShiftSpec& spec, const RowVector& centroid, const RowVector& x) {
  RowVector out(2);
  if (spec.is_rotation()) {
    const RowVector d = x - centroid;
    const double r = -spec.rotation_deg * std::numbers::pi / 180.0;
    out << std::cos(r) * d(0) - std::sin(r) * d(1), std::sin(r) * d(0) + std::cos(r) * d(1);
    return centroid + out;
  }
  RowVector t(2);
  t << spec.translation[0], spec.translation[1];
  return centroid + (x - centroid - t) / spec.scale;
}

int nearest_process_class(const ShiftSpec& spec, const RowVector& x) {
  if (spec.generator == Generator::kTwoMoons) {
    const double d0 = arc_distance(x, 0.0, 0.0, 0.0);
    const double d1 = arc_distance(x, 1.0, 0.5, std::numbers::pi);
    return d1 < d0 ? 1 : 0;
  }
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < spec.num_classes; ++k) {
    const double d = (x - blob_center(k, spec.num_classes)).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

GeneratedPair generate(const ShiftSpec& spec) {
  spec.validate();
  GeneratedPair pair;
  pair.source = sample_process(spec, spec.n_source, derive_seed(spec.seed, 100));
  pair.source.domain_tag = "source";

  Dataset raw = sample_process(spec, spec.n_target, derive_seed(spec.seed, 200));
  pair.centroid = raw.x.colwise().mean();
  Matrix shifted(raw.x.rows(), raw.x.cols());
  for (Eigen::Index i = 0; i < raw.x.rows(); ++i) shifted.row(i) = shift_point(spec, pair.centroid, raw.x.row(i));
  pair.target = {std::move(shifted), spec.num_classes, "target"};
  pair.target_labels = std::move(*raw.y);
  return pair;
}

// ---------------------------------------------------------------------------
// CSV

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::string out;
  for (Eigen::Index c = 0; c < ds.x.cols(); ++c) {
    if (c > 0) out += ',';
    out += "f" + std::to_string(c);
  }
  if (ds.y) out += ",label";
  out += '\n';
  for (Eigen::Index i = 0; i < ds.x.rows(); ++i) {
    for (Eigen::Index c = 0; c < ds.x.cols(); ++c) {
      if (c > 0) out += ',';
      out += format_real(ds.x(i, c));
    }
    if (ds.y) out += "," + std::to_string((*ds.y)[i]);
    out += '\n';
  }
  write_text_file(path, out);
}

Dataset load_csv(const std::filesystem::path& path, bool labeled, int num_classes) {
  const std::string text = read_text_file(path);
  const std::string p = path.string();
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IngestionError(p, 1, "missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  const bool has_label = !header.empty() && header.back() == "label";
  const std::size_t width = header.size();
  const std::size_t n_features = has_label ? width - 1 : width;
  if (n_features == 0) throw IngestionError(p, 1, "header declares no feature columns");
  for (std::size_t c = 0; c < n_features; ++c) {
    if (header[c] != "f" + std::to_string(c)) {
      throw IngestionError(p, 1, "expected header column 'f" + std::to_string(c) + "', found '" +
                                     std::string(header[c]) + "'");
    }
  }
  if (labeled && !has_label) throw IngestionError(p, 1, "labeled load requested but file has no label column");

  std::vector<double> values;
  Labels labels;
  std::size_t line_no = 1;
  Eigen::Index rows = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != width) {
      throw IngestionError(p, line_no, "expected " + std::to_string(width) + " fields, found " +
                                           std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < n_features; ++c) {
      double v = 0.0;
      if (!parse_real(fields[c], v) || !std::isfinite(v)) {
        throw IngestionError(p, line_no, "malformed number '" + std::string(fields[c]) + "'");
      }
      values.push_back(v);
    }
    if (has_label) {
      int label = 0;
      if (!parse_int(fields.back(), label)) {
        throw IngestionError(p, line_no, "malformed label '" + std::string(fields.back()) + "'");
      }
      if (label < 0 || (num_classes > 0 && label >= num_classes)) {
        throw IngestionError(p, line_no, "label " + std::to_string(label) + " outside [0, " +
                                             std::to_string(num_classes) + ")");
      }
      max_label = std::max(max_label, label);
      labels.push_back(label);
    }
    ++rows;
  }
  Dataset ds;
  ds.x = Eigen::Map<Matrix>(values.data(), rows, static_cast<Eigen::Index>(n_features));
  ds.num_classes = num_classes > 0 ? num_classes : max_label + 1;
  ds.domain_tag = path.stem().string();
  if (labeled) ds.y = std::move(labels);
  if (ds.num_classes < 1) throw IngestionError(p, 0, "cannot infer the number of classes from an unlabeled file");
  try {
    ds.validate();
  } catch (const std::exception& e) {
    throw IngestionError(p, 0, e.what());
  }
  return ds;
}

std::filesystem::path labels_path_for(const std::filesystem::path& data_path) {
  std::filesystem::path out = data_path;
  out.replace_extension(".labels.csv");
  return out;
}

void save_labels_csv(const Labels& labels, const std::filesystem::path& path) {
  std::string out = "label\n";
  for (int l : labels) out += std::to_string(l) + "\n";
  write_text_file(path, out);
}

Labels load_labels_csv(const std::filesystem::path& path, int num_classes) {
  const std::string text = read_text_file(path);
  const std::string p = path.string();
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || (line != "label" && line != "label\r")) {
    throw IngestionError(p, 1, "expected header 'label'");
  }
  Labels labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    int label = 0;
    if (!parse_int(line, label)) throw IngestionError(p, line_no, "malformed label '" + line + "'");
    if (label < 0 || (num_classes > 0 && label >= num_classes)) {
      throw IngestionError(p, line_no, "label " + std::to_string(label) + " outside [0, " +
                                           std::to_string(num_classes) + ")");
    }
    labels.push_back(label);
  }
  return labels;
}

// ---------------------------------------------------------------------------
// batching

BatchIterator::BatchIterator(Eigen::Index n, int batch_size, std::uint64_t seed, bool shuffle)
    : n_(n), batch_size_(batch_size), seed_(seed), shuffle_(shuffle) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (n < 1) throw ConfigError("cannot iterate an empty dataset");
}

std::vector<std::vector<Eigen::Index>> BatchIterator::epoch(std::uint64_t epoch_index) const {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n_));
  std::iota(order.begin(), order.end(), 0);
  if (shuffle_) {
    std::mt19937_64 rng(derive_seed(seed_, epoch_index));
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<std::vector<Eigen::Index>> batches;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size_)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size_));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

const std::vector<Eigen::Index>& BatchIterator::next() {
  if (cursor_ >= current_.size()) {
    current_ = epoch(epoch_index_++);
    cursor_ = 0;
  }
  return current_[cursor_++];
}

Matrix gather_rows(const Matrix& x, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

Labels gather_labels(const Labels& y, const std::vector<Eigen::Index>& rows) {
  Labels out;
  out.reserve(rows.size());
  for (Eigen::Index r : rows) out.push_back(y.at(static_cast<std::size_t>(r)));
  return out;
}

}  // namespace hdmi
