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

// Synthetic source/target pairs with a label-preserving covariate shift, plus
// CSV ingestion and mini-batch iteration.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hdmi/types.hpp"

namespace hdmi {

struct UnlabeledDataset {
  Matrix x;
  int num_classes = 0;
  std::string domain_tag;
};

struct Dataset {
  Matrix x;
  std::optional<Labels> y;
  int num_classes = 0;
  std::string domain_tag;

  // Labels in [0, K), every class non-empty, x finite.
  void validate() const;
  UnlabeledDataset unlabeled() const { return {x, num_classes, domain_tag}; }
  Eigen::Index size() const { return x.rows(); }
};

enum class Generator { kTwoMoons, kGaussBlobs };

std::string_view to_string(Generator g);
Generator generator_from_string(std::string_view s);

struct ShiftSpec {
  Generator generator = Generator::kTwoMoons;
  int n_source = 600;
  int n_target = 600;
  double noise_sd = 0.08;
  // Exactly one of the two shift forms is used: rotation when `translation`
  // is empty, otherwise translation followed by scaling about the centroid.
  double rotation_deg = 0.0;
  std::vector<double> translation;
  double scale = 1.0;
  int num_classes = 2;
  std::uint64_t seed = 1;

  void validate() const;
  bool is_rotation() const { return translation.empty(); }

  nlohmann::json to_json() const;
  static ShiftSpec from_json(const nlohmann::json& j);
};

struct GeneratedPair {
  Dataset source;
  UnlabeledDataset target;
  Labels target_labels;  // ground truth, for evaluation only
  RowVector centroid;    // centre of the shift transform
};

GeneratedPair generate(const ShiftSpec& spec);

// Draws n labelled points from the un-shifted class-conditional process.
Dataset sample_process(const ShiftSpec& spec, int n, std::uint64_t stream_seed);

RowVector shift_point(const ShiftSpec& spec, const RowVector& centroid, const RowVector& x);
RowVector unshift_point(const ShiftSpec& spec, const RowVector& centroid, const RowVector& x);

// Class whose noiseless generating manifold (moon arc or blob centre) lies
// closest to x.
int nearest_process_class(const ShiftSpec& spec, const RowVector& x);

// Header `f0,...,f{d-1}[,label]`.
void save_csv(const Dataset& ds, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path, bool labeled, int num_classes = 0);

// Sibling ground-truth file `<name>.labels.csv` with a single `label` column.
std::filesystem::path labels_path_for(const std::filesystem::path& data_path);
void save_labels_csv(const Labels& labels, const std::filesystem::path& path);
Labels load_labels_csv(const std::filesystem::path& path, int num_classes);

// Mini-batches of row indices. The permutation of epoch e is a pure function
// of (seed, e); the final short batch is kept.
class BatchIterator {
 public:
  BatchIterator(Eigen::Index n, int batch_size, std::uint64_t seed, bool shuffle);

  std::vector<std::vector<Eigen::Index>> epoch(std::uint64_t epoch_index) const;

  // Streaming access across epochs for step-based training loops.
  const std::vector<Eigen::Index>& next();

 private:
  Eigen::Index n_;
  int batch_size_;
  std::uint64_t seed_;
  bool shuffle_;
  std::uint64_t epoch_index_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::vector<Eigen::Index>> current_;
};

Matrix gather_rows(const Matrix& x, const std::vector<Eigen::Index>& rows);
Labels gather_labels(const Labels& y, const std::vector<Eigen::Index>& rows);

}  // namespace hdmi
