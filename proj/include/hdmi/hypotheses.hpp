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

// A hypothesis set {h_i = f_i o psi}: a feature extractor shared by M
// classifier heads. Heads are either independently initialized networks (IC)
// or M fixed dropout masks over one classifier network (MC).

#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hdmi/diffnet.hpp"
#include "hdmi/types.hpp"

namespace hdmi {

enum class Variant { kIC, kMC };

std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view s);

struct Architecture {
  std::vector<LayerSpec> extractor;
  std::vector<LayerSpec> classifier;

  // extractor [d_in->64 relu, 64->32 relu], classifier [32->32 relu + dropout, 32->K].
  static Architecture desk_default(int input_dim, int num_classes, double dropout_rate = 0.5);

  void validate() const;
};

class HypothesisSet {
 public:
  HypothesisSet() = default;

  static HypothesisSet build(const Architecture& arch, int num_hypotheses, Variant variant, std::uint64_t seed);

  int num_hypotheses() const { return num_hypotheses_; }
  int num_classes() const { return num_classes_; }
  int input_dim() const { return extractors_.front().input_dim(); }
  Variant variant() const { return variant_; }
  std::uint64_t seed() const { return seed_; }

  bool frozen_classifiers() const { return frozen_classifiers_; }
  void set_frozen_classifiers(bool frozen) { frozen_classifiers_ = frozen; }

  // MC heads keep their masks at evaluation time unless this is cleared.
  bool mc_masks_in_eval() const { return mc_masks_in_eval_; }
  void set_mc_masks_in_eval(bool on) { mc_masks_in_eval_ = on; }

  std::optional<int> anchor() const { return anchor_; }
  void set_anchor(int anchor);

  bool shared_extractor() const { return extractors_.size() == 1; }
  // Gives every head its own copy of the extractor (same initial values).
  void split_extractor();

  Network& extractor_for(int head);
  const Network& extractor_for(int head) const;
  Network& classifier_for(int head);
  const Network& classifier_for(int head) const;
  MaskPolicy mask_policy(int head) const;

  // Distinct networks; MC sets hold one classifier network.
  std::vector<Network>& extractors() { return extractors_; }
  const std::vector<Network>& extractors() const { return extractors_; }
  std::vector<Network>& classifiers() { return classifiers_; }
  const std::vector<Network>& classifiers() const { return classifiers_; }

  // Index of the extractor network that feeds `head`.
  int extractor_index(int head) const { return shared_extractor() ? 0 : head; }

  void zero_grads();

  nlohmann::json to_json() const;
  static HypothesisSet from_json(const nlohmann::json& j);

 private:
  void check_head(int head) const;

  std::vector<Network> extractors_;
  std::vector<Network> classifiers_;
  Variant variant_ = Variant::kIC;
  int num_hypotheses_ = 0;
  int num_classes_ = 0;
  std::uint64_t seed_ = 0;
  bool frozen_classifiers_ = false;
  bool mc_masks_in_eval_ = true;
  std::optional<int> anchor_;
};

// Forward pass through every head with the cached tapes needed for backward.
struct SetForward {
  std::vector<ForwardResult> features;  // one per extractor network
  std::vector<ForwardResult> heads;     // one per hypothesis (logits)
  std::vector<ProbBatch> probs;         // softmax of each head
};

SetForward forward_set(const HypothesisSet& set, const Matrix& x, Mode mode, std::mt19937_64* rng);

// Backpropagates per-head dL/dprobs through softmax, heads and extractor(s),
// accumulating parameter gradients. Classifier gradients are accumulated even
// when frozen; the optimizer is responsible for not applying them.
void backward_set(HypothesisSet& set, const SetForward& fwd, const std::vector<Matrix>& dprobs);

std::vector<ProbBatch> predict_all(const HypothesisSet& set, const Matrix& x, Mode mode = Mode::kEval,
                                   std::mt19937_64* rng = nullptr);

// Row-wise arithmetic mean over members.
ProbBatch ensemble_mean(const std::vector<ProbBatch>& members);

ProbBatch ensemble_predict(const HypothesisSet& set, const Matrix& x);
ProbBatch anchor_predict(const HypothesisSet& set, const Matrix& x, int anchor);

// Immutable copy of every parameter value of a set at creation time.
class SourceSnapshot {
 public:
  explicit SourceSnapshot(const HypothesisSet& set);

  const HypothesisSet& parameters() const { return copy_; }
  // Value array of the parameter with the given name, or nullptr.
  const std::vector<double>* find(std::string_view name) const;

  bool classifiers_equal(const HypothesisSet& set) const;

 private:
  HypothesisSet copy_;
};

struct TargetTransfer {
  HypothesisSet set;
  SourceSnapshot snapshot;
};

// Prepares a source-trained set for adaptation: classifiers frozen (by
// default), extractor optionally split per head, snapshot taken afterwards so
// parameter names line up with the live set.
TargetTransfer to_target(const HypothesisSet& source, bool freeze_classifiers = true,
                         bool shared_extractor = true);

}  // namespace hdmi
