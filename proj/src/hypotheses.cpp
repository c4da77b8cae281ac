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

#include "hdmi/hypotheses.hpp"

#include "hdmi/errors.hpp"
#include "hdmi/random.hpp"

namespace hdmi {

std::string_view to_string(Variant v) { return v == Variant::kMC ? "MC" : "IC"; }

Variant variant_from_string(std::string_view s) {
  if (s == "IC" || s == "ic") return Variant::kIC;
  if (s == "MC" || s == "mc") return Variant::kMC;
  throw ConfigError("unknown hypothesis variant '" + std::string(s) + "' (expected IC or MC)");
}

Architecture Architecture::desk_default(int input_dim, int num_classes, double dropout_rate) {
  Architecture a;
  a.extractor = {{input_dim, 64, Activation::kRelu, 0.0}, {64, 32, Activation::kRelu, 0.0}};
  a.classifier = {{32, 32, Activation::kRelu, dropout_rate}, {32, num_classes, Activation::kIdentity, 0.0}};
  return a;
}

void Architecture::validate() const {
  if (extractor.empty() || classifier.empty()) throw ConfigError("architecture needs extractor and classifier layers");
  if (extractor.back().out_dim != classifier.front().in_dim) {
    throw ShapeError("classifier input dim does not match extractor output dim");
  }
}

HypothesisSet HypothesisSet::build(const Architecture& arch, int num_hypotheses, Variant variant,
                                   std::uint64_t seed) {
  if (num_hypotheses < 1) throw ConfigError("number of hypotheses M must be >= 1");
  arch.validate();
  HypothesisSet set;
  set.variant_ = variant;
  set.num_hypotheses_ = num_hypotheses;
  set.num_classes_ = arch.classifier.back().out_dim;
  set.seed_ = seed;
  set.extractors_.emplace_back("extractor", arch.extractor, derive_seed(seed, 0));
  if (variant == Variant::kIC) {
    for (int m = 0; m < num_hypotheses; ++m) {
      set.classifiers_.emplace_back("classifier" + std::to_string(m), arch.classifier,
                                    derive_seed(seed, 1 + static_cast<std::uint64_t>(m)));
    }
  } else {
    set.classifiers_.emplace_back("classifier", arch.classifier, derive_seed(seed, 1));
  }
  return set;
}

void HypothesisSet::set_anchor(int anchor) {
  check_head(anchor);
  anchor_ = anchor;
}

void HypothesisSet::check_head(int head) const {
  if (head < 0 || head >= num_hypotheses_) {
    throw ConfigError("hypothesis index " + std::to_string(head) + " out of range [0, " +
                      std::to_string(num_hypotheses_) + ")");
  }
}

void HypothesisSet::split_extractor() {
  if (!shared_extractor() || num_hypotheses_ == 1) return;
  const Network base = extractors_.front();
  extractors_.clear();
  for (int m = 0; m < num_hypotheses_; ++m) {
    Network copy = base;
    copy.rename("extractor" + std::to_string(m));
    extractors_.push_back(std::move(copy));
  }
}

Network& HypothesisSet::extractor_for(int head) {
  check_head(head);
  return extractors_[extractor_index(head)];
}

const Network& HypothesisSet::extractor_for(int head) const {
  check_head(head);
  return extractors_[extractor_index(head)];
}

Network& HypothesisSet::classifier_for(int head) {
  check_head(head);
  return classifiers_[variant_ == Variant::kMC ? 0 : head];
}

const Network& HypothesisSet::classifier_for(int head) const {
  check_head(head);
  return classifiers_[variant_ == Variant::kMC ? 0 : head];
}

MaskPolicy HypothesisSet::mask_policy(int head) const {
  if (variant_ == Variant::kMC) return MaskPolicy::fixed_mask(static_cast<std::uint64_t>(head), mc_masks_in_eval_);
  return MaskPolicy::resample();
}

void HypothesisSet::zero_grads() {
  for (auto& n : extractors_) n.params().zero_grads();
  for (auto& n : classifiers_) n.params().zero_grads();
}

nlohmann::json HypothesisSet::to_json() const {
  nlohmann::json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["extractor"] = network_to_json(extractors_.front());
  if (!shared_extractor()) {
    nlohmann::json ex = nlohmann::json::array();
    for (const auto& n : extractors_) ex.push_back(network_to_json(n));
    j["extractors"] = std::move(ex);
  }
  nlohmann::json cl = nlohmann::json::array();
  for (const auto& n : classifiers_) cl.push_back(network_to_json(n));
  j["classifiers"] = std::move(cl);
  j["variant"] = std::string(to_string(variant_));
  j["num_hypotheses"] = num_hypotheses_;
  j["num_classes"] = num_classes_;
  j["anchor"] = anchor_ ? nlohmann::json(*anchor_) : nlohmann::json(nullptr);
  j["seed"] = seed_;
  j["frozen_classifiers"] = frozen_classifiers_;
  j["mc_masks_in_eval"] = mc_masks_in_eval_;
  return j;
}

HypothesisSet HypothesisSet::from_json(const nlohmann::json& j) {
  HypothesisSet set;
  set.variant_ = variant_from_string(j.at("variant").get<std::string>());
  set.num_hypotheses_ = j.at("num_hypotheses").get<int>();
  set.num_classes_ = j.at("num_classes").get<int>();
  set.seed_ = j.at("seed").get<std::uint64_t>();
  set.frozen_classifiers_ = j.at("frozen_classifiers").get<bool>();
  set.mc_masks_in_eval_ = j.at("mc_masks_in_eval").get<bool>();
  if (j.contains("extractors")) {
    for (const auto& n : j.at("extractors")) set.extractors_.push_back(network_from_json(n));
  } else {
    set.extractors_.push_back(network_from_json(j.at("extractor")));
  }
  for (const auto& n : j.at("classifiers")) set.classifiers_.push_back(network_from_json(n));
  if (set.num_hypotheses_ < 1) throw ConfigError("checkpoint has M < 1");
  const std::size_t want_heads = set.variant_ == Variant::kMC ? 1 : static_cast<std::size_t>(set.num_hypotheses_);
  if (set.classifiers_.size() != want_heads) throw ShapeError("checkpoint classifier count does not match variant");
  if (set.extractors_.size() != 1 && set.extractors_.size() != static_cast<std::size_t>(set.num_hypotheses_)) {
    throw ShapeError("checkpoint extractor count must be 1 or M");
  }
  for (const auto& c : set.classifiers_) {
    if (c.input_dim() != set.extractors_.front().output_dim() || c.output_dim() != set.num_classes_) {
      throw ShapeError("checkpoint classifier does not map extractor features to K classes");
    }
  }
  if (!j.at("anchor").is_null()) set.set_anchor(j.at("anchor").get<int>());
  return set;
}

// ---------------------------------------------------------------------------

SetForward forward_set(const HypothesisSet& set, const Matrix& x, Mode mode, std::mt19937_64* rng) {
  if (x.cols() != set.input_dim()) {
    throw ShapeError("input has " + std::to_string(x.cols()) + " columns, hypothesis set expects " +
                     std::to_string(set.input_dim()));
  }
  SetForward out;
  for (const auto& ex : set.extractors()) out.features.push_back(ex.forward(x, mode, MaskPolicy::resample(), rng));
  const int m_count = set.num_hypotheses();
  out.heads.reserve(m_count);
  out.probs.reserve(m_count);
  for (int m = 0; m < m_count; ++m) {
    const Matrix& feat = out.features[set.extractor_index(m)].output;
    out.heads.push_back(set.classifier_for(m).forward(feat, mode, set.mask_policy(m), rng));
    out.probs.push_back(softmax(out.heads.back().output));
  }
  return out;
}

void backward_set(HypothesisSet& set, const SetForward& fwd, const std::vector<Matrix>& dprobs) {
  const int m_count = set.num_hypotheses();
  if (static_cast<int>(dprobs.size()) != m_count || static_cast<int>(fwd.probs.size()) != m_count) {
    throw ShapeError("one probability cotangent per hypothesis required");
  }
  std::vector<Matrix> dfeat(set.extractors().size());
  for (int m = 0; m < m_count; ++m) {
    const Matrix dlogits = softmax_backward(fwd.probs[m], dprobs[m]);
    Matrix dx = set.classifier_for(m).backward(fwd.heads[m].tape, dlogits);
    Matrix& acc = dfeat[set.extractor_index(m)];
    if (acc.size() == 0) {
      acc = std::move(dx);
    } else {
      acc += dx;
    }
  }
  for (std::size_t e = 0; e < dfeat.size(); ++e) {
    if (dfeat[e].size() != 0) set.extractors()[e].backward(fwd.features[e].tape, dfeat[e]);
  }
}

std::vector<ProbBatch> predict_all(const HypothesisSet& set, const Matrix& x, Mode mode, std::mt19937_64* rng) {
  return forward_set(set, x, mode, rng).probs;
}

ProbBatch ensemble_mean(const std::vector<ProbBatch>& members) {
  if (members.empty()) throw ShapeError("ensemble of zero members");
  ProbBatch sum = members.front();
  for (std::size_t m = 1; m < members.size(); ++m) {
    if (members[m].rows() != sum.rows() || members[m].cols() != sum.cols()) {
      throw ShapeError("ensemble members differ in shape");
    }
    sum += members[m];
  }
  return sum / static_cast<double>(members.size());
}

ProbBatch ensemble_predict(const HypothesisSet& set, const Matrix& x) {
  return ensemble_mean(predict_all(set, x, Mode::kEval));
}

ProbBatch anchor_predict(const HypothesisSet& set, const Matrix& x, int anchor) {
  if (anchor < 0 || anchor >= set.num_hypotheses()) {
    throw ConfigError("anchor index " + std::to_string(anchor) + " out of range");
  }
  const Matrix feat = set.extractor_for(anchor).forward(x, Mode::kEval, MaskPolicy::resample()).output;
  return softmax(set.classifier_for(anchor).forward(feat, Mode::kEval, set.mask_policy(anchor)).output);
}

// ---------------------------------------------------------------------------

SourceSnapshot::SourceSnapshot(const HypothesisSet& set) : copy_(set) { copy_.zero_grads(); }

const std::vector<double>* SourceSnapshot::find(std::string_view name) const {
  for (const auto& n : copy_.extractors()) {
    if (const auto* e = n.params().find(name)) return &e->values;
  }
  for (const auto& n : copy_.classifiers()) {
    if (const auto* e = n.params().find(name)) return &e->values;
  }
  return nullptr;
}

bool SourceSnapshot::classifiers_equal(const HypothesisSet& set) const {
  if (set.classifiers().size() != copy_.classifiers().size()) return false;
  for (std::size_t i = 0; i < set.classifiers().size(); ++i) {
    if (!set.classifiers()[i].params().values_equal(copy_.classifiers()[i].params())) return false;
  }
  return true;
}

TargetTransfer to_target(const HypothesisSet& source, bool freeze_classifiers, bool shared_extractor) {
  HypothesisSet target = source;
  target.zero_grads();
  target.set_frozen_classifiers(freeze_classifiers);
  if (!shared_extractor) target.split_extractor();
  SourceSnapshot snapshot(target);
  return {std::move(target), std::move(snapshot)};
}

}  // namespace hdmi
