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

// Supervised multi-hypothesis source training and unsupervised target
// adaptation, plus the generate -> train -> adapt -> analyze pipeline.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hdmi/analysis.hpp"
#include "hdmi/hypotheses.hpp"
#include "hdmi/objectives.hpp"
#include "hdmi/shiftdata.hpp"

namespace hdmi {

enum class Objective {
  kSourceOnly,  // no adaptation; pipeline-level only
  kHdmi,
  kMiEnsemble,
  kMiSingle,
  kHdOnly,
  kCondEntropyHd,
  kMiL2,
  kMiL2Source,
};

std::string_view to_string(Objective o);
Objective objective_from_string(std::string_view s);
const std::vector<std::string>& objective_names();

// Anchor-based objectives report the anchor hypothesis as their prediction;
// the rest report the ensemble mean.
Predictor headline_predictor(Objective o);

struct AnchorPolicy {
  std::optional<int> fixed;  // nullopt: drawn once from the run seed

  static AnchorPolicy seeded_random() { return {}; }
  static AnchorPolicy fixed_index(int i) { return {i}; }
};

struct SourceConfig {
  int num_hypotheses = 2;
  Variant variant = Variant::kIC;
  double dropout_rate = 0.5;
  int steps = 1000;
  int batch_size = 64;
  double lr = 1e-2;
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 5e-4;
  std::uint64_t seed = 1;
  int eval_every = 25;

  void validate() const;
  nlohmann::json to_json() const;
};

struct AdaptConfig {
  Objective objective = Objective::kHdmi;
  double lambda = 0.5;
  DivergenceKind divergence = DivergenceKind::kCrossEntropy;
  HdReduction reduction = HdReduction::kMean;
  AnchorPolicy anchor_policy = AnchorPolicy::seeded_random();
  bool stop_grad_anchor = false;
  int steps = 1000;
  int batch_size = 64;
  double lr = 1e-2;
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 5e-4;
  double extractor_lr_multiplier = 1.0;
  bool freeze_classifiers = true;
  bool shared_extractor = true;
  // Train-mode (dropout active) forward passes for the adaptation loss.
  bool train_mode_loss = true;
  std::uint64_t seed = 1;
  int eval_every = 25;

  void validate() const;
  bool needs_snapshot() const { return objective == Objective::kMiL2Source; }
  nlohmann::json to_json() const;
};

struct EvalPoint {
  double acc_anchor = 0.0;
  double acc_ensemble = 0.0;
  double disagreement = 0.0;
};

struct RunRecord {
  int step = 0;
  LossBreakdown loss;
  std::optional<EvalPoint> eval;
  double wall_seconds = 0.0;
};

struct RunLog {
  std::vector<RunRecord> records;

  // step,total,mi,hd,acc_anchor,acc_ensemble,disagreement (wall time omitted
  // so that the file is reproducible byte for byte).
  std::string to_csv() const;
};

// Called every eval_every steps (and after the last step) with the current set
// and anchor. Supplies label-dependent metrics from outside the training loop.
using Monitor = std::function<EvalPoint(const HypothesisSet&, int anchor)>;

struct TrainResult {
  HypothesisSet set;
  RunLog log;
};

// The untrained source set used by the pipeline, seeded from cfg.seed.
HypothesisSet build_source_set(const SourceConfig& cfg, int input_dim, int num_classes);

// Minimizes the mean cross entropy over all heads through the shared
// extractor. All parameters are trainable.
TrainResult train_source(HypothesisSet set, const Dataset& source, const SourceConfig& cfg,
                         const Monitor& monitor = nullptr);

int resolve_anchor(const AnchorPolicy& policy, int num_hypotheses, std::uint64_t seed);

// One objective evaluation on a batch. With `accumulate`, gradients of the
// total loss are added to every parameter of the set (frozen or not).
LossBreakdown objective_step(HypothesisSet& set, const Matrix& batch, const AdaptConfig& cfg, int anchor,
                             const SourceSnapshot* snapshot, std::mt19937_64& rng, bool accumulate);

// Only the unlabeled target features are visible here.
TrainResult adapt_target(HypothesisSet set, const UnlabeledDataset& target, const AdaptConfig& cfg,
                         const SourceSnapshot* snapshot, const Monitor& monitor = nullptr);

// Evaluates the set on labelled data in eval mode.
EvalPoint evaluate(const HypothesisSet& set, const Matrix& x, const Labels& y, int anchor);

struct PipelineResult {
  AnalysisReport source_only;  // source-trained set on the target domain
  AnalysisReport adapted;      // equals source_only for Objective::kSourceOnly
  RunLog source_log;
  RunLog adapt_log;
  HypothesisSet source_set;
  HypothesisSet adapted_set;
  int anchor = 0;

  // The document written to report.json.
  nlohmann::json report_json(const nlohmann::json& config) const;
};

// generate -> train_source -> to_target -> adapt_target -> analyze. When
// `run_dir` is given every artifact is written there.
PipelineResult run_pipeline(const ShiftSpec& spec, const SourceConfig& source_cfg, const AdaptConfig& adapt_cfg,
                            const std::optional<std::filesystem::path>& run_dir = std::nullopt,
                            const nlohmann::json& config_echo = nullptr);

// Runs adaptation and analysis from an already trained source set.
PipelineResult adapt_and_analyze(const HypothesisSet& source_set, const UnlabeledDataset& target,
                                 const Labels& target_labels, const AdaptConfig& adapt_cfg);

// Data files plus write_run_artifacts: the layout produced by run_pipeline.
void write_pipeline_run(const std::filesystem::path& run_dir, const ShiftSpec& spec, const GeneratedPair& pair,
                        const PipelineResult& result, const nlohmann::json& config);

void write_run_artifacts(const std::filesystem::path& run_dir, const PipelineResult& result,
                         const std::vector<ProbBatch>& final_probs, const Labels& target_labels,
                         const nlohmann::json& config);

std::string dump_json(const nlohmann::json& j);

}  // namespace hdmi
