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

#include <gtest/gtest.h>

#include <random>

#include "hdmi/adapt.hpp"
#include "hdmi/errors.hpp"
#include "support.hpp"

namespace hdmi {
namespace {

namespace t = testing;

Dataset separable_blobs() {
  ShiftSpec spec;
  spec.generator = Generator::kGaussBlobs;
  spec.num_classes = 3;
  spec.noise_sd = 0.3;
  spec.n_source = spec.n_target = 300;
  return generate(spec).source;
}

TEST(TrainSource, SeparableBlobsAreLearned) {
  const Dataset src = separable_blobs();
  SourceConfig cfg;
  cfg.steps = 500;
  const TrainResult r = train_source(build_source_set(cfg, 2, 3), src, cfg);
  const auto ps = predict_all(r.set, src.x);
  EXPECT_GE(accuracy(ensemble_mean(ps), *src.y), 0.99);
  // Every head is trained, not just the ensemble.
  for (const auto& p : ps) EXPECT_GE(accuracy(p, *src.y), 0.95);
}

TEST(TrainSource, ZeroStepsLeavesParametersUnchanged) {
  const Dataset src = separable_blobs();
  SourceConfig cfg;
  cfg.steps = 0;
  const HypothesisSet init = build_source_set(cfg, 2, 3);
  const TrainResult r = train_source(init, src, cfg);
  EXPECT_EQ(r.set.to_json().dump(), init.to_json().dump());
  EXPECT_TRUE(r.log.records.empty());
}

TEST(TrainSource, SingleHypothesisBaseline) {
  const Dataset src = separable_blobs();
  SourceConfig cfg;
  cfg.steps = 300;
  cfg.num_hypotheses = 1;
  const TrainResult r = train_source(build_source_set(cfg, 2, 3), src, cfg);
  EXPECT_EQ(r.set.num_hypotheses(), 1);
  EXPECT_GE(accuracy(predict_all(r.set, src.x)[0], *src.y), 0.95);
}

TEST(TrainSource, RejectsUnlabeledData) {
  Dataset src = separable_blobs();
  src.y.reset();
  SourceConfig cfg;
  EXPECT_THROW(train_source(build_source_set(cfg, 2, 3), src, cfg), ConfigError);
}

TEST(Anchor, SeededAndFixed) {
  EXPECT_EQ(resolve_anchor(AnchorPolicy::seeded_random(), 4, 7), resolve_anchor(AnchorPolicy::seeded_random(), 4, 7));
  for (std::uint64_t s = 0; s < 50; ++s) {
    const int a = resolve_anchor(AnchorPolicy::seeded_random(), 3, s);
    EXPECT_GE(a, 0);
    EXPECT_LT(a, 3);
  }
  EXPECT_EQ(resolve_anchor(AnchorPolicy::fixed_index(1), 2, 0), 1);
  EXPECT_THROW(resolve_anchor(AnchorPolicy::fixed_index(2), 2, 0), ConfigError);
}

TEST(ObjectiveStep, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(1);
  for (const auto& name : objective_names()) {
    if (name == "source_only") continue;
    auto set = HypothesisSet::build(t::tiny_arch(2, 3, 0.3), 2, Variant::kIC, 5);
    t::randomize(set, rng);
    set.set_frozen_classifiers(false);
    const SourceSnapshot snap(HypothesisSet::build(t::tiny_arch(2, 3, 0.3), 2, Variant::kIC, 6));
    AdaptConfig cfg;
    cfg.objective = objective_from_string(name);
    const auto r = t::check_objective_gradient(set, t::random_matrix(rng, 6, 2), cfg, 1, &snap, 3);
    EXPECT_LT(r.max_rel_err, 1e-5) << name;
    EXPECT_GT(r.checked, 50u);
  }
}

TEST(Adapt, ValidatesObjectiveRequirements) {
  auto set = HypothesisSet::build(Architecture::desk_default(2, 2), 2, Variant::kIC, 1);
  std::mt19937_64 rng(2);
  UnlabeledDataset target{t::random_matrix(rng, 20, 2), 2, "t"};
  AdaptConfig cfg;
  cfg.objective = Objective::kSourceOnly;
  EXPECT_THROW(adapt_target(set, target, cfg, nullptr), ConfigError);
  cfg.objective = Objective::kMiL2Source;
  EXPECT_THROW(adapt_target(set, target, cfg, nullptr), ConfigError);
  cfg.objective = Objective::kHdmi;
  UnlabeledDataset wrong{t::random_matrix(rng, 20, 3), 2, "t"};
  EXPECT_THROW(adapt_target(set, wrong, cfg, nullptr), ShapeError);
}

TEST(Adapt, HdOnlyOnIdenticalHeadsIsStationary) {
  Architecture arch = Architecture::desk_default(2, 2, 0.0);
  auto set = HypothesisSet::build(arch, 2, Variant::kMC, 3);
  std::mt19937_64 rng(3);
  UnlabeledDataset target{t::random_matrix(rng, 64, 2), 2, "t"};
  AdaptConfig cfg;
  cfg.objective = Objective::kHdOnly;
  cfg.divergence = DivergenceKind::kKl;
  cfg.weight_decay = 0.0;
  cfg.steps = 20;
  cfg.eval_every = 1;
  TargetTransfer tt = to_target(set);
  const TrainResult r = adapt_target(tt.set, target, cfg, &tt.snapshot);
  for (const auto& rec : r.log.records) EXPECT_NEAR(rec.loss.total, 0.0, 1e-12);
  const auto& before = set.extractors()[0].params().entries();
  const auto& after = r.set.extractors()[0].params().entries();
  for (std::size_t e = 0; e < before.size(); ++e)
    for (std::size_t i = 0; i < before[e].values.size(); ++i)
      EXPECT_NEAR(after[e].values[i], before[e].values[i], 1e-10);
}

ShiftSpec small_spec(double rotation) {
  ShiftSpec spec;
  spec.rotation_deg = rotation;
  spec.n_source = spec.n_target = 300;
  return spec;
}

TEST(Pipeline, ZeroShiftBarelyMovesAccuracy) {
  ShiftSpec spec;
  spec.rotation_deg = 0.0;
  const PipelineResult r = run_pipeline(spec, SourceConfig{}, AdaptConfig{});
  EXPECT_GT(r.source_only.accuracy, 0.9);
  EXPECT_LT(std::abs(r.adapted.accuracy - r.source_only.accuracy), 0.02);
}

TEST(Pipeline, ReportIsDeterministic) {
  SourceConfig scfg;
  scfg.steps = 100;
  AdaptConfig acfg;
  acfg.steps = 100;
  const auto a = run_pipeline(small_spec(40.0), scfg, acfg).report_json(nullptr).dump();
  const auto b = run_pipeline(small_spec(40.0), scfg, acfg).report_json(nullptr).dump();
  EXPECT_EQ(a, b);
}

TEST(Pipeline, SingleHypothesisHdmiWithoutDisparityIsMiMaximization) {
  SourceConfig scfg;
  scfg.steps = 100;
  scfg.num_hypotheses = 1;
  AdaptConfig hd;
  hd.steps = 60;
  hd.lambda = 0.0;
  AdaptConfig mi = hd;
  mi.objective = Objective::kMiSingle;
  const auto a = run_pipeline(small_spec(40.0), scfg, hd);
  const auto b = run_pipeline(small_spec(40.0), scfg, mi);
  EXPECT_EQ(a.adapted_set.to_json().dump(), b.adapted_set.to_json().dump());
}

TEST(Pipeline, LambdaZeroHdmiTracksMiEnsembleBitwise) {
  SourceConfig scfg;
  scfg.steps = 50;
  AdaptConfig hd;
  hd.steps = 40;
  hd.lambda = 0.0;
  AdaptConfig mi = hd;
  mi.objective = Objective::kMiEnsemble;
  const GeneratedPair pair = generate(small_spec(40.0));
  const TrainResult src = train_source(build_source_set(scfg, 2, 2), pair.source, scfg);
  std::vector<std::string> ta, tb;
  auto record = [](std::vector<std::string>& out) {
    return [&out](const HypothesisSet& s, int) {
      out.push_back(s.to_json().dump());
      return EvalPoint{};
    };
  };
  hd.eval_every = mi.eval_every = 1;
  TargetTransfer t1 = to_target(src.set), t2 = to_target(src.set);
  adapt_target(t1.set, pair.target, hd, &t1.snapshot, record(ta));
  adapt_target(t2.set, pair.target, mi, &t2.snapshot, record(tb));
  ASSERT_EQ(ta.size(), 40u);
  EXPECT_EQ(ta, tb);
}

TEST(RunLog, CsvLayout) {
  RunLog log;
  RunRecord r;
  r.step = 5;
  r.loss.total = -0.5;
  r.eval = EvalPoint{0.75, 0.5, 0.25};
  log.records.push_back(r);
  const std::string csv = log.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,total,mi,hd,acc_anchor,acc_ensemble,disagreement");
  EXPECT_NE(csv.find("5,-0.5,"), std::string::npos);
}

}  // namespace
}  // namespace hdmi
