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
#include "hdmi/hypotheses.hpp"
#include "support.hpp"

namespace hdmi {
namespace {

using testing::random_matrix;

TEST(HypothesisSet, SingleIcHypothesis) {
  const auto set = HypothesisSet::build(Architecture::desk_default(2, 2), 1, Variant::kIC, 1);
  EXPECT_EQ(set.num_hypotheses(), 1);
  EXPECT_EQ(set.classifiers().size(), 1u);
  std::mt19937_64 rng(1);
  const Matrix x = random_matrix(rng, 5, 2);
  EXPECT_EQ(anchor_predict(set, x, 0), ensemble_predict(set, x));
}

TEST(HypothesisSet, SameSeedBuildsIdenticalSets) {
  const auto a = HypothesisSet::build(Architecture::desk_default(2, 3), 2, Variant::kIC, 42);
  const auto b = HypothesisSet::build(Architecture::desk_default(2, 3), 2, Variant::kIC, 42);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  const auto c = HypothesisSet::build(Architecture::desk_default(2, 3), 2, Variant::kIC, 43);
  EXPECT_NE(a.to_json().dump(), c.to_json().dump());
}

TEST(HypothesisSet, McSharesOneClassifierWithDistinctMasks) {
  const auto set = HypothesisSet::build(Architecture::desk_default(2, 2, 0.5), 3, Variant::kMC, 7);
  ASSERT_EQ(set.classifiers().size(), 1u);
  for (int m = 0; m < 3; ++m) {
    EXPECT_TRUE(set.classifier_for(m).params().values_equal(set.classifier_for(0).params()));
  }
  const auto& clf = set.classifier_for(0);
  int distinct = 0;
  for (int m = 1; m < 3; ++m) {
    distinct += clf.fixed_mask(set.mask_policy(m).mask_id, 0) != clf.fixed_mask(set.mask_policy(0).mask_id, 0);
  }
  EXPECT_EQ(distinct, 2);
}

TEST(HypothesisSet, McWithoutEvalMasksGivesIdenticalOutputs) {
  auto set = HypothesisSet::build(Architecture::desk_default(2, 2, 0.5), 3, Variant::kMC, 7);
  set.set_mc_masks_in_eval(false);
  std::mt19937_64 rng(2);
  const Matrix x = random_matrix(rng, 10, 2);
  const auto ps = predict_all(set, x);
  EXPECT_EQ(ps[0], ps[1]);
  EXPECT_EQ(ps[0], ps[2]);
  set.set_mc_masks_in_eval(true);
  const auto qs = predict_all(set, x);
  EXPECT_NE(qs[0], qs[1]);
}

TEST(HypothesisSet, ZeroClassifiersGiveUniformRows) {
  auto set = HypothesisSet::build(Architecture::desk_default(2, 4), 2, Variant::kIC, 3);
  for (auto& c : set.classifiers())
    for (auto& e : c.params().entries()) std::fill(e.values.begin(), e.values.end(), 0.0);
  std::mt19937_64 rng(3);
  for (const auto& p : predict_all(set, random_matrix(rng, 6, 2))) {
    EXPECT_TRUE(((p.array() - 0.25).abs() < 1e-15).all());
  }
}

TEST(HypothesisSet, RandomIcHeadsDiffer) {
  const auto set = HypothesisSet::build(Architecture::desk_default(2, 3), 3, Variant::kIC, 5);
  std::mt19937_64 rng(4);
  const auto ps = predict_all(set, random_matrix(rng, 8, 2));
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) EXPECT_GT((ps[i] - ps[j]).cwiseAbs().maxCoeff(), 0.0);
}

TEST(HypothesisSet, JsonRoundTripIsExact) {
  auto set = HypothesisSet::build(Architecture::desk_default(2, 3, 0.4), 3, Variant::kMC, 9);
  set.set_anchor(2);
  set.set_frozen_classifiers(true);
  const std::string text = set.to_json().dump();
  const auto back = HypothesisSet::from_json(nlohmann::json::parse(text));
  EXPECT_EQ(back.to_json().dump(), text);
  EXPECT_EQ(back.anchor(), std::optional<int>(2));
  std::mt19937_64 rng(5);
  const Matrix x = random_matrix(rng, 4, 2);
  const auto a = predict_all(set, x);
  const auto b = predict_all(back, x);
  for (int m = 0; m < 3; ++m) EXPECT_EQ(a[m], b[m]);
}

TEST(HypothesisSet, AnchorOutOfRangeRejected) {
  auto set = HypothesisSet::build(Architecture::desk_default(2, 2), 2, Variant::kIC, 1);
  EXPECT_THROW(set.set_anchor(2), ConfigError);
  EXPECT_THROW(set.set_anchor(-1), ConfigError);
}

TEST(HypothesisSet, SplitExtractorKeepsPredictions) {
  const auto set = HypothesisSet::build(Architecture::desk_default(2, 2), 2, Variant::kIC, 1);
  auto split = set;
  split.split_extractor();
  EXPECT_FALSE(split.shared_extractor());
  EXPECT_EQ(split.extractors().size(), 2u);
  std::mt19937_64 rng(6);
  const Matrix x = random_matrix(rng, 4, 2);
  const auto a = predict_all(set, x);
  const auto b = predict_all(split, x);
  EXPECT_EQ(a[0], b[0]);
  EXPECT_EQ(a[1], b[1]);
}

TEST(Ensemble, IdenticalMembersGiveThatMember) {
  std::mt19937_64 rng(7);
  const ProbBatch p = testing::random_probs(rng, 5, 3);
  EXPECT_TRUE(ensemble_mean({p, p, p}).isApprox(p, 1e-15));
}

TEST(Ensemble, OppositeOneHotsAverageToHalf) {
  ProbBatch a(1, 2), b(1, 2);
  a << 1, 0;
  b << 0, 1;
  const ProbBatch m = ensemble_mean({a, b});
  EXPECT_EQ(m(0, 0), 0.5);
  EXPECT_EQ(m(0, 1), 0.5);
}

TEST(Ensemble, MatchesBruteForceAverage) {
  const auto set = HypothesisSet::build(Architecture::desk_default(2, 3), 3, Variant::kIC, 8);
  std::mt19937_64 rng(8);
  const Matrix x = random_matrix(rng, 7, 2);
  const auto ps = predict_all(set, x);
  const ProbBatch e = ensemble_predict(set, x);
  for (int i = 0; i < 7; ++i) {
    for (int k = 0; k < 3; ++k) {
      const double brute = (ps[0](i, k) + ps[1](i, k) + ps[2](i, k)) / 3.0;
      EXPECT_NEAR(e(i, k), brute, 1e-15);
    }
  }
  for (int j = 0; j < 3; ++j) EXPECT_EQ(anchor_predict(set, x, j), ps[j]);
}

TEST(Freezing, ClassifiersStayBitwiseEqualToSnapshot) {
  auto source = HypothesisSet::build(Architecture::desk_default(2, 2), 2, Variant::kIC, 11);
  std::mt19937_64 rng(9);
  UnlabeledDataset target{random_matrix(rng, 100, 2), 2, "t"};
  for (bool freeze : {true, false}) {
    TargetTransfer tt = to_target(source, freeze);
    AdaptConfig cfg;
    cfg.steps = 50;
    cfg.freeze_classifiers = freeze;
    const TrainResult r = adapt_target(tt.set, target, cfg, &tt.snapshot);
    EXPECT_EQ(tt.snapshot.classifiers_equal(r.set), freeze);
    EXPECT_NE(r.set.extractors()[0].params().at("extractor.0.weight").values,
              source.extractors()[0].params().at("extractor.0.weight").values);
  }
}

TEST(Freezing, SnapshotLooksUpParameters) {
  const auto set = HypothesisSet::build(Architecture::desk_default(2, 2), 2, Variant::kIC, 1);
  const SourceSnapshot snap(set);
  ASSERT_NE(snap.find("classifier0.1.bias"), nullptr);
  EXPECT_EQ(snap.find("nope"), nullptr);
}

}  // namespace
}  // namespace hdmi
