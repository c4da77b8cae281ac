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

// Evaluation metrics and diagnostics over predicted label probabilities.
// Argmax ties resolve to the lowest class index throughout.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hdmi/types.hpp"

namespace hdmi {

int argmax_row(const ProbBatch& p, Eigen::Index row);
std::vector<int> argmax(const ProbBatch& p);

double accuracy(const ProbBatch& p, const Labels& y);
// Recall of each class; throws DomainError naming the first class absent from y.
std::vector<double> per_class_accuracy(const ProbBatch& p, const Labels& y, int num_classes);

// Mean over samples of sum_k (p_ik - [y_i = k])^2, in [0, 2].
double brier(const ProbBatch& p, const Labels& y);
// Binary variant treating `positive_class` as the positive label.
double brier_one_vs_rest(const ProbBatch& p, const Labels& y, int positive_class);

struct ReliabilityBins {
  std::vector<double> edges;  // B + 1 values, 0 .. 1
  std::vector<long> count;
  std::vector<double> mean_confidence;  // 0 for empty bins
  std::vector<double> accuracy;         // 0 for empty bins

  nlohmann::json to_json() const;
};

struct EceResult {
  double ece = 0.0;
  ReliabilityBins bins;
};

// Top-label ECE over B equal-width right-closed bins; bin 0 also holds 0.
EceResult ece(const ProbBatch& p, const Labels& y, int num_bins = 10);

enum class DisagreementKind { kRate, kKl };

struct DisagreementMatrix {
  Matrix values;
  DisagreementKind kind = DisagreementKind::kRate;

  // Mean over the off-diagonal entries (0 for M = 1).
  double off_diagonal_mean() const;
  nlohmann::json to_json() const;
};

struct DisagreementResult {
  DisagreementMatrix matrix;
  std::optional<std::vector<double>> error_rates;  // per hypothesis, when labels are given
};

// Entry (i, j) is the fraction of samples whose argmax under h_i and h_j differ.
DisagreementResult disagreement_rates(const std::vector<ProbBatch>& ps, const Labels* y = nullptr);

// Entry (row i, column j) = batch-mean KL[p_j || p_i]: columns are the first
// KL argument, rows the second.
DisagreementMatrix kl_matrix(const std::vector<ProbBatch>& ps);

struct ErrorProfile {
  int num_hypotheses = 0;
  // Pattern string has one character per hypothesis, '1' when it is correct.
  std::map<std::string, long> pattern_counts;
  // correct[i][m] for sample i and hypothesis m.
  std::vector<std::vector<bool>> correct;
  // (sample, hypothesis) pairs wrong now but right in the reference profile.
  std::optional<long> new_errors;

  nlohmann::json to_json() const;
};

ErrorProfile hypothesis_error_profile(const std::vector<ProbBatch>& ps, const Labels& y,
                                      const ErrorProfile* reference = nullptr);

enum class Predictor { kAnchor, kEnsemble };

struct AnalysisReport {
  int num_hypotheses = 0;
  int num_classes = 0;
  int anchor = 0;
  Predictor headline = Predictor::kEnsemble;
  double accuracy_anchor = 0.0;
  double accuracy_ensemble = 0.0;
  double accuracy = 0.0;  // of the headline predictor
  std::vector<double> per_class_accuracy;
  double per_class_average = 0.0;
  double brier = 0.0;
  double ece = 0.0;
  ReliabilityBins bins;
  DisagreementMatrix disagreement;
  DisagreementMatrix kl;
  double mean_disagreement = 0.0;
  std::vector<double> disagreement_vs_truth;
  double anchor_ensemble_agreement = 0.0;
  ErrorProfile error_profile;
  std::string runlog;

  nlohmann::json to_json() const;
};

// Calibration and per-class metrics are computed on the headline predictor.
AnalysisReport analyze(const std::vector<ProbBatch>& ps, const Labels& y, int anchor, Predictor headline,
                       int num_bins = 10, const ErrorProfile* reference = nullptr);

// bins.csv: edge_lo,edge_hi,count,conf,acc
std::string bins_csv(const ReliabilityBins& bins);
// Square matrix with header h0..h{M-1}, one row per hypothesis.
std::string matrix_csv(const DisagreementMatrix& m);
// predictions.csv: index,label,argmax_0,maxprob_0,...
std::string predictions_csv(const std::vector<ProbBatch>& ps, const Labels* y);

}  // namespace hdmi
