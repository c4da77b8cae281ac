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

// Scalar objectives over predicted label probabilities and their gradients
// with respect to those probabilities. Entropies are in nats; every log takes
// an argument clamped by kLogEps.
//
// Gradient convention: functions taking `Matrix* grad` (or a vector of them)
// accumulate `scale * d(value)/d(p)` into it when non-null. The caller sizes
// the matrices; a default-constructed matrix is resized to zeros first.

#include <optional>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hdmi/diffnet.hpp"
#include "hdmi/hypotheses.hpp"
#include "hdmi/types.hpp"

namespace hdmi {

enum class DivergenceKind { kCrossEntropy, kKl };
enum class HdReduction { kMean, kSum };
enum class L2Mode { kL2, kL2Source };

std::string_view to_string(DivergenceKind k);
DivergenceKind divergence_from_string(std::string_view s);
std::string_view to_string(HdReduction r);
HdReduction reduction_from_string(std::string_view s);

struct LossBreakdown {
  double total = 0.0;
  double marginal_entropy = 0.0;            // mean over hypotheses, nats
  std::vector<double> conditional_entropy;  // per hypothesis, nats
  double hd = 0.0;
  double reg = 0.0;
  double lambda = 0.0;

  // Mean mutual information over hypotheses.
  double mean_mi() const;
  nlohmann::json to_json() const;
};

double conditional_entropy(const ProbBatch& p, Matrix* grad = nullptr, double scale = 1.0);
double marginal_entropy(const ProbBatch& p, Matrix* grad = nullptr, double scale = 1.0);
double mutual_information(const ProbBatch& p, Matrix* grad = nullptr, double scale = 1.0);

// Batch mean of d(p_i, q_i). Cross entropy: -sum p ln q. KL: sum p (ln p - ln q).
double divergence(const ProbBatch& p, const ProbBatch& q, DivergenceKind kind, Matrix* grad_p = nullptr,
                  Matrix* grad_q = nullptr, double scale = 1.0);

// d(h_anchor, h_j) averaged over the batch, reduced over the M-1 pairs j !=
// anchor. With `stop_grad_anchor` no gradient reaches the anchor batch.
double hypothesis_disparity(const std::vector<ProbBatch>& ps, int anchor, DivergenceKind kind,
                            HdReduction reduction, std::vector<Matrix>* grads = nullptr, double scale = 1.0,
                            bool stop_grad_anchor = false);

// (1/M) sum_m -MI(p_m).
LossBreakdown mi_ensemble_loss(const std::vector<ProbBatch>& ps, std::vector<Matrix>* grads = nullptr);

// mi_ensemble_loss + lambda * HD. With lambda == 0 the result (and gradient)
// is bitwise that of mi_ensemble_loss.
LossBreakdown hdmi_loss(const std::vector<ProbBatch>& ps, int anchor, double lambda, DivergenceKind kind,
                        HdReduction reduction, std::vector<Matrix>* grads = nullptr, bool stop_grad_anchor = false);

// |L_CE - L_KL - lambda (M-1) H(Y_anchor | X)| with HD summed over pairs.
double ce_kl_identity_residual(const std::vector<ProbBatch>& ps, int anchor, double lambda);

// (1/M) sum_m H(Y_m | X) + lambda * HD, the MI objective without its
// marginal-entropy term. `hd_only` drops the entropy term instead.
LossBreakdown conditional_entropy_loss(const std::vector<ProbBatch>& ps, double lambda, int anchor,
                                       DivergenceKind kind, HdReduction reduction, bool hd_only = false,
                                       std::vector<Matrix>* grads = nullptr);

// Sum of squares (kL2) or squared deviation from the snapshot (kL2Source)
// over `store`. Accumulates scale * gradient into the store when
// `accumulate` is set.
double l2_regularizer(ParamStore& store, const SourceSnapshot* snapshot, L2Mode mode, bool accumulate = false,
                      double scale = 1.0);

// Same, summed over the trainable parameters of a set (extractors, plus
// classifiers when not frozen).
double l2_regularizer(HypothesisSet& set, const SourceSnapshot* snapshot, L2Mode mode, bool accumulate = false,
                      double scale = 1.0);

// Mean over hypotheses and samples of -ln(p[label] + eps).
double source_ce_loss(const std::vector<ProbBatch>& ps, const Labels& labels, std::vector<Matrix>* grads = nullptr);

}  // namespace hdmi
