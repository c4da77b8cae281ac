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

#include "hdmi/objectives.hpp"

#include <cmath>
#include <numeric>

#include "hdmi/errors.hpp"

namespace hdmi {
namespace {

void require_nonempty(const ProbBatch& p, const char* what) {
  if (p.rows() == 0 || p.cols() == 0) throw DomainError(std::string(what) + " of an empty batch");
}

void prepare(Matrix* grad, const ProbBatch& like) {
  if (grad != nullptr && grad->size() == 0) *grad = Matrix::Zero(like.rows(), like.cols());
  if (grad != nullptr && (grad->rows() != like.rows() || grad->cols() != like.cols())) {
    throw ShapeError("gradient buffer shape does not match probabilities");
  }
}

void check_batches(const std::vector<ProbBatch>& ps) {
  if (ps.empty()) throw ShapeError("no hypotheses");
  for (const auto& p : ps) {
    if (p.rows() != ps.front().rows() || p.cols() != ps.front().cols()) {
      throw ShapeError("hypothesis batches differ in shape");
    }
  }
}

void prepare_all(std::vector<Matrix>* grads, const std::vector<ProbBatch>& ps) {
  if (grads == nullptr) return;
  if (grads->empty()) grads->resize(ps.size());
  if (grads->size() != ps.size()) throw ShapeError("one gradient buffer per hypothesis required");
  for (std::size_t m = 0; m < ps.size(); ++m) prepare(&(*grads)[m], ps[m]);
}

Matrix* grad_at(std::vector<Matrix>* grads, std::size_t m) { return grads != nullptr ? &(*grads)[m] : nullptr; }

// -sum_k q_k ln(q_k + eps) and its derivative -ln(q + eps) - q / (q + eps).
double entropy_of(const RowVector& q) {
  double h = 0.0;
  for (Eigen::Index k = 0; k < q.size(); ++k) h -= q(k) * std::log(q(k) + kLogEps);
  return h;
}

double entropy_derivative(double q) { return -std::log(q + kLogEps) - q / (q + kLogEps); }

}  // namespace

std::string_view to_string(DivergenceKind k) { return k == DivergenceKind::kKl ? "kl" : "cross_entropy"; }

DivergenceKind divergence_from_string(std::string_view s) {
  if (s == "kl") return DivergenceKind::kKl;
  if (s == "cross_entropy" || s == "ce") return DivergenceKind::kCrossEntropy;
  throw ConfigError("unknown divergence '" + std::string(s) + "' (expected cross_entropy or kl)");
}

std::string_view to_string(HdReduction r) { return r == HdReduction::kSum ? "sum" : "mean"; }

HdReduction reduction_from_string(std::string_view s) {
  if (s == "mean") return HdReduction::kMean;
  if (s == "sum") return HdReduction::kSum;
  throw ConfigError("unknown HD reduction '" + std::string(s) + "' (expected mean or sum)");
}

double LossBreakdown::mean_mi() const {
  if (conditional_entropy.empty()) return 0.0;
  const double h_cond = std::accumulate(conditional_entropy.begin(), conditional_entropy.end(), 0.0) /
                        static_cast<double>(conditional_entropy.size());
  return marginal_entropy - h_cond;
}

nlohmann::json LossBreakdown::to_json() const {
  return {{"total", total}, {"marginal_entropy", marginal_entropy}, {"conditional_entropy", conditional_entropy},
          {"hd", hd},       {"reg", reg},                           {"lambda", lambda}};
}

double conditional_entropy(const ProbBatch& p, Matrix* grad, double scale) {
  require_nonempty(p, "conditional entropy");
  prepare(grad, p);
  const double inv_n = 1.0 / static_cast<double>(p.rows());
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index k = 0; k < p.cols(); ++k) {
      h -= p(i, k) * std::log(p(i, k) + kLogEps);
      if (grad != nullptr) (*grad)(i, k) += scale * inv_n * entropy_derivative(p(i, k));
    }
  }
  return h * inv_n;
}

double marginal_entropy(const ProbBatch& p, Matrix* grad, double scale) {
  require_nonempty(p, "marginal entropy");
  prepare(grad, p);
  const double inv_n = 1.0 / static_cast<double>(p.rows());
  const RowVector q = p.colwise().sum() * inv_n;
  if (grad != nullptr) {
    RowVector d(q.size());
    for (Eigen::Index k = 0; k < q.size(); ++k) d(k) = scale * inv_n * entropy_derivative(q(k));
    grad->rowwise() += d;
  }
  return entropy_of(q);
}

double mutual_information(const ProbBatch& p, Matrix* grad, double scale) {
  const double h_marg = marginal_entropy(p, grad, scale);
  const double h_cond = conditional_entropy(p, grad, -scale);
  return h_marg - h_cond;
}

double divergence(const ProbBatch& p, const ProbBatch& q, DivergenceKind kind, Matrix* grad_p, Matrix* grad_q,
                  double scale) {
  require_nonempty(p, "divergence");
  if (p.rows() != q.rows() || p.cols() != q.cols()) throw ShapeError("divergence arguments differ in shape");
  prepare(grad_p, p);
  prepare(grad_q, q);
  const double inv_n = 1.0 / static_cast<double>(p.rows());
  const bool kl = kind == DivergenceKind::kKl;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index k = 0; k < p.cols(); ++k) {
      const double pk = p(i, k);
      const double log_q = std::log(q(i, k) + kLogEps);
      if (kl) {
        const double log_p = std::log(pk + kLogEps);
        sum += pk * (log_p - log_q);
        if (grad_p != nullptr) (*grad_p)(i, k) += scale * inv_n * (log_p - log_q + pk / (pk + kLogEps));
      } else {
        sum -= pk * log_q;
        if (grad_p != nullptr) (*grad_p)(i, k) -= scale * inv_n * log_q;
      }
      if (grad_q != nullptr) (*grad_q)(i, k) -= scale * inv_n * pk / (q(i, k) + kLogEps);
    }
  }
  return sum * inv_n;
}

double hypothesis_disparity(const std::vector<ProbBatch>& ps, int anchor, DivergenceKind kind,
                            HdReduction reduction, std::vector<Matrix>* grads, double scale,
                            bool stop_grad_anchor) {
  check_batches(ps);
  const int m_count = static_cast<int>(ps.size());
  if (anchor < 0 || anchor >= m_count) {
    throw ConfigError("anchor index " + std::to_string(anchor) + " out of range [0, " + std::to_string(m_count) + ")");
  }
  if (m_count == 1) return 0.0;
  prepare_all(grads, ps);
  const double pair_weight = reduction == HdReduction::kMean ? 1.0 / static_cast<double>(m_count - 1) : 1.0;
  Matrix* g_anchor = stop_grad_anchor ? nullptr : grad_at(grads, anchor);
  double total = 0.0;
  for (int j = 0; j < m_count; ++j) {
    if (j == anchor) continue;
    total += divergence(ps[anchor], ps[j], kind, g_anchor, grad_at(grads, j), scale * pair_weight);
  }
  return total * pair_weight;
}

LossBreakdown mi_ensemble_loss(const std::vector<ProbBatch>& ps, std::vector<Matrix>* grads) {
  check_batches(ps);
  prepare_all(grads, ps);
  const double inv_m = 1.0 / static_cast<double>(ps.size());
  LossBreakdown b;
  double marg = 0.0;
  double neg_mi = 0.0;
  for (std::size_t m = 0; m < ps.size(); ++m) {
    Matrix* g = grad_at(grads, m);
    const double h_marg = marginal_entropy(ps[m], g, -inv_m);
    const double h_cond = conditional_entropy(ps[m], g, inv_m);
    marg += h_marg;
    neg_mi += h_cond - h_marg;
    b.conditional_entropy.push_back(h_cond);
  }
  b.marginal_entropy = marg * inv_m;
  b.total = neg_mi * inv_m;
  return b;
}

LossBreakdown hdmi_loss(const std::vector<ProbBatch>& ps, int anchor, double lambda, DivergenceKind kind,
                        HdReduction reduction, std::vector<Matrix>* grads, bool stop_grad_anchor) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  LossBreakdown b = mi_ensemble_loss(ps, grads);
  const bool with_grad = grads != nullptr && lambda != 0.0;
  b.hd = hypothesis_disparity(ps, anchor, kind, reduction, with_grad ? grads : nullptr, lambda, stop_grad_anchor);
  b.lambda = lambda;
  if (lambda != 0.0) b.total += lambda * b.hd;
  return b;
}

double ce_kl_identity_residual(const std::vector<ProbBatch>& ps, int anchor, double lambda) {
  const auto m_count = static_cast<double>(ps.size());
  const LossBreakdown ce = hdmi_loss(ps, anchor, lambda, DivergenceKind::kCrossEntropy, HdReduction::kSum);
  const LossBreakdown kl = hdmi_loss(ps, anchor, lambda, DivergenceKind::kKl, HdReduction::kSum);
  const double h_anchor = conditional_entropy(ps.at(static_cast<std::size_t>(anchor)));
  return std::abs(ce.total - kl.total - lambda * (m_count - 1.0) * h_anchor);
}

LossBreakdown conditional_entropy_loss(const std::vector<ProbBatch>& ps, double lambda, int anchor,
                                       DivergenceKind kind, HdReduction reduction, bool hd_only,
                                       std::vector<Matrix>* grads) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  check_batches(ps);
  prepare_all(grads, ps);
  const double inv_m = 1.0 / static_cast<double>(ps.size());
  LossBreakdown b;
  b.lambda = hd_only ? 1.0 : lambda;
  double h_sum = 0.0;
  double marg = 0.0;
  for (std::size_t m = 0; m < ps.size(); ++m) {
    const double h = conditional_entropy(ps[m], hd_only ? nullptr : grad_at(grads, m), inv_m);
    b.conditional_entropy.push_back(h);
    h_sum += h;
    marg += marginal_entropy(ps[m]);
  }
  b.marginal_entropy = marg * inv_m;
  const double weight = hd_only ? 1.0 : lambda;
  const bool with_grad = grads != nullptr && weight != 0.0;
  b.hd = hypothesis_disparity(ps, anchor, kind, reduction, with_grad ? grads : nullptr, weight);
  if (hd_only) {
    b.total = b.hd;
  } else {
    b.total = h_sum * inv_m;
    if (lambda != 0.0) b.total += lambda * b.hd;
  }
  return b;
}

double l2_regularizer(ParamStore& store, const SourceSnapshot* snapshot, L2Mode mode, bool accumulate,
                      double scale) {
  if (mode == L2Mode::kL2Source && snapshot == nullptr) {
    throw ConfigError("L2-to-source regularization requires a source snapshot");
  }
  double sum = 0.0;
  for (auto& e : store.entries()) {
    const std::vector<double>* ref = nullptr;
    if (mode == L2Mode::kL2Source) {
      ref = snapshot->find(e.name);
      if (ref == nullptr || ref->size() != e.values.size()) {
        throw ConfigError("source snapshot has no matching parameter '" + e.name + "'");
      }
    }
    for (std::size_t i = 0; i < e.values.size(); ++i) {
      const double d = ref != nullptr ? e.values[i] - (*ref)[i] : e.values[i];
      sum += d * d;
      if (accumulate) e.grads[i] += scale * 2.0 * d;
    }
  }
  return sum;
}

double l2_regularizer(HypothesisSet& set, const SourceSnapshot* snapshot, L2Mode mode, bool accumulate,
                      double scale) {
  double sum = 0.0;
  for (auto& n : set.extractors()) sum += l2_regularizer(n.params(), snapshot, mode, accumulate, scale);
  if (!set.frozen_classifiers()) {
    for (auto& n : set.classifiers()) sum += l2_regularizer(n.params(), snapshot, mode, accumulate, scale);
  }
  return sum;
}

double source_ce_loss(const std::vector<ProbBatch>& ps, const Labels& labels, std::vector<Matrix>* grads) {
  check_batches(ps);
  require_nonempty(ps.front(), "source cross entropy");
  const Eigen::Index n = ps.front().rows();
  const Eigen::Index k_count = ps.front().cols();
  if (static_cast<Eigen::Index>(labels.size()) != n) throw ShapeError("label count does not match batch size");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k_count) {
      throw DomainError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) + " outside [0, " +
                        std::to_string(k_count) + ")");
    }
  }
  prepare_all(grads, ps);
  const double w = 1.0 / (static_cast<double>(ps.size()) * static_cast<double>(n));
  double sum = 0.0;
  for (std::size_t m = 0; m < ps.size(); ++m) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double pk = ps[m](i, labels[i]);
      sum -= std::log(pk + kLogEps);
      if (grads != nullptr) (*grads)[m](i, labels[i]) -= w / (pk + kLogEps);
    }
  }
  return sum * w;
}

}  // namespace hdmi
