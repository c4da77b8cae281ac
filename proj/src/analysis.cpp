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

#include "hdmi/analysis.hpp"

#include <cmath>
#include <numeric>

#include "hdmi/errors.hpp"
#include "hdmi/hypotheses.hpp"
#include "hdmi/textio.hpp"

namespace hdmi {
namespace {

void check_labels(const ProbBatch& p, const Labels& y) {
  if (static_cast<Eigen::Index>(y.size()) != p.rows()) throw ShapeError("label count does not match batch size");
  for (int label : y) {
    if (label < 0 || label >= p.cols()) throw DomainError("label " + std::to_string(label) + " out of range");
  }
}

void check_members(const std::vector<ProbBatch>& ps, std::size_t min_count) {
  if (ps.size() < min_count) {
    throw ConfigError("need at least " + std::to_string(min_count) + " hypotheses, got " + std::to_string(ps.size()));
  }
  for (const auto& p : ps) {
    if (p.rows() != ps.front().rows() || p.cols() != ps.front().cols()) {
      throw ShapeError("hypothesis batches differ in shape");
    }
  }
}

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(m.row(i).data(), m.row(i).data() + m.cols());
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

int argmax_row(const ProbBatch& p, Eigen::Index row) {
  int best = 0;
  for (Eigen::Index k = 1; k < p.cols(); ++k) {
    if (p(row, k) > p(row, best)) best = static_cast<int>(k);
  }
  return best;
}

std::vector<int> argmax(const ProbBatch& p) {
  std::vector<int> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) out[i] = argmax_row(p, i);
  return out;
}

double accuracy(const ProbBatch& p, const Labels& y) {
  check_labels(p, y);
  if (y.empty()) throw DomainError("accuracy of an empty batch");
  long hits = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) hits += argmax_row(p, i) == y[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

std::vector<double> per_class_accuracy(const ProbBatch& p, const Labels& y, int num_classes) {
  check_labels(p, y);
  std::vector<long> total(num_classes, 0);
  std::vector<long> hits(num_classes, 0);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    ++total[y[i]];
    if (argmax_row(p, i) == y[i]) ++hits[y[i]];
  }
  std::vector<double> out(num_classes);
  for (int k = 0; k < num_classes; ++k) {
    if (total[k] == 0) throw DomainError("class " + std::to_string(k) + " has no samples; per-class accuracy undefined");
    out[k] = static_cast<double>(hits[k]) / static_cast<double>(total[k]);
  }
  return out;
}

double brier(const ProbBatch& p, const Labels& y) {
  check_labels(p, y);
  if (y.empty()) throw DomainError("Brier score of an empty batch");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index k = 0; k < p.cols(); ++k) {
      const double d = p(i, k) - (y[i] == k ? 1.0 : 0.0);
      sum += d * d;
    }
  }
  return sum / static_cast<double>(y.size());
}

double brier_one_vs_rest(const ProbBatch& p, const Labels& y, int positive_class) {
  check_labels(p, y);
  if (y.empty()) throw DomainError("Brier score of an empty batch");
  if (positive_class < 0 || positive_class >= p.cols()) throw DomainError("positive class out of range");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double d = p(i, positive_class) - (y[i] == positive_class ? 1.0 : 0.0);
    sum += d * d;
  }
  return sum / static_cast<double>(y.size());
}

nlohmann::json ReliabilityBins::to_json() const {
  return {{"edges", edges}, {"count", count}, {"mean_confidence", mean_confidence}, {"accuracy", accuracy}};
}

EceResult ece(const ProbBatch& p, const Labels& y, int num_bins) {
  if (num_bins < 1) throw ConfigError("ECE needs at least one bin");
  check_labels(p, y);
  EceResult r;
  auto& b = r.bins;
  b.edges.resize(num_bins + 1);
  for (int i = 0; i <= num_bins; ++i) b.edges[i] = static_cast<double>(i) / static_cast<double>(num_bins);
  b.count.assign(num_bins, 0);
  b.mean_confidence.assign(num_bins, 0.0);
  b.accuracy.assign(num_bins, 0.0);
  std::vector<double> hits(num_bins, 0.0);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const int pred = argmax_row(p, i);
    const double conf = p(i, pred);
    int bin = 0;
    while (bin < num_bins - 1 && conf > b.edges[bin + 1]) ++bin;
    ++b.count[bin];
    b.mean_confidence[bin] += conf;
    hits[bin] += pred == y[i] ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(p.rows());
  for (int k = 0; k < num_bins; ++k) {
    if (b.count[k] == 0) continue;
    const double c = static_cast<double>(b.count[k]);
    b.mean_confidence[k] /= c;
    b.accuracy[k] = hits[k] / c;
    r.ece += (c / n) * std::abs(b.accuracy[k] - b.mean_confidence[k]);
  }
  return r;
}

double DisagreementMatrix::off_diagonal_mean() const {
  const Eigen::Index m = values.rows();
  if (m < 2) return 0.0;
  return (values.sum() - values.trace()) / static_cast<double>(m * (m - 1));
}

nlohmann::json DisagreementMatrix::to_json() const {
  return {{"kind", kind == DisagreementKind::kKl ? "kl" : "rate"}, {"values", matrix_json(values)}};
}

DisagreementResult disagreement_rates(const std::vector<ProbBatch>& ps, const Labels* y) {
  check_members(ps, 1);
  const auto m_count = static_cast<Eigen::Index>(ps.size());
  const Eigen::Index n = ps.front().rows();
  if (n == 0) throw DomainError("disagreement of an empty batch");
  std::vector<std::vector<int>> preds;
  for (const auto& p : ps) preds.push_back(argmax(p));
  DisagreementResult r;
  r.matrix.kind = DisagreementKind::kRate;
  r.matrix.values = Matrix::Zero(m_count, m_count);
  for (Eigen::Index a = 0; a < m_count; ++a) {
    for (Eigen::Index b = a + 1; b < m_count; ++b) {
      long diff = 0;
      for (Eigen::Index i = 0; i < n; ++i) diff += preds[a][i] != preds[b][i] ? 1 : 0;
      const double rate = static_cast<double>(diff) / static_cast<double>(n);
      r.matrix.values(a, b) = rate;
      r.matrix.values(b, a) = rate;
    }
  }
  if (y != nullptr) {
    check_labels(ps.front(), *y);
    std::vector<double> err(ps.size());
    for (std::size_t m = 0; m < ps.size(); ++m) {
      long wrong = 0;
      for (Eigen::Index i = 0; i < n; ++i) wrong += preds[m][i] != (*y)[i] ? 1 : 0;
      err[m] = static_cast<double>(wrong) / static_cast<double>(n);
    }
    r.error_rates = std::move(err);
  }
  return r;
}

DisagreementMatrix kl_matrix(const std::vector<ProbBatch>& ps) {
  check_members(ps, 1);
  const auto m_count = static_cast<Eigen::Index>(ps.size());
  const Eigen::Index n = ps.front().rows();
  if (n == 0) throw DomainError("KL matrix of an empty batch");
  DisagreementMatrix out;
  out.kind = DisagreementKind::kKl;
  out.values = Matrix::Zero(m_count, m_count);
  for (Eigen::Index row = 0; row < m_count; ++row) {
    for (Eigen::Index col = 0; col < m_count; ++col) {
      if (row == col) continue;
      const ProbBatch& p = ps[col];
      const ProbBatch& q = ps[row];
      double sum = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = 0; k < p.cols(); ++k) {
          sum += p(i, k) * (std::log(p(i, k) + kLogEps) - std::log(q(i, k) + kLogEps));
        }
      }
      out.values(row, col) = sum / static_cast<double>(n);
    }
  }
  return out;
}

nlohmann::json ErrorProfile::to_json() const {
  nlohmann::json j;
  j["num_hypotheses"] = num_hypotheses;
  j["pattern_counts"] = pattern_counts;
  j["new_errors"] = new_errors ? nlohmann::json(*new_errors) : nlohmann::json(nullptr);
  return j;
}

ErrorProfile hypothesis_error_profile(const std::vector<ProbBatch>& ps, const Labels& y,
                                      const ErrorProfile* reference) {
  check_members(ps, 1);
  check_labels(ps.front(), y);
  ErrorProfile prof;
  prof.num_hypotheses = static_cast<int>(ps.size());
  const Eigen::Index n = ps.front().rows();
  prof.correct.assign(static_cast<std::size_t>(n), std::vector<bool>(ps.size(), false));
  for (std::size_t m = 0; m < ps.size(); ++m) {
    for (Eigen::Index i = 0; i < n; ++i) prof.correct[i][m] = argmax_row(ps[m], i) == y[i];
  }
  for (const auto& row : prof.correct) {
    std::string pattern;
    for (bool c : row) pattern += c ? '1' : '0';
    ++prof.pattern_counts[pattern];
  }
  if (reference != nullptr) {
    if (reference->correct.size() != prof.correct.size() || reference->num_hypotheses != prof.num_hypotheses) {
      throw ShapeError("reference error profile has a different shape");
    }
    long fresh = 0;
    for (std::size_t i = 0; i < prof.correct.size(); ++i) {
      for (std::size_t m = 0; m < ps.size(); ++m) {
        if (reference->correct[i][m] && !prof.correct[i][m]) ++fresh;
      }
    }
    prof.new_errors = fresh;
  }
  return prof;
}

nlohmann::json AnalysisReport::to_json() const {
  nlohmann::json j;
  j["num_hypotheses"] = num_hypotheses;
  j["num_classes"] = num_classes;
  j["anchor"] = anchor;
  j["headline_predictor"] = headline == Predictor::kAnchor ? "anchor" : "ensemble";
  j["accuracy"] = accuracy;
  j["accuracy_anchor"] = accuracy_anchor;
  j["accuracy_ensemble"] = accuracy_ensemble;
  j["per_class_accuracy"] = per_class_accuracy;
  j["per_class_average"] = per_class_average;
  j["brier"] = brier;
  j["ece"] = ece;
  j["reliability_bins"] = bins.to_json();
  j["disagreement"] = disagreement.to_json();
  j["kl_matrix"] = kl.to_json();
  j["mean_disagreement"] = mean_disagreement;
  j["disagreement_vs_truth"] = disagreement_vs_truth;
  j["anchor_ensemble_agreement"] = anchor_ensemble_agreement;
  j["error_profile"] = error_profile.to_json();
  j["runlog"] = runlog;
  return j;
}

AnalysisReport analyze(const std::vector<ProbBatch>& ps, const Labels& y, int anchor, Predictor headline,
                       int num_bins, const ErrorProfile* reference) {
  check_members(ps, 1);
  if (anchor < 0 || anchor >= static_cast<int>(ps.size())) throw ConfigError("anchor index out of range");
  AnalysisReport r;
  r.num_hypotheses = static_cast<int>(ps.size());
  r.num_classes = static_cast<int>(ps.front().cols());
  r.anchor = anchor;
  r.headline = headline;
  const ProbBatch ens = ensemble_mean(ps);
  const ProbBatch& anc = ps[anchor];
  r.accuracy_anchor = accuracy(anc, y);
  r.accuracy_ensemble = accuracy(ens, y);
  const ProbBatch& head = headline == Predictor::kAnchor ? anc : ens;
  r.accuracy = headline == Predictor::kAnchor ? r.accuracy_anchor : r.accuracy_ensemble;
  r.per_class_accuracy = per_class_accuracy(head, y, r.num_classes);
  r.per_class_average = std::accumulate(r.per_class_accuracy.begin(), r.per_class_accuracy.end(), 0.0) /
                        static_cast<double>(r.num_classes);
  r.brier = brier(head, y);
  const EceResult e = ece(head, y, num_bins);
  r.ece = e.ece;
  r.bins = e.bins;
  DisagreementResult d = disagreement_rates(ps, &y);
  r.disagreement = d.matrix;
  r.mean_disagreement = d.matrix.off_diagonal_mean();
  r.disagreement_vs_truth = *d.error_rates;
  r.kl = kl_matrix(ps);
  const auto a_pred = argmax(anc);
  const auto e_pred = argmax(ens);
  long agree = 0;
  for (std::size_t i = 0; i < a_pred.size(); ++i) agree += a_pred[i] == e_pred[i] ? 1 : 0;
  r.anchor_ensemble_agreement = static_cast<double>(agree) / static_cast<double>(a_pred.size());
  r.error_profile = hypothesis_error_profile(ps, y, reference);
  return r;
}

std::string bins_csv(const ReliabilityBins& bins) {
  std::string out = "edge_lo,edge_hi,count,conf,acc\n";
  for (std::size_t b = 0; b < bins.count.size(); ++b) {
    out += format_real(bins.edges[b]) + "," + format_real(bins.edges[b + 1]) + "," + std::to_string(bins.count[b]) +
           "," + format_real(bins.mean_confidence[b]) + "," + format_real(bins.accuracy[b]) + "\n";
  }
  return out;
}

std::string matrix_csv(const DisagreementMatrix& m) {
  std::string out;
  for (Eigen::Index c = 0; c < m.values.cols(); ++c) out += (c > 0 ? ",h" : "h") + std::to_string(c);
  out += "\n";
  for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.values.cols(); ++c) {
      if (c > 0) out += ",";
      out += format_real(m.values(r, c));
    }
    out += "\n";
  }
  return out;
}

std::string predictions_csv(const std::vector<ProbBatch>& ps, const Labels* y) {
  check_members(ps, 1);
  std::string out = "index";
  if (y != nullptr) out += ",label";
  for (std::size_t m = 0; m < ps.size(); ++m) {
    out += ",argmax_" + std::to_string(m) + ",maxprob_" + std::to_string(m);
  }
  out += "\n";
  for (Eigen::Index i = 0; i < ps.front().rows(); ++i) {
    out += std::to_string(i);
    if (y != nullptr) out += "," + std::to_string((*y)[i]);
    for (const auto& p : ps) {
      const int k = argmax_row(p, i);
      out += "," + std::to_string(k) + "," + format_real(p(i, k));
    }
    out += "\n";
  }
  return out;
}

}  // namespace hdmi
