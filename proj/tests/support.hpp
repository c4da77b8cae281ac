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

// Helpers shared by the unit and acceptance tests. The oracles here are
// deliberately naive loops that do not call into the library's objectives.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "hdmi/adapt.hpp"
#include "hdmi/hypotheses.hpp"
#include "hdmi/types.hpp"

namespace hdmi::testing {

// Row-stochastic batch: softmax of N(0, temperature^2) logits.
inline ProbBatch random_probs(std::mt19937_64& rng, int n, int k, double temperature = 1.5) {
  std::normal_distribution<double> g(0.0, temperature);
  ProbBatch p(n, k);
  for (int i = 0; i < n; ++i) {
    double z = 0.0;
    for (int j = 0; j < k; ++j) {
      p(i, j) = std::exp(g(rng));
      z += p(i, j);
    }
    for (int j = 0; j < k; ++j) p(i, j) /= z;
  }
  return p;
}

inline std::vector<ProbBatch> random_prob_set(std::mt19937_64& rng, int m, int n, int k) {
  std::vector<ProbBatch> ps;
  for (int i = 0; i < m; ++i) ps.push_back(random_probs(rng, n, k));
  return ps;
}

inline Matrix random_matrix(std::mt19937_64& rng, int rows, int cols, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  Matrix x(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) x(i, j) = g(rng);
  return x;
}

// Overwrites every value (biases included) with N(0, sd^2) draws so that no
// unit sits exactly on a ReLU kink.
inline void randomize(ParamStore& store, std::mt19937_64& rng, double sd = 0.5) {
  std::normal_distribution<double> g(0.0, sd);
  for (auto& e : store.entries())
    for (auto& v : e.values) v = g(rng);
}

inline void randomize(HypothesisSet& set, std::mt19937_64& rng, double sd = 0.5) {
  for (auto& n : set.extractors()) randomize(n.params(), rng, sd);
  for (auto& n : set.classifiers()) randomize(n.params(), rng, sd);
}

// Small architecture (well under 200 parameters for M <= 3).
inline Architecture tiny_arch(int d, int k, double dropout) {
  Architecture a;
  a.extractor = {{d, 6, Activation::kRelu, 0.0}};
  a.classifier = {{6, 4, Activation::kRelu, dropout}, {4, k, Activation::kIdentity, 0.0}};
  return a;
}

inline std::size_t count_params(const HypothesisSet& set) {
  std::size_t n = 0;
  for (const auto& net : set.extractors()) n += net.params().num_values();
  for (const auto& net : set.classifiers()) n += net.params().num_values();
  return n;
}

// --- independent oracles -----------------------------------------------------

constexpr double kEps = 1e-12;

inline double oracle_entropy_row(const ProbBatch& p, int i) {
  double h = 0.0;
  for (int k = 0; k < p.cols(); ++k) h -= p(i, k) * std::log(p(i, k) + kEps);
  return h;
}

inline double oracle_conditional_entropy(const ProbBatch& p) {
  double s = 0.0;
  for (int i = 0; i < p.rows(); ++i) s += oracle_entropy_row(p, i);
  return s / static_cast<double>(p.rows());
}

inline double oracle_marginal_entropy(const ProbBatch& p) {
  double h = 0.0;
  for (int k = 0; k < p.cols(); ++k) {
    double m = 0.0;
    for (int i = 0; i < p.rows(); ++i) m += p(i, k);
    m /= static_cast<double>(p.rows());
    h -= m * std::log(m + kEps);
  }
  return h;
}

inline double oracle_mi(const ProbBatch& p) { return oracle_marginal_entropy(p) - oracle_conditional_entropy(p); }

// Batch-mean cross entropy -sum p ln q, or KL sum p (ln p - ln q).
inline double oracle_divergence(const ProbBatch& p, const ProbBatch& q, bool kl) {
  double s = 0.0;
  for (int i = 0; i < p.rows(); ++i) {
    for (int k = 0; k < p.cols(); ++k) {
      s += kl ? p(i, k) * (std::log(p(i, k) + kEps) - std::log(q(i, k) + kEps)) : -p(i, k) * std::log(q(i, k) + kEps);
    }
  }
  return s / static_cast<double>(p.rows());
}

inline double oracle_hd(const std::vector<ProbBatch>& ps, int anchor, bool kl, bool mean) {
  double s = 0.0;
  int pairs = 0;
  for (int j = 0; j < static_cast<int>(ps.size()); ++j) {
    if (j == anchor) continue;
    s += oracle_divergence(ps[anchor], ps[j], kl);
    ++pairs;
  }
  return (mean && pairs > 0) ? s / pairs : s;
}

// --- finite differences ------------------------------------------------------

// |a - n| / max(|a|, |n|, floor). The floor keeps parameters whose gradient is
// ~0 from turning round-off into a large relative error.
inline double rel_err(double a, double n, double floor = 1e-3) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

// Compares the analytic gradient of objective_step (all parameters, frozen or
// not) with central differences. Dropout masks are reproduced by re-seeding
// the generator for every evaluation.
inline GradCheckResult check_objective_gradient(const HypothesisSet& base, const Matrix& batch, const AdaptConfig& cfg,
                                                int anchor, const SourceSnapshot* snapshot, std::uint64_t rng_seed,
                                                double h = 1e-5) {
  HypothesisSet set = base;
  set.zero_grads();
  {
    std::mt19937_64 rng(rng_seed);
    objective_step(set, batch, cfg, anchor, snapshot, rng, true);
  }
  auto loss_at = [&](HypothesisSet& s) {
    std::mt19937_64 rng(rng_seed);
    return objective_step(s, batch, cfg, anchor, snapshot, rng, false).total;
  };
  GradCheckResult r;
  auto visit = [&](std::vector<Network>& nets) {
    for (auto& net : nets) {
      for (auto& e : net.params().entries()) {
        for (std::size_t i = 0; i < e.values.size(); ++i) {
          const double w = e.values[i];
          e.values[i] = w + h;
          const double fp = loss_at(set);
          e.values[i] = w - h;
          const double fm = loss_at(set);
          e.values[i] = w;
          const double numeric = (fp - fm) / (2.0 * h);
          r.max_rel_err = std::max(r.max_rel_err, rel_err(e.grads[i], numeric));
          ++r.checked;
        }
      }
    }
  };
  visit(set.extractors());
  visit(set.classifiers());
  return r;
}

}  // namespace hdmi::testing
