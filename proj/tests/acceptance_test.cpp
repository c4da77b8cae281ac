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

// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hdmi/adapt.hpp"
#include "hdmi/commands.hpp"
#include "hdmi/config.hpp"
#include "hdmi/textio.hpp"
#include "support.hpp"

namespace {

using namespace hdmi;
namespace t = hdmi::testing;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  failures += !o.pass;
  std::printf("%s [%2d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
  std::fflush(stdout);
}

// --- 1 ---------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto start = Clock::now();
  std::mt19937_64 rng(2024);
  struct Case {
    Objective objective;
    DivergenceKind divergence;
  };
  const std::vector<Case> cases = {
      {Objective::kHdmi, DivergenceKind::kCrossEntropy}, {Objective::kHdmi, DivergenceKind::kKl},
      {Objective::kMiEnsemble, DivergenceKind::kCrossEntropy}, {Objective::kMiSingle, DivergenceKind::kCrossEntropy},
      {Objective::kHdOnly, DivergenceKind::kCrossEntropy},     {Objective::kCondEntropyHd, DivergenceKind::kCrossEntropy},
      {Objective::kMiL2, DivergenceKind::kCrossEntropy},       {Objective::kMiL2Source, DivergenceKind::kCrossEntropy},
  };
  double worst = 0.0;
  std::size_t max_params = 0, checked = 0;
  for (int net = 0; net < 20; ++net) {
    const int d = 2 + net % 2, k = 2 + (net / 2) % 2, m = 2 + (net / 4) % 2;
    const Variant variant = net % 5 == 4 ? Variant::kMC : Variant::kIC;
    auto set = HypothesisSet::build(t::tiny_arch(d, k, 0.3), m, variant, 1000 + static_cast<std::uint64_t>(net));
    t::randomize(set, rng);
    set.set_frozen_classifiers(false);
    auto ref = HypothesisSet::build(t::tiny_arch(d, k, 0.3), m, variant, 5000 + static_cast<std::uint64_t>(net));
    t::randomize(ref, rng);
    const SourceSnapshot snap(ref);
    max_params = std::max(max_params, t::count_params(set));
    for (int b = 0; b < 5; ++b) {
      const Matrix batch = t::random_matrix(rng, 4 + b, d);
      std::uniform_real_distribution<double> lam(0.1, 1.0);
      for (const auto& c : cases) {
        AdaptConfig cfg;
        cfg.objective = c.objective;
        cfg.divergence = c.divergence;
        cfg.lambda = lam(rng);
        cfg.reduction = b % 2 ? HdReduction::kSum : HdReduction::kMean;
        const int anchor = static_cast<int>(rng() % static_cast<unsigned>(m));
        const auto r = t::check_objective_gradient(set, batch, cfg, anchor, &snap, rng());
        worst = std::max(worst, r.max_rel_err);
        checked += r.checked;
      }
    }
  }
  const double secs = seconds_since(start);
  const bool pass = worst < 1e-5 && max_params <= 200 && secs < 30.0;
  return {pass, "max rel err " + fmt("%.3g", worst) + " over " + std::to_string(checked) + " partials, <= " +
                    std::to_string(max_params) + " params/net, " + fmt("%.2f s", secs)};
}

// --- 2 ---------------------------------------------------------------------

Outcome ce_kl_identity() {
  const auto start = Clock::now();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lam(0.0, 2.0), temp(0.3, 4.0);
  double worst = 0.0;
  for (int c = 0; c < 1000; ++c) {
    const int m = 2 + c % 3, k = 2 + c % 5, n = 1 + static_cast<int>(rng() % 32);
    std::vector<ProbBatch> ps;
    const double tmp = temp(rng);
    for (int j = 0; j < m; ++j) ps.push_back(t::random_probs(rng, n, k, tmp));
    const int anchor = static_cast<int>(rng() % static_cast<unsigned>(m));
    const double lambda = lam(rng);
    const double ce = hdmi_loss(ps, anchor, lambda, DivergenceKind::kCrossEntropy, HdReduction::kSum).total;
    const double kl = hdmi_loss(ps, anchor, lambda, DivergenceKind::kKl, HdReduction::kSum).total;
    const double h = t::oracle_conditional_entropy(ps[anchor]);
    worst = std::max(worst, std::abs(ce - kl - lambda * (m - 1) * h));
  }
  const double secs = seconds_since(start);
  return {worst < 1e-9 && secs < 5.0, "max residual " + fmt("%.3g", worst) + ", " + fmt("%.2f s", secs)};
}

// --- 3 ---------------------------------------------------------------------

Outcome mi_properties() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> temp(0.05, 5.0);
  double below = 0.0, above = 0.0;
  for (int c = 0; c < 10000; ++c) {
    const int k = 2 + c % 9, n = 1 + static_cast<int>(rng() % 40);
    const ProbBatch p = t::random_probs(rng, n, k, temp(rng));
    const double mi = mutual_information(p);
    below = std::max(below, -mi);
    above = std::max(above, mi - std::log(static_cast<double>(k)));
  }
  double identical = 0.0, onehot = 0.0;
  for (int c = 0; c < 200; ++c) {
    const int k = 2 + c % 9;
    const ProbBatch row = t::random_probs(rng, 1, k, temp(rng));
    const ProbBatch same = row.replicate(1 + c % 17, 1);
    identical = std::max(identical, std::abs(mutual_information(same)));
    const int reps = 1 + c % 5;
    ProbBatch hot = ProbBatch::Zero(k * reps, k);
    for (int i = 0; i < k * reps; ++i) hot(i, i % k) = 1.0;
    onehot = std::max(onehot, std::abs(mutual_information(hot) - std::log(static_cast<double>(k))));
  }
  const bool pass = below <= 1e-9 && above <= 1e-9 && identical <= 1e-10 && onehot <= 1e-9;
  return {pass, "min MI " + fmt("%.3g", -below) + ", max MI - ln K " + fmt("%.3g", above) + ", identical rows " +
                    fmt("%.3g", identical) + ", one-hot |MI - ln K| " + fmt("%.3g", onehot)};
}

// --- shared desk data -------------------------------------------------------

ResolvedConfig desk_config(int seed, const std::string& objective, std::map<std::string, std::string> extra = {}) {
  extra["seed"] = std::to_string(seed);
  extra["objective"] = objective;
  auto cfg = ResolvedConfig::resolve({}, extra);
  cfg.validate();
  return cfg;
}

std::vector<std::string> trajectory(const HypothesisSet& source, const UnlabeledDataset& target,
                                    const AdaptConfig& cfg) {
  std::vector<std::string> out;
  TargetTransfer tt = to_target(source, cfg.freeze_classifiers, cfg.shared_extractor);
  const Monitor record = [&out](const HypothesisSet& s, int) {
    out.push_back(s.to_json().dump());
    return EvalPoint{};
  };
  adapt_target(std::move(tt.set), target, cfg, &tt.snapshot, record);
  return out;
}

// --- 4 ---------------------------------------------------------------------

Outcome degeneration_lattice() {
  std::string detail;
  bool pass = true;
  for (int m : {2, 1}) {
    const auto cfg = desk_config(1, "hdmi", {{"m", std::to_string(m)}, {"steps", "100"}, {"eval_every", "1"}});
    const GeneratedPair pair = generate(cfg.shift_spec());
    const SourceConfig scfg = cfg.source_config();
    const TrainResult src = train_source(build_source_set(scfg, 2, 2), pair.source, scfg);
    AdaptConfig a = cfg.adapt_config(), b = a;
    if (m == 2) {
      a.lambda = 0.0;
      b.objective = Objective::kMiEnsemble;
    } else {
      a.objective = Objective::kMiEnsemble;
      b.objective = Objective::kMiSingle;
    }
    const auto ta = trajectory(src.set, pair.target, a);
    const auto tb = trajectory(src.set, pair.target, b);
    const bool same = ta.size() == 100 && ta == tb;
    pass = pass && same;
    detail += std::string(detail.empty() ? "" : "; ") +
              (m == 2 ? "hdmi(lambda=0) vs mi_ensemble" : "mi_ensemble(M=1) vs mi_single") + ": " +
              (same ? "100/100 steps bitwise equal" : "trajectories differ");
  }
  return {pass, detail};
}

// --- 5 ---------------------------------------------------------------------

Outcome classifier_freezing() {
  const auto cfg = desk_config(1, "hdmi");
  const GeneratedPair pair = generate(cfg.shift_spec());
  const SourceConfig scfg = cfg.source_config();
  const TrainResult src = train_source(build_source_set(scfg, 2, 2), pair.source, scfg);
  int runs = 0, equal = 0;
  for (const auto& name : objective_names()) {
    if (name == "source_only") continue;
    for (Variant v : {Variant::kIC, Variant::kMC}) {
      HypothesisSet source = src.set;
      if (v == Variant::kMC) {
        SourceConfig mc = scfg;
        mc.variant = Variant::kMC;
        source = train_source(build_source_set(mc, 2, 2), pair.source, mc).set;
      }
      AdaptConfig a = cfg.adapt_config();
      a.objective = objective_from_string(name);
      a.steps = 1000;
      TargetTransfer tt = to_target(source, true, a.shared_extractor);
      const TrainResult r = adapt_target(tt.set, pair.target, a, &tt.snapshot);
      ++runs;
      equal += tt.snapshot.classifiers_equal(r.set) && SourceSnapshot(source).classifiers_equal(r.set);
    }
  }
  return {equal == runs, std::to_string(equal) + "/" + std::to_string(runs) +
                             " 1000-step runs (all objectives, IC and MC) kept classifiers bitwise equal"};
}

// --- 6-10: desk benchmark ---------------------------------------------------

struct DeskRun {
  AnalysisReport report;
  double running_max = 0.0;
};

struct Desk {
  std::map<std::string, std::vector<DeskRun>> runs;
  double seconds = 0.0;

  double mean(const std::string& obj, const std::function<double(const DeskRun&)>& f) const {
    double s = 0.0;
    for (const auto& r : runs.at(obj)) s += f(r);
    return s / static_cast<double>(runs.at(obj).size());
  }
};

const Desk& desk() {
  static const Desk d = [] {
    Desk out;
    const auto start = Clock::now();
    for (int seed = 1; seed <= 5; ++seed) {
      const auto base = desk_config(seed, "hdmi");
      const GeneratedPair pair = generate(base.shift_spec());
      const SourceConfig scfg = base.source_config();
      const TrainResult src = train_source(build_source_set(scfg, 2, 2), pair.source, scfg);
      for (const std::string obj : {"source_only", "mi_ensemble", "hdmi"}) {
        const AdaptConfig acfg = desk_config(seed, obj).adapt_config();
        const PipelineResult r = adapt_and_analyze(src.set, pair.target, pair.target_labels, acfg);
        DeskRun run{r.adapted, r.adapted.accuracy};
        const bool anchor = headline_predictor(acfg.objective) == Predictor::kAnchor;
        for (const auto& rec : r.adapt_log.records) {
          if (rec.eval) run.running_max = std::max(run.running_max, anchor ? rec.eval->acc_anchor : rec.eval->acc_ensemble);
        }
        out.runs[obj].push_back(run);
      }
    }
    out.seconds = seconds_since(start);
    return out;
  }();
  return d;
}

std::string pct(double v) { return fmt("%.2f", 100.0 * v); }

Outcome transfer_ordering() {
  const Desk& d = desk();
  auto acc = [&](const char* o) { return d.mean(o, [](const DeskRun& r) { return r.report.accuracy; }); };
  const double so = acc("source_only"), mi = acc("mi_ensemble"), hd = acc("hdmi");
  const bool pass = hd >= mi && mi >= so && hd - so >= 0.05 && d.seconds < 300.0;
  return {pass, "accuracy source-only " + pct(so) + " / MI ensemble " + pct(mi) + " / HDMI " + pct(hd) + " %, " +
                    fmt("%.1f s", d.seconds)};
}

Outcome anchor_ensemble() {
  double gap = 0.0, agree = 1.0;
  for (const auto& r : desk().runs.at("hdmi")) {
    gap = std::max(gap, std::abs(r.report.accuracy_anchor - r.report.accuracy_ensemble));
    agree = std::min(agree, r.report.anchor_ensemble_agreement);
  }
  return {gap <= 0.005 && agree >= 0.99,
          "worst seed: |acc(anchor) - acc(ensemble)| " + pct(gap) + " points, agreement " + pct(agree) + " %"};
}

Outcome disagreement_reduction() {
  const Desk& d = desk();
  auto dis = [&](const char* o) { return d.mean(o, [](const DeskRun& r) { return r.report.mean_disagreement; }); };
  const double mi = dis("mi_ensemble"), hd = dis("hdmi");
  return {hd < mi && hd < 0.02, "mean disagreement HDMI " + pct(hd) + " % vs MI ensemble " + pct(mi) +
                                    " % (source-only " + pct(dis("source_only")) + " %)"};
}

Outcome calibration_ordering() {
  const Desk& d = desk();
  auto ece_of = [&](const char* o) { return d.mean(o, [](const DeskRun& r) { return r.report.ece; }); };
  auto brier_of = [&](const char* o) { return d.mean(o, [](const DeskRun& r) { return r.report.brier; }); };
  const double eh = ece_of("hdmi"), em = ece_of("mi_ensemble"), bh = brier_of("hdmi"), bm = brier_of("mi_ensemble");
  return {eh <= em && bh <= bm, "ECE HDMI " + fmt("%.4f", eh) + " vs MI " + fmt("%.4f", em) + "; Brier HDMI " +
                                    fmt("%.4f", bh) + " vs MI " + fmt("%.4f", bm)};
}

Outcome stability() {
  double worst = 0.0;
  std::string per_seed;
  for (const auto& r : desk().runs.at("hdmi")) {
    const double drop = r.running_max - r.report.accuracy;
    worst = std::max(worst, drop);
    per_seed += (per_seed.empty() ? "" : ",") + pct(drop);
  }
  return {worst <= 0.015, "final below running max by [" + per_seed + "] points per seed"};
}

// --- 11 --------------------------------------------------------------------

double brute_ece(const ProbBatch& p, const Labels& y) {
  const int bins = 10;
  std::vector<double> conf(bins, 0.0), hit(bins, 0.0), count(bins, 0.0);
  for (int i = 0; i < p.rows(); ++i) {
    int arg = 0;
    for (int k = 1; k < p.cols(); ++k)
      if (p(i, k) > p(i, arg)) arg = k;
    const double c = p(i, arg);
    for (int b = 0; b < bins; ++b) {
      const double lo = b / 10.0, hi = (b + 1) / 10.0;
      if ((c > lo || b == 0) && c <= hi) {
        conf[b] += c;
        hit[b] += arg == y[static_cast<std::size_t>(i)];
        count[b] += 1;
        break;
      }
    }
  }
  double e = 0.0;
  for (int b = 0; b < bins; ++b) {
    if (count[b] > 0) e += count[b] / static_cast<double>(p.rows()) * std::abs(hit[b] / count[b] - conf[b] / count[b]);
  }
  return e;
}

Outcome metric_oracles() {
  std::mt19937_64 rng(99);
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    const int n = 1 + c % 19, k = 2 + c % 4, m = 1 + c % 4;
    const auto ps = t::random_prob_set(rng, m, n, k);
    Labels y(static_cast<std::size_t>(n));
    for (auto& v : y) v = static_cast<int>(rng() % static_cast<unsigned>(k));

    double b = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) b += std::pow(ps[0](i, j) - (y[static_cast<std::size_t>(i)] == j), 2);
    worst = std::max(worst, std::abs(brier(ps[0], y) - b / n));
    worst = std::max(worst, std::abs(ece(ps[0], y).ece - brute_ece(ps[0], y)));

    const auto dr = disagreement_rates(ps).matrix.values;
    const auto kl = kl_matrix(ps).values;
    for (int a = 0; a < m; ++a) {
      for (int bb = 0; bb < m; ++bb) {
        int diff = 0;
        double kab = 0.0;
        for (int i = 0; i < n; ++i) {
          int ia = 0, ib = 0;
          for (int j = 1; j < k; ++j) {
            if (ps[a](i, j) > ps[a](i, ia)) ia = j;
            if (ps[bb](i, j) > ps[bb](i, ib)) ib = j;
          }
          diff += ia != ib;
          for (int j = 0; j < k; ++j) kab += ps[bb](i, j) * (std::log(ps[bb](i, j) + t::kEps) - std::log(ps[a](i, j) + t::kEps));
        }
        worst = std::max(worst, std::abs(dr(a, bb) - static_cast<double>(diff) / n));
        worst = std::max(worst, std::abs(kl(a, bb) - kab / n));
      }
    }
  }
  return {worst <= 1e-12, "brier/ece/disagreement/kl max |diff| " + fmt("%.3g", worst) + " on 100 cases"};
}

// --- 12 --------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool params_equal(const HypothesisSet& a, const HypothesisSet& b) {
  auto same = [](const std::vector<Network>& x, const std::vector<Network>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t n = 0; n < x.size(); ++n) {
      const auto& ex = x[n].params().entries();
      const auto& ey = y[n].params().entries();
      if (ex.size() != ey.size()) return false;
      for (std::size_t e = 0; e < ex.size(); ++e)
        if (ex[e].values != ey[e].values) return false;
    }
    return true;
  };
  return same(a.extractors(), b.extractors()) && same(a.classifiers(), b.classifiers());
}

Outcome determinism_and_round_trips() {
  const fs::path root = fs::temp_directory_path() / "hdmi_lab_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  std::ostringstream sink;
  for (const char* name : {"a", "b"}) {
    const std::string dir = (root / name).string();
    const char* argv[] = {"hdmi_lab", "run", "--dir", dir.c_str()};
    if (run_cli(4, argv, sink, sink) != kExitOk) return {false, "run failed: " + sink.str()};
  }
  const bool same_report = slurp(root / "a" / "report.json") == slurp(root / "b" / "report.json");

  const HypothesisSet ckpt =
      HypothesisSet::from_json(nlohmann::json::parse(slurp(root / "a" / "adapted.ckpt.json")));
  const HypothesisSet again = HypothesisSet::from_json(nlohmann::json::parse(dump_json(ckpt.to_json())));
  const bool ckpt_exact = params_equal(ckpt, again) && dump_json(again.to_json()) == slurp(root / "a" / "adapted.ckpt.json");

  const Dataset src = load_csv(root / "a" / "source.csv", true, 2);
  save_csv(src, root / "copy.csv");
  const Dataset back = load_csv(root / "copy.csv", true, 2);
  bool csv_exact = back.x == src.x && *back.y == *src.y && slurp(root / "copy.csv") == slurp(root / "a" / "source.csv");
  // Every value's text form carries 17 significant digits of precision.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 10000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    csv_exact = csv_exact && std::stod(format_real(v)) == v;
  }
  std::string detail = std::string("report.json ") + (same_report ? "byte-identical" : "differs") + ", checkpoint " +
                       (ckpt_exact ? "exact" : "inexact") + ", CSV " + (csv_exact ? "exact" : "inexact");
  return {same_report && ckpt_exact && csv_exact, detail};
}

}  // namespace

int main() {
  report(1, "gradient correctness", gradient_correctness);
  report(2, "CE-KL identity", ce_kl_identity);
  report(3, "MI properties", mi_properties);
  report(4, "degeneration lattice", degeneration_lattice);
  report(5, "classifier freezing", classifier_freezing);
  report(6, "desk transfer ordering", transfer_ordering);
  report(7, "anchor/ensemble equivalence", anchor_ensemble);
  report(8, "disagreement reduction", disagreement_reduction);
  report(9, "calibration ordering", calibration_ordering);
  report(10, "stability", stability);
  report(11, "metric oracles", metric_oracles);
  report(12, "determinism and round-trips", determinism_and_round_trips);
  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
