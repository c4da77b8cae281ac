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

#include "hdmi/adapt.hpp"

#include <chrono>

#include "hdmi/errors.hpp"
#include "hdmi/random.hpp"
#include "hdmi/textio.hpp"

namespace hdmi {
namespace {

// Stream ids for derive_seed; keep stable, they define reproducibility.
constexpr std::uint64_t kStreamInit = 1;
constexpr std::uint64_t kStreamSourceBatches = 2;
constexpr std::uint64_t kStreamSourceDropout = 3;
constexpr std::uint64_t kStreamTargetBatches = 4;
constexpr std::uint64_t kStreamTargetDropout = 5;
constexpr std::uint64_t kStreamAnchor = 6;

struct NamedObjective {
  Objective objective;
  const char* name;
};

constexpr NamedObjective kObjectives[] = {
    {Objective::kSourceOnly, "source_only"},   {Objective::kHdmi, "hdmi"},
    {Objective::kMiEnsemble, "mi_ensemble"},   {Objective::kMiSingle, "mi_single"},
    {Objective::kHdOnly, "hd_only"},           {Objective::kCondEntropyHd, "cond_entropy_hd"},
    {Objective::kMiL2, "mi_l2"},               {Objective::kMiL2Source, "mi_l2_source"},
};

void step_set(HypothesisSet& set, Sgd& opt) {
  for (auto& n : set.extractors()) opt.step(n.params());
  if (set.frozen_classifiers()) {
    for (auto& n : set.classifiers()) n.params().zero_grads();
  } else {
    for (auto& n : set.classifiers()) opt.step(n.params());
  }
}

bool is_eval_step(int step, int total, int every) { return step == total || (every > 0 && step % every == 0); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::string_view to_string(Objective o) {
  for (const auto& e : kObjectives) {
    if (e.objective == o) return e.name;
  }
  return "hdmi";
}

Objective objective_from_string(std::string_view s) {
  for (const auto& e : kObjectives) {
    if (s == e.name) return e.objective;
  }
  std::string known;
  for (const auto& e : kObjectives) known += std::string(known.empty() ? "" : ", ") + e.name;
  throw ConfigError("unknown objective '" + std::string(s) + "' (known: " + known + ")");
}

const std::vector<std::string>& objective_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& e : kObjectives) v.emplace_back(e.name);
    return v;
  }();
  return names;
}

Predictor headline_predictor(Objective o) {
  switch (o) {
    case Objective::kHdmi:
    case Objective::kHdOnly:
    case Objective::kCondEntropyHd:
    case Objective::kMiSingle:
      return Predictor::kAnchor;
    default:
      return Predictor::kEnsemble;
  }
}

void SourceConfig::validate() const {
  if (num_hypotheses < 1) throw ConfigError("m must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (steps < 0) throw ConfigError("source_steps must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("source_lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
}

nlohmann::json SourceConfig::to_json() const {
  return {{"num_hypotheses", num_hypotheses}, {"variant", std::string(to_string(variant))},
          {"dropout_rate", dropout_rate},     {"steps", steps},
          {"batch_size", batch_size},         {"lr", lr},
          {"momentum", momentum},             {"nesterov", nesterov},
          {"weight_decay", weight_decay},     {"seed", seed},
          {"eval_every", eval_every}};
}

void AdaptConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be a finite value >= 0");
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(extractor_lr_multiplier > 0.0)) throw ConfigError("extractor_lr_multiplier must be positive");
  if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
  if (anchor_policy.fixed && *anchor_policy.fixed < 0) throw ConfigError("anchor index must be >= 0");
}

nlohmann::json AdaptConfig::to_json() const {
  nlohmann::json j;
  j["objective"] = std::string(to_string(objective));
  j["lambda"] = lambda;
  j["divergence"] = std::string(to_string(divergence));
  j["reduction"] = std::string(to_string(reduction));
  j["anchor_policy"] = anchor_policy.fixed ? nlohmann::json(*anchor_policy.fixed) : nlohmann::json("seeded_random");
  j["stop_grad_anchor"] = stop_grad_anchor;
  j["steps"] = steps;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["momentum"] = momentum;
  j["nesterov"] = nesterov;
  j["weight_decay"] = weight_decay;
  j["extractor_lr_multiplier"] = extractor_lr_multiplier;
  j["freeze_classifiers"] = freeze_classifiers;
  j["shared_extractor"] = shared_extractor;
  j["train_mode_loss"] = train_mode_loss;
  j["seed"] = seed;
  j["eval_every"] = eval_every;
  return j;
}

std::string RunLog::to_csv() const {
  std::string out = "step,total,mi,hd,acc_anchor,acc_ensemble,disagreement\n";
  for (const auto& r : records) {
    out += std::to_string(r.step) + "," + format_real(r.loss.total) + "," + format_real(r.loss.mean_mi()) + "," +
           format_real(r.loss.hd);
    if (r.eval) {
      out += "," + format_real(r.eval->acc_anchor) + "," + format_real(r.eval->acc_ensemble) + "," +
             format_real(r.eval->disagreement);
    } else {
      out += ",,,";
    }
    out += "\n";
  }
  return out;
}

EvalPoint evaluate(const HypothesisSet& set, const Matrix& x, const Labels& y, int anchor) {
  const auto probs = predict_all(set, x, Mode::kEval);
  EvalPoint e;
  e.acc_anchor = accuracy(probs.at(static_cast<std::size_t>(anchor)), y);
  e.acc_ensemble = accuracy(ensemble_mean(probs), y);
  e.disagreement = disagreement_rates(probs).matrix.off_diagonal_mean();
  return e;
}

TrainResult train_source(HypothesisSet set, const Dataset& source, const SourceConfig& cfg, const Monitor& monitor) {
  cfg.validate();
  if (!source.y) throw ConfigError("source training needs a labelled dataset");
  source.validate();
  if (source.x.cols() != set.input_dim()) throw ShapeError("source features do not match the extractor input");

  TrainResult result{std::move(set), {}};
  HypothesisSet& hs = result.set;
  hs.zero_grads();
  Sgd opt({cfg.lr, cfg.momentum, cfg.nesterov, cfg.weight_decay});
  BatchIterator batches(source.size(), cfg.batch_size, derive_seed(cfg.seed, kStreamSourceBatches), true);
  std::mt19937_64 rng(derive_seed(cfg.seed, kStreamSourceDropout));
  const auto t0 = std::chrono::steady_clock::now();
  const int anchor = hs.anchor().value_or(0);

  for (int step = 1; step <= cfg.steps; ++step) {
    const auto& idx = batches.next();
    const Matrix xb = gather_rows(source.x, idx);
    const Labels yb = gather_labels(*source.y, idx);
    const SetForward fwd = forward_set(hs, xb, Mode::kTrain, &rng);
    std::vector<Matrix> dprobs;
    const double loss = source_ce_loss(fwd.probs, yb, &dprobs);
    backward_set(hs, fwd, dprobs);
    for (auto& n : hs.extractors()) opt.step(n.params());
    for (auto& n : hs.classifiers()) opt.step(n.params());

    if (is_eval_step(step, cfg.steps, cfg.eval_every)) {
      RunRecord rec;
      rec.step = step;
      rec.loss.total = loss;
      if (monitor) rec.eval = monitor(hs, anchor);
      rec.wall_seconds = seconds_since(t0);
      result.log.records.push_back(std::move(rec));
    }
  }
  return result;
}

int resolve_anchor(const AnchorPolicy& policy, int num_hypotheses, std::uint64_t seed) {
  if (policy.fixed) {
    if (*policy.fixed >= num_hypotheses) {
      throw ConfigError("anchor index " + std::to_string(*policy.fixed) + " out of range for M = " +
                        std::to_string(num_hypotheses));
    }
    return *policy.fixed;
  }
  std::mt19937_64 rng(derive_seed(seed, kStreamAnchor));
  std::uniform_int_distribution<int> pick(0, num_hypotheses - 1);
  return pick(rng);
}

LossBreakdown objective_step(HypothesisSet& set, const Matrix& batch, const AdaptConfig& cfg, int anchor,
                             const SourceSnapshot* snapshot, std::mt19937_64& rng, bool accumulate) {
  const SetForward fwd = forward_set(set, batch, cfg.train_mode_loss ? Mode::kTrain : Mode::kEval, &rng);
  std::vector<Matrix> dprobs;
  std::vector<Matrix>* grads = accumulate ? &dprobs : nullptr;
  LossBreakdown b;
  switch (cfg.objective) {
    case Objective::kSourceOnly:
      throw ConfigError("source_only has no adaptation objective");
    case Objective::kHdmi:
      b = hdmi_loss(fwd.probs, anchor, cfg.lambda, cfg.divergence, cfg.reduction, grads, cfg.stop_grad_anchor);
      break;
    case Objective::kMiEnsemble:
    case Objective::kMiL2:
    case Objective::kMiL2Source:
      b = mi_ensemble_loss(fwd.probs, grads);
      break;
    case Objective::kMiSingle: {
      std::vector<Matrix> single;
      b = mi_ensemble_loss({fwd.probs[anchor]}, accumulate ? &single : nullptr);
      if (accumulate) {
        dprobs.assign(fwd.probs.size(), Matrix::Zero(batch.rows(), set.num_classes()));
        dprobs[anchor] = std::move(single.front());
      }
      break;
    }
    case Objective::kHdOnly:
      b = conditional_entropy_loss(fwd.probs, cfg.lambda, anchor, cfg.divergence, cfg.reduction, true, grads);
      break;
    case Objective::kCondEntropyHd:
      b = conditional_entropy_loss(fwd.probs, cfg.lambda, anchor, cfg.divergence, cfg.reduction, false, grads);
      break;
  }
  if (accumulate) backward_set(set, fwd, dprobs);
  if (cfg.objective == Objective::kMiL2 || cfg.objective == Objective::kMiL2Source) {
    const L2Mode mode = cfg.objective == Objective::kMiL2 ? L2Mode::kL2 : L2Mode::kL2Source;
    b.reg = l2_regularizer(set, snapshot, mode, accumulate, cfg.lambda);
    b.lambda = cfg.lambda;
    b.total += cfg.lambda * b.reg;
  }
  return b;
}

TrainResult adapt_target(HypothesisSet set, const UnlabeledDataset& target, const AdaptConfig& cfg,
                         const SourceSnapshot* snapshot, const Monitor& monitor) {
  cfg.validate();
  if (cfg.objective == Objective::kSourceOnly) throw ConfigError("source_only does not run adaptation");
  if (cfg.needs_snapshot() && snapshot == nullptr) {
    throw ConfigError("objective " + std::string(to_string(cfg.objective)) + " requires a source snapshot");
  }
  if (target.x.cols() != set.input_dim()) throw ShapeError("target features do not match the extractor input");
  if (!target.x.allFinite()) throw DomainError("non-finite target features");

  TrainResult result{std::move(set), {}};
  HypothesisSet& hs = result.set;
  const int anchor = resolve_anchor(cfg.anchor_policy, hs.num_hypotheses(), cfg.seed);
  hs.set_anchor(anchor);
  hs.set_frozen_classifiers(cfg.freeze_classifiers);
  for (auto& n : hs.extractors()) n.params().set_lr_multiplier(cfg.extractor_lr_multiplier);
  hs.zero_grads();

  Sgd opt({cfg.lr, cfg.momentum, cfg.nesterov, cfg.weight_decay});
  BatchIterator batches(target.x.rows(), cfg.batch_size, derive_seed(cfg.seed, kStreamTargetBatches), true);
  std::mt19937_64 rng(derive_seed(cfg.seed, kStreamTargetDropout));
  const auto t0 = std::chrono::steady_clock::now();

  for (int step = 1; step <= cfg.steps; ++step) {
    const Matrix xb = gather_rows(target.x, batches.next());
    LossBreakdown loss = objective_step(hs, xb, cfg, anchor, snapshot, rng, true);
    step_set(hs, opt);
    if (is_eval_step(step, cfg.steps, cfg.eval_every)) {
      RunRecord rec;
      rec.step = step;
      rec.loss = std::move(loss);
      if (monitor) rec.eval = monitor(hs, anchor);
      rec.wall_seconds = seconds_since(t0);
      result.log.records.push_back(std::move(rec));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// pipeline

HypothesisSet build_source_set(const SourceConfig& cfg, int input_dim, int num_classes) {
  const Architecture arch = Architecture::desk_default(input_dim, num_classes, cfg.dropout_rate);
  return HypothesisSet::build(arch, cfg.num_hypotheses, cfg.variant, derive_seed(cfg.seed, kStreamInit));
}

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

nlohmann::json PipelineResult::report_json(const nlohmann::json& config) const {
  nlohmann::json j;
  j["config"] = config;
  j["anchor"] = anchor;
  j["report"] = adapted.to_json();
  j["source_only"] = source_only.to_json();
  return j;
}

PipelineResult adapt_and_analyze(const HypothesisSet& source_set, const UnlabeledDataset& target,
                                 const Labels& target_labels, const AdaptConfig& adapt_cfg) {
  adapt_cfg.validate();
  PipelineResult out;
  out.source_set = source_set;
  out.anchor = resolve_anchor(adapt_cfg.anchor_policy, source_set.num_hypotheses(), adapt_cfg.seed);

  const auto source_probs = predict_all(source_set, target.x, Mode::kEval);
  out.source_only = analyze(source_probs, target_labels, out.anchor, Predictor::kEnsemble);

  if (adapt_cfg.objective == Objective::kSourceOnly) {
    out.adapted = out.source_only;
    out.adapted_set = source_set;
    out.adapted_set.set_anchor(out.anchor);
  } else {
    TargetTransfer tt = to_target(source_set, adapt_cfg.freeze_classifiers, adapt_cfg.shared_extractor);
    const Matrix& tx = target.x;
    const Monitor monitor = [&tx, &target_labels](const HypothesisSet& s, int a) {
      return evaluate(s, tx, target_labels, a);
    };
    TrainResult adapted = adapt_target(std::move(tt.set), target, adapt_cfg, &tt.snapshot, monitor);
    const auto probs = predict_all(adapted.set, target.x, Mode::kEval);
    out.adapted = analyze(probs, target_labels, out.anchor, headline_predictor(adapt_cfg.objective), 10,
                          &out.source_only.error_profile);
    out.adapt_log = std::move(adapted.log);
    out.adapted_set = std::move(adapted.set);
  }
  out.adapted.runlog = "runlog.csv";
  return out;
}

PipelineResult run_pipeline(const ShiftSpec& spec, const SourceConfig& source_cfg, const AdaptConfig& adapt_cfg,
                            const std::optional<std::filesystem::path>& run_dir, const nlohmann::json& config_echo) {
  spec.validate();
  source_cfg.validate();
  adapt_cfg.validate();
  const GeneratedPair pair = generate(spec);
  HypothesisSet set = build_source_set(source_cfg, static_cast<int>(pair.source.x.cols()), spec.num_classes);
  const Dataset& src = pair.source;
  const Monitor source_monitor = [&src](const HypothesisSet& s, int a) { return evaluate(s, src.x, *src.y, a); };
  TrainResult trained = train_source(std::move(set), pair.source, source_cfg, source_monitor);

  PipelineResult out = adapt_and_analyze(trained.set, pair.target, pair.target_labels, adapt_cfg);
  out.source_log = std::move(trained.log);

  if (run_dir) {
    nlohmann::json config = config_echo;
    if (config.is_null()) {
      config = {{"data", spec.to_json()}, {"source", source_cfg.to_json()}, {"adapt", adapt_cfg.to_json()}};
    }
    write_pipeline_run(*run_dir, spec, pair, out, config);
  }
  return out;
}

void write_pipeline_run(const std::filesystem::path& run_dir, const ShiftSpec& spec, const GeneratedPair& pair,
                        const PipelineResult& result, const nlohmann::json& config) {
  Dataset target_ds{pair.target.x, std::nullopt, spec.num_classes, "target"};
  save_csv(pair.source, run_dir / "source.csv");
  save_csv(target_ds, run_dir / "target.csv");
  save_labels_csv(pair.target_labels, labels_path_for(run_dir / "target.csv"));
  write_text_file(run_dir / "manifest.json", dump_json(spec.to_json()));
  const auto probs = predict_all(result.adapted_set, pair.target.x, Mode::kEval);
  write_run_artifacts(run_dir, result, probs, pair.target_labels, config);
}

void write_run_artifacts(const std::filesystem::path& run_dir, const PipelineResult& result,
                         const std::vector<ProbBatch>& final_probs, const Labels& target_labels,
                         const nlohmann::json& config) {
  write_text_file(run_dir / "config.json", dump_json(config));
  write_text_file(run_dir / "source.ckpt.json", dump_json(result.source_set.to_json()));
  write_text_file(run_dir / "adapted.ckpt.json", dump_json(result.adapted_set.to_json()));
  write_text_file(run_dir / "runlog.csv", result.adapt_log.to_csv());
  write_text_file(run_dir / "source_runlog.csv", result.source_log.to_csv());
  write_text_file(run_dir / "report.json", dump_json(result.report_json(config)));
  write_text_file(run_dir / "bins.csv", bins_csv(result.adapted.bins));
  write_text_file(run_dir / "disagreement.csv", matrix_csv(result.adapted.disagreement));
  write_text_file(run_dir / "klmatrix.csv", matrix_csv(result.adapted.kl));
  write_text_file(run_dir / "predictions.csv", predictions_csv(final_probs, &target_labels));
}

}  // namespace hdmi
