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

#include "hdmi/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

#include <CLI11.hpp>

#include "hdmi/errors.hpp"
#include "hdmi/textio.hpp"

namespace hdmi {
namespace fs = std::filesystem;

void SweepSpec::validate() const {
  if (lambdas.empty() || ms.empty() || objectives.empty() || seeds.empty()) {
    throw ConfigError("sweep axes must be non-empty");
  }
}

std::string run_dir_name(std::string_view objective, int m, double lambda, std::uint64_t seed) {
  return std::string(objective) + "_m" + std::to_string(m) + "_l" + format_short(lambda) + "_s" + std::to_string(seed);
}

fs::path claim_run_dir(const fs::path& root, const std::string& name) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create output root '" + root.string() + "': " + ec.message());
  for (int k = 1;; ++k) {
    const fs::path p = root / (k == 1 ? name : name + "_" + std::to_string(k));
    // create_directory reports false when the entry already exists.
    if (fs::create_directory(p, ec)) return p;
    if (ec) throw IoError("cannot create run directory '" + p.string() + "': " + ec.message());
  }
}

RunSummary summarize(const ResolvedConfig& cfg, const AnalysisReport& report) {
  RunSummary s;
  s.objective = cfg.get("objective");
  s.m = cfg.get_int("m");
  s.lambda = cfg.get_real("lambda");
  s.seed = cfg.get_int("seed");
  s.acc_anchor = report.accuracy_anchor;
  s.acc_ensemble = report.accuracy_ensemble;
  s.accuracy = report.accuracy;
  s.ece = report.ece;
  s.brier = report.brier;
  s.disagreement = report.mean_disagreement;
  return s;
}

namespace {

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

MeanSd mean_sd(const std::vector<double>& v) {
  MeanSd r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return r;
}

const char* const kMetricNames[] = {"acc_anchor", "acc_ensemble", "accuracy", "ece", "brier", "disagreement"};

std::vector<double> metrics_of(const RunSummary& r) {
  return {r.acc_anchor, r.acc_ensemble, r.accuracy, r.ece, r.brier, r.disagreement};
}

std::string metric_header() {
  std::string h;
  for (const char* n : kMetricNames) h += std::string(",") + n + "," + n + "_sd";
  return h;
}

std::string metric_cells(const std::vector<std::vector<double>>& per_metric, bool with_sd) {
  std::string row;
  for (const auto& values : per_metric) {
    const MeanSd ms = mean_sd(values);
    row += "," + (values.empty() ? std::string() : format_real(ms.mean));
    row += "," + (with_sd && !values.empty() ? format_real(ms.sd) : std::string());
  }
  return row;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += (c == '"') ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

std::string summary_csv(const std::vector<RunSummary>& runs) {
  std::string out = "row_type,objective,m,lambda,seed,status,n" + metric_header() + "\n";
  using Key = std::tuple<std::string, int, double>;
  std::vector<Key> order;
  std::map<Key, std::vector<const RunSummary*>> groups;
  for (const auto& r : runs) {
    const Key key{r.objective, r.m, r.lambda};
    if (!groups.contains(key)) order.push_back(key);
    groups[key].push_back(&r);
    std::vector<std::vector<double>> cells(std::size(kMetricNames));
    if (r.status == "ok") {
      const auto m = metrics_of(r);
      for (std::size_t i = 0; i < m.size(); ++i) cells[i].push_back(m[i]);
    }
    out += "run," + r.objective + "," + std::to_string(r.m) + "," + format_short(r.lambda) + "," +
           std::to_string(r.seed) + "," + csv_escape(r.status) + "," + (r.status == "ok" ? "1" : "0") +
           metric_cells(cells, false) + "\n";
  }
  for (const auto& key : order) {
    std::vector<std::vector<double>> cells(std::size(kMetricNames));
    int n = 0;
    for (const RunSummary* r : groups[key]) {
      if (r->status != "ok") continue;
      ++n;
      const auto m = metrics_of(*r);
      for (std::size_t i = 0; i < m.size(); ++i) cells[i].push_back(m[i]);
    }
    const auto& [obj, m, lambda] = key;
    out += "aggregate," + obj + "," + std::to_string(m) + "," + format_short(lambda) + ",," +
           (n == static_cast<int>(groups[key].size()) ? "ok" : "partial") + "," + std::to_string(n) +
           metric_cells(cells, true) + "\n";
  }
  return out;
}

namespace {

// Binds one string option per config key; `--n-source` and `--n_source` are
// both accepted.
class ConfigFlags {
 public:
  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path_, "key = value config file");
    for (const auto& key : ResolvedConfig::known_keys()) {
      std::string dashed = key;
      std::replace(dashed.begin(), dashed.end(), '_', '-');
      std::string names = "--" + dashed;
      if (dashed != key) names += ",--" + key;
      opts_[key] = cmd->add_option(names, values_[key], "config key '" + key + "'");
    }
  }

  ResolvedConfig resolve(const std::map<std::string, std::string>& overrides = {}) const {
    std::map<std::string, std::string> file_values;
    if (!config_path_.empty()) {
      if (!fs::exists(config_path_)) throw MissingArtifactError("missing artifact: config file '" + config_path_ + "'");
      file_values = ResolvedConfig::parse_file(config_path_);
    }
    auto flags = flag_values();
    for (const auto& [k, v] : overrides) flags[k] = v;
    return ResolvedConfig::resolve(file_values, flags);
  }

  std::map<std::string, std::string> flag_values() const {
    std::map<std::string, std::string> flags;
    for (const auto& [key, opt] : opts_) {
      if (opt->count() > 0) flags[key] = values_.at(key);
    }
    return flags;
  }

 private:
  std::string config_path_;
  std::map<std::string, std::string> values_;
  std::map<std::string, CLI::Option*> opts_;
};

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw MissingArtifactError("missing artifact: " + what + " '" + p.string() + "'");
}

HypothesisSet load_checkpoint(const fs::path& p, const std::string& what) {
  require_file(p, what);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(p));
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(p.string(), 0, std::string("malformed checkpoint: ") + e.what());
  }
  try {
    return HypothesisSet::from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(p.string(), 0, std::string("malformed checkpoint: ") + e.what());
  }
}

fs::path default_data_dir(const ResolvedConfig& cfg) {
  return cfg.output_root() / ("data_" + cfg.get("preset") + "_s" + cfg.get("seed"));
}

// Everything needed to reuse one trained source set across adaptation runs.
struct SourceStage {
  ShiftSpec spec;
  GeneratedPair pair;
  TrainResult trained;
};

SourceStage train_source_stage(const ResolvedConfig& cfg) {
  SourceStage st{cfg.shift_spec(), {}, {}};
  st.pair = generate(st.spec);
  const SourceConfig scfg = cfg.source_config();
  const Dataset& src = st.pair.source;
  const Monitor monitor = [&src](const HypothesisSet& s, int a) { return evaluate(s, src.x, *src.y, a); };
  st.trained = train_source(build_source_set(scfg, static_cast<int>(src.x.cols()), st.spec.num_classes), src, scfg,
                            monitor);
  return st;
}

PipelineResult adapt_stage(const SourceStage& st, const ResolvedConfig& cfg) {
  PipelineResult r = adapt_and_analyze(st.trained.set, st.pair.target, st.pair.target_labels, cfg.adapt_config());
  r.source_log = st.trained.log;
  return r;
}

// -- commands ---------------------------------------------------------------

int cmd_gen(const ResolvedConfig& cfg, const std::string& dir_flag, std::ostream& out) {
  const fs::path dir = dir_flag.empty() ? default_data_dir(cfg) : fs::path(dir_flag);
  const ShiftSpec spec = cfg.shift_spec();
  const GeneratedPair pair = generate(spec);
  save_csv(pair.source, dir / "source.csv");
  save_csv(Dataset{pair.target.x, std::nullopt, spec.num_classes, "target"}, dir / "target.csv");
  save_labels_csv(pair.target_labels, labels_path_for(dir / "target.csv"));
  write_text_file(dir / "manifest.json", dump_json(spec.to_json()));
  write_text_file(dir / "config.json", dump_json(cfg.to_json()));
  out << dir.string() << "\n";
  return kExitOk;
}

int cmd_train_source(const ResolvedConfig& cfg, const std::string& data_flag, const std::string& ckpt_flag,
                     std::ostream& out) {
  const fs::path data = data_flag.empty() ? default_data_dir(cfg) : fs::path(data_flag);
  require_file(data / "source.csv", "source dataset");
  const Dataset source = load_csv(data / "source.csv", true, cfg.get_int("k"));
  const SourceConfig scfg = cfg.source_config();
  const Monitor monitor = [&source](const HypothesisSet& s, int a) { return evaluate(s, source.x, *source.y, a); };
  TrainResult r = train_source(build_source_set(scfg, static_cast<int>(source.x.cols()), source.num_classes), source,
                               scfg, monitor);
  const fs::path ckpt = ckpt_flag.empty() ? data / "source.ckpt.json" : fs::path(ckpt_flag);
  write_text_file(ckpt, dump_json(r.set.to_json()));
  write_text_file(ckpt.parent_path() / "source_runlog.csv", r.log.to_csv());
  out << ckpt.string() << "\n";
  return kExitOk;
}

int cmd_adapt(const ResolvedConfig& cfg, const std::string& data_flag, const std::string& ckpt_flag,
              const std::string& dir_flag, std::ostream& out) {
  const fs::path data = data_flag.empty() ? default_data_dir(cfg) : fs::path(data_flag);
  const fs::path ckpt = ckpt_flag.empty() ? data / "source.ckpt.json" : fs::path(ckpt_flag);
  const HypothesisSet source_set = load_checkpoint(ckpt, "source checkpoint");
  require_file(data / "target.csv", "target dataset");
  const int k = cfg.get_int("k");
  const Dataset target = load_csv(data / "target.csv", false, k);
  const fs::path labels_path = labels_path_for(data / "target.csv");
  const AdaptConfig acfg = cfg.adapt_config();
  const fs::path dir =
      dir_flag.empty()
          ? claim_run_dir(cfg.output_root(), run_dir_name(cfg.get("objective"), source_set.num_hypotheses(),
                                                          acfg.lambda, acfg.seed))
          : fs::path(dir_flag);

  if (fs::exists(labels_path)) {
    const Labels labels = load_labels_csv(labels_path, k);
    if (labels.size() != static_cast<std::size_t>(target.x.rows())) {
      throw IngestionError(labels_path.string(), 0, "label count does not match target rows");
    }
    const PipelineResult r = adapt_and_analyze(source_set, target.unlabeled(), labels, acfg);
    write_run_artifacts(dir, r, predict_all(r.adapted_set, target.x, Mode::kEval), labels, cfg.to_json());
    out << dir.string() << " accuracy=" << format_real(r.adapted.accuracy) << "\n";
  } else {
    // Without ground truth only the adapted checkpoint and loss log are produced.
    TargetTransfer tt = to_target(source_set, acfg.freeze_classifiers, acfg.shared_extractor);
    TrainResult r = adapt_target(std::move(tt.set), target.unlabeled(), acfg, &tt.snapshot);
    write_text_file(dir / "adapted.ckpt.json", dump_json(r.set.to_json()));
    write_text_file(dir / "runlog.csv", r.log.to_csv());
    write_text_file(dir / "config.json", dump_json(cfg.to_json()));
    out << dir.string() << "\n";
  }
  return kExitOk;
}

int cmd_eval(const ResolvedConfig& cfg, const std::string& data_flag, const std::string& ckpt_flag,
             const std::string& dir_flag, std::ostream& out) {
  const fs::path data = data_flag.empty() ? default_data_dir(cfg) : fs::path(data_flag);
  if (ckpt_flag.empty()) throw ConfigError("eval needs --checkpoint");
  const HypothesisSet set = load_checkpoint(ckpt_flag, "checkpoint");
  require_file(data / "target.csv", "target dataset");
  const fs::path labels_path = labels_path_for(data / "target.csv");
  require_file(labels_path, "target labels");
  const int k = cfg.get_int("k");
  const Dataset target = load_csv(data / "target.csv", false, k);
  const Labels labels = load_labels_csv(labels_path, k);
  const AdaptConfig acfg = cfg.adapt_config();
  const int anchor = set.anchor().value_or(resolve_anchor(acfg.anchor_policy, set.num_hypotheses(), acfg.seed));
  const auto probs = predict_all(set, target.x, Mode::kEval);
  const AnalysisReport report = analyze(probs, labels, anchor, headline_predictor(acfg.objective));
  nlohmann::json doc{{"config", cfg.to_json()}, {"anchor", anchor}, {"report", report.to_json()}};
  if (dir_flag.empty()) {
    out << dump_json(doc);
  } else {
    const fs::path dir = dir_flag;
    write_text_file(dir / "report.json", dump_json(doc));
    write_text_file(dir / "bins.csv", bins_csv(report.bins));
    write_text_file(dir / "disagreement.csv", matrix_csv(report.disagreement));
    write_text_file(dir / "klmatrix.csv", matrix_csv(report.kl));
    write_text_file(dir / "predictions.csv", predictions_csv(probs, &labels));
    out << dir.string() << " accuracy=" << format_real(report.accuracy) << "\n";
  }
  return kExitOk;
}

int cmd_run(const ResolvedConfig& cfg, const std::string& dir_flag, std::ostream& out) {
  const AdaptConfig acfg = cfg.adapt_config();
  const fs::path dir =
      dir_flag.empty()
          ? claim_run_dir(cfg.output_root(), run_dir_name(cfg.get("objective"), cfg.get_int("m"), acfg.lambda, acfg.seed))
          : fs::path(dir_flag);
  const PipelineResult r = run_pipeline(cfg.shift_spec(), cfg.source_config(), acfg, dir, cfg.to_json());
  out << dir.string() << " accuracy=" << format_real(r.adapted.accuracy)
      << " source_only=" << format_real(r.source_only.accuracy) << "\n";
  return kExitOk;
}

template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (std::size_t i = next++; i < n; i = next++) fn(i);
  };
  const int count = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  std::vector<std::thread> pool;
  for (int w = 1; w < count; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
}

std::string error_status(const std::exception& e) { return std::string("error: ") + e.what(); }

int cmd_sweep(const ConfigFlags& flags, const SweepSpec& sweep, int workers, const std::string& dir_flag,
              std::ostream& out) {
  sweep.validate();
  const ResolvedConfig base = flags.resolve();
  const fs::path root = dir_flag.empty() ? base.output_root() : fs::path(dir_flag);

  struct Point {
    std::map<std::string, std::string> overrides;
    std::optional<ResolvedConfig> cfg;
    fs::path dir;
    RunSummary summary;
  };
  struct Group {
    std::map<std::string, std::string> source_overrides;
    std::vector<std::size_t> points;
  };
  std::vector<Point> points;
  std::vector<Group> groups;
  // Source training depends only on (M, seed), so it is shared within a group.
  for (int m : sweep.ms) {
    for (int seed : sweep.seeds) {
      Group g;
      g.source_overrides = {{"m", std::to_string(m)}, {"seed", std::to_string(seed)}};
      for (const auto& obj : sweep.objectives) {
        for (double lambda : sweep.lambdas) {
          Point p;
          p.overrides = g.source_overrides;
          p.overrides["objective"] = obj;
          p.overrides["lambda"] = format_short(lambda);
          p.summary.objective = obj;
          p.summary.m = m;
          p.summary.lambda = lambda;
          p.summary.seed = seed;
          try {
            p.cfg = flags.resolve(p.overrides);
            p.dir = claim_run_dir(root, run_dir_name(obj, m, lambda, static_cast<std::uint64_t>(seed)));
          } catch (const IoError&) {
            throw;
          } catch (const std::exception& e) {
            p.summary.status = error_status(e);
          }
          g.points.push_back(points.size());
          points.push_back(std::move(p));
        }
      }
      groups.push_back(std::move(g));
    }
  }

  std::mutex log_mu;
  parallel_for(groups.size(), workers, [&](std::size_t gi) {
    const Group& g = groups[gi];
    std::optional<SourceStage> stage;
    for (std::size_t pi : g.points) {
      Point& p = points[pi];
      if (!p.cfg) continue;
      try {
        if (!stage) stage = train_source_stage(*p.cfg);
        const PipelineResult r = adapt_stage(*stage, *p.cfg);
        write_pipeline_run(p.dir, stage->spec, stage->pair, r, p.cfg->to_json());
        const std::string status = p.summary.status;
        p.summary = summarize(*p.cfg, r.adapted);
        p.summary.status = status;
      } catch (const std::exception& e) {
        p.summary.status = error_status(e);
      }
      std::lock_guard lock(log_mu);
      out << (p.dir.empty() ? p.summary.objective : p.dir.string()) << " " << p.summary.status << "\n";
    }
  });

  std::vector<RunSummary> rows;
  for (const auto& p : points) rows.push_back(p.summary);
  write_text_file(root / "summary.csv", summary_csv(rows));
  out << (root / "summary.csv").string() << "\n";
  return kExitOk;
}

struct AblationRow {
  const char* label;
  std::map<std::string, std::string> overrides;
};

const std::vector<AblationRow>& ablation_rows() {
  static const std::vector<AblationRow> rows = {
      {"source_only", {{"objective", "source_only"}}},
      {"mi_ensemble", {{"objective", "mi_ensemble"}}},
      {"hdmi", {{"objective", "hdmi"}, {"divergence", "cross_entropy"}}},
      {"hdmi_kl", {{"objective", "hdmi"}, {"divergence", "kl"}}},
      {"hdmi_independent_extractors", {{"objective", "hdmi"}, {"shared_extractor", "false"}}},
      {"hd_only", {{"objective", "hd_only"}}},
      {"cond_entropy_hd", {{"objective", "cond_entropy_hd"}}},
      {"mi_l2", {{"objective", "mi_l2"}}},
      {"mi_l2_source", {{"objective", "mi_l2_source"}}},
  };
  return rows;
}

int cmd_ablate(const ConfigFlags& flags, const std::vector<int>& seeds, int workers, const std::string& dir_flag,
               std::ostream& out) {
  if (seeds.empty()) throw ConfigError("ablate needs at least one seed");
  const ResolvedConfig base = flags.resolve();
  const fs::path root = dir_flag.empty() ? base.output_root() : fs::path(dir_flag);
  const auto& rows = ablation_rows();

  // results[row][seed index]
  std::vector<std::vector<std::optional<RunSummary>>> results(rows.size(),
                                                              std::vector<std::optional<RunSummary>>(seeds.size()));
  std::vector<std::vector<std::string>> errors(rows.size());
  std::mutex mu;
  parallel_for(seeds.size(), workers, [&](std::size_t si) {
    const std::map<std::string, std::string> seed_override{{"seed", std::to_string(seeds[si])}};
    std::optional<SourceStage> stage;
    for (std::size_t ri = 0; ri < rows.size(); ++ri) {
      try {
        auto overrides = rows[ri].overrides;
        overrides.insert(seed_override.begin(), seed_override.end());
        const ResolvedConfig cfg = flags.resolve(overrides);
        if (!stage) stage = train_source_stage(cfg);
        const PipelineResult r = adapt_stage(*stage, cfg);
        results[ri][si] = summarize(cfg, r.adapted);
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        errors[ri].push_back("seed " + std::to_string(seeds[si]) + ": " + e.what());
      }
    }
    std::lock_guard lock(mu);
    out << "seed " << seeds[si] << " done\n";
  });

  std::string csv = "row,objective,n,status" + metric_header() + "\n";
  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    std::vector<std::vector<double>> cells(std::size(kMetricNames));
    int n = 0;
    for (const auto& r : results[ri]) {
      if (!r) continue;
      ++n;
      const auto m = metrics_of(*r);
      for (std::size_t i = 0; i < m.size(); ++i) cells[i].push_back(m[i]);
    }
    std::string status = "ok";
    if (!errors[ri].empty()) {
      status = "error: " + errors[ri].front();
    }
    csv += std::string(rows[ri].label) + "," + rows[ri].overrides.at("objective") + "," + std::to_string(n) + "," +
           csv_escape(status) + metric_cells(cells, true) + "\n";
  }
  write_text_file(root / "ablation.csv", csv);
  out << (root / "ablation.csv").string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"hdmi_lab: source-free hypothesis transfer laboratory"};
  app.require_subcommand(1);

  ConfigFlags gen_flags, train_flags, adapt_flags, eval_flags, run_flags, sweep_flags, ablate_flags;
  std::string dir, data, checkpoint;
  std::string lambdas, ms, objectives, seeds = "1..5";
  int workers = 1;

  auto* gen = app.add_subcommand("gen", "generate a source/target dataset pair");
  gen_flags.attach(gen);
  gen->add_option("--dir", dir, "output directory (default <out>/data_<preset>_s<seed>)");

  auto* train = app.add_subcommand("train-source", "train source hypotheses on source.csv");
  train_flags.attach(train);
  train->add_option("--data", data, "dataset directory");
  train->add_option("--checkpoint", checkpoint, "output checkpoint (default <data>/source.ckpt.json)");

  auto* adapt = app.add_subcommand("adapt", "adapt a source checkpoint to target.csv");
  adapt_flags.attach(adapt);
  adapt->add_option("--data", data, "dataset directory");
  adapt->add_option("--source-checkpoint", checkpoint, "source checkpoint (default <data>/source.ckpt.json)");
  adapt->add_option("--dir", dir, "run directory (default <out>/<objective>_m<M>_l<lambda>_s<seed>)");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on labelled target data");
  eval_flags.attach(eval);
  eval->add_option("--data", data, "dataset directory");
  eval->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();
  eval->add_option("--dir", dir, "write report files here instead of printing report.json");

  auto* run = app.add_subcommand("run", "generate, train, adapt and analyze");
  run_flags.attach(run);
  run->add_option("--dir", dir, "run directory (default <out>/<objective>_m<M>_l<lambda>_s<seed>)");

  auto* sweep = app.add_subcommand("sweep", "grid over lambda x M x objective x seed");
  sweep_flags.attach(sweep);
  sweep->add_option("--lambdas", lambdas, "comma separated lambda values");
  sweep->add_option("--ms", ms, "comma separated hypothesis counts");
  sweep->add_option("--objectives", objectives, "comma separated objectives");
  sweep->add_option("--seeds", seeds, "seeds, e.g. 1..5 or 1,2,3")->capture_default_str();
  sweep->add_option("--workers", workers, "parallel workers")->capture_default_str();
  sweep->add_option("--dir", dir, "sweep directory (default <out>)");

  auto* ablate = app.add_subcommand("ablate", "run the nine ablation configurations");
  ablate_flags.attach(ablate);
  ablate->add_option("--seeds", seeds, "seeds, e.g. 1..5 or 1,2,3")->capture_default_str();
  ablate->add_option("--workers", workers, "parallel workers")->capture_default_str();
  ablate->add_option("--dir", dir, "output directory (default <out>)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ExtrasError& e) {
    err << "error: " << e.what() << "\nknown config keys: " << ResolvedConfig::known_keys_list() << "\n";
    return kExitValidation;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*gen) return cmd_gen(gen_flags.resolve(), dir, out);
    if (*train) return cmd_train_source(train_flags.resolve(), data, checkpoint, out);
    if (*adapt) return cmd_adapt(adapt_flags.resolve(), data, checkpoint, dir, out);
    if (*eval) return cmd_eval(eval_flags.resolve(), data, checkpoint, dir, out);
    if (*run) return cmd_run(run_flags.resolve(), dir, out);
    if (*sweep) {
      const ResolvedConfig base = sweep_flags.resolve();
      SweepSpec spec;
      spec.lambdas = lambdas.empty() ? std::vector<double>{base.get_real("lambda")} : parse_real_list(lambdas, "lambdas");
      spec.ms = ms.empty() ? std::vector<int>{base.get_int("m")} : parse_int_list(ms, "ms");
      if (objectives.empty()) {
        spec.objectives = {base.get("objective")};
      } else {
        for (auto f : split_fields(objectives)) spec.objectives.emplace_back(f);
      }
      spec.seeds = parse_int_list(seeds, "seeds");
      return cmd_sweep(sweep_flags, spec, workers, dir, out);
    }
    if (*ablate) return cmd_ablate(ablate_flags, parse_int_list(seeds, "seeds"), workers, dir, out);
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const MissingArtifactError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const IngestionError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::invalid_argument& e) {  // ConfigError, ShapeError
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::domain_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace hdmi
