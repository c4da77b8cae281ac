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

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hdmi/adapt.hpp"
#include "hdmi/analysis.hpp"
#include "hdmi/commands.hpp"
#include "hdmi/config.hpp"
#include "hdmi/errors.hpp"
#include "hdmi/objectives.hpp"

namespace py = pybind11;
using namespace hdmi;

namespace {

using Overrides = std::map<std::string, std::string>;

ResolvedConfig resolved(const Overrides& overrides) {
  auto cfg = ResolvedConfig::resolve({}, overrides);
  cfg.validate();
  return cfg;
}

std::string run(const Overrides& overrides, const std::string& run_dir) {
  const ResolvedConfig cfg = resolved(overrides);
  std::optional<std::filesystem::path> dir;
  if (!run_dir.empty()) dir = run_dir;
  py::gil_scoped_release release;
  return dump_json(run_pipeline(cfg.shift_spec(), cfg.source_config(), cfg.adapt_config(), dir, cfg.to_json())
                       .report_json(cfg.to_json()));
}

py::tuple generate_pair(const Overrides& overrides) {
  const GeneratedPair pair = generate(resolved(overrides).shift_spec());
  return py::make_tuple(pair.source.x, *pair.source.y, pair.target.x, pair.target_labels);
}

py::dict loss_dict(const LossBreakdown& l) {
  py::dict d;
  d["total"] = l.total;
  d["mi"] = l.mean_mi();
  d["marginal_entropy"] = l.marginal_entropy;
  d["conditional_entropy"] = l.conditional_entropy;
  d["hd"] = l.hd;
  return d;
}

py::tuple cli(std::vector<std::string> args) {
  args.insert(args.begin(), "hdmi_lab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code;
  {
    py::gil_scoped_release release;
    code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hypothesis-disparity regularized mutual information maximization";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("known_keys", &ResolvedConfig::known_keys);
  m.def("resolve_config", [](const Overrides& o) { return resolved(o).to_json().dump(); }, py::arg("overrides"));
  m.def("generate", &generate_pair, py::arg("overrides"));
  m.def("run", &run, py::arg("overrides"), py::arg("run_dir") = "");
  m.def("cli", &cli, py::arg("args"));

  m.def("mutual_information", [](const ProbBatch& p) { return mutual_information(p); });
  m.def("conditional_entropy", [](const ProbBatch& p) { return conditional_entropy(p); });
  m.def("marginal_entropy", [](const ProbBatch& p) { return marginal_entropy(p); });
  m.def(
      "hdmi_loss",
      [](const std::vector<ProbBatch>& ps, int anchor, double lambda, const std::string& divergence,
         const std::string& reduction) {
        return loss_dict(hdmi_loss(ps, anchor, lambda, divergence_from_string(divergence),
                                   reduction_from_string(reduction)));
      },
      py::arg("probs"), py::arg("anchor"), py::arg("lam"), py::arg("divergence") = "cross_entropy",
      py::arg("reduction") = "mean");
  m.def("ce_kl_identity_residual", &ce_kl_identity_residual, py::arg("probs"), py::arg("anchor"), py::arg("lam"));

  m.def("accuracy", &accuracy, py::arg("probs"), py::arg("labels"));
  m.def("brier", &brier, py::arg("probs"), py::arg("labels"));
  m.def(
      "ece", [](const ProbBatch& p, const Labels& y, int bins) { return ece(p, y, bins).ece; }, py::arg("probs"),
      py::arg("labels"), py::arg("num_bins") = 10);
  m.def("disagreement_rates", [](const std::vector<ProbBatch>& ps) { return Matrix(disagreement_rates(ps).matrix.values); });
  m.def("kl_matrix", [](const std::vector<ProbBatch>& ps) { return Matrix(kl_matrix(ps).values); });
}
