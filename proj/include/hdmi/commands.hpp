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

// Command-line front end: gen | train-source | adapt | eval | run | sweep |
// ablate. Exit codes: 0 success, 1 validation / missing artifact / malformed
// data, 2 file system failure.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hdmi/adapt.hpp"
#include "hdmi/config.hpp"

namespace hdmi {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Grid over lambda x M x objective x seed.
struct SweepSpec {
  std::vector<double> lambdas;
  std::vector<int> ms;
  std::vector<std::string> objectives;
  std::vector<int> seeds;

  void validate() const;
  std::size_t total_runs() const { return lambdas.size() * ms.size() * objectives.size() * seeds.size(); }
};

// `<objective>_m<M>_l<lambda>_s<seed>`
std::string run_dir_name(std::string_view objective, int m, double lambda, std::uint64_t seed);

// `root/name`, or `root/name_<k>` with the smallest k >= 2 that is free. The
// directory is created so that concurrent callers cannot collide.
std::filesystem::path claim_run_dir(const std::filesystem::path& root, const std::string& name);

struct RunSummary {
  std::string objective;
  int m = 0;
  double lambda = 0.0;
  int seed = 0;
  std::string status = "ok";
  double acc_anchor = 0.0;
  double acc_ensemble = 0.0;
  double accuracy = 0.0;
  double ece = 0.0;
  double brier = 0.0;
  double disagreement = 0.0;
};

RunSummary summarize(const ResolvedConfig& cfg, const AnalysisReport& report);

// Run rows followed by one aggregate row (mean and sample sd over seeds) per
// (objective, M, lambda) configuration, in first-appearance order. Failed runs
// are listed but excluded from the aggregates.
std::string summary_csv(const std::vector<RunSummary>& runs);

}  // namespace hdmi
