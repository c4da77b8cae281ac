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

// Small feed-forward networks with hand-written backpropagation, plus the
// SGD optimizer used for every training phase. All math is double precision.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hdmi/types.hpp"

namespace hdmi {

enum class Activation { kRelu, kIdentity };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

struct LayerSpec {
  int in_dim = 1;
  int out_dim = 1;
  Activation activation = Activation::kIdentity;
  double dropout_rate = 0.0;  // inverted dropout applied after the activation

  void validate() const;
  bool operator==(const LayerSpec&) const = default;
};

// Flat, ordered collection of named parameter arrays with paired gradients.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    std::vector<double> values;
    std::vector<double> grads;
    double lr_multiplier = 1.0;
  };

  Entry& add(std::string name, std::vector<double> values, double lr_multiplier = 1.0);

  Entry& at(std::string_view name);
  const Entry& at(std::string_view name) const;
  const Entry* find(std::string_view name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  std::size_t num_values() const;
  void zero_grads();
  void set_lr_multiplier(double m);

  // Copies values (not grads) from a store with identical layout.
  void copy_values_from(const ParamStore& other);
  bool values_equal(const ParamStore& other) const;

 private:
  std::vector<Entry> entries_;
};

enum class Mode { kTrain, kEval };

// How dropout masks are chosen in train mode. A fixed mask is a pure function
// of (mask_id, layer index, network mask seed) and is constant across rows.
// Eval mode is a pass-through unless `apply_in_eval` is set on a fixed mask,
// which keeps MC-dropout hypotheses distinct at evaluation time.
struct MaskPolicy {
  bool fixed = false;
  std::uint64_t mask_id = 0;
  bool apply_in_eval = false;

  static MaskPolicy resample() { return {}; }
  static MaskPolicy fixed_mask(std::uint64_t id, bool in_eval = false) { return {true, id, in_eval}; }
};

struct LayerTape {
  Matrix input;
  Matrix pre;   // pre-activation
  Matrix mask;  // dropout scale per entry; empty when no dropout was applied
};

struct ForwardTape {
  std::vector<LayerTape> layers;
  Eigen::Index batch_size = 0;
};

struct ForwardResult {
  Matrix output;
  ForwardTape tape;
};

class Network {
 public:
  Network() = default;

  // Weights ~ U(-a, a), a = sqrt(6 / (in + out)); biases zero. Parameter names
  // are "<prefix>.<layer>.weight" and "<prefix>.<layer>.bias"; weights are
  // stored row-major as in_dim x out_dim.
  Network(std::string prefix, std::vector<LayerSpec> layers, std::uint64_t seed);

  // Same layout, all parameters zero.
  static Network zeros(std::string prefix, std::vector<LayerSpec> layers);

  // `rng` is required only in train mode with resampled dropout.
  ForwardResult forward(const Matrix& x, Mode mode, MaskPolicy policy,
                        std::mt19937_64* rng = nullptr) const;

  // Accumulates (+=) parameter gradients and returns d(loss)/d(input).
  Matrix backward(const ForwardTape& tape, const Matrix& dout);

  // The per-unit keep/scale vector for a fixed mask on `layer`.
  RowVector fixed_mask(std::uint64_t mask_id, std::size_t layer) const;

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::string& prefix() const { return prefix_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  int input_dim() const { return layers_.front().in_dim; }
  int output_dim() const { return layers_.back().out_dim; }
  std::uint64_t mask_seed() const { return mask_seed_; }
  void set_mask_seed(std::uint64_t s) { mask_seed_ = s; }

  // Renames every parameter entry to use a new prefix.
  void rename(std::string prefix);

 private:
  std::string prefix_;
  std::vector<LayerSpec> layers_;
  ParamStore params_;
  std::uint64_t mask_seed_ = 0;
};

// Row-wise softmax with max subtraction.
ProbBatch softmax(const Matrix& logits);

// Given p = softmax(z) and dL/dp, returns dL/dz.
Matrix softmax_backward(const ProbBatch& p, const Matrix& dprobs);

struct SgdOptions {
  double lr = 1e-2;
  double momentum = 0.0;
  bool nesterov = false;
  double weight_decay = 0.0;
};

// SGD with optional (Nesterov) momentum and L2 weight decay. Velocity buffers
// are keyed by parameter name and persist across calls to step().
class Sgd {
 public:
  explicit Sgd(SgdOptions options);

  // Updates every entry of `store` with rate lr * lr_multiplier, then zeroes
  // its gradients.
  void step(ParamStore& store);

  const SgdOptions& options() const { return options_; }
  const std::map<std::string, std::vector<double>>& velocities() const { return velocity_; }
  void reset() { velocity_.clear(); }

  nlohmann::json to_json() const;
  static Sgd from_json(const nlohmann::json& j);

 private:
  SgdOptions options_;
  std::map<std::string, std::vector<double>> velocity_;
};

inline constexpr int kCheckpointFormatVersion = 1;

// {format_version, prefix, mask_seed, layer_specs, entries, optimizer_state}
nlohmann::json network_to_json(const Network& net, const Sgd* optimizer = nullptr);
Network network_from_json(const nlohmann::json& j);

nlohmann::json layer_spec_to_json(const LayerSpec& spec);
LayerSpec layer_spec_from_json(const nlohmann::json& j);

}  // namespace hdmi
