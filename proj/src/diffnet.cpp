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

#include "hdmi/diffnet.hpp"

#include <algorithm>
#include <cmath>

#include "hdmi/errors.hpp"

namespace hdmi {
namespace {

using ConstMatrixMap = Eigen::Map<const Matrix>;
using MatrixMap = Eigen::Map<Matrix>;

std::string weight_name(const std::string& prefix, std::size_t layer) {
  return prefix + "." + std::to_string(layer) + ".weight";
}

std::string bias_name(const std::string& prefix, std::size_t layer) {
  return prefix + "." + std::to_string(layer) + ".bias";
}

void check_chain(const std::vector<LayerSpec>& layers) {
  if (layers.empty()) throw ConfigError("network needs at least one layer");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].validate();
    if (i > 0 && layers[i].in_dim != layers[i - 1].out_dim) {
      throw ShapeError("layer " + std::to_string(i) + " in_dim " + std::to_string(layers[i].in_dim) +
                       " does not match previous out_dim " + std::to_string(layers[i - 1].out_dim));
    }
  }
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::kRelu:
      return "relu";
    case Activation::kIdentity:
      return "identity";
  }
  return "identity";
}

Activation activation_from_string(std::string_view s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

void LayerSpec::validate() const {
  if (in_dim < 1 || out_dim < 1) throw ConfigError("layer dimensions must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0, 1)");
}

// ---------------------------------------------------------------------------
// ParamStore

ParamStore::Entry& ParamStore::add(std::string name, std::vector<double> values, double lr_multiplier) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name '" + name + "'");
  if (!(lr_multiplier > 0.0)) throw ConfigError("lr_multiplier must be positive for '" + name + "'");
  Entry e;
  e.grads.assign(values.size(), 0.0);
  e.values = std::move(values);
  e.name = std::move(name);
  e.lr_multiplier = lr_multiplier;
  entries_.push_back(std::move(e));
  return entries_.back();
}

ParamStore::Entry& ParamStore::at(std::string_view name) {
  for (auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw ConfigError("no parameter named '" + std::string(name) + "'");
}

const ParamStore::Entry& ParamStore::at(std::string_view name) const {
  const Entry* e = find(name);
  if (e == nullptr) throw ConfigError("no parameter named '" + std::string(name) + "'");
  return *e;
}

const ParamStore::Entry* ParamStore::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::size_t ParamStore::num_values() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.values.size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& e : entries_) std::fill(e.grads.begin(), e.grads.end(), 0.0);
}

void ParamStore::set_lr_multiplier(double m) {
  if (!(m > 0.0)) throw ConfigError("lr_multiplier must be positive");
  for (auto& e : entries_) e.lr_multiplier = m;
}

void ParamStore::copy_values_from(const ParamStore& other) {
  if (other.entries_.size() != entries_.size()) throw ShapeError("parameter store layouts differ");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].values.size() != other.entries_[i].values.size()) {
      throw ShapeError("parameter '" + entries_[i].name + "' has a different length");
    }
    entries_[i].values = other.entries_[i].values;
  }
}

bool ParamStore::values_equal(const ParamStore& other) const {
  if (other.entries_.size() != entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].values != other.entries_[i].values) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Network

Network::Network(std::string prefix, std::vector<LayerSpec> layers, std::uint64_t seed)
    : prefix_(std::move(prefix)), layers_(std::move(layers)), mask_seed_(seed) {
  check_chain(layers_);
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& s = layers_[l];
    const double a = std::sqrt(6.0 / static_cast<double>(s.in_dim + s.out_dim));
    std::uniform_real_distribution<double> init(-a, a);
    std::vector<double> w(static_cast<std::size_t>(s.in_dim) * s.out_dim);
    for (auto& v : w) v = init(rng);
    params_.add(weight_name(prefix_, l), std::move(w));
    params_.add(bias_name(prefix_, l), std::vector<double>(s.out_dim, 0.0));
  }
}

Network Network::zeros(std::string prefix, std::vector<LayerSpec> layers) {
  check_chain(layers);
  Network net;
  net.prefix_ = std::move(prefix);
  net.layers_ = std::move(layers);
  for (std::size_t l = 0; l < net.layers_.size(); ++l) {
    const auto& s = net.layers_[l];
    net.params_.add(weight_name(net.prefix_, l),
                    std::vector<double>(static_cast<std::size_t>(s.in_dim) * s.out_dim, 0.0));
    net.params_.add(bias_name(net.prefix_, l), std::vector<double>(s.out_dim, 0.0));
  }
  return net;
}

void Network::rename(std::string prefix) {
  prefix_ = std::move(prefix);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    params_.entries()[2 * l].name = weight_name(prefix_, l);
    params_.entries()[2 * l + 1].name = bias_name(prefix_, l);
  }
}

RowVector Network::fixed_mask(std::uint64_t mask_id, std::size_t layer) const {
  const auto& s = layers_.at(layer);
  RowVector mask = RowVector::Ones(s.out_dim);
  if (s.dropout_rate <= 0.0) return mask;
  std::seed_seq seq{static_cast<std::uint32_t>(mask_seed_), static_cast<std::uint32_t>(mask_seed_ >> 32),
                    static_cast<std::uint32_t>(mask_id), static_cast<std::uint32_t>(mask_id >> 32),
                    static_cast<std::uint32_t>(layer), 0x6d61736bU};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - s.dropout_rate);
  for (Eigen::Index k = 0; k < mask.size(); ++k) mask(k) = u(rng) < s.dropout_rate ? 0.0 : keep_scale;
  return mask;
}

ForwardResult Network::forward(const Matrix& x, Mode mode, MaskPolicy policy, std::mt19937_64* rng) const {
  if (layers_.empty()) throw ShapeError("forward on an empty network");
  if (x.cols() != input_dim()) {
    throw ShapeError("input has " + std::to_string(x.cols()) + " columns, network expects " +
                     std::to_string(input_dim()));
  }
  if (!x.allFinite()) throw DomainError("non-finite network input");

  ForwardResult result;
  result.tape.batch_size = x.rows();
  result.tape.layers.resize(layers_.size());
  Matrix h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& s = layers_[l];
    const auto& w = params_.entries()[2 * l].values;
    const auto& b = params_.entries()[2 * l + 1].values;
    ConstMatrixMap weight(w.data(), s.in_dim, s.out_dim);
    Eigen::Map<const RowVector> bias(b.data(), s.out_dim);

    LayerTape& t = result.tape.layers[l];
    t.pre = h * weight;
    t.pre.rowwise() += bias;
    Matrix out = s.activation == Activation::kRelu ? Matrix(t.pre.cwiseMax(0.0)) : t.pre;

    const bool active = mode == Mode::kTrain || (policy.fixed && policy.apply_in_eval);
    if (active && s.dropout_rate > 0.0) {
      if (policy.fixed) {
        const RowVector unit_mask = fixed_mask(policy.mask_id, l);
        t.mask = unit_mask.replicate(out.rows(), 1);
      } else {
        if (rng == nullptr) throw ConfigError("train-mode dropout needs a random generator");
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double keep_scale = 1.0 / (1.0 - s.dropout_rate);
        t.mask.resize(out.rows(), out.cols());
        for (Eigen::Index i = 0; i < t.mask.size(); ++i) {
          t.mask.data()[i] = u(*rng) < s.dropout_rate ? 0.0 : keep_scale;
        }
      }
      out = out.cwiseProduct(t.mask);
    }
    t.input = std::move(h);
    h = std::move(out);
  }
  result.output = std::move(h);
  return result;
}

Matrix Network::backward(const ForwardTape& tape, const Matrix& dout) {
  if (tape.layers.size() != layers_.size()) throw ShapeError("tape depth does not match network depth");
  if (dout.rows() != tape.batch_size || dout.cols() != output_dim()) {
    throw ShapeError("cotangent shape does not match network output");
  }
  Matrix grad = dout;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& s = layers_[l];
    const LayerTape& t = tape.layers[l];
    if (t.pre.rows() != tape.batch_size || t.pre.cols() != s.out_dim || t.input.cols() != s.in_dim) {
      throw ShapeError("tape layer " + std::to_string(l) + " does not match network");
    }
    if (t.mask.size() != 0) grad = grad.cwiseProduct(t.mask);
    if (s.activation == Activation::kRelu) {
      grad = grad.cwiseProduct((t.pre.array() > 0.0).cast<double>().matrix());
    }
    auto& we = params_.entries()[2 * l];
    auto& be = params_.entries()[2 * l + 1];
    MatrixMap dw(we.grads.data(), s.in_dim, s.out_dim);
    Eigen::Map<RowVector> db(be.grads.data(), s.out_dim);
    dw.noalias() += t.input.transpose() * grad;
    db += grad.colwise().sum();
    ConstMatrixMap weight(we.values.data(), s.in_dim, s.out_dim);
    grad = grad * weight.transpose();
  }
  return grad;
}

// ---------------------------------------------------------------------------
// softmax

ProbBatch softmax(const Matrix& logits) {
  if (!logits.allFinite()) throw DomainError("softmax of non-finite logits");
  ProbBatch p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    double z = 0.0;
    for (Eigen::Index k = 0; k < logits.cols(); ++k) {
      p(i, k) = std::exp(logits(i, k) - m);
      z += p(i, k);
    }
    p.row(i) /= z;
  }
  return p;
}

Matrix softmax_backward(const ProbBatch& p, const Matrix& dprobs) {
  if (p.rows() != dprobs.rows() || p.cols() != dprobs.cols()) throw ShapeError("softmax_backward shape mismatch");
  const Vector inner = p.cwiseProduct(dprobs).rowwise().sum();
  Matrix dz = dprobs;
  dz.colwise() -= inner;
  return p.cwiseProduct(dz);
}

// ---------------------------------------------------------------------------
// Sgd

Sgd::Sgd(SgdOptions options) : options_(options) {
  if (!(options_.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(options_.momentum >= 0.0 && options_.momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(options_.weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
}

void Sgd::step(ParamStore& store) {
  for (auto& e : store.entries()) {
    const double rate = options_.lr * e.lr_multiplier;
    std::vector<double>* vel = nullptr;
    if (options_.momentum != 0.0) {
      auto [it, inserted] = velocity_.try_emplace(e.name);
      if (inserted) it->second.assign(e.values.size(), 0.0);
      vel = &it->second;
    }
    for (std::size_t i = 0; i < e.values.size(); ++i) {
      double g = e.grads[i];
      if (options_.weight_decay != 0.0) g += options_.weight_decay * e.values[i];
      if (vel != nullptr) {
        double& v = (*vel)[i];
        v = options_.momentum * v + g;
        g = options_.nesterov ? g + options_.momentum * v : v;
      }
      e.values[i] -= rate * g;
      e.grads[i] = 0.0;
    }
  }
}

nlohmann::json Sgd::to_json() const {
  nlohmann::json j;
  j["lr"] = options_.lr;
  j["momentum"] = options_.momentum;
  j["nesterov"] = options_.nesterov;
  j["weight_decay"] = options_.weight_decay;
  nlohmann::json vel = nlohmann::json::array();
  for (const auto& [name, v] : velocity_) vel.push_back({{"name", name}, {"values", v}});
  j["velocities"] = std::move(vel);
  return j;
}

Sgd Sgd::from_json(const nlohmann::json& j) {
  SgdOptions o;
  o.lr = j.at("lr").get<double>();
  o.momentum = j.at("momentum").get<double>();
  o.nesterov = j.at("nesterov").get<bool>();
  o.weight_decay = j.at("weight_decay").get<double>();
  Sgd sgd(o);
  for (const auto& v : j.at("velocities")) {
    sgd.velocity_[v.at("name").get<std::string>()] = v.at("values").get<std::vector<double>>();
  }
  return sgd;
}

// ---------------------------------------------------------------------------
// checkpoints

nlohmann::json layer_spec_to_json(const LayerSpec& spec) {
  return {{"in_dim", spec.in_dim},
          {"out_dim", spec.out_dim},
          {"activation", std::string(to_string(spec.activation))},
          {"dropout_rate", spec.dropout_rate}};
}

LayerSpec layer_spec_from_json(const nlohmann::json& j) {
  LayerSpec s;
  s.in_dim = j.at("in_dim").get<int>();
  s.out_dim = j.at("out_dim").get<int>();
  s.activation = activation_from_string(j.at("activation").get<std::string>());
  s.dropout_rate = j.at("dropout_rate").get<double>();
  s.validate();
  return s;
}

nlohmann::json network_to_json(const Network& net, const Sgd* optimizer) {
  nlohmann::json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["prefix"] = net.prefix();
  j["mask_seed"] = net.mask_seed();
  nlohmann::json specs = nlohmann::json::array();
  for (const auto& s : net.layers()) specs.push_back(layer_spec_to_json(s));
  j["layer_specs"] = std::move(specs);
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : net.params().entries()) {
    entries.push_back({{"name", e.name}, {"lr_multiplier", e.lr_multiplier}, {"values", e.values}});
  }
  j["entries"] = std::move(entries);
  j["optimizer_state"] = optimizer != nullptr ? optimizer->to_json() : nlohmann::json(nullptr);
  return j;
}

Network network_from_json(const nlohmann::json& j) {
  const int version = j.at("format_version").get<int>();
  if (version != kCheckpointFormatVersion) {
    throw ConfigError("unsupported checkpoint format_version " + std::to_string(version));
  }
  std::vector<LayerSpec> specs;
  for (const auto& s : j.at("layer_specs")) specs.push_back(layer_spec_from_json(s));
  Network net = Network::zeros(j.at("prefix").get<std::string>(), std::move(specs));
  net.set_mask_seed(j.at("mask_seed").get<std::uint64_t>());
  const auto& entries = j.at("entries");
  if (entries.size() != net.params().entries().size()) throw ShapeError("checkpoint entry count mismatch");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = net.params().entries()[i];
    if (entries[i].at("name").get<std::string>() != e.name) {
      throw ShapeError("checkpoint entry '" + entries[i].at("name").get<std::string>() + "' out of order");
    }
    auto values = entries[i].at("values").get<std::vector<double>>();
    if (values.size() != e.values.size()) throw ShapeError("checkpoint entry '" + e.name + "' has wrong length");
    e.values = std::move(values);
    e.lr_multiplier = entries[i].at("lr_multiplier").get<double>();
    if (!(e.lr_multiplier > 0.0)) throw ConfigError("lr_multiplier must be positive");
  }
  return net;
}

}  // namespace hdmi
