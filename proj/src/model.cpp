// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "frappe/model.hpp"

#include <cmath>
#include <limits>

#include "frappe/error.hpp"
#include "frappe/rng.hpp"

namespace frappe {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::size_t count_parameters(std::size_t d, const std::vector<std::size_t>& hidden) {
  std::size_t total = 0;
  std::size_t fan_in = d;
  for (std::size_t h : hidden) {
    total += h * fan_in + h;
    fan_in = h;
  }
  return total + fan_in + 1;
}

}  // namespace

const char* to_string(ModuleKind kind) noexcept {
  switch (kind) {
    case ModuleKind::linear: return "linear";
    case ModuleKind::mlp1: return "mlp1";
    case ModuleKind::mlp3: return "mlp3";
  }
  return "linear";
}

ModuleKind parse_module_kind(const std::string& name) {
  if (name == "linear") return ModuleKind::linear;
  if (name == "mlp1") return ModuleKind::mlp1;
  if (name == "mlp3") return ModuleKind::mlp3;
  fail(ErrorKind::Config, "unknown module kind '" + name + "' (linear | mlp1 | mlp3)");
}

ScoreModule::ScoreModule(std::size_t input_dim, std::vector<std::size_t> hidden)
    : input_dim_(input_dim), hidden_(std::move(hidden)) {
  if (input_dim_ == 0) fail(ErrorKind::Dim, "module input dimension must be positive");
  for (std::size_t h : hidden_)
    if (h == 0) fail(ErrorKind::Config, "hidden width must be positive");
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(count_parameters(input_dim_, hidden_)));
}

ScoreModule ScoreModule::make(const ModuleSpec& spec, std::size_t input_dim) {
  switch (spec.kind) {
    case ModuleKind::linear: return ScoreModule(input_dim, {});
    case ModuleKind::mlp1: return ScoreModule(input_dim, {spec.hidden_width ? spec.hidden_width : 64});
    case ModuleKind::mlp3: {
      const std::size_t h = spec.hidden_width ? spec.hidden_width : 128;
      return ScoreModule(input_dim, {h, h, h});
    }
  }
  fail(ErrorKind::Config, "unknown module kind");
}

ModuleKind ScoreModule::kind() const {
  switch (hidden_.size()) {
    case 0: return ModuleKind::linear;
    case 1: return ModuleKind::mlp1;
    default: return ModuleKind::mlp3;
  }
}

void ScoreModule::set_parameters(const Eigen::VectorXd& params) {
  if (params.size() != params_.size())
    fail(ErrorKind::Dim, "expected " + std::to_string(params_.size()) + " parameters, got " +
                             std::to_string(params.size()));
  params_ = params;
}

void ScoreModule::initialize(std::uint64_t seed, bool zero_output) {
  params_.setZero();
  if (hidden_.empty()) return;
  Rng rng(seed);
  std::size_t offset = 0;
  std::size_t fan_in = input_dim_;
  for (std::size_t h : hidden_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t k = 0; k < h * fan_in + h; ++k)
      params_(static_cast<Eigen::Index>(offset + k)) = rng.uniform(-bound, bound);
    offset += h * fan_in + h;
    fan_in = h;
  }
  if (!zero_output) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t k = 0; k < fan_in + 1; ++k)
      params_(static_cast<Eigen::Index>(offset + k)) = rng.uniform(-bound, bound);
  }
}

void ScoreModule::check_batch(const Eigen::MatrixXd& batch) const {
  if (static_cast<std::size_t>(batch.cols()) != input_dim_)
    fail(ErrorKind::Dim, "batch has " + std::to_string(batch.cols()) + " columns, module expects " +
                             std::to_string(input_dim_));
}

Eigen::VectorXd ScoreModule::forward(const Eigen::MatrixXd& batch) const {
  check_batch(batch);
  const double* p = params_.data();
  if (hidden_.empty()) {
    const Eigen::Map<const Eigen::VectorXd> w(p, static_cast<Eigen::Index>(input_dim_));
    return (batch * w).array() + p[input_dim_];
  }
  Eigen::MatrixXd act;
  const Eigen::MatrixXd* in = &batch;
  std::size_t fan_in = input_dim_;
  for (std::size_t h : hidden_) {
    const auto H = static_cast<Eigen::Index>(h);
    const Eigen::Map<const RowMajor> W(p, H, static_cast<Eigen::Index>(fan_in));
    const Eigen::Map<const Eigen::VectorXd> b(p + h * fan_in, H);
    Eigen::MatrixXd z = (*in) * W.transpose();
    z.rowwise() += b.transpose();
    act = z.cwiseMax(0.0);
    in = &act;
    p += h * fan_in + h;
    fan_in = h;
  }
  const Eigen::Map<const Eigen::VectorXd> v(p, static_cast<Eigen::Index>(fan_in));
  return (act * v).array() + p[fan_in];
}

Eigen::VectorXd ScoreModule::vjp(const Eigen::MatrixXd& batch,
                                 const Eigen::VectorXd& upstream) const {
  check_batch(batch);
  if (upstream.size() != batch.rows())
    fail(ErrorKind::Dim, "upstream length " + std::to_string(upstream.size()) + " != batch rows " +
                             std::to_string(batch.rows()));
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
  if (hidden_.empty()) {
    const auto d = static_cast<Eigen::Index>(input_dim_);
    grad.head(d) = batch.transpose() * upstream;
    grad(d) = upstream.sum();
    return grad;
  }

  // Forward pass keeping activations; pre-activations are recovered from
  // the activation sign (relu'(z) = [z > 0] = [act > 0]).
  const std::size_t L = hidden_.size();
  std::vector<Eigen::MatrixXd> acts(L);
  std::vector<std::size_t> offsets(L + 1);
  {
    const double* p = params_.data();
    const Eigen::MatrixXd* in = &batch;
    std::size_t fan_in = input_dim_;
    std::size_t offset = 0;
    for (std::size_t l = 0; l < L; ++l) {
      const std::size_t h = hidden_[l];
      const auto H = static_cast<Eigen::Index>(h);
      offsets[l] = offset;
      const Eigen::Map<const RowMajor> W(p + offset, H, static_cast<Eigen::Index>(fan_in));
      const Eigen::Map<const Eigen::VectorXd> b(p + offset + h * fan_in, H);
      Eigen::MatrixXd z = (*in) * W.transpose();
      z.rowwise() += b.transpose();
      acts[l] = z.cwiseMax(0.0);
      in = &acts[l];
      offset += h * fan_in + h;
      fan_in = h;
    }
    offsets[L] = offset;
  }

  const double* p = params_.data();
  double* g = grad.data();
  const std::size_t last = hidden_.back();
  const auto Hl = static_cast<Eigen::Index>(last);
  Eigen::Map<Eigen::VectorXd>(g + offsets[L], Hl) = acts[L - 1].transpose() * upstream;
  g[offsets[L] + last] = upstream.sum();

  const Eigen::Map<const Eigen::VectorXd> v(p + offsets[L], Hl);
  Eigen::MatrixXd delta = upstream * v.transpose();  // n x H_last
  for (std::size_t l = L; l-- > 0;) {
    delta = (acts[l].array() > 0.0).select(delta, 0.0);
    const std::size_t h = hidden_[l];
    const std::size_t fan_in = l == 0 ? input_dim_ : hidden_[l - 1];
    const auto H = static_cast<Eigen::Index>(h);
    const auto F = static_cast<Eigen::Index>(fan_in);
    const Eigen::MatrixXd& prev = l == 0 ? batch : acts[l - 1];
    Eigen::Map<RowMajor>(g + offsets[l], H, F) = delta.transpose() * prev;
    Eigen::Map<Eigen::VectorXd>(g + offsets[l] + h * fan_in, H) = delta.colwise().sum().transpose();
    if (l > 0) {
      const Eigen::Map<const RowMajor> W(p + offsets[l], H, F);
      delta = delta * W;
    }
  }
  return grad;
}

double ScoreModule::min_abs_preactivation(const Eigen::MatrixXd& batch) const {
  check_batch(batch);
  double best = std::numeric_limits<double>::infinity();
  const double* p = params_.data();
  Eigen::MatrixXd act = batch;
  std::size_t fan_in = input_dim_;
  for (std::size_t h : hidden_) {
    const auto H = static_cast<Eigen::Index>(h);
    const Eigen::Map<const RowMajor> W(p, H, static_cast<Eigen::Index>(fan_in));
    const Eigen::Map<const Eigen::VectorXd> b(p + h * fan_in, H);
    Eigen::MatrixXd z = act * W.transpose();
    z.rowwise() += b.transpose();
    best = std::min(best, z.cwiseAbs().minCoeff());
    act = z.cwiseMax(0.0);
    p += h * fan_in + h;
    fan_in = h;
  }
  return best;
}

nlohmann::json ScoreModule::to_json() const {
  nlohmann::json doc;
  doc["kind"] = frappe::to_string(kind());
  doc["dims"] = {{"input", input_dim_}, {"hidden", hidden_}};
  doc["parameters"] = std::vector<double>(params_.data(), params_.data() + params_.size());
  return doc;
}

ScoreModule ScoreModule::from_json(const nlohmann::json& doc) {
  try {
    const ModuleKind kind = parse_module_kind(doc.at("kind").get<std::string>());
    const auto& dims = doc.at("dims");
    const auto input = dims.at("input").get<std::size_t>();
    auto hidden = dims.at("hidden").get<std::vector<std::size_t>>();
    const std::size_t expected_layers = kind == ModuleKind::linear ? 0 : kind == ModuleKind::mlp1 ? 1 : 3;
    if (hidden.size() != expected_layers)
      fail(ErrorKind::Schema, std::string("module kind '") + frappe::to_string(kind) + "' needs " +
                                  std::to_string(expected_layers) + " hidden layers");
    ScoreModule module(input, std::move(hidden));
    const auto params = doc.at("parameters").get<std::vector<double>>();
    if (params.size() != module.parameter_count())
      fail(ErrorKind::Schema, "module expects " + std::to_string(module.parameter_count()) +
                                  " parameters, file has " + std::to_string(params.size()));
    module.params_ = Eigen::Map<const Eigen::VectorXd>(params.data(), static_cast<Eigen::Index>(params.size()));
    return module;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Schema, std::string("malformed module document: ") + e.what());
  }
}

FrozenModule freeze(ScoreModule module) {
  return FrozenModule{std::make_shared<const ScoreModule>(std::move(module))};
}

Eigen::VectorXd base_scores(const BaseScorer& base, const DatasetTable& table) {
  if (const auto* frozen = std::get_if<FrozenModule>(&base)) return frozen->module->forward(table.features);
  if (!table.base_score) fail(ErrorKind::MissingBaseScores, "table has no base_score column");
  return *table.base_score;
}

Eigen::VectorXd fair_scores(const FairModel& model, const DatasetTable& table) {
  return base_scores(model.base, table) + model.posthoc.forward(table.features);
}

Eigen::VectorXd predict_labels(const Eigen::VectorXd& scores, TaskKind task) {
  if (task == TaskKind::regression) return scores;
  return (scores.array() > 0.0).cast<double>();
}

}  // namespace frappe
