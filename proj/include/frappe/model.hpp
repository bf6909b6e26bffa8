// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "frappe/dataset.hpp"

namespace frappe {

enum class ModuleKind { linear, mlp1, mlp3 };

const char* to_string(ModuleKind kind) noexcept;
ModuleKind parse_module_kind(const std::string& name);

/// Architecture request: kind plus hidden width (ignored for linear).
struct ModuleSpec {
  ModuleKind kind = ModuleKind::linear;
  std::size_t hidden_width = 0;  // 0 = default for the kind (64 / 128)
};

class Rng;

/// Scalar-output scoring function: linear, or a relu perceptron with one or
/// three hidden layers. Parameters live in one flat vector laid out as, per
/// hidden layer, (weights row-major H x fan_in, biases H), then (output
/// weights, output bias). A linear module is the zero-hidden-layer case.
class ScoreModule {
 public:
  ScoreModule() = default;
  ScoreModule(std::size_t input_dim, std::vector<std::size_t> hidden);

  static ScoreModule make(const ModuleSpec& spec, std::size_t input_dim);

  ModuleKind kind() const;
  std::size_t input_dim() const { return input_dim_; }
  const std::vector<std::size_t>& hidden() const { return hidden_; }
  std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }

  const Eigen::VectorXd& parameters() const { return params_; }
  Eigen::VectorXd& mutable_parameters() { return params_; }
  void set_parameters(const Eigen::VectorXd& params);

  /// Linear: zeros. Hidden layers: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  /// The output layer is zeroed when zero_output is set, otherwise drawn
  /// like a hidden layer.
  void initialize(std::uint64_t seed, bool zero_output);

  Eigen::VectorXd forward(const Eigen::MatrixXd& batch) const;

  /// d(sum_i upstream_i * score_i)/d(parameters), relu'(0) = 0.
  Eigen::VectorXd vjp(const Eigen::MatrixXd& batch, const Eigen::VectorXd& upstream) const;

  /// Smallest |pre-activation| over the batch (infinity for linear modules).
  /// Gradient checks use it to skip draws that sit on a relu kink.
  double min_abs_preactivation(const Eigen::MatrixXd& batch) const;

  nlohmann::json to_json() const;
  static ScoreModule from_json(const nlohmann::json& doc);

 private:
  void check_batch(const Eigen::MatrixXd& batch) const;

  std::size_t input_dim_ = 0;
  std::vector<std::size_t> hidden_;
  Eigen::VectorXd params_;
};

struct FrozenModule {
  std::shared_ptr<const ScoreModule> module;
};

/// Scores come from the table's base_score column.
struct ScoreColumn {};

using BaseScorer = std::variant<FrozenModule, ScoreColumn>;

FrozenModule freeze(ScoreModule module);

Eigen::VectorXd base_scores(const BaseScorer& base, const DatasetTable& table);

struct FairModel {
  BaseScorer base;
  ScoreModule posthoc;
  TaskKind task_kind = TaskKind::binary_classification;
};

/// base score + posthoc(x), row by row.
Eigen::VectorXd fair_scores(const FairModel& model, const DatasetTable& table);

/// Binary: 1 iff score > 0 (ties go to class 0). Regression: identity.
Eigen::VectorXd predict_labels(const Eigen::VectorXd& scores, TaskKind task);

}  // namespace frappe
