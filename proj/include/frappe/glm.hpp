// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include <Eigen/Dense>
#include <json.hpp>

#include "frappe/dataset.hpp"
#include "frappe/divergence.hpp"
#include "frappe/regularizers.hpp"

namespace frappe {

/// A GLM fitting problem: design rows x_i (optionally with a trailing
/// intercept column), responses y_i, and the annotated rows feeding the
/// fairness penalty. Scores entering the penalty are theta.x.
class GlmProblem {
 public:
  GlmProblem(const DatasetTable& table, GlmFamily family, bool intercept = true);

  GlmFamily family() const { return family_; }
  const Eigen::MatrixXd& design() const { return design_; }
  const Eigen::VectorXd& response() const { return response_; }
  std::size_t dim() const { return static_cast<std::size_t>(design_.cols()); }

  /// Abar(theta) = mean_i A(theta.x_i).
  double mean_partition(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd mean_partition_gradient(const Eigen::VectorXd& theta) const;
  /// mean_i phi(x_i, y_i).
  const Eigen::VectorXd& mean_statistic() const { return mean_statistic_; }

  /// mean_i [A(theta.x_i) - theta.phi(x_i, y_i)].
  double mean_loss(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd mean_loss_gradient(const Eigen::VectorXd& theta) const;
  Eigen::MatrixXd mean_loss_hessian(const Eigen::VectorXd& theta) const;

  /// Penalty of the annotated rows' scores and its theta-gradient.
  double penalty(const Eigen::VectorXd& theta, const RegularizerSpec& spec,
                 Eigen::VectorXd* gradient = nullptr) const;

 private:
  GlmFamily family_;
  Eigen::MatrixXd design_;
  Eigen::VectorXd response_;
  Eigen::VectorXd mean_statistic_;
  Eigen::MatrixXd sens_design_;
  Eigen::VectorXd sens_labels_;
  std::vector<std::optional<double>> sens_values_;
};

struct InnerFit {
  Eigen::VectorXd theta;
  double gradient_sup_norm = 0.0;
  std::size_t iterations = 0;
};

/// Newton iterations on the mean loss from theta = 0 until the gradient
/// sup-norm stops improving or max_iterations is reached.
InnerFit fit_glm_newton(const GlmProblem& problem, std::size_t max_iterations = 100);

/// L_IP: mean GLM loss + lambda * penalty.
double lip_value(const GlmProblem& problem, const Eigen::VectorXd& theta, double lambda,
                 const std::optional<RegularizerSpec>& regularizer);

/// L_PP: Bregman divergence to theta_base + lambda * penalty.
double lpp_value(const GlmProblem& problem, const Eigen::VectorXd& theta,
                 const Eigen::VectorXd& theta_base, double lambda,
                 const std::optional<RegularizerSpec>& regularizer);

/// theta_base . mean phi - Abar(theta_base).
double closed_form_constant(const GlmProblem& problem, const Eigen::VectorXd& theta_base);

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double gradient_sup_norm = 0.0;
  std::size_t iterations = 0;
};

/// Limited-memory BFGS with backtracking (Armijo) line search.
LbfgsResult minimize_lbfgs(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& objective,
    Eigen::VectorXd x0, std::size_t max_iterations = 2000, double gradient_tolerance = 1e-10,
    std::size_t history = 10);

struct EquivSettings {
  GlmFamily family = GlmFamily::logistic;
  double lambda = 1.0;
  std::optional<RegularizerSpec> regularizer;
  std::size_t n_probe = 100;
  double radius = 2.0;
  std::uint64_t seed = 0;
  double inner_tolerance = 1e-9;
  std::size_t max_newton_iterations = 100;
  bool require_inner_convergence = true;
  std::size_t argmin_inits = 3;
  bool intercept = true;
};

struct EquivReport {
  double lambda = 0.0;
  std::size_t n_probe = 0;
  double max_constant_deviation = 0.0;
  double c_empirical = 0.0;
  double c_closed_form = 0.0;
  double argmin_distance = 0.0;
  GlmFamily family = GlmFamily::logistic;
  double inner_gradient_sup_norm = 0.0;
};

nlohmann::json to_json(const EquivReport& report);

/// Fits theta_base, probes L_PP - L_IP on a box of the given radius around
/// it, and compares the minimizers of both objectives from several random
/// starts. Throws InnerNotConverged if the fit misses inner_tolerance and
/// require_inner_convergence is set.
EquivReport verify_equivalence(const DatasetTable& table, const EquivSettings& settings);

}  // namespace frappe
