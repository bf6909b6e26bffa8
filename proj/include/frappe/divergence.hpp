// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include <Eigen/Dense>

namespace frappe {

struct DivergenceSpec {
  enum class Kind { kl_bernoulli, mse };
  Kind kind = Kind::kl_bernoulli;
  bool reversed = false;  // KL(fair || base) instead of KL(base || fair)
};

struct DivergenceResult {
  double value = 0.0;
  Eigen::VectorXd gradient;  // w.r.t. the fair scores
};

/// mean_i KL(Bern(sigmoid(base_i)) || Bern(sigmoid(fair_i))), or the reverse.
DivergenceResult kl_bernoulli(const Eigen::VectorXd& base_logits,
                              const Eigen::VectorXd& fair_logits, bool reversed = false);

DivergenceResult mse_divergence(const Eigen::VectorXd& base_scores,
                                const Eigen::VectorXd& fair_scores);

DivergenceResult output_divergence(const DivergenceSpec& spec, const Eigen::VectorXd& base,
                                   const Eigen::VectorXd& fair);

double softplus(double x);
double sigmoid(double x);

enum class GlmFamily { logistic, linear };

const char* to_string(GlmFamily family) noexcept;
GlmFamily parse_glm_family(const std::string& name);

/// Per-sample log-partition A(z) as a function of z = theta.x, and its first
/// two derivatives. Logistic: softplus. Linear: z^2 (y^2 dropped).
double glm_partition(GlmFamily family, double z);
double glm_partition_d1(GlmFamily family, double z);
double glm_partition_d2(GlmFamily family, double z);

/// Bregman divergence of the data-averaged partition,
/// Abar(theta) - Abar(base) - grad Abar(base).(theta - base).
/// design is n x D (rows x_i); theta and theta_base have length D.
double bregman_glm(const Eigen::VectorXd& theta, const Eigen::VectorXd& theta_base,
                   const Eigen::MatrixXd& design, GlmFamily family);

}  // namespace frappe
