// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>

#include <Eigen/Dense>
#include <json.hpp>

namespace frappe {

enum class Kernel { gaussian, laplace };
enum class MinDiffMode { eqopp, eqodds };
enum class ScoreSpace { probability, logit };

/// MMD between the score distributions of the two sensitive groups, within
/// Y=0 (eqopp) or within Y=0 and Y=1 summed (eqodds).
struct MinDiffMMD {
  Kernel kernel = Kernel::gaussian;
  double bandwidth = 0.5;
  MinDiffMode mode = MinDiffMode::eqopp;
  ScoreSpace score_space = ScoreSpace::probability;
};

/// Statistical-parity gap with the hard threshold smoothed by a normal CDF.
struct KdeSP {
  double bandwidth = 0.1;
  double threshold = 0.5;
};

/// Plug-in chi-square divergence between the joint KDE of (score, attribute)
/// and the product of its marginals, on a grid over [-3, 3]^2 of
/// standardized values.
struct Chi2Cond {
  std::size_t grid_size = 32;
  std::optional<std::pair<double, double>> fixed_bandwidth;  // (h_score, h_attr); nullopt = silverman
  bool conditional_on_label = false;
};

using RegularizerSpec = std::variant<MinDiffMMD, KdeSP, Chi2Cond>;

void validate(const RegularizerSpec& spec);
nlohmann::json to_json(const RegularizerSpec& spec);
RegularizerSpec regularizer_from_json(const nlohmann::json& doc);

struct MmdResult {
  double value = 0.0;
  Eigen::VectorXd grad_p;
  Eigen::VectorXd grad_q;
};

/// Biased (V-statistic) squared MMD with gradients for both samples. Gaussian
/// kernels on samples whose joint range is within 3 bandwidths use a
/// truncated Taylor (fast Gauss transform) expansion accurate to double
/// precision; everything else is the direct double sum.
MmdResult mmd2(std::span<const double> p, std::span<const double> q, Kernel kernel,
               double bandwidth);

/// Direct O(|p||q|) evaluation, used as the reference path.
MmdResult mmd2_direct(std::span<const double> p, std::span<const double> q, Kernel kernel,
                      double bandwidth);

struct PenaltyResult {
  double value = 0.0;
  Eigen::VectorXd gradient;  // d value / d score, zero on rows without an annotation
};

using SensitiveColumn = std::span<const std::optional<double>>;

PenaltyResult mindiff_penalty(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels,
                              SensitiveColumn sensitive, const MinDiffMMD& spec);

/// scores are probabilities; penalty = sum_a |P_a - P_all|.
PenaltyResult kde_sp_penalty(const Eigen::VectorXd& probabilities, SensitiveColumn sensitive,
                             double bandwidth, double threshold);

PenaltyResult chi2_cond_penalty(const Eigen::VectorXd& scores, SensitiveColumn sensitive,
                                const Eigen::VectorXd& labels, const Chi2Cond& spec);

/// Penalty of raw model outputs (logits for classification). KdeSP is
/// evaluated on sigmoid(scores) with the chain rule applied.
PenaltyResult fairness_penalty(const RegularizerSpec& spec, const Eigen::VectorXd& scores,
                               const Eigen::VectorXd& labels, SensitiveColumn sensitive);

}  // namespace frappe
