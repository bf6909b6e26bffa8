// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "frappe/dataset.hpp"
#include "frappe/model.hpp"

namespace frappe {

using SensitiveView = std::span<const std::optional<double>>;

// Rows without a sensitive annotation are ignored by every group metric.

/// |P(f != Y | Y=0, A=0) - P(f != Y | Y=0, A=1)|.
double fpr_gap(const Eigen::VectorXd& predictions, const Eigen::VectorXd& labels,
               SensitiveView sensitive);

/// |P(f = 1 | Y=1, A=0) - P(f = 1 | Y=1, A=1)|.
double tpr_gap(const Eigen::VectorXd& predictions, const Eigen::VectorXd& labels,
               SensitiveView sensitive);

enum class SpAggregate { sum, max };

/// sum_a |P(f=1 | A=a) - P(f=1)| over observed categories (or the max).
double sp_gap(const Eigen::VectorXd& predictions, SensitiveView sensitive,
              SpAggregate aggregate = SpAggregate::sum);

/// (TPR gap + FPR gap) / 2.
double meo(const Eigen::VectorXd& predictions, const Eigen::VectorXd& labels,
           SensitiveView sensitive);

/// Histogram estimate of the HGR maximal correlation: quantile-bin scores and
/// attributes into a bins x bins table, normalize by the margins, and take
/// the second singular value. With labels, the max over label values.
double hgr_inf(const Eigen::VectorXd& scores, SensitiveView sensitive,
               const std::optional<Eigen::VectorXd>& labels, std::size_t bins = 8);

/// Second singular value of P_ij / sqrt(r_i c_j) over nonempty margins.
double hgr_from_table(const Eigen::MatrixXd& joint_counts);

/// Misclassification rate (binary) or mean squared error (regression).
double prediction_error(const Eigen::VectorXd& predictions, const Eigen::VectorXd& labels,
                        TaskKind task);

/// One (lambda, seed) evaluation record.
struct TradeoffPoint {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  double test_error = 0.0;
  double fpr_gap = 0.0;
  double sp_gap = 0.0;
  double meo = 0.0;
  double hgr_inf = 0.0;
  double train_penalty = 0.0;
  std::size_t epochs_run = 0;
};

enum class TradeoffField { test_error, fpr_gap, sp_gap, meo, hgr_inf, train_penalty };

double field_value(const TradeoffPoint& point, TradeoffField field);
TradeoffField parse_tradeoff_field(const std::string& name);

/// Non-dominated points in (error_key, fairness_key), both minimized, sorted
/// stably by error. Of exact duplicates only the first is kept.
std::vector<TradeoffPoint> pareto_filter(std::span<const TradeoffPoint> points,
                                         TradeoffField error_key, TradeoffField fairness_key);

std::string tradeoff_csv_header();
std::string to_csv_row(const TradeoffPoint& point);
std::string to_csv(std::span<const TradeoffPoint> points);

/// Metrics of a score vector on a table. Group metrics that do not apply
/// (regression task, non-binary attribute) are NaN.
TradeoffPoint evaluate_scores(const Eigen::VectorXd& scores, const DatasetTable& table);

/// Spearman correlation with average ranks for ties.
struct SpearmanResult {
  double rho = 0.0;
  bool degenerate = false;
};
SpearmanResult spearman(const Eigen::VectorXd& x, const Eigen::VectorXd& y);
Eigen::VectorXd average_ranks(const Eigen::VectorXd& values);

struct CorrelationRow {
  std::string feature;
  std::string sensitive_value;  // "all" for the unconditional coefficient
  double abs_spearman = 0.0;
  bool degenerate = false;
};

/// |Spearman(T(x), x_j)| per feature, within each sensitive value and overall.
std::vector<CorrelationRow> posthoc_correlation_analysis(const ScoreModule& posthoc,
                                                         const DatasetTable& table);
std::string to_csv(std::span<const CorrelationRow> rows);

}  // namespace frappe
