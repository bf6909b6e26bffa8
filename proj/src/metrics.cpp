// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "frappe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "frappe/error.hpp"
#include "format.hpp"

namespace frappe {

namespace {

void check_length(Eigen::Index n, Eigen::Index m, const char* what) {
  if (n != m) fail(ErrorKind::Dim, std::string(what) + ": inputs have different lengths");
}

// Positive-prediction rate within the annotated rows with A == a and, when
// given, Y == y.
double positive_rate(const Eigen::VectorXd& predictions, const Eigen::VectorXd* labels, double y,
                     SensitiveView sensitive, double a, const char* cell) {
  double positives = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < predictions.size(); ++i) {
    const auto& s = sensitive[static_cast<std::size_t>(i)];
    if (!s || *s != a) continue;
    if (labels && (*labels)(i) != y) continue;
    ++count;
    if (predictions(i) == 1.0) positives += 1.0;
  }
  if (count == 0) fail(ErrorKind::EmptyGroup, std::string("cell ") + cell + " is empty");
  return positives / static_cast<double>(count);
}

std::vector<int> quantile_bins(const std::vector<double>& values, std::size_t bins) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<int> out(n);
  std::size_t less = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0 && values[order[k]] != values[order[k - 1]]) less = k;
    // Ties share the bin of their first occurrence.
    out[order[k]] = static_cast<int>(std::min(bins - 1, bins * less / n));
  }
  return out;
}

double hgr_of_rows(const std::vector<double>& s, const std::vector<double>& a, std::size_t bins) {
  const auto bs = quantile_bins(s, bins);
  const auto ba = quantile_bins(a, bins);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(bins), static_cast<Eigen::Index>(bins));
  for (std::size_t i = 0; i < s.size(); ++i) counts(bs[i], ba[i]) += 1.0;
  return hgr_from_table(counts);
}

}  // namespace

double fpr_gap(const Eigen::VectorXd& predictions, const Eigen::VectorXd& labels,
               SensitiveView sensitive) {
  check_length(predictions.size(), labels.size(), "fpr_gap");
  check_length(predictions.size(), static_cast<Eigen::Index>(sensitive.size()), "fpr_gap");
  const double r0 = positive_rate(predictions, &labels, 0.0, sensitive, 0.0, "(Y=0, A=0)");
  const double r1 = positive_rate(predictions, &labels, 0.0, sensitive, 1.0, "(Y=0, A=1)");
  return std::abs(r0 - r1);
}

double tpr_gap(const Eigen::VectorXd& predictions, const Eigen::VectorXd& labels,
               SensitiveView sensitive) {
  check_length(predictions.size(), labels.size(), "tpr_gap");
  check_length(predictions.size(), static_cast<Eigen::Index>(sensitive.size()), "tpr_gap");
  const double r0 = positive_rate(predictions, &labels, 1.0, sensitive, 0.0, "(Y=1, A=0)");
  const double r1 = positive_rate(predictions, &labels, 1.0, sensitive, 1.0, "(Y=1, A=1)");
  return std::abs(r0 - r1);
}

double sp_gap(const Eigen::VectorXd& predictions, SensitiveView sensitive, SpAggregate aggregate) {
  check_length(predictions.size(), static_cast<Eigen::Index>(sensitive.size()), "sp_gap");
  std::map<double, std::pair<double, std::size_t>> groups;
  double positives = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < predictions.size(); ++i) {
    const auto& s = sensitive[static_cast<std::size_t>(i)];
    if (!s) continue;
    const double hit = predictions(i) == 1.0 ? 1.0 : 0.0;
    auto& g = groups[*s];
    g.first += hit;
    g.second += 1;
    positives += hit;
    ++count;
  }
  if (count == 0) fail(ErrorKind::EmptyGroup, "sp_gap: no annotated rows");
  const double overall = positives / static_cast<double>(count);
  double total = 0.0;
  for (const auto& [a, g] : groups) {
    const double dev = std::abs(g.first / static_cast<double>(g.second) - overall);
    total = aggregate == SpAggregate::sum ? total + dev : std::max(total, dev);
  }
  return total;
}

double meo(const Eigen::VectorXd& predictions, const Eigen::VectorXd& labels,
           SensitiveView sensitive) {
  return 0.5 * (tpr_gap(predictions, labels, sensitive) + fpr_gap(predictions, labels, sensitive));
}

double hgr_from_table(const Eigen::MatrixXd& joint_counts) {
  const double total = joint_counts.sum();
  if (!(total > 0.0)) return 0.0;
  const Eigen::MatrixXd p = joint_counts / total;
  const Eigen::VectorXd r = p.rowwise().sum();
  const Eigen::VectorXd c = p.colwise().sum().transpose();
  std::vector<Eigen::Index> rows, cols;
  for (Eigen::Index i = 0; i < r.size(); ++i)
    if (r(i) > 0.0) rows.push_back(i);
  for (Eigen::Index j = 0; j < c.size(); ++j)
    if (c(j) > 0.0) cols.push_back(j);
  if (rows.size() < 2 || cols.size() < 2) return 0.0;
  Eigen::MatrixXd q(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          p(rows[i], cols[j]) / std::sqrt(r(rows[i]) * c(cols[j]));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(q);
  const auto& sv = svd.singularValues();
  return std::clamp(sv(1), 0.0, 1.0);
}

double hgr_inf(const Eigen::VectorXd& scores, SensitiveView sensitive,
               const std::optional<Eigen::VectorXd>& labels, std::size_t bins) {
  check_length(scores.size(), static_cast<Eigen::Index>(sensitive.size()), "hgr_inf");
  if (labels) check_length(scores.size(), labels->size(), "hgr_inf");
  if (bins < 2) fail(ErrorKind::Config, "hgr_inf needs at least 2 bins");
  std::map<double, std::pair<std::vector<double>, std::vector<double>>> cells;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    const auto& a = sensitive[static_cast<std::size_t>(i)];
    if (!a) continue;
    auto& cell = cells[labels ? (*labels)(i) : 0.0];
    cell.first.push_back(scores(i));
    cell.second.push_back(*a);
  }
  if (cells.empty()) fail(ErrorKind::InsufficientSample, "hgr_inf: no annotated rows");
  double best = 0.0;
  for (const auto& [y, cell] : cells) {
    if (cell.first.size() < bins)
      fail(ErrorKind::InsufficientSample, "hgr_inf: conditioning cell has " +
                                              std::to_string(cell.first.size()) + " rows, needs " +
                                              std::to_string(bins));
    best = std::max(best, hgr_of_rows(cell.first, cell.second, bins));
  }
  return best;
}

double prediction_error(const Eigen::VectorXd& predictions, const Eigen::VectorXd& labels,
                        TaskKind task) {
  check_length(predictions.size(), labels.size(), "prediction_error");
  if (predictions.size() == 0) fail(ErrorKind::Dim, "prediction_error: empty input");
  if (task == TaskKind::regression) return (predictions - labels).squaredNorm() / static_cast<double>(labels.size());
  return (predictions.array() != labels.array()).cast<double>().mean();
}

double field_value(const TradeoffPoint& point, TradeoffField field) {
  switch (field) {
    case TradeoffField::test_error: return point.test_error;
    case TradeoffField::fpr_gap: return point.fpr_gap;
    case TradeoffField::sp_gap: return point.sp_gap;
    case TradeoffField::meo: return point.meo;
    case TradeoffField::hgr_inf: return point.hgr_inf;
    case TradeoffField::train_penalty: return point.train_penalty;
  }
  return 0.0;
}

TradeoffField parse_tradeoff_field(const std::string& name) {
  if (name == "test_error" || name == "error") return TradeoffField::test_error;
  if (name == "fpr_gap") return TradeoffField::fpr_gap;
  if (name == "sp_gap") return TradeoffField::sp_gap;
  if (name == "meo") return TradeoffField::meo;
  if (name == "hgr_inf") return TradeoffField::hgr_inf;
  if (name == "train_penalty") return TradeoffField::train_penalty;
  fail(ErrorKind::Config, "unknown tradeoff field '" + name + "'");
}

std::vector<TradeoffPoint> pareto_filter(std::span<const TradeoffPoint> points,
                                         TradeoffField error_key, TradeoffField fairness_key) {
  std::vector<TradeoffPoint> kept;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double ei = field_value(points[i], error_key);
    const double fi = field_value(points[i], fairness_key);
    bool dominated = false;
    for (std::size_t j = 0; j < points.size() && !dominated; ++j) {
      if (j == i) continue;
      const double ej = field_value(points[j], error_key);
      const double fj = field_value(points[j], fairness_key);
      if (ej <= ei && fj <= fi && (ej < ei || fj < fi)) dominated = true;
      // Of equal points the earliest survives.
      if (ej == ei && fj == fi && j < i) dominated = true;
    }
    if (!dominated) kept.push_back(points[i]);
  }
  std::stable_sort(kept.begin(), kept.end(), [&](const auto& a, const auto& b) {
    return field_value(a, error_key) < field_value(b, error_key);
  });
  return kept;
}

std::string tradeoff_csv_header() {
  return "lambda,seed,test_error,fpr_gap,sp_gap,meo,hgr_inf,train_penalty,epochs_run";
}

std::string to_csv_row(const TradeoffPoint& p) {
  using detail::format_double;
  return format_double(p.lambda) + "," + std::to_string(p.seed) + "," + format_double(p.test_error) +
         "," + format_double(p.fpr_gap) + "," + format_double(p.sp_gap) + "," + format_double(p.meo) +
         "," + format_double(p.hgr_inf) + "," + format_double(p.train_penalty) + "," +
         std::to_string(p.epochs_run);
}

std::string to_csv(std::span<const TradeoffPoint> points) {
  std::string out = tradeoff_csv_header() + "\n";
  for (const auto& p : points) out += to_csv_row(p) + "\n";
  return out;
}

TradeoffPoint evaluate_scores(const Eigen::VectorXd& scores, const DatasetTable& table) {
  check_length(scores.size(), static_cast<Eigen::Index>(table.rows()), "evaluate_scores");
  TradeoffPoint p;
  const Eigen::VectorXd pred = predict_labels(scores, table.task_kind);
  p.test_error = prediction_error(pred, table.label, table.task_kind);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  bool binary_attr = table.sensitive_kind == SensitiveKind::categorical;
  for (const auto& a : table.sensitive)
    if (a && *a != 0.0 && *a != 1.0) binary_attr = false;
  if (table.task_kind == TaskKind::binary_classification && binary_attr) {
    p.fpr_gap = fpr_gap(pred, table.label, table.sensitive);
    p.meo = meo(pred, table.label, table.sensitive);
  } else {
    p.fpr_gap = nan;
    p.meo = nan;
  }
  p.sp_gap = table.task_kind == TaskKind::binary_classification && table.sensitive_kind == SensitiveKind::categorical
                 ? sp_gap(pred, table.sensitive)
                 : nan;
  std::optional<Eigen::VectorXd> labels;
  if (table.task_kind == TaskKind::binary_classification) labels = table.label;
  p.hgr_inf = hgr_inf(scores, table.sensitive, labels);
  return p;
}

Eigen::VectorXd average_ranks(const Eigen::VectorXd& values) {
  const auto n = values.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values(a) < values(b); });
  Eigen::VectorXd ranks(n);
  Eigen::Index k = 0;
  while (k < n) {
    Eigen::Index end = k;
    while (end + 1 < n && values(order[static_cast<std::size_t>(end + 1)]) == values(order[static_cast<std::size_t>(k)])) ++end;
    const double avg = 0.5 * static_cast<double>(k + end) + 1.0;
    for (Eigen::Index t = k; t <= end; ++t) ranks(order[static_cast<std::size_t>(t)]) = avg;
    k = end + 1;
  }
  return ranks;
}

SpearmanResult spearman(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  check_length(x.size(), y.size(), "spearman");
  if (x.size() < 2) return {0.0, true};
  const Eigen::VectorXd rx = average_ranks(x);
  const Eigen::VectorXd ry = average_ranks(y);
  const Eigen::ArrayXd cx = rx.array() - rx.mean();
  const Eigen::ArrayXd cy = ry.array() - ry.mean();
  const double sxx = cx.square().sum();
  const double syy = cy.square().sum();
  if (sxx <= 0.0 || syy <= 0.0) return {0.0, true};
  return {(cx * cy).sum() / std::sqrt(sxx * syy), false};
}

std::vector<CorrelationRow> posthoc_correlation_analysis(const ScoreModule& posthoc,
                                                         const DatasetTable& table) {
  if (table.sensitive_kind != SensitiveKind::categorical)
    fail(ErrorKind::Config, "posthoc analysis needs a categorical sensitive attribute");
  const Eigen::VectorXd t = posthoc.forward(table.features);
  std::map<double, std::vector<Eigen::Index>> groups;
  for (Eigen::Index i = 0; i < t.size(); ++i)
    if (const auto& a = table.sensitive[static_cast<std::size_t>(i)]) groups[*a].push_back(i);
  if (groups.empty()) fail(ErrorKind::EmptyGroup, "posthoc analysis: no annotated rows");

  std::vector<CorrelationRow> rows;
  for (Eigen::Index j = 0; j < table.features.cols(); ++j) {
    const std::string& name = table.feature_names[static_cast<std::size_t>(j)];
    for (const auto& [a, idx] : groups) {
      Eigen::VectorXd tv(static_cast<Eigen::Index>(idx.size()));
      Eigen::VectorXd xv(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t k = 0; k < idx.size(); ++k) {
        tv(static_cast<Eigen::Index>(k)) = t(idx[k]);
        xv(static_cast<Eigen::Index>(k)) = table.features(idx[k], j);
      }
      const auto s = spearman(tv, xv);
      rows.push_back({name, detail::format_double(a), std::abs(s.rho), s.degenerate});
    }
    const auto s = spearman(t, table.features.col(j));
    rows.push_back({name, "all", std::abs(s.rho), s.degenerate});
  }
  return rows;
}

std::string to_csv(std::span<const CorrelationRow> rows) {
  std::string out = "feature,sensitive_value,abs_spearman,degenerate\n";
  for (const auto& r : rows)
    out += r.feature + "," + r.sensitive_value + "," + detail::format_double(r.abs_spearman) + "," +
           (r.degenerate ? "1" : "0") + "\n";
  return out;
}

}  // namespace frappe
