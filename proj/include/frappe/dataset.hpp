// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace frappe {

enum class TaskKind { binary_classification, regression };
enum class SensitiveKind { categorical, continuous };

const char* to_string(TaskKind kind) noexcept;
const char* to_string(SensitiveKind kind) noexcept;
TaskKind parse_task_kind(const std::string& name);
SensitiveKind parse_sensitive_kind(const std::string& name);

/// Tabular examples. One table carries all three data roles: every row is
/// usable for the prediction / output-discrepancy terms, and the rows whose
/// sensitive value is present form the annotated subset used by fairness
/// penalties.
struct DatasetTable {
  Eigen::MatrixXd features;  // n x d
  Eigen::VectorXd label;
  std::vector<std::optional<double>> sensitive;
  std::optional<Eigen::VectorXd> base_score;
  TaskKind task_kind = TaskKind::binary_classification;
  SensitiveKind sensitive_kind = SensitiveKind::categorical;
  std::vector<std::string> feature_names;
  std::string label_name = "y";
  std::string sensitive_name = "a";

  std::size_t rows() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(features.cols()); }

  std::vector<std::size_t> annotated_rows() const;
  std::size_t annotated_count() const;

  /// Copy of the given rows, in the given order.
  DatasetTable take(std::span<const std::size_t> rows) const;

  /// Throws SchemaError / ParseError when an invariant is violated.
  void validate() const;
};

struct CsvSchema {
  std::vector<std::string> features;
  std::string label;
  std::optional<std::string> sensitive;
  std::optional<std::string> base_score;
  TaskKind task_kind = TaskKind::binary_classification;
  SensitiveKind sensitive_kind = SensitiveKind::categorical;

  /// Schema that reads back a table written by write_csv.
  static CsvSchema for_table(const DatasetTable& table);
};

DatasetTable load_csv(const std::filesystem::path& path, const CsvSchema& schema);
DatasetTable parse_csv(const std::string& text, const CsvSchema& schema,
                       const std::string& source_name = "<memory>");
std::string to_csv(const DatasetTable& table);
void write_csv(const DatasetTable& table, const std::filesystem::path& path);

struct SplitSpec {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Splits {
  DatasetTable train;
  DatasetTable validation;
  DatasetTable test;
};

Splits split(const DatasetTable& data, const SplitSpec& spec);

/// Keeps ceil(fraction * n_annotated) uniformly chosen annotations and
/// clears the rest. Features, labels, and base scores are untouched.
DatasetTable subsample_sensitive(const DatasetTable& data, double fraction,
                                 std::uint64_t seed);

/// Per-column affine map fitted on a training table (population sd).
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const DatasetTable& train);
  DatasetTable apply(const DatasetTable& table) const;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& features) const;
};

struct StandardizeResult {
  DatasetTable train;
  std::vector<DatasetTable> others;
  Standardizer record;
};

StandardizeResult standardize(const DatasetTable& train,
                              std::span<const DatasetTable> others);

struct SynthSpec {
  std::size_t n = 10000;
  std::size_t d = 5;
  double group_prob = 0.3;
  std::vector<double> group_mean_shift;  // empty = zeros
  std::vector<double> label_weights;     // empty = ones
  double label_bias = 0.0;
  double group_label_shift = 0.0;
  double noise_scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// a ~ Bernoulli(pi); x ~ N(a * shift, noise^2 I); y ~ Bernoulli(sigmoid(w.x + b + delta * a)).
DatasetTable synth_two_group(const SynthSpec& spec);

}  // namespace frappe
