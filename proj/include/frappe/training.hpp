// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "frappe/dataset.hpp"
#include "frappe/divergence.hpp"
#include "frappe/metrics.hpp"
#include "frappe/model.hpp"
#include "frappe/regularizers.hpp"

namespace frappe {

enum class ObjectiveMode { in_processing, frappe };
enum class PredictionLoss { logistic, squared_error };

const char* to_string(ObjectiveMode mode) noexcept;
const char* to_string(PredictionLoss loss) noexcept;

struct ObjectiveSpec {
  ObjectiveMode mode = ObjectiveMode::frappe;
  double lambda = 0.0;
  std::optional<RegularizerSpec> regularizer;  // required when lambda > 0
  DivergenceSpec divergence;                    // frappe only
  PredictionLoss prediction_loss = PredictionLoss::logistic;  // in_processing only

  void validate() const;
};

struct OptimizerSpec {
  enum class Kind { adam, sgd };
  Kind kind = Kind::adam;
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  std::size_t epochs = 200;
  OptimizerSpec optimizer;
  std::size_t batch_size = 0;  // 0 = full batch
  std::optional<std::size_t> early_stopping_patience;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  double data_term = 0.0;   // prediction loss (in-processing) or output divergence (frappe)
  double penalty = 0.0;     // fairness penalty on the annotated training rows; NaN without a regularizer
  double val_error = 0.0;
  double test_fpr_gap = 0.0;  // NaN when no test table or not applicable
};

struct TrainResult {
  ScoreModule module;
  std::vector<EpochRecord> history;
  std::size_t epochs_run = 0;
  bool stopped_early = false;
  std::size_t best_epoch = 0;   // 1-based epoch whose parameters were returned
  double final_penalty = 0.0;   // penalty of the returned parameters
};

/// Minimizes the mean prediction loss only.
TrainResult fit_base(const DatasetTable& train, const DatasetTable& validation,
                     const ModuleSpec& model, const TrainConfig& config,
                     PredictionLoss loss = PredictionLoss::logistic,
                     const DatasetTable* test = nullptr);

/// mean prediction loss over all training rows + lambda * penalty over the
/// annotated training rows.
TrainResult fit_inprocessing(const DatasetTable& train, const DatasetTable& validation,
                             const ModuleSpec& model, const ObjectiveSpec& objective,
                             const TrainConfig& config, const DatasetTable* test = nullptr);

/// mean output divergence between base and base + T over posthoc_rows +
/// lambda * penalty of base + T over the annotated rows of sensitive_rows.
/// Only T is trained; it starts at zero output.
TrainResult fit_frappe(const BaseScorer& base, const ModuleSpec& posthoc,
                       const DatasetTable& posthoc_rows, const DatasetTable& sensitive_rows,
                       const DatasetTable& validation, const ObjectiveSpec& objective,
                       const TrainConfig& config, const DatasetTable* test = nullptr);

/// Full objective and its parameter gradient at the module's current
/// parameters (exposed for gradient checks).
struct ObjectiveValue {
  double value = 0.0;
  Eigen::VectorXd gradient;
};
ObjectiveValue inprocessing_objective(const ScoreModule& module, const DatasetTable& train,
                                      const ObjectiveSpec& objective);
ObjectiveValue frappe_objective(const ScoreModule& posthoc, const BaseScorer& base,
                                const DatasetTable& posthoc_rows,
                                const DatasetTable& sensitive_rows,
                                const ObjectiveSpec& objective);

// ---- sweeps ---------------------------------------------------------------

struct SweepProtocol {
  std::vector<double> lambdas;
  std::size_t repeats = 10;
  std::uint64_t seed_base = 0;
};

/// 8 values log-spaced over [0.1, 30].
std::vector<double> default_lambda_grid();

struct SweepTask {
  std::size_t lambda_index = 0;
  std::size_t repeat = 0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
};

struct SweepOutcome {
  SweepTask task;
  std::optional<TradeoffPoint> point;
  std::string error;  // non-empty when the run failed
};

std::uint64_t sweep_seed(std::uint64_t seed_base, std::size_t lambda_index, std::size_t repeat);

std::vector<SweepTask> sweep_tasks(const SweepProtocol& protocol);

/// Runs every (lambda, repeat) task, up to `workers` at a time. Failures are
/// captured per point. Output is ordered by (lambda index, repeat) no matter
/// how tasks were scheduled.
std::vector<SweepOutcome> sweep(const SweepProtocol& protocol,
                                const std::function<TradeoffPoint(const SweepTask&)>& run,
                                std::size_t workers = 1);

/// Runs fn(i) for i in [0, count) on up to `workers` threads.
void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& fn);

/// Keeps each base prediction with probability p, otherwise emits
/// favorable_label.
Eigen::VectorXd naive_randomized_baseline(const Eigen::VectorXd& base_predictions, double p,
                                          double favorable_label, std::uint64_t seed);

}  // namespace frappe
