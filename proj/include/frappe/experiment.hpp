// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "frappe/dataset.hpp"
#include "frappe/glm.hpp"
#include "frappe/model.hpp"
#include "frappe/training.hpp"

namespace frappe {

// Parsed run configuration. Every section rejects unknown keys.

struct DataConfig {
  std::optional<std::string> path;
  std::optional<SynthSpec> synth;
  std::optional<CsvSchema> schema;
  SplitSpec split;
  double sensitive_fraction = 1.0;
  bool standardize = true;
};

struct TrainSection {
  TrainConfig config;
  bool auto_lr = true;
  std::vector<double> lr_grid{1e-3, 3e-3, 1e-2, 3e-2};
  bool early_stopping_set = false;  // false = mode default (on for in-processing, off for frappe)
  std::size_t repeats = 10;
};

struct BaseConfig {
  std::optional<ModuleSpec> model;        // architecture trained by train-base / in-processing
  std::optional<std::string> model_path;  // frozen pre-trained module (JSON)
  std::optional<std::string> score_column;
  std::optional<TrainSection> train;      // overrides `train` when fitting the base
};

struct ObjectiveConfig {
  ObjectiveSpec spec;
  std::vector<double> lambda_grid;
};

struct OutputConfig {
  std::string directory = "out";
  bool plot = true;
  std::optional<std::string> fairness_metric;  // pareto / plot axis; default follows the regularizer
};

struct VerifyConfig {
  EquivSettings settings;
  double tolerance = 1e-8;
  double argmin_tolerance = 1e-4;
};

struct EvalConfig {
  std::optional<std::string> model_path;
  std::vector<std::string> metrics{"error", "fpr_gap", "sp_gap", "meo", "hgr_inf"};
  std::string rows = "test";  // "test" | "all"
};

struct BaselineConfig {
  std::vector<double> p_grid{0.0, 0.25, 0.5, 0.75, 1.0};
  double favorable_label = 0.0;
  std::string rows = "test";
};

struct RunConfig {
  DataConfig data;
  BaseConfig base;
  ModuleSpec posthoc{ModuleKind::linear, 0};
  ObjectiveConfig objective;
  TrainSection train;
  OutputConfig output;
  VerifyConfig verify;
  EvalConfig eval;
  BaselineConfig baseline;
  nlohmann::json raw;

  static RunConfig parse(const nlohmann::json& doc);
};

/// Valid metric names for `eval`.
const std::vector<std::string>& eval_metric_names();

/// Data for one repeat: split, partially annotated train rows, standardized.
struct PreparedData {
  DatasetTable train;
  DatasetTable validation;
  DatasetTable test;
  Standardizer standardizer;
  bool standardized = false;
};

DatasetTable load_dataset(const DataConfig& data, const std::filesystem::path& base_dir);
PreparedData prepare_data(const DatasetTable& full, const DataConfig& data,
                          std::uint64_t split_seed, std::uint64_t subsample_seed,
                          const std::optional<Standardizer>& fixed = std::nullopt);

/// Everything a sweep produces.
struct SweepReport {
  std::vector<SweepOutcome> outcomes;
  std::vector<TradeoffPoint> base_reference;  // one per repeat, lambda = 0
  double lr_base = 0.0;
  double lr_posthoc = 0.0;
};

SweepReport run_sweep(const RunConfig& config, const std::filesystem::path& base_dir,
                      std::uint64_t master_seed, std::size_t workers);

struct Artifact {
  std::string name;
  std::string data;
};

enum class RunStatus { ok = 0, partial_failure = 4, verification_failed = 5 };

struct CommandResult {
  RunStatus status = RunStatus::ok;
  std::vector<Artifact> artifacts;
  std::string summary;
};

struct CommandOptions {
  std::filesystem::path base_dir = ".";
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
};

const std::vector<std::string>& command_names();

/// Runs one CLI command on a parsed configuration. Output files are returned
/// as named artifacts; manifests carry the only wall-clock field.
CommandResult run_command(const std::string& command, const nlohmann::json& config,
                          const CommandOptions& options);

/// Static SVG scatter of mean +- standard error per lambda.
std::string frontier_svg(std::span<const TradeoffPoint> points, TradeoffField error_key,
                         TradeoffField fairness_key);

}  // namespace frappe
