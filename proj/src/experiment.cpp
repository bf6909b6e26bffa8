// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "frappe/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "frappe/error.hpp"
#include "frappe/rng.hpp"
#include "format.hpp"
#include "json_util.hpp"

namespace frappe {

using nlohmann::json;
using detail::check_keys;
using detail::get_or;
using detail::get_required;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kDefaultPatience = 20;
constexpr std::uint64_t kBaseSeedTag = 0x62617365ULL;
constexpr std::uint64_t kBaselineSeedTag = 0x6e616976ULL;

ModuleSpec parse_module_spec(const json& doc, const char* where) {
  check_keys(doc, {"kind", "hidden_width"}, where);
  ModuleSpec spec;
  spec.kind = parse_module_kind(get_required<std::string>(doc, "kind", where));
  spec.hidden_width = get_or<std::size_t>(doc, "hidden_width", 0, where);
  return spec;
}

SynthSpec parse_synth(const json& doc) {
  check_keys(doc,
             {"n", "d", "group_prob", "group_mean_shift", "label_weights", "label_bias",
              "group_label_shift", "noise_scale", "seed"},
             "data.synth");
  SynthSpec s;
  s.n = get_or(doc, "n", s.n, "data.synth");
  s.d = get_or(doc, "d", s.d, "data.synth");
  s.group_prob = get_or(doc, "group_prob", s.group_prob, "data.synth");
  s.group_mean_shift = get_or(doc, "group_mean_shift", s.group_mean_shift, "data.synth");
  s.label_weights = get_or(doc, "label_weights", s.label_weights, "data.synth");
  s.label_bias = get_or(doc, "label_bias", s.label_bias, "data.synth");
  s.group_label_shift = get_or(doc, "group_label_shift", s.group_label_shift, "data.synth");
  s.noise_scale = get_or(doc, "noise_scale", s.noise_scale, "data.synth");
  s.seed = get_or(doc, "seed", s.seed, "data.synth");
  s.validate();
  return s;
}

json synth_to_json(const SynthSpec& s) {
  return {{"n", s.n},
          {"d", s.d},
          {"group_prob", s.group_prob},
          {"group_mean_shift", s.group_mean_shift},
          {"label_weights", s.label_weights},
          {"label_bias", s.label_bias},
          {"group_label_shift", s.group_label_shift},
          {"noise_scale", s.noise_scale},
          {"seed", s.seed}};
}

CsvSchema parse_schema(const json& doc) {
  check_keys(doc, {"features", "label", "sensitive", "base_score", "task", "sensitive_kind"},
             "data.schema");
  CsvSchema s;
  s.features = get_required<std::vector<std::string>>(doc, "features", "data.schema");
  s.label = get_or<std::string>(doc, "label", "y", "data.schema");
  if (doc.contains("sensitive") && !doc["sensitive"].is_null())
    s.sensitive = get_required<std::string>(doc, "sensitive", "data.schema");
  if (doc.contains("base_score") && !doc["base_score"].is_null())
    s.base_score = get_required<std::string>(doc, "base_score", "data.schema");
  s.task_kind = parse_task_kind(get_or<std::string>(doc, "task", "binary_classification", "data.schema"));
  s.sensitive_kind =
      parse_sensitive_kind(get_or<std::string>(doc, "sensitive_kind", "categorical", "data.schema"));
  return s;
}

json schema_to_json(const CsvSchema& s) {
  json doc = {{"features", s.features},
              {"label", s.label},
              {"task", to_string(s.task_kind)},
              {"sensitive_kind", to_string(s.sensitive_kind)}};
  if (s.sensitive) doc["sensitive"] = *s.sensitive;
  if (s.base_score) doc["base_score"] = *s.base_score;
  return doc;
}

DataConfig parse_data(const json& doc) {
  check_keys(doc, {"path", "synth", "schema", "split", "sensitive_fraction", "standardize"}, "data");
  DataConfig d;
  if (doc.contains("path") && !doc["path"].is_null()) d.path = get_required<std::string>(doc, "path", "data");
  if (doc.contains("synth") && !doc["synth"].is_null()) d.synth = parse_synth(doc["synth"]);
  if (d.path && d.synth) fail(ErrorKind::Config, "data.path and data.synth are mutually exclusive");
  if (doc.contains("schema") && !doc["schema"].is_null()) d.schema = parse_schema(doc["schema"]);
  if (d.path && !d.schema) fail(ErrorKind::Config, "data.schema is required with data.path");
  if (doc.contains("split")) {
    const json& s = doc["split"];
    check_keys(s, {"train", "validation", "test", "seed"}, "data.split");
    d.split.train = get_or(s, "train", d.split.train, "data.split");
    d.split.validation = get_or(s, "validation", d.split.validation, "data.split");
    d.split.test = get_or(s, "test", d.split.test, "data.split");
    d.split.seed = get_or(s, "seed", d.split.seed, "data.split");
  }
  d.split.validate();
  d.sensitive_fraction = get_or(doc, "sensitive_fraction", d.sensitive_fraction, "data");
  if (!(d.sensitive_fraction > 0.0 && d.sensitive_fraction <= 1.0))
    fail(ErrorKind::Config, "data.sensitive_fraction must lie in (0, 1]");
  d.standardize = get_or(doc, "standardize", d.standardize, "data");
  return d;
}

TrainSection parse_train(const json& doc, const char* where) {
  check_keys(doc, {"epochs", "optimizer", "lr_grid", "batch_size", "early_stopping", "seed", "repeats"},
             where);
  TrainSection t;
  t.config.epochs = get_or(doc, "epochs", t.config.epochs, where);
  if (doc.contains("optimizer")) {
    const json& o = doc["optimizer"];
    const std::string ow = std::string(where) + ".optimizer";
    check_keys(o, {"kind", "lr", "beta1", "beta2", "eps"}, ow);
    const auto kind = get_or<std::string>(o, "kind", "adam", ow);
    if (kind == "adam") {
      t.config.optimizer.kind = OptimizerSpec::Kind::adam;
    } else if (kind == "sgd") {
      t.config.optimizer.kind = OptimizerSpec::Kind::sgd;
    } else {
      fail(ErrorKind::Config, ow + ".kind must be 'adam' or 'sgd'");
    }
    if (o.contains("lr")) {
      if (o["lr"].is_string()) {
        if (o["lr"].get<std::string>() != "auto") fail(ErrorKind::Config, ow + ".lr must be a number or \"auto\"");
      } else {
        t.config.optimizer.lr = get_required<double>(o, "lr", ow);
        t.auto_lr = false;
      }
    }
    t.config.optimizer.beta1 = get_or(o, "beta1", t.config.optimizer.beta1, ow);
    t.config.optimizer.beta2 = get_or(o, "beta2", t.config.optimizer.beta2, ow);
    t.config.optimizer.eps = get_or(o, "eps", t.config.optimizer.eps, ow);
  }
  t.lr_grid = get_or(doc, "lr_grid", t.lr_grid, where);
  if (t.lr_grid.empty()) fail(ErrorKind::Config, std::string(where) + ".lr_grid is empty");
  for (double lr : t.lr_grid)
    if (!(lr > 0.0)) fail(ErrorKind::Config, std::string(where) + ".lr_grid values must be positive");
  t.config.batch_size = get_or(doc, "batch_size", t.config.batch_size, where);
  if (doc.contains("early_stopping")) {
    t.early_stopping_set = true;
    const json& es = doc["early_stopping"];
    if (es.is_boolean()) {
      if (es.get<bool>()) t.config.early_stopping_patience = kDefaultPatience;
    } else if (!es.is_null()) {
      check_keys(es, {"patience"}, std::string(where) + ".early_stopping");
      t.config.early_stopping_patience =
          get_or<std::size_t>(es, "patience", kDefaultPatience, "early_stopping");
    }
  }
  t.config.seed = get_or(doc, "seed", t.config.seed, where);
  t.repeats = get_or(doc, "repeats", t.repeats, where);
  if (t.repeats < 1) fail(ErrorKind::Config, std::string(where) + ".repeats must be at least 1");
  t.config.validate();
  return t;
}

DivergenceSpec parse_divergence(const json& doc) {
  check_keys(doc, {"kind", "reversed"}, "objective.divergence");
  DivergenceSpec d;
  const auto kind = get_or<std::string>(doc, "kind", "kl_bernoulli", "objective.divergence");
  if (kind == "kl_bernoulli" || kind == "kl") {
    d.kind = DivergenceSpec::Kind::kl_bernoulli;
  } else if (kind == "mse") {
    d.kind = DivergenceSpec::Kind::mse;
  } else {
    fail(ErrorKind::Config, "objective.divergence.kind must be 'kl_bernoulli' or 'mse'");
  }
  d.reversed = get_or(doc, "reversed", false, "objective.divergence");
  return d;
}

VerifyConfig parse_verify(const json& doc) {
  check_keys(doc,
             {"family", "lambda", "regularizer", "n_probe", "radius", "seed", "inner_tolerance",
              "max_newton_iterations", "require_inner_convergence", "argmin_inits", "intercept",
              "tolerance", "argmin_tolerance"},
             "verify");
  VerifyConfig v;
  auto& s = v.settings;
  s.family = parse_glm_family(get_or<std::string>(doc, "family", "logistic", "verify"));
  s.lambda = get_or(doc, "lambda", s.lambda, "verify");
  if (doc.contains("regularizer") && !doc["regularizer"].is_null())
    s.regularizer = regularizer_from_json(doc["regularizer"]);
  else
    s.regularizer = MinDiffMMD{};
  s.n_probe = get_or(doc, "n_probe", s.n_probe, "verify");
  s.radius = get_or(doc, "radius", s.radius, "verify");
  s.seed = get_or(doc, "seed", s.seed, "verify");
  s.inner_tolerance = get_or(doc, "inner_tolerance", s.inner_tolerance, "verify");
  s.max_newton_iterations = get_or(doc, "max_newton_iterations", s.max_newton_iterations, "verify");
  s.require_inner_convergence =
      get_or(doc, "require_inner_convergence", s.require_inner_convergence, "verify");
  s.argmin_inits = get_or(doc, "argmin_inits", s.argmin_inits, "verify");
  s.intercept = get_or(doc, "intercept", s.intercept, "verify");
  v.tolerance = get_or(doc, "tolerance", v.tolerance, "verify");
  v.argmin_tolerance = get_or(doc, "argmin_tolerance", v.argmin_tolerance, "verify");
  return v;
}

std::string parse_rows(const json& doc, const char* where) {
  auto rows = get_or<std::string>(doc, "rows", "test", where);
  if (rows != "test" && rows != "all")
    fail(ErrorKind::Config, std::string(where) + ".rows must be 'test' or 'all'");
  return rows;
}

}  // namespace

const std::vector<std::string>& eval_metric_names() {
  static const std::vector<std::string> names{"error", "fpr_gap", "tpr_gap", "sp_gap", "meo", "hgr_inf"};
  return names;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"synth", "train-base",      "train",         "sweep",
                                              "eval",  "verify-glm", "analyze-posthoc", "baseline-naive"};
  return names;
}

RunConfig RunConfig::parse(const json& doc) {
  check_keys(doc,
             {"data", "base", "posthoc", "objective", "train", "output", "verify", "eval", "baseline"},
             "config");
  RunConfig c;
  c.raw = doc;
  c.data = parse_data(doc.value("data", json::object()));
  const TaskKind task = c.data.schema ? c.data.schema->task_kind : TaskKind::binary_classification;

  if (doc.contains("base")) {
    const json& b = doc["base"];
    check_keys(b, {"kind", "hidden_width", "model_path", "score_column", "train"}, "base");
    if (b.contains("kind")) {
      json m = {{"kind", b["kind"]}};
      if (b.contains("hidden_width")) m["hidden_width"] = b["hidden_width"];
      c.base.model = parse_module_spec(m, "base");
    }
    if (b.contains("model_path") && !b["model_path"].is_null())
      c.base.model_path = get_required<std::string>(b, "model_path", "base");
    if (b.contains("score_column") && !b["score_column"].is_null()) {
      c.base.score_column = get_required<std::string>(b, "score_column", "base");
      if (c.data.schema) {
        if (c.data.schema->base_score && *c.data.schema->base_score != *c.base.score_column)
          fail(ErrorKind::Config, "base.score_column differs from data.schema.base_score");
        c.data.schema->base_score = c.base.score_column;
      }
    }
    if (c.base.model_path && c.base.score_column)
      fail(ErrorKind::Config, "base.model_path and base.score_column are mutually exclusive");
    if (b.contains("train")) c.base.train = parse_train(b["train"], "base.train");
  }
  if (doc.contains("posthoc")) c.posthoc = parse_module_spec(doc["posthoc"], "posthoc");

  c.objective.spec.prediction_loss =
      task == TaskKind::regression ? PredictionLoss::squared_error : PredictionLoss::logistic;
  c.objective.spec.divergence.kind =
      task == TaskKind::regression ? DivergenceSpec::Kind::mse : DivergenceSpec::Kind::kl_bernoulli;
  c.objective.spec.regularizer = MinDiffMMD{};
  c.objective.lambda_grid = default_lambda_grid();
  if (doc.contains("objective")) {
    const json& o = doc["objective"];
    check_keys(o, {"mode", "lambda", "lambda_grid", "regularizer", "divergence", "prediction_loss"},
               "objective");
    const auto mode = get_or<std::string>(o, "mode", "frappe", "objective");
    if (mode == "frappe") {
      c.objective.spec.mode = ObjectiveMode::frappe;
    } else if (mode == "in_processing") {
      c.objective.spec.mode = ObjectiveMode::in_processing;
    } else {
      fail(ErrorKind::Config, "objective.mode must be 'frappe' or 'in_processing'");
    }
    if (o.contains("lambda") && o.contains("lambda_grid"))
      fail(ErrorKind::Config, "objective.lambda and objective.lambda_grid are mutually exclusive");
    if (o.contains("lambda")) c.objective.lambda_grid = {get_required<double>(o, "lambda", "objective")};
    if (o.contains("lambda_grid"))
      c.objective.lambda_grid = get_required<std::vector<double>>(o, "lambda_grid", "objective");
    if (o.contains("regularizer") && !o["regularizer"].is_null())
      c.objective.spec.regularizer = regularizer_from_json(o["regularizer"]);
    if (o.contains("divergence")) c.objective.spec.divergence = parse_divergence(o["divergence"]);
    if (o.contains("prediction_loss")) {
      const auto loss = get_required<std::string>(o, "prediction_loss", "objective");
      if (loss == "logistic") {
        c.objective.spec.prediction_loss = PredictionLoss::logistic;
      } else if (loss == "squared_error") {
        c.objective.spec.prediction_loss = PredictionLoss::squared_error;
      } else {
        fail(ErrorKind::Config, "objective.prediction_loss must be 'logistic' or 'squared_error'");
      }
    }
  }
  if (c.objective.lambda_grid.empty()) fail(ErrorKind::Config, "objective.lambda_grid is empty");
  for (double l : c.objective.lambda_grid) {
    ObjectiveSpec probe = c.objective.spec;
    probe.lambda = l;
    probe.validate();
  }
  c.objective.spec.lambda = c.objective.lambda_grid.front();

  if (doc.contains("train")) c.train = parse_train(doc["train"], "train");
  if (doc.contains("output")) {
    const json& o = doc["output"];
    check_keys(o, {"directory", "plot", "fairness_metric"}, "output");
    c.output.directory = get_or<std::string>(o, "directory", c.output.directory, "output");
    c.output.plot = get_or(o, "plot", c.output.plot, "output");
    if (o.contains("fairness_metric")) {
      c.output.fairness_metric = get_required<std::string>(o, "fairness_metric", "output");
      parse_tradeoff_field(*c.output.fairness_metric);
    }
  }
  if (doc.contains("verify")) c.verify = parse_verify(doc["verify"]);
  else c.verify.settings.regularizer = MinDiffMMD{};
  if (doc.contains("eval")) {
    const json& e = doc["eval"];
    check_keys(e, {"model_path", "metrics", "rows"}, "eval");
    if (e.contains("model_path") && !e["model_path"].is_null())
      c.eval.model_path = get_required<std::string>(e, "model_path", "eval");
    c.eval.metrics = get_or(e, "metrics", c.eval.metrics, "eval");
    c.eval.rows = parse_rows(e, "eval");
    const auto& valid = eval_metric_names();
    for (const auto& m : c.eval.metrics) {
      if (std::find(valid.begin(), valid.end(), m) == valid.end()) {
        std::string list;
        for (const auto& v : valid) list += (list.empty() ? "" : ", ") + v;
        fail(ErrorKind::Config, "unknown metric '" + m + "' (valid metrics: " + list + ")");
      }
    }
  }
  if (doc.contains("baseline")) {
    const json& b = doc["baseline"];
    check_keys(b, {"p_grid", "favorable_label", "rows"}, "baseline");
    c.baseline.p_grid = get_or(b, "p_grid", c.baseline.p_grid, "baseline");
    c.baseline.favorable_label = get_or(b, "favorable_label", c.baseline.favorable_label, "baseline");
    c.baseline.rows = parse_rows(b, "baseline");
    if (c.baseline.p_grid.empty()) fail(ErrorKind::Config, "baseline.p_grid is empty");
    for (double p : c.baseline.p_grid)
      if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::InvalidFraction, "baseline.p_grid values must lie in [0, 1]");
  }
  return c;
}

DatasetTable load_dataset(const DataConfig& data, const std::filesystem::path& base_dir) {
  if (data.synth) return synth_two_group(*data.synth);
  if (!data.path) fail(ErrorKind::Config, "config needs data.path or data.synth");
  std::filesystem::path p(*data.path);
  if (p.is_relative()) p = base_dir / p;
  return load_csv(p, *data.schema);
}

PreparedData prepare_data(const DatasetTable& full, const DataConfig& data,
                          std::uint64_t split_seed, std::uint64_t subsample_seed,
                          const std::optional<Standardizer>& fixed) {
  SplitSpec spec = data.split;
  spec.seed = split_seed;
  Splits parts = split(full, spec);
  PreparedData out;
  if (data.sensitive_fraction < 1.0)
    parts.train = subsample_sensitive(parts.train, data.sensitive_fraction, subsample_seed);
  if (fixed) {
    out.standardizer = *fixed;
    out.standardized = true;
  } else if (data.standardize) {
    out.standardizer = Standardizer::fit(parts.train);
    out.standardized = true;
  }
  if (out.standardized) {
    out.train = out.standardizer.apply(parts.train);
    out.validation = out.standardizer.apply(parts.validation);
    out.test = out.standardizer.apply(parts.test);
  } else {
    out.train = std::move(parts.train);
    out.validation = std::move(parts.validation);
    out.test = std::move(parts.test);
  }
  return out;
}

namespace {

// Data seeds of repeat r; repeat 0 is what the single-run commands use.
std::uint64_t split_seed(const DataConfig& d, std::size_t r) { return derive_seed(d.split.seed, {r}); }
std::uint64_t subsample_seed(const DataConfig& d, std::size_t r) {
  return derive_seed(d.split.seed, {r, 1});
}
std::uint64_t base_seed(std::uint64_t master, std::size_t r) {
  return derive_seed(master, {kBaseSeedTag, r});
}

TrainConfig effective(const TrainSection& s, bool inprocessing, std::uint64_t seed, double lr) {
  TrainConfig c = s.config;
  if (!s.early_stopping_set)
    c.early_stopping_patience = inprocessing ? std::optional<std::size_t>(kDefaultPatience) : std::nullopt;
  c.seed = seed;
  c.optimizer.lr = lr;
  return c;
}

const TrainSection& base_section(const RunConfig& c) { return c.base.train ? *c.base.train : c.train; }

PredictionLoss base_loss(const RunConfig& c, const DatasetTable& t) {
  (void)c;
  return t.task_kind == TaskKind::regression ? PredictionLoss::squared_error : PredictionLoss::logistic;
}

// Picks the lr of the grid whose base fit reaches the lowest validation
// error; the first grid value wins ties.
double tune_lr(const RunConfig& c, const PreparedData& d, std::uint64_t seed) {
  const TrainSection& s = base_section(c);
  if (!s.auto_lr) return s.config.optimizer.lr;
  if (!c.base.model) return s.config.optimizer.lr;
  double best_lr = s.lr_grid.front();
  double best_err = std::numeric_limits<double>::infinity();
  bool any = false;
  std::string last_error;
  for (double lr : s.lr_grid) {
    try {
      const TrainResult r = fit_base(d.train, d.validation, *c.base.model,
                                     effective(s, true, seed, lr), base_loss(c, d.train));
      const double err = r.history[r.best_epoch - 1].val_error;
      if (!any || err < best_err) {
        best_err = err;
        best_lr = lr;
      }
      any = true;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Diverged) throw;
      last_error = e.what();
    }
  }
  if (!any) fail(ErrorKind::Diverged, "every learning rate diverged: " + last_error);
  return best_lr;
}

double train_lr(const RunConfig& c, double tuned) {
  return c.train.auto_lr && c.base.model ? tuned : c.train.config.optimizer.lr;
}

json preprocessing_json(const PreparedData& d) {
  if (!d.standardized) return nullptr;
  return {{"mean", std::vector<double>(d.standardizer.mean.begin(), d.standardizer.mean.end())},
          {"scale", std::vector<double>(d.standardizer.scale.begin(), d.standardizer.scale.end())}};
}

std::optional<Standardizer> preprocessing_from_json(const json& doc) {
  if (doc.is_null()) return std::nullopt;
  try {
    const auto mean = doc.at("mean").get<std::vector<double>>();
    const auto scale = doc.at("scale").get<std::vector<double>>();
    if (mean.size() != scale.size()) fail(ErrorKind::Schema, "preprocessing mean/scale lengths differ");
    Standardizer s;
    s.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    s.scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));
    return s;
  } catch (const json::exception& e) {
    fail(ErrorKind::Schema, std::string("malformed preprocessing block: ") + e.what());
  }
}

struct LoadedModel {
  std::string type;  // score_module | fair_model
  std::optional<ScoreModule> module;
  BaseScorer base = ScoreColumn{};
  std::optional<ScoreModule> posthoc;
  std::optional<Standardizer> preprocessing;
  TaskKind task = TaskKind::binary_classification;

  Eigen::VectorXd scores(const DatasetTable& t) const {
    if (module) return module->forward(t.features);
    return base_scores(base, t) + posthoc->forward(t.features);
  }
};

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

LoadedModel load_model(const std::string& path, const std::filesystem::path& base_dir) {
  std::filesystem::path p(path);
  if (p.is_relative()) p = base_dir / p;
  json doc;
  try {
    doc = json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Parse, "'" + p.string() + "' is not valid JSON: " + e.what());
  }
  LoadedModel m;
  try {
    m.type = doc.at("model_type").get<std::string>();
    m.task = parse_task_kind(doc.at("task_kind").get<std::string>());
    m.preprocessing = preprocessing_from_json(doc.value("preprocessing", json()));
    if (m.type == "score_module") {
      m.module = ScoreModule::from_json(doc.at("module"));
    } else if (m.type == "fair_model") {
      const json& b = doc.at("base");
      if (b.contains("module"))
        m.base = freeze(ScoreModule::from_json(b.at("module")));
      else
        m.base = ScoreColumn{};
      m.posthoc = ScoreModule::from_json(doc.at("posthoc"));
    } else {
      fail(ErrorKind::Schema, "unknown model_type '" + m.type + "'");
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Schema, "malformed model file '" + p.string() + "': " + e.what());
  }
  return m;
}

json score_module_doc(const ScoreModule& m, const PreparedData& d, TaskKind task) {
  return {{"model_type", "score_module"},
          {"task_kind", to_string(task)},
          {"preprocessing", preprocessing_json(d)},
          {"module", m.to_json()}};
}

json history_json(const TrainResult& r) {
  json h = {{"data_term", json::array()},
            {"penalty", json::array()},
            {"val_error", json::array()},
            {"test_fpr_gap", json::array()}};
  for (const auto& e : r.history) {
    h["data_term"].push_back(e.data_term);
    h["penalty"].push_back(e.penalty);
    h["val_error"].push_back(e.val_error);
    h["test_fpr_gap"].push_back(e.test_fpr_gap);
  }
  return h;
}

json run_json(const TrainResult& r) {
  return {{"history", history_json(r)},
          {"epochs_run", r.epochs_run},
          {"stopped_early", r.stopped_early},
          {"best_epoch", r.best_epoch},
          {"final_penalty", r.final_penalty}};
}

json point_json(const TradeoffPoint& p) {
  return {{"lambda", p.lambda},       {"seed", p.seed},        {"test_error", p.test_error},
          {"fpr_gap", p.fpr_gap},     {"sp_gap", p.sp_gap},    {"meo", p.meo},
          {"hgr_inf", p.hgr_inf},     {"train_penalty", p.train_penalty},
          {"epochs_run", p.epochs_run}};
}

class Manifest {
 public:
  Manifest(std::string command, const RunConfig& c, std::uint64_t master)
      : start_(std::chrono::steady_clock::now()) {
    doc_ = {{"command", std::move(command)},
            {"config", c.raw},
            {"master_seed", master},
            {"seeds", {{"split", c.data.split.seed}}}};
  }
  json& doc() { return doc_; }
  std::string finish() {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    doc_["wall_time_seconds"] = secs;
    return doc_.dump(2) + "\n";
  }

 private:
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

TradeoffField default_fairness_field(const RunConfig& c) {
  if (c.output.fairness_metric) return parse_tradeoff_field(*c.output.fairness_metric);
  const auto& reg = c.objective.spec.regularizer;
  if (!reg) return TradeoffField::fpr_gap;
  if (const auto* m = std::get_if<MinDiffMMD>(&*reg))
    return m->mode == MinDiffMode::eqodds ? TradeoffField::meo : TradeoffField::fpr_gap;
  if (std::holds_alternative<KdeSP>(*reg)) return TradeoffField::sp_gap;
  return TradeoffField::hgr_inf;
}

double safe_penalty(const RunConfig& c, const Eigen::VectorXd& train_scores, const DatasetTable& train) {
  if (!c.objective.spec.regularizer) return kNaN;
  const DatasetTable ann = train.take(train.annotated_rows());
  Eigen::VectorXd s(static_cast<Eigen::Index>(ann.rows()));
  const auto idx = train.annotated_rows();
  for (std::size_t k = 0; k < idx.size(); ++k) s(static_cast<Eigen::Index>(k)) = train_scores(static_cast<Eigen::Index>(idx[k]));
  try {
    return fairness_penalty(*c.objective.spec.regularizer, s, ann.label, ann.sensitive).value;
  } catch (const Error&) {
    return kNaN;
  }
}

// Frozen base resolved from the config, if any.
struct FrozenBase {
  BaseScorer scorer;
  std::optional<Standardizer> preprocessing;
  bool from_model = false;
};

std::optional<FrozenBase> frozen_base(const RunConfig& c, const std::filesystem::path& base_dir) {
  if (c.base.model_path) {
    LoadedModel m = load_model(*c.base.model_path, base_dir);
    if (!m.module) fail(ErrorKind::Config, "base.model_path must point at a score_module file");
    return FrozenBase{freeze(std::move(*m.module)), m.preprocessing, true};
  }
  if (c.base.score_column) return FrozenBase{ScoreColumn{}, std::nullopt, false};
  return std::nullopt;
}

PreparedData prepare_for(const RunConfig& c, const DatasetTable& full, std::size_t r,
                         const std::optional<FrozenBase>& frozen) {
  if (frozen && frozen->from_model) {
    if (!frozen->preprocessing) {
      DataConfig d = c.data;
      d.standardize = false;
      return prepare_data(full, d, split_seed(c.data, r), subsample_seed(c.data, r));
    }
    return prepare_data(full, c.data, split_seed(c.data, r), subsample_seed(c.data, r),
                        frozen->preprocessing);
  }
  return prepare_data(full, c.data, split_seed(c.data, r), subsample_seed(c.data, r));
}

std::string fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

std::string suffix_name(const std::string& stem, std::size_t i, std::size_t count) {
  return count == 1 ? stem + ".json" : stem + "_l" + std::to_string(i) + ".json";
}

// ---- commands --------------------------------------------------------------

CommandResult cmd_synth(const RunConfig& c, std::uint64_t master) {
  if (!c.data.synth) fail(ErrorKind::Config, "synth needs a data.synth section");
  Manifest manifest("synth", c, master);
  const DatasetTable t = synth_two_group(*c.data.synth);
  CommandResult out;
  out.artifacts.push_back({"dataset.csv", to_csv(t)});
  json sidecar = {{"synth", synth_to_json(*c.data.synth)}, {"schema", schema_to_json(CsvSchema::for_table(t))}};
  out.artifacts.push_back({"dataset.json", sidecar.dump(2) + "\n"});
  manifest.doc()["rows"] = t.rows();
  manifest.doc()["outputs"] = {"dataset.csv", "dataset.json"};
  out.artifacts.push_back({"manifest.json", manifest.finish()});
  out.summary = "wrote " + std::to_string(t.rows()) + " rows";
  return out;
}

CommandResult cmd_train_base(const RunConfig& c, const std::filesystem::path& base_dir,
                             std::uint64_t master) {
  if (!c.base.model) fail(ErrorKind::Config, "train-base needs base.kind");
  Manifest manifest("train-base", c, master);
  const DatasetTable full = load_dataset(c.data, base_dir);
  const PreparedData d = prepare_for(c, full, 0, std::nullopt);
  const double lr = tune_lr(c, d, master);
  const TrainResult r = fit_base(d.train, d.validation, *c.base.model,
                                 effective(base_section(c), true, master, lr), base_loss(c, d.train), &d.test);
  const TradeoffPoint test = evaluate_scores(r.module.forward(d.test.features), d.test);
  CommandResult out;
  out.artifacts.push_back({"base_model.json", score_module_doc(r.module, d, full.task_kind).dump(2) + "\n"});
  json& m = manifest.doc();
  m["seeds"]["model"] = master;
  m["lr"] = lr;
  m["run"] = run_json(r);
  m["test_metrics"] = point_json(test);
  m["outputs"] = {"base_model.json"};
  out.artifacts.push_back({"manifest.json", manifest.finish()});
  out.summary = "base model: epochs " + std::to_string(r.epochs_run) + ", test error " + fmt(test.test_error);
  return out;
}

CommandResult cmd_train(const RunConfig& c, const std::filesystem::path& base_dir, std::uint64_t master) {
  const bool inproc = c.objective.spec.mode == ObjectiveMode::in_processing;
  const auto frozen = inproc ? std::nullopt : frozen_base(c, base_dir);
  if (inproc && !c.base.model) fail(ErrorKind::Config, "in_processing training needs base.kind");
  if (!inproc && !frozen)
    fail(ErrorKind::Config, "frappe training needs base.model_path or base.score_column");
  const DatasetTable full = load_dataset(c.data, base_dir);
  const PreparedData d = prepare_for(c, full, 0, frozen);
  const double tuned = inproc ? tune_lr(c, d, master) : c.train.config.optimizer.lr;
  const double lr = inproc ? train_lr(c, tuned) : c.train.config.optimizer.lr;

  CommandResult out;
  std::string summary;
  const auto& grid = c.objective.lambda_grid;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    Manifest manifest("train", c, master);
    ObjectiveSpec obj = c.objective.spec;
    obj.lambda = grid[i];
    const TrainConfig cfg = effective(c.train, inproc, master, lr);
    TrainResult r;
    json model_doc;
    Eigen::VectorXd test_scores;
    if (inproc) {
      r = fit_inprocessing(d.train, d.validation, *c.base.model, obj, cfg, &d.test);
      test_scores = r.module.forward(d.test.features);
      model_doc = score_module_doc(r.module, d, full.task_kind);
    } else {
      r = fit_frappe(frozen->scorer, c.posthoc, d.train, d.train, d.validation, obj, cfg, &d.test);
      test_scores = base_scores(frozen->scorer, d.test) + r.module.forward(d.test.features);
      json base_doc;
      if (const auto* fm = std::get_if<FrozenModule>(&frozen->scorer))
        base_doc = {{"module", fm->module->to_json()}};
      else
        base_doc = {{"score_column", *c.base.score_column}};
      model_doc = {{"model_type", "fair_model"},
                   {"task_kind", to_string(full.task_kind)},
                   {"preprocessing", preprocessing_json(d)},
                   {"base", base_doc},
                   {"posthoc", r.module.to_json()}};
    }
    const TradeoffPoint test = evaluate_scores(test_scores, d.test);
    const std::string model_name = suffix_name("model", i, grid.size());
    const std::string manifest_name = suffix_name("manifest", i, grid.size());
    out.artifacts.push_back({model_name, model_doc.dump(2) + "\n"});
    json& m = manifest.doc();
    m["mode"] = to_string(obj.mode);
    m["lambda"] = obj.lambda;
    m["seeds"]["model"] = master;
    m["lr"] = lr;
    m["run"] = run_json(r);
    m["test_metrics"] = point_json(test);
    m["outputs"] = {model_name};
    out.artifacts.push_back({manifest_name, manifest.finish()});
    summary += "lambda " + fmt(obj.lambda) + ": epochs " + std::to_string(r.epochs_run) +
               ", test error " + fmt(test.test_error) + ", fpr gap " + fmt(test.fpr_gap) + "\n";
  }
  out.summary = summary;
  return out;
}

struct Stats {
  double mean = 0.0;
  double se = 0.0;
};

Stats stats(const std::vector<double>& v) {
  Stats s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return s;
}

const char* field_name(TradeoffField f) {
  switch (f) {
    case TradeoffField::test_error: return "test_error";
    case TradeoffField::fpr_gap: return "fpr_gap";
    case TradeoffField::sp_gap: return "sp_gap";
    case TradeoffField::meo: return "meo";
    case TradeoffField::hgr_inf: return "hgr_inf";
    case TradeoffField::train_penalty: return "train_penalty";
  }
  return "";
}

}  // namespace

SweepReport run_sweep(const RunConfig& c, const std::filesystem::path& base_dir,
                      std::uint64_t master, std::size_t workers) {
  const bool inproc = c.objective.spec.mode == ObjectiveMode::in_processing;
  const auto frozen = inproc ? std::nullopt : frozen_base(c, base_dir);
  if (!c.base.model && (inproc || !frozen))
    fail(ErrorKind::Config, "sweep needs base.kind, or base.model_path / base.score_column for frappe");
  const DatasetTable full = load_dataset(c.data, base_dir);
  const std::size_t repeats = c.train.repeats;

  std::vector<PreparedData> data(repeats);
  for (std::size_t r = 0; r < repeats; ++r) data[r] = prepare_for(c, full, r, frozen);

  SweepReport report;
  const double tuned = tune_lr(c, data[0], base_seed(master, 0));
  report.lr_base = tuned;
  report.lr_posthoc = train_lr(c, tuned);

  // Bases: frozen, or one fit per repeat.
  std::vector<BaseScorer> bases(repeats, ScoreColumn{});
  std::vector<std::size_t> base_epochs(repeats, 0);
  if (frozen) {
    for (auto& b : bases) b = frozen->scorer;
  } else {
    parallel_for(repeats, workers, [&](std::size_t r) {
      const TrainResult res = fit_base(data[r].train, data[r].validation, *c.base.model,
                                       effective(base_section(c), true, base_seed(master, r), tuned),
                                       base_loss(c, data[r].train));
      bases[r] = freeze(res.module);
      base_epochs[r] = res.epochs_run;
    });
  }
  for (std::size_t r = 0; r < repeats; ++r) {
    TradeoffPoint p = evaluate_scores(base_scores(bases[r], data[r].test), data[r].test);
    p.lambda = 0.0;
    p.seed = frozen ? 0 : base_seed(master, r);
    p.train_penalty = safe_penalty(c, base_scores(bases[r], data[r].train), data[r].train);
    p.epochs_run = base_epochs[r];
    report.base_reference.push_back(p);
  }

  SweepProtocol protocol{c.objective.lambda_grid, repeats, master};
  report.outcomes = sweep(
      protocol,
      [&](const SweepTask& task) {
        const PreparedData& d = data[task.repeat];
        ObjectiveSpec obj = c.objective.spec;
        obj.lambda = task.lambda;
        const TrainConfig cfg = effective(c.train, inproc, task.seed, report.lr_posthoc);
        TrainResult res;
        Eigen::VectorXd scores;
        if (inproc) {
          res = fit_inprocessing(d.train, d.validation, *c.base.model, obj, cfg);
          scores = res.module.forward(d.test.features);
        } else {
          const BaseScorer& base = bases[task.repeat];
          res = fit_frappe(base, c.posthoc, d.train, d.train, d.validation, obj, cfg);
          scores = base_scores(base, d.test) + res.module.forward(d.test.features);
        }
        TradeoffPoint p = evaluate_scores(scores, d.test);
        p.train_penalty = res.final_penalty;
        p.epochs_run = res.epochs_run;
        return p;
      },
      workers);
  return report;
}

std::string frontier_svg(std::span<const TradeoffPoint> points, TradeoffField error_key,
                         TradeoffField fairness_key) {
  std::map<double, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& p : points) {
    const double e = field_value(p, error_key), f = field_value(p, fairness_key);
    if (!std::isfinite(e) || !std::isfinite(f)) continue;
    groups[p.lambda].first.push_back(e);
    groups[p.lambda].second.push_back(f);
  }
  struct Marker {
    double lambda;
    Stats x, y;
  };
  std::vector<Marker> markers;
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& [lambda, g] : groups) {
    Marker m{lambda, stats(g.first), stats(g.second)};
    xlo = std::min(xlo, m.x.mean - m.x.se);
    xhi = std::max(xhi, m.x.mean + m.x.se);
    ylo = std::min(ylo, m.y.mean - m.y.se);
    yhi = std::max(yhi, m.y.mean + m.y.se);
    markers.push_back(m);
  }
  if (markers.empty()) xlo = ylo = 0.0, xhi = yhi = 1.0;
  if (xhi - xlo < 1e-9) xlo -= 0.005, xhi += 0.005;
  if (yhi - ylo < 1e-9) ylo -= 0.005, yhi += 0.005;
  const double padx = 0.05 * (xhi - xlo), pady = 0.05 * (yhi - ylo);
  xlo -= padx, xhi += padx, ylo -= pady, yhi += pady;

  const double w = 640, h = 480, left = 80, right = 20, top = 20, bottom = 60;
  auto sx = [&](double x) { return left + (x - xlo) / (xhi - xlo) * (w - left - right); };
  auto sy = [&](double y) { return h - bottom - (y - ylo) / (yhi - ylo) * (h - top - bottom); };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
                    "font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
  svg += "<line x1=\"" + fmt(left, 1) + "\" y1=\"" + fmt(h - bottom, 1) + "\" x2=\"" + fmt(w - right, 1) +
         "\" y2=\"" + fmt(h - bottom, 1) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + fmt(left, 1) + "\" y1=\"" + fmt(top, 1) + "\" x2=\"" + fmt(left, 1) + "\" y2=\"" +
         fmt(h - bottom, 1) + "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = xlo + (xhi - xlo) * k / 4.0, yv = ylo + (yhi - ylo) * k / 4.0;
    svg += "<text x=\"" + fmt(sx(xv), 1) + "\" y=\"" + fmt(h - bottom + 16, 1) +
           "\" text-anchor=\"middle\">" + fmt(xv, 3) + "</text>\n";
    svg += "<text x=\"" + fmt(left - 6, 1) + "\" y=\"" + fmt(sy(yv) + 4, 1) + "\" text-anchor=\"end\">" +
           fmt(yv, 3) + "</text>\n";
  }
  svg += "<text x=\"" + fmt((left + w - right) / 2, 1) + "\" y=\"" + fmt(h - 15, 1) +
         "\" text-anchor=\"middle\">" + field_name(error_key) + "</text>\n";
  svg += "<text transform=\"translate(18," + fmt((top + h - bottom) / 2, 1) +
         ") rotate(-90)\" text-anchor=\"middle\">" + field_name(fairness_key) + "</text>\n";
  for (const auto& m : markers) {
    const double cx = sx(m.x.mean), cy = sy(m.y.mean);
    svg += "<line x1=\"" + fmt(sx(m.x.mean - m.x.se), 2) + "\" y1=\"" + fmt(cy, 2) + "\" x2=\"" +
           fmt(sx(m.x.mean + m.x.se), 2) + "\" y2=\"" + fmt(cy, 2) + "\" stroke=\"steelblue\"/>\n";
    svg += "<line x1=\"" + fmt(cx, 2) + "\" y1=\"" + fmt(sy(m.y.mean - m.y.se), 2) + "\" x2=\"" +
           fmt(cx, 2) + "\" y2=\"" + fmt(sy(m.y.mean + m.y.se), 2) + "\" stroke=\"steelblue\"/>\n";
    svg += "<circle cx=\"" + fmt(cx, 2) + "\" cy=\"" + fmt(cy, 2) +
           "\" r=\"4\" fill=\"steelblue\"><title>lambda=" + detail::format_double(m.lambda) +
           "</title></circle>\n";
  }
  svg += "</svg>\n";
  return svg;
}

namespace {

CommandResult cmd_sweep(const RunConfig& c, const std::filesystem::path& base_dir,
                        std::uint64_t master, std::size_t workers) {
  Manifest manifest("sweep", c, master);
  const SweepReport report = run_sweep(c, base_dir, master, workers);
  std::vector<TradeoffPoint> points;
  json failures = json::array();
  for (const auto& o : report.outcomes) {
    if (o.point) {
      points.push_back(*o.point);
    } else {
      failures.push_back({{"lambda", o.task.lambda}, {"repeat", o.task.repeat}, {"seed", o.task.seed},
                          {"error", o.error}});
    }
  }
  const TradeoffField fairness = default_fairness_field(c);
  CommandResult out;
  out.artifacts.push_back({"tradeoff.csv", to_csv(points)});
  out.artifacts.push_back({"pareto.csv", to_csv(pareto_filter(points, TradeoffField::test_error, fairness))});
  out.artifacts.push_back({"base_reference.csv", to_csv(report.base_reference)});
  json outputs = {"tradeoff.csv", "pareto.csv", "base_reference.csv"};
  if (c.output.plot) {
    std::vector<TradeoffPoint> all = report.base_reference;
    all.insert(all.end(), points.begin(), points.end());
    out.artifacts.push_back({"frontier.svg", frontier_svg(all, TradeoffField::test_error, fairness)});
    outputs.push_back("frontier.svg");
  }
  json& m = manifest.doc();
  m["mode"] = to_string(c.objective.spec.mode);
  m["lambda_grid"] = c.objective.lambda_grid;
  m["repeats"] = c.train.repeats;
  m["workers"] = workers;
  m["lr_base"] = report.lr_base;
  m["lr_posthoc"] = report.lr_posthoc;
  m["fairness_metric"] = field_name(fairness);
  m["points"] = points.size();
  m["failures"] = failures;
  m["outputs"] = outputs;
  out.artifacts.push_back({"manifest.json", manifest.finish()});
  out.status = failures.empty() ? RunStatus::ok : RunStatus::partial_failure;
  out.summary = std::to_string(points.size()) + " points, " + std::to_string(failures.size()) + " failures";
  return out;
}

// Rows an evaluation-style command looks at, in the model's input space.
DatasetTable rows_for(const RunConfig& c, const DatasetTable& full, const std::string& rows,
                      const std::optional<Standardizer>& pre) {
  if (rows == "all") return pre ? pre->apply(full) : full;
  DataConfig d = c.data;
  d.sensitive_fraction = 1.0;
  if (!pre) d.standardize = false;
  return prepare_data(full, d, split_seed(c.data, 0), subsample_seed(c.data, 0), pre).test;
}

double metric_by_name(const std::string& name, const Eigen::VectorXd& scores, const DatasetTable& t) {
  const Eigen::VectorXd pred = predict_labels(scores, t.task_kind);
  if (name == "error") return prediction_error(pred, t.label, t.task_kind);
  if (name == "fpr_gap") return fpr_gap(pred, t.label, t.sensitive);
  if (name == "tpr_gap") return tpr_gap(pred, t.label, t.sensitive);
  if (name == "sp_gap") return sp_gap(pred, t.sensitive);
  if (name == "meo") return meo(pred, t.label, t.sensitive);
  std::optional<Eigen::VectorXd> labels;
  if (t.task_kind == TaskKind::binary_classification) labels = t.label;
  return hgr_inf(scores, t.sensitive, labels);
}

CommandResult cmd_eval(const RunConfig& c, const std::filesystem::path& base_dir, std::uint64_t master) {
  const auto path = c.eval.model_path ? c.eval.model_path : c.base.model_path;
  if (!path) fail(ErrorKind::Config, "eval needs eval.model_path");
  Manifest manifest("eval", c, master);
  const LoadedModel model = load_model(*path, base_dir);
  const DatasetTable full = load_dataset(c.data, base_dir);
  const DatasetTable t = rows_for(c, full, c.eval.rows, model.preprocessing);
  const Eigen::VectorXd scores = model.scores(t);
  json metrics = {{"rows", c.eval.rows}, {"n", t.rows()}, {"metrics", json::object()}};
  for (const auto& name : c.eval.metrics) metrics["metrics"][name] = metric_by_name(name, scores, t);
  CommandResult out;
  out.artifacts.push_back({"metrics.json", metrics.dump(2) + "\n"});
  manifest.doc()["model_path"] = *path;
  manifest.doc()["outputs"] = {"metrics.json"};
  out.artifacts.push_back({"manifest.json", manifest.finish()});
  out.summary = metrics["metrics"].dump();
  return out;
}

CommandResult cmd_verify(const RunConfig& c, const std::filesystem::path& base_dir, std::uint64_t master) {
  Manifest manifest("verify-glm", c, master);
  DatasetTable t;
  if (c.data.synth || c.data.path) {
    t = load_dataset(c.data, base_dir);
  } else {
    SynthSpec s;
    s.n = 2000;
    s.d = 5;
    t = synth_two_group(s);
  }
  if (c.data.standardize) t = Standardizer::fit(t).apply(t);
  const EquivReport report = verify_equivalence(t, c.verify.settings);
  const double c_gap = std::abs(report.c_empirical - report.c_closed_form);
  const bool pass = report.max_constant_deviation <= c.verify.tolerance &&
                    c_gap <= c.verify.tolerance && report.argmin_distance <= c.verify.argmin_tolerance;
  json doc = to_json(report);
  doc["tolerance"] = c.verify.tolerance;
  doc["argmin_tolerance"] = c.verify.argmin_tolerance;
  doc["constant_gap"] = c_gap;
  doc["pass"] = pass;
  CommandResult out;
  out.artifacts.push_back({"report.json", doc.dump(2) + "\n"});
  manifest.doc()["outputs"] = {"report.json"};
  out.artifacts.push_back({"manifest.json", manifest.finish()});
  out.status = pass ? RunStatus::ok : RunStatus::verification_failed;
  out.summary = std::string(pass ? "PASS" : "FAIL") + ": max constant deviation " +
                detail::format_double(report.max_constant_deviation) + ", |C_emp - C_closed| " +
                detail::format_double(c_gap) + ", argmin distance " +
                detail::format_double(report.argmin_distance);
  return out;
}

CommandResult cmd_analyze(const RunConfig& c, const std::filesystem::path& base_dir, std::uint64_t master) {
  const auto path = c.eval.model_path ? c.eval.model_path : std::optional<std::string>();
  if (!path) fail(ErrorKind::Config, "analyze-posthoc needs eval.model_path pointing at a fair_model file");
  Manifest manifest("analyze-posthoc", c, master);
  const LoadedModel model = load_model(*path, base_dir);
  if (!model.posthoc) fail(ErrorKind::Config, "analyze-posthoc needs a fair_model file");
  const DatasetTable full = load_dataset(c.data, base_dir);
  const DatasetTable t = rows_for(c, full, c.eval.rows, model.preprocessing);
  const auto rows = posthoc_correlation_analysis(*model.posthoc, t);
  CommandResult out;
  out.artifacts.push_back({"posthoc_analysis.csv", to_csv(rows)});
  manifest.doc()["model_path"] = *path;
  manifest.doc()["outputs"] = {"posthoc_analysis.csv"};
  out.artifacts.push_back({"manifest.json", manifest.finish()});
  out.summary = std::to_string(rows.size()) + " correlation rows";
  return out;
}

CommandResult cmd_baseline(const RunConfig& c, const std::filesystem::path& base_dir, std::uint64_t master) {
  Manifest manifest("baseline-naive", c, master);
  const DatasetTable full = load_dataset(c.data, base_dir);
  Eigen::VectorXd scores;
  DatasetTable t;
  if (c.base.model_path) {
    const LoadedModel model = load_model(*c.base.model_path, base_dir);
    t = rows_for(c, full, c.baseline.rows, model.preprocessing);
    scores = model.scores(t);
  } else if (c.base.score_column) {
    t = rows_for(c, full, c.baseline.rows, std::nullopt);
    scores = base_scores(ScoreColumn{}, t);
  } else if (c.base.model) {
    const PreparedData d = prepare_for(c, full, 0, std::nullopt);
    const double lr = tune_lr(c, d, master);
    const TrainResult r = fit_base(d.train, d.validation, *c.base.model,
                                   effective(base_section(c), true, master, lr), base_loss(c, d.train));
    t = c.baseline.rows == "all" ? (d.standardized ? d.standardizer.apply(full) : full) : d.test;
    scores = r.module.forward(t.features);
    manifest.doc()["lr"] = lr;
  } else {
    fail(ErrorKind::Config, "baseline-naive needs base.model_path, base.score_column, or base.kind");
  }
  if (t.task_kind != TaskKind::binary_classification)
    fail(ErrorKind::Config, "baseline-naive needs a binary classification task");
  const Eigen::VectorXd base_pred = predict_labels(scores, t.task_kind);
  std::string csv = "p,seed,test_error,fpr_gap,sp_gap,meo,hgr_inf\n";
  for (std::size_t i = 0; i < c.baseline.p_grid.size(); ++i) {
    const double p = c.baseline.p_grid[i];
    const std::uint64_t seed = derive_seed(master, {kBaselineSeedTag, i});
    const Eigen::VectorXd pred = naive_randomized_baseline(base_pred, p, c.baseline.favorable_label, seed);
    const TradeoffPoint m = evaluate_scores(2.0 * pred.array() - 1.0, t);
    csv += detail::format_double(p) + "," + std::to_string(seed) + "," + detail::format_double(m.test_error) +
           "," + detail::format_double(m.fpr_gap) + "," + detail::format_double(m.sp_gap) + "," +
           detail::format_double(m.meo) + "," + detail::format_double(m.hgr_inf) + "\n";
  }
  CommandResult out;
  out.artifacts.push_back({"baseline.csv", csv});
  manifest.doc()["outputs"] = {"baseline.csv"};
  out.artifacts.push_back({"manifest.json", manifest.finish()});
  out.summary = std::to_string(c.baseline.p_grid.size()) + " baseline rows";
  return out;
}

}  // namespace

CommandResult run_command(const std::string& command, const json& config_doc,
                          const CommandOptions& options) {
  const auto& names = command_names();
  if (std::find(names.begin(), names.end(), command) == names.end()) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    fail(ErrorKind::Config, "unknown command '" + command + "' (commands: " + list + ")");
  }
  const RunConfig c = RunConfig::parse(config_doc);
  const std::uint64_t master = options.seed ? *options.seed : c.train.config.seed;
  const std::size_t workers = std::max<std::size_t>(1, options.workers);
  if (command == "synth") return cmd_synth(c, master);
  if (command == "train-base") return cmd_train_base(c, options.base_dir, master);
  if (command == "train") return cmd_train(c, options.base_dir, master);
  if (command == "sweep") return cmd_sweep(c, options.base_dir, master, workers);
  if (command == "eval") return cmd_eval(c, options.base_dir, master);
  if (command == "verify-glm") return cmd_verify(c, options.base_dir, master);
  if (command == "analyze-posthoc") return cmd_analyze(c, options.base_dir, master);
  return cmd_baseline(c, options.base_dir, master);
}

}  // namespace frappe
