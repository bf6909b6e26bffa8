// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "frappe/training.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "frappe/error.hpp"
#include "frappe/rng.hpp"

namespace frappe {

const char* to_string(ObjectiveMode mode) noexcept {
  return mode == ObjectiveMode::frappe ? "frappe" : "in_processing";
}

const char* to_string(PredictionLoss loss) noexcept {
  return loss == PredictionLoss::logistic ? "logistic" : "squared_error";
}

void ObjectiveSpec::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    fail(ErrorKind::Config, "lambda must be a finite nonnegative number");
  if (lambda > 0.0 && !regularizer) fail(ErrorKind::Config, "lambda > 0 needs a regularizer");
  if (regularizer) frappe::validate(*regularizer);
}

void TrainConfig::validate() const {
  if (epochs < 1) fail(ErrorKind::Config, "epochs must be at least 1");
  if (!(optimizer.lr > 0.0) || !std::isfinite(optimizer.lr))
    fail(ErrorKind::Config, "learning rate must be positive");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) ||
      !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
    fail(ErrorKind::Config, "adam betas must lie in [0, 1)");
  if (!(optimizer.eps > 0.0)) fail(ErrorKind::Config, "adam eps must be positive");
  if (early_stopping_patience && *early_stopping_patience < 1)
    fail(ErrorKind::Config, "early stopping patience must be at least 1");
}

namespace {

using Index = Eigen::Index;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

class Optimizer {
 public:
  Optimizer(const OptimizerSpec& spec, Index size)
      : spec_(spec), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    if (spec_.kind == OptimizerSpec::Kind::sgd) {
      params -= spec_.lr * grad;
      return;
    }
    ++t_;
    m_ = spec_.beta1 * m_ + (1.0 - spec_.beta1) * grad;
    v_ = spec_.beta2 * v_ + (1.0 - spec_.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(spec_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(spec_.beta2, static_cast<double>(t_));
    params.array() -= spec_.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + spec_.eps);
  }

 private:
  OptimizerSpec spec_;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

// Mean loss over the batch and d(mean)/d(score).
double prediction_loss(PredictionLoss loss, const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                       Eigen::VectorXd& upstream) {
  const double n = static_cast<double>(z.size());
  upstream.resize(z.size());
  double total = 0.0;
  if (loss == PredictionLoss::logistic) {
    for (Index i = 0; i < z.size(); ++i) {
      total += softplus(z(i)) - y(i) * z(i);
      upstream(i) = (sigmoid(z(i)) - y(i)) / n;
    }
  } else {
    for (Index i = 0; i < z.size(); ++i) {
      const double r = z(i) - y(i);
      total += r * r;
      upstream(i) = 2.0 * r / n;
    }
  }
  return total / n;
}

bool fpr_applicable(const DatasetTable& t) {
  if (t.task_kind != TaskKind::binary_classification) return false;
  if (t.sensitive_kind != SensitiveKind::categorical) return false;
  for (const auto& a : t.sensitive)
    if (a && *a != 0.0 && *a != 1.0) return false;
  return true;
}

double test_gap(const Eigen::VectorXd& scores, const DatasetTable& t) {
  if (!fpr_applicable(t)) return kNaN;
  try {
    return fpr_gap(predict_labels(scores, t.task_kind), t.label, t.sensitive);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::EmptyGroup) return kNaN;
    throw;
  }
}

[[noreturn]] void rethrow_with_epoch(const Error& e, std::size_t epoch) {
  throw Error(e.kind(), "epoch " + std::to_string(epoch) + ": " + e.what());
}

// Everything the loop needs to know about one objective. Scores passed to
// the hooks are the module's raw outputs; offsets (base scores) are applied
// inside.
struct Problem {
  std::size_t data_rows = 0;
  // Mean data term over the rows; writes the parameter gradient.
  std::function<double(const ScoreModule&, const std::vector<Index>*, Eigen::VectorXd&)> data_term;
  // Unscaled penalty on the annotated rows; writes the parameter gradient when asked.
  std::function<double(const ScoreModule&, Eigen::VectorXd*)> penalty;
  std::function<double(const ScoreModule&)> val_error;
  std::function<double(const ScoreModule&)> test_fpr;
};

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

TrainResult run_training(ScoreModule module, const Problem& problem, double lambda,
                         const TrainConfig& config) {
  config.validate();
  Optimizer opt(config.optimizer, static_cast<Index>(module.parameter_count()));
  Rng shuffle_rng(derive_seed(config.seed, {2}));
  const bool minibatch = config.batch_size > 0 && config.batch_size < problem.data_rows;
  std::vector<Index> order(problem.data_rows);
  std::iota(order.begin(), order.end(), Index{0});

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_params = module.parameters();
  std::size_t since_best = 0;
  Eigen::VectorXd grad, pen_grad;

  auto step = [&](const std::vector<Index>* rows, std::size_t epoch) {
    const double data = problem.data_term(module, rows, grad);
    if (lambda > 0.0 && problem.penalty) {
      try {
        problem.penalty(module, &pen_grad);
      } catch (const Error& e) {
        rethrow_with_epoch(e, epoch);
      }
      grad += lambda * pen_grad;
    }
    if (!std::isfinite(data) || !all_finite(grad))
      fail(ErrorKind::Diverged, "epoch " + std::to_string(epoch) + ": non-finite loss or gradient");
    opt.step(module.mutable_parameters(), grad);
    if (!all_finite(module.parameters()))
      fail(ErrorKind::Diverged, "epoch " + std::to_string(epoch) + ": non-finite parameters");
    return data;
  };

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochRecord rec;
    if (!minibatch) {
      rec.data_term = step(nullptr, epoch);
    } else {
      shuffle_rng.shuffle(std::span<Index>(order));
      double weighted = 0.0;
      std::vector<Index> batch;
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t end = std::min(order.size(), start + config.batch_size);
        batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
        weighted += step(&batch, epoch) * static_cast<double>(end - start);
      }
      rec.data_term = weighted / static_cast<double>(order.size());
    }
    if (problem.penalty) {
      try {
        rec.penalty = problem.penalty(module, nullptr);
      } catch (const Error& e) {
        rethrow_with_epoch(e, epoch);
      }
    } else {
      rec.penalty = kNaN;
    }
    rec.val_error = problem.val_error(module);
    rec.test_fpr_gap = problem.test_fpr ? problem.test_fpr(module) : kNaN;
    result.history.push_back(rec);
    result.epochs_run = epoch;

    if (config.early_stopping_patience) {
      if (rec.val_error < best_val) {
        best_val = rec.val_error;
        best_params = module.parameters();
        result.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= *config.early_stopping_patience) {
        result.stopped_early = epoch < config.epochs;
        break;
      }
    }
  }
  if (config.early_stopping_patience) {
    module.set_parameters(best_params);
  } else {
    result.best_epoch = result.epochs_run;
  }
  result.final_penalty = result.history[result.best_epoch - 1].penalty;
  result.module = std::move(module);
  return result;
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<Index>* rows) {
  return rows ? Eigen::MatrixXd(m(*rows, Eigen::all)) : m;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<Index>* rows) {
  return rows ? Eigen::VectorXd(v(*rows)) : v;
}

double table_error(const Eigen::VectorXd& scores, const DatasetTable& t) {
  return prediction_error(predict_labels(scores, t.task_kind), t.label, t.task_kind);
}

// Shared by the in-processing trainer and its objective export.
struct InprocessingParts {
  DatasetTable annotated;
  Problem problem;
};

InprocessingParts inprocessing_problem(const DatasetTable& train, const DatasetTable& validation,
                                       const ObjectiveSpec& objective, const DatasetTable* test) {
  if (train.rows() == 0) fail(ErrorKind::EmptyDataset, "training table is empty");
  const auto ann = train.annotated_rows();
  InprocessingParts out;
  out.annotated = train.take(ann);
  Problem& p = out.problem;
  p.data_rows = train.rows();
  const PredictionLoss loss = objective.prediction_loss;
  p.data_term = [&train, loss](const ScoreModule& m, const std::vector<Index>* rows,
                               Eigen::VectorXd& grad) {
    const Eigen::MatrixXd x = gather(train.features, rows);
    const Eigen::VectorXd y = gather(train.label, rows);
    Eigen::VectorXd upstream;
    const double value = prediction_loss(loss, m.forward(x), y, upstream);
    grad = m.vjp(x, upstream);
    return value;
  };
  p.val_error = [&validation](const ScoreModule& m) {
    return table_error(m.forward(validation.features), validation);
  };
  if (test) p.test_fpr = [test](const ScoreModule& m) { return test_gap(m.forward(test->features), *test); };
  return out;
}

void attach_inprocessing_penalty(InprocessingParts& parts, const ObjectiveSpec& objective) {
  if (!objective.regularizer) return;
  const RegularizerSpec spec = *objective.regularizer;
  const DatasetTable* ann = &parts.annotated;
  parts.problem.penalty = [ann, spec](const ScoreModule& m, Eigen::VectorXd* grad) {
    if (ann->rows() == 0) fail(ErrorKind::EmptyGroup, "no annotated training rows for the penalty");
    const PenaltyResult r =
        fairness_penalty(spec, m.forward(ann->features), ann->label, ann->sensitive);
    if (grad) *grad = m.vjp(ann->features, r.gradient);
    return r.value;
  };
}

struct FrappeParts {
  DatasetTable annotated;
  Eigen::VectorXd base_pp, base_ann, base_val, base_test;
  Problem problem;
};

void build_frappe(FrappeParts& f, const BaseScorer& base, const DatasetTable& pp,
                  const DatasetTable& sens, const DatasetTable* validation,
                  const ObjectiveSpec& objective, const DatasetTable* test) {
  if (pp.rows() == 0) fail(ErrorKind::EmptyDataset, "posthoc table is empty");
  f.annotated = sens.take(sens.annotated_rows());
  f.base_pp = base_scores(base, pp);
  f.base_ann = base_scores(base, f.annotated);
  if (validation) f.base_val = base_scores(base, *validation);
  if (test) f.base_test = base_scores(base, *test);

  Problem& p = f.problem;
  p.data_rows = pp.rows();
  const DivergenceSpec div = objective.divergence;
  const Eigen::VectorXd* base_pp = &f.base_pp;
  p.data_term = [&pp, base_pp, div](const ScoreModule& m, const std::vector<Index>* rows,
                                    Eigen::VectorXd& grad) {
    const Eigen::MatrixXd x = gather(pp.features, rows);
    const Eigen::VectorXd b = gather(*base_pp, rows);
    const Eigen::VectorXd fair = b + m.forward(x);
    const DivergenceResult r = output_divergence(div, b, fair);
    grad = m.vjp(x, r.gradient);
    return r.value;
  };
  if (objective.regularizer) {
    const RegularizerSpec spec = *objective.regularizer;
    const DatasetTable* ann = &f.annotated;
    const Eigen::VectorXd* base_ann = &f.base_ann;
    p.penalty = [ann, base_ann, spec](const ScoreModule& m, Eigen::VectorXd* grad) {
      if (ann->rows() == 0) fail(ErrorKind::EmptyGroup, "no annotated rows for the penalty");
      const Eigen::VectorXd fair = *base_ann + m.forward(ann->features);
      const PenaltyResult r = fairness_penalty(spec, fair, ann->label, ann->sensitive);
      if (grad) *grad = m.vjp(ann->features, r.gradient);
      return r.value;
    };
  }
  if (validation) {
    const Eigen::VectorXd* bv = &f.base_val;
    p.val_error = [validation, bv](const ScoreModule& m) {
      return table_error(*bv + m.forward(validation->features), *validation);
    };
  }
  if (test) {
    const Eigen::VectorXd* bt = &f.base_test;
    p.test_fpr = [test, bt](const ScoreModule& m) {
      return test_gap(*bt + m.forward(test->features), *test);
    };
  }
}

void check_dims(const ScoreModule& m, const DatasetTable& t, const char* role) {
  if (t.cols() != m.input_dim())
    fail(ErrorKind::Dim, std::string(role) + " has " + std::to_string(t.cols()) +
                             " features, module expects " + std::to_string(m.input_dim()));
}

}  // namespace

TrainResult fit_base(const DatasetTable& train, const DatasetTable& validation,
                     const ModuleSpec& model, const TrainConfig& config, PredictionLoss loss,
                     const DatasetTable* test) {
  ObjectiveSpec objective;
  objective.mode = ObjectiveMode::in_processing;
  objective.prediction_loss = loss;
  return fit_inprocessing(train, validation, model, objective, config, test);
}

TrainResult fit_inprocessing(const DatasetTable& train, const DatasetTable& validation,
                             const ModuleSpec& model, const ObjectiveSpec& objective,
                             const TrainConfig& config, const DatasetTable* test) {
  objective.validate();
  config.validate();
  if (validation.cols() != train.cols()) fail(ErrorKind::Dim, "validation feature count differs");
  ScoreModule module = ScoreModule::make(model, train.cols());
  module.initialize(derive_seed(config.seed, {1}), false);
  InprocessingParts parts = inprocessing_problem(train, validation, objective, test);
  attach_inprocessing_penalty(parts, objective);
  return run_training(std::move(module), parts.problem, objective.lambda, config);
}

TrainResult fit_frappe(const BaseScorer& base, const ModuleSpec& posthoc,
                       const DatasetTable& posthoc_rows, const DatasetTable& sensitive_rows,
                       const DatasetTable& validation, const ObjectiveSpec& objective,
                       const TrainConfig& config, const DatasetTable* test) {
  objective.validate();
  config.validate();
  ScoreModule module = ScoreModule::make(posthoc, posthoc_rows.cols());
  check_dims(module, sensitive_rows, "sensitive table");
  check_dims(module, validation, "validation table");
  if (test) check_dims(module, *test, "test table");
  module.initialize(derive_seed(config.seed, {1}), true);
  FrappeParts parts;
  build_frappe(parts, base, posthoc_rows, sensitive_rows, &validation, objective, test);
  return run_training(std::move(module), parts.problem, objective.lambda, config);
}

ObjectiveValue inprocessing_objective(const ScoreModule& module, const DatasetTable& train,
                                      const ObjectiveSpec& objective) {
  objective.validate();
  check_dims(module, train, "training table");
  InprocessingParts parts = inprocessing_problem(train, train, objective, nullptr);
  attach_inprocessing_penalty(parts, objective);
  ObjectiveValue out;
  out.value = parts.problem.data_term(module, nullptr, out.gradient);
  if (objective.lambda > 0.0) {
    Eigen::VectorXd g;
    out.value += objective.lambda * parts.problem.penalty(module, &g);
    out.gradient += objective.lambda * g;
  }
  return out;
}

ObjectiveValue frappe_objective(const ScoreModule& posthoc, const BaseScorer& base,
                                const DatasetTable& posthoc_rows,
                                const DatasetTable& sensitive_rows,
                                const ObjectiveSpec& objective) {
  objective.validate();
  check_dims(posthoc, posthoc_rows, "posthoc table");
  check_dims(posthoc, sensitive_rows, "sensitive table");
  FrappeParts parts;
  build_frappe(parts, base, posthoc_rows, sensitive_rows, nullptr, objective, nullptr);
  ObjectiveValue out;
  out.value = parts.problem.data_term(posthoc, nullptr, out.gradient);
  if (objective.lambda > 0.0) {
    Eigen::VectorXd g;
    out.value += objective.lambda * parts.problem.penalty(posthoc, &g);
    out.gradient += objective.lambda * g;
  }
  return out;
}

std::vector<double> default_lambda_grid() {
  std::vector<double> grid(8);
  const double lo = std::log(0.1), hi = std::log(30.0);
  for (std::size_t i = 0; i < grid.size(); ++i)
    grid[i] = std::exp(lo + (hi - lo) * static_cast<double>(i) / 7.0);
  grid.front() = 0.1;
  grid.back() = 30.0;
  return grid;
}

std::uint64_t sweep_seed(std::uint64_t seed_base, std::size_t lambda_index, std::size_t repeat) {
  return derive_seed(seed_base, {0x5357ULL, lambda_index, repeat});
}

std::vector<SweepTask> sweep_tasks(const SweepProtocol& protocol) {
  if (protocol.lambdas.empty()) fail(ErrorKind::Config, "lambda list is empty");
  if (protocol.repeats == 0) fail(ErrorKind::Config, "repeats must be at least 1");
  std::vector<SweepTask> tasks;
  for (std::size_t li = 0; li < protocol.lambdas.size(); ++li) {
    if (!(protocol.lambdas[li] >= 0.0) || !std::isfinite(protocol.lambdas[li]))
      fail(ErrorKind::Config, "lambda values must be finite and nonnegative");
    for (std::size_t r = 0; r < protocol.repeats; ++r)
      tasks.push_back({li, r, protocol.lambdas[li], sweep_seed(protocol.seed_base, li, r)});
  }
  return tasks;
}

void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<SweepOutcome> sweep(const SweepProtocol& protocol,
                                const std::function<TradeoffPoint(const SweepTask&)>& run,
                                std::size_t workers) {
  const auto tasks = sweep_tasks(protocol);
  std::vector<SweepOutcome> outcomes(tasks.size());
  parallel_for(tasks.size(), workers, [&](std::size_t i) {
    outcomes[i].task = tasks[i];
    try {
      TradeoffPoint p = run(tasks[i]);
      p.lambda = tasks[i].lambda;
      p.seed = tasks[i].seed;
      outcomes[i].point = p;
    } catch (const std::exception& e) {
      outcomes[i].error = e.what();
      if (outcomes[i].error.empty()) outcomes[i].error = "unknown failure";
    }
  });
  return outcomes;
}

Eigen::VectorXd naive_randomized_baseline(const Eigen::VectorXd& base_predictions, double p,
                                          double favorable_label, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::InvalidFraction, "p must lie in [0, 1]");
  Rng rng(seed);
  Eigen::VectorXd out(base_predictions.size());
  for (Index i = 0; i < out.size(); ++i)
    out(i) = rng.bernoulli(p) ? base_predictions(i) : favorable_label;
  return out;
}

}  // namespace frappe
