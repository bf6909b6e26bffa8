// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <set>

#include <doctest.h>

#include "frappe/training.hpp"
#include "helpers.hpp"

using namespace frappe;
using testutil::error_kind_of;

namespace {

DatasetTable synth(std::size_t n, std::uint64_t seed, double shift = 1.0) {
  SynthSpec s;
  s.n = n;
  s.d = 4;
  s.seed = seed;
  s.group_prob = 0.4;
  s.group_mean_shift = {shift, 0.0, 0.0, 0.0};
  s.group_label_shift = 1.0;
  return synth_two_group(s);
}

TrainConfig quick(std::size_t epochs = 30, double lr = 0.05) {
  TrainConfig c;
  c.epochs = epochs;
  c.optimizer.lr = lr;
  c.seed = 3;
  return c;
}

ObjectiveSpec frappe_spec(double lambda) {
  ObjectiveSpec o;
  o.mode = ObjectiveMode::frappe;
  o.lambda = lambda;
  o.regularizer = MinDiffMMD{};
  return o;
}

ObjectiveSpec inproc_spec(double lambda, RegularizerSpec reg = MinDiffMMD{}) {
  ObjectiveSpec o;
  o.mode = ObjectiveMode::in_processing;
  o.lambda = lambda;
  o.regularizer = reg;
  return o;
}

void check_histories_equal(const TrainResult& a, const TrainResult& b) {
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].data_term == b.history[i].data_term);
    CHECK(a.history[i].val_error == b.history[i].val_error);
  }
}

}  // namespace

TEST_CASE("fit_base: separable two-point data reaches zero train error") {
  Eigen::MatrixXd x(2, 1);
  x << -1.0, 1.0;
  Eigen::VectorXd y(2);
  y << 0.0, 1.0;
  const auto t = testutil::make_table(x, y, {0.0, 1.0});
  const auto r = fit_base(t, t, ModuleSpec{}, quick(200, 0.1));
  const Eigen::VectorXd pred = predict_labels(r.module.forward(t.features), TaskKind::binary_classification);
  CHECK(pred == y);
  CHECK(r.history.size() == r.epochs_run);
  CHECK(r.epochs_run == 200);
}

TEST_CASE("fit_base: deterministic per seed, minibatch included") {
  const auto t = synth(400, 1);
  for (std::size_t batch : {std::size_t{0}, std::size_t{32}}) {
    auto c = quick(10);
    c.batch_size = batch;
    const ModuleSpec mlp{ModuleKind::mlp1, 8};
    const auto a = fit_base(t, t, mlp, c);
    const auto b = fit_base(t, t, mlp, c);
    CHECK(a.module.parameters() == b.module.parameters());
  }
}

TEST_CASE("fit_base: huge learning rate diverges with the epoch in the message") {
  const auto t = synth(300, 2);
  auto c = quick(50, 1e6);
  c.optimizer.kind = OptimizerSpec::Kind::sgd;
  try {
    fit_base(t, t, ModuleSpec{ModuleKind::mlp1, 16}, c);
    FAIL("expected Diverged");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Diverged);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("fit_inprocessing: lambda 0 follows the fit_base trajectory") {
  const auto t = synth(300, 3);
  const ModuleSpec mlp{ModuleKind::mlp1, 8};
  const auto base = fit_base(t, t, mlp, quick());
  const auto ip = fit_inprocessing(t, t, mlp, inproc_spec(0.0), quick());
  check_histories_equal(base, ip);
  CHECK(base.module.parameters() == ip.module.parameters());
}

TEST_CASE("fit_inprocessing: large lambda lowers the train penalty") {
  const auto t = synth(600, 4, 1.5);
  auto c = quick(80);
  const auto lo = fit_inprocessing(t, t, ModuleSpec{}, inproc_spec(0.0), c);
  const auto hi = fit_inprocessing(t, t, ModuleSpec{}, inproc_spec(100.0), c);
  CHECK(hi.final_penalty <= lo.history.back().penalty);
}

TEST_CASE("fit_frappe: lambda 0 keeps the correction at exactly zero") {
  const auto t = synth(300, 5);
  const auto base = fit_base(t, t, ModuleSpec{}, quick());
  const BaseScorer frozen = freeze(base.module);
  const auto r = fit_frappe(frozen, ModuleSpec{ModuleKind::mlp1, 8}, t, t, t, frappe_spec(0.0), quick());
  const Eigen::VectorXd out = r.module.forward(t.features);
  CHECK(out.isZero(0.0));
  const FairModel fm{frozen, r.module, TaskKind::binary_classification};
  CHECK(fair_scores(fm, t) == base_scores(frozen, t));
}

TEST_CASE("fit_frappe: frozen module and score column give identical histories") {
  auto t = synth(400, 6, 1.5);
  const auto base = fit_base(t, t, ModuleSpec{}, quick());
  const BaseScorer frozen = freeze(base.module);
  const Eigen::VectorXd before = base.module.parameters();
  auto with_col = t;
  with_col.base_score = base_scores(frozen, t);
  const Eigen::VectorXd col_before = *with_col.base_score;
  const auto a = fit_frappe(frozen, ModuleSpec{}, t, t, t, frappe_spec(2.0), quick());
  const auto b = fit_frappe(ScoreColumn{}, ModuleSpec{}, with_col, with_col, with_col, frappe_spec(2.0), quick());
  check_histories_equal(a, b);
  for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].penalty == b.history[i].penalty);
  CHECK(std::get<FrozenModule>(frozen).module->parameters() == before);
  CHECK(*with_col.base_score == col_before);
  CHECK(error_kind_of([&] { fit_frappe(ScoreColumn{}, ModuleSpec{}, t, t, t, frappe_spec(1.0), quick()); }) ==
        ErrorKind::MissingBaseScores);
}

TEST_CASE("early stopping returns the best validation epoch") {
  const auto all = synth(600, 7);
  SplitSpec sp;
  sp.seed = 1;
  const auto s = split(all, sp);
  auto c = quick(120, 0.05);
  c.early_stopping_patience = 10;
  const auto r = fit_inprocessing(s.train, s.validation, ModuleSpec{ModuleKind::mlp1, 32}, inproc_spec(1.0), c);
  double best = INFINITY;
  for (const auto& h : r.history) best = std::min(best, h.val_error);
  const double achieved = prediction_error(predict_labels(r.module.forward(s.validation.features), TaskKind::binary_classification),
                                           s.validation.label, TaskKind::binary_classification);
  CHECK(achieved == best);
  CHECK(r.history[r.best_epoch - 1].val_error == best);
  CHECK(r.history.size() == r.epochs_run);
}

TEST_CASE("objective gradients match central differences at n=64") {
  const auto t = testutil::random_table(64, 3, 21);
  std::vector<RegularizerSpec> regs{MinDiffMMD{}, MinDiffMMD{Kernel::laplace, 0.7, MinDiffMode::eqodds, ScoreSpace::logit},
                                    KdeSP{}, Chi2Cond{16, std::nullopt, true}};
  for (ModuleSpec m : {ModuleSpec{}, ModuleSpec{ModuleKind::mlp1, 6}, ModuleSpec{ModuleKind::mlp3, 4}}) {
    for (const auto& reg : regs) {
      for (PredictionLoss loss : {PredictionLoss::logistic, PredictionLoss::squared_error}) {
        ScoreModule mod = ScoreModule::make(m, 3);
        mod.initialize(5, false);
        if (mod.min_abs_preactivation(t.features) < 1e-3) continue;
        auto obj = inproc_spec(0.7, reg);
        obj.prediction_loss = loss;
        const auto an = inprocessing_objective(mod, t, obj);
        const Eigen::VectorXd num = testutil::central_diff(
            [&](const Eigen::VectorXd& p) {
              ScoreModule c = mod;
              c.set_parameters(p);
              return inprocessing_objective(c, t, obj).value;
            },
            mod.parameters());
        CHECK(testutil::max_rel_err(an.gradient, num) <= 1e-4);
      }
      ScoreModule base = ScoreModule::make(ModuleSpec{}, 3);
      base.initialize(6, false);
      base.mutable_parameters().setConstant(0.3);
      const BaseScorer frozen = freeze(base);
      ScoreModule post = ScoreModule::make(m, 3);
      post.initialize(7, false);
      if (post.min_abs_preactivation(t.features) < 1e-3) continue;
      for (bool reversed : {false, true}) {
        auto obj = frappe_spec(0.9);
        obj.regularizer = reg;
        obj.divergence.reversed = reversed;
        const auto an = frappe_objective(post, frozen, t, t, obj);
        const Eigen::VectorXd num = testutil::central_diff(
            [&](const Eigen::VectorXd& p) {
              ScoreModule c = post;
              c.set_parameters(p);
              return frappe_objective(c, frozen, t, t, obj).value;
            },
            post.parameters());
        CHECK(testutil::max_rel_err(an.gradient, num) <= 1e-4);
      }
    }
  }
}

TEST_CASE("sweep: default grid, 80 tasks, seeds distinct") {
  const auto grid = default_lambda_grid();
  REQUIRE(grid.size() == 8);
  CHECK(grid.front() == 0.1);
  CHECK(grid.back() == 30.0);
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] / grid[i - 1] == doctest::Approx(std::pow(300.0, 1.0 / 7.0)));
  SweepProtocol p{grid, 10, 42};
  const auto tasks = sweep_tasks(p);
  CHECK(tasks.size() == 80);
  std::set<std::uint64_t> seeds;
  for (const auto& t : tasks) seeds.insert(t.seed);
  CHECK(seeds.size() == 80);
  CHECK(tasks[13].seed == sweep_seed(42, 1, 3));
  CHECK(error_kind_of([] { sweep_tasks(SweepProtocol{{}, 10, 0}); }) == ErrorKind::Config);
}

TEST_CASE("sweep: output independent of worker count, failures captured") {
  const SweepProtocol p{{0.0, 1.0, 2.0}, 4, 9};
  auto run = [](const SweepTask& t) {
    if (t.lambda_index == 2 && t.repeat == 1) throw Error(ErrorKind::Diverged, "boom");
    TradeoffPoint pt;
    pt.test_error = static_cast<double>(t.seed % 1000) / 1000.0;
    return pt;
  };
  const auto one = sweep(p, run, 1);
  const auto four = sweep(p, run, 4);
  REQUIRE(one.size() == 12);
  REQUIRE(four.size() == 12);
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].task.seed == four[i].task.seed);
    CHECK(one[i].error == four[i].error);
    if (one[i].point) {
      CHECK(one[i].point->test_error == four[i].point->test_error);
      CHECK(one[i].point->lambda == one[i].task.lambda);
      CHECK(one[i].point->seed == one[i].task.seed);
    }
  }
  CHECK(!one[9].point);
  CHECK(one[9].error.find("boom") != std::string::npos);
}

TEST_CASE("sweep: real training is worker-count independent") {
  const auto t = synth(300, 8);
  const SweepProtocol p{{0.5, 5.0}, 2, 1};
  auto run = [&](const SweepTask& task) {
    auto c = quick(15);
    c.seed = task.seed;
    const auto r = fit_inprocessing(t, t, ModuleSpec{ModuleKind::mlp1, 4}, inproc_spec(task.lambda), c);
    TradeoffPoint pt = evaluate_scores(r.module.forward(t.features), t);
    pt.train_penalty = r.final_penalty;
    return pt;
  };
  const auto a = sweep(p, run, 1), b = sweep(p, run, 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].point);
    CHECK(a[i].point->fpr_gap == b[i].point->fpr_gap);
    CHECK(a[i].point->train_penalty == b[i].point->train_penalty);
  }
}

TEST_CASE("naive randomized baseline: endpoints and mixture rate") {
  Rng rng(10);
  Eigen::VectorXd base(10000);
  for (Eigen::Index i = 0; i < base.size(); ++i) base(i) = rng.uniform() < 0.3 ? 0.0 : 1.0;
  CHECK(naive_randomized_baseline(base, 1.0, 0.0, 1) == base);
  CHECK(naive_randomized_baseline(base, 0.0, 0.0, 1).isZero(0.0));
  const Eigen::VectorXd half = naive_randomized_baseline(base, 0.5, 0.0, 1);
  const double base_rate = (base.array() == 0.0).cast<double>().mean();
  const double rate = (half.array() == 0.0).cast<double>().mean();
  CHECK(std::abs(rate - (0.5 * base_rate + 0.5)) <= 0.02);
  CHECK(naive_randomized_baseline(base, 0.5, 0.0, 1) == half);
  CHECK(error_kind_of([&] { naive_randomized_baseline(base, 1.5, 0.0, 1); }) == ErrorKind::InvalidFraction);
}
