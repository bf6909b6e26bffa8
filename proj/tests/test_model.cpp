// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "frappe/model.hpp"
#include "helpers.hpp"

using namespace frappe;

TEST_CASE("forward: hand-computed values") {
  ScoreModule lin(2, {});
  Eigen::VectorXd p(3);
  p << 1, -1, 0.5;
  lin.set_parameters(p);
  Eigen::MatrixXd x(1, 2);
  x << 2, 1;
  CHECK(lin.forward(x)(0) == 1.5);

  // W = I, biases 0, output weights 1: sums nonnegative coordinates.
  ScoreModule mlp(2, {2});
  Eigen::VectorXd q(2 * 2 + 2 + 2 + 1);
  q << 1, 0, 0, 1, 0, 0, 1, 1, 0;
  mlp.set_parameters(q);
  x << 1, 2;
  CHECK(mlp.forward(x)(0) == 3.0);

  ScoreModule zero = ScoreModule::make({ModuleKind::mlp3, 16}, 4);
  zero.mutable_parameters().setZero();
  CHECK(zero.forward(Eigen::MatrixXd::Random(5, 4)).isZero(0.0));
}

TEST_CASE("vjp: hand-computed linear gradient") {
  ScoreModule lin(1, {});
  Eigen::MatrixXd x(1, 1);
  x << 3;
  Eigen::VectorXd up(1);
  up << 2;
  const Eigen::VectorXd g = lin.vjp(x, up);
  CHECK(g(0) == 6.0);
  CHECK(g(1) == 2.0);
  CHECK(lin.vjp(x, Eigen::VectorXd::Zero(1)).isZero(0.0));
}

TEST_CASE("vjp matches central differences on random draws") {
  int checked = 0;
  for (ModuleKind kind : {ModuleKind::linear, ModuleKind::mlp1, ModuleKind::mlp3}) {
    for (std::uint64_t draw = 0; draw < 40; ++draw) {
      Rng rng(derive_seed(draw, {static_cast<std::uint64_t>(kind)}));
      ScoreModule m = ScoreModule::make({kind, 6}, 3);
      for (Eigen::Index i = 0; i < m.parameters().size(); ++i) m.mutable_parameters()(i) = rng.normal();
      Eigen::MatrixXd x(5, 3);
      Eigen::VectorXd up(5);
      for (Eigen::Index i = 0; i < 5; ++i) {
        up(i) = rng.normal();
        for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = rng.normal();
      }
      // Skip draws that put a unit within a step of a relu kink.
      if (m.min_abs_preactivation(x) < 1e-3) continue;
      const Eigen::VectorXd analytic = m.vjp(x, up);
      const Eigen::VectorXd numeric = testutil::central_diff(
          [&](const Eigen::VectorXd& theta) {
            ScoreModule c = m;
            c.set_parameters(theta);
            return up.dot(c.forward(x));
          },
          m.parameters());
      CHECK(testutil::max_rel_err(analytic, numeric) <= 1e-6);
      ++checked;
    }
  }
  CHECK(checked >= 100);
}

TEST_CASE("linear module scales exactly with its parameters") {
  ScoreModule m(3, {});
  Eigen::VectorXd p(4);
  p << 0.5, -2, 1.25, 3;
  m.set_parameters(p);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(7, 3);
  ScoreModule scaled = m;
  scaled.set_parameters(4.0 * p);
  CHECK(scaled.forward(x) == 4.0 * m.forward(x));
}

TEST_CASE("initialize: zeros for linear, zero output for posthoc") {
  ScoreModule lin = ScoreModule::make({ModuleKind::linear, 0}, 4);
  lin.initialize(3, false);
  CHECK(lin.parameters().isZero(0.0));

  ScoreModule t = ScoreModule::make({ModuleKind::mlp1, 8}, 4);
  t.initialize(3, true);
  CHECK(t.forward(Eigen::MatrixXd::Random(6, 4)).isZero(0.0));
  CHECK_FALSE(t.parameters().isZero(0.0));

  ScoreModule a = ScoreModule::make({ModuleKind::mlp3, 8}, 4), b = a;
  a.initialize(9, false);
  b.initialize(9, false);
  CHECK(a.parameters() == b.parameters());
  const double bound = 1.0 / std::sqrt(4.0);
  CHECK(a.parameters().head(32).cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("json round trip and count validation") {
  ScoreModule m = ScoreModule::make({ModuleKind::mlp1, 5}, 3);
  m.initialize(1, false);
  const auto doc = m.to_json();
  const ScoreModule back = ScoreModule::from_json(doc);
  CHECK(back.parameters() == m.parameters());
  CHECK(back.kind() == ModuleKind::mlp1);

  auto bad = doc;
  bad["parameters"].erase(0);
  CHECK(testutil::error_kind_of([&] { ScoreModule::from_json(bad); }) == ErrorKind::Schema);
  CHECK(testutil::error_kind_of([] { ScoreModule::from_json(nlohmann::json::object()); }) ==
        ErrorKind::Schema);
}

TEST_CASE("fair_scores: additive composition") {
  auto t = testutil::random_table(20, 3, 4);
  t.base_score = Eigen::VectorXd::LinSpaced(20, -1, 1);
  FairModel fm{ScoreColumn{}, ScoreModule(3, {}), TaskKind::binary_classification};
  CHECK(fair_scores(fm, t) == *t.base_score);

  auto one = testutil::make_table(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1), {0.0});
  one.base_score = Eigen::VectorXd::Zero(1);
  ScoreModule bias(1, {});
  Eigen::VectorXd p(2);
  p << 0, 1.2;
  bias.set_parameters(p);
  CHECK(fair_scores(FairModel{ScoreColumn{}, bias, TaskKind::binary_classification}, one)(0) == 1.2);

  ScoreModule base = ScoreModule::make({ModuleKind::mlp1, 4}, 3);
  base.initialize(2, false);
  ScoreModule post = ScoreModule::make({ModuleKind::linear, 0}, 3);
  post.mutable_parameters().setConstant(0.3);
  auto materialized = t;
  materialized.base_score = base.forward(t.features);
  CHECK(fair_scores(FairModel{freeze(base), post, TaskKind::binary_classification}, t) ==
        fair_scores(FairModel{ScoreColumn{}, post, TaskKind::binary_classification}, materialized));

  auto missing = t;
  missing.base_score.reset();
  CHECK(testutil::error_kind_of([&] { base_scores(ScoreColumn{}, missing); }) ==
        ErrorKind::MissingBaseScores);
}

TEST_CASE("predict_labels: threshold at zero, ties to class 0") {
  Eigen::VectorXd s(3);
  s << -2, 0, 3;
  const Eigen::VectorXd p = predict_labels(s, TaskKind::binary_classification);
  CHECK(p(0) == 0.0);
  CHECK(p(1) == 0.0);
  CHECK(p(2) == 1.0);
  CHECK(predict_labels(Eigen::VectorXd::Constant(4, 10.0), TaskKind::binary_classification).isOnes());
  CHECK(predict_labels(Eigen::VectorXd::Constant(1, 1.5), TaskKind::regression)(0) == 1.5);
}
