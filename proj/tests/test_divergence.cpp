// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <doctest.h>

#include "frappe/divergence.hpp"
#include "helpers.hpp"

using namespace frappe;

namespace {

// KL between Bernoullis written with explicit probabilities.
double kl_direct(double zb, double zf) {
  const double p = 1.0 / (1.0 + std::exp(-zb));
  const double q = 1.0 / (1.0 + std::exp(-zf));
  return p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
}

Eigen::VectorXd random_vector(Rng& rng, Eigen::Index n, double scale = 1.0) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = scale * rng.normal();
  return v;
}

}  // namespace

TEST_CASE("kl_bernoulli: hand value, zero at equality") {
  Eigen::VectorXd b(1), f(1);
  b << 0.0;
  f << std::log(3.0);
  CHECK(kl_bernoulli(b, f).value == doctest::Approx(0.5 * std::log(4.0 / 3.0)).epsilon(1e-12));
  CHECK(kl_bernoulli(b, f).value == doctest::Approx(0.143841).epsilon(1e-6));

  Rng rng(1);
  const Eigen::VectorXd z = random_vector(rng, 20, 3.0);
  const auto same = kl_bernoulli(z, z);
  CHECK(same.value == 0.0);
  CHECK(same.gradient.isZero(0.0));
  CHECK(testutil::error_kind_of([&] { kl_bernoulli(z, Eigen::VectorXd::Zero(3)); }) == ErrorKind::Dim);
}

TEST_CASE("kl_bernoulli: agrees with the probability form and its gradient") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd zb = random_vector(rng, 64, 2.0), zf = random_vector(rng, 64, 2.0);
    for (bool reversed : {false, true}) {
      double direct = 0.0;
      for (Eigen::Index i = 0; i < 64; ++i) direct += reversed ? kl_direct(zf(i), zb(i)) : kl_direct(zb(i), zf(i));
      const auto r = kl_bernoulli(zb, zf, reversed);
      CHECK(r.value == doctest::Approx(direct / 64.0).epsilon(1e-10));
      CHECK(r.value >= 0.0);
      const Eigen::VectorXd num = testutil::central_diff(
          [&](const Eigen::VectorXd& x) { return kl_bernoulli(zb, x, reversed).value; }, zf);
      CHECK(testutil::max_rel_err(r.gradient, num) <= 1e-4);
      if (!reversed) {
        Eigen::VectorXd expected(64);
        for (Eigen::Index i = 0; i < 64; ++i) expected(i) = (sigmoid(zf(i)) - sigmoid(zb(i))) / 64.0;
        CHECK((r.gradient - expected).lpNorm<Eigen::Infinity>() <= 1e-15);
      }
    }
  }
}

TEST_CASE("kl_bernoulli: stays finite on saturated logits") {
  Eigen::VectorXd b(2), f(2);
  b << 800.0, -800.0;
  f << -800.0, 800.0;
  const auto r = kl_bernoulli(b, f);
  CHECK(std::isfinite(r.value));
  CHECK(r.gradient.allFinite());
}

TEST_CASE("mse_divergence: values and gradient") {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(2), f(2);
  f << 1.0, 3.0;
  const auto r = mse_divergence(b, f);
  CHECK(r.value == 5.0);
  CHECK(r.gradient(0) == 1.0);
  CHECK(r.gradient(1) == 3.0);
  CHECK(mse_divergence(f, f).value == 0.0);
  Rng rng(3);
  const Eigen::VectorXd zb = random_vector(rng, 64), zf = random_vector(rng, 64);
  const Eigen::VectorXd num =
      testutil::central_diff([&](const Eigen::VectorXd& x) { return mse_divergence(zb, x).value; }, zf);
  CHECK(testutil::max_rel_err(mse_divergence(zb, zf).gradient, num) <= 1e-4);
}

TEST_CASE("bregman_glm: anchor, linear example, logistic oracle") {
  Rng rng(4);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(30, 4);
  const Eigen::VectorXd t = random_vector(rng, 4), tb = random_vector(rng, 4);
  CHECK(bregman_glm(tb, tb, x, GlmFamily::logistic) == 0.0);

  Eigen::MatrixXd one(1, 1);
  one << 1.0;
  Eigen::VectorXd two(1), zero = Eigen::VectorXd::Zero(1);
  two << 2.0;
  CHECK(bregman_glm(two, zero, one, GlmFamily::linear) == doctest::Approx(4.0).epsilon(1e-15));

  // Term-by-term Bregman of softplus with explicit logs.
  double direct = 0.0;
  for (Eigen::Index i = 0; i < 30; ++i) {
    const double z = x.row(i).dot(t), zb = x.row(i).dot(tb);
    direct += std::log1p(std::exp(z)) - std::log1p(std::exp(zb)) - (z - zb) / (1.0 + std::exp(-zb));
  }
  CHECK(std::abs(bregman_glm(t, tb, x, GlmFamily::logistic) - direct / 30.0) <= 1e-10);

  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::VectorXd a = random_vector(rng, 4, 2.0);
    CHECK(bregman_glm(a, tb, x, GlmFamily::logistic) >= -1e-10);
  }
}
