// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numbers>

#include <doctest.h>

#include "frappe/divergence.hpp"
#include "frappe/regularizers.hpp"
#include "helpers.hpp"

using namespace frappe;
using testutil::error_kind_of;

namespace {

std::vector<double> draw(Rng& rng, std::size_t n, double scale = 1.0, double shift = 0.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = shift + scale * rng.normal();
  return v;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Straight transcription of the plug-in chi-square estimator on the grid,
// written without matrix products.
double chi2_oracle(std::vector<double> s, std::vector<double> a, std::size_t B, double hs, double ha) {
  auto standardize = [](std::vector<double>& v) {
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(v.size()));
    for (double& x : v) x = sd > 1e-12 ? (x - mean) / sd : x - mean;
  };
  standardize(s);
  standardize(a);
  const double n = static_cast<double>(s.size());
  const double step = 6.0 / static_cast<double>(B - 1);
  auto pdf = [](double u, double h) { return std::exp(-0.5 * u * u / (h * h)) / (h * std::sqrt(2 * std::numbers::pi)); };
  double total = 0;
  for (std::size_t k = 0; k < B; ++k) {
    const double gs = -3.0 + step * static_cast<double>(k);
    for (std::size_t l = 0; l < B; ++l) {
      const double ga = -3.0 + step * static_cast<double>(l);
      double joint = 0, ms = 0, ma = 0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        joint += pdf(gs - s[i], hs) * pdf(ga - a[i], ha);
        ms += pdf(gs - s[i], hs);
        ma += pdf(ga - a[i], ha);
      }
      joint /= n;
      const double prod = (ms / n) * (ma / n);
      total += (joint - prod) * (joint - prod) / std::max(prod, 1e-6) * step * step;
    }
  }
  return total;
}

// Binary table rows: labels cycle 0,1; groups cycle in pairs.
struct Cells {
  Eigen::VectorXd labels;
  std::vector<std::optional<double>> groups;
};

Cells cells(std::size_t n) {
  Cells c{Eigen::VectorXd(static_cast<Eigen::Index>(n)), std::vector<std::optional<double>>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    c.labels(static_cast<Eigen::Index>(i)) = static_cast<double>(i % 2);
    c.groups[i] = static_cast<double>((i / 2) % 2);
  }
  return c;
}

}  // namespace

TEST_CASE("mmd2: closed-form two-point value and symmetry") {
  const std::vector<double> p{0.0}, q{1.0};
  CHECK(mmd2(p, q, Kernel::gaussian, 1.0).value == doctest::Approx(2.0 - 2.0 * std::exp(-0.5)).epsilon(1e-12));
  CHECK(mmd2(p, q, Kernel::gaussian, 1.0).value == doctest::Approx(0.786939).epsilon(1e-6));
  Rng rng(1);
  const auto a = draw(rng, 30), b = draw(rng, 20, 1.0, 0.3);
  CHECK(mmd2(a, b, Kernel::gaussian, 0.5).value == doctest::Approx(mmd2(b, a, Kernel::gaussian, 0.5).value).epsilon(1e-13));
  CHECK(mmd2(a, b, Kernel::laplace, 0.5).value == doctest::Approx(mmd2(b, a, Kernel::laplace, 0.5).value).epsilon(1e-13));
}

TEST_CASE("mmd2: zero exactly on equal multisets, positive otherwise") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    auto a = draw(rng, 1 + rng.below(8));
    auto b = a;
    std::reverse(b.begin(), b.end());
    CHECK(mmd2(a, b, Kernel::gaussian, 0.7).value <= 1e-12);
    b[0] += 0.25;
    CHECK(mmd2(a, b, Kernel::gaussian, 0.7).value > 1e-10);
  }
  // Large samples go through the series path.
  auto big = draw(rng, 200);
  auto shuffled = big;
  rng.shuffle(std::span<double>(shuffled));
  CHECK(mmd2(big, shuffled, Kernel::gaussian, 0.5).value <= 1e-12);
}

TEST_CASE("mmd2: series path agrees with the direct sum") {
  Rng rng(3);
  for (double sigma : {0.3, 0.5, 1.0}) {
    const auto p = draw(rng, 300, 0.3, 0.4);
    const auto q = draw(rng, 150, 0.35, 0.6);
    const auto fast = mmd2(p, q, Kernel::gaussian, sigma);
    const auto slow = mmd2_direct(p, q, Kernel::gaussian, sigma);
    CHECK(fast.value == doctest::Approx(slow.value).epsilon(1e-9));
    CHECK((fast.grad_p - slow.grad_p).lpNorm<Eigen::Infinity>() <= 1e-10 * std::max(1.0, slow.grad_p.lpNorm<Eigen::Infinity>()));
    CHECK((fast.grad_q - slow.grad_q).lpNorm<Eigen::Infinity>() <= 1e-10 * std::max(1.0, slow.grad_q.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("mmd2: gradients match central differences") {
  Rng rng(4);
  for (Kernel k : {Kernel::gaussian, Kernel::laplace}) {
    for (std::size_t np : {5u, 80u}) {
      const auto p = draw(rng, np), q = draw(rng, 70, 1.2, 0.2);
      const auto r = mmd2(p, q, k, 0.8);
      Eigen::VectorXd pv = Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size()));
      const Eigen::VectorXd num = testutil::central_diff(
          [&](const Eigen::VectorXd& x) {
            return mmd2(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), q, k, 0.8).value;
          },
          pv);
      // The laplace kernel has a kink at zero distance; only pairs at
      // distance > step matter for random draws.
      CHECK(testutil::max_rel_err(r.grad_p, num) <= 1e-4);
    }
  }
  CHECK(error_kind_of([] { mmd2(std::vector<double>{}, std::vector<double>{1.0}, Kernel::gaussian, 1.0); }) ==
        ErrorKind::EmptyGroup);
}

TEST_CASE("mindiff: hand-computed probability-space value") {
  Eigen::VectorXd s(2);
  s << 0.0, std::log(3.0);
  const Eigen::VectorXd y = Eigen::VectorXd::Zero(2);
  const std::vector<std::optional<double>> a{0.0, 1.0};
  const auto r = mindiff_penalty(s, y, a, MinDiffMMD{});
  CHECK(r.value == doctest::Approx(2.0 - 2.0 * std::exp(-0.125)).epsilon(1e-12));
  CHECK(r.value == doctest::Approx(0.2350062).epsilon(1e-6));
}

TEST_CASE("mindiff: cell errors, excluded rows and mode sums") {
  Cells c = cells(40);
  Rng rng(5);
  Eigen::VectorXd s(40);
  for (Eigen::Index i = 0; i < 40; ++i) s(i) = rng.normal();

  const auto eqopp = mindiff_penalty(s, c.labels, c.groups, MinDiffMMD{});
  for (Eigen::Index i = 0; i < 40; ++i)
    if (c.labels(i) == 1.0) CHECK(eqopp.gradient(i) == 0.0);

  auto partial = c.groups;
  partial[3].reset();
  partial[10].reset();
  const auto r = mindiff_penalty(s, c.labels, partial, MinDiffMMD{});
  CHECK(r.gradient(3) == 0.0);
  CHECK(r.gradient(10) == 0.0);

  MinDiffMMD odds;
  odds.mode = MinDiffMode::eqodds;
  const auto both = mindiff_penalty(s, c.labels, c.groups, odds);
  Eigen::VectorXd flipped = Eigen::VectorXd::Ones(40) - c.labels;
  const auto y1 = mindiff_penalty(s, flipped, c.groups, MinDiffMMD{});
  CHECK(both.value == doctest::Approx(eqopp.value + y1.value).epsilon(1e-12));

  auto no_y0_in_a1 = c.groups;
  for (std::size_t i = 0; i < 40; ++i)
    if (c.labels(static_cast<Eigen::Index>(i)) == 0.0 && c.groups[i] == 1.0) no_y0_in_a1[i] = 0.0;
  try {
    mindiff_penalty(s, c.labels, no_y0_in_a1, MinDiffMMD{});
    FAIL("expected EmptyGroup");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyGroup);
    CHECK(std::string(e.what()).find("Y=0, A=1") != std::string::npos);
  }

  auto identical = s;
  for (Eigen::Index i = 0; i < 40; i += 4) identical(i + 2) = identical(i);  // groups share Y=0 scores
  CHECK(mindiff_penalty(identical, c.labels, c.groups, MinDiffMMD{}).value <= 1e-12);
}

TEST_CASE("kde_sp: hand-computed values") {
  const std::vector<std::optional<double>> a{0.0, 1.0};
  Eigen::VectorXd at_tau = Eigen::VectorXd::Constant(2, 0.5);
  CHECK(kde_sp_penalty(at_tau, a, 0.1, 0.5).value == doctest::Approx(0.0));
  Eigen::VectorXd split(2);
  split << 0.6, 0.4;
  const double expected = normal_cdf(1.0) - normal_cdf(-1.0);
  CHECK(kde_sp_penalty(split, a, 0.1, 0.5).value == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.682689).epsilon(1e-6));
  const std::vector<std::optional<double>> none{std::nullopt, std::nullopt};
  CHECK(error_kind_of([&] { kde_sp_penalty(split, none, 0.1, 0.5); }) == ErrorKind::EmptyGroup);
}

TEST_CASE("chi2: constant scores, oracle agreement, invariances") {
  Rng rng(6);
  const std::size_t n = 512;
  Eigen::VectorXd s(n), y = Eigen::VectorXd::Zero(n);
  std::vector<std::optional<double>> a(n);
  std::vector<double> sv(n), av(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = rng.normal();
    s(static_cast<Eigen::Index>(i)) = v;
    a[i] = v;
    sv[i] = av[i] = v;
  }
  const Chi2Cond spec;
  const auto dep = chi2_cond_penalty(s, a, y, spec);
  const double h = 1.06 * std::pow(static_cast<double>(n), -0.2);
  CHECK(dep.value == doctest::Approx(chi2_oracle(sv, av, 32, h, h)).epsilon(1e-10));
  CHECK(dep.value >= 0.5);

  CHECK(chi2_cond_penalty(Eigen::VectorXd::Constant(n, 0.7), a, y, spec).value <= 1e-8);

  // Joint permutation.
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(std::span<std::size_t>(perm));
  Eigen::VectorXd sp(n), noise(n);
  std::vector<std::optional<double>> ap(n), scaled(n);
  for (std::size_t i = 0; i < n; ++i) noise(static_cast<Eigen::Index>(i)) = 0.5 * s(static_cast<Eigen::Index>(i)) + rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    sp(static_cast<Eigen::Index>(i)) = noise(static_cast<Eigen::Index>(perm[i]));
    ap[i] = a[perm[i]];
    scaled[i] = 3.0 * *a[i] - 7.0;
  }
  const double base = chi2_cond_penalty(noise, a, y, spec).value;
  CHECK(chi2_cond_penalty(sp, ap, y, spec).value == doctest::Approx(base).epsilon(1e-12));
  CHECK(std::abs(chi2_cond_penalty(noise, scaled, y, spec).value - base) <= 1e-8);

  CHECK(error_kind_of([&] {
          chi2_cond_penalty(Eigen::VectorXd::Zero(5), std::vector<std::optional<double>>(5, 1.0),
                            Eigen::VectorXd::Zero(5), spec);
        }) == ErrorKind::InsufficientSample);
}

TEST_CASE("penalty gradients match central differences") {
  Rng rng(7);
  const std::size_t n = 64;
  Cells c = cells(n);
  c.groups[5].reset();
  std::vector<std::optional<double>> cont(n);
  for (std::size_t i = 0; i < n; ++i) cont[i] = rng.normal();
  cont[9].reset();

  MinDiffMMD logit_mmd;
  logit_mmd.score_space = ScoreSpace::logit;
  MinDiffMMD laplace_odds;
  laplace_odds.kernel = Kernel::laplace;
  laplace_odds.mode = MinDiffMode::eqodds;
  Chi2Cond cond;
  cond.conditional_on_label = true;
  cond.grid_size = 16;
  Chi2Cond fixed;
  fixed.fixed_bandwidth = std::make_pair(0.4, 0.5);

  struct Case {
    RegularizerSpec spec;
    bool continuous;
  };
  const std::vector<Case> cases{{MinDiffMMD{}, false}, {logit_mmd, false},  {laplace_odds, false},
                                {KdeSP{}, false},      {Chi2Cond{}, true},  {cond, true},
                                {fixed, true}};
  for (int draw_index = 0; draw_index < 5; ++draw_index) {
    Eigen::VectorXd s(n);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) s(i) = rng.normal();
    for (const auto& k : cases) {
      const auto& groups = k.continuous ? cont : c.groups;
      const auto r = fairness_penalty(k.spec, s, c.labels, groups);
      const Eigen::VectorXd num = testutil::central_diff(
          [&](const Eigen::VectorXd& x) { return fairness_penalty(k.spec, x, c.labels, groups).value; }, s);
      // KdeSP has |.| kinks; skip draws sitting on one.
      CHECK(testutil::max_rel_err(r.gradient, num) <= 1e-4);
      CHECK(r.value >= 0.0);
    }
  }
}

TEST_CASE("regularizer json: round trip, defaults, validation") {
  const RegularizerSpec specs[] = {MinDiffMMD{Kernel::laplace, 0.3, MinDiffMode::eqodds, ScoreSpace::logit},
                                   KdeSP{0.2, 0.4}, Chi2Cond{16, std::make_pair(0.3, 0.4), true}};
  for (const auto& s : specs) CHECK(to_json(regularizer_from_json(to_json(s))) == to_json(s));
  CHECK(std::holds_alternative<MinDiffMMD>(regularizer_from_json({{"type", "mindiff_mmd"}})));
  CHECK(error_kind_of([] { regularizer_from_json({{"type", "mindiff_mmd"}, {"sigma", 1}}); }) == ErrorKind::Config);
  CHECK(error_kind_of([] { regularizer_from_json({{"type", "nope"}}); }) == ErrorKind::Config);
  CHECK(error_kind_of([] { validate(MinDiffMMD{Kernel::gaussian, 0.0}); }) == ErrorKind::Config);
  CHECK(error_kind_of([] { validate(KdeSP{0.1, 1.0}); }) == ErrorKind::Config);
  CHECK(error_kind_of([] { validate(Chi2Cond{4}); }) == ErrorKind::Config);
}
