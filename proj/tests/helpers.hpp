// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <doctest.h>

#include "frappe/dataset.hpp"
#include "frappe/error.hpp"
#include "frappe/rng.hpp"

namespace testutil {

inline frappe::DatasetTable make_table(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                       std::vector<std::optional<double>> a) {
  frappe::DatasetTable t;
  t.features = x;
  t.label = y;
  t.sensitive = std::move(a);
  for (Eigen::Index j = 0; j < x.cols(); ++j) t.feature_names.push_back("x" + std::to_string(j));
  return t;
}

// Random binary table with both groups present in both label cells.
inline frappe::DatasetTable random_table(std::size_t n, std::size_t d, std::uint64_t seed,
                                         double annotated = 1.0) {
  frappe::Rng rng(seed);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  std::vector<std::optional<double>> a(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rng.normal();
    // Cycle the four (y, a) cells so none is empty.
    y(static_cast<Eigen::Index>(i)) = static_cast<double>(i % 2);
    if (i < 4 || rng.uniform() < annotated) a[i] = static_cast<double>((i / 2) % 2);
  }
  return make_table(x, y, a);
}

// Relative error with a floor so tiny gradients compare absolutely.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
}

inline Eigen::VectorXd central_diff(const std::function<double(const Eigen::VectorXd&)>& f,
                                    const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x, xm = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + h;
    xm(i) = x(i) - h;
    g(i) = (f(xp) - f(xm)) / (2.0 * h);
    xp(i) = xm(i) = x(i);
  }
  return g;
}

inline double max_rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a(i), b(i)));
  return worst;
}

template <typename Fn>
frappe::ErrorKind error_kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const frappe::Error& e) {
    return e.kind();
  }
  FAIL("expected a frappe::Error");
  return frappe::ErrorKind::Config;
}

}  // namespace testutil
