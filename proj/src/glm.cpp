// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "frappe/glm.hpp"

#include <cmath>
#include <deque>
#include <limits>

#include "frappe/error.hpp"
#include "frappe/rng.hpp"

namespace frappe {

namespace {

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x, bool intercept) {
  if (!intercept) return x;
  Eigen::MatrixXd out(x.rows(), x.cols() + 1);
  out << x, Eigen::VectorXd::Ones(x.rows());
  return out;
}

// phi(x, y) = s * y * x with s = 1 (logistic) or 2 (linear).
double statistic_scale(GlmFamily family) { return family == GlmFamily::logistic ? 1.0 : 2.0; }

void check_theta(const GlmProblem& p, const Eigen::VectorXd& theta) {
  if (static_cast<std::size_t>(theta.size()) != p.dim())
    fail(ErrorKind::Dim, "theta has length " + std::to_string(theta.size()) + ", expected " +
                             std::to_string(p.dim()));
}

}  // namespace

GlmProblem::GlmProblem(const DatasetTable& table, GlmFamily family, bool intercept)
    : family_(family) {
  if (table.rows() == 0) fail(ErrorKind::EmptyDataset, "GLM table is empty");
  design_ = with_intercept(table.features, intercept);
  response_ = table.label;
  mean_statistic_ =
      statistic_scale(family) * (design_.transpose() * response_) / static_cast<double>(design_.rows());
  const auto ann = table.annotated_rows();
  const DatasetTable sens = table.take(ann);
  sens_design_ = with_intercept(sens.features, intercept);
  sens_labels_ = sens.label;
  sens_values_ = sens.sensitive;
}

double GlmProblem::mean_partition(const Eigen::VectorXd& theta) const {
  check_theta(*this, theta);
  const Eigen::VectorXd z = design_ * theta;
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) total += glm_partition(family_, z(i));
  return total / static_cast<double>(z.size());
}

Eigen::VectorXd GlmProblem::mean_partition_gradient(const Eigen::VectorXd& theta) const {
  check_theta(*this, theta);
  Eigen::VectorXd d1 = design_ * theta;
  for (Eigen::Index i = 0; i < d1.size(); ++i) d1(i) = glm_partition_d1(family_, d1(i));
  return design_.transpose() * d1 / static_cast<double>(design_.rows());
}

double GlmProblem::mean_loss(const Eigen::VectorXd& theta) const {
  return mean_partition(theta) - theta.dot(mean_statistic_);
}

Eigen::VectorXd GlmProblem::mean_loss_gradient(const Eigen::VectorXd& theta) const {
  return mean_partition_gradient(theta) - mean_statistic_;
}

Eigen::MatrixXd GlmProblem::mean_loss_hessian(const Eigen::VectorXd& theta) const {
  check_theta(*this, theta);
  Eigen::VectorXd w = design_ * theta;
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = glm_partition_d2(family_, w(i));
  return design_.transpose() * w.asDiagonal() * design_ / static_cast<double>(design_.rows());
}

double GlmProblem::penalty(const Eigen::VectorXd& theta, const RegularizerSpec& spec,
                           Eigen::VectorXd* gradient) const {
  check_theta(*this, theta);
  if (sens_design_.rows() == 0) fail(ErrorKind::EmptyGroup, "no annotated rows for the penalty");
  const PenaltyResult r = fairness_penalty(spec, sens_design_ * theta, sens_labels_, sens_values_);
  if (gradient) *gradient = sens_design_.transpose() * r.gradient;
  return r.value;
}

InnerFit fit_glm_newton(const GlmProblem& problem, std::size_t max_iterations) {
  InnerFit best;
  best.theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(problem.dim()));
  Eigen::VectorXd grad = problem.mean_loss_gradient(best.theta);
  best.gradient_sup_norm = grad.lpNorm<Eigen::Infinity>();
  Eigen::VectorXd theta = best.theta;
  std::size_t stalls = 0;
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    const Eigen::MatrixXd h = problem.mean_loss_hessian(theta);
    const Eigen::VectorXd step = h.ldlt().solve(grad);
    if (!step.allFinite()) break;
    theta -= step;
    grad = problem.mean_loss_gradient(theta);
    const double sup = grad.lpNorm<Eigen::Infinity>();
    if (!std::isfinite(sup)) break;
    if (sup < best.gradient_sup_norm) {
      best.theta = theta;
      best.gradient_sup_norm = sup;
      best.iterations = it;
      stalls = 0;
    } else if (++stalls >= 3) {
      break;
    }
    if (sup == 0.0) break;
  }
  return best;
}

double lip_value(const GlmProblem& problem, const Eigen::VectorXd& theta, double lambda,
                 const std::optional<RegularizerSpec>& regularizer) {
  double value = problem.mean_loss(theta);
  if (lambda != 0.0 && regularizer) value += lambda * problem.penalty(theta, *regularizer);
  return value;
}

double lpp_value(const GlmProblem& problem, const Eigen::VectorXd& theta,
                 const Eigen::VectorXd& theta_base, double lambda,
                 const std::optional<RegularizerSpec>& regularizer) {
  check_theta(problem, theta_base);
  double value = bregman_glm(theta, theta_base, problem.design(), problem.family());
  if (lambda != 0.0 && regularizer) value += lambda * problem.penalty(theta, *regularizer);
  return value;
}

double closed_form_constant(const GlmProblem& problem, const Eigen::VectorXd& theta_base) {
  return theta_base.dot(problem.mean_statistic()) - problem.mean_partition(theta_base);
}

LbfgsResult minimize_lbfgs(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& objective,
    Eigen::VectorXd x0, std::size_t max_iterations, double gradient_tolerance,
    std::size_t history) {
  LbfgsResult r;
  r.x = std::move(x0);
  Eigen::VectorXd g;
  r.value = objective(r.x, g);
  if (!std::isfinite(r.value) || !g.allFinite())
    fail(ErrorKind::Diverged, "objective is not finite at the starting point");
  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  Eigen::VectorXd x_new, g_new;
  for (r.iterations = 0; r.iterations < max_iterations; ++r.iterations) {
    if (g.lpNorm<Eigen::Infinity>() <= gradient_tolerance) break;
    // Two-loop recursion.
    Eigen::VectorXd q = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha[k] = rho_hist[k] * s_hist[k].dot(q);
      q -= alpha[k] * y_hist[k];
    }
    if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * y_hist[k].dot(q);
      q += (alpha[k] - beta) * s_hist[k];
    }
    Eigen::VectorXd dir = -q;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -g;
      slope = -g.squaredNorm();
    }
    double step = 1.0;
    if (s_hist.empty()) step = std::min(1.0, 1.0 / g.lpNorm<Eigen::Infinity>());
    bool accepted = false;
    double f_new = 0.0;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = r.x + step * dir;
      f_new = objective(x_new, g_new);
      if (std::isfinite(f_new) && g_new.allFinite() && f_new <= r.value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const Eigen::VectorXd s = x_new - r.x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-16 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const bool stalled = f_new >= r.value && s.lpNorm<Eigen::Infinity>() == 0.0;
    r.x = x_new;
    r.value = f_new;
    g = g_new;
    if (stalled) break;
  }
  r.gradient_sup_norm = g.lpNorm<Eigen::Infinity>();
  return r;
}

nlohmann::json to_json(const EquivReport& report) {
  return {{"lambda", report.lambda},
          {"n_probe", report.n_probe},
          {"max_constant_deviation", report.max_constant_deviation},
          {"c_empirical", report.c_empirical},
          {"c_closed_form", report.c_closed_form},
          {"argmin_distance", report.argmin_distance},
          {"family", to_string(report.family)},
          {"inner_gradient_sup_norm", report.inner_gradient_sup_norm}};
}

EquivReport verify_equivalence(const DatasetTable& table, const EquivSettings& settings) {
  if (!(settings.lambda >= 0.0)) fail(ErrorKind::Config, "lambda must be nonnegative");
  if (settings.n_probe < 2) fail(ErrorKind::Config, "n_probe must be at least 2");
  if (!(settings.radius > 0.0)) fail(ErrorKind::Config, "radius must be positive");
  if (settings.regularizer) validate(*settings.regularizer);
  if (settings.family == GlmFamily::logistic)
    for (Eigen::Index i = 0; i < table.label.size(); ++i)
      if (table.label(i) != 0.0 && table.label(i) != 1.0)
        fail(ErrorKind::Schema, "logistic family needs 0/1 labels");

  const GlmProblem problem(table, settings.family, settings.intercept);
  const InnerFit inner = fit_glm_newton(problem, settings.max_newton_iterations);
  if (settings.require_inner_convergence && !(inner.gradient_sup_norm <= settings.inner_tolerance))
    fail(ErrorKind::InnerNotConverged,
         "base fit reached gradient sup-norm " + std::to_string(inner.gradient_sup_norm) +
             ", tolerance " + std::to_string(settings.inner_tolerance));
  const Eigen::VectorXd& base = inner.theta;
  const auto dim = static_cast<Eigen::Index>(problem.dim());

  EquivReport report;
  report.lambda = settings.lambda;
  report.n_probe = settings.n_probe;
  report.family = settings.family;
  report.inner_gradient_sup_norm = inner.gradient_sup_norm;
  report.c_closed_form = closed_form_constant(problem, base);

  Rng probe_rng(derive_seed(settings.seed, {0x70726f6265ULL}));
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  double sum = 0.0;
  for (std::size_t k = 0; k < settings.n_probe; ++k) {
    Eigen::VectorXd theta(dim);
    for (Eigen::Index j = 0; j < dim; ++j)
      theta(j) = base(j) + probe_rng.uniform(-settings.radius, settings.radius);
    const double delta = lpp_value(problem, theta, base, settings.lambda, settings.regularizer) -
                         lip_value(problem, theta, settings.lambda, settings.regularizer);
    lo = std::min(lo, delta);
    hi = std::max(hi, delta);
    sum += delta;
  }
  report.max_constant_deviation = hi - lo;
  report.c_empirical = sum / static_cast<double>(settings.n_probe);

  const bool penalized = settings.lambda != 0.0 && settings.regularizer.has_value();
  auto add_penalty = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    if (!penalized) return 0.0;
    Eigen::VectorXd pg;
    const double p = problem.penalty(theta, *settings.regularizer, &pg);
    grad += settings.lambda * pg;
    return settings.lambda * p;
  };
  auto lip = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    grad = problem.mean_loss_gradient(theta);
    return problem.mean_loss(theta) + add_penalty(theta, grad);
  };
  const Eigen::VectorXd base_grad = problem.mean_partition_gradient(base);
  auto lpp = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    grad = problem.mean_partition_gradient(theta) - base_grad;
    return bregman_glm(theta, base, problem.design(), problem.family()) + add_penalty(theta, grad);
  };

  Rng init_rng(derive_seed(settings.seed, {0x696e6974ULL}));
  for (std::size_t k = 0; k < settings.argmin_inits; ++k) {
    Eigen::VectorXd x0(dim);
    for (Eigen::Index j = 0; j < dim; ++j)
      x0(j) = base(j) + init_rng.uniform(-settings.radius, settings.radius);
    const LbfgsResult a = minimize_lbfgs(lip, x0);
    const LbfgsResult b = minimize_lbfgs(lpp, x0);
    report.argmin_distance =
        std::max(report.argmin_distance, (a.x - b.x).lpNorm<Eigen::Infinity>());
  }
  return report;
}

}  // namespace frappe
