// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "frappe/divergence.hpp"

#include <algorithm>
#include <cmath>

#include "frappe/error.hpp"

namespace frappe {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

void check_lengths(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const char* what) {
  if (a.size() != b.size())
    fail(ErrorKind::Dim, std::string(what) + ": length " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
  if (a.size() == 0) fail(ErrorKind::Dim, std::string(what) + ": empty input");
}

}  // namespace

// KL(Bern(sigmoid(p)) || Bern(sigmoid(q))) is the Bregman divergence of
// softplus: softplus(q) - softplus(p) - sigmoid(p) (q - p). Working in logit
// space keeps every term finite without clamping probabilities.
DivergenceResult kl_bernoulli(const Eigen::VectorXd& base_logits,
                              const Eigen::VectorXd& fair_logits, bool reversed) {
  check_lengths(base_logits, fair_logits, "kl_bernoulli");
  const auto n = base_logits.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  DivergenceResult r;
  r.gradient.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double zb = base_logits(i);
    const double zf = fair_logits(i);
    double kl;
    if (!reversed) {
      kl = softplus(zf) - softplus(zb) - sigmoid(zb) * (zf - zb);
      r.gradient(i) = (sigmoid(zf) - sigmoid(zb)) * inv_n;
    } else {
      const double qf = sigmoid(zf);
      kl = softplus(zb) - softplus(zf) - qf * (zb - zf);
      r.gradient(i) = qf * (1.0 - qf) * (zf - zb) * inv_n;
    }
    r.value += std::max(kl, 0.0);
  }
  r.value *= inv_n;
  return r;
}

DivergenceResult mse_divergence(const Eigen::VectorXd& base_scores,
                                const Eigen::VectorXd& fair_scores) {
  check_lengths(base_scores, fair_scores, "mse_divergence");
  const double n = static_cast<double>(base_scores.size());
  const Eigen::VectorXd diff = fair_scores - base_scores;
  return DivergenceResult{diff.squaredNorm() / n, 2.0 * diff / n};
}

DivergenceResult output_divergence(const DivergenceSpec& spec, const Eigen::VectorXd& base,
                                   const Eigen::VectorXd& fair) {
  if (spec.kind == DivergenceSpec::Kind::mse) return mse_divergence(base, fair);
  return kl_bernoulli(base, fair, spec.reversed);
}

const char* to_string(GlmFamily family) noexcept {
  return family == GlmFamily::logistic ? "logistic" : "linear";
}

GlmFamily parse_glm_family(const std::string& name) {
  if (name == "logistic") return GlmFamily::logistic;
  if (name == "linear") return GlmFamily::linear;
  fail(ErrorKind::Config, "unknown GLM family '" + name + "' (logistic | linear)");
}

double glm_partition(GlmFamily family, double z) {
  return family == GlmFamily::logistic ? softplus(z) : z * z;
}

double glm_partition_d1(GlmFamily family, double z) {
  return family == GlmFamily::logistic ? sigmoid(z) : 2.0 * z;
}

double glm_partition_d2(GlmFamily family, double z) {
  if (family == GlmFamily::linear) return 2.0;
  const double s = sigmoid(z);
  return s * (1.0 - s);
}

double bregman_glm(const Eigen::VectorXd& theta, const Eigen::VectorXd& theta_base,
                   const Eigen::MatrixXd& design, GlmFamily family) {
  if (theta.size() != design.cols() || theta_base.size() != design.cols())
    fail(ErrorKind::Dim, "bregman_glm: parameter length does not match design columns");
  if (design.rows() == 0) fail(ErrorKind::Dim, "bregman_glm: empty design");
  const Eigen::VectorXd z = design * theta;
  const Eigen::VectorXd zb = design * theta_base;
  // Row-wise A(z) - A(zb) - A'(zb)(z - zb); its mean equals the parameter-space
  // form because grad Abar(base).(theta - base) = mean_i A'(zb_i)(z_i - zb_i).
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    total += glm_partition(family, z(i)) - glm_partition(family, zb(i)) -
             glm_partition_d1(family, zb(i)) * (z(i) - zb(i));
  }
  return total / static_cast<double>(z.size());
}

}  // namespace frappe
