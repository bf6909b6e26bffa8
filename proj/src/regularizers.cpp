// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "frappe/regularizers.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "frappe/divergence.hpp"
#include "frappe/error.hpp"
#include "json_util.hpp"

namespace frappe {

namespace {

constexpr double kChi2Floor = 1e-6;
constexpr double kGridHalfWidth = 3.0;
// Largest (range / 2 sigma) for which the Taylor expansion is used.
constexpr double kSeriesRadius = 1.5;

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

// ---- gaussian kernel sums through the truncated expansion ------------------
//
// With x' = (x - c) / sigma,
//   exp(-(u'-v')^2 / 2) = e^{-u'^2/2} e^{-v'^2/2} sum_k u'^k v'^k / k!,
// so cross sums factor through the moments
//   M_k(S) = sum_{x in S} e^{-x'^2/2} x'^k / sqrt(k!).

struct Expansion {
  double center = 0.0;
  double bandwidth = 1.0;
  int terms = 0;
};

Eigen::VectorXd moments(std::span<const double> xs, const Expansion& e) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(e.terms);
  for (double x : xs) {
    const double u = (x - e.center) / e.bandwidth;
    double t = std::exp(-0.5 * u * u);
    m(0) += t;
    for (int k = 1; k < e.terms; ++k) {
      t *= u / std::sqrt(static_cast<double>(k));
      m(k) += t;
    }
  }
  return m;
}

// d/dx of sum_k e^{-x'^2/2} x'^k / sqrt(k!) * weights_k.
double expansion_derivative(double x, const Eigen::VectorXd& weights, const Expansion& e) {
  const double u = (x - e.center) / e.bandwidth;
  double prev = 1.0;  // x'^{k-1} / sqrt((k-1)!)
  double acc = -u * weights(0);
  for (int k = 1; k < e.terms; ++k) {
    const double cur = prev * u / std::sqrt(static_cast<double>(k));
    acc += (std::sqrt(static_cast<double>(k)) * prev - u * cur) * weights(k);
    prev = cur;
  }
  return std::exp(-0.5 * u * u) * acc / e.bandwidth;
}

MmdResult mmd2_series(std::span<const double> p, std::span<const double> q, const Expansion& e) {
  const double m = static_cast<double>(p.size());
  const double n = static_cast<double>(q.size());
  const Eigen::VectorXd mp = moments(p, e);
  const Eigen::VectorXd mq = moments(q, e);
  MmdResult r;
  r.value = mp.squaredNorm() / (m * m) + mq.squaredNorm() / (n * n) - 2.0 * mp.dot(mq) / (m * n);
  const Eigen::VectorXd wp = (2.0 / (m * m)) * mp - (2.0 / (m * n)) * mq;
  const Eigen::VectorXd wq = (2.0 / (n * n)) * mq - (2.0 / (m * n)) * mp;
  r.grad_p.resize(static_cast<Eigen::Index>(p.size()));
  r.grad_q.resize(static_cast<Eigen::Index>(q.size()));
  for (std::size_t i = 0; i < p.size(); ++i)
    r.grad_p(static_cast<Eigen::Index>(i)) = expansion_derivative(p[i], wp, e);
  for (std::size_t j = 0; j < q.size(); ++j)
    r.grad_q(static_cast<Eigen::Index>(j)) = expansion_derivative(q[j], wq, e);
  return r;
}

std::optional<Expansion> plan_expansion(std::span<const double> p, std::span<const double> q,
                                        double bandwidth) {
  double lo = p[0];
  double hi = p[0];
  for (double x : p) lo = std::min(lo, x), hi = std::max(hi, x);
  for (double x : q) lo = std::min(lo, x), hi = std::max(hi, x);
  const double radius = (hi - lo) / (2.0 * bandwidth);
  if (!(radius <= kSeriesRadius)) return std::nullopt;
  // Truncation error of sum_k (u'v')^k / k! is below R^{2K} / K!.
  const double r2 = radius * radius;
  double term = 1.0;
  int k = 0;
  while (k < 8 || term > 1e-18) {
    ++k;
    term *= r2 / k;
  }
  return Expansion{0.5 * (lo + hi), bandwidth, k + 1};
}

double kernel_value(Kernel kernel, double diff, double bandwidth) {
  if (kernel == Kernel::gaussian) return std::exp(-diff * diff / (2.0 * bandwidth * bandwidth));
  return std::exp(-std::abs(diff) / bandwidth);
}

// d k(u, v) / du with diff = u - v.
double kernel_d1(Kernel kernel, double diff, double bandwidth) {
  if (kernel == Kernel::gaussian)
    return -diff / (bandwidth * bandwidth) * std::exp(-diff * diff / (2.0 * bandwidth * bandwidth));
  const double s = diff > 0.0 ? 1.0 : diff < 0.0 ? -1.0 : 0.0;
  return -s / bandwidth * std::exp(-std::abs(diff) / bandwidth);
}

struct Group {
  std::vector<std::size_t> rows;
  std::vector<double> values;
};

std::string format_value(double v) {
  if (std::floor(v) == v) return std::to_string(static_cast<long long>(v));
  return std::to_string(v);
}

// The two sensitive categories among annotated rows. Values inside {0, 1}
// are completed to the pair {0, 1} so a missing group is reported by name.
std::pair<double, double> binary_categories(SensitiveColumn sensitive) {
  std::set<double> seen;
  for (const auto& a : sensitive)
    if (a) seen.insert(*a);
  if (seen.size() > 2)
    fail(ErrorKind::Config, "MinDiff needs a binary sensitive attribute, found " +
                                std::to_string(seen.size()) + " categories");
  if (seen.size() == 2) return {*seen.begin(), *seen.rbegin()};
  return {0.0, 1.0};
}

struct Chi2Block {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

Chi2Block chi2_block(const Eigen::VectorXd& s_raw, const Eigen::VectorXd& a_raw, const Chi2Cond& spec) {
  const auto n = s_raw.size();
  const double nd = static_cast<double>(n);
  const double s_mean = s_raw.mean();
  const double s_sd = std::sqrt((s_raw.array() - s_mean).square().mean());
  const bool s_degenerate = !(s_sd > 1e-12);
  const Eigen::VectorXd s = s_degenerate ? Eigen::VectorXd(s_raw.array() - s_mean)
                                         : Eigen::VectorXd((s_raw.array() - s_mean) / s_sd);
  const double a_mean = a_raw.mean();
  const double a_sd = std::sqrt((a_raw.array() - a_mean).square().mean());
  const Eigen::VectorXd a = a_sd > 1e-12 ? Eigen::VectorXd((a_raw.array() - a_mean) / a_sd)
                                         : Eigen::VectorXd(a_raw.array() - a_mean);

  double hs, ha;
  if (spec.fixed_bandwidth) {
    hs = spec.fixed_bandwidth->first;
    ha = spec.fixed_bandwidth->second;
  } else {
    hs = ha = 1.06 * std::pow(nd, -0.2);
  }
  const auto B = static_cast<Eigen::Index>(spec.grid_size);
  const double step = 2.0 * kGridHalfWidth / static_cast<double>(B - 1);
  const double area = step * step;
  Eigen::VectorXd grid(B);
  for (Eigen::Index k = 0; k < B; ++k) grid(k) = -kGridHalfWidth + step * static_cast<double>(k);

  Eigen::MatrixXd Ks(B, n), dKs(B, n), Ka(B, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < B; ++k) {
      const double ds = grid(k) - s(i);
      const double ks = normal_pdf(ds / hs) / hs;
      Ks(k, i) = ks;
      dKs(k, i) = ks * ds / (hs * hs);
      Ka(k, i) = normal_pdf((grid(k) - a(i)) / ha) / ha;
    }
  }
  const Eigen::MatrixXd joint = Ks * Ka.transpose() / nd;  // B x B, rows index scores
  const Eigen::VectorXd ps = Ks.rowwise().sum() / nd;
  const Eigen::VectorXd pa = Ka.rowwise().sum() / nd;

  Chi2Block out;
  Eigen::MatrixXd dJ(B, B);
  Eigen::VectorXd dPs = Eigen::VectorXd::Zero(B);
  for (Eigen::Index k = 0; k < B; ++k) {
    for (Eigen::Index l = 0; l < B; ++l) {
      const double prod = ps(k) * pa(l);
      const bool floored = !(prod > kChi2Floor);
      const double q = floored ? kChi2Floor : prod;
      const double diff = joint(k, l) - prod;
      out.value += diff * diff / q * area;
      dJ(k, l) = 2.0 * diff / q * area;
      double dprod = -2.0 * diff / q;
      if (!floored) dprod -= diff * diff / (q * q);
      dPs(k) += dprod * pa(l) * area;
    }
  }
  // d/ds_i through joint and the score marginal.
  const Eigen::MatrixXd through_joint = dJ * Ka;  // B x n
  Eigen::VectorXd g(n);
  for (Eigen::Index i = 0; i < n; ++i)
    g(i) = (dKs.col(i).array() * (through_joint.col(i).array() + dPs.array())).sum() / nd;

  // Chain through standardization (population sd).
  if (s_degenerate) {
    out.gradient = g.array() - g.mean();
  } else {
    const double mg = g.mean();
    const double mgs = (g.array() * s.array()).mean();
    out.gradient = (g.array() - mg - s.array() * mgs) / s_sd;
  }
  return out;
}

}  // namespace

MmdResult mmd2_direct(std::span<const double> p, std::span<const double> q, Kernel kernel,
                      double bandwidth) {
  const double m = static_cast<double>(p.size());
  const double n = static_cast<double>(q.size());
  MmdResult r;
  r.grad_p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.size()));
  r.grad_q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(q.size()));
  double spp = 0.0, sqq = 0.0, spq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double diff = p[i] - p[j];
      spp += kernel_value(kernel, diff, bandwidth);
      r.grad_p(static_cast<Eigen::Index>(i)) += 2.0 / (m * m) * kernel_d1(kernel, diff, bandwidth);
    }
    for (std::size_t j = 0; j < q.size(); ++j) {
      const double diff = p[i] - q[j];
      spq += kernel_value(kernel, diff, bandwidth);
      const double d1 = kernel_d1(kernel, diff, bandwidth);
      r.grad_p(static_cast<Eigen::Index>(i)) -= 2.0 / (m * n) * d1;
      r.grad_q(static_cast<Eigen::Index>(j)) += 2.0 / (m * n) * d1;
    }
  }
  for (std::size_t i = 0; i < q.size(); ++i) {
    for (std::size_t j = 0; j < q.size(); ++j) {
      const double diff = q[i] - q[j];
      sqq += kernel_value(kernel, diff, bandwidth);
      r.grad_q(static_cast<Eigen::Index>(i)) += 2.0 / (n * n) * kernel_d1(kernel, diff, bandwidth);
    }
  }
  r.value = spp / (m * m) + sqq / (n * n) - 2.0 * spq / (m * n);
  return r;
}

MmdResult mmd2(std::span<const double> p, std::span<const double> q, Kernel kernel,
               double bandwidth) {
  if (p.empty() || q.empty()) fail(ErrorKind::EmptyGroup, "MMD needs two nonempty samples");
  if (!(bandwidth > 0.0)) fail(ErrorKind::Config, "MMD bandwidth must be positive");
  MmdResult r;
  std::optional<Expansion> plan;
  if (kernel == Kernel::gaussian && p.size() * q.size() >= 4096) plan = plan_expansion(p, q, bandwidth);
  r = plan ? mmd2_series(p, q, *plan) : mmd2_direct(p, q, kernel, bandwidth);
  r.value = std::max(r.value, 0.0);
  return r;
}

PenaltyResult mindiff_penalty(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels,
                              SensitiveColumn sensitive, const MinDiffMMD& spec) {
  const auto n = scores.size();
  if (labels.size() != n || static_cast<Eigen::Index>(sensitive.size()) != n)
    fail(ErrorKind::Dim, "MinDiff inputs have different lengths");
  const auto [c0, c1] = binary_categories(sensitive);

  Eigen::VectorXd t = scores;
  Eigen::VectorXd dt = Eigen::VectorXd::Ones(n);
  if (spec.score_space == ScoreSpace::probability) {
    for (Eigen::Index i = 0; i < n; ++i) {
      t(i) = sigmoid(scores(i));
      dt(i) = t(i) * (1.0 - t(i));
    }
  }

  PenaltyResult out;
  out.gradient = Eigen::VectorXd::Zero(n);
  std::vector<double> label_values{0.0};
  if (spec.mode == MinDiffMode::eqodds) label_values.push_back(1.0);
  for (double y : label_values) {
    Group g0, g1;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& a = sensitive[static_cast<std::size_t>(i)];
      if (!a || labels(i) != y) continue;
      Group* g = *a == c0 ? &g0 : *a == c1 ? &g1 : nullptr;
      if (g) {
        g->rows.push_back(static_cast<std::size_t>(i));
        g->values.push_back(t(i));
      }
    }
    if (g0.rows.empty())
      fail(ErrorKind::EmptyGroup, "MinDiff cell (Y=" + format_value(y) + ", A=" + format_value(c0) + ") is empty");
    if (g1.rows.empty())
      fail(ErrorKind::EmptyGroup, "MinDiff cell (Y=" + format_value(y) + ", A=" + format_value(c1) + ") is empty");
    const MmdResult m = mmd2(g0.values, g1.values, spec.kernel, spec.bandwidth);
    out.value += m.value;
    for (std::size_t k = 0; k < g0.rows.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(g0.rows[k]);
      out.gradient(i) += m.grad_p(static_cast<Eigen::Index>(k)) * dt(i);
    }
    for (std::size_t k = 0; k < g1.rows.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(g1.rows[k]);
      out.gradient(i) += m.grad_q(static_cast<Eigen::Index>(k)) * dt(i);
    }
  }
  return out;
}

PenaltyResult kde_sp_penalty(const Eigen::VectorXd& probabilities, SensitiveColumn sensitive,
                             double bandwidth, double threshold) {
  const auto n = probabilities.size();
  if (static_cast<Eigen::Index>(sensitive.size()) != n)
    fail(ErrorKind::Dim, "KdeSP inputs have different lengths");
  std::map<double, std::vector<Eigen::Index>> groups;
  for (Eigen::Index i = 0; i < n; ++i)
    if (const auto& a = sensitive[static_cast<std::size_t>(i)]) groups[*a].push_back(i);
  if (groups.empty()) fail(ErrorKind::EmptyGroup, "KdeSP: no annotated rows");

  Eigen::VectorXd cdf = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd pdf = Eigen::VectorXd::Zero(n);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& [a, rows] : groups) {
    for (auto i : rows) {
      const double z = (probabilities(i) - threshold) / bandwidth;
      cdf(i) = normal_cdf(z);
      pdf(i) = normal_pdf(z) / bandwidth;
      total += cdf(i);
      ++count;
    }
  }
  const double p_all = total / static_cast<double>(count);

  PenaltyResult out;
  out.gradient = Eigen::VectorXd::Zero(n);
  double sign_sum = 0.0;
  std::map<double, double> signs;
  for (const auto& [a, rows] : groups) {
    double pa = 0.0;
    for (auto i : rows) pa += cdf(i);
    pa /= static_cast<double>(rows.size());
    const double diff = pa - p_all;
    out.value += std::abs(diff);
    const double s = diff > 0.0 ? 1.0 : diff < 0.0 ? -1.0 : 0.0;
    signs[a] = s;
    sign_sum += s;
  }
  for (const auto& [a, rows] : groups) {
    const double own = signs[a] / static_cast<double>(rows.size());
    for (auto i : rows) out.gradient(i) = pdf(i) * (own - sign_sum / static_cast<double>(count));
  }
  return out;
}

PenaltyResult chi2_cond_penalty(const Eigen::VectorXd& scores, SensitiveColumn sensitive,
                                const Eigen::VectorXd& labels, const Chi2Cond& spec) {
  const auto n = scores.size();
  if (static_cast<Eigen::Index>(sensitive.size()) != n || labels.size() != n)
    fail(ErrorKind::Dim, "chi2 inputs have different lengths");
  if (spec.grid_size < 8) fail(ErrorKind::Config, "chi2 grid_size must be at least 8");

  std::map<double, std::vector<Eigen::Index>> blocks;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!sensitive[static_cast<std::size_t>(i)]) continue;
    blocks[spec.conditional_on_label ? labels(i) : 0.0].push_back(i);
  }
  if (blocks.empty()) fail(ErrorKind::InsufficientSample, "chi2 penalty: no annotated rows");

  PenaltyResult out;
  out.gradient = Eigen::VectorXd::Zero(n);
  for (const auto& [y, rows] : blocks) {
    if (rows.size() < 8)
      fail(ErrorKind::InsufficientSample,
           "chi2 penalty needs at least 8 annotated rows" +
               (spec.conditional_on_label ? " for label " + format_value(y) : std::string()) +
               ", got " + std::to_string(rows.size()));
    Eigen::VectorXd s(static_cast<Eigen::Index>(rows.size()));
    Eigen::VectorXd a(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      s(static_cast<Eigen::Index>(k)) = scores(rows[k]);
      a(static_cast<Eigen::Index>(k)) = *sensitive[static_cast<std::size_t>(rows[k])];
    }
    const Chi2Block block = chi2_block(s, a, spec);
    out.value += block.value;
    for (std::size_t k = 0; k < rows.size(); ++k)
      out.gradient(rows[k]) += block.gradient(static_cast<Eigen::Index>(k));
  }
  return out;
}

PenaltyResult fairness_penalty(const RegularizerSpec& spec, const Eigen::VectorXd& scores,
                               const Eigen::VectorXd& labels, SensitiveColumn sensitive) {
  if (const auto* m = std::get_if<MinDiffMMD>(&spec)) return mindiff_penalty(scores, labels, sensitive, *m);
  if (const auto* c = std::get_if<Chi2Cond>(&spec)) return chi2_cond_penalty(scores, sensitive, labels, *c);
  const auto& k = std::get<KdeSP>(spec);
  Eigen::VectorXd prob(scores.size());
  for (Eigen::Index i = 0; i < scores.size(); ++i) prob(i) = sigmoid(scores(i));
  PenaltyResult r = kde_sp_penalty(prob, sensitive, k.bandwidth, k.threshold);
  r.gradient = r.gradient.array() * prob.array() * (1.0 - prob.array());
  return r;
}

void validate(const RegularizerSpec& spec) {
  if (const auto* m = std::get_if<MinDiffMMD>(&spec)) {
    if (!(m->bandwidth > 0.0)) fail(ErrorKind::Config, "mindiff bandwidth must be positive");
  } else if (const auto* k = std::get_if<KdeSP>(&spec)) {
    if (!(k->bandwidth > 0.0)) fail(ErrorKind::Config, "kde_sp bandwidth must be positive");
    if (!(k->threshold > 0.0 && k->threshold < 1.0)) fail(ErrorKind::Config, "kde_sp threshold must be in (0, 1)");
  } else {
    const auto& c = std::get<Chi2Cond>(spec);
    if (c.grid_size < 8) fail(ErrorKind::Config, "chi2 grid_size must be at least 8");
    if (c.fixed_bandwidth && !(c.fixed_bandwidth->first > 0.0 && c.fixed_bandwidth->second > 0.0))
      fail(ErrorKind::Config, "chi2 bandwidths must be positive");
  }
}

nlohmann::json to_json(const RegularizerSpec& spec) {
  nlohmann::json doc;
  if (const auto* m = std::get_if<MinDiffMMD>(&spec)) {
    doc = {{"type", "mindiff_mmd"},
           {"kernel", m->kernel == Kernel::gaussian ? "gaussian" : "laplace"},
           {"bandwidth", m->bandwidth},
           {"mode", m->mode == MinDiffMode::eqopp ? "eqopp" : "eqodds"},
           {"score_space", m->score_space == ScoreSpace::probability ? "probability" : "logit"}};
  } else if (const auto* k = std::get_if<KdeSP>(&spec)) {
    doc = {{"type", "kde_sp"}, {"bandwidth", k->bandwidth}, {"threshold", k->threshold}};
  } else {
    const auto& c = std::get<Chi2Cond>(spec);
    doc = {{"type", "chi2_cond"}, {"grid_size", c.grid_size}, {"conditional_on_label", c.conditional_on_label}};
    if (c.fixed_bandwidth)
      doc["bandwidth"] = {c.fixed_bandwidth->first, c.fixed_bandwidth->second};
    else
      doc["bandwidth"] = "silverman";
  }
  return doc;
}

RegularizerSpec regularizer_from_json(const nlohmann::json& doc) {
  using detail::check_keys;
  using detail::get_or;
  detail::require_object(doc, "objective.regularizer");
  const auto type = detail::get_required<std::string>(doc, "type", "objective.regularizer");
  RegularizerSpec spec;
  if (type == "mindiff_mmd") {
    check_keys(doc, {"type", "kernel", "bandwidth", "mode", "score_space"}, "objective.regularizer");
    MinDiffMMD m;
    const auto kernel = get_or<std::string>(doc, "kernel", "gaussian", "objective.regularizer");
    if (kernel != "gaussian" && kernel != "laplace") fail(ErrorKind::Config, "kernel must be gaussian | laplace");
    m.kernel = kernel == "gaussian" ? Kernel::gaussian : Kernel::laplace;
    m.bandwidth = get_or<double>(doc, "bandwidth", m.bandwidth, "objective.regularizer");
    const auto mode = get_or<std::string>(doc, "mode", "eqopp", "objective.regularizer");
    if (mode != "eqopp" && mode != "eqodds") fail(ErrorKind::Config, "mode must be eqopp | eqodds");
    m.mode = mode == "eqopp" ? MinDiffMode::eqopp : MinDiffMode::eqodds;
    const auto space = get_or<std::string>(doc, "score_space", "probability", "objective.regularizer");
    if (space != "probability" && space != "logit") fail(ErrorKind::Config, "score_space must be probability | logit");
    m.score_space = space == "probability" ? ScoreSpace::probability : ScoreSpace::logit;
    spec = m;
  } else if (type == "kde_sp") {
    check_keys(doc, {"type", "bandwidth", "threshold"}, "objective.regularizer");
    KdeSP k;
    k.bandwidth = get_or<double>(doc, "bandwidth", k.bandwidth, "objective.regularizer");
    k.threshold = get_or<double>(doc, "threshold", k.threshold, "objective.regularizer");
    spec = k;
  } else if (type == "chi2_cond") {
    check_keys(doc, {"type", "grid_size", "bandwidth", "conditional_on_label"}, "objective.regularizer");
    Chi2Cond c;
    c.grid_size = get_or<std::size_t>(doc, "grid_size", c.grid_size, "objective.regularizer");
    c.conditional_on_label = get_or<bool>(doc, "conditional_on_label", false, "objective.regularizer");
    if (auto it = doc.find("bandwidth"); it != doc.end() && !it->is_null()) {
      if (it->is_string()) {
        if (it->get<std::string>() != "silverman") fail(ErrorKind::Config, "chi2 bandwidth must be \"silverman\" or [h_s, h_a]");
      } else if (it->is_array() && it->size() == 2) {
        c.fixed_bandwidth = std::make_pair((*it)[0].get<double>(), (*it)[1].get<double>());
      } else {
        fail(ErrorKind::Config, "chi2 bandwidth must be \"silverman\" or [h_s, h_a]");
      }
    }
    spec = c;
  } else {
    fail(ErrorKind::Config, "unknown regularizer type '" + type + "' (mindiff_mmd | kde_sp | chi2_cond)");
  }
  validate(spec);
  return spec;
}

}  // namespace frappe
