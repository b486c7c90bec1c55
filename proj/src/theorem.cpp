#include "koala/theorem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "koala/dataset.hpp"
#include "koala/metrics.hpp"

namespace koala {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sign_of(double x) { return x < 0 ? -1.0 : 1.0; }

// (mu^/mu* + L1/(d mu*) - 1) |c*_j - p*_j| with 0/0 := 0 when c* == p*.
double scaled_true_gap(const FlipContext& ctx, Index j, double mu_hat, double mu_star) {
  const double g = std::abs(ctx.c_star[j] - ctx.p_star[j]);
  if (g == 0.0) return 0.0;
  const double d = static_cast<double>(ctx.dim());
  return (mu_hat / mu_star + ctx.l1_budget() / (d * mu_star) - 1.0) * g;
}

}  // namespace

FlipContext::FlipContext(Simplex p, Simplex c, Simplex ch, double eps, double t)
    : p_star(std::move(p)), c_star(std::move(c)), c_hat(std::move(ch)), epsilon(eps), tau(t) {
  if (c_star.dim() != p_star.dim() || c_hat.dim() != p_star.dim()) {
    throw DimensionError("flip context: p*, c*, c^ must share one dimension");
  }
  if (c_star == c_hat) throw InvalidInput("flip context: c* and c^ coincide");
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw InvalidInput("flip context: epsilon must be finite and >= 0");
  }
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidInput("flip context: tau must lie in [0,1]");
}

VectorXd FlipContext::v() const {
  return ((c_hat.values() - c_star.values()).array() / p_star.values().array()).matrix();
}

double FlipContext::l1_budget() const {
  return std::sqrt(static_cast<double>(dim())) * epsilon;
}

KLFlipQuantities compute_kl_flip(const FlipContext& ctx) {
  return {ctx.v(), kl_divergence(ctx.c_hat, ctx.p_star) - kl_divergence(ctx.c_star, ctx.p_star)};
}

double kl_flip_lhs(const FlipContext& ctx, const VectorXd& delta) {
  if (delta.size() != ctx.dim()) throw DimensionError("kl_flip_lhs: delta has wrong dimension");
  return ctx.v().dot(delta);
}

L0FlipQuantities compute_l0_flip(const FlipContext& ctx) {
  const Index d = ctx.dim();
  const VectorXd gap_hat = (ctx.c_hat.values() - ctx.p_star.values()).cwiseAbs();
  const VectorXd gap_star = (ctx.c_star.values() - ctx.p_star.values()).cwiseAbs();

  L0FlipQuantities out;
  out.mu_hat = gap_hat.mean();
  out.mu_star = gap_star.mean();
  const double th_hat = ctx.tau * out.mu_hat;
  const double th_star = ctx.tau * out.mu_star;
  const double slack = ctx.tau * ctx.l1_budget() / static_cast<double>(d);

  out.min_bounds.resize(d);
  for (Index i = 0; i < d; ++i) {
    const bool hat_over = gap_hat[i] - th_hat > 0.0;
    const bool star_over = gap_star[i] - th_star > 0.0;
    if (hat_over && !star_over) out.set_a.push_back(i);
    if (star_over && !hat_over) out.set_b.push_back(i);
    const double bound =
        std::min(std::abs(gap_hat[i] - th_hat), std::abs(gap_star[i] - th_star)) - slack;
    out.min_bounds[i] = std::max(0.0, bound);
  }
  out.delta_l0_pstar =
      static_cast<Index>(out.set_a.size()) - static_cast<Index>(out.set_b.size());
  return out;
}

ExclusionPartition build_partition(const FlipContext& ctx, const L0FlipQuantities& l0q) {
  const VectorXd v = ctx.v();
  const Index d = ctx.dim();
  if (!(v.norm() > 0.0)) throw InvalidInput("build_partition: v is zero");

  ExclusionPartition part;
  part.k = std::max<Index>(l0q.delta_l0_pstar, 0);
  part.min_bounds = l0q.min_bounds;
  part.delta_max = ctx.epsilon * v / v.norm();

  if (ctx.epsilon == 0.0) {
    for (Index i = 0; i < d; ++i) {
      (l0q.min_bounds[i] <= 0.0 ? part.unchanged : part.remaining).push_back(i);
    }
    if (static_cast<Index>(part.unchanged.size()) < part.k) {
      throw Infeasible("L0 flip impossible: zero budget");
    }
    return part;
  }

  const auto sol = solve_closed_form({v, ctx.epsilon, l0q.min_bounds, part.k});
  part.unchanged = sol.unchanged;
  part.changed = sol.pinned;
  part.remaining = sol.free;
  part.epsilon_remain = sol.epsilon_remain;
  part.exhaustive = sol.exhaustive;
  return part;
}

ExclusionPartition literal_partition(const FlipContext& ctx, const L0FlipQuantities& l0q) {
  const VectorXd v = ctx.v();
  const Index d = ctx.dim();
  if (!(v.norm() > 0.0)) throw InvalidInput("literal_partition: v is zero");

  ExclusionPartition part;
  part.k = std::max<Index>(l0q.delta_l0_pstar, 0);
  part.min_bounds = l0q.min_bounds;
  part.delta_max = ctx.epsilon * v / v.norm();

  std::vector<Index> outside;
  for (Index i = 0; i < d; ++i) {
    if (std::abs(part.delta_max[i]) >= l0q.min_bounds[i]) {
      part.unchanged.push_back(i);
    } else {
      outside.push_back(i);
    }
  }
  const Index missing = part.k - static_cast<Index>(part.unchanged.size());
  if (missing > 0) {
    std::stable_sort(outside.begin(), outside.end(), [&](Index a, Index b) {
      return std::abs(std::abs(part.delta_max[a]) - l0q.min_bounds[a]) <
             std::abs(std::abs(part.delta_max[b]) - l0q.min_bounds[b]);
    });
    part.changed.assign(outside.begin(), outside.begin() + missing);
    std::sort(part.changed.begin(), part.changed.end());
    part.remaining.assign(outside.begin() + missing, outside.end());
    std::sort(part.remaining.begin(), part.remaining.end());
  } else {
    part.remaining = outside;
  }

  double rem2 = ctx.epsilon * ctx.epsilon;
  for (Index i : part.changed) rem2 -= l0q.min_bounds[i] * l0q.min_bounds[i];
  for (Index i : part.unchanged) rem2 -= part.delta_max[i] * part.delta_max[i];
  if (rem2 < -1e-12) throw Infeasible("L0 flip impossible: greedy partition exceeds the budget");
  part.epsilon_remain = std::sqrt(std::max(0.0, rem2));
  return part;
}

VectorXd partition_delta(const ExclusionPartition& part, const VectorXd& v) {
  VectorXd delta = VectorXd::Zero(v.size());
  for (Index i : part.unchanged) delta[i] = part.delta_max[i];
  for (Index i : part.changed) delta[i] = sign_of(v[i]) * part.min_bounds[i];
  double norm_r = 0.0;
  for (Index i : part.remaining) norm_r += v[i] * v[i];
  norm_r = std::sqrt(norm_r);
  if (norm_r > 0.0) {
    for (Index i : part.remaining) delta[i] = part.epsilon_remain * v[i] / norm_r;
  }
  return delta;
}

double tau_condition_lhs(const FlipContext& ctx, const ExclusionPartition& part,
                         const KLFlipQuantities& klq) {
  const VectorXd& v = klq.v;
  double lhs = 0.0;
  if (ctx.epsilon > 0.0) {
    double kept = 0.0;
    for (Index i : part.unchanged) kept += part.delta_max[i] * part.delta_max[i];
    lhs += v.norm() / ctx.epsilon * kept;
  }
  for (Index i : part.changed) lhs += part.min_bounds[i] * std::abs(v[i]);
  double rest = 0.0;
  for (Index i : part.remaining) rest += v[i] * v[i];
  lhs += part.epsilon_remain * std::sqrt(rest);
  return lhs;
}

bool tau_condition_holds(const FlipContext& ctx, const ExclusionPartition& part,
                         const KLFlipQuantities& klq) {
  if (!(klq.delta_kl_pstar > 0.0)) return false;
  return tau_condition_lhs(ctx, part, klq) < klq.delta_kl_pstar;
}

GammaBranches gamma_branches(const FlipContext& ctx, Index j) {
  if (j < 0 || j >= ctx.dim()) throw DimensionError("gamma_threshold: coordinate out of range");
  const auto klq = compute_kl_flip(ctx);
  const VectorXd gap_hat = (ctx.c_hat.values() - ctx.p_star.values()).cwiseAbs();
  const VectorXd gap_star = (ctx.c_star.values() - ctx.p_star.values()).cwiseAbs();
  const double kg = scaled_true_gap(ctx, j, gap_hat.mean(), gap_star.mean());
  const double vn = klq.v.norm();
  const double pj = ctx.p_star[j];
  const double eps = ctx.epsilon;
  const double dkl = klq.delta_kl_pstar;
  const double s = sign_of(ctx.c_hat[j] - ctx.c_star[j]);

  GammaBranches out{kInf, kInf};
  const double den1 = vn * pj - eps;
  if (den1 > 0.0) out.first = kg * vn * pj / den1;
  const double den2 = vn * vn * pj - dkl * s;
  if (den2 > 0.0) {
    const double root = std::sqrt(std::max(0.0, eps * eps * vn * vn - dkl * dkl));
    out.second = (pj * vn * root + kg * vn * vn * pj) / den2;
  }
  return out;
}

double gamma_threshold(const FlipContext& ctx, Index j) {
  const auto b = gamma_branches(ctx, j);
  if (std::isinf(b.first) && std::isinf(b.second)) {
    throw GammaUndefined("coordinate " + std::to_string(j) + " cannot witness: both branches undefined");
  }
  return std::max(b.first, b.second);
}

std::optional<std::pair<double, double>> tau_interval(const FlipContext& ctx, Index j) {
  const VectorXd gap_hat = (ctx.c_hat.values() - ctx.p_star.values()).cwiseAbs();
  const VectorXd gap_star = (ctx.c_star.values() - ctx.p_star.values()).cwiseAbs();
  const double mu_hat = gap_hat.mean();
  const double mu_star = gap_star.mean();
  if (!(mu_hat > 0.0)) return std::nullopt;
  const double lo = gap_star[j] == 0.0 ? 0.0 : gap_star[j] / mu_star;
  const double hi = gap_hat[j] / mu_hat;
  if (!(lo < hi)) return std::nullopt;
  return std::make_pair(lo, hi);
}

namespace {

struct RivalVerdict {
  bool ok = false;
  double margin = -kInf;  // gap - Gamma at the chosen witness
  std::optional<Index> witness;
  double gamma = std::numeric_limits<double>::quiet_NaN();
  double gap = std::numeric_limits<double>::quiet_NaN();
  std::optional<std::pair<double, double>> interval;
  std::string reason;
};

RivalVerdict assess_rival(const FlipContext& ctx, int rival) {
  RivalVerdict out;
  const auto klq = compute_kl_flip(ctx);
  if (!(klq.delta_kl_pstar > 0.0)) {
    out.reason = "KL head does not prefer the true class over class " + std::to_string(rival);
    return out;
  }
  const auto l0q = compute_l0_flip(ctx);
  if (l0q.delta_l0_pstar <= 0) {
    out.reason = "L0 head does not prefer the true class over class " + std::to_string(rival);
    return out;
  }
  for (Index j = 0; j < ctx.dim(); ++j) {
    double gamma = 0.0;
    try {
      gamma = gamma_threshold(ctx, j);
    } catch (const GammaUndefined&) {
      continue;
    }
    const double gap = std::abs(ctx.c_hat[j] - ctx.c_star[j]);
    if (!out.witness || gap - gamma > out.margin) {
      out.witness = j;
      out.margin = gap - gamma;
      out.gamma = gamma;
      out.gap = gap;
    }
  }
  if (!out.witness) {
    out.reason = "no coordinate can witness against class " + std::to_string(rival) +
                 " (Gamma undefined)";
    return out;
  }
  out.interval = tau_interval(ctx, *out.witness);
  if (!(out.margin > 0.0)) {
    out.reason = "coordinate gap below Gamma against class " + std::to_string(rival);
    return out;
  }
  // Gamma only shows that some tau admits exclusion; the detector runs at one
  // fixed tau, so the exact condition must hold there too. An infeasible L0
  // partition means no perturbation in budget can flip the L0 head at all.
  try {
    const auto part = build_partition(ctx, l0q);
    if (!tau_condition_holds(ctx, part, klq)) {
      out.reason = "tau condition fails at tau=" + format_double(ctx.tau) + " against class " +
                   std::to_string(rival);
      out.margin = std::min(out.margin, klq.delta_kl_pstar - tau_condition_lhs(ctx, part, klq));
      return out;
    }
  } catch (const Infeasible&) {
  }
  out.ok = true;
  out.reason = "ok";
  return out;
}

}  // namespace

ComplianceReport classify_compliance(const Simplex& p_star, int label,
                                     const PrototypeSet& protos, double epsilon, double tau) {
  if (label < 0 || label >= protos.classes()) {
    throw InvalidInput("classify_compliance: label outside the prototype set");
  }
  if (p_star.dim() != protos.dim()) {
    throw DimensionError("classify_compliance: embedding and prototypes differ in dimension");
  }

  ComplianceReport report;
  report.compliant = true;
  report.reason = "ok";
  std::optional<RivalVerdict> weakest;
  for (int r = 0; r < protos.classes(); ++r) {
    if (r == label) continue;
    RivalVerdict verdict;
    if (protos[r] == protos[label]) {
      verdict.reason = "class " + std::to_string(r) + " shares the true prototype";
    } else {
      verdict = assess_rival(FlipContext(p_star, protos[label], protos[r], epsilon, tau), r);
    }
    const bool weaker = !weakest || (verdict.ok == weakest->ok ? verdict.margin < weakest->margin
                                                                : !verdict.ok);
    if (weaker) {
      weakest = verdict;
      report.worst_adversary_class = r;
    }
    if (!verdict.ok) report.compliant = false;
  }
  if (!weakest) return report;  // single class: nothing to attack toward

  report.witness_coordinate = weakest->witness;
  report.gamma_j = weakest->gamma;
  report.gap_j = weakest->gap;
  report.tau_interval = weakest->interval;
  report.reason = weakest->reason;
  return report;
}

}  // namespace koala
