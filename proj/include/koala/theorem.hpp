#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "koala/constrained_max.hpp"
#include "koala/prototypes.hpp"

namespace koala {

// Clean embedding p*, true prototype c*, rival prototype c^ and budget.
struct FlipContext {
  Simplex p_star;
  Simplex c_star;
  Simplex c_hat;
  double epsilon;
  double tau;

  FlipContext(Simplex p_star, Simplex c_star, Simplex c_hat, double epsilon, double tau);

  Index dim() const noexcept { return p_star.dim(); }
  // v_i = (c^_i - c*_i) / p*_i
  VectorXd v() const;
  // ||delta||_1 is unknown before the attack; use its worst case sqrt(d) eps.
  double l1_budget() const;
};

struct KLFlipQuantities {
  VectorXd v;
  double delta_kl_pstar = 0.0;  // KL(c^ || p*) - KL(c* || p*)
};

struct L0FlipQuantities {
  std::vector<Index> set_a;  // rival gap over threshold, true gap not
  std::vector<Index> set_b;  // the mirror image
  Index delta_l0_pstar = 0;  // |A| - |B|
  VectorXd min_bounds;
  double mu_hat = 0.0;
  double mu_star = 0.0;
};

struct ExclusionPartition {
  VectorXd delta_max;
  std::vector<Index> unchanged;
  std::vector<Index> changed;
  std::vector<Index> remaining;
  double epsilon_remain = 0.0;
  Index k = 0;
  VectorXd min_bounds;
  bool exhaustive = true;  // forced set found by enumeration
};

struct ComplianceReport {
  bool compliant = false;
  std::optional<Index> witness_coordinate;
  double gamma_j = 0.0;  // NaN when no coordinate had a defined threshold
  double gap_j = 0.0;
  std::optional<std::pair<double, double>> tau_interval;
  int worst_adversary_class = -1;
  std::string reason;
};

KLFlipQuantities compute_kl_flip(const FlipContext& ctx);

// sum_i v_i delta_i; an attack that flips KL needs this above delta_kl_pstar.
double kl_flip_lhs(const FlipContext& ctx, const VectorXd& delta);

L0FlipQuantities compute_l0_flip(const FlipContext& ctx);

// Exact maximizer of v.delta under the L0 flip necessity, expressed as a
// partition. Throws Infeasible ("L0 flip impossible") when no perturbation in
// budget can move delta_l0_pstar coordinates past their bounds.
ExclusionPartition build_partition(const FlipContext& ctx, const L0FlipQuantities& l0q);

// Greedy construction: keep every coordinate where delta^max already clears
// its bound, pin the missing ones with the smallest deficit, rescale the rest.
// Feasible but in general below the exact maximum.
ExclusionPartition literal_partition(const FlipContext& ctx, const L0FlipQuantities& l0q);

// delta^max on unchanged, sgn(v_i) min_i on changed, eps_remain v_R/||v_R|| on
// the remainder.
VectorXd partition_delta(const ExclusionPartition& part, const VectorXd& v);

double tau_condition_lhs(const FlipContext& ctx, const ExclusionPartition& part,
                         const KLFlipQuantities& klq);
bool tau_condition_holds(const FlipContext& ctx, const ExclusionPartition& part,
                         const KLFlipQuantities& klq);

struct GammaBranches {
  double first;   // +inf when ||v|| p*_j <= eps
  double second;  // +inf when its denominator is not positive
};

GammaBranches gamma_branches(const FlipContext& ctx, Index j);
// max of both branches. Throws GammaUndefined when neither is finite.
double gamma_threshold(const FlipContext& ctx, Index j);

// (|c*_j - p*_j| / mu*, |c^_j - p*_j| / mu^), empty when lo >= hi.
std::optional<std::pair<double, double>> tau_interval(const FlipContext& ctx, Index j);

ComplianceReport classify_compliance(const Simplex& p_star, int label,
                                     const PrototypeSet& protos, double epsilon, double tau);

}  // namespace koala
