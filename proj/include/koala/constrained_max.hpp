#pragma once

#include <random>
#include <vector>

#include "koala/simplex.hpp"

namespace koala {

// maximize v^T delta  s.t.  ||delta||_2 = epsilon and |delta_i| >= min_i for
// at least k coordinates.
struct ConstrainedMaxProblem {
  VectorXd v;
  double epsilon = 0.0;
  VectorXd min_bounds;
  Index k = 0;

  Index dim() const noexcept { return v.size(); }
  void validate() const;
  // Sum of the k smallest min_i^2: the cheapest forced set.
  double required_budget() const;
  bool feasible() const { return required_budget() <= epsilon * epsilon; }
};

// How far delta is from feasible: max of ||delta|| - eps (either sign) and
// the shortfall of the k-th largest |delta_i| - min_i margin. 0 when feasible.
double feasibility_violation(const ConstrainedMaxProblem& problem, const VectorXd& delta);

// v ~ U[-1,1]^d, eps ~ U[0.2,1], min_i = 0 with prob 0.2 else U[0, 0.8 eps],
// k ~ U{0..d}. Redraws until the cheapest forced set leaves at least
// min_slack * eps^2 of the budget unused.
ConstrainedMaxProblem random_constrained_problem(Index d, std::mt19937_64& rng,
                                                 double min_slack = 0.1);

struct ClosedFormSolution {
  VectorXd delta;
  double objective = 0.0;
  // Coordinates left at delta^max (only when delta^max itself is feasible).
  std::vector<Index> unchanged;
  // Coordinates pinned at sgn(v_i) * min_i.
  std::vector<Index> pinned;
  // Coordinates on the rescaled v direction.
  std::vector<Index> free;
  double epsilon_remain = 0.0;
  // The forced set came from exhaustive enumeration (always true for small d).
  bool exhaustive = true;
};

// Two-step solution: delta^max = eps v / ||v||, then its Euclidean projection
// onto the feasible set. Distance to delta^max on the sphere is an affine
// function of v^T delta, so the projection is the constrained maximizer. For
// a fixed forced set the projection is a water-filling in one scale t:
// delta_i = sgn(v_i) max(min_i, t |v_i|) on forced coordinates, t v_i elsewhere.
// Throws Infeasible when no forced set fits the budget.
ClosedFormSolution solve_closed_form(const ConstrainedMaxProblem& problem);

// Water-filling projection for one explicit forced set (mask of size d).
ClosedFormSolution project_with_forced_set(const ConstrainedMaxProblem& problem,
                                           const std::vector<bool>& forced);

struct BruteForceOptions {
  double coarse_step = 0.0;  // radians; 0 picks a default per dimension
  int refine_levels = 4;
  int refine_points = 11;    // grid points per angle per refinement level
  int keep = 24;             // candidates carried into refinement
};

struct BruteForceResult {
  VectorXd delta;
  double objective = 0.0;
  bool found = false;
  std::size_t evaluated = 0;
};

// Dense hyperspherical grid over the sphere for d <= 4 with local zoom
// refinement around the best feasible cells. Independent of the KKT solver.
BruteForceResult brute_force_max(const ConstrainedMaxProblem& problem,
                                 const BruteForceOptions& options = {});

}  // namespace koala
