#include "koala/constrained_max.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <functional>
#include <set>

namespace koala {

namespace {

// Forced sets are enumerated exhaustively up to this many combinations.
constexpr double kExhaustiveLimit = 50000.0;
// 1-swap local search is skipped above this many swaps per pass.
constexpr Index kSwapLimit = 20000;

double sign_of(double x) { return x < 0 ? -1.0 : 1.0; }

double binomial(Index n, Index k) {
  k = std::min(k, n - k);
  double r = 1.0;
  for (Index i = 1; i <= k; ++i) {
    r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    if (r > 1e18) break;
  }
  return r;
}

}  // namespace

void ConstrainedMaxProblem::validate() const {
  if (v.size() < 1) throw InvalidInput("constrained max: empty v");
  if (min_bounds.size() != v.size()) {
    throw DimensionError("constrained max: v has " + std::to_string(v.size()) +
                         " entries, min_bounds " + std::to_string(min_bounds.size()));
  }
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw InvalidInput("constrained max: epsilon must be positive");
  }
  if (k < 0 || k > v.size()) throw InvalidInput("constrained max: k outside [0, d]");
  if (!v.allFinite() || !min_bounds.allFinite()) {
    throw InvalidInput("constrained max: non-finite input");
  }
  if ((min_bounds.array() < 0).any()) throw InvalidInput("constrained max: negative min bound");
  if (v.norm() <= 0.0) throw InvalidInput("constrained max: v must be nonzero");
}

double ConstrainedMaxProblem::required_budget() const {
  std::vector<double> sq(static_cast<std::size_t>(dim()));
  for (Index i = 0; i < dim(); ++i) sq[i] = min_bounds[i] * min_bounds[i];
  std::sort(sq.begin(), sq.end());
  double need = 0.0;
  for (Index i = 0; i < k; ++i) need += sq[i];
  return need;
}

double feasibility_violation(const ConstrainedMaxProblem& problem, const VectorXd& delta) {
  double worst = std::abs(delta.norm() - problem.epsilon);
  if (problem.k > 0) {
    std::vector<double> margin(static_cast<std::size_t>(problem.dim()));
    for (Index i = 0; i < problem.dim(); ++i) {
      margin[i] = std::abs(delta[i]) - problem.min_bounds[i];
    }
    std::nth_element(margin.begin(), margin.begin() + (problem.k - 1), margin.end(),
                     std::greater<>());
    worst = std::max(worst, -margin[problem.k - 1]);
  }
  return std::max(worst, 0.0);
}

ConstrainedMaxProblem random_constrained_problem(Index d, std::mt19937_64& rng,
                                                 double min_slack) {
  if (d < 1) throw InvalidInput("problem dimension must be >= 1");
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> frac(0.0, 1.0);
  while (true) {
    ConstrainedMaxProblem p;
    p.v = VectorXd(d);
    for (Index i = 0; i < d; ++i) p.v[i] = unit(rng);
    p.epsilon = 0.2 + 0.8 * frac(rng);
    p.min_bounds = VectorXd(d);
    for (Index i = 0; i < d; ++i) {
      p.min_bounds[i] = frac(rng) < 0.2 ? 0.0 : 0.8 * p.epsilon * frac(rng);
    }
    p.k = static_cast<Index>(rng() % static_cast<std::uint64_t>(d + 1));
    if (p.v.norm() > 0.0 &&
        p.required_budget() <= (1.0 - min_slack) * p.epsilon * p.epsilon) {
      return p;
    }
  }
}

ClosedFormSolution project_with_forced_set(const ConstrainedMaxProblem& problem,
                                           const std::vector<bool>& forced) {
  const Index d = problem.dim();
  const VectorXd& v = problem.v;
  const VectorXd& mins = problem.min_bounds;
  const double eps2 = problem.epsilon * problem.epsilon;

  // Start at t = 0 with every forced coordinate pinned, then release them in
  // breakpoint order min_i / |v_i| while the norm equation has no root yet.
  double pinned_sq = 0.0;
  double free_sq = 0.0;
  std::vector<Index> releasable;
  for (Index i = 0; i < d; ++i) {
    if (forced[i]) {
      pinned_sq += mins[i] * mins[i];
      if (v[i] != 0.0) releasable.push_back(i);
    } else {
      free_sq += v[i] * v[i];
    }
  }
  if (pinned_sq > eps2 * (1.0 + 1e-12)) throw Infeasible("forced set exceeds the budget");
  std::sort(releasable.begin(), releasable.end(), [&](Index a, Index b) {
    const double ba = mins[a] / std::abs(v[a]);
    const double bb = mins[b] / std::abs(v[b]);
    return ba != bb ? ba < bb : a < b;
  });

  auto root = [&] {
    return free_sq > 0.0 ? std::sqrt(std::max(0.0, eps2 - pinned_sq) / free_sq)
                         : std::numeric_limits<double>::infinity();
  };
  double t = root();
  std::size_t released = 0;
  while (released < releasable.size()) {
    const Index i = releasable[released];
    if (t <= mins[i] / std::abs(v[i])) break;
    pinned_sq -= mins[i] * mins[i];
    free_sq += v[i] * v[i];
    ++released;
    t = root();
  }

  ClosedFormSolution out;
  out.delta = VectorXd::Zero(d);
  std::vector<bool> pinned(static_cast<std::size_t>(d), false);
  for (Index i = 0; i < d; ++i) pinned[i] = forced[i];
  for (std::size_t r = 0; r < released; ++r) pinned[releasable[r]] = false;
  double remain_sq = 0.0;
  for (Index i = 0; i < d; ++i) {
    if (pinned[i]) {
      out.delta[i] = sign_of(v[i]) * mins[i];
      out.pinned.push_back(i);
    } else {
      out.delta[i] = t * v[i];
      out.free.push_back(i);
      remain_sq += out.delta[i] * out.delta[i];
    }
  }
  out.epsilon_remain = std::sqrt(remain_sq);
  out.objective = v.dot(out.delta);
  return out;
}

namespace {

struct Best {
  ClosedFormSolution solution;
  std::vector<bool> mask;
  bool set = false;

  void offer(const ConstrainedMaxProblem& p, const std::vector<bool>& m) {
    ClosedFormSolution s;
    try {
      s = project_with_forced_set(p, m);
    } catch (const Infeasible&) {
      return;
    }
    if (!set || s.objective > solution.objective) {
      solution = std::move(s);
      mask = m;
      set = true;
    }
  }
};

void enumerate_forced_sets(const ConstrainedMaxProblem& p, Best& best) {
  const Index d = p.dim();
  std::vector<Index> idx(static_cast<std::size_t>(p.k));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::vector<bool> mask(static_cast<std::size_t>(d));
  while (true) {
    std::fill(mask.begin(), mask.end(), false);
    for (Index i : idx) mask[i] = true;
    best.offer(p, mask);
    Index pos = p.k - 1;
    while (pos >= 0 && idx[pos] == d - p.k + pos) --pos;
    if (pos < 0) break;
    ++idx[pos];
    for (Index j = pos + 1; j < p.k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

void heuristic_forced_sets(const ConstrainedMaxProblem& p, Best& best) {
  const Index d = p.dim();
  std::vector<double> scales;
  scales.push_back(p.epsilon / p.v.norm());
  for (Index i = 0; i < d; ++i) {
    if (p.v[i] != 0.0) scales.push_back(p.min_bounds[i] / std::abs(p.v[i]));
  }
  std::sort(scales.begin(), scales.end());
  scales.erase(std::unique(scales.begin(), scales.end()), scales.end());

  std::set<std::vector<bool>> seen;
  std::vector<Index> order(static_cast<std::size_t>(d));
  for (double t : scales) {
    // Extra budget a coordinate consumes when forced at scale t.
    auto cost = [&](Index i) {
      const double free_part = t * std::abs(p.v[i]);
      return std::max(0.0, p.min_bounds[i] * p.min_bounds[i] - free_part * free_part);
    };
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return cost(a) < cost(b); });
    std::vector<bool> mask(static_cast<std::size_t>(d), false);
    for (Index j = 0; j < p.k; ++j) mask[order[j]] = true;
    if (seen.insert(mask).second) best.offer(p, mask);
  }

  if (!best.set || p.k * (d - p.k) > kSwapLimit) return;
  bool improved = true;
  for (int pass = 0; improved && pass < 8; ++pass) {
    improved = false;
    const std::vector<bool> base = best.mask;
    const double before = best.solution.objective;
    for (Index in = 0; in < d; ++in) {
      if (!base[in]) continue;
      for (Index out = 0; out < d; ++out) {
        if (base[out]) continue;
        std::vector<bool> trial = base;
        trial[in] = false;
        trial[out] = true;
        best.offer(p, trial);
      }
    }
    improved = best.solution.objective > before;
  }
}

}  // namespace

ClosedFormSolution solve_closed_form(const ConstrainedMaxProblem& problem) {
  problem.validate();
  const Index d = problem.dim();
  const VectorXd delta_max = problem.epsilon * problem.v / problem.v.norm();

  Index satisfied = 0;
  for (Index i = 0; i < d; ++i) {
    if (std::abs(delta_max[i]) >= problem.min_bounds[i]) ++satisfied;
  }
  if (satisfied >= problem.k) {
    ClosedFormSolution out;
    out.delta = delta_max;
    out.objective = problem.v.dot(delta_max);
    double remain_sq = 0.0;
    for (Index i = 0; i < d; ++i) {
      if (std::abs(delta_max[i]) >= problem.min_bounds[i]) {
        out.unchanged.push_back(i);
      } else {
        out.free.push_back(i);
        remain_sq += delta_max[i] * delta_max[i];
      }
    }
    out.epsilon_remain = std::sqrt(remain_sq);
    return out;
  }
  if (!problem.feasible()) {
    throw Infeasible("L0 flip impossible: the " + std::to_string(problem.k) +
                     " smallest bounds exceed the budget");
  }

  Best best;
  const bool exhaustive = binomial(d, problem.k) <= kExhaustiveLimit;
  if (exhaustive) {
    enumerate_forced_sets(problem, best);
  } else {
    heuristic_forced_sets(problem, best);
  }
  if (!best.set) throw Infeasible("L0 flip impossible: no forced set fits the budget");
  best.solution.exhaustive = exhaustive;
  return best.solution;
}

namespace {

// Point on the unit sphere from hyperspherical angles (d - 1 of them).
void sphere_point(const std::vector<double>& angles, VectorXd& x) {
  const Index d = x.size();
  double s = 1.0;
  for (Index i = 0; i + 1 < d; ++i) {
    x[i] = s * std::cos(angles[i]);
    s *= std::sin(angles[i]);
  }
  x[d - 1] = s;
}

struct Candidate {
  double objective;
  std::vector<double> angles;
};

double default_step(Index d) {
  switch (d) {
    case 1: return 0.0;
    case 2: return 2e-3;
    case 3: return 1e-2;
    // feasible slivers can be narrower than 0.05 rad when the budget is tight
    default: return 3e-2;
  }
}

}  // namespace

BruteForceResult brute_force_max(const ConstrainedMaxProblem& problem,
                                 const BruteForceOptions& options) {
  problem.validate();
  const Index d = problem.dim();
  if (d > 4) throw InvalidInput("brute force is limited to d <= 4");

  BruteForceResult result;
  result.delta = VectorXd::Zero(d);
  const double eps = problem.epsilon;

  // Inner loop of the grid: no temporaries.
  auto score = [&](const VectorXd& unit, double& objective) {
    ++result.evaluated;
    Index hit = 0;
    for (Index i = 0; i < d; ++i) hit += std::abs(eps * unit[i]) >= problem.min_bounds[i] ? 1 : 0;
    if (hit < problem.k) return false;
    objective = eps * problem.v.dot(unit);
    return true;
  };

  if (d == 1) {
    for (double s : {1.0, -1.0}) {
      VectorXd x = VectorXd::Constant(1, s);
      double obj = 0.0;
      if (score(x, obj) && (!result.found || obj > result.objective)) {
        result.found = true;
        result.objective = obj;
        result.delta = eps * x;
      }
    }
    return result;
  }

  const double pi = std::acos(-1.0);
  const Index n_angles = d - 1;
  const double step = options.coarse_step > 0.0 ? options.coarse_step : default_step(d);
  std::vector<double> upper(static_cast<std::size_t>(n_angles), pi);
  upper.back() = 2.0 * pi;
  std::vector<Index> counts(static_cast<std::size_t>(n_angles));
  for (Index a = 0; a < n_angles; ++a) {
    counts[a] = static_cast<Index>(std::ceil(upper[a] / step)) + (a + 1 < n_angles ? 1 : 0);
  }

  // Coarse pool is larger than the refinement set so it can be thinned to
  // well separated cells; otherwise one smooth peak fills every slot.
  const std::size_t keep = static_cast<std::size_t>(std::max(1, options.keep));
  const std::size_t pool_size = keep * 32;
  auto worse = [](const Candidate& a, const Candidate& b) { return a.objective > b.objective; };
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(worse)> pool(worse);
  auto consider = [&](double objective, const std::vector<double>& angles) {
    if (pool.size() < pool_size) {
      pool.push({objective, angles});
    } else if (objective > pool.top().objective) {
      pool.pop();
      pool.push({objective, angles});
    }
  };

  // cos/sin of every coarse angle, so the grid walk does no trigonometry
  std::vector<std::vector<double>> grid_angle(static_cast<std::size_t>(n_angles)),
      grid_cos(static_cast<std::size_t>(n_angles)), grid_sin(static_cast<std::size_t>(n_angles));
  for (Index a = 0; a < n_angles; ++a) {
    for (Index i = 0; i < counts[a]; ++i) {
      const double t = std::min(upper[a], static_cast<double>(i) * step);
      grid_angle[a].push_back(t);
      grid_cos[a].push_back(std::cos(t));
      grid_sin[a].push_back(std::sin(t));
    }
  }

  VectorXd x(d);
  std::vector<double> angles(static_cast<std::size_t>(n_angles));
  std::vector<Index> at(static_cast<std::size_t>(n_angles), 0);
  while (true) {
    double s = 1.0;
    for (Index a = 0; a < n_angles; ++a) {
      angles[a] = grid_angle[a][at[a]];
      x[a] = s * grid_cos[a][at[a]];
      s *= grid_sin[a][at[a]];
    }
    x[d - 1] = s;
    double obj = 0.0;
    if (score(x, obj)) consider(obj, angles);
    Index a = 0;
    while (a < n_angles && ++at[a] == counts[a]) at[a++] = 0;
    if (a == n_angles) break;
  }

  std::vector<Candidate> ranked;
  while (!pool.empty()) {
    ranked.push_back(pool.top());
    pool.pop();
  }
  std::reverse(ranked.begin(), ranked.end());
  std::vector<Candidate> top;
  for (const auto& cand : ranked) {
    if (top.size() >= keep) break;
    const bool near = std::any_of(top.begin(), top.end(), [&](const Candidate& t) {
      for (Index a = 0; a < n_angles; ++a) {
        if (std::abs(t.angles[a] - cand.angles[a]) > 3.0 * step) return false;
      }
      return true;
    });
    if (!near) top.push_back(cand);
  }

  // Zoom: each level searches a box of +-span around every kept candidate.
  double span = step;
  const int points = std::max(3, options.refine_points);
  for (int level = 0; level < options.refine_levels && !top.empty(); ++level) {
    std::vector<Candidate> next = top;
    const double h = 2.0 * span / (points - 1);
    for (const auto& cand : top) {
      std::vector<Index> off(static_cast<std::size_t>(n_angles), 0);
      while (true) {
        for (Index a = 0; a < n_angles; ++a) {
          angles[a] = cand.angles[a] - span + h * static_cast<double>(off[a]);
        }
        sphere_point(angles, x);
        double obj = 0.0;
        if (score(x, obj)) {
          auto worst = std::min_element(next.begin(), next.end(),
                                        [](const auto& l, const auto& r) {
                                          return l.objective < r.objective;
                                        });
          if (obj > worst->objective) *worst = {obj, angles};
        }
        Index a = 0;
        while (a < n_angles && ++off[a] == points) off[a++] = 0;
        if (a == n_angles) break;
      }
    }
    top = std::move(next);
    span = 2.0 * h;
  }

  for (const auto& cand : top) {
    if (!result.found || cand.objective > result.objective) {
      result.found = true;
      result.objective = cand.objective;
      sphere_point(cand.angles, x);
      result.delta = eps * x;
    }
  }
  return result;
}

}  // namespace koala
