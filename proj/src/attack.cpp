#include "koala/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <tuple>

#include "koala/parallel.hpp"
#include "koala/theorem.hpp"

namespace koala {

std::string_view attack_mode_name(AttackMode mode) noexcept {
  switch (mode) {
    case AttackMode::KL: return "kl";
    case AttackMode::L0: return "l0";
    case AttackMode::Dual: return "dual";
  }
  return "?";
}

AttackMode parse_attack_mode(std::string_view text) {
  if (text == "kl") return AttackMode::KL;
  if (text == "l0") return AttackMode::L0;
  if (text == "dual") return AttackMode::Dual;
  throw InvalidInput("unknown attack mode '" + std::string(text) + "' (expected kl, l0 or dual)");
}

VectorXd project_perturbation(const VectorXd& delta, const VectorXd& p_star, double epsilon,
                              bool free_delta, double positivity_margin) {
  VectorXd out = delta;
  if (!free_delta) out.array() -= out.mean();
  const double norm = out.norm();
  if (norm > epsilon) out *= epsilon / norm;
  // 0 lies inside the box, so shrinking along the ray always restores it.
  double scale = 1.0;
  for (Index i = 0; i < out.size(); ++i) {
    const double hi = kCoordinateBoundFactor * p_star[i];
    const double lo = -(1.0 - positivity_margin) * p_star[i];
    if (out[i] > hi) scale = std::min(scale, hi / out[i]);
    if (out[i] < lo) scale = std::min(scale, lo / out[i]);
  }
  // hi / x * x can round one ulp past hi; back off a few ulps
  if (scale < 1.0) out *= scale * (1.0 - 4.0 * std::numeric_limits<double>::epsilon());
  return out;
}

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Verdict {
  int kl_class = -1;
  int l0_class = -1;
  double objective = -std::numeric_limits<double>::infinity();
};

// Fast head evaluation for the search loop. KL uses the split
// sum c log c - sum c log p so each candidate costs d logarithms.
class Scorer {
 public:
  Scorer(const Simplex& p_star, int label, const PrototypeSet& protos, const AttackOptions& opt)
      : p_(p_star.values()), label_(label), m_(protos.classes()), d_(p_star.dim()),
        params_(opt.params), mode_(opt.mode) {
    c_.resize(m_, d_);
    neg_entropy_.resize(m_);
    for (int k = 0; k < m_; ++k) {
      c_.row(k) = protos[k].values().transpose();
      neg_entropy_[k] = (protos[k].values().array() * protos[k].values().array().log()).sum();
    }
    kl_.resize(m_);
    smooth_.resize(m_);
  }

  // Objective toward `rival`, or the best rival when rival < 0.
  Verdict evaluate(const VectorXd& delta, int rival = -1) {
    const VectorXd p = p_ + delta;
    const VectorXd logp = p.array().log().matrix();
    std::vector<Index> l0(static_cast<std::size_t>(m_));
    for (int k = 0; k < m_; ++k) {
      kl_[k] = std::max(0.0, neg_entropy_[k] - c_.row(k).dot(logp));
      const VectorXd gaps = (c_.row(k).transpose() - p).cwiseAbs();
      const double th = params_.tau * gaps.mean();
      Index count = 0;
      double smooth = 0.0;
      for (Index i = 0; i < d_; ++i) {
        if (gaps[i] - th > 0.0) ++count;
        smooth += detail::logistic((gaps[i] - th) / params_.phi);
      }
      l0[k] = count;
      smooth_[k] = smooth;
    }
    Verdict v;
    v.kl_class = static_cast<int>(std::min_element(kl_.data(), kl_.data() + m_) - kl_.data());
    v.l0_class = static_cast<int>(std::min_element(l0.begin(), l0.end()) - l0.begin());
    for (int r = 0; r < m_; ++r) {
      if (r == label_ || (rival >= 0 && r != rival)) continue;
      v.objective = std::max(v.objective, objective_toward(r));
    }
    return v;
  }

  int label() const { return label_; }
  int classes() const { return m_; }

 private:
  double objective_toward(int r) const {
    double kl_margin = std::numeric_limits<double>::infinity();
    double l0_margin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < m_; ++k) {
      if (k == r) continue;
      kl_margin = std::min(kl_margin, kl_[k] - kl_[r]);
      l0_margin = std::min(l0_margin, smooth_[k] - smooth_[r]);
    }
    switch (mode_) {
      case AttackMode::KL: return kl_margin;
      case AttackMode::L0: return l0_margin;
      case AttackMode::Dual: return std::min(kl_margin, l0_margin);
    }
    return 0.0;
  }

  VectorXd p_;
  int label_;
  int m_;
  Index d_;
  L0Params params_;
  AttackMode mode_;
  MatrixXd c_;
  VectorXd neg_entropy_;
  VectorXd kl_;
  VectorXd smooth_;
};

struct Candidate {
  VectorXd delta;
  Verdict verdict;
  bool set = false;
};

bool goal_met(AttackMode mode, const Verdict& v, int label) {
  switch (mode) {
    case AttackMode::KL: return v.kl_class != label;
    case AttackMode::L0: return v.l0_class != label;
    case AttackMode::Dual: return v.kl_class != label && v.kl_class == v.l0_class;
  }
  return false;
}

// Lexicographic preference: goal reached, heads flipped, objective.
auto rank(AttackMode mode, const Verdict& v, int label, bool prefer_single) {
  const int flips = (v.kl_class != label ? 1 : 0) + (v.l0_class != label ? 1 : 0);
  if (prefer_single) {
    const bool dual = v.kl_class != label && v.kl_class == v.l0_class;
    const int tier = flips == 1 ? 2 : (dual ? 1 : 0);
    return std::make_tuple(tier, 0, v.objective);
  }
  return std::make_tuple(goal_met(mode, v, label) ? 1 : 0, flips, v.objective);
}

struct Search {
  const Simplex& p_star;
  int label;
  const PrototypeSet& protos;
  double epsilon;
  const AttackOptions& opt;
  bool prefer_single;
  Scorer scorer;
  std::mt19937_64 rng;
  Candidate best;
  std::size_t evaluations = 0;

  Search(const Simplex& p, int y, const PrototypeSet& pr, double eps, const AttackOptions& o,
         bool single, std::uint64_t stream)
      : p_star(p), label(y), protos(pr), epsilon(eps), opt(o), prefer_single(single),
        scorer(p, y, pr, o), rng(mix(mix(o.seed) ^ stream)) {}

  VectorXd project(const VectorXd& raw) const {
    return project_perturbation(raw, p_star.values(), epsilon, opt.free_delta,
                                opt.positivity_margin);
  }

  // Confirms a goal-reaching candidate with the reference head functions so
  // rounding in the fast scorer can never fabricate a flip.
  bool confirmed(const VectorXd& delta, const Verdict& v) const {
    const VectorXd p = p_star.values() + delta;
    const int kl = vote(p, protos, Head::KL, opt.params).predicted;
    const int l0 = vote(p, protos, Head::L0, opt.params).predicted;
    return kl == v.kl_class && l0 == v.l0_class;
  }

  // Returns true once the goal is met (search can stop).
  bool offer(const VectorXd& delta, const Verdict& v) {
    ++evaluations;
    if (!prefer_single && goal_met(opt.mode, v, label) && !confirmed(delta, v)) return false;
    if (!best.set || rank(opt.mode, v, label, prefer_single) >
                         rank(opt.mode, best.verdict, label, prefer_single)) {
      best = {delta, v, true};
    }
    if (prefer_single) return false;
    return goal_met(opt.mode, best.verdict, label);
  }

  bool try_delta(const VectorXd& raw) {
    const VectorXd delta = project(raw);
    return offer(delta, scorer.evaluate(delta));
  }

  bool closed_form_candidates() {
    const VectorXd p = p_star.values();
    for (int r = 0; r < protos.classes(); ++r) {
      if (r == label || protos[r] == protos[label]) continue;
      const FlipContext ctx(p_star, protos[label], protos[r], epsilon, opt.params.tau);
      const VectorXd v = ctx.v();
      if (try_delta(epsilon * v / v.norm())) return true;
      try {
        const auto l0q = compute_l0_flip(ctx);
        const auto part = build_partition(ctx, l0q);
        if (try_delta(partition_delta(part, v))) return true;
      } catch (const Error&) {
        // no feasible L0 partition toward this rival
      }
      const VectorXd toward = protos[r].values() - p;
      const double dist = toward.norm();
      if (dist > 0.0) {
        for (double f : {0.25, 0.5, 0.75, 1.0}) {
          if (try_delta(f * epsilon * toward / dist)) return true;
        }
        if (try_delta(std::min(1.0, epsilon / dist) * toward)) return true;
      }
    }
    return false;
  }

  VectorXd gaussian() {
    std::normal_distribution<double> n01(0.0, 1.0);
    VectorXd g(p_star.dim());
    for (Index i = 0; i < g.size(); ++i) g[i] = n01(rng);
    return g;
  }

  VectorXd on_sphere(VectorXd g) const {
    if (!opt.free_delta) g.array() -= g.mean();
    const double n = g.norm();
    return n > 0.0 ? VectorXd(epsilon * g / n) : g;
  }

  bool random_directions() {
    for (std::size_t i = 0; i < opt.budget.random_directions; ++i) {
      if (try_delta(on_sphere(gaussian()))) return true;
    }
    return false;
  }

  bool ascent() {
    const Index d = p_star.dim();
    std::vector<int> rivals;
    for (int r = 0; r < protos.classes(); ++r) {
      if (r != label) rivals.push_back(r);
    }
    if (rivals.empty()) return false;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double h = 1e-6;
    const double step = epsilon / 20.0;
    for (int restart = 0; restart < opt.budget.ascent_restarts; ++restart) {
      const int rival = rivals[static_cast<std::size_t>(restart) % rivals.size()];
      VectorXd delta = project(unit(rng) * on_sphere(gaussian()));
      for (int s = 0; s < opt.budget.ascent_steps; ++s) {
        VectorXd grad(d);
        for (Index i = 0; i < d; ++i) {
          VectorXd up = delta;
          VectorXd down = delta;
          up[i] += h;
          down[i] -= h;
          grad[i] = (scorer.evaluate(up, rival).objective - scorer.evaluate(down, rival).objective) /
                    (2.0 * h);
        }
        if (!opt.free_delta) grad.array() -= grad.mean();
        const double gn = grad.norm();
        if (!(gn > 0.0) || !std::isfinite(gn)) break;
        delta = project(delta + step * grad / gn);
        if (offer(delta, scorer.evaluate(delta))) return true;
      }
    }
    return false;
  }

  AttackResult run() {
    const Index d = p_star.dim();
    const VectorXd zero = VectorXd::Zero(d);
    offer(zero, scorer.evaluate(zero));
    if (epsilon > 0.0 && !opt.budget.empty()) {
      const bool done = closed_form_candidates() || random_directions() || ascent();
      (void)done;
    }

    AttackResult out;
    out.delta = best.delta;
    out.iterations = evaluations;
    const VectorXd p = p_star.values() + out.delta;
    out.kl_class = vote(p, protos, Head::KL, opt.params).predicted;
    out.l0_class = vote(p, protos, Head::L0, opt.params).predicted;
    out.flipped_kl = out.kl_class != label;
    out.flipped_l0 = out.l0_class != label;
    out.dual_flip_same_class = out.flipped_kl && out.kl_class == out.l0_class;
    return out;
  }
};

void check_inputs(const Simplex& p_star, int label, const PrototypeSet& protos, double epsilon,
                  const AttackOptions& options) {
  if (p_star.dim() != protos.dim()) {
    throw DimensionError("attack: embedding and prototypes differ in dimension");
  }
  if (label < 0 || label >= protos.classes()) throw InvalidInput("attack: label out of range");
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw InvalidInput("attack: epsilon must be finite and >= 0");
  }
  if (!(options.positivity_margin > 0.0 && options.positivity_margin < 1.0)) {
    throw InvalidInput("attack: positivity margin must lie in (0,1)");
  }
  options.params.validate();
}

}  // namespace

AttackResult search_attack(const Simplex& p_star, int label, const PrototypeSet& protos,
                           double epsilon, const AttackOptions& options, std::uint64_t stream) {
  check_inputs(p_star, label, protos, epsilon, options);
  return Search(p_star, label, protos, epsilon, options, false, stream).run();
}

EmbeddingDataset craft_attacked_dataset(const EmbeddingDataset& clean, const PrototypeSet& protos,
                                        double epsilon, const AttackOptions& options,
                                        unsigned threads) {
  if (options.free_delta) {
    throw InvalidInput("attacked datasets need sum-zero perturbations (drop --free-delta)");
  }
  if (clean.dim() != protos.dim()) {
    throw DimensionError("attack: dataset and prototypes differ in dimension");
  }
  std::vector<VectorXd> attacked(clean.size());
  parallel_for(clean.size(), threads, [&](std::size_t i) {
    const auto& row = clean[i];
    check_inputs(row.embedding, row.label, protos, epsilon, options);
    const auto result = Search(row.embedding, row.label, protos, epsilon, options, true, i).run();
    attacked[i] = row.embedding.values() + result.delta;
  });

  EmbeddingDataset out(clean.dim(), std::max(clean.classes(), protos.classes()));
  for (const auto& row : clean.rows()) {
    out.push_back({row.id, row.label, false, row.embedding});
  }
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const auto& row = clean[i];
    out.push_back({row.id, row.label, true, Simplex(attacked[i])});
  }
  return out;
}

}  // namespace koala
