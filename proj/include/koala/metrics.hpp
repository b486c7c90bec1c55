#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "koala/errors.hpp"
#include "koala/simplex.hpp"

// Distance and similarity heads over simplex vectors. Everything here is a
// free function over Eigen expressions; overloads taking Simplex forward to
// the vector form. The first argument is always the prototype c, the second
// the embedding p. KL is not symmetric and neither are the similarities.

namespace koala {

struct L0Params {
  double tau = 0.75;  // relative threshold
  double phi = 0.5;   // sigmoid smoothness, surrogate only

  void validate() const {
    if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidInput("tau must lie in [0,1]");
    if (!(phi > 0.0) || !std::isfinite(phi)) throw InvalidInput("phi must be positive");
  }
};

namespace detail {

template <class A, class B>
void require_same_dim(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b,
                      const char* op) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(op) + ": dimensions " + std::to_string(a.size()) +
                         " and " + std::to_string(b.size()) + " differ");
  }
}

template <class Scalar>
Scalar logistic(Scalar x) {
  if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

}  // namespace detail

// KL(c || p) = sum_i c_i log(c_i / p_i), natural log. Clamped at 0 so rounding
// on nearly identical inputs never yields a negative divergence.
template <class A, class B>
typename A::Scalar kl_divergence(const Eigen::MatrixBase<A>& c, const Eigen::MatrixBase<B>& p) {
  detail::require_same_dim(c, p, "kl_divergence");
  using Scalar = typename A::Scalar;
  const Scalar kl = (c.array() * (c.array() / p.array()).log()).sum();
  return std::max(kl, Scalar(0));
}

// mu(c, p): mean absolute coordinate gap.
template <class A, class B>
typename A::Scalar mean_abs_gap(const Eigen::MatrixBase<A>& c, const Eigen::MatrixBase<B>& p) {
  detail::require_same_dim(c, p, "mean_abs_gap");
  return (c - p).cwiseAbs().mean();
}

// Number of coordinates whose gap strictly exceeds tau * mu(c, p). Identical
// inputs give 0: every gap is 0 and 0 > 0 fails.
template <class A, class B>
Index l0_distance(const Eigen::MatrixBase<A>& c, const Eigen::MatrixBase<B>& p,
                  const L0Params& params) {
  detail::require_same_dim(c, p, "l0_distance");
  using Scalar = typename A::Scalar;
  const auto gaps = (c - p).cwiseAbs().eval();
  const Scalar threshold = Scalar(params.tau) * gaps.mean();
  return ((gaps.array() - threshold) > Scalar(0)).count();
}

// Sigmoid surrogate of l0_distance: sum_i sigma((|c_i - p_i| - tau mu) / phi).
// Identical inputs give d / 2.
template <class A, class B>
typename A::Scalar smooth_l0(const Eigen::MatrixBase<A>& c, const Eigen::MatrixBase<B>& p,
                             const L0Params& params) {
  detail::require_same_dim(c, p, "smooth_l0");
  using Scalar = typename A::Scalar;
  const auto gaps = (c - p).cwiseAbs().eval();
  const Scalar threshold = Scalar(params.tau) * gaps.mean();
  Scalar total = 0;
  for (Index i = 0; i < gaps.size(); ++i) {
    total += detail::logistic((gaps[i] - threshold) / Scalar(params.phi));
  }
  return total;
}

template <class A, class B>
typename A::Scalar sim_kl(const Eigen::MatrixBase<A>& c, const Eigen::MatrixBase<B>& p) {
  return std::exp(-kl_divergence(c, p));
}

template <class A, class B>
typename A::Scalar sim_l0(const Eigen::MatrixBase<A>& c, const Eigen::MatrixBase<B>& p,
                          const L0Params& params) {
  using Scalar = typename A::Scalar;
  return Scalar(1) - smooth_l0(c, p, params) / Scalar(c.size());
}

template <class A, class B>
typename A::Scalar cosine_similarity(const Eigen::MatrixBase<A>& c,
                                     const Eigen::MatrixBase<B>& p) {
  detail::require_same_dim(c, p, "cosine_similarity");
  return c.dot(p) / (c.norm() * p.norm());
}

// Gradients with respect to the embedding p (prototype held fixed).

template <class A, class B>
Vector<typename A::Scalar> grad_kl_wrt_p(const Eigen::MatrixBase<A>& c,
                                         const Eigen::MatrixBase<B>& p) {
  detail::require_same_dim(c, p, "grad_kl_wrt_p");
  return -(c.array() / p.array()).matrix();
}

template <class A, class B>
Vector<typename A::Scalar> grad_sim_kl_wrt_p(const Eigen::MatrixBase<A>& c,
                                             const Eigen::MatrixBase<B>& p) {
  return -sim_kl(c, p) * grad_kl_wrt_p(c, p);
}

// Subgradient 0 for |c_i - p_i| at c_i == p_i.
template <class A, class B>
Vector<typename A::Scalar> grad_smooth_l0_wrt_p(const Eigen::MatrixBase<A>& c,
                                                const Eigen::MatrixBase<B>& p,
                                                const L0Params& params) {
  detail::require_same_dim(c, p, "grad_smooth_l0_wrt_p");
  using Scalar = typename A::Scalar;
  const Index d = c.size();
  const Vector<Scalar> diff = p - c;
  const Scalar threshold = Scalar(params.tau) * diff.cwiseAbs().mean();
  const Scalar phi = Scalar(params.phi);

  Vector<Scalar> slope(d);
  for (Index i = 0; i < d; ++i) {
    const Scalar s = detail::logistic((std::abs(diff[i]) - threshold) / phi);
    slope[i] = s * (Scalar(1) - s);
  }
  const Scalar shared = Scalar(params.tau) / Scalar(d) * slope.sum();
  Vector<Scalar> grad(d);
  for (Index i = 0; i < d; ++i) {
    const Scalar sign = diff[i] > 0 ? Scalar(1) : (diff[i] < 0 ? Scalar(-1) : Scalar(0));
    grad[i] = sign / phi * (slope[i] - shared);
  }
  return grad;
}

template <class A, class B>
Vector<typename A::Scalar> grad_sim_l0_wrt_p(const Eigen::MatrixBase<A>& c,
                                             const Eigen::MatrixBase<B>& p,
                                             const L0Params& params) {
  using Scalar = typename A::Scalar;
  return -grad_smooth_l0_wrt_p(c, p, params) / Scalar(c.size());
}

inline double kl_divergence(const Simplex& c, const Simplex& p) {
  return kl_divergence(c.values(), p.values());
}
inline double mean_abs_gap(const Simplex& c, const Simplex& p) {
  return mean_abs_gap(c.values(), p.values());
}
inline Index l0_distance(const Simplex& c, const Simplex& p, const L0Params& params) {
  return l0_distance(c.values(), p.values(), params);
}
inline double smooth_l0(const Simplex& c, const Simplex& p, const L0Params& params) {
  return smooth_l0(c.values(), p.values(), params);
}
inline double sim_kl(const Simplex& c, const Simplex& p) { return sim_kl(c.values(), p.values()); }
inline double sim_l0(const Simplex& c, const Simplex& p, const L0Params& params) {
  return sim_l0(c.values(), p.values(), params);
}
inline double cosine_similarity(const Simplex& c, const Simplex& p) {
  return cosine_similarity(c.values(), p.values());
}

}  // namespace koala
