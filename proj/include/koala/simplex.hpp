#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "koala/errors.hpp"

namespace koala {

template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXd = Vector<double>;
using MatrixXd = Matrix<double>;
using Index = Eigen::Index;

// Absolute tolerance on the coordinate sum of a simplex vector.
inline constexpr double kSimplexTolerance = 1e-9;
// Tolerance for vectors that went through f32 storage (binary KED rows).
inline constexpr double kF32SimplexTolerance = 1e-6;
// Lower clamp applied by normalize_to_simplex.
inline constexpr double kMinProbability = 1e-30;

template <class Derived>
bool is_simplex(const Eigen::MatrixBase<Derived>& v, double tolerance = kSimplexTolerance) {
  if (v.size() < 2 || !v.allFinite()) return false;
  if (!(v.array() > 0).all()) return false;
  const double sum = static_cast<double>(v.sum());
  return std::abs(sum - 1.0) <= tolerance;
}

// Strictly positive vector whose coordinates sum to one. Embeddings and
// prototypes live here; construction validates and never renormalizes.
template <class Scalar = double>
class SimplexVector {
 public:
  explicit SimplexVector(Vector<Scalar> values, double tolerance = kSimplexTolerance)
      : values_(std::move(values)) {
    if (values_.size() < 2) {
      throw InvalidInput("simplex vector needs dimension >= 2, got " +
                         std::to_string(values_.size()));
    }
    if (!values_.allFinite()) throw InvalidInput("simplex vector has non-finite entries");
    if (!(values_.array() > Scalar(0)).all()) {
      throw InvalidInput("simplex vector must be strictly positive");
    }
    const double sum = static_cast<double>(values_.sum());
    if (std::abs(sum - 1.0) > tolerance) {
      throw InvalidInput("simplex vector sums to " + std::to_string(sum));
    }
  }

  static SimplexVector uniform(Index dim) {
    return SimplexVector(Vector<Scalar>::Constant(dim, Scalar(1) / Scalar(dim)));
  }

  const Vector<Scalar>& values() const noexcept { return values_; }
  Index dim() const noexcept { return values_.size(); }
  Scalar operator[](Index i) const { return values_[i]; }

  friend bool operator==(const SimplexVector& a, const SimplexVector& b) {
    return a.values_.size() == b.values_.size() && a.values_ == b.values_;
  }

 private:
  Vector<Scalar> values_;
};

using Simplex = SimplexVector<double>;

// Max-subtracted softmax at the given temperature, clamped below at
// kMinProbability so the result stays strictly positive.
template <class Derived>
SimplexVector<typename Derived::Scalar> normalize_to_simplex(
    const Eigen::MatrixBase<Derived>& raw, typename Derived::Scalar temperature = 1) {
  using Scalar = typename Derived::Scalar;
  if (raw.size() < 2) throw InvalidInput("normalize_to_simplex needs dimension >= 2");
  if (!(temperature > 0) || !std::isfinite(static_cast<double>(temperature))) {
    throw InvalidInput("temperature must be positive and finite");
  }
  if (!raw.allFinite()) throw InvalidInput("normalize_to_simplex: non-finite input");

  const Scalar top = raw.maxCoeff();
  Vector<Scalar> e = ((raw.array() - top) / temperature).exp().matrix();
  e /= e.sum();
  e = e.array().max(Scalar(kMinProbability)).matrix();
  return SimplexVector<Scalar>(std::move(e));
}

// Additive perturbation in embedding units with its declared budget.
struct Perturbation {
  VectorXd delta;
  double budget = 0.0;

  bool within_budget(double slack = 1e-9) const { return delta.norm() <= budget + slack; }
};

struct AssumptionVerdict {
  bool a1_clean = false;      // p is a simplex vector
  bool a1_perturbed = false;  // p + delta is a simplex vector
  bool a2_budget = false;     // ||delta||_2 <= epsilon
  bool a3_coordinate = false; // |delta_i| <= 1.5 |p_i|

  bool all() const { return a1_clean && a1_perturbed && a2_budget && a3_coordinate; }
  friend bool operator==(const AssumptionVerdict&, const AssumptionVerdict&) = default;
};

inline constexpr double kCoordinateBoundFactor = 1.5;

inline AssumptionVerdict validate_assumptions(const VectorXd& p, const Perturbation& delta) {
  if (p.size() != delta.delta.size()) {
    throw DimensionError("validate_assumptions: p has dimension " + std::to_string(p.size()) +
                         ", delta has " + std::to_string(delta.delta.size()));
  }
  AssumptionVerdict v;
  v.a1_clean = is_simplex(p);
  v.a1_perturbed = is_simplex(p + delta.delta);
  v.a2_budget = delta.within_budget();
  v.a3_coordinate =
      (delta.delta.array().abs() <= kCoordinateBoundFactor * p.array().abs()).all();
  return v;
}

}  // namespace koala
