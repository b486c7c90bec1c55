#include <doctest.h>

#include <cmath>

#include "generators.hpp"
#include "koala/metrics.hpp"

using namespace koala;

namespace {

Simplex s(std::initializer_list<double> xs) {
  VectorXd v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v[i++] = x;
  return Simplex(v);
}

// Central differences of a scalar function of p along each coordinate.
template <class F>
VectorXd numeric_grad(F f, const VectorXd& p, double h = 1e-6) {
  VectorXd g(p.size());
  for (Index i = 0; i < p.size(); ++i) {
    VectorXd a = p, b = p;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("softmax of [ln 3, 0]") {
  const VectorXd raw = (VectorXd(2) << std::log(3.0), 0.0).finished();
  const auto p = normalize_to_simplex(raw);
  CHECK(std::abs(p[0] - 0.75) < 1e-12);
  CHECK(std::abs(p[1] - 0.25) < 1e-12);
}

TEST_CASE("simplex construction rejects bad vectors") {
  CHECK_THROWS_AS(Simplex((VectorXd(2) << 0.5, 0.6).finished()), InvalidInput);
  CHECK_THROWS_AS(Simplex((VectorXd(2) << 1.0, 0.0).finished()), InvalidInput);
  CHECK_THROWS_AS(Simplex((VectorXd(1) << 1.0).finished()), InvalidInput);
  CHECK_NOTHROW(Simplex((VectorXd(2) << 0.5, 0.5 + 5e-10).finished()));
}

TEST_CASE("assumption checks") {
  const VectorXd p = (VectorXd(2) << 0.5, 0.5).finished();
  auto v = validate_assumptions(p, {(VectorXd(2) << 0.8, -0.8).finished(), 1.2});
  CHECK_FALSE(v.a3_coordinate);
  CHECK(v.a2_budget);
  v = validate_assumptions(p, {(VectorXd(2) << 0.1, -0.1).finished(), 0.05});
  CHECK_FALSE(v.a2_budget);
  CHECK(v.a3_coordinate);
  CHECK(v.a1_perturbed);
}

TEST_CASE("hand values") {
  const L0Params params;
  const auto c = s({0.5, 0.5}), p = s({0.25, 0.75});
  const double kl = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);

  CHECK(std::abs(kl_divergence(c, p) - kl) < 1e-9);
  CHECK(std::abs(kl_divergence(c, p) - 0.143841) < 1e-6);
  CHECK(std::abs(sim_kl(c, p) - 0.866026) < 1e-6);
  CHECK(std::abs(cosine_similarity(c, p) - 0.5 / (std::sqrt(0.5) * std::sqrt(0.625))) < 1e-9);
  CHECK(std::abs(cosine_similarity(c, p) - 0.894427) < 1e-6);

  const auto c4 = s({0.7, 0.1, 0.1, 0.1}), u4 = Simplex::uniform(4);
  CHECK(std::abs(mean_abs_gap(c4, u4) - 0.225) < 1e-9);
  CHECK(l0_distance(c4, u4, params) == 1);

  const auto a = s({0.6, 0.4}), b = s({0.4, 0.6});
  CHECK(std::abs(smooth_l0(a, b, params) - 1.049959) < 1e-6);
  CHECK(std::abs(sim_l0(a, b, params) - 0.475021) < 1e-6);
}

TEST_CASE("l0 threshold is strict") {
  // gaps 0.25, 0.25 (exact in binary): tau = 1 puts both on the threshold
  const auto c = s({0.75, 0.25}), p = s({0.5, 0.5});
  CHECK(l0_distance(c, p, {1.0, 0.5}) == 0);
  CHECK(l0_distance(c, p, {0.99, 0.5}) == 2);
}

TEST_CASE("identity pair") {
  const L0Params params;
  const auto p = s({0.2, 0.3, 0.5});
  CHECK(kl_divergence(p, p) == 0.0);
  CHECK(l0_distance(p, p, params) == 0);
  // every term is sigma(0) = 1/2 when c == p
  CHECK(std::abs(sim_l0(p, p, params) - 0.5) < 1e-12);
  CHECK(std::abs(cosine_similarity(p, p) - 1.0) < 1e-12);
}

TEST_CASE("dimension mismatch throws") {
  CHECK_THROWS_AS(kl_divergence(s({0.5, 0.5}), s({0.2, 0.3, 0.5})), DimensionError);
}

TEST_CASE("property: metric ranges on random simplex pairs") {
  gen::Rng rng(101);
  const L0Params params;
  for (int t = 0; t < 500; ++t) {
    const Index d = gen::dim(rng, 2, 12);
    const double alpha = gen::uniform(rng, 0.2, 5.0);
    const auto c = gen::simplex(rng, d, alpha), p = gen::simplex(rng, d, alpha);
    const double kl = kl_divergence(c, p);
    CHECK(kl >= 0.0);
    const Index l0 = l0_distance(c, p, params);
    CHECK(l0 >= 0);
    CHECK(l0 <= d);
    const double sl0 = smooth_l0(c, p, params);
    CHECK(sl0 > 0.0);
    CHECK(sl0 < static_cast<double>(d));
    CHECK(sim_kl(c, p) <= 1.0);
    CHECK(sim_l0(c, p, params) > 0.0);
    CHECK(cosine_similarity(c, p) > 0.0);
  }
}

TEST_CASE("property: gradients match central differences") {
  gen::Rng rng(202);
  const L0Params params;
  for (int t = 0; t < 200; ++t) {
    const Index d = gen::dim(rng, 2, 8);
    const auto c = gen::simplex(rng, d, 2.0), p = gen::simplex(rng, d, 2.0);
    const VectorXd cv = c.values(), pv = p.values();
    // keep away from the |c_i - p_i| kink
    if ((cv - pv).cwiseAbs().minCoeff() < 1e-3) continue;

    auto kl = [&](const VectorXd& q) { return kl_divergence(cv, q); };
    auto sl0 = [&](const VectorXd& q) { return smooth_l0(cv, q, params); };
    auto simkl = [&](const VectorXd& q) { return sim_kl(cv, q); };
    auto siml0 = [&](const VectorXd& q) { return sim_l0(cv, q, params); };

    const auto check = [](const VectorXd& analytic, const VectorXd& numeric) {
      const double scale = std::max(1.0, numeric.norm());
      CHECK((analytic - numeric).norm() / scale < 1e-5);
    };
    check(grad_kl_wrt_p(cv, pv), numeric_grad(kl, pv));
    check(grad_smooth_l0_wrt_p(cv, pv, params), numeric_grad(sl0, pv));
    check(grad_sim_kl_wrt_p(cv, pv), numeric_grad(simkl, pv));
    check(grad_sim_l0_wrt_p(cv, pv, params), numeric_grad(siml0, pv));
  }
}

TEST_CASE("metrics work on float vectors") {
  const Eigen::VectorXf c = (Eigen::VectorXf(2) << 0.5f, 0.5f).finished();
  const Eigen::VectorXf p = (Eigen::VectorXf(2) << 0.25f, 0.75f).finished();
  CHECK(std::abs(kl_divergence(c, p) - 0.143841f) < 1e-5f);
}
