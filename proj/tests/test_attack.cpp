#include <doctest.h>

#include "generators.hpp"
#include "koala/attack.hpp"
#include "koala/fixtures.hpp"
#include "koala/theorem.hpp"

using namespace koala;

namespace {

Simplex s(std::initializer_list<double> xs) {
  VectorXd v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v[i++] = x;
  return Simplex(v);
}

AttackOptions small_budget(AttackMode mode = AttackMode::Dual) {
  AttackOptions o;
  o.mode = mode;
  o.budget = {3000, 10, 25};
  return o;
}

}  // namespace

TEST_CASE("property: projection lands inside every constraint") {
  gen::Rng rng(61);
  for (int t = 0; t < 2000; ++t) {
    const Index d = gen::dim(rng, 2, 12);
    const auto p = gen::simplex(rng, d, 0.5);
    const double eps = gen::uniform(rng, 1e-3, 1.0);
    const bool free_delta = t % 4 == 0;
    const VectorXd raw = gen::gaussian(rng, d, gen::uniform(rng, 1e-3, 3.0));
    const VectorXd delta = project_perturbation(raw, p.values(), eps, free_delta, 1e-3);

    CHECK(delta.norm() <= eps * (1 + 1e-12));
    CHECK((delta.array().abs() <= 1.5 * p.values().array() + 1e-15).all());
    CHECK(((p.values() + delta).array() >= 1e-3 * p.values().array() * (1 - 1e-12)).all());
    if (!free_delta) {
      CHECK(std::abs(delta.sum()) < 1e-12);
      const auto verdict = validate_assumptions(p.values(), {delta, eps});
      CHECK(verdict.all());
    }
  }
}

TEST_CASE("projection keeps an admissible delta") {
  const auto p = s({0.4, 0.3, 0.3});
  const VectorXd delta = (VectorXd(3) << 0.01, -0.005, -0.005).finished();
  CHECK((project_perturbation(delta, p.values(), 0.1, false, 1e-3) - delta).norm() < 1e-15);
}

TEST_CASE("a budget spanning the simplex flips a head") {
  const PrototypeSet protos({s({0.8, 0.2}), s({0.2, 0.8})});
  const auto p = s({0.7, 0.3});
  const auto r = search_attack(p, 0, protos, 1.0, small_budget(AttackMode::KL));
  CHECK((r.flipped_kl || r.flipped_l0));
  CHECK(r.kl_class == 1);
  // the reported flip is real
  const VectorXd moved = p.values() + r.delta;
  CHECK(predict_head(moved, protos, Head::KL, {}) == 1);
}

TEST_CASE("empty budget leaves the sample alone") {
  const auto inst = generate_separable_instance(3, 5, 0.2, 62, 2);
  AttackOptions o;
  o.budget = {0, 0, 25};
  const auto r = search_attack(inst.data[0].embedding, inst.data[0].label, inst.protos, 0.1, o);
  CHECK(r.delta.norm() == 0.0);
  CHECK_FALSE(r.flipped_kl);
  CHECK_FALSE(r.flipped_l0);
}

TEST_CASE("search is reproducible per stream") {
  const auto inst = generate_separable_instance(3, 7, 0.1, 63, 2);
  const auto& row = inst.data[1];
  const auto opts = small_budget();
  const auto a = search_attack(row.embedding, row.label, inst.protos, 0.05, opts, 5);
  const auto b = search_attack(row.embedding, row.label, inst.protos, 0.05, opts, 5);
  CHECK(a.delta == b.delta);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("dual flips reported by the search are genuine") {
  gen::Rng rng(64);
  int found = 0;
  for (int t = 0; t < 40; ++t) {
    const auto inst = generate_separable_instance(3, 5, 0.02, rng(), 2);
    for (const auto& row : inst.data.rows()) {
      const auto r = search_dual_flip(row.embedding, row.label, inst.protos, 0.05, small_budget());
      if (!r.dual_flip_same_class) continue;
      ++found;
      const VectorXd moved = row.embedding.values() + r.delta;
      const int kl = predict_head(moved, inst.protos, Head::KL, {});
      const int l0 = predict_head(moved, inst.protos, Head::L0, {});
      CHECK(kl == l0);
      CHECK(kl != row.label);
      CHECK(r.delta.norm() <= 0.05 * (1 + 1e-12));
      CHECK(validate_assumptions(row.embedding.values(), {r.delta, 0.05}).all());
    }
  }
  // the search has to find something on this weakly separated family
  CHECK(found > 0);
}

TEST_CASE("no dual flip on compliant samples at small scale") {
  gen::Rng rng(65);
  int compliant = 0;
  for (int t = 0; t < 10; ++t) {
    const auto inst = generate_separable_instance(3, gen::dim(rng, 3, 8), 0.15, rng(), 4);
    for (const auto& row : inst.data.rows()) {
      if (!classify_compliance(row.embedding, row.label, inst.protos, 0.02, 0.75).compliant) {
        continue;
      }
      ++compliant;
      CHECK_FALSE(
          search_dual_flip(row.embedding, row.label, inst.protos, 0.02, small_budget())
              .dual_flip_same_class);
    }
  }
  CHECK(compliant > 10);
}

TEST_CASE("crafted dataset: clean rows then twins, thread independent") {
  const auto inst = generate_separable_instance(3, 6, 0.1, 66, 4);
  const auto one = craft_attacked_dataset(inst.data, inst.protos, 0.05, small_budget(), 1);
  const auto three = craft_attacked_dataset(inst.data, inst.protos, 0.05, small_budget(), 3);
  CHECK(one == three);
  REQUIRE(one.size() == 2 * inst.data.size());
  for (std::size_t i = 0; i < inst.data.size(); ++i) {
    const auto& twin = one[inst.data.size() + i];
    CHECK(one[i] == inst.data[i]);
    CHECK(twin.id == inst.data[i].id);
    CHECK(twin.label == inst.data[i].label);
    CHECK(twin.attacked);
    CHECK((twin.embedding.values() - inst.data[i].embedding.values()).norm() <= 0.05 + 1e-9);
  }
  auto free = small_budget();
  free.free_delta = true;
  CHECK_THROWS_AS(craft_attacked_dataset(inst.data, inst.protos, 0.05, free), InvalidInput);
}

TEST_CASE("attack mode parsing") {
  CHECK(parse_attack_mode("kl") == AttackMode::KL);
  CHECK(parse_attack_mode("dual") == AttackMode::Dual);
  CHECK(attack_mode_name(AttackMode::L0) == "l0");
  CHECK_THROWS_AS(parse_attack_mode("both"), InvalidInput);
}
