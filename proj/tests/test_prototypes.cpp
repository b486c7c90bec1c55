#include <doctest.h>

#include <cmath>

#include "generators.hpp"
#include "koala/fixtures.hpp"
#include "koala/prototypes.hpp"

using namespace koala;

namespace {

Simplex s(std::initializer_list<double> xs) {
  VectorXd v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v[i++] = x;
  return Simplex(v);
}

}  // namespace

TEST_CASE("fit takes class means") {
  EmbeddingDataset ds(2, 2);
  ds.push_back({"a", 0, false, s({0.8, 0.2})});
  ds.push_back({"b", 0, false, s({0.6, 0.4})});
  ds.push_back({"c", 1, false, s({0.3, 0.7})});
  const auto protos = fit_prototypes(ds);
  CHECK(protos.classes() == 2);
  CHECK(std::abs(protos[0][0] - 0.7) < 1e-12);
  CHECK(std::abs(protos[1][1] - 0.7) < 1e-12);
}

TEST_CASE("fit rejects empty classes and attacked rows") {
  EmbeddingDataset ds(2, 3);
  ds.push_back({"a", 0, false, s({0.8, 0.2})});
  ds.push_back({"b", 1, false, s({0.2, 0.8})});
  CHECK_THROWS_AS(fit_prototypes(ds), FitError);
  EmbeddingDataset bad(2, 1);
  bad.push_back({"a", 0, true, s({0.8, 0.2})});
  CHECK_THROWS_AS(fit_prototypes(bad), FitError);
}

TEST_CASE("kl head picks the closer prototype") {
  const PrototypeSet protos({s({0.7, 0.3}), s({0.3, 0.7})});
  const auto p = s({0.6, 0.4});
  CHECK(kl_divergence(protos[0], p) < kl_divergence(protos[1], p));
  const double kl0 = 0.7 * std::log(0.7 / 0.6) + 0.3 * std::log(0.3 / 0.4);
  const double kl1 = 0.3 * std::log(0.3 / 0.6) + 0.7 * std::log(0.7 / 0.4);
  CHECK(std::abs(kl_divergence(protos[0], p) - kl0) < 1e-12);
  CHECK(std::abs(kl_divergence(protos[1], p) - kl1) < 1e-12);
  CHECK(predict_head(p.values(), protos, Head::KL, {}) == 0);
}

TEST_CASE("ties go to the lowest class") {
  const PrototypeSet protos({s({0.7, 0.3}), s({0.3, 0.7})});
  const auto v = vote(Simplex::uniform(2).values(), protos, Head::KL, {});
  CHECK(v.predicted == 0);
  CHECK(v.tied);
}

TEST_CASE("prototypes themselves raise no flag") {
  gen::Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    const Index d = gen::dim(rng, 3, 10);
    const int m = static_cast<int>(gen::dim(rng, 2, d));
    std::vector<Simplex> cs;
    for (int k = 0; k < m; ++k) cs.push_back(gen::simplex(rng, d, 0.5));
    const PrototypeSet protos(cs);
    for (int k = 0; k < m; ++k) {
      const auto o = detect(protos[k].values(), protos, HeadSelection({Head::KL, Head::L0, Head::Cosine}), {});
      // a duplicate-free prototype set always maps c_k to itself under KL and L0
      CHECK(o.votes[0].predicted == k);
      CHECK(o.votes[1].predicted == k);
    }
  }
}

TEST_CASE("head selection parsing") {
  CHECK(HeadSelection::parse("kl,l0").heads() == std::vector<Head>{Head::KL, Head::L0});
  CHECK(HeadSelection::parse("l0,cosine,kl").to_string() == "l0,cosine,kl");
  CHECK_THROWS_AS(HeadSelection::parse("kl"), InvalidInput);
  CHECK_THROWS_AS(HeadSelection::parse("kl,kl"), InvalidInput);
  CHECK_THROWS_AS(HeadSelection::parse("kl,l2"), InvalidInput);
}

TEST_CASE("detect flags disagreement and abstains") {
  // KL 0.3575 vs 0.3951 picks class 0; L0 counts 4 vs 2 pick class 1
  const PrototypeSet protos({s({7 / 24.0, 8 / 24.0, 3 / 24.0, 6 / 24.0}),
                             s({7 / 16.0, 2 / 16.0, 5 / 16.0, 2 / 16.0})});
  const auto p = s({2 / 17.0, 2 / 17.0, 6 / 17.0, 7 / 17.0});
  CHECK(predict_head(p.values(), protos, Head::KL, {}) == 0);
  CHECK(predict_head(p.values(), protos, Head::L0, {}) == 1);
  const auto o = detect(p.values(), protos, HeadSelection::kl_l0(), {});
  CHECK(o.attack);
  CHECK_FALSE(o.predicted.has_value());
  const auto agree = detect(protos[1].values(), protos, HeadSelection::kl_l0(), {});
  CHECK_FALSE(agree.attack);
  CHECK(agree.predicted == 1);
}

TEST_CASE("detect_dataset does not depend on threads") {
  const auto inst = generate_separable_instance(4, 9, 0.1, 3, 25, 0.2);
  const auto one = detect_dataset(inst.data, inst.protos, HeadSelection::kl_l0(), {}, 1);
  const auto four = detect_dataset(inst.data, inst.protos, HeadSelection::kl_l0(), {}, 4);
  CHECK(one == four);
}
