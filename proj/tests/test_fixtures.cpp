#include <doctest.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "koala/dataset.hpp"
#include "koala/fixtures.hpp"
#include "koala/metrics.hpp"
#include "koala/theorem.hpp"

using namespace koala;
namespace fs = std::filesystem;

namespace {

const fs::path kDir = KOALA_FIXTURE_DIR;

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    for (auto c : split_csv(strip_cr(line))) cells.emplace_back(c);
    rows.push_back(std::move(cells));
  }
  return rows;
}

VectorXd vec(const std::string& text) {
  std::istringstream in(text);
  std::vector<double> xs;
  for (double x; in >> x;) xs.push_back(x);
  return Eigen::Map<VectorXd>(xs.data(), static_cast<Index>(xs.size()));
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("fixture digests match the index") {
  std::ifstream in(kDir / "index.json");
  REQUIRE(in);
  const auto index = nlohmann::json::parse(in);
  REQUIRE(index["fixtures"].size() >= 6);
  for (const auto& entry : index["fixtures"]) {
    const auto name = entry["file"].get<std::string>();
    CAPTURE(name);
    CHECK(hex64(fnv1a64_file(kDir / name)) == entry["fnv1a64"].get<std::string>());
  }
}

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(hex64(fnv1a64("foobar")) == "85944171f73967e8");
}

TEST_CASE("published counts file matches the built-in rows") {
  const auto rows = read_csv(kDir / "published_counts.csv");
  REQUIRE(rows.size() == published_counts().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto& b = published_counts()[i];
    CHECK(r[0] == b.model);
    CHECK(r[1] == b.epsilon);
    CHECK((r[2] == "1") == b.compliant);
    CHECK(std::stol(r[3]) == b.subset_size);
    CHECK(std::stol(r[4]) == b.tp);
    CHECK(std::stol(r[5]) == b.fn);
    CHECK(std::stol(r[6]) == b.fp);
    CHECK(std::stol(r[7]) == b.tn);
    CHECK(parse_double(r[8]) == b.accuracy);
    CHECK(parse_double(r[9]) == b.precision);
    CHECK(parse_double(r[10]) == b.recall);
    CHECK(parse_double(r[11]) == b.f1);
  }
}

TEST_CASE("hand metric cases") {
  for (const auto& r : read_csv(kDir / "metric_cases.csv")) {
    CAPTURE(r[0]);
    const VectorXd c = vec(r[2]), p = vec(r[3]);
    const L0Params params{parse_double(r[4]), parse_double(r[5])};
    const double want = parse_double(r[6]), tol = parse_double(r[7]);
    double got = 0.0;
    const std::string& m = r[1];
    if (m == "kl") got = kl_divergence(c, p);
    else if (m == "sim_kl") got = sim_kl(c, p);
    else if (m == "cosine") got = cosine_similarity(c, p);
    else if (m == "mean_abs_gap") got = mean_abs_gap(c, p);
    else if (m == "l0") got = static_cast<double>(l0_distance(c, p, params));
    else if (m == "smooth_l0") got = smooth_l0(c, p, params);
    else if (m == "sim_l0") got = sim_l0(c, p, params);
    else FAIL("unknown metric " << m);
    CHECK(std::abs(got - want) <= tol);
  }
}

TEST_CASE("generated fixtures are reproducible") {
  const auto inst = generate_separable_instance(3, 6, 0.2, 5, 10, 0.05);
  std::ostringstream data, protos;
  write_dataset_csv(inst.data, data);
  write_dataset_csv(inst.protos.to_dataset(), protos);
  CHECK(data.str() == slurp(kDir / "separable_d6.csv"));
  CHECK(protos.str() == slurp(kDir / "separable_d6_protos.csv"));

  std::ostringstream features;
  write_features_csv(gaussian_clusters(2, 8, 200, 6.0, 1), features);
  CHECK(features.str() == slurp(kDir / "clusters_f8.csv"));
}

TEST_CASE("binary and csv fixtures agree") {
  const auto csv = read_dataset(kDir / "separable_d6.csv");
  const auto ked = read_dataset(kDir / "separable_d6.ked");
  REQUIRE(csv.size() == ked.size());
  for (std::size_t i = 0; i < csv.size(); ++i) {
    CHECK(csv[i].label == ked[i].label);
    CHECK((csv[i].embedding.values() - ked[i].embedding.values()).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("property: separable instances stay on the simplex") {
  std::mt19937_64 rng(81);
  for (int t = 0; t < 100; ++t) {
    const Index d = 2 + static_cast<Index>(rng() % 15);
    const int m = 2 + static_cast<int>(rng() % static_cast<std::uint64_t>(d - 1));
    const auto inst = generate_separable_instance(m, d, std::uniform_real_distribution<>(0, 0.9)(rng),
                                                  rng(), 3, 0.1);
    CHECK(inst.protos.classes() == m);
    CHECK(inst.data.size() == static_cast<std::size_t>(3 * m));
    for (const auto& row : inst.data.rows()) CHECK(is_simplex(row.embedding.values()));
  }
  CHECK_THROWS_AS(generate_separable_instance(5, 4, 0.2, 1), InvalidInput);
  CHECK_THROWS_AS(generate_separable_instance(2, 4, 1.0, 1), InvalidInput);
}
