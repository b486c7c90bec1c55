#include <doctest.h>

#include <sstream>

#include "generators.hpp"
#include "koala/dataset.hpp"

using namespace koala;

namespace {

EmbeddingDataset random_dataset(gen::Rng& rng, Index d, int m, std::size_t n) {
  EmbeddingDataset ds(d, m);
  for (std::size_t i = 0; i < n; ++i) {
    ds.push_back({"r" + std::to_string(i), static_cast<int>(i % static_cast<std::size_t>(m)),
                  i % 3 == 0, gen::simplex(rng, d, 0.7)});
  }
  return ds;
}

}  // namespace

TEST_CASE("csv round trip is exact") {
  gen::Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const auto ds = random_dataset(rng, gen::dim(rng, 2, 9), 3, 17);
    std::stringstream buf;
    write_dataset_csv(ds, buf);
    CHECK(read_dataset_csv(buf, 3) == ds);
  }
}

TEST_CASE("binary round trip within f32") {
  gen::Rng rng(6);
  const auto ds = random_dataset(rng, 5, 2, 30);
  std::stringstream buf;
  write_dataset_binary(ds, buf);
  const auto back = read_dataset_binary(buf);
  REQUIRE(back.size() == ds.size());
  CHECK(back.dim() == ds.dim());
  CHECK(back.classes() == ds.classes());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back[i].id == std::to_string(i));
    CHECK(back[i].label == ds[i].label);
    CHECK(back[i].attacked == ds[i].attacked);
    CHECK((back[i].embedding.values() - ds[i].embedding.values()).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("csv reader rejects malformed rows") {
  SUBCASE("bad header") {
    std::istringstream in("id,label,e0,e1\nx,0,0.5,0.5\n");
    CHECK_THROWS_AS(read_dataset_csv(in), FormatError);
  }
  SUBCASE("sum off") {
    std::istringstream in("id,label,attacked,e0,e1\nx,0,0,0.5,0.6\n");
    CHECK_THROWS_AS(read_dataset_csv(in), FormatError);
  }
  SUBCASE("short row") {
    std::istringstream in("id,label,attacked,e0,e1\nx,0,0,0.5\n");
    CHECK_THROWS_AS(read_dataset_csv(in), FormatError);
  }
  SUBCASE("negative label") {
    std::istringstream in("id,label,attacked,e0,e1\nx,-1,0,0.5,0.5\n");
    CHECK_THROWS(read_dataset_csv(in));
  }
}

TEST_CASE("binary reader rejects truncation and bad magic") {
  gen::Rng rng(7);
  const auto ds = random_dataset(rng, 4, 2, 4);
  std::stringstream buf;
  write_dataset_binary(ds, buf);
  std::string bytes = buf.str();
  {
    std::istringstream in(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(read_dataset_binary(in), FormatError);
  }
  bytes[0] = 'X';
  std::istringstream in(bytes);
  CHECK_THROWS_AS(read_dataset_binary(in), FormatError);
}

TEST_CASE("format follows the extension") {
  CHECK(format_for_path("a/b.ked") == DataFormat::Binary);
  CHECK(format_for_path("a/b.csv") == DataFormat::Csv);
  CHECK(format_for_path("plain") == DataFormat::Csv);
}

TEST_CASE("dataset enforces shape") {
  EmbeddingDataset ds(3, 2);
  CHECK_THROWS_AS(ds.push_back({"a", 0, false, Simplex::uniform(4)}), DimensionError);
  CHECK_THROWS(ds.push_back({"a", 2, false, Simplex::uniform(3)}));
}

TEST_CASE("format_double round trips") {
  gen::Rng rng(8);
  for (int t = 0; t < 1000; ++t) {
    const double x = gen::uniform(rng, -1e3, 1e3) * std::pow(10.0, gen::uniform(rng, -20, 20));
    CHECK(parse_double(format_double(x)) == x);
  }
  CHECK_THROWS_AS(parse_double("1.5x"), FormatError);
}
