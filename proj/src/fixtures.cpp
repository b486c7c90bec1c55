#include "koala/fixtures.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <random>

namespace koala {

const std::array<PublishedCounts, 8>& published_counts() {
  static const std::array<PublishedCounts, 8> rows{{
      {"ResNet", "2/255", true, 3345, 3345, 0, 0, 3345, 1.0, 1.0, 1.0, 1.0},
      {"ResNet", "2/255", false, 1655, 690, 965, 260, 1395, 0.63, 0.73, 0.42, 0.53},
      {"ResNet", "4/255", true, 2967, 2967, 0, 0, 2967, 1.0, 1.0, 1.0, 1.0},
      {"ResNet", "4/255", false, 2033, 919, 1114, 260, 1773, 0.66, 0.78, 0.45, 0.57},
      {"CLIP", "2/255", true, 510, 510, 0, 0, 510, 1.0, 1.0, 1.0, 1.0},
      {"CLIP", "2/255", false, 4490, 3762, 728, 2206, 2284, 0.67, 0.63, 0.84, 0.72},
      {"CLIP", "4/255", true, 556, 556, 0, 0, 556, 1.0, 1.0, 1.0, 1.0},
      {"CLIP", "4/255", false, 4444, 3555, 889, 2206, 2238, 0.65, 0.62, 0.80, 0.70},
  }};
  return rows;
}

namespace {

// Log-normal multiplicative noise, `major` on coordinate `focus` (if any) and
// `minor` elsewhere, renormalized.
VectorXd jittered(const VectorXd& base, double major, double minor, Index focus,
                  std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  VectorXd out = base;
  for (Index i = 0; i < out.size(); ++i) out[i] *= std::exp((i == focus ? major : minor) * n01(rng));
  return out / out.sum();
}

}  // namespace

SeparableInstance generate_separable_instance(int m, Index d, double separation,
                                              std::uint64_t seed, std::size_t per_class,
                                              double noise) {
  if (m < 2) throw InvalidInput("separable instance needs at least two classes");
  if (d < 2) throw InvalidInput("separable instance needs d >= 2");
  if (m > d) throw InvalidInput("separable instance needs m <= d");
  if (!(separation >= 0.0 && separation < 1.0)) {
    throw InvalidInput("separation must lie in [0, 1)");
  }
  if (!(noise >= 0.0)) throw InvalidInput("noise must be >= 0");

  std::mt19937_64 rng(seed);
  const VectorXd uniform = VectorXd::Constant(d, 1.0 / static_cast<double>(d));
  std::vector<Simplex> protos;
  for (int k = 0; k < m; ++k) {
    VectorXd c = (1.0 - separation) * uniform;
    c[k] += separation;
    protos.emplace_back(jittered(c, 0.02, 0.02, -1, rng));
  }

  EmbeddingDataset data(d, m);
  for (int k = 0; k < m; ++k) {
    for (std::size_t i = 0; i < per_class; ++i) {
      data.push_back({"s" + std::to_string(k) + "_" + std::to_string(i), k, false,
                      Simplex(jittered(protos[static_cast<std::size_t>(k)].values(), noise,
                                               noise / 20.0, k, rng))});
    }
  }
  return {PrototypeSet(std::move(protos)), std::move(data)};
}

std::vector<FeatureSample> gaussian_clusters(int m, Index f, std::size_t n, double spread,
                                             std::uint64_t seed) {
  if (m < 1 || f < 1) throw InvalidInput("gaussian clusters need m >= 1 and f >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<FeatureSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(m));
    VectorXd x(f);
    for (Index j = 0; j < f; ++j) x[j] = n01(rng);
    x[label % f] += spread;
    out.push_back({std::move(x), label});
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a64(bytes);
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace koala
