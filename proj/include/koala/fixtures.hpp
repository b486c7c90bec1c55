#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "koala/dataset.hpp"
#include "koala/prototypes.hpp"
#include "koala/trainer.hpp"

namespace koala {

// Published confusion counts of one evaluation subset with the scores
// reported for them.
struct PublishedCounts {
  std::string_view model;     // "ResNet" or "CLIP"
  std::string_view epsilon;   // pixel budget, "2/255" or "4/255"
  bool compliant;
  long subset_size;
  long tp, fn, fp, tn;
  double accuracy, precision, recall, f1;  // as published, two decimals
};

const std::array<PublishedCounts, 8>& published_counts();

struct SeparableInstance {
  PrototypeSet protos;
  EmbeddingDataset data;
};

// m prototypes on the simplex, class k bumped on coordinate k by
// `separation` in [0, 1): c_k = (1 - s) u + s e_k, lightly jittered. Samples
// are log-normal perturbations of their prototype, `noise` on coordinate k
// and noise / 20 elsewhere, renormalized. Dense noise of equal size would put
// about half the coordinates over tau mu against the own prototype and break
// the L0 head's clean accuracy.
// Requires m <= d.
SeparableInstance generate_separable_instance(int m, Index d, double separation,
                                              std::uint64_t seed, std::size_t per_class = 20,
                                              double noise = 0.05);

// Raw feature clusters for the trainer: class k is centered at
// `spread` * e_{k mod f} with unit isotropic noise.
std::vector<FeatureSample> gaussian_clusters(int m, Index f, std::size_t n, double spread,
                                             std::uint64_t seed);

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t value);

}  // namespace koala
