#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

#include "koala/dataset.hpp"
#include "koala/prototypes.hpp"

// Embedding-space attack search. Perturbations live in the ball ||delta|| <= eps,
// respect |delta_i| <= 1.5 p*_i, keep p* + delta strictly positive and, unless
// free_delta is set, keep sum(delta) = 0 so the attacked point stays on the
// simplex.

namespace koala {

enum class AttackMode { KL, L0, Dual };

std::string_view attack_mode_name(AttackMode mode) noexcept;
AttackMode parse_attack_mode(std::string_view text);

struct AttackBudget {
  std::size_t random_directions = 100000;
  int ascent_restarts = 100;
  int ascent_steps = 25;

  // A zero budget disables every strategy, closed-form candidates included.
  bool empty() const noexcept { return random_directions == 0 && ascent_restarts == 0; }
};

struct AttackOptions {
  AttackMode mode = AttackMode::Dual;
  AttackBudget budget;
  L0Params params;
  bool free_delta = false;
  // p* + delta >= positivity_margin * p* coordinatewise.
  double positivity_margin = 1e-3;
  std::uint64_t seed = 0;
};

struct AttackResult {
  VectorXd delta;
  bool flipped_kl = false;
  bool flipped_l0 = false;
  bool dual_flip_same_class = false;
  int kl_class = -1;
  int l0_class = -1;
  std::size_t iterations = 0;  // candidate evaluations
};

// Searches for delta reaching the goal of options.mode (KL flip, L0 flip or
// both heads on one wrong class). stream selects the random stream so each
// sample of a dataset gets its own reproducible sequence.
AttackResult search_attack(const Simplex& p_star, int label, const PrototypeSet& protos,
                           double epsilon, const AttackOptions& options,
                           std::uint64_t stream = 0);

inline AttackResult search_dual_flip(const Simplex& p_star, int label,
                                     const PrototypeSet& protos, double epsilon,
                                     AttackOptions options, std::uint64_t stream = 0) {
  options.mode = AttackMode::Dual;
  return search_attack(p_star, label, protos, epsilon, options, stream);
}

// Clean rows followed by one attacked twin per row, same id and label.
// Twins prefer a single-head flip, then a dual flip, then the largest
// displacement toward a rival. Requires the sum-zero perturbation space.
EmbeddingDataset craft_attacked_dataset(const EmbeddingDataset& clean, const PrototypeSet& protos,
                                        double epsilon, const AttackOptions& options,
                                        unsigned threads = 1);

// Projection used by every strategy: center (unless free), clip to the ball,
// then shrink toward 0 until the coordinate box holds.
VectorXd project_perturbation(const VectorXd& delta, const VectorXd& p_star, double epsilon,
                              bool free_delta, double positivity_margin);

}  // namespace koala
