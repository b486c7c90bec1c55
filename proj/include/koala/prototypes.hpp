#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "koala/dataset.hpp"
#include "koala/metrics.hpp"

namespace koala {

// One prototype per class, indexed by class label.
class PrototypeSet {
 public:
  explicit PrototypeSet(std::vector<Simplex> prototypes);

  // Rows must carry every label 0..m-1 exactly once.
  static PrototypeSet from_dataset(const EmbeddingDataset& ds);
  EmbeddingDataset to_dataset() const;

  int classes() const noexcept { return static_cast<int>(prototypes_.size()); }
  Index dim() const noexcept { return prototypes_.front().dim(); }
  const Simplex& operator[](int k) const { return prototypes_.at(static_cast<std::size_t>(k)); }
  const std::vector<Simplex>& prototypes() const noexcept { return prototypes_; }

 private:
  std::vector<Simplex> prototypes_;
};

enum class Head { KL, L0, Cosine };

std::string_view head_name(Head head) noexcept;

// Ordered, duplicate-free selection of at least two heads.
class HeadSelection {
 public:
  explicit HeadSelection(std::vector<Head> heads);

  static HeadSelection kl_l0() { return HeadSelection({Head::KL, Head::L0}); }
  // Comma separated list, e.g. "kl,l0,cosine".
  static HeadSelection parse(std::string_view text);

  const std::vector<Head>& heads() const noexcept { return heads_; }
  std::string to_string() const;

 private:
  std::vector<Head> heads_;
};

struct HeadVote {
  Head head;
  int predicted;
  bool tied;  // another class attained the same best score

  friend bool operator==(const HeadVote&, const HeadVote&) = default;
};

struct DetectionOutcome {
  bool attack = false;
  std::optional<int> predicted;  // empty = abstention
  std::vector<HeadVote> votes;

  friend bool operator==(const DetectionOutcome&, const DetectionOutcome&) = default;
};

// Class means per label. Throws FitError when a class has no rows or when a
// row is flagged as attacked.
PrototypeSet fit_prototypes(const EmbeddingDataset& train);

// argmin KL(c_k || p), argmin l0_distance(c_k, p), or argmax cosine. Ties go
// to the lowest class index.
HeadVote vote(const VectorXd& p, const PrototypeSet& protos, Head head, const L0Params& params);

inline int predict_head(const VectorXd& p, const PrototypeSet& protos, Head head,
                        const L0Params& params) {
  return vote(p, protos, head, params).predicted;
}

// Flag unless every selected head returns the same class.
DetectionOutcome detect(const VectorXd& p, const PrototypeSet& protos, const HeadSelection& heads,
                        const L0Params& params);

// Order preserving; output is identical for any thread count.
std::vector<std::pair<std::string, DetectionOutcome>> detect_dataset(
    const EmbeddingDataset& ds, const PrototypeSet& protos, const HeadSelection& heads,
    const L0Params& params, unsigned threads = 1);

}  // namespace koala
