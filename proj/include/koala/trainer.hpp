#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "koala/metrics.hpp"
#include "koala/prototypes.hpp"

namespace koala {

// Affine map + tempered softmax: p = softmax((W x + b) / T).
struct EncoderParams {
  MatrixXd weight;  // d x f
  VectorXd bias;    // d
  double temperature = 1.0;

  Index dim() const noexcept { return weight.rows(); }
  Index features() const noexcept { return weight.cols(); }
  void validate() const;

  // W ~ N(0, std^2), b = 0.
  static EncoderParams random(Index d, Index f, std::uint64_t seed, double std = 0.1,
                              double temperature = 1.0);
};

struct EncoderGradient {
  MatrixXd weight;
  VectorXd bias;
  double temperature = 0.0;  // reported, not applied by train()
};

struct FeatureSample {
  VectorXd x;
  int label = 0;
};

struct TrainConfig {
  double w_l0 = 0.9;
  double w_kl = 0.1;
  L0Params params;
  double learning_rate = 5.0;
  int epochs = 300;
  std::size_t batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 0;
  double init_std = 0.1;

  void validate() const;
};

struct LossBreakdown {
  double kl = 0.0;
  double l0 = 0.0;
  double total = 0.0;
};

struct HistoryRow {
  int epoch;
  LossBreakdown loss;
};

struct TrainResult {
  EncoderParams encoder;
  PrototypeSet protos;
  std::vector<HistoryRow> history;
};

// Similarities are clamped into [1e-7, 1 - 1e-7] before the log.
inline constexpr double kSimilarityClamp = 1e-7;

Simplex forward(const EncoderParams& enc, const VectorXd& x);

// Mean binary cross-entropy over every (prototype, sample) pair of the batch;
// the pair is positive when the prototype is the sample's class.
LossBreakdown loss_terms(const EncoderParams& enc, const std::vector<FeatureSample>& batch,
                         const PrototypeSet& protos, const TrainConfig& cfg);
inline double loss_total(const EncoderParams& enc, const std::vector<FeatureSample>& batch,
                         const PrototypeSet& protos, const TrainConfig& cfg) {
  return loss_terms(enc, batch, protos, cfg).total;
}

// Prototypes are held fixed (they are recomputed between epochs, not
// differentiated through).
EncoderGradient grad_loss(const EncoderParams& enc, const std::vector<FeatureSample>& batch,
                          const PrototypeSet& protos, const TrainConfig& cfg);

// Class means of the current embeddings.
PrototypeSet embedding_prototypes(const EncoderParams& enc, const std::vector<FeatureSample>& data,
                                  int classes);

// Plain SGD. Each epoch refreshes the prototypes, then walks a seeded
// permutation in batches. history[e] is the full-data loss at the start of
// epoch e. Throws TrainError when the loss stops being finite.
TrainResult train(const std::vector<FeatureSample>& data, int classes, Index dim,
                  const TrainConfig& cfg);

// "KENC", u32 d, u32 f, f32 W row-major, f32 b, f32 temperature.
void write_encoder(const EncoderParams& enc, std::ostream& out);
EncoderParams read_encoder(std::istream& in);
void write_encoder(const EncoderParams& enc, const std::filesystem::path& path);
EncoderParams read_encoder(const std::filesystem::path& path);

// epoch,L_KL,L_L0,total
void write_history_csv(const std::vector<HistoryRow>& history, std::ostream& out);

// label,x0,...,x{f-1}
std::vector<FeatureSample> read_features_csv(std::istream& in);
void write_features_csv(const std::vector<FeatureSample>& data, std::ostream& out);

}  // namespace koala
