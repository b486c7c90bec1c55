#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "koala/prototypes.hpp"

namespace koala {

enum class Cell { TP, TN, FP, FN };

std::string_view cell_name(Cell cell) noexcept;

// Ground truth of one evaluated row: was it attacked, and its true class.
struct Truth {
  bool attacked = false;
  int label = 0;
};

// A flag is positive. An unflagged row is positive only when it is attacked
// yet still classified correctly; a wrong class on an attacked row is FN, on
// a clean row FP.
Cell score_sample(const Truth& truth, const DetectionOutcome& outcome);

struct ConfusionCounts {
  long tp = 0, tn = 0, fp = 0, fn = 0;

  long n() const noexcept { return tp + tn + fp + fn; }
  void add(Cell cell) noexcept;
  ConfusionCounts& operator+=(const ConfusionCounts& other) noexcept;

  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

// Ratios with a zero denominator stay empty.
struct MetricReport {
  ConfusionCounts counts;
  std::optional<double> accuracy, precision, recall, f1;
};

MetricReport aggregate(const ConfusionCounts& counts);

struct PredictionRow {
  std::string id;
  Truth truth;
  DetectionOutcome outcome;  // only attack / predicted are used
};

MetricReport aggregate(const std::vector<PredictionRow>& rows);

struct SplitReport {
  MetricReport overall;
  std::optional<MetricReport> compliant;      // empty when no compliance was given
  std::optional<MetricReport> non_compliant;
};

// Compliance is keyed by sample id; clean and attacked twins share the id.
// An empty map skips the sub-reports; otherwise every row's id must be present.
SplitReport split_report(const std::vector<PredictionRow>& rows,
                         const std::map<std::string, bool>& compliance);

std::vector<PredictionRow> predict_rows(const EmbeddingDataset& ds, const PrototypeSet& protos,
                                        const HeadSelection& heads, const L0Params& params,
                                        unsigned threads = 1);

// Each sample contributes its clean row and its attacked twin.
inline SplitReport evaluate_split(const EmbeddingDataset& ds, const PrototypeSet& protos,
                                  const HeadSelection& heads, const L0Params& params,
                                  const std::map<std::string, bool>& compliance,
                                  unsigned threads = 1) {
  return split_report(predict_rows(ds, protos, heads, params, threads), compliance);
}

// id,truth_a,truth_y,pred_a,pred_y; pred_y is empty on abstention.
void write_predictions_csv(const std::vector<PredictionRow>& rows, std::ostream& out);
std::vector<PredictionRow> read_predictions_csv(std::istream& in);

// Reads the id and compliant columns of a check-theorem CSV.
std::map<std::string, bool> read_compliance_csv(std::istream& in);

// Human-readable block per split and a flat key=value file. Missing ratios
// print as "n/a".
void write_report_text(const SplitReport& report, std::ostream& out);
void write_report_kv(const SplitReport& report, std::ostream& out);

}  // namespace koala
