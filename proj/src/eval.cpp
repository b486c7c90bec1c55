#include "koala/eval.hpp"

#include <cstdio>
#include <istream>
#include <ostream>

#include "koala/errors.hpp"

namespace koala {

std::string_view cell_name(Cell cell) noexcept {
  switch (cell) {
    case Cell::TP: return "TP";
    case Cell::TN: return "TN";
    case Cell::FP: return "FP";
    case Cell::FN: return "FN";
  }
  return "?";
}

Cell score_sample(const Truth& truth, const DetectionOutcome& outcome) {
  if (outcome.attack) return truth.attacked ? Cell::TP : Cell::FP;
  if (!outcome.predicted) throw InvalidInput("unflagged outcome without a class");
  const bool right = *outcome.predicted == truth.label;
  if (truth.attacked) return right ? Cell::TP : Cell::FN;
  return right ? Cell::TN : Cell::FP;
}

void ConfusionCounts::add(Cell cell) noexcept {
  switch (cell) {
    case Cell::TP: ++tp; break;
    case Cell::TN: ++tn; break;
    case Cell::FP: ++fp; break;
    case Cell::FN: ++fn; break;
  }
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) noexcept {
  tp += other.tp;
  tn += other.tn;
  fp += other.fp;
  fn += other.fn;
  return *this;
}

namespace {

std::optional<double> ratio(long num, long den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricReport aggregate(const ConfusionCounts& c) {
  MetricReport r;
  r.counts = c;
  r.accuracy = ratio(c.tp + c.tn, c.n());
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.recall = ratio(c.tp, c.tp + c.fn);
  if (r.precision && r.recall && *r.precision + *r.recall > 0.0) {
    r.f1 = 2.0 * *r.precision * *r.recall / (*r.precision + *r.recall);
  }
  return r;
}

MetricReport aggregate(const std::vector<PredictionRow>& rows) {
  ConfusionCounts c;
  for (const auto& row : rows) c.add(score_sample(row.truth, row.outcome));
  return aggregate(c);
}

SplitReport split_report(const std::vector<PredictionRow>& rows,
                         const std::map<std::string, bool>& compliance) {
  SplitReport out;
  ConfusionCounts all, yes, no;
  for (const auto& row : rows) {
    const Cell cell = score_sample(row.truth, row.outcome);
    all.add(cell);
    if (compliance.empty()) continue;
    const auto it = compliance.find(row.id);
    if (it == compliance.end()) throw InvalidInput("no compliance verdict for id " + row.id);
    (it->second ? yes : no).add(cell);
  }
  out.overall = aggregate(all);
  if (!compliance.empty()) {
    out.compliant = aggregate(yes);
    out.non_compliant = aggregate(no);
  }
  return out;
}

std::vector<PredictionRow> predict_rows(const EmbeddingDataset& ds, const PrototypeSet& protos,
                                        const HeadSelection& heads, const L0Params& params,
                                        unsigned threads) {
  auto outcomes = detect_dataset(ds, protos, heads, params, threads);
  std::vector<PredictionRow> rows;
  rows.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    rows.push_back({ds[i].id, {ds[i].attacked, ds[i].label}, std::move(outcomes[i].second)});
  }
  return rows;
}

void write_predictions_csv(const std::vector<PredictionRow>& rows, std::ostream& out) {
  out << "id,truth_a,truth_y,pred_a,pred_y\n";
  for (const auto& r : rows) {
    out << r.id << ',' << (r.truth.attacked ? 1 : 0) << ',' << r.truth.label << ','
        << (r.outcome.attack ? 1 : 0) << ',';
    if (r.outcome.predicted) out << *r.outcome.predicted;
    out << '\n';
  }
}

namespace {

bool parse_flag(std::string_view text, std::size_t row) {
  if (text == "0") return false;
  if (text == "1") return true;
  throw FormatError("expected 0 or 1, got '" + std::string(text) + "'", row);
}

}  // namespace

std::vector<PredictionRow> read_predictions_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != "id,truth_a,truth_y,pred_a,pred_y") {
    throw FormatError("predictions header must be id,truth_a,truth_y,pred_a,pred_y");
  }
  std::vector<PredictionRow> rows;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    const auto text = strip_cr(line);
    if (text.empty()) continue;
    ++row;
    const auto cells = split_csv(text);
    if (cells.size() != 5) throw FormatError("expected 5 columns", row);
    PredictionRow r;
    r.id = std::string(cells[0]);
    r.truth.attacked = parse_flag(cells[1], row);
    r.truth.label = static_cast<int>(parse_int(cells[2], row));
    r.outcome.attack = parse_flag(cells[3], row);
    if (!cells[4].empty()) r.outcome.predicted = static_cast<int>(parse_int(cells[4], row));
    if (!r.outcome.attack && !r.outcome.predicted) {
      throw FormatError("unflagged row needs pred_y", row);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::map<std::string, bool> read_compliance_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty compliance CSV");
  const auto header = split_csv(strip_cr(line));
  std::size_t id_col = header.size(), flag_col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "id") id_col = i;
    if (header[i] == "compliant") flag_col = i;
  }
  if (id_col == header.size() || flag_col == header.size()) {
    throw FormatError("compliance CSV needs id and compliant columns");
  }
  std::map<std::string, bool> out;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    const auto text = strip_cr(line);
    if (text.empty()) continue;
    ++row;
    const auto cells = split_csv(text);
    if (cells.size() != header.size()) throw FormatError("column count differs from header", row);
    const auto [it, fresh] = out.emplace(std::string(cells[id_col]), parse_flag(cells[flag_col], row));
    if (!fresh) throw FormatError("duplicate id " + it->first, row);
  }
  return out;
}

namespace {

std::string show(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

void text_block(std::string_view name, const std::optional<MetricReport>& r, std::ostream& out) {
  out << "[" << name << "]\n";
  if (!r) {
    out << "  n/a\n";
    return;
  }
  const auto& c = r->counts;
  out << "  N=" << c.n() << " TP=" << c.tp << " FN=" << c.fn << " FP=" << c.fp
      << " TN=" << c.tn << '\n';
  out << "  accuracy=" << show(r->accuracy) << " precision=" << show(r->precision)
      << " recall=" << show(r->recall) << " f1=" << show(r->f1) << '\n';
}

void kv_block(std::string_view name, const std::optional<MetricReport>& r, std::ostream& out) {
  if (!r) {
    out << name << ".n=n/a\n";
    return;
  }
  const auto& c = r->counts;
  out << name << ".n=" << c.n() << '\n'
      << name << ".tp=" << c.tp << '\n'
      << name << ".fn=" << c.fn << '\n'
      << name << ".fp=" << c.fp << '\n'
      << name << ".tn=" << c.tn << '\n'
      << name << ".accuracy=" << show(r->accuracy) << '\n'
      << name << ".precision=" << show(r->precision) << '\n'
      << name << ".recall=" << show(r->recall) << '\n'
      << name << ".f1=" << show(r->f1) << '\n';
}

}  // namespace

void write_report_text(const SplitReport& report, std::ostream& out) {
  text_block("overall", report.overall, out);
  text_block("compliant", report.compliant, out);
  text_block("non_compliant", report.non_compliant, out);
}

void write_report_kv(const SplitReport& report, std::ostream& out) {
  kv_block("overall", report.overall, out);
  kv_block("compliant", report.compliant, out);
  kv_block("non_compliant", report.non_compliant, out);
}

}  // namespace koala
