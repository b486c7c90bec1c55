#include "koala/trainer.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

#include "koala/dataset.hpp"

namespace koala {

void EncoderParams::validate() const {
  if (weight.rows() < 2 || weight.cols() < 1) throw InvalidInput("encoder needs d >= 2, f >= 1");
  if (bias.size() != weight.rows()) throw DimensionError("encoder bias length must equal d");
  if (!weight.allFinite() || !bias.allFinite()) throw InvalidInput("encoder has non-finite entries");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidInput("encoder temperature must be positive");
  }
}

EncoderParams EncoderParams::random(Index d, Index f, std::uint64_t seed, double std,
                                    double temperature) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  EncoderParams enc{MatrixXd(d, f), VectorXd::Zero(d), temperature};
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < f; ++j) enc.weight(i, j) = std * n01(rng);
  }
  enc.validate();
  return enc;
}

void TrainConfig::validate() const {
  if (!(w_l0 >= 0.0 && w_kl >= 0.0) || !(w_l0 + w_kl > 0.0)) {
    throw InvalidInput("loss weights must be >= 0 with a positive sum");
  }
  params.validate();
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidInput("learning rate must be finite and >= 0");
  }
  if (epochs < 0) throw InvalidInput("epochs must be >= 0");
  if (!(init_std >= 0.0)) throw InvalidInput("init std must be >= 0");
}

Simplex forward(const EncoderParams& enc, const VectorXd& x) {
  if (x.size() != enc.features()) {
    throw DimensionError("forward: input has " + std::to_string(x.size()) + " features, encoder " +
                         std::to_string(enc.features()));
  }
  return normalize_to_simplex(enc.weight * x + enc.bias, enc.temperature);
}

namespace {

double clamp_sim(double s) { return std::clamp(s, kSimilarityClamp, 1.0 - kSimilarityClamp); }

double bce(double s, bool positive) {
  const double c = clamp_sim(s);
  return positive ? -std::log(c) : -std::log(1.0 - c);
}

// d BCE / d s, zero where the clamp is active.
double bce_slope(double s, bool positive) {
  if (s < kSimilarityClamp || s > 1.0 - kSimilarityClamp) return 0.0;
  return positive ? -1.0 / s : 1.0 / (1.0 - s);
}

void check_batch(const EncoderParams& enc, const std::vector<FeatureSample>& batch,
                 const PrototypeSet& protos) {
  if (protos.dim() != enc.dim()) throw DimensionError("encoder and prototypes differ in d");
  for (const auto& s : batch) {
    if (s.label < 0 || s.label >= protos.classes()) {
      throw InvalidInput("sample label " + std::to_string(s.label) + " has no prototype");
    }
  }
}

}  // namespace

LossBreakdown loss_terms(const EncoderParams& enc, const std::vector<FeatureSample>& batch,
                         const PrototypeSet& protos, const TrainConfig& cfg) {
  check_batch(enc, batch, protos);
  LossBreakdown out;
  if (batch.empty()) return out;
  for (const auto& sample : batch) {
    const VectorXd p = forward(enc, sample.x).values();
    for (int i = 0; i < protos.classes(); ++i) {
      const bool positive = i == sample.label;
      out.kl += bce(sim_kl(protos[i].values(), p), positive);
      out.l0 += bce(sim_l0(protos[i].values(), p, cfg.params), positive);
    }
  }
  const double pairs = static_cast<double>(batch.size()) * protos.classes();
  out.kl /= pairs;
  out.l0 /= pairs;
  out.total = cfg.w_l0 * out.l0 + cfg.w_kl * out.kl;
  return out;
}

EncoderGradient grad_loss(const EncoderParams& enc, const std::vector<FeatureSample>& batch,
                          const PrototypeSet& protos, const TrainConfig& cfg) {
  check_batch(enc, batch, protos);
  EncoderGradient grad{MatrixXd::Zero(enc.dim(), enc.features()), VectorXd::Zero(enc.dim()), 0.0};
  if (batch.empty()) return grad;
  const double pairs = static_cast<double>(batch.size()) * protos.classes();
  const double t = enc.temperature;

  for (const auto& sample : batch) {
    const VectorXd z = enc.weight * sample.x + enc.bias;
    const VectorXd p = normalize_to_simplex(z, t).values();
    VectorXd g = VectorXd::Zero(enc.dim());
    for (int i = 0; i < protos.classes(); ++i) {
      const bool positive = i == sample.label;
      const VectorXd& c = protos[i].values();
      if (cfg.w_kl > 0.0) {
        const double slope = bce_slope(sim_kl(c, p), positive);
        if (slope != 0.0) g += (cfg.w_kl * slope / pairs) * grad_sim_kl_wrt_p(c, p);
      }
      if (cfg.w_l0 > 0.0) {
        const double slope = bce_slope(sim_l0(c, p, cfg.params), positive);
        if (slope != 0.0) g += (cfg.w_l0 * slope / pairs) * grad_sim_l0_wrt_p(c, p, cfg.params);
      }
    }
    // softmax Jacobian at u = z / T: diag(p) - p p^T
    const VectorXd du = (p.array() * (g.array() - p.dot(g))).matrix();
    const VectorXd dz = du / t;
    grad.weight += dz * sample.x.transpose();
    grad.bias += dz;
    grad.temperature -= du.dot(z) / (t * t);
  }
  return grad;
}

PrototypeSet embedding_prototypes(const EncoderParams& enc, const std::vector<FeatureSample>& data,
                                  int classes) {
  std::vector<VectorXd> sums(static_cast<std::size_t>(classes), VectorXd::Zero(enc.dim()));
  std::vector<std::size_t> counts(static_cast<std::size_t>(classes), 0);
  for (const auto& s : data) {
    if (s.label < 0 || s.label >= classes) {
      throw InvalidInput("sample label " + std::to_string(s.label) + " outside [0, m)");
    }
    sums[s.label] += forward(enc, s.x).values();
    ++counts[s.label];
  }
  std::vector<Simplex> protos;
  for (int k = 0; k < classes; ++k) {
    if (counts[k] == 0) throw FitError("class " + std::to_string(k) + " has no training samples");
    protos.emplace_back(sums[k] / static_cast<double>(counts[k]), kF32SimplexTolerance);
  }
  return PrototypeSet(std::move(protos));
}

TrainResult train(const std::vector<FeatureSample>& data, int classes, Index dim,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw InvalidInput("train: no samples");
  if (classes < 2) throw InvalidInput("train: need at least two classes");
  const Index f = data.front().x.size();
  for (const auto& s : data) {
    if (s.x.size() != f) throw DimensionError("train: samples differ in feature count");
  }

  EncoderParams enc = EncoderParams::random(dim, f, cfg.seed, cfg.init_std);
  std::mt19937_64 rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = cfg.batch_size == 0 ? data.size() : cfg.batch_size;

  std::vector<HistoryRow> history;
  std::vector<FeatureSample> chunk;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const PrototypeSet protos = embedding_prototypes(enc, data, classes);
    const LossBreakdown loss = loss_terms(enc, data, protos, cfg);
    if (!std::isfinite(loss.total)) throw TrainError("loss is not finite", epoch);
    history.push_back({epoch, loss});

    // Fisher-Yates with a plain modulus keeps the order identical across
    // standard libraries.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng() % i]);
    }
    for (std::size_t start = 0; start < order.size(); start += batch) {
      chunk.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + batch); ++i) {
        chunk.push_back(data[order[i]]);
      }
      const auto g = grad_loss(enc, chunk, protos, cfg);
      enc.weight -= cfg.learning_rate * g.weight;
      enc.bias -= cfg.learning_rate * g.bias;
      if (!enc.weight.allFinite() || !enc.bias.allFinite()) {
        throw TrainError("parameters diverged", epoch);
      }
    }
  }
  return {enc, embedding_prototypes(enc, data, classes), std::move(history)};
}

namespace {

constexpr char kEncMagic[4] = {'K', 'E', 'N', 'C'};

template <class T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& in, const char* what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw FormatError(std::string("truncated encoder while reading ") + what);
  }
  return value;
}

}  // namespace

void write_encoder(const EncoderParams& enc, std::ostream& out) {
  enc.validate();
  out.write(kEncMagic, 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(enc.dim()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(enc.features()));
  for (Index i = 0; i < enc.dim(); ++i) {
    for (Index j = 0; j < enc.features(); ++j) put<float>(out, static_cast<float>(enc.weight(i, j)));
  }
  for (Index i = 0; i < enc.dim(); ++i) put<float>(out, static_cast<float>(enc.bias[i]));
  put<float>(out, static_cast<float>(enc.temperature));
}

EncoderParams read_encoder(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in.gcount() != 4) throw FormatError("truncated encoder while reading magic");
  if (std::memcmp(magic.data(), kEncMagic, 4) != 0) {
    throw FormatError("bad magic '" + std::string(magic.data(), 4) + "', expected 'KENC'");
  }
  const auto d = get<std::uint32_t>(in, "d");
  const auto f = get<std::uint32_t>(in, "f");
  EncoderParams enc{MatrixXd(d, f), VectorXd(d), 1.0};
  for (std::uint32_t i = 0; i < d; ++i) {
    for (std::uint32_t j = 0; j < f; ++j) enc.weight(i, j) = get<float>(in, "weight");
  }
  for (std::uint32_t i = 0; i < d; ++i) enc.bias[i] = get<float>(in, "bias");
  enc.temperature = get<float>(in, "temperature");
  enc.validate();
  return enc;
}

void write_encoder(const EncoderParams& enc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_encoder(enc, out);
  if (!out) throw IoError("write failed for " + path.string());
}

EncoderParams read_encoder(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_encoder(in);
}

void write_history_csv(const std::vector<HistoryRow>& history, std::ostream& out) {
  out << "epoch,L_KL,L_L0,total\n";
  for (const auto& row : history) {
    out << row.epoch << ',' << format_double(row.loss.kl) << ',' << format_double(row.loss.l0)
        << ',' << format_double(row.loss.total) << '\n';
  }
}

std::vector<FeatureSample> read_features_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty feature CSV, expected header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header;
  for (std::size_t start = 0;;) {
    const auto comma = line.find(',', start);
    header.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (header.size() < 2 || header[0] != "label") {
    throw FormatError("feature CSV header must be label,x0..x{f-1}");
  }
  const Index f = static_cast<Index>(header.size() - 1);
  for (Index j = 0; j < f; ++j) {
    if (header[1 + j] != "x" + std::to_string(j)) {
      throw FormatError("feature CSV header column " + std::to_string(1 + j) + " must be x" +
                        std::to_string(j));
    }
  }

  std::vector<FeatureSample> out;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view text(line);
    for (std::size_t start = 0;;) {
      const auto comma = text.find(',', start);
      cells.push_back(text.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (cells.size() != header.size()) {
      throw FormatError("expected " + std::to_string(header.size()) + " columns", row);
    }
    FeatureSample s;
    auto [ptr, ec] = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), s.label);
    if (ec != std::errc() || ptr != cells[0].data() + cells[0].size() || s.label < 0) {
      throw FormatError("bad label '" + std::string(cells[0]) + "'", row);
    }
    s.x.resize(f);
    for (Index j = 0; j < f; ++j) {
      try {
        s.x[j] = parse_double(cells[1 + j]);
      } catch (const FormatError& e) {
        throw FormatError(e.what(), row);
      }
    }
    if (!s.x.allFinite()) throw FormatError("non-finite feature", row);
    out.push_back(std::move(s));
    ++row;
  }
  return out;
}

void write_features_csv(const std::vector<FeatureSample>& data, std::ostream& out) {
  if (data.empty()) throw InvalidInput("no feature rows to write");
  const Index f = data.front().x.size();
  out << "label";
  for (Index j = 0; j < f; ++j) out << ",x" << j;
  out << '\n';
  for (const auto& s : data) {
    out << s.label;
    for (Index j = 0; j < f; ++j) out << ',' << format_double(s.x[j]);
    out << '\n';
  }
}

}  // namespace koala
