#include "koala/prototypes.hpp"

#include <limits>

#include "koala/parallel.hpp"

namespace koala {

PrototypeSet::PrototypeSet(std::vector<Simplex> prototypes) : prototypes_(std::move(prototypes)) {
  if (prototypes_.empty()) throw InvalidInput("prototype set is empty");
  const Index d = prototypes_.front().dim();
  for (const auto& c : prototypes_) {
    if (c.dim() != d) throw DimensionError("prototypes disagree on dimension");
  }
}

PrototypeSet PrototypeSet::from_dataset(const EmbeddingDataset& ds) {
  const int m = ds.classes();
  std::vector<std::optional<Simplex>> slots(static_cast<std::size_t>(m));
  for (const auto& row : ds.rows()) {
    auto& slot = slots[static_cast<std::size_t>(row.label)];
    if (slot) throw FormatError("prototype file lists class " + std::to_string(row.label) + " twice");
    slot = row.embedding;
  }
  std::vector<Simplex> protos;
  protos.reserve(slots.size());
  for (int k = 0; k < m; ++k) {
    if (!slots[static_cast<std::size_t>(k)]) {
      throw FormatError("prototype file is missing class " + std::to_string(k));
    }
    protos.push_back(*slots[static_cast<std::size_t>(k)]);
  }
  return PrototypeSet(std::move(protos));
}

EmbeddingDataset PrototypeSet::to_dataset() const {
  EmbeddingDataset ds(dim(), classes());
  for (int k = 0; k < classes(); ++k) {
    ds.push_back(LabeledEmbedding{"class" + std::to_string(k), k, false, (*this)[k]});
  }
  return ds;
}

std::string_view head_name(Head head) noexcept {
  switch (head) {
    case Head::KL: return "kl";
    case Head::L0: return "l0";
    case Head::Cosine: return "cosine";
  }
  return "?";
}

HeadSelection::HeadSelection(std::vector<Head> heads) : heads_(std::move(heads)) {
  if (heads_.size() < 2) throw InvalidInput("head selection needs at least two heads");
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    for (std::size_t j = i + 1; j < heads_.size(); ++j) {
      if (heads_[i] == heads_[j]) throw InvalidInput("duplicate head in selection");
    }
  }
}

HeadSelection HeadSelection::parse(std::string_view text) {
  std::vector<Head> heads;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto comma = text.find(',', start);
    auto token = text.substr(start, comma == std::string_view::npos ? text.npos : comma - start);
    if (token == "kl") {
      heads.push_back(Head::KL);
    } else if (token == "l0") {
      heads.push_back(Head::L0);
    } else if (token == "cosine") {
      heads.push_back(Head::Cosine);
    } else {
      throw InvalidInput("unknown head '" + std::string(token) + "' (expected kl, l0, cosine)");
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return HeadSelection(std::move(heads));
}

std::string HeadSelection::to_string() const {
  std::string out;
  for (auto h : heads_) {
    if (!out.empty()) out += ',';
    out += head_name(h);
  }
  return out;
}

PrototypeSet fit_prototypes(const EmbeddingDataset& train) {
  const int m = train.classes();
  std::vector<VectorXd> sums(static_cast<std::size_t>(m), VectorXd::Zero(train.dim()));
  std::vector<std::size_t> counts(static_cast<std::size_t>(m), 0);
  for (const auto& row : train.rows()) {
    if (row.attacked) throw FitError("training row '" + row.id + "' is flagged as attacked");
    sums[static_cast<std::size_t>(row.label)] += row.embedding.values();
    ++counts[static_cast<std::size_t>(row.label)];
  }
  std::vector<Simplex> protos;
  protos.reserve(static_cast<std::size_t>(m));
  for (int k = 0; k < m; ++k) {
    const auto n = counts[static_cast<std::size_t>(k)];
    if (n == 0) throw FitError("class " + std::to_string(k) + " has no training examples");
    // The mean of simplex points is a simplex point; the tolerance covers the
    // accumulated rounding of the member rows.
    protos.emplace_back(VectorXd(sums[static_cast<std::size_t>(k)] / static_cast<double>(n)),
                        kF32SimplexTolerance);
  }
  return PrototypeSet(std::move(protos));
}

HeadVote vote(const VectorXd& p, const PrototypeSet& protos, Head head, const L0Params& params) {
  if (p.size() != protos.dim()) {
    throw DimensionError("embedding has dimension " + std::to_string(p.size()) +
                         ", prototypes have " + std::to_string(protos.dim()));
  }
  int best = 0;
  bool tied = false;
  double best_score = std::numeric_limits<double>::infinity();
  for (int k = 0; k < protos.classes(); ++k) {
    const auto& c = protos[k].values();
    double score = 0.0;
    switch (head) {
      case Head::KL: score = kl_divergence(c, p); break;
      case Head::L0: score = static_cast<double>(l0_distance(c, p, params)); break;
      case Head::Cosine: score = -cosine_similarity(c, p); break;
    }
    if (score < best_score) {
      best_score = score;
      best = k;
      tied = false;
    } else if (score == best_score) {
      tied = true;
    }
  }
  return HeadVote{head, best, tied};
}

DetectionOutcome detect(const VectorXd& p, const PrototypeSet& protos, const HeadSelection& heads,
                        const L0Params& params) {
  DetectionOutcome out;
  out.votes.reserve(heads.heads().size());
  for (auto h : heads.heads()) out.votes.push_back(vote(p, protos, h, params));
  const int first = out.votes.front().predicted;
  bool unanimous = true;
  for (const auto& v : out.votes) unanimous = unanimous && v.predicted == first;
  out.attack = !unanimous;
  if (unanimous) out.predicted = first;
  return out;
}

std::vector<std::pair<std::string, DetectionOutcome>> detect_dataset(
    const EmbeddingDataset& ds, const PrototypeSet& protos, const HeadSelection& heads,
    const L0Params& params, unsigned threads) {
  params.validate();
  if (ds.dim() != protos.dim()) {
    throw DimensionError("dataset dimension " + std::to_string(ds.dim()) +
                         " does not match prototypes " + std::to_string(protos.dim()));
  }
  std::vector<std::pair<std::string, DetectionOutcome>> out(ds.size());
  parallel_for(ds.size(), threads, [&](std::size_t i) {
    const auto& row = ds[i];
    out[i] = {row.id, detect(row.embedding.values(), protos, heads, params)};
  });
  return out;
}

}  // namespace koala
