#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <string>
#include <vector>

#include "koala/simplex.hpp"

namespace koala {

struct LabeledEmbedding {
  std::string id;
  int label = 0;
  bool attacked = false;
  Simplex embedding;

  friend bool operator==(const LabeledEmbedding&, const LabeledEmbedding&) = default;
};

// Rows sharing one dimension, labels in [0, classes).
class EmbeddingDataset {
 public:
  EmbeddingDataset(Index dim, int classes);

  void push_back(LabeledEmbedding row);

  Index dim() const noexcept { return dim_; }
  int classes() const noexcept { return classes_; }
  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }

  const std::vector<LabeledEmbedding>& rows() const noexcept { return rows_; }
  const LabeledEmbedding& operator[](std::size_t i) const { return rows_[i]; }

  friend bool operator==(const EmbeddingDataset&, const EmbeddingDataset&) = default;

 private:
  Index dim_;
  int classes_;
  std::vector<LabeledEmbedding> rows_;
};

enum class DataFormat { Csv, Binary };

// ".ked" -> Binary, anything else -> Csv.
DataFormat format_for_path(const std::filesystem::path& path);

// Binary KED1 layout (little-endian): "KED1", u32 d, u32 m, u64 n, then per
// row u32 label, u8 attacked, f32 x d. Ids are not stored; rows read back get
// their decimal row index as id. Values are stored as f32, so sums are
// checked at kF32SimplexTolerance.
inline constexpr char kKedMagic[4] = {'K', 'E', 'D', '1'};

// CSV: header "id,label,attacked,e0,...,e{d-1}", shortest round-trip decimals.
// The class count is max(label) + 1 unless the caller passes a larger one.
EmbeddingDataset read_dataset_csv(std::istream& in, int classes = 0);
EmbeddingDataset read_dataset_binary(std::istream& in);
void write_dataset_csv(const EmbeddingDataset& ds, std::ostream& out);
void write_dataset_binary(const EmbeddingDataset& ds, std::ostream& out);

EmbeddingDataset read_dataset(const std::filesystem::path& path, DataFormat format);
void write_dataset(const EmbeddingDataset& ds, const std::filesystem::path& path,
                   DataFormat format);

inline EmbeddingDataset read_dataset(const std::filesystem::path& path) {
  return read_dataset(path, format_for_path(path));
}
inline void write_dataset(const EmbeddingDataset& ds, const std::filesystem::path& path) {
  write_dataset(ds, path, format_for_path(path));
}

// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double value);
double parse_double(std::string_view text);

// Plain comma split (no quoting), trailing '\r' removal, strict integer parse.
std::vector<std::string_view> split_csv(std::string_view line);
std::string_view strip_cr(std::string_view s);
long parse_int(std::string_view text, std::optional<std::size_t> row = std::nullopt);

}  // namespace koala
