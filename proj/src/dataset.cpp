#include "koala/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string_view>

namespace koala {

static_assert(std::endian::native == std::endian::little,
              "KED I/O assumes a little-endian host");

EmbeddingDataset::EmbeddingDataset(Index dim, int classes) : dim_(dim), classes_(classes) {
  if (dim < 2) throw InvalidInput("dataset dimension must be >= 2");
  if (classes < 1) throw InvalidInput("dataset needs at least one class");
}

void EmbeddingDataset::push_back(LabeledEmbedding row) {
  if (row.embedding.dim() != dim_) {
    throw DimensionError("row '" + row.id + "' has dimension " +
                         std::to_string(row.embedding.dim()) + ", dataset has " +
                         std::to_string(dim_));
  }
  if (row.label < 0 || row.label >= classes_) {
    throw InvalidInput("row '" + row.id + "' label " + std::to_string(row.label) +
                       " outside [0," + std::to_string(classes_) + ")");
  }
  rows_.push_back(std::move(row));
}

DataFormat format_for_path(const std::filesystem::path& path) {
  return path.extension() == ".ked" ? DataFormat::Binary : DataFormat::Csv;
}

std::string format_double(double value) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  (void)ec;
  return std::string(buf.data(), end);
}

double parse_double(std::string_view text) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw FormatError("not a number: '" + std::string(text) + "'");
  }
  return value;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

long parse_int(std::string_view text, std::optional<std::size_t> row) {
  long value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw FormatError("not an integer: '" + std::string(text) + "'", row);
  }
  return value;
}

namespace {

Simplex checked_simplex(VectorXd values, double tolerance, std::size_t row) {
  if (!values.allFinite()) throw FormatError("embedding has non-finite entries", row);
  if (!(values.array() > 0).all()) throw FormatError("embedding is not strictly positive", row);
  const double sum = values.sum();
  if (std::abs(sum - 1.0) > tolerance) {
    std::ostringstream msg;
    msg << "embedding sums to " << format_double(sum) << " (tolerance " << tolerance << ")";
    throw FormatError(msg.str(), row);
  }
  return Simplex(std::move(values), tolerance);
}

template <class T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& in, const char* what, std::optional<std::size_t> row = std::nullopt) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw FormatError(std::string("truncated file while reading ") + what, row);
  }
  return value;
}

}  // namespace

EmbeddingDataset read_dataset_csv(std::istream& in, int classes) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty CSV, expected header");
  auto header = split_csv(strip_cr(line));
  if (header.size() < 5 || header[0] != "id" || header[1] != "label" || header[2] != "attacked") {
    throw FormatError("CSV header must be id,label,attacked,e0..e{d-1}");
  }
  const Index dim = static_cast<Index>(header.size() - 3);
  for (Index i = 0; i < dim; ++i) {
    if (header[3 + i] != "e" + std::to_string(i)) {
      throw FormatError("CSV header column " + std::to_string(3 + i) + " must be e" +
                        std::to_string(i));
    }
  }

  std::vector<LabeledEmbedding> rows;
  int max_label = -1;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    auto text = strip_cr(line);
    if (text.empty()) continue;
    auto cells = split_csv(text);
    if (cells.size() != header.size()) {
      throw FormatError("expected " + std::to_string(header.size()) + " columns, got " +
                        std::to_string(cells.size()),
                        row);
    }
    const long label = parse_int(cells[1], row);
    const long attacked = parse_int(cells[2], row);
    if (label < 0) throw FormatError("negative label", row);
    if (attacked != 0 && attacked != 1) throw FormatError("attacked must be 0 or 1", row);
    VectorXd values(dim);
    for (Index i = 0; i < dim; ++i) {
      try {
        values[i] = parse_double(cells[3 + i]);
      } catch (const FormatError& e) {
        throw FormatError(e.what(), row);
      }
    }
    max_label = std::max(max_label, static_cast<int>(label));
    rows.push_back(LabeledEmbedding{std::string(cells[0]), static_cast<int>(label),
                                    attacked == 1,
                                    checked_simplex(std::move(values), kSimplexTolerance, row)});
    ++row;
  }

  const int m = std::max(classes, max_label + 1);
  EmbeddingDataset ds(dim, std::max(m, 1));
  for (auto& r : rows) ds.push_back(std::move(r));
  return ds;
}

void write_dataset_csv(const EmbeddingDataset& ds, std::ostream& out) {
  out << "id,label,attacked";
  for (Index i = 0; i < ds.dim(); ++i) out << ",e" << i;
  out << '\n';
  for (const auto& r : ds.rows()) {
    if (r.id.find(',') != std::string::npos || r.id.find('\n') != std::string::npos) {
      throw InvalidInput("row id '" + r.id + "' cannot contain ',' or newline");
    }
    out << r.id << ',' << r.label << ',' << (r.attacked ? 1 : 0);
    for (Index i = 0; i < ds.dim(); ++i) out << ',' << format_double(r.embedding[i]);
    out << '\n';
  }
}

EmbeddingDataset read_dataset_binary(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in.gcount() != 4) throw FormatError("truncated file while reading magic");
  if (std::memcmp(magic.data(), kKedMagic, 4) != 0) {
    throw FormatError("bad magic '" + std::string(magic.data(), 4) + "', expected 'KED1'");
  }
  const auto dim = get<std::uint32_t>(in, "dimension");
  const auto classes = get<std::uint32_t>(in, "class count");
  const auto count = get<std::uint64_t>(in, "row count");
  if (dim < 2) throw FormatError("dimension must be >= 2");
  if (classes < 1) throw FormatError("class count must be >= 1");

  EmbeddingDataset ds(static_cast<Index>(dim), static_cast<int>(classes));
  std::vector<float> buf(dim);
  for (std::uint64_t row = 0; row < count; ++row) {
    const auto label = get<std::uint32_t>(in, "label", row);
    const auto attacked = get<std::uint8_t>(in, "attacked flag", row);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(sizeof(float) * dim));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(float) * dim)) {
      throw FormatError("truncated file while reading embedding", row);
    }
    if (label >= classes) throw FormatError("label " + std::to_string(label) + " >= m", row);
    if (attacked > 1) throw FormatError("attacked flag must be 0 or 1", row);
    VectorXd values(dim);
    for (std::uint32_t i = 0; i < dim; ++i) values[i] = static_cast<double>(buf[i]);
    ds.push_back(LabeledEmbedding{std::to_string(row), static_cast<int>(label), attacked == 1,
                                  checked_simplex(std::move(values), kF32SimplexTolerance, row)});
  }
  return ds;
}

void write_dataset_binary(const EmbeddingDataset& ds, std::ostream& out) {
  out.write(kKedMagic, 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.dim()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.classes()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(ds.size()));
  std::vector<float> buf(static_cast<std::size_t>(ds.dim()));
  for (const auto& r : ds.rows()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.label));
    put<std::uint8_t>(out, r.attacked ? 1 : 0);
    for (Index i = 0; i < ds.dim(); ++i) buf[i] = static_cast<float>(r.embedding[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(sizeof(float) * buf.size()));
  }
}

EmbeddingDataset read_dataset(const std::filesystem::path& path, DataFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return format == DataFormat::Binary ? read_dataset_binary(in) : read_dataset_csv(in);
}

void write_dataset(const EmbeddingDataset& ds, const std::filesystem::path& path,
                   DataFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  if (format == DataFormat::Binary) {
    write_dataset_binary(ds, out);
  } else {
    write_dataset_csv(ds, out);
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace koala
