#include "coder/data_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace coder {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> coordinates) {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t c : coordinates) h = splitmix64(h ^ splitmix64(c));
  return h;
}

// ---------------------------------------------------------------------------
// LIBSVM
// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void parse_error(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::kParse, "libsvm line " + std::to_string(line) + ": " + what);
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (begin != end && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

std::string format_shortest(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
  return std::string(buffer, ptr);
}

}  // namespace

LabeledDataset parse_libsvm_raw(std::istream& in, const ParseOptions& options) {
  using Triplet = SparseMatrix::Triplet;
  std::vector<Triplet> triplets;
  std::vector<double> labels;
  Index max_col = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (options.max_samples > 0 && static_cast<Index>(labels.size()) >= options.max_samples) break;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream tokens(line);
    std::string token;
    if (!(tokens >> token)) continue;

    double label = 0.0;
    if (!parse_number(token, label) || !std::isfinite(label)) parse_error(line_no, "invalid label '" + token + "'");
    const int row = static_cast<int>(labels.size());
    long long previous = 0;
    while (tokens >> token) {
      const auto colon = token.find(':');
      if (colon == std::string::npos) parse_error(line_no, "expected index:value, got '" + token + "'");
      long long index = 0;
      double value = 0.0;
      if (!parse_number(std::string_view(token).substr(0, colon), index) || index < 1) {
        parse_error(line_no, "invalid feature index in '" + token + "'");
      }
      if (!parse_number(std::string_view(token).substr(colon + 1), value) || !std::isfinite(value)) {
        parse_error(line_no, "invalid feature value in '" + token + "'");
      }
      if (index <= previous) parse_error(line_no, "feature indices must be strictly ascending");
      if (options.num_features > 0 && index > options.num_features) {
        parse_error(line_no, "feature index " + std::to_string(index) + " exceeds the declared column count");
      }
      previous = index;
      max_col = std::max<Index>(max_col, index);
      triplets.emplace_back(row, static_cast<int>(index - 1), value);
    }
    labels.push_back(label);
  }
  if (in.bad()) throw Error(ErrorCode::kIo, "libsvm: read failure");
  const Index cols = options.num_features > 0 ? options.num_features : max_col;
  return LabeledDataset{SparseMatrix(static_cast<Index>(labels.size()), cols, triplets), std::move(labels)};
}

LabeledDataset parse_libsvm(std::istream& in, const ParseOptions& options) {
  LabeledDataset data = parse_libsvm_raw(in, options);
  for (double& label : data.labels) label = label > 0.0 ? 1.0 : -1.0;
  return data;
}

LabeledDataset load_libsvm(const std::string& path, const ParseOptions& options, bool raw_labels) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open data file '" + path + "'");
  return raw_labels ? parse_libsvm_raw(in, options) : parse_libsvm(in, options);
}

std::vector<double> remap_mnist_labels(const std::vector<double>& raw) {
  std::vector<double> out;
  out.reserve(raw.size());
  for (double label : raw) {
    if (!(label >= 0.0 && label <= 9.0) || label != std::floor(label)) {
      throw Error(ErrorCode::kDomain, "remap_mnist_labels: label " + format_shortest(label) + " is not a digit");
    }
    out.push_back(label >= 5.0 ? 1.0 : -1.0);
  }
  return out;
}

LabeledDataset normalize_rows(const LabeledDataset& data, Index* zero_rows) {
  SparseMatrix::RowStorage rows = data.features.by_row();
  Index zeros = 0;
  for (Index i = 0; i < rows.outerSize(); ++i) {
    double sq = 0.0;
    for (SparseMatrix::RowStorage::InnerIterator it(rows, i); it; ++it) sq += it.value() * it.value();
    if (sq == 0.0) {
      ++zeros;
      continue;
    }
    const double scale = 1.0 / std::sqrt(sq);
    for (SparseMatrix::RowStorage::InnerIterator it(rows, i); it; ++it) it.valueRef() *= scale;
  }
  if (zero_rows != nullptr) *zero_rows = zeros;
  return LabeledDataset{SparseMatrix(std::move(rows)), data.labels};
}

SparseMatrix build_svm_matrix(const LabeledDataset& data) {
  detail::require_same(data.features.rows(), static_cast<Index>(data.labels.size()), "build_svm_matrix labels");
  SparseMatrix::RowStorage rows = data.features.by_row();
  for (Index i = 0; i < rows.outerSize(); ++i) {
    const double b = data.labels[static_cast<std::size_t>(i)];
    for (SparseMatrix::RowStorage::InnerIterator it(rows, i); it; ++it) it.valueRef() *= b;
  }
  return SparseMatrix(std::move(rows));
}

void write_libsvm(std::ostream& out, const LabeledDataset& data) {
  detail::require_same(data.features.rows(), static_cast<Index>(data.labels.size()), "write_libsvm labels");
  const auto& rows = data.features.by_row();
  for (Index i = 0; i < rows.outerSize(); ++i) {
    out << format_shortest(data.labels[static_cast<std::size_t>(i)]);
    for (SparseMatrix::RowStorage::InnerIterator it(rows, i); it; ++it) {
      out << ' ' << (it.index() + 1) << ':' << format_shortest(it.value());
    }
    out << '\n';
  }
}

void save_libsvm(const std::string& path, const LabeledDataset& data) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path + "' for writing");
  write_libsvm(out, data);
  out.flush();
  if (!out) throw Error(ErrorCode::kIo, "write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

DenseMatrix gaussian_matrix(Index n, Index d, std::uint64_t seed) {
  if (n < 1 || d < 1) throw Error(ErrorCode::kInvalidArgument, "gaussian_matrix: n and d must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  DenseMatrix A(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) A(i, j) = normal(rng);
  }
  return A;
}

SparseMatrix gaussian_sparse(Index n, Index d, double density, std::uint64_t seed) {
  if (n < 1 || d < 1) throw Error(ErrorCode::kInvalidArgument, "gaussian_sparse: n and d must be >= 1");
  if (!(density > 0.0 && density <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "gaussian_sparse: density must lie in (0, 1]");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<SparseMatrix::Triplet> triplets;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) {
      if (uniform(rng) < density) triplets.emplace_back(static_cast<int>(i), static_cast<int>(j), normal(rng));
    }
  }
  return SparseMatrix(n, d, triplets);
}

LabeledDataset generate_synthetic(const SyntheticOptions& options) {
  SparseMatrix features =
      gaussian_sparse(options.n, options.d, options.density, derive_seed(options.seed, {0x66656174ULL}));
  std::vector<double> labels(static_cast<std::size_t>(options.n));
  std::mt19937_64 rng(derive_seed(options.seed, {0x6c61626cULL}));
  if (options.labels == LabelModel::kRandom) {
    std::bernoulli_distribution coin(0.5);
    for (double& b : labels) b = coin(rng) ? 1.0 : -1.0;
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector w(options.d);
    for (Index j = 0; j < options.d; ++j) w(j) = normal(rng);
    const Vector scores = csr_matvec(features, w);
    for (Index i = 0; i < options.n; ++i) {
      const double s = scores(i) + options.noise * normal(rng);
      labels[static_cast<std::size_t>(i)] = s >= 0.0 ? 1.0 : -1.0;
    }
  }
  return normalize_rows(LabeledDataset{std::move(features), std::move(labels)});
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

std::string format_double(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, value, std::chars_format::scientific);
  return std::string(buffer, ptr);
}

double parse_double(std::string_view text) {
  double value = 0.0;
  if (!parse_number(text, value)) {
    throw Error(ErrorCode::kParse, "cannot parse '" + std::string(text) + "' as a number");
  }
  return value;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

CsvWriter::CsvWriter(std::ostream& out, std::vector<std::string> header)
    : out_(&out), header_(std::move(header)), columns_(header_.size()) {
  if (header_.empty()) throw Error(ErrorCode::kInvalidArgument, "CsvWriter: header row is mandatory");
}

void CsvWriter::comment(std::string_view text) {
  if (header_written_) throw Error(ErrorCode::kInvalidArgument, "CsvWriter: comments must precede the header");
  *out_ << "# " << text << '\n';
}

void CsvWriter::write_header() {
  for (std::size_t i = 0; i < header_.size(); ++i) *out_ << (i ? "," : "") << csv_escape(header_[i]);
  *out_ << '\n';
  header_written_ = true;
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != columns_) {
    throw Error(ErrorCode::kDimensionMismatch, "CsvWriter: row has " + std::to_string(fields.size()) +
                                                   " fields, header has " + std::to_string(columns_));
  }
  if (!header_written_) write_header();
  for (std::size_t i = 0; i < fields.size(); ++i) *out_ << (i ? "," : "") << csv_escape(fields[i]);
  *out_ << '\n';
  if (!*out_) throw Error(ErrorCode::kIo, "CsvWriter: write failed");
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw Error(ErrorCode::kParse, "csv: no column named '" + std::string(name) + "'");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw Error(ErrorCode::kParse, "csv line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(field));
  return fields;
}

}  // namespace

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (table.header.empty() && line[0] == '#') {
      table.comments.push_back(line.size() > 1 && line[1] == ' ' ? line.substr(2) : line.substr(1));
      continue;
    }
    auto fields = split_csv_line(line, line_no);
    if (table.header.empty()) {
      table.header = std::move(fields);
    } else {
      if (fields.size() != table.header.size()) {
        throw Error(ErrorCode::kParse, "csv line " + std::to_string(line_no) + ": field count differs from header");
      }
      table.rows.push_back(std::move(fields));
    }
  }
  if (table.header.empty()) throw Error(ErrorCode::kParse, "csv: missing header row");
  return table;
}

}  // namespace coder
