#pragma once

// Dataset ingestion, preprocessing, synthetic generators and CSV output.

#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "coder/linalg.hpp"

namespace coder {

// ---------------------------------------------------------------------------
// Seeding
// ---------------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x);

/// Child seed for a (master, coordinates...) tuple, stable across platforms.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> coordinates);

// ---------------------------------------------------------------------------
// LIBSVM datasets
// ---------------------------------------------------------------------------

struct LabeledDataset {
  SparseMatrix features;       // n x d
  std::vector<double> labels;  // one per row
};

struct ParseOptions {
  /// Keep only the first max_samples rows (0 keeps everything).
  Index max_samples = 0;
  /// Column count; 0 infers it from the largest index present.
  Index num_features = 0;
};

/// Labels are returned as written in the file.
LabeledDataset parse_libsvm_raw(std::istream& in, const ParseOptions& options = {});

/// Labels mapped to +1 (label > 0) and -1 (otherwise).
LabeledDataset parse_libsvm(std::istream& in, const ParseOptions& options = {});

LabeledDataset load_libsvm(const std::string& path, const ParseOptions& options = {}, bool raw_labels = false);

/// +1 for digits 5..9, -1 for 0..4.
std::vector<double> remap_mnist_labels(const std::vector<double>& raw);

/// Every nonzero row scaled to unit Euclidean norm. Zero rows stay zero and
/// are counted in `zero_rows` when it is non-null.
LabeledDataset normalize_rows(const LabeledDataset& data, Index* zero_rows = nullptr);

/// Abar with rows b_j a_j^T.
SparseMatrix build_svm_matrix(const LabeledDataset& data);

/// 17 significant digits, so a parse of the output reproduces every value.
void write_libsvm(std::ostream& out, const LabeledDataset& data);
void save_libsvm(const std::string& path, const LabeledDataset& data);

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// i.i.d. N(0, 1) entries from std::mt19937_64 seeded with `seed`, filled
/// row by row.
DenseMatrix gaussian_matrix(Index n, Index d, std::uint64_t seed);

/// Each entry is nonzero with probability `density`; nonzeros are N(0, 1).
SparseMatrix gaussian_sparse(Index n, Index d, double density, std::uint64_t seed);

enum class LabelModel { kRandom, kPlanted };

struct SyntheticOptions {
  Index n = 2000;
  Index d = 123;
  double density = 0.11;
  std::uint64_t seed = 1;
  LabelModel labels = LabelModel::kRandom;
  /// Planted labels: b = sign(a^T w + noise * N(0, 1)) for a Gaussian w.
  double noise = 0.3;
};

/// Gaussian features, +-1 labels, rows normalized to unit norm.
LabeledDataset generate_synthetic(const SyntheticOptions& options);

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Shortest round-trip representation in scientific notation; locale free.
std::string format_double(double value);

std::string csv_escape(std::string_view field);

class CsvWriter {
 public:
  CsvWriter(std::ostream& out, std::vector<std::string> header);

  void comment(std::string_view text);
  void row(const std::vector<std::string>& fields);

  std::size_t columns() const noexcept { return columns_; }

 private:
  void write_header();

  std::ostream* out_;
  std::vector<std::string> header_;
  std::size_t columns_;
  bool header_written_ = false;
};

struct CsvTable {
  std::vector<std::string> comments;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
};

/// Reads the format CsvWriter emits: leading '#' comment lines, a header and
/// quoted or plain fields.
CsvTable read_csv(std::istream& in);

double parse_double(std::string_view text);

}  // namespace coder
