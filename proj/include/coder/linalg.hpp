#pragma once

// Linear-algebra primitives shared by every module: block partitions, a CSR
// matrix that also keeps a column view, power-iteration spectral norms and
// PSD quadratic forms. Everything here is header-only and templated on the
// scalar type; the rest of the library instantiates it with double.

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "coder/error.hpp"

namespace coder {

using Index = Eigen::Index;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = VectorX<double>;
using DenseMatrix = MatrixX<double>;

/// Largest dimension for which d x d dense matrices are built.
inline constexpr Index kDenseCap = 2048;
/// Quadratic forms in [-kPsdClampTolerance, 0) are reported as exactly 0.
inline constexpr double kPsdClampTolerance = 1e-10;
inline constexpr std::uint64_t kDefaultPowerIterationSeed = 0x5eed5eedULL;

inline void require_dense_cap(Index dim, const char* what) {
  if (dim > kDenseCap) {
    throw Error(ErrorCode::kDenseCapExceeded,
                std::string(what) + ": dimension " + std::to_string(dim) +
                    " exceeds the dense cap of " + std::to_string(kDenseCap) +
                    "; use a matrix-free or parameter-free route instead");
  }
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& values, const char* what) {
  if (!values.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(what) + ": non-finite entries are not admitted");
  }
}

// ---------------------------------------------------------------------------
// BlockPartition
// ---------------------------------------------------------------------------

/// Contiguous partition of {0, ..., d-1} into m >= 1 non-empty blocks.
class BlockPartition {
 public:
  BlockPartition() : BlockPartition(std::vector<Index>{1}) {}

  explicit BlockPartition(std::vector<Index> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "BlockPartition: at least one block required");
    }
    offsets_.resize(sizes_.size() + 1, 0);
    for (std::size_t i = 0; i < sizes_.size(); ++i) {
      if (sizes_[i] <= 0) {
        throw Error(ErrorCode::kInvalidArgument,
                    "BlockPartition: block " + std::to_string(i) + " has non-positive size");
      }
      offsets_[i + 1] = offsets_[i] + sizes_[i];
    }
  }

  /// Blocks of `block_size` coordinates; the final block takes the remainder.
  static BlockPartition uniform(Index dim, Index block_size) {
    if (dim <= 0 || block_size <= 0) {
      throw Error(ErrorCode::kInvalidArgument, "BlockPartition::uniform: dim and block size must be positive");
    }
    std::vector<Index> sizes;
    for (Index start = 0; start < dim; start += block_size) {
      sizes.push_back(std::min(block_size, dim - start));
    }
    return BlockPartition(std::move(sizes));
  }

  static BlockPartition singletons(Index dim) { return uniform(dim, 1); }

  Index num_blocks() const noexcept { return static_cast<Index>(sizes_.size()); }
  Index dim() const noexcept { return offsets_.back(); }
  Index offset(Index block) const { return offsets_.at(static_cast<std::size_t>(block)); }
  Index size(Index block) const { return sizes_.at(static_cast<std::size_t>(block)); }
  const std::vector<Index>& sizes() const noexcept { return sizes_; }

  Index block_of(Index coordinate) const {
    if (coordinate < 0 || coordinate >= dim()) {
      throw Error(ErrorCode::kIndexOutOfRange, "BlockPartition::block_of: coordinate out of range");
    }
    auto it = std::upper_bound(offsets_.begin(), offsets_.end(), coordinate);
    return static_cast<Index>(it - offsets_.begin()) - 1;
  }

  /// Throws unless `order` is a permutation of the block indices.
  void validate_order(std::span<const Index> order) const {
    if (static_cast<Index>(order.size()) != num_blocks()) {
      throw Error(ErrorCode::kInvalidArgument, "block order must list every block exactly once");
    }
    std::vector<char> seen(order.size(), 0);
    for (Index b : order) {
      if (b < 0 || b >= num_blocks() || seen[static_cast<std::size_t>(b)]) {
        throw Error(ErrorCode::kInvalidArgument, "block order is not a permutation");
      }
      seen[static_cast<std::size_t>(b)] = 1;
    }
  }

  std::vector<Index> natural_order() const {
    std::vector<Index> order(sizes_.size());
    std::iota(order.begin(), order.end(), Index{0});
    return order;
  }

  bool operator==(const BlockPartition&) const = default;

 private:
  std::vector<Index> sizes_;
  std::vector<Index> offsets_;
};

// ---------------------------------------------------------------------------
// CsrMatrix
// ---------------------------------------------------------------------------

/// Immutable compressed-sparse-row matrix. A column-major copy is built at
/// construction so that column dot products and column axpys are O(nnz(col)).
template <typename Scalar>
class CsrMatrix {
 public:
  using RowStorage = Eigen::SparseMatrix<Scalar, Eigen::RowMajor, int>;
  using ColStorage = Eigen::SparseMatrix<Scalar, Eigen::ColMajor, int>;
  using Triplet = Eigen::Triplet<Scalar, int>;

  CsrMatrix() = default;

  CsrMatrix(Index rows, Index cols, const std::vector<Triplet>& triplets) : rows_(rows, cols) {
    for (const auto& t : triplets) {
      if (t.row() < 0 || t.row() >= rows || t.col() < 0 || t.col() >= cols) {
        throw Error(ErrorCode::kIndexOutOfRange, "CsrMatrix: triplet index out of range");
      }
      if (!std::isfinite(t.value())) {
        throw Error(ErrorCode::kInvalidArgument, "CsrMatrix: non-finite value");
      }
    }
    rows_.setFromTriplets(triplets.begin(), triplets.end());
    finish();
  }

  explicit CsrMatrix(RowStorage storage) : rows_(std::move(storage)) {
    for (Index k = 0; k < rows_.outerSize(); ++k) {
      for (typename RowStorage::InnerIterator it(rows_, k); it; ++it) {
        if (!std::isfinite(it.value())) {
          throw Error(ErrorCode::kInvalidArgument, "CsrMatrix: non-finite value");
        }
      }
    }
    finish();
  }

  template <typename Derived>
  static CsrMatrix from_dense(const Eigen::MatrixBase<Derived>& dense) {
    require_finite(dense, "CsrMatrix::from_dense");
    RowStorage storage = dense.sparseView();
    return CsrMatrix(std::move(storage));
  }

  Index rows() const noexcept { return rows_.rows(); }
  Index cols() const noexcept { return rows_.cols(); }
  Index nnz() const noexcept { return rows_.nonZeros(); }

  const RowStorage& by_row() const noexcept { return rows_; }
  const ColStorage& by_col() const noexcept { return cols_; }

  std::span<const int> row_offsets() const noexcept {
    return {rows_.outerIndexPtr(), static_cast<std::size_t>(rows_.outerSize() + 1)};
  }
  std::span<const int> col_indices() const noexcept {
    return {rows_.innerIndexPtr(), static_cast<std::size_t>(rows_.nonZeros())};
  }
  std::span<const Scalar> values() const noexcept {
    return {rows_.valuePtr(), static_cast<std::size_t>(rows_.nonZeros())};
  }

  Index col_nnz(Index j) const {
    check_col(j);
    return cols_.outerIndexPtr()[j + 1] - cols_.outerIndexPtr()[j];
  }
  Index row_nnz(Index i) const {
    check_row(i);
    return rows_.outerIndexPtr()[i + 1] - rows_.outerIndexPtr()[i];
  }

  MatrixX<Scalar> to_dense() const { return MatrixX<Scalar>(rows_); }

  void check_col(Index j) const {
    if (j < 0 || j >= cols()) {
      throw Error(ErrorCode::kIndexOutOfRange, "CsrMatrix: column index " + std::to_string(j) + " out of range");
    }
  }
  void check_row(Index i) const {
    if (i < 0 || i >= rows()) {
      throw Error(ErrorCode::kIndexOutOfRange, "CsrMatrix: row index " + std::to_string(i) + " out of range");
    }
  }

 private:
  void finish() {
    rows_.makeCompressed();
    cols_ = ColStorage(rows_);
    cols_.makeCompressed();
  }

  RowStorage rows_;
  ColStorage cols_;
};

using SparseMatrix = CsrMatrix<double>;

namespace detail {
inline void require_same(Index expected, Index actual, const char* what) {
  if (expected != actual) {
    throw Error(ErrorCode::kDimensionMismatch, std::string(what) + ": expected length " +
                                                   std::to_string(expected) + ", got " +
                                                   std::to_string(actual));
  }
}
}  // namespace detail

template <typename Scalar, typename Derived>
VectorX<Scalar> csr_matvec(const CsrMatrix<Scalar>& A, const Eigen::MatrixBase<Derived>& x) {
  detail::require_same(A.cols(), x.size(), "csr_matvec");
  return A.by_row() * x;
}

/// A^T r.
template <typename Scalar, typename Derived>
VectorX<Scalar> csr_tmatvec(const CsrMatrix<Scalar>& A, const Eigen::MatrixBase<Derived>& r) {
  detail::require_same(A.rows(), r.size(), "csr_tmatvec");
  return A.by_row().transpose() * r;
}

/// <A[:, j], r>.
template <typename Scalar, typename Derived>
Scalar csr_col_dot(const CsrMatrix<Scalar>& A, Index j, const Eigen::MatrixBase<Derived>& r) {
  A.check_col(j);
  detail::require_same(A.rows(), r.size(), "csr_col_dot");
  Scalar sum(0);
  for (typename CsrMatrix<Scalar>::ColStorage::InnerIterator it(A.by_col(), j); it; ++it) {
    sum += it.value() * r(it.index());
  }
  return sum;
}

/// y += alpha * A[:, j].
template <typename Scalar, typename Derived>
void csr_col_axpy(const CsrMatrix<Scalar>& A, Index j, Scalar alpha, Eigen::MatrixBase<Derived>& y) {
  A.check_col(j);
  detail::require_same(A.rows(), y.size(), "csr_col_axpy");
  for (typename CsrMatrix<Scalar>::ColStorage::InnerIterator it(A.by_col(), j); it; ++it) {
    y(it.index()) += alpha * it.value();
  }
}

/// <A[i, :], r>.
template <typename Scalar, typename Derived>
Scalar csr_row_dot(const CsrMatrix<Scalar>& A, Index i, const Eigen::MatrixBase<Derived>& r) {
  A.check_row(i);
  detail::require_same(A.cols(), r.size(), "csr_row_dot");
  Scalar sum(0);
  for (typename CsrMatrix<Scalar>::RowStorage::InnerIterator it(A.by_row(), i); it; ++it) {
    sum += it.value() * r(it.index());
  }
  return sum;
}

/// y += alpha * A[i, :]^T.
template <typename Scalar, typename Derived>
void csr_row_axpy(const CsrMatrix<Scalar>& A, Index i, Scalar alpha, Eigen::MatrixBase<Derived>& y) {
  A.check_row(i);
  detail::require_same(A.cols(), y.size(), "csr_row_axpy");
  for (typename CsrMatrix<Scalar>::RowStorage::InnerIterator it(A.by_row(), i); it; ++it) {
    y(it.index()) += alpha * it.value();
  }
}

// ---------------------------------------------------------------------------
// Spectral norm and quadratic forms
// ---------------------------------------------------------------------------

template <typename Scalar>
struct SpectralNormResult {
  Scalar value = Scalar(0);
  Index iterations = 0;
  bool converged = false;
};

/// Largest eigenvalue of a symmetric PSD operator given only through `apply`
/// (a callable mapping VectorX<Scalar> -> VectorX<Scalar>). Power iteration
/// from a seeded Gaussian start; stops when the Rayleigh quotient changes by
/// at most tol * lambda between two sweeps. When max_iter is reached the
/// result carries converged = false and the last estimate.
template <typename Scalar, typename Apply>
  requires(!std::is_base_of_v<Eigen::EigenBase<std::decay_t<Apply>>, std::decay_t<Apply>>)
SpectralNormResult<Scalar> spectral_norm(Apply&& apply, Index dim, Scalar tol, Index max_iter,
                                         std::uint64_t seed = kDefaultPowerIterationSeed) {
  if (dim <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "spectral_norm: dimension must be positive");
  }
  if (!(tol > Scalar(0))) {
    throw Error(ErrorCode::kInvalidArgument, "spectral_norm: tol must be positive");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorX<Scalar> v(dim);
  for (Index i = 0; i < dim; ++i) v(i) = static_cast<Scalar>(normal(rng));
  v.normalize();

  SpectralNormResult<Scalar> result;
  Scalar previous(0);
  for (Index it = 1; it <= max_iter; ++it) {
    VectorX<Scalar> w = apply(v);
    detail::require_same(dim, w.size(), "spectral_norm apply");
    const Scalar rayleigh = v.dot(w);
    const Scalar w_norm = w.norm();
    result.iterations = it;
    result.value = rayleigh;
    if (w_norm == Scalar(0)) {
      result.value = Scalar(0);
      result.converged = true;
      return result;
    }
    if (it > 1 && std::abs(rayleigh - previous) <= tol * std::abs(rayleigh)) {
      result.converged = true;
      return result;
    }
    previous = rayleigh;
    v = w / w_norm;
  }
  return result;
}

/// Dense overload; the matrix must fit under the dense cap.
template <typename Derived>
SpectralNormResult<typename Derived::Scalar> spectral_norm(const Eigen::MatrixBase<Derived>& M,
                                                           typename Derived::Scalar tol,
                                                           Index max_iter,
                                                           std::uint64_t seed = kDefaultPowerIterationSeed) {
  using Scalar = typename Derived::Scalar;
  if (M.rows() != M.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "spectral_norm: matrix must be square");
  }
  require_dense_cap(M.rows(), "spectral_norm");
  const MatrixX<Scalar> dense = M;
  return spectral_norm<Scalar>([&dense](const VectorX<Scalar>& v) -> VectorX<Scalar> { return dense * v; },
                               dense.rows(), tol, max_iter, seed);
}

template <typename Scalar>
Scalar clamp_psd(Scalar value) {
  return (value < Scalar(0) && value >= Scalar(-kPsdClampTolerance)) ? Scalar(0) : value;
}

/// v^T Q v for a symmetric PSD matrix expression.
template <typename MatDerived, typename VecDerived>
typename MatDerived::Scalar quad_form(const Eigen::MatrixBase<MatDerived>& Q,
                                      const Eigen::MatrixBase<VecDerived>& v) {
  using Scalar = typename MatDerived::Scalar;
  if (Q.rows() != Q.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "quad_form: matrix must be square");
  }
  detail::require_same(Q.cols(), v.size(), "quad_form");
  const VectorX<Scalar> qv = Q * v;
  return clamp_psd<Scalar>(v.dot(qv));
}

/// v^T Q v where Q is only available as an apply callback.
template <typename Scalar, typename Apply>
Scalar quad_form_apply(Apply&& apply, const VectorX<Scalar>& v) {
  const VectorX<Scalar> qv = apply(v);
  detail::require_same(v.size(), qv.size(), "quad_form");
  return clamp_psd<Scalar>(v.dot(qv));
}

}  // namespace coder
