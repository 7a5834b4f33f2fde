#pragma once

// Block Lipschitz constants for cyclic updates.
//
// For block i, Q^i bounds ||F^i(x) - F^i(y)||^2 <= (x-y)^T Q^i (x-y). The
// truncated Q^hat^i zeroes the rows and columns of every block visited before
// block i in the update order. Then
//
//   L = sqrt(||sum_i Qhat^i||),   M = sqrt(||sum_i Q^i||),   L <= sqrt(m) M.

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "coder/linalg.hpp"

namespace coder {

enum class LipschitzMethod { kExactDense, kMatrixFree };

std::string_view to_string(LipschitzMethod method);

struct LipschitzReport {
  Index m = 0;
  double L = 0.0;
  double M = 0.0;
  std::vector<Index> ordering;
  LipschitzMethod method = LipschitzMethod::kExactDense;
  /// sum_i Qhat^i in the original coordinates; empty for matrix-free reports.
  DenseMatrix sum_qhat;
};

/// Zeroes the rows and columns of the blocks that precede `position` in
/// `ordering` (natural order when empty). position = 0 returns Q unchanged.
DenseMatrix qhat_truncate(const DenseMatrix& Q, Index position, const BlockPartition& partition,
                          std::span<const Index> ordering = {});

/// General form: one Q^i per block, listed by block index.
LipschitzReport lipschitz_constants(const std::vector<DenseMatrix>& Q, const BlockPartition& partition,
                                    std::span<const Index> ordering = {});

/// F(x) = K x + c. Q^i = K[S^i, :]^T K[S^i, :], which for a symmetric
/// K = A^T A is G[:, S^i] G[S^i, :]. M = ||K||.
LipschitzReport lipschitz_constants_linear(const DenseMatrix& K, const BlockPartition& partition,
                                           std::span<const Index> ordering = {});

/// sum_i Qhat^i for F(x) = K x + c, without forming the individual Q^i.
DenseMatrix sum_qhat_linear(const DenseMatrix& K, const BlockPartition& partition,
                            std::span<const Index> ordering = {});

/// Matrix-free fallback for operators too large for the dense route:
/// M = ||K|| by power iteration on K^T K and L reported as its sqrt(m) M
/// upper bound.
using LinearApply = std::function<Vector(const Vector&)>;
LipschitzReport lipschitz_bound_matrix_free(const LinearApply& apply, const LinearApply& apply_transpose, Index dim,
                                            const BlockPartition& partition, double tol = 1e-10,
                                            Index max_iter = 10000);

struct Figure1Row {
  Index n = 0;
  Index d = 0;
  Index repeat = 0;
  double L = 0.0;
  double M = 0.0;
};

struct Figure1Median {
  Index n = 0;
  Index d = 0;
  double median_L = 0.0;
  double median_M = 0.0;
};

struct Figure1Table {
  std::vector<Figure1Row> rows;
  std::vector<Figure1Median> medians;
};

/// For each (n, d) in n_list x d_list and each repeat, samples a standard
/// Gaussian A (n x d) and computes L and M of F(x) = A^T (A x - b) with unit
/// blocks in natural order. Repeats run on up to `jobs` threads; each repeat
/// seeds its own generator from (seed, n, d, repeat).
Figure1Table figure1_experiment(const std::vector<Index>& n_list, const std::vector<Index>& d_list, Index repeats,
                                std::uint64_t seed, unsigned jobs = 1);

}  // namespace coder
