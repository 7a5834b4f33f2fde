#include "coder/lipschitz.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <thread>

#include "coder/data_io.hpp"

namespace coder {

std::string_view to_string(LipschitzMethod method) {
  return method == LipschitzMethod::kExactDense ? "exact-dense" : "matrix-free";
}

namespace {

std::vector<Index> resolve_order(const BlockPartition& partition, std::span<const Index> ordering) {
  if (ordering.empty()) return partition.natural_order();
  partition.validate_order(ordering);
  return {ordering.begin(), ordering.end()};
}

double largest_eigenvalue(const DenseMatrix& S) {
  if (S.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<DenseMatrix> solver(S, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::kDomain, "lipschitz: symmetric eigenvalue solver failed");
  }
  return std::max(0.0, solver.eigenvalues().maxCoeff());
}

void require_square(const DenseMatrix& Q, Index dim, const char* what) {
  if (Q.rows() != dim || Q.cols() != dim) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(what) + ": expected a " + std::to_string(dim) + " x " + std::to_string(dim) + " matrix");
  }
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

DenseMatrix qhat_truncate(const DenseMatrix& Q, Index position, const BlockPartition& partition,
                          std::span<const Index> ordering) {
  require_square(Q, partition.dim(), "qhat_truncate");
  const auto order = resolve_order(partition, ordering);
  if (position < 0 || position >= partition.num_blocks()) {
    throw Error(ErrorCode::kIndexOutOfRange, "qhat_truncate: block position out of range");
  }
  DenseMatrix out = Q;
  for (Index t = 0; t < position; ++t) {
    const Index b = order[static_cast<std::size_t>(t)];
    const Index off = partition.offset(b);
    const Index s = partition.size(b);
    out.middleRows(off, s).setZero();
    out.middleCols(off, s).setZero();
  }
  return out;
}

LipschitzReport lipschitz_constants(const std::vector<DenseMatrix>& Q, const BlockPartition& partition,
                                    std::span<const Index> ordering) {
  const Index d = partition.dim();
  require_dense_cap(d, "lipschitz_constants");
  if (static_cast<Index>(Q.size()) != partition.num_blocks()) {
    throw Error(ErrorCode::kDimensionMismatch, "lipschitz_constants: one Q per block required");
  }
  LipschitzReport report;
  report.m = partition.num_blocks();
  report.ordering = resolve_order(partition, ordering);
  DenseMatrix sum_q = DenseMatrix::Zero(d, d);
  report.sum_qhat = DenseMatrix::Zero(d, d);
  for (Index t = 0; t < report.m; ++t) {
    const Index b = report.ordering[static_cast<std::size_t>(t)];
    const DenseMatrix& Qb = Q[static_cast<std::size_t>(b)];
    require_square(Qb, d, "lipschitz_constants");
    sum_q += Qb;
    report.sum_qhat += qhat_truncate(Qb, t, partition, report.ordering);
  }
  report.L = std::sqrt(largest_eigenvalue(report.sum_qhat));
  report.M = std::sqrt(largest_eigenvalue(sum_q));
  return report;
}

DenseMatrix sum_qhat_linear(const DenseMatrix& K, const BlockPartition& partition, std::span<const Index> ordering) {
  const Index d = partition.dim();
  require_square(K, d, "sum_qhat_linear");
  require_dense_cap(d, "sum_qhat_linear");
  const auto order = resolve_order(partition, ordering);

  // Coordinates relabelled so that blocks appear in update order.
  std::vector<Index> perm;
  std::vector<Index> offsets;
  perm.reserve(static_cast<std::size_t>(d));
  for (Index b : order) {
    offsets.push_back(static_cast<Index>(perm.size()));
    for (Index t = 0; t < partition.size(b); ++t) perm.push_back(partition.offset(b) + t);
  }
  const DenseMatrix Kp = K(perm, perm);

  DenseMatrix C = DenseMatrix::Zero(d, d);
  DenseMatrix out = DenseMatrix::Zero(d, d);
  for (std::size_t t = 0; t < order.size(); ++t) {
    const Index off = offsets[t];
    const Index s = partition.size(order[t]);
    const Index r = d - off;
    const auto Kt = Kp.block(off, off, s, r);
    C.bottomRightCorner(r, r).noalias() += Kt.transpose() * Kt;
    out.block(off, off, s, r) = C.block(off, off, s, r);
    out.block(off, off, r, s) = C.block(off, off, r, s);
  }

  DenseMatrix result(d, d);
  for (Index a = 0; a < d; ++a) {
    for (Index b = 0; b < d; ++b) result(perm[a], perm[b]) = out(a, b);
  }
  return result;
}

LipschitzReport lipschitz_constants_linear(const DenseMatrix& K, const BlockPartition& partition,
                                           std::span<const Index> ordering) {
  LipschitzReport report;
  report.m = partition.num_blocks();
  report.ordering = resolve_order(partition, ordering);
  report.sum_qhat = sum_qhat_linear(K, partition, report.ordering);
  report.L = std::sqrt(largest_eigenvalue(report.sum_qhat));
  report.M = std::sqrt(largest_eigenvalue(K.transpose() * K));
  return report;
}

LipschitzReport lipschitz_bound_matrix_free(const LinearApply& apply, const LinearApply& apply_transpose, Index dim,
                                            const BlockPartition& partition, double tol, Index max_iter) {
  detail::require_same(partition.dim(), dim, "lipschitz_bound_matrix_free");
  const auto normal = [&](const Vector& v) -> Vector { return apply_transpose(apply(v)); };
  const auto estimate = spectral_norm<double>(normal, dim, tol, max_iter);
  LipschitzReport report;
  report.m = partition.num_blocks();
  report.ordering = partition.natural_order();
  report.method = LipschitzMethod::kMatrixFree;
  report.M = std::sqrt(std::max(0.0, estimate.value));
  report.L = std::sqrt(static_cast<double>(report.m)) * report.M;
  return report;
}

Figure1Table figure1_experiment(const std::vector<Index>& n_list, const std::vector<Index>& d_list, Index repeats,
                                std::uint64_t seed, unsigned jobs) {
  if (repeats < 1) throw Error(ErrorCode::kInvalidArgument, "figure1_experiment: repeats must be >= 1");
  struct Task {
    Index n, d, repeat;
  };
  std::vector<Task> tasks;
  for (Index n : n_list) {
    for (Index d : d_list) {
      if (n < 1 || d < 1) throw Error(ErrorCode::kInvalidArgument, "figure1_experiment: n and d must be >= 1");
      require_dense_cap(d, "figure1_experiment");
      for (Index r = 0; r < repeats; ++r) tasks.push_back({n, d, r});
    }
  }

  Figure1Table table;
  table.rows.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        const Task& task = tasks[i];
        const std::uint64_t s = derive_seed(seed, {static_cast<std::uint64_t>(task.n),
                                                   static_cast<std::uint64_t>(task.d),
                                                   static_cast<std::uint64_t>(task.repeat)});
        const DenseMatrix A = gaussian_matrix(task.n, task.d, s);
        const DenseMatrix G = A.transpose() * A;
        const auto report = lipschitz_constants_linear(G, BlockPartition::singletons(task.d));
        table.rows[i] = Figure1Row{task.n, task.d, task.repeat, report.L, report.M};
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(tasks.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  std::map<std::pair<Index, Index>, std::pair<std::vector<double>, std::vector<double>>> groups;
  std::vector<std::pair<Index, Index>> keys;
  for (const auto& row : table.rows) {
    auto [it, inserted] = groups.try_emplace({row.n, row.d});
    if (inserted) keys.push_back({row.n, row.d});
    it->second.first.push_back(row.L);
    it->second.second.push_back(row.M);
  }
  for (const auto& key : keys) {
    const auto& g = groups.at(key);
    table.medians.push_back(Figure1Median{key.first, key.second, median(g.first), median(g.second)});
  }
  return table;
}

}  // namespace coder
