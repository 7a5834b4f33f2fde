#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <random>

#include <Eigen/Eigenvalues>

#include "coder/data_io.hpp"
#include "coder/lipschitz.hpp"

using namespace coder;

namespace {

double max_eig(const DenseMatrix& S) { return Eigen::SelfAdjointEigenSolver<DenseMatrix>(S).eigenvalues().maxCoeff(); }

// Straight from the definition: Q^i from the block rows of K, then each
// truncated by explicit index loops and summed.
DenseMatrix oracle_sum_qhat(const DenseMatrix& K, const BlockPartition& part, const std::vector<Index>& order) {
  const Index n = K.cols();
  std::vector<Index> rank(part.num_blocks());
  for (Index pos = 0; pos < part.num_blocks(); ++pos) rank[order[pos]] = pos;
  DenseMatrix sum = DenseMatrix::Zero(n, n);
  for (Index b = 0; b < part.num_blocks(); ++b) {
    const DenseMatrix rows = K.middleRows(part.offset(b), part.size(b));
    const DenseMatrix Q = rows.transpose() * rows;
    for (Index j = 0; j < n; ++j) {
      for (Index k = 0; k < n; ++k) {
        const bool visited = rank[part.block_of(j)] < rank[b] || rank[part.block_of(k)] < rank[b];
        if (!visited) sum(j, k) += Q(j, k);
      }
    }
  }
  return sum;
}

}  // namespace

TEST(QhatTruncate, ZeroesVisitedBlocks) {
  DenseMatrix Q = DenseMatrix::Constant(4, 4, 1.0);
  const auto part = BlockPartition::uniform(4, 2);
  EXPECT_EQ(qhat_truncate(Q, 0, part), Q);
  const DenseMatrix second = qhat_truncate(Q, 1, part);
  EXPECT_EQ(second.topRows(2).norm(), 0.0);
  EXPECT_EQ(second.leftCols(2).norm(), 0.0);
  EXPECT_EQ(second.bottomRightCorner(2, 2), DenseMatrix::Constant(2, 2, 1.0));
  const std::vector<Index> reversed = {1, 0};
  const DenseMatrix rev = qhat_truncate(Q, 1, part, reversed);
  EXPECT_EQ(rev.bottomRows(2).norm(), 0.0);
  EXPECT_EQ(rev.topLeftCorner(2, 2), DenseMatrix::Constant(2, 2, 1.0));
  EXPECT_THROW(qhat_truncate(Q, 2, part), Error);
}

TEST(Lipschitz, WorkedExampleMatchesClosedForms) {
  for (double t : {1.0, 2.0, 10.0}) {
    Vector u(2);
    u << 1.0 / (t * t), 1.0;
    Vector v(2);
    v << -t, 1.0 / t;
    const auto report = lipschitz_constants({u * u.transpose(), v * v.transpose()}, BlockPartition::singletons(2));
    EXPECT_NEAR(report.M * report.M, t * t + 1.0 / (t * t), 1e-9);
    EXPECT_LE(report.L * report.L, 1.0 + 1.0 / (t * t) + 1.0 / std::pow(t, 4) + 1e-9);
    DenseMatrix sum = u * u.transpose();
    sum(1, 1) += 1.0 / (t * t);
    EXPECT_NEAR(report.L * report.L, max_eig(sum), 1e-12);
  }
  Vector u(2);
  u << 0.25, 1.0;
  Vector v(2);
  v << -2.0, 0.5;
  const auto r = lipschitz_constants({u * u.transpose(), v * v.transpose()}, BlockPartition::singletons(2));
  EXPECT_NEAR(r.L * r.L, 1.3005, 1e-3);
}

TEST(Lipschitz, LinearRouteMatchesDefinition) {
  std::mt19937 rng(5);
  std::normal_distribution<double> normal;
  DenseMatrix K(7, 7);
  for (Index i = 0; i < 7; ++i) {
    for (Index j = 0; j < 7; ++j) K(i, j) = normal(rng);
  }
  const auto part = BlockPartition({2, 3, 1, 1});
  for (const std::vector<Index>& order :
       {std::vector<Index>{0, 1, 2, 3}, std::vector<Index>{3, 1, 0, 2}, std::vector<Index>{2, 3, 1, 0}}) {
    const DenseMatrix expected = oracle_sum_qhat(K, part, order);
    EXPECT_LT((sum_qhat_linear(K, part, order) - expected).norm(), 1e-12);
    const auto report = lipschitz_constants_linear(K, part, order);
    EXPECT_NEAR(report.L, std::sqrt(max_eig(expected)), 1e-10);
    EXPECT_NEAR(report.M, std::sqrt(max_eig(K.transpose() * K)), 1e-10);
    EXPECT_EQ(report.m, 4);
    EXPECT_EQ(report.ordering, order);
    EXPECT_EQ(report.method, LipschitzMethod::kExactDense);

    std::vector<DenseMatrix> Q;
    for (Index b = 0; b < 4; ++b) {
      const DenseMatrix rows = K.middleRows(part.offset(b), part.size(b));
      Q.push_back(rows.transpose() * rows);
    }
    EXPECT_NEAR(lipschitz_constants(Q, part, order).L, report.L, 1e-10);
  }
}

TEST(Lipschitz, BoundedBySqrtMTimesM) {
  for (unsigned s = 0; s < 20; ++s) {
    const Index n = 5 + s;
    const Index d = 3 + (s * 7) % 20;
    const DenseMatrix A = gaussian_matrix(n, d, 1000 + s);
    const DenseMatrix G = A.transpose() * A;
    const auto report = lipschitz_constants_linear(G, BlockPartition::singletons(d));
    EXPECT_LE(report.L, std::sqrt(static_cast<double>(d)) * report.M + 1e-9);
    EXPECT_GE(report.L, 0.0);
  }
}

TEST(Lipschitz, MatrixFreeBound) {
  const DenseMatrix A = gaussian_matrix(30, 12, 77);
  const DenseMatrix G = A.transpose() * A;
  const auto part = BlockPartition::uniform(12, 3);
  const auto exact = lipschitz_constants_linear(G, part);
  const LinearApply apply = [&G](const Vector& v) -> Vector { return G * v; };
  const auto bound = lipschitz_bound_matrix_free(apply, apply, 12, part);
  EXPECT_EQ(bound.method, LipschitzMethod::kMatrixFree);
  EXPECT_NEAR(bound.M, exact.M, 1e-7 * exact.M);
  EXPECT_NEAR(bound.L, 2.0 * bound.M, 1e-12);
  EXPECT_GE(bound.L, exact.L);
}

TEST(Lipschitz, RejectsMalformedInput) {
  const auto part = BlockPartition::singletons(2);
  EXPECT_THROW(lipschitz_constants({DenseMatrix::Identity(2, 2)}, part), Error);
  EXPECT_THROW(lipschitz_constants_linear(DenseMatrix::Identity(3, 3), part), Error);
  const std::vector<Index> bad = {0, 0};
  EXPECT_THROW(lipschitz_constants_linear(DenseMatrix::Identity(2, 2), part, bad), Error);
}

TEST(Figure1, DeterministicAndOrdered) {
  const auto a = figure1_experiment({40}, {10, 20}, 3, 7, 2);
  const auto b = figure1_experiment({40}, {10, 20}, 3, 7, 1);
  ASSERT_EQ(a.rows.size(), 6u);
  ASSERT_EQ(a.medians.size(), 2u);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].L, b.rows[i].L);
    EXPECT_EQ(a.rows[i].M, b.rows[i].M);
    EXPECT_LE(a.rows[i].L, std::sqrt(static_cast<double>(a.rows[i].d)) * a.rows[i].M + 1e-9);
  }
  for (const auto& m : a.medians) {
    std::vector<double> Ls;
    for (const auto& r : a.rows) {
      if (r.d == m.d) Ls.push_back(r.L);
    }
    std::sort(Ls.begin(), Ls.end());
    EXPECT_EQ(m.median_L, Ls[1]);
  }
}
