#pragma once

// Generalized monotone variational inequality problems
//
//   find x*  with  <F(x), x - x*> + g(x) - g(x*) >= 0  for all x,
//
// where F is monotone and g is block separable. Every concrete problem
// supports cyclic block evaluation through a PassState: the state tracks a
// mixed iterate and whatever residuals make F^i at that point cheap.

#include <atomic>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "coder/linalg.hpp"

namespace coder {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// One coordinate of a separable regularizer:
///   l1 |x| + (l2 / 2) x^2 + indicator{lower <= x <= upper}.
struct CoordinatePenalty {
  double l1 = 0.0;
  double l2 = 0.0;
  double lower = -kInfinity;
  double upper = kInfinity;
};

double soft_threshold(double z, double threshold);

/// Closed-form prox of tau * penalty at z. For a one-dimensional strongly
/// convex objective the box constraint reduces to clamping the unconstrained
/// minimizer.
double penalty_prox(const CoordinatePenalty& penalty, double z, double tau);

/// Value of the penalty; +infinity outside the box.
double penalty_value(const CoordinatePenalty& penalty, double x);

/// g(x) = sum_j penalty_j(x_j). Strong convexity modulus is min_j l2_j.
class SeparableRegularizer {
 public:
  SeparableRegularizer() = default;
  explicit SeparableRegularizer(std::vector<CoordinatePenalty> penalties);

  static SeparableRegularizer uniform(Index dim, CoordinatePenalty penalty);
  static SeparableRegularizer zero(Index dim) { return uniform(dim, {}); }

  /// Concatenation g1 (+) g2 over stacked coordinates.
  static SeparableRegularizer stack(const SeparableRegularizer& first, const SeparableRegularizer& second);

  Index dim() const noexcept { return static_cast<Index>(penalties_.size()); }
  double strong_convexity() const noexcept { return strong_convexity_; }
  const CoordinatePenalty& penalty(Index j) const { return penalties_.at(static_cast<std::size_t>(j)); }

  double value(const Vector& x) const;
  double value_range(Index offset, const Eigen::Ref<const Vector>& values) const;
  void prox_range(Index offset, const Eigen::Ref<const Vector>& z, double tau, Eigen::Ref<Vector> out) const;

 private:
  std::vector<CoordinatePenalty> penalties_;
  double strong_convexity_ = 0.0;
};

/// Multiply-add counter used to check that a cyclic pass costs about as much
/// as one full operator evaluation.
class FlopCounter {
 public:
  FlopCounter() = default;
  FlopCounter(const FlopCounter& other) : count_(other.count()) {}
  FlopCounter& operator=(const FlopCounter& other) {
    count_.store(other.count());
    return *this;
  }

  void add(std::uint64_t flops) const noexcept { count_.fetch_add(flops, std::memory_order_relaxed); }
  std::uint64_t count() const noexcept { return count_.load(std::memory_order_relaxed); }
  void reset() const noexcept { count_.store(0, std::memory_order_relaxed); }

 private:
  mutable std::atomic<std::uint64_t> count_{0};
};

/// Mixed iterate of one cyclic pass. After commit_block(j, ...) for the blocks
/// already visited, block_operator(i) returns F^i evaluated at the mixed point.
class PassState {
 public:
  virtual ~PassState() = default;

  virtual void block_operator(Index block, Eigen::Ref<Vector> out) = 0;
  virtual void commit_block(Index block, const Eigen::Ref<const Vector>& values) = 0;
  virtual const Vector& point() const = 0;
  virtual std::unique_ptr<PassState> clone() const = 0;

  /// Max deviation between maintained residuals and a from-scratch recompute.
  virtual double residual_drift() const { return 0.0; }
};

class GmviProblem {
 public:
  GmviProblem(BlockPartition partition, SeparableRegularizer regularizer);
  virtual ~GmviProblem() = default;

  Index dim() const noexcept { return partition_.dim(); }
  const BlockPartition& partition() const noexcept { return partition_; }
  const SeparableRegularizer& regularizer() const noexcept { return regularizer_; }
  double gamma() const noexcept { return regularizer_.strong_convexity(); }

  virtual std::string_view kind() const = 0;

  /// F(x).
  virtual Vector full_operator(const Vector& x) const = 0;
  virtual std::unique_ptr<PassState> begin_pass(const Vector& x) const = 0;

  /// Composite objective or saddle primal value, when it is finite and
  /// computable for this instance.
  virtual std::optional<double> primal_value(const Vector& x) const;

  /// A lower bound on the optimal primal value built from x, when the
  /// instance has a computable dual.
  virtual std::optional<double> dual_value(const Vector& x) const;

  /// prox_{tau g^i}(z) for block i; tau = 0 is the identity on dom g.
  Vector prox_block(Index block, const Vector& z, double tau) const;
  void prox_block(Index block, const Eigen::Ref<const Vector>& z, double tau, Eigen::Ref<Vector> out) const;

  double g_value(const Vector& x) const;
  double g_block(Index block, const Eigen::Ref<const Vector>& values) const;

  const FlopCounter& flops() const noexcept { return flops_; }

 protected:
  void require_dim(const Vector& x, const char* what) const;

  FlopCounter flops_;

 private:
  BlockPartition partition_;
  SeparableRegularizer regularizer_;
};

// ---------------------------------------------------------------------------
// Least squares with l1 / elastic-net regularization
// ---------------------------------------------------------------------------

/// F(x) = A^T (A x - b), g(x) = lambda1 ||x||_1 + lambda2 / 2 ||x||^2.
class LeastSquaresProblem final : public GmviProblem {
 public:
  LeastSquaresProblem(SparseMatrix A, Vector b, double lambda1, double lambda2, BlockPartition partition);

  std::string_view kind() const override { return lambda2_ > 0.0 ? "elastic-net" : "lasso"; }
  Vector full_operator(const Vector& x) const override;
  std::unique_ptr<PassState> begin_pass(const Vector& x) const override;
  std::optional<double> primal_value(const Vector& x) const override;

  const SparseMatrix& design() const noexcept { return A_; }
  const Vector& response() const noexcept { return b_; }
  double lambda1() const noexcept { return lambda1_; }
  double lambda2() const noexcept { return lambda2_; }

  /// A^T A, for dense Lipschitz computations.
  DenseMatrix gram() const;

 private:
  SparseMatrix A_;
  Vector b_;
  double lambda1_;
  double lambda2_;
};

LeastSquaresProblem make_lasso(SparseMatrix A, Vector b, double lambda, BlockPartition partition);
LeastSquaresProblem make_lasso(SparseMatrix A, Vector b, double lambda);
LeastSquaresProblem make_elastic_net(SparseMatrix A, Vector b, double lambda1, double lambda2,
                                     BlockPartition partition);
LeastSquaresProblem make_elastic_net(SparseMatrix A, Vector b, double lambda1, double lambda2);

// ---------------------------------------------------------------------------
// l1-regularized SVM as a saddle problem over z = (x, y)
// ---------------------------------------------------------------------------

/// F(x, y) = w (Abar^T y, -(Abar x - 1)),
/// g(x, y) = lambda ||x||_1 + sum_j indicator{-1 <= y_j <= 0},
/// primal(x) = w sum_j max(1 - (Abar x)_j, 0) + lambda ||x||_1.
/// The loss weight w defaults to 1; w = 1/n gives the averaged hinge loss.
class SvmProblem final : public GmviProblem {
 public:
  SvmProblem(SparseMatrix A_bar, double lambda, BlockPartition partition, double loss_weight = 1.0);

  std::string_view kind() const override { return "svm"; }
  Vector full_operator(const Vector& z) const override;
  std::unique_ptr<PassState> begin_pass(const Vector& z) const override;
  std::optional<double> primal_value(const Vector& z) const override;
  /// loss_weight * t * sum |y_i| with y scaled by t in (0, 1] until
  /// ||loss_weight * A_bar^T y||_inf <= lambda.
  std::optional<double> dual_value(const Vector& z) const override;

  Index num_features() const noexcept { return A_bar_.cols(); }
  Index num_samples() const noexcept { return A_bar_.rows(); }
  const SparseMatrix& matrix() const noexcept { return A_bar_; }
  double lambda() const noexcept { return lambda_; }
  double loss_weight() const noexcept { return loss_weight_; }

  /// Linear part K of F(z) = K z + c, for dense Lipschitz computations.
  DenseMatrix linear_operator() const;

 private:
  SparseMatrix A_bar_;
  double lambda_;
  double loss_weight_;
};

/// Default partition is one coordinate per block over the d + n stacked
/// coordinates.
SvmProblem make_l1_svm(SparseMatrix A_bar, double lambda, BlockPartition partition, double loss_weight = 1.0);
SvmProblem make_l1_svm(SparseMatrix A_bar, double lambda, double loss_weight = 1.0);

// ---------------------------------------------------------------------------
// Bilinear toy problem min_x max_y <x, y>
// ---------------------------------------------------------------------------

/// Coordinates are interleaved (x_0, y_0, x_1, y_1, ...) and block i is the
/// pair (x_i, y_i). F(z) = (y_i, -x_i) per block, g = 0.
class BilinearToyProblem final : public GmviProblem {
 public:
  explicit BilinearToyProblem(Index d);

  std::string_view kind() const override { return "bilinear"; }
  Vector full_operator(const Vector& z) const override;
  std::unique_ptr<PassState> begin_pass(const Vector& z) const override;

  Index pairs() const noexcept { return dim() / 2; }
  DenseMatrix linear_operator() const;
};

BilinearToyProblem make_bilinear_toy(Index d);

// ---------------------------------------------------------------------------
// Generic convex-concave min-max reduction
// ---------------------------------------------------------------------------

/// Gradient oracle of phi(x1, x2) w.r.t. one argument.
using PartialGradient = std::function<Vector(const Vector& x1, const Vector& x2)>;
using PrimalOracle = std::function<double(const Vector& x1)>;

/// min_{x1} max_{x2} phi(x1, x2) + g1(x1) - g2(x2) stacked as z = (x1, x2)
/// with F(z) = (grad_1 phi, -grad_2 phi) and g = g1 (+) g2. Block evaluation
/// calls the full oracles, so this route is not coordinate friendly.
class MinMaxProblem final : public GmviProblem {
 public:
  MinMaxProblem(PartialGradient grad_x1, PartialGradient grad_x2, SeparableRegularizer g1,
                SeparableRegularizer g2, BlockPartition partition, PrimalOracle primal = {});

  std::string_view kind() const override { return "min-max"; }
  Vector full_operator(const Vector& z) const override;
  std::unique_ptr<PassState> begin_pass(const Vector& z) const override;
  std::optional<double> primal_value(const Vector& z) const override;

  Index first_dim() const noexcept { return d1_; }

 private:
  PartialGradient grad_x1_;
  PartialGradient grad_x2_;
  PrimalOracle primal_;
  Index d1_;
};

MinMaxProblem reduce_min_max(PartialGradient grad_x1, PartialGradient grad_x2, SeparableRegularizer g1,
                             SeparableRegularizer g2, BlockPartition partition, PrimalOracle primal = {});

}  // namespace coder
