#include "coder/problems.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace coder {

double soft_threshold(double z, double threshold) {
  // |z| == threshold maps to 0.
  if (z > threshold) return z - threshold;
  if (z < -threshold) return z + threshold;
  return 0.0;
}

double penalty_prox(const CoordinatePenalty& penalty, double z, double tau) {
  if (tau == 0.0) return std::clamp(z, penalty.lower, penalty.upper);
  const double shrunk = soft_threshold(z, tau * penalty.l1) / (1.0 + tau * penalty.l2);
  return std::clamp(shrunk, penalty.lower, penalty.upper);
}

double penalty_value(const CoordinatePenalty& penalty, double x) {
  if (x < penalty.lower || x > penalty.upper) return kInfinity;
  double value = 0.0;
  if (penalty.l1 != 0.0) value += penalty.l1 * std::abs(x);
  if (penalty.l2 != 0.0) value += 0.5 * penalty.l2 * x * x;
  return value;
}

// ---------------------------------------------------------------------------

SeparableRegularizer::SeparableRegularizer(std::vector<CoordinatePenalty> penalties)
    : penalties_(std::move(penalties)) {
  strong_convexity_ = penalties_.empty() ? 0.0 : kInfinity;
  for (const auto& p : penalties_) {
    if (!(p.l1 >= 0.0) || !(p.l2 >= 0.0) || std::isnan(p.lower) || std::isnan(p.upper) || p.lower > p.upper) {
      throw Error(ErrorCode::kInvalidArgument, "SeparableRegularizer: invalid coordinate penalty");
    }
    strong_convexity_ = std::min(strong_convexity_, p.l2);
  }
}

SeparableRegularizer SeparableRegularizer::uniform(Index dim, CoordinatePenalty penalty) {
  return SeparableRegularizer(std::vector<CoordinatePenalty>(static_cast<std::size_t>(dim), penalty));
}

SeparableRegularizer SeparableRegularizer::stack(const SeparableRegularizer& first,
                                                 const SeparableRegularizer& second) {
  std::vector<CoordinatePenalty> all = first.penalties_;
  all.insert(all.end(), second.penalties_.begin(), second.penalties_.end());
  return SeparableRegularizer(std::move(all));
}

double SeparableRegularizer::value(const Vector& x) const {
  detail::require_same(dim(), x.size(), "SeparableRegularizer::value");
  return value_range(0, x);
}

double SeparableRegularizer::value_range(Index offset, const Eigen::Ref<const Vector>& values) const {
  double total = 0.0;
  for (Index j = 0; j < values.size(); ++j) {
    total += penalty_value(penalties_[static_cast<std::size_t>(offset + j)], values(j));
  }
  return total;
}

void SeparableRegularizer::prox_range(Index offset, const Eigen::Ref<const Vector>& z, double tau,
                                      Eigen::Ref<Vector> out) const {
  for (Index j = 0; j < z.size(); ++j) {
    out(j) = penalty_prox(penalties_[static_cast<std::size_t>(offset + j)], z(j), tau);
  }
}

// ---------------------------------------------------------------------------

GmviProblem::GmviProblem(BlockPartition partition, SeparableRegularizer regularizer)
    : partition_(std::move(partition)), regularizer_(std::move(regularizer)) {
  if (regularizer_.dim() != partition_.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "GmviProblem: regularizer and partition dimensions differ");
  }
}

std::optional<double> GmviProblem::primal_value(const Vector&) const { return std::nullopt; }

std::optional<double> GmviProblem::dual_value(const Vector&) const { return std::nullopt; }

Vector GmviProblem::prox_block(Index block, const Vector& z, double tau) const {
  Vector out(z.size());
  prox_block(block, z, tau, out);
  return out;
}

void GmviProblem::prox_block(Index block, const Eigen::Ref<const Vector>& z, double tau,
                             Eigen::Ref<Vector> out) const {
  if (!(tau >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "prox_block: tau must be non-negative");
  detail::require_same(partition_.size(block), z.size(), "prox_block");
  regularizer_.prox_range(partition_.offset(block), z, tau, out);
}

double GmviProblem::g_value(const Vector& x) const {
  require_dim(x, "g_value");
  double total = 0.0;
  for (Index i = 0; i < partition_.num_blocks(); ++i) {
    total += g_block(i, x.segment(partition_.offset(i), partition_.size(i)));
  }
  return total;
}

double GmviProblem::g_block(Index block, const Eigen::Ref<const Vector>& values) const {
  detail::require_same(partition_.size(block), values.size(), "g_block");
  return regularizer_.value_range(partition_.offset(block), values);
}

void GmviProblem::require_dim(const Vector& x, const char* what) const {
  detail::require_same(dim(), x.size(), what);
}

// ---------------------------------------------------------------------------
// Least squares
// ---------------------------------------------------------------------------

namespace {

class LeastSquaresPass final : public PassState {
 public:
  LeastSquaresPass(const LeastSquaresProblem& problem, const Vector& x)
      : problem_(&problem), x_(x), residual_(csr_matvec(problem.design(), x) - problem.response()) {
    problem.flops().add(static_cast<std::uint64_t>(problem.design().nnz()));
  }

  void block_operator(Index block, Eigen::Ref<Vector> out) override {
    const auto& part = problem_->partition();
    const auto& A = problem_->design();
    const Index off = part.offset(block);
    std::uint64_t work = 0;
    for (Index t = 0; t < part.size(block); ++t) {
      out(t) = csr_col_dot(A, off + t, residual_);
      work += static_cast<std::uint64_t>(A.col_nnz(off + t));
    }
    problem_->flops().add(work);
  }

  void commit_block(Index block, const Eigen::Ref<const Vector>& values) override {
    const auto& part = problem_->partition();
    const auto& A = problem_->design();
    const Index off = part.offset(block);
    detail::require_same(part.size(block), values.size(), "commit_block");
    std::uint64_t work = 0;
    for (Index t = 0; t < values.size(); ++t) {
      const double delta = values(t) - x_(off + t);
      if (delta != 0.0) {
        csr_col_axpy(A, off + t, delta, residual_);
        work += static_cast<std::uint64_t>(A.col_nnz(off + t));
      }
      x_(off + t) = values(t);
    }
    problem_->flops().add(work);
  }

  const Vector& point() const override { return x_; }
  std::unique_ptr<PassState> clone() const override { return std::make_unique<LeastSquaresPass>(*this); }

  double residual_drift() const override {
    const Vector fresh = csr_matvec(problem_->design(), x_) - problem_->response();
    return (fresh - residual_).lpNorm<Eigen::Infinity>();
  }

 private:
  const LeastSquaresProblem* problem_;
  Vector x_;
  Vector residual_;  // A x - b at the mixed point
};

}  // namespace

LeastSquaresProblem::LeastSquaresProblem(SparseMatrix A, Vector b, double lambda1, double lambda2,
                                         BlockPartition partition)
    : GmviProblem(std::move(partition),
                  SeparableRegularizer::uniform(A.cols(), CoordinatePenalty{lambda1, lambda2})),
      A_(std::move(A)),
      b_(std::move(b)),
      lambda1_(lambda1),
      lambda2_(lambda2) {
  if (b_.size() != A_.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "least squares: response length differs from design rows");
  }
  require_finite(b_, "least squares response");
}

Vector LeastSquaresProblem::full_operator(const Vector& x) const {
  require_dim(x, "full_operator");
  flops_.add(2 * static_cast<std::uint64_t>(A_.nnz()));
  const Vector residual = csr_matvec(A_, x) - b_;
  return csr_tmatvec(A_, residual);
}

std::unique_ptr<PassState> LeastSquaresProblem::begin_pass(const Vector& x) const {
  require_dim(x, "begin_pass");
  return std::make_unique<LeastSquaresPass>(*this, x);
}

std::optional<double> LeastSquaresProblem::primal_value(const Vector& x) const {
  require_dim(x, "primal_value");
  const Vector residual = csr_matvec(A_, x) - b_;
  return 0.5 * residual.squaredNorm() + regularizer().value(x);
}

DenseMatrix LeastSquaresProblem::gram() const {
  require_dense_cap(A_.cols(), "gram");
  const DenseMatrix dense = A_.to_dense();
  return dense.transpose() * dense;
}

LeastSquaresProblem make_lasso(SparseMatrix A, Vector b, double lambda, BlockPartition partition) {
  if (!(lambda >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "make_lasso: lambda must be >= 0");
  if (partition.dim() != A.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "make_lasso: partition does not cover the design columns");
  }
  return LeastSquaresProblem(std::move(A), std::move(b), lambda, 0.0, std::move(partition));
}

LeastSquaresProblem make_lasso(SparseMatrix A, Vector b, double lambda) {
  auto partition = BlockPartition::singletons(A.cols());
  return make_lasso(std::move(A), std::move(b), lambda, std::move(partition));
}

LeastSquaresProblem make_elastic_net(SparseMatrix A, Vector b, double lambda1, double lambda2,
                                     BlockPartition partition) {
  if (!(lambda1 >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "make_elastic_net: lambda1 must be >= 0");
  if (!(lambda2 > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "make_elastic_net: lambda2 must be > 0 (use make_lasso)");
  }
  if (partition.dim() != A.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "make_elastic_net: partition does not cover the design columns");
  }
  return LeastSquaresProblem(std::move(A), std::move(b), lambda1, lambda2, std::move(partition));
}

LeastSquaresProblem make_elastic_net(SparseMatrix A, Vector b, double lambda1, double lambda2) {
  auto partition = BlockPartition::singletons(A.cols());
  return make_elastic_net(std::move(A), std::move(b), lambda1, lambda2, std::move(partition));
}

// ---------------------------------------------------------------------------
// SVM
// ---------------------------------------------------------------------------

namespace {

SeparableRegularizer svm_regularizer(Index d, Index n, double lambda) {
  std::vector<CoordinatePenalty> penalties(static_cast<std::size_t>(d + n));
  for (Index j = 0; j < d; ++j) penalties[static_cast<std::size_t>(j)] = CoordinatePenalty{lambda, 0.0};
  for (Index j = d; j < d + n; ++j) {
    penalties[static_cast<std::size_t>(j)] = CoordinatePenalty{0.0, 0.0, -1.0, 0.0};
  }
  return SeparableRegularizer(std::move(penalties));
}

class SvmPass final : public PassState {
 public:
  SvmPass(const SvmProblem& problem, const Vector& z) : problem_(&problem), z_(z) {
    const Index d = problem.num_features();
    const Index n = problem.num_samples();
    primal_image_ = csr_matvec(problem.matrix(), z.head(d));
    dual_image_ = csr_tmatvec(problem.matrix(), z.tail(n));
    problem.flops().add(2 * static_cast<std::uint64_t>(problem.matrix().nnz()));
  }

  void block_operator(Index block, Eigen::Ref<Vector> out) override {
    const auto& part = problem_->partition();
    const Index d = problem_->num_features();
    const double w = problem_->loss_weight();
    const Index off = part.offset(block);
    for (Index t = 0; t < part.size(block); ++t) {
      const Index j = off + t;
      out(t) = j < d ? w * dual_image_(j) : -w * (primal_image_(j - d) - 1.0);
    }
    problem_->flops().add(static_cast<std::uint64_t>(part.size(block)));
  }

  void commit_block(Index block, const Eigen::Ref<const Vector>& values) override {
    const auto& part = problem_->partition();
    const auto& A = problem_->matrix();
    const Index d = problem_->num_features();
    const Index off = part.offset(block);
    detail::require_same(part.size(block), values.size(), "commit_block");
    std::uint64_t work = 0;
    for (Index t = 0; t < values.size(); ++t) {
      const Index j = off + t;
      const double delta = values(t) - z_(j);
      if (delta != 0.0) {
        if (j < d) {
          csr_col_axpy(A, j, delta, primal_image_);
          work += static_cast<std::uint64_t>(A.col_nnz(j));
        } else {
          csr_row_axpy(A, j - d, delta, dual_image_);
          work += static_cast<std::uint64_t>(A.row_nnz(j - d));
        }
      }
      z_(j) = values(t);
    }
    problem_->flops().add(work);
  }

  const Vector& point() const override { return z_; }
  std::unique_ptr<PassState> clone() const override { return std::make_unique<SvmPass>(*this); }

  double residual_drift() const override {
    const Index d = problem_->num_features();
    const Index n = problem_->num_samples();
    const Vector u = csr_matvec(problem_->matrix(), z_.head(d));
    const Vector v = csr_tmatvec(problem_->matrix(), z_.tail(n));
    return std::max((u - primal_image_).lpNorm<Eigen::Infinity>(), (v - dual_image_).lpNorm<Eigen::Infinity>());
  }

 private:
  const SvmProblem* problem_;
  Vector z_;
  Vector primal_image_;  // Abar x
  Vector dual_image_;    // Abar^T y
};

}  // namespace

SvmProblem::SvmProblem(SparseMatrix A_bar, double lambda, BlockPartition partition, double loss_weight)
    : GmviProblem(std::move(partition), svm_regularizer(A_bar.cols(), A_bar.rows(), lambda)),
      A_bar_(std::move(A_bar)),
      lambda_(lambda),
      loss_weight_(loss_weight) {
  if (!(loss_weight_ > 0.0) || !std::isfinite(loss_weight_)) {
    throw Error(ErrorCode::kInvalidArgument, "svm: loss weight must be positive and finite");
  }
}

Vector SvmProblem::full_operator(const Vector& z) const {
  require_dim(z, "full_operator");
  const Index d = num_features();
  const Index n = num_samples();
  flops_.add(2 * static_cast<std::uint64_t>(A_bar_.nnz()));
  Vector out(d + n);
  out.head(d) = loss_weight_ * csr_tmatvec(A_bar_, z.tail(n));
  out.tail(n) = -loss_weight_ * (csr_matvec(A_bar_, z.head(d)).array() - 1.0).matrix();
  return out;
}

std::unique_ptr<PassState> SvmProblem::begin_pass(const Vector& z) const {
  require_dim(z, "begin_pass");
  return std::make_unique<SvmPass>(*this, z);
}

std::optional<double> SvmProblem::primal_value(const Vector& z) const {
  require_dim(z, "primal_value");
  const Index d = num_features();
  const Vector margins = csr_matvec(A_bar_, z.head(d));
  const double hinge = (1.0 - margins.array()).max(0.0).sum();
  return loss_weight_ * hinge + lambda_ * z.head(d).lpNorm<1>();
}

std::optional<double> SvmProblem::dual_value(const Vector& z) const {
  require_dim(z, "dual_value");
  const Vector y = z.tail(num_samples()).cwiseMax(-1.0).cwiseMin(0.0);
  const double infeasibility = (loss_weight_ * csr_tmatvec(A_bar_, y)).lpNorm<Eigen::Infinity>();
  double scale = 1.0;
  if (infeasibility > lambda_) scale = infeasibility > 0.0 ? lambda_ / infeasibility : 0.0;
  return loss_weight_ * scale * y.cwiseAbs().sum();
}

DenseMatrix SvmProblem::linear_operator() const {
  const Index d = num_features();
  const Index n = num_samples();
  require_dense_cap(d + n, "svm linear operator");
  const DenseMatrix dense = A_bar_.to_dense();
  DenseMatrix K = DenseMatrix::Zero(d + n, d + n);
  K.topRightCorner(d, n) = loss_weight_ * dense.transpose();
  K.bottomLeftCorner(n, d) = -loss_weight_ * dense;
  return K;
}

SvmProblem make_l1_svm(SparseMatrix A_bar, double lambda, BlockPartition partition, double loss_weight) {
  if (!(lambda >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "make_l1_svm: lambda must be >= 0");
  if (partition.dim() != A_bar.cols() + A_bar.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "make_l1_svm: partition must cover d + n coordinates");
  }
  return SvmProblem(std::move(A_bar), lambda, std::move(partition), loss_weight);
}

SvmProblem make_l1_svm(SparseMatrix A_bar, double lambda, double loss_weight) {
  auto partition = BlockPartition::singletons(A_bar.cols() + A_bar.rows());
  return make_l1_svm(std::move(A_bar), lambda, std::move(partition), loss_weight);
}

// ---------------------------------------------------------------------------
// Bilinear toy
// ---------------------------------------------------------------------------

namespace {

class PointPass final : public PassState {
 public:
  using Evaluate = std::function<void(const Vector& point, Index block, Eigen::Ref<Vector> out)>;

  PointPass(const GmviProblem& problem, const Vector& z, Evaluate evaluate)
      : problem_(&problem), z_(z), evaluate_(std::move(evaluate)) {}

  void block_operator(Index block, Eigen::Ref<Vector> out) override { evaluate_(z_, block, out); }

  void commit_block(Index block, const Eigen::Ref<const Vector>& values) override {
    const auto& part = problem_->partition();
    detail::require_same(part.size(block), values.size(), "commit_block");
    z_.segment(part.offset(block), part.size(block)) = values;
  }

  const Vector& point() const override { return z_; }
  std::unique_ptr<PassState> clone() const override { return std::make_unique<PointPass>(*this); }

 private:
  const GmviProblem* problem_;
  Vector z_;
  Evaluate evaluate_;
};

}  // namespace

BilinearToyProblem::BilinearToyProblem(Index d)
    : GmviProblem(BlockPartition::uniform(2 * std::max<Index>(d, 1), 2),
                  SeparableRegularizer::zero(2 * std::max<Index>(d, 1))) {
  if (d < 1) throw Error(ErrorCode::kInvalidArgument, "make_bilinear_toy: d must be >= 1");
}

Vector BilinearToyProblem::full_operator(const Vector& z) const {
  require_dim(z, "full_operator");
  flops_.add(static_cast<std::uint64_t>(z.size()));
  Vector out(z.size());
  for (Index i = 0; i < pairs(); ++i) {
    out(2 * i) = z(2 * i + 1);
    out(2 * i + 1) = -z(2 * i);
  }
  return out;
}

std::unique_ptr<PassState> BilinearToyProblem::begin_pass(const Vector& z) const {
  require_dim(z, "begin_pass");
  return std::make_unique<PointPass>(*this, z, [this](const Vector& point, Index block, Eigen::Ref<Vector> out) {
    flops_.add(2);
    out(0) = point(2 * block + 1);
    out(1) = -point(2 * block);
  });
}

DenseMatrix BilinearToyProblem::linear_operator() const {
  DenseMatrix K = DenseMatrix::Zero(dim(), dim());
  for (Index i = 0; i < pairs(); ++i) {
    K(2 * i, 2 * i + 1) = 1.0;
    K(2 * i + 1, 2 * i) = -1.0;
  }
  return K;
}

BilinearToyProblem make_bilinear_toy(Index d) { return BilinearToyProblem(d); }

// ---------------------------------------------------------------------------
// Min-max reduction
// ---------------------------------------------------------------------------

MinMaxProblem::MinMaxProblem(PartialGradient grad_x1, PartialGradient grad_x2, SeparableRegularizer g1,
                             SeparableRegularizer g2, BlockPartition partition, PrimalOracle primal)
    : GmviProblem(std::move(partition), SeparableRegularizer::stack(g1, g2)),
      grad_x1_(std::move(grad_x1)),
      grad_x2_(std::move(grad_x2)),
      primal_(std::move(primal)),
      d1_(g1.dim()) {
  if (!grad_x1_ || !grad_x2_) throw Error(ErrorCode::kInvalidArgument, "reduce_min_max: gradient oracles required");
}

Vector MinMaxProblem::full_operator(const Vector& z) const {
  require_dim(z, "full_operator");
  const Index d2 = dim() - d1_;
  const Vector x1 = z.head(d1_);
  const Vector x2 = z.tail(d2);
  const Vector g1 = grad_x1_(x1, x2);
  const Vector g2 = grad_x2_(x1, x2);
  if (g1.size() != d1_ || g2.size() != d2) {
    throw Error(ErrorCode::kDimensionMismatch, "reduce_min_max: oracle returned a gradient of the wrong size");
  }
  Vector out(dim());
  out.head(d1_) = g1;
  out.tail(d2) = -g2;
  return out;
}

std::unique_ptr<PassState> MinMaxProblem::begin_pass(const Vector& z) const {
  require_dim(z, "begin_pass");
  return std::make_unique<PointPass>(*this, z, [this](const Vector& point, Index block, Eigen::Ref<Vector> out) {
    const Vector full = full_operator(point);
    out = full.segment(partition().offset(block), partition().size(block));
  });
}

std::optional<double> MinMaxProblem::primal_value(const Vector& z) const {
  if (!primal_) return std::nullopt;
  require_dim(z, "primal_value");
  return primal_(z.head(d1_));
}

MinMaxProblem reduce_min_max(PartialGradient grad_x1, PartialGradient grad_x2, SeparableRegularizer g1,
                             SeparableRegularizer g2, BlockPartition partition, PrimalOracle primal) {
  if (partition.dim() != g1.dim() + g2.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "reduce_min_max: partition must cover both argument blocks");
  }
  return MinMaxProblem(std::move(grad_x1), std::move(grad_x2), std::move(g1), std::move(g2), std::move(partition),
                       std::move(primal));
}

}  // namespace coder
