#pragma once

// Convergence measurement: restricted gap, primal gap, distance to a
// reference solution and the runtime certificates
//
//   sum_j a_j (<F(x_j), x_j - u> + g(x_j) - g(u)) + (1 + gamma A_k)/4 ||u - x_k||^2
//     <= 1/2 ||u - x_0||^2,
//   psi_k(x_k; u) <= 1/2 ||u - x_0||^2 - (1 + gamma A_k)/2 ||u - x_k||^2,
//
// where psi_k(x; u) = <G_k, x - u> + A_k (g(x) - g(u)) + 1/2 ||x - x_0||^2 and
// G_k is the accumulated dual vector.

#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coder/problems.hpp"

namespace coder {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum class IterateKind { kLast, kAverage };

std::string_view to_string(IterateKind kind);

struct TraceRecord {
  Index k = 0;
  double passes = 0.0;
  double time_s = 0.0;
  double primal_gap = kNaN;
  double dist_sq = kNaN;
  double gap_at_ref = kNaN;
  double cert_lhs = kNaN;
  double cert_rhs = kNaN;
  IterateKind iterate = IterateKind::kLast;

  double primal_value = kNaN;
  double A = 0.0;
  double L = 0.0;
  double norm = 0.0;
  double estimate_lhs = kNaN;
  double estimate_rhs = kNaN;
};

/// Header of the trace CSV.
const std::vector<std::string>& trace_csv_header();
std::vector<std::string> trace_csv_fields(const TraceRecord& record);

struct ReferenceSolution {
  Vector x_star;
  std::optional<double> f_star;
  std::string method;
  double passes = 0.0;
  Index iterations = 0;
  /// Natural residual at x_star relative to its value at the start point.
  double residual = kNaN;
  bool certified = false;
  /// Max-norm distance to the coordinate-descent oracle, when it ran.
  double cross_check_error = kNaN;
  /// Best dual lower bound on f_star, for problems with a computable dual.
  std::optional<double> lower_bound;
};

/// Gap(x_hat; u) = <F(u), x_hat - u> + g(x_hat) - g(u); +infinity when
/// x_hat is outside dom g.
double gap_at(const GmviProblem& problem, const Vector& x_hat, const Vector& u);

/// Same, with F(u) and g(u) supplied by the caller.
double gap_at(const GmviProblem& problem, const Vector& x_hat, const Vector& u, const Vector& F_u, double g_u);

/// L ||x - prox_{g/L}(x - F(x)/L)||, zero exactly at solutions.
double natural_residual(const GmviProblem& problem, const Vector& x, double L);

/// Accumulates the weighted gap sum along a run for a fixed comparison point u.
class CertificateTracker {
 public:
  CertificateTracker(const GmviProblem& problem, Vector u, Vector x0);

  /// Adds a_k (<F(x_k), x_k - u> + g(x_k) - g(u)).
  void add(double a_k, const Vector& x_k, const Vector& F_x_k);

  double sum() const noexcept { return sum_; }
  double gap_certificate_lhs(double A_k, double gamma, const Vector& x_k) const;
  double gap_certificate_rhs() const noexcept { return 0.5 * dist0_sq_; }

  double estimate_lhs(const Vector& dual, double A_k, const Vector& x_k) const;
  double estimate_rhs(double A_k, double gamma, const Vector& x_k) const;

  /// 1e-7 (1 + ||u - x0||^2).
  double slack() const noexcept { return 1e-7 * (1.0 + dist0_sq_); }

  const Vector& u() const noexcept { return u_; }

 private:
  const GmviProblem* problem_;
  Vector u_;
  Vector x0_;
  double g_u_;
  double dist0_sq_;
  double sum_ = 0.0;
};

struct ReferenceOptions {
  double max_passes = 200000.0;
  /// Stop when the natural residual falls below tol times its value at x0.
  double tol = 1e-10;
  /// Initial Lipschitz estimate for the parameter-free run; 0 picks a secant
  /// estimate at the start point.
  double L0 = 0.0;
  Index check_every = 10;
  /// Also certified once f_star - lower_bound <= gap_tol * max(1, |f_star|).
  double gap_tol = 1e-9;
  /// Start point; empty uses the projection of the origin onto dom g.
  Vector x0;
};

/// Solves the problem to high accuracy with parameter-free CODER in natural
/// block order. f_star is the best primal value seen along the run and
/// x_star the point attaining it. For least-squares problems with d <= 64 the
/// result is cross-checked against cyclic coordinate descent run to
/// stagnation; disagreement above 1e-6 clears `certified`.
ReferenceSolution compute_reference(const GmviProblem& problem, const ReferenceOptions& options = {});

/// Exact minimizer of 1/2 ||Ax - b||^2 + lambda1 ||x||_1 + lambda2/2 ||x||^2 by
/// cyclic coordinate descent until no coordinate moves by more than tol.
Vector coordinate_descent_lasso(const LeastSquaresProblem& problem, double tol = 1e-15, Index max_sweeps = 1000000);

struct BoundRow {
  Index k = 0;
  IterateKind iterate = IterateKind::kLast;
  double A = 0.0;
  double measured_gap = kNaN;
  /// ||x* - x0||^2 / (2 A_k).
  double gap_bound = kNaN;
  double measured_dist_sq = kNaN;
  /// 2 ||x* - x0||^2 / (1 + gamma A_k).
  double dist_bound = kNaN;
  /// 2 ||x* - x0||^2 (1 + gamma / (2L))^{-(k-1)}.
  double envelope = kNaN;
  bool gap_violation = false;
  bool dist_violation = false;
};

/// Pairs every logged record with its theoretical bounds. The gap bound uses
/// the primal gap of averaged iterates; the distance bounds apply to last
/// iterates. Violations are flagged beyond 1e-7 relative tolerance.
std::vector<BoundRow> corollary_bounds(const std::vector<TraceRecord>& trace, double gamma, double L,
                                       double dist0_sq);

/// Kendall rank correlation between two equally long sequences (tau-b).
double kendall_tau(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace coder
