#include "coder/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "coder/data_io.hpp"
#include "coder/solvers.hpp"

namespace coder {

std::string_view to_string(IterateKind kind) { return kind == IterateKind::kLast ? "last" : "avg"; }

const std::vector<std::string>& trace_csv_header() {
  static const std::vector<std::string> header = {"k",       "passes",   "time_s",   "primal_gap", "dist_sq",
                                                  "gap_at_ref", "cert_lhs", "cert_rhs", "iterate"};
  return header;
}

std::vector<std::string> trace_csv_fields(const TraceRecord& r) {
  return {std::to_string(r.k),     format_double(r.passes),     format_double(r.time_s),
          format_double(r.primal_gap), format_double(r.dist_sq), format_double(r.gap_at_ref),
          format_double(r.cert_lhs), format_double(r.cert_rhs),  std::string(to_string(r.iterate))};
}

// ---------------------------------------------------------------------------
// Gap and residuals
// ---------------------------------------------------------------------------

double gap_at(const GmviProblem& problem, const Vector& x_hat, const Vector& u, const Vector& F_u, double g_u) {
  detail::require_same(problem.dim(), x_hat.size(), "gap_at");
  detail::require_same(problem.dim(), u.size(), "gap_at");
  if (!std::isfinite(g_u)) throw Error(ErrorCode::kDomain, "gap_at: u is outside dom g");
  const double g_hat = problem.g_value(x_hat);
  if (!std::isfinite(g_hat)) return kInfinity;
  return F_u.dot(x_hat - u) + g_hat - g_u;
}

double gap_at(const GmviProblem& problem, const Vector& x_hat, const Vector& u) {
  detail::require_same(problem.dim(), u.size(), "gap_at");
  const double g_u = problem.g_value(u);
  if (!std::isfinite(g_u)) throw Error(ErrorCode::kDomain, "gap_at: u is outside dom g");
  return gap_at(problem, x_hat, u, problem.full_operator(u), g_u);
}

double natural_residual(const GmviProblem& problem, const Vector& x, double L) {
  if (!(L > 0.0)) throw Error(ErrorCode::kInvalidArgument, "natural_residual: L must be positive");
  const auto& part = problem.partition();
  const Vector z = x - problem.full_operator(x) / L;
  Vector prox(x.size());
  for (Index b = 0; b < part.num_blocks(); ++b) {
    const Index off = part.offset(b);
    const Index s = part.size(b);
    problem.prox_block(b, z.segment(off, s), 1.0 / L, prox.segment(off, s));
  }
  return L * (x - prox).norm();
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

CertificateTracker::CertificateTracker(const GmviProblem& problem, Vector u, Vector x0)
    : problem_(&problem), u_(std::move(u)), x0_(std::move(x0)) {
  detail::require_same(problem.dim(), u_.size(), "CertificateTracker u");
  detail::require_same(problem.dim(), x0_.size(), "CertificateTracker x0");
  g_u_ = problem.g_value(u_);
  if (!std::isfinite(g_u_)) throw Error(ErrorCode::kDomain, "CertificateTracker: u is outside dom g");
  dist0_sq_ = (u_ - x0_).squaredNorm();
}

void CertificateTracker::add(double a_k, const Vector& x_k, const Vector& F_x_k) {
  sum_ += a_k * (F_x_k.dot(x_k - u_) + problem_->g_value(x_k) - g_u_);
}

double CertificateTracker::gap_certificate_lhs(double A_k, double gamma, const Vector& x_k) const {
  return sum_ + 0.25 * (1.0 + gamma * A_k) * (u_ - x_k).squaredNorm();
}

double CertificateTracker::estimate_lhs(const Vector& dual, double A_k, const Vector& x_k) const {
  return dual.dot(x_k - u_) + A_k * (problem_->g_value(x_k) - g_u_) + 0.5 * (x_k - x0_).squaredNorm();
}

double CertificateTracker::estimate_rhs(double A_k, double gamma, const Vector& x_k) const {
  return 0.5 * dist0_sq_ - 0.5 * (1.0 + gamma * A_k) * (u_ - x_k).squaredNorm();
}

// ---------------------------------------------------------------------------
// Reference solutions
// ---------------------------------------------------------------------------

Vector coordinate_descent_lasso(const LeastSquaresProblem& problem, double tol, Index max_sweeps) {
  const auto& A = problem.design();
  const Index d = A.cols();
  Vector x = Vector::Zero(d);
  Vector residual = problem.response();  // b - A x
  Vector col_sq(d);
  for (Index j = 0; j < d; ++j) {
    double s = 0.0;
    for (SparseMatrix::ColStorage::InnerIterator it(A.by_col(), j); it; ++it) s += it.value() * it.value();
    col_sq(j) = s;
  }
  for (Index sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Index j = 0; j < d; ++j) {
      const double denom = col_sq(j) + problem.lambda2();
      if (denom == 0.0) continue;
      const double rho = csr_col_dot(A, j, residual) + col_sq(j) * x(j);
      const double updated = soft_threshold(rho, problem.lambda1()) / denom;
      const double delta = updated - x(j);
      if (delta != 0.0) {
        csr_col_axpy(A, j, -delta, residual);
        x(j) = updated;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    if (max_change <= tol * (1.0 + x.lpNorm<Eigen::Infinity>())) break;
  }
  return x;
}

namespace {

double secant_estimate(const GmviProblem& problem, const Vector& x0) {
  const Vector F0 = problem.full_operator(x0);
  Vector direction = F0.norm() > 0.0 ? Vector(F0 / F0.norm())
                                     : Vector(Vector::Ones(x0.size()) / std::sqrt(static_cast<double>(x0.size())));
  const double step = 1e-3 * (1.0 + x0.norm());
  const Vector F1 = problem.full_operator(x0 + step * direction);
  const double estimate = (F1 - F0).norm() / step;
  return estimate > 0.0 && std::isfinite(estimate) ? estimate : 1.0;
}

}  // namespace

ReferenceSolution compute_reference(const GmviProblem& problem, const ReferenceOptions& options) {
  const Vector x0 = options.x0.size() == 0 ? default_start(problem) : options.x0;
  const double L0 = options.L0 > 0.0 ? options.L0 : secant_estimate(problem, x0);
  const Index check_every = std::max<Index>(options.check_every, 1);

  SolverConfig config;
  config.variant = Variant::kCoderPf;
  config.L0 = L0;
  config.max_passes = options.max_passes;
  config.divergence_growth = 0.0;
  config.validate(problem);
  SolverState state = init_state(problem, config, x0);

  ReferenceSolution ref;
  ref.method = "coder-pf";
  ref.x_star = x0;
  ref.f_star = problem.primal_value(x0);
  ref.lower_bound = problem.dual_value(x0);
  const double r0 = natural_residual(problem, x0, L0);
  double residual = r0;

  const auto consider = [&](const Vector& x) {
    if (!ref.f_star) return;
    const auto value = problem.primal_value(x);
    if (value && *value < *ref.f_star) {
      ref.f_star = value;
      ref.x_star = x;
    }
  };
  const auto bound_from = [&](const Vector& x) {
    if (const auto bound = problem.dual_value(x); bound && (!ref.lower_bound || *bound > *ref.lower_bound)) {
      ref.lower_bound = bound;
    }
  };
  const auto gap_closed = [&] {
    return ref.f_star && ref.lower_bound &&
           *ref.f_star - *ref.lower_bound <= options.gap_tol * std::max(1.0, std::abs(*ref.f_star));
  };

  if (r0 == 0.0) {
    ref.certified = true;
  } else {
    while (state.passes + 2.0 <= options.max_passes) {
      coder_pf_iteration(state, problem, config.lipschitz_cap * L0);
      consider(state.x);
      if (state.k % check_every == 0) {
        const Vector average = state.average();
        consider(average);
        bound_from(state.x);
        bound_from(average);
        residual = natural_residual(problem, state.x, L0);
        if (residual <= options.tol * r0) {
          ref.certified = true;
          ref.x_star = state.x;
          if (const auto value = problem.primal_value(state.x); value && ref.f_star) {
            ref.f_star = std::min(*ref.f_star, *value);
          }
          break;
        }
        if (gap_closed()) {
          ref.certified = true;
          break;
        }
      }
    }
    if (!ref.f_star) ref.x_star = state.x;
  }
  ref.passes = state.passes;
  ref.iterations = state.k;
  ref.residual = r0 > 0.0 ? natural_residual(problem, ref.x_star, L0) / r0 : 0.0;

  if (const auto* ls = dynamic_cast<const LeastSquaresProblem*>(&problem); ls != nullptr && ls->dim() <= 64) {
    const Vector x_cd = coordinate_descent_lasso(*ls);
    ref.cross_check_error = (x_cd - ref.x_star).lpNorm<Eigen::Infinity>();
    if (!(ref.cross_check_error <= 1e-6)) ref.certified = false;
  }
  return ref;
}

// ---------------------------------------------------------------------------
// Bounds
// ---------------------------------------------------------------------------

std::vector<BoundRow> corollary_bounds(const std::vector<TraceRecord>& trace, double gamma, double L,
                                       double dist0_sq) {
  constexpr double kRelTol = 1e-7;
  std::vector<BoundRow> rows;
  rows.reserve(trace.size());
  for (const auto& r : trace) {
    BoundRow row;
    row.k = r.k;
    row.iterate = r.iterate;
    row.A = r.A;
    row.measured_gap = r.primal_gap;
    row.measured_dist_sq = r.dist_sq;
    if (r.A > 0.0) row.gap_bound = dist0_sq / (2.0 * r.A);
    row.dist_bound = 2.0 * dist0_sq / (1.0 + gamma * r.A);
    if (L > 0.0) row.envelope = 2.0 * dist0_sq * std::pow(1.0 + gamma / (2.0 * L), -static_cast<double>(r.k - 1));
    if (r.iterate == IterateKind::kAverage && std::isfinite(row.gap_bound) && !std::isnan(row.measured_gap)) {
      row.gap_violation = row.measured_gap > row.gap_bound * (1.0 + kRelTol);
    }
    if (r.iterate == IterateKind::kLast && !std::isnan(row.measured_dist_sq)) {
      row.dist_violation = row.measured_dist_sq > row.dist_bound * (1.0 + kRelTol);
    }
    rows.push_back(row);
  }
  return rows;
}

double kendall_tau(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kDimensionMismatch, "kendall_tau: sequences differ in length");
  const std::size_t n = a.size();
  double concordant = 0.0;
  double discordant = 0.0;
  double ties_a = 0.0;
  double ties_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double da = a[j] - a[i];
      const double db = b[j] - b[i];
      if (da == 0.0 && db == 0.0) continue;
      if (da == 0.0) {
        ties_a += 1.0;
      } else if (db == 0.0) {
        ties_b += 1.0;
      } else if ((da > 0.0) == (db > 0.0)) {
        concordant += 1.0;
      } else {
        discordant += 1.0;
      }
    }
  }
  const double denom = std::sqrt((concordant + discordant + ties_a) * (concordant + discordant + ties_b));
  return denom > 0.0 ? (concordant - discordant) / denom : 0.0;
}

}  // namespace coder
