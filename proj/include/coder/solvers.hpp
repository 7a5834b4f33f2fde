#pragma once

// Cyclic coordinate dual averaging with extrapolation (CODER), its
// parameter-free variant and the PCCM / PRCM baselines.
//
// One iteration with schedule a_k = (1 + gamma A_{k-1}) / (2L):
//   for each block i in order:
//     p_k^i = F^i(x_k^1, ..., x_k^{i-1}, x_{k-1}^i, ..., x_{k-1}^m)
//     q_k^i = p_k^i + (a_{k-1} / a_k) (F^i(x_{k-1}) - p_{k-1}^i)
//     G_k^i = G_{k-1}^i + a_k q_k^i
//     x_k^i = prox_{A_k g^i}(x_0^i - G_k^i)
// and the returned average is sum_k a_k x_k / A_k.

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <string_view>
#include <vector>

#include "coder/metrics.hpp"
#include "coder/problems.hpp"

namespace coder {

enum class Variant { kCoder, kCoderPf, kPccm, kPrcm };

std::string_view to_string(Variant variant);
Variant parse_variant(std::string_view name);

enum class PermutationKind { kFixed, kShuffleOnce, kShufflePerIteration };

struct PermutationPolicy {
  PermutationKind kind = PermutationKind::kFixed;
  std::uint64_t seed = 0;

  static PermutationPolicy fixed() { return {}; }
  static PermutationPolicy shuffle_once(std::uint64_t seed) { return {PermutationKind::kShuffleOnce, seed}; }
  static PermutationPolicy shuffle_per_iteration(std::uint64_t seed) {
    return {PermutationKind::kShufflePerIteration, seed};
  }
};

std::string_view to_string(PermutationKind kind);
PermutationKind parse_permutation(std::string_view name);

struct SolverConfig {
  Variant variant = Variant::kCoder;
  /// Lipschitz constant for CODER, PCCM and PRCM.
  double L = 0.0;
  /// Initial estimate for CODER-PF.
  double L0 = 0.0;
  /// Strong convexity used by the schedule; unset takes the problem's modulus.
  std::optional<double> gamma;
  Index max_iterations = 1000;
  /// Budget in passes; an iteration that would exceed it is not started.
  double max_passes = std::numeric_limits<double>::infinity();
  PermutationPolicy permutation;
  /// Base block order; empty means natural order.
  std::vector<Index> order;
  Index trace_every = 1;
  /// Sampling seed for PRCM.
  std::uint64_t seed = 0;
  /// CODER-PF fails once its estimate exceeds lipschitz_cap * L0.
  double lipschitz_cap = 1e12;
  /// Any coordinate above this magnitude counts as divergence.
  double divergence_threshold = 1e100;
  /// ||x_k|| above divergence_growth * max(1, ||x_0||) counts as divergence;
  /// 0 disables the check.
  double divergence_growth = 1e6;

  void validate(const GmviProblem& problem) const;
  double gamma_for(const GmviProblem& problem) const;
};

struct SolverState {
  Vector x0;
  Vector x_prev;        // x_{k-1}
  Vector x;             // x_k
  Vector dual;          // G_k
  Vector F_x;           // F(x_k), for CODER and CODER-PF
  Vector p;             // p_k
  Vector weighted_sum;  // sum_j a_j x_j
  double a_prev = 0.0;
  double a = 0.0;
  double A = 0.0;
  double L = 0.0;
  double gamma = 0.0;
  Index k = 0;
  double passes = 0.0;
  Index doublings = 0;
  std::vector<Index> order;
  std::mt19937_64 rng;              // PRCM block sampling
  std::mt19937_64 permutation_rng;  // per-iteration shuffles
  double divergence_threshold = 1e100;
  double divergence_growth = 1e6;

  /// sum_j a_j x_j / A_k, or x_0 before the first iteration.
  Vector average() const;
};

/// x_{-1} = x_0, p_0 = F(x_0) (CODER and CODER-PF only), G_0 = 0,
/// a_0 = A_0 = 0.
SolverState init_state(const GmviProblem& problem, const SolverConfig& config, const Vector& x0);

/// One CODER iteration at the constant state.L; extrapolate = false gives
/// PCCM, which also skips the trailing F(x_k) evaluation.
void coder_iteration(SolverState& state, const GmviProblem& problem, bool extrapolate = true);

void pccm_iteration(SolverState& state, const GmviProblem& problem);

struct PfStep {
  Index failed_checks = 0;
  double lhs = 0.0;  // ||F(x_k) - p_k||
  double rhs = 0.0;  // L_k ||x_k - x_{k-1}||
};

/// One iteration of the doubling scheme: L_k starts at L_{k-1}/2 and doubles
/// until ||F(x_k) - p_k|| <= L_k ||x_k - x_{k-1}||, each attempt rerunning the
/// pass from the pre-iteration state.
PfStep coder_pf_iteration(SolverState& state, const GmviProblem& problem, double L_cap);

/// m uniformly sampled block updates followed by one schedule step.
void prcm_pass(SolverState& state, const GmviProblem& problem);

struct IterationInfo {
  const SolverState& state;
  /// ||F(x_k) - p_k|| and L_k ||x_k - x_{k-1}||; NaN for PCCM and PRCM.
  double lipschitz_lhs = kNaN;
  double lipschitz_rhs = kNaN;
  Index failed_checks = 0;
};

struct SolveOptions {
  /// Enables primal gaps, distances and certificates in the trace.
  const ReferenceSolution* reference = nullptr;
  std::function<void(const IterationInfo&)> observer;
};

struct SolveResult {
  Vector x_last;
  Vector x_avg;
  Index iterations = 0;
  double A = 0.0;
  double L = 0.0;
  Index doubling_count = 0;
  double passes = 0.0;
  std::vector<TraceRecord> trace;
};

/// Raised when an iterate becomes non-finite or too large. The trace up to
/// the failing iteration is attached when raised from solve().
class DivergenceError : public Error {
 public:
  DivergenceError(Index iteration, const std::string& message, std::shared_ptr<const SolveResult> partial = {});

  Index iteration() const noexcept { return iteration_; }
  const std::shared_ptr<const SolveResult>& partial() const noexcept { return partial_; }

 private:
  Index iteration_;
  std::shared_ptr<const SolveResult> partial_;
};

/// Projection of the origin onto dom g.
Vector default_start(const GmviProblem& problem);

/// Passes consumed by one iteration of the variant.
double passes_per_iteration(Variant variant);

/// Runs up to config.max_iterations iterations within the pass budget and
/// records a last/average trace pair at k = 1, every trace_every iterations
/// and at the final iteration.
SolveResult solve(const GmviProblem& problem, const SolverConfig& config, const Vector& x0,
                  const SolveOptions& options = {});

}  // namespace coder
