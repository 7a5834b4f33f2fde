#include "coder/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "coder/data_io.hpp"

namespace coder {

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::kCoder: return "coder";
    case Variant::kCoderPf: return "coder-pf";
    case Variant::kPccm: return "pccm";
    case Variant::kPrcm: return "prcm";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::kCoder, Variant::kCoderPf, Variant::kPccm, Variant::kPrcm}) {
    if (name == to_string(v)) return v;
  }
  throw Error(ErrorCode::kConfig, "unknown solver variant '" + std::string(name) + "'");
}

std::string_view to_string(PermutationKind kind) {
  switch (kind) {
    case PermutationKind::kFixed: return "fixed";
    case PermutationKind::kShuffleOnce: return "shuffle-once";
    case PermutationKind::kShufflePerIteration: return "shuffle-per-iteration";
  }
  return "unknown";
}

PermutationKind parse_permutation(std::string_view name) {
  for (PermutationKind k :
       {PermutationKind::kFixed, PermutationKind::kShuffleOnce, PermutationKind::kShufflePerIteration}) {
    if (name == to_string(k)) return k;
  }
  throw Error(ErrorCode::kConfig, "unknown permutation policy '" + std::string(name) + "'");
}

double SolverConfig::gamma_for(const GmviProblem& problem) const { return gamma.value_or(problem.gamma()); }

void SolverConfig::validate(const GmviProblem& problem) const {
  const auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidArgument, "solver config: " + what); };
  if (variant == Variant::kCoderPf) {
    if (!(L0 > 0.0) || !std::isfinite(L0)) fail("L0 must be positive and finite");
    if (permutation.kind == PermutationKind::kShufflePerIteration) {
      fail("coder-pf requires a fixed block order (fixed or shuffle-once)");
    }
    if (!(lipschitz_cap > 1.0)) fail("lipschitz_cap must exceed 1");
  } else if (!(L > 0.0) || !std::isfinite(L)) {
    fail("L must be positive and finite");
  }
  if (max_iterations < 1) fail("max_iterations must be >= 1");
  if (!(max_passes > 0.0)) fail("pass budget must be positive");
  if (trace_every < 1) fail("trace_every must be >= 1");
  const double g = gamma_for(problem);
  if (!(g >= 0.0) || !std::isfinite(g)) fail("gamma must be finite and non-negative");
  if (g > problem.gamma() * (1.0 + 1e-12)) fail("gamma exceeds the strong convexity of g");
  if (!order.empty()) problem.partition().validate_order(order);
  if (!(divergence_threshold > 0.0) || !(divergence_growth >= 0.0)) fail("divergence thresholds must be positive");
}

Vector SolverState::average() const {
  if (A <= 0.0) return x0;
  return weighted_sum / A;
}

DivergenceError::DivergenceError(Index iteration, const std::string& message,
                                 std::shared_ptr<const SolveResult> partial)
    : Error(ErrorCode::kDivergence, message), iteration_(iteration), partial_(std::move(partial)) {}

Vector default_start(const GmviProblem& problem) {
  const auto& part = problem.partition();
  Vector x = Vector::Zero(problem.dim());
  for (Index b = 0; b < part.num_blocks(); ++b) {
    const Vector z = x.segment(part.offset(b), part.size(b));
    problem.prox_block(b, z, 0.0, x.segment(part.offset(b), part.size(b)));
  }
  return x;
}

double passes_per_iteration(Variant variant) {
  return variant == Variant::kCoder || variant == Variant::kCoderPf ? 2.0 : 1.0;
}

SolverState init_state(const GmviProblem& problem, const SolverConfig& config, const Vector& x0) {
  detail::require_same(problem.dim(), x0.size(), "solver start point");
  if (!x0.allFinite()) throw Error(ErrorCode::kInvalidArgument, "solver start point has non-finite entries");
  if (!std::isfinite(problem.g_value(x0))) {
    throw Error(ErrorCode::kDomain, "solver start point is outside dom g");
  }
  const Index d = problem.dim();
  SolverState state;
  state.x0 = x0;
  state.x_prev = x0;
  state.x = x0;
  state.dual = Vector::Zero(d);
  state.weighted_sum = Vector::Zero(d);
  state.L = config.variant == Variant::kCoderPf ? config.L0 : config.L;
  state.gamma = config.gamma_for(problem);
  state.order = config.order.empty() ? problem.partition().natural_order() : config.order;
  state.rng.seed(config.seed);
  state.permutation_rng.seed(config.permutation.seed);
  state.divergence_threshold = config.divergence_threshold;
  state.divergence_growth = config.divergence_growth;
  if (config.permutation.kind == PermutationKind::kShuffleOnce) {
    std::shuffle(state.order.begin(), state.order.end(), state.permutation_rng);
  }
  if (config.variant == Variant::kCoder || config.variant == Variant::kCoderPf) {
    state.F_x = problem.full_operator(x0);
    state.passes = 1.0;
  } else {
    state.F_x = Vector::Zero(d);
  }
  state.p = state.F_x;
  return state;
}

namespace {

void check_divergence(const SolverState& state) {
  const double norm = state.x.norm();
  std::string reason;
  if (!state.x.allFinite()) {
    reason = "non-finite iterate";
  } else if (state.x.lpNorm<Eigen::Infinity>() > state.divergence_threshold) {
    reason = "coordinate magnitude above " + format_double(state.divergence_threshold);
  } else if (state.divergence_growth > 0.0 &&
             norm > state.divergence_growth * std::max(1.0, state.x0.norm())) {
    reason = "iterate norm " + format_double(norm) + " above " + format_double(state.divergence_growth) +
             " times the start";
  } else {
    return;
  }
  throw DivergenceError(state.k, "divergence at iteration " + std::to_string(state.k) + ": " + reason);
}

void advance_schedule(SolverState& state) {
  state.a_prev = state.a;
  state.a = (1.0 + state.gamma * state.A) / (2.0 * state.L);
  state.A += state.a;
  ++state.k;
}

void cyclic_step(SolverState& state, const GmviProblem& problem, bool extrapolate) {
  const auto& part = problem.partition();
  advance_schedule(state);
  const double ratio = extrapolate ? state.a_prev / state.a : 0.0;

  auto pass = problem.begin_pass(state.x);
  Vector p_new(problem.dim());
  Vector x_new = state.x;
  Vector z;
  for (Index b : state.order) {
    const Index off = part.offset(b);
    const Index s = part.size(b);
    auto p_block = p_new.segment(off, s);
    pass->block_operator(b, p_block);
    auto g_block = state.dual.segment(off, s);
    if (ratio != 0.0) {
      g_block += state.a * (p_block + ratio * (state.F_x.segment(off, s) - state.p.segment(off, s)));
    } else {
      g_block += state.a * p_block;
    }
    z = state.x0.segment(off, s) - g_block;
    problem.prox_block(b, z, state.A, x_new.segment(off, s));
    pass->commit_block(b, x_new.segment(off, s));
  }
  state.x_prev = std::move(state.x);
  state.x = std::move(x_new);
  state.p = std::move(p_new);
  state.weighted_sum += state.a * state.x;
  state.passes += 1.0;
  if (extrapolate) {
    state.F_x = problem.full_operator(state.x);
    state.passes += 1.0;
  }
}

}  // namespace

void coder_iteration(SolverState& state, const GmviProblem& problem, bool extrapolate) {
  cyclic_step(state, problem, extrapolate);
  check_divergence(state);
}

void pccm_iteration(SolverState& state, const GmviProblem& problem) { coder_iteration(state, problem, false); }

PfStep coder_pf_iteration(SolverState& state, const GmviProblem& problem, double L_cap) {
  const SolverState snapshot = state;
  PfStep step;
  double L_k = snapshot.L / 2.0;
  double passes = snapshot.passes;
  constexpr double kRoundoff = 64.0 * std::numeric_limits<double>::epsilon();
  while (true) {
    L_k *= 2.0;
    if (L_k > L_cap) {
      throw Error(ErrorCode::kLipschitzCap, "coder-pf: Lipschitz estimate " + format_double(L_k) +
                                                " exceeds the cap " + format_double(L_cap));
    }
    state = snapshot;
    state.L = L_k;
    state.passes = passes;
    cyclic_step(state, problem, true);
    passes = state.passes;
    step.lhs = (state.F_x - state.p).norm();
    step.rhs = L_k * (state.x - state.x_prev).norm();
    const double slack = kRoundoff * (state.F_x.norm() + state.p.norm());
    if (step.lhs <= step.rhs + slack) break;
    ++step.failed_checks;
  }
  state.doublings = snapshot.doublings + step.failed_checks;
  check_divergence(state);
  return step;
}

void prcm_pass(SolverState& state, const GmviProblem& problem) {
  const auto& part = problem.partition();
  advance_schedule(state);
  std::uniform_int_distribution<Index> pick(0, part.num_blocks() - 1);
  auto pass = problem.begin_pass(state.x);
  state.x_prev = state.x;
  Vector z;
  for (Index step = 0; step < part.num_blocks(); ++step) {
    const Index b = pick(state.rng);
    const Index off = part.offset(b);
    const Index s = part.size(b);
    auto p_block = state.p.segment(off, s);
    pass->block_operator(b, p_block);
    auto g_block = state.dual.segment(off, s);
    g_block += state.a * p_block;
    z = state.x0.segment(off, s) - g_block;
    problem.prox_block(b, z, state.A, state.x.segment(off, s));
    pass->commit_block(b, state.x.segment(off, s));
  }
  state.weighted_sum += state.a * state.x;
  state.passes += 1.0;
  check_divergence(state);
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

namespace {

class Recorder {
 public:
  Recorder(const GmviProblem& problem, const ReferenceSolution* reference, const Vector& x0)
      : problem_(&problem), reference_(reference) {
    if (reference_ != nullptr) {
      detail::require_same(problem.dim(), reference_->x_star.size(), "reference solution");
      F_ref_ = problem.full_operator(reference_->x_star);
      g_ref_ = problem.g_value(reference_->x_star);
      tracker_.emplace(problem, reference_->x_star, x0);
    }
  }

  bool tracking() const noexcept { return tracker_.has_value(); }

  void accumulate(const SolverState& state, Variant variant) {
    if (!tracker_) return;
    if (variant == Variant::kCoder || variant == Variant::kCoderPf) {
      tracker_->add(state.a, state.x, state.F_x);
    } else {
      tracker_->add(state.a, state.x, problem_->full_operator(state.x));
    }
  }

  void record(const SolverState& state, double elapsed, std::vector<TraceRecord>& trace) const {
    for (IterateKind kind : {IterateKind::kLast, IterateKind::kAverage}) {
      const Vector x = kind == IterateKind::kLast ? state.x : state.average();
      TraceRecord r;
      r.k = state.k;
      r.passes = state.passes;
      r.time_s = elapsed;
      r.iterate = kind;
      r.A = state.A;
      r.L = state.L;
      r.norm = x.norm();
      if (x.allFinite()) {
        if (const auto value = problem_->primal_value(x)) {
          r.primal_value = *value;
          if (reference_ != nullptr && reference_->f_star) r.primal_gap = *value - *reference_->f_star;
        }
      }
      if (reference_ != nullptr) {
        r.dist_sq = (x - reference_->x_star).squaredNorm();
        r.gap_at_ref = gap_at(*problem_, x, reference_->x_star, F_ref_, g_ref_);
      }
      if (tracker_) {
        r.cert_lhs = tracker_->gap_certificate_lhs(state.A, state.gamma, state.x);
        r.cert_rhs = tracker_->gap_certificate_rhs();
        r.estimate_lhs = tracker_->estimate_lhs(state.dual, state.A, state.x);
        r.estimate_rhs = tracker_->estimate_rhs(state.A, state.gamma, state.x);
      }
      trace.push_back(r);
    }
  }

 private:
  const GmviProblem* problem_;
  const ReferenceSolution* reference_;
  Vector F_ref_;
  double g_ref_ = 0.0;
  std::optional<CertificateTracker> tracker_;
};

SolveResult finish(const SolverState& state, std::vector<TraceRecord> trace) {
  SolveResult result;
  result.x_last = state.x;
  result.x_avg = state.average();
  result.iterations = state.k;
  result.A = state.A;
  result.L = state.L;
  result.doubling_count = state.doublings;
  result.passes = state.passes;
  result.trace = std::move(trace);
  return result;
}

}  // namespace

SolveResult solve(const GmviProblem& problem, const SolverConfig& config, const Vector& x0,
                  const SolveOptions& options) {
  config.validate(problem);
  SolverState state = init_state(problem, config, x0);
  Recorder recorder(problem, options.reference, x0);
  std::vector<TraceRecord> trace;
  double elapsed = 0.0;
  Index last_logged = 0;
  const double cost = passes_per_iteration(config.variant);
  const double L_cap = config.lipschitz_cap * config.L0;

  while (state.k < config.max_iterations && state.passes + cost <= config.max_passes * (1.0 + 1e-12)) {
    if (config.permutation.kind == PermutationKind::kShufflePerIteration) {
      std::shuffle(state.order.begin(), state.order.end(), state.permutation_rng);
    }
    IterationInfo info{state};
    const auto start = std::chrono::steady_clock::now();
    try {
      switch (config.variant) {
        case Variant::kCoder:
          coder_iteration(state, problem, true);
          info.lipschitz_lhs = (state.F_x - state.p).norm();
          info.lipschitz_rhs = state.L * (state.x - state.x_prev).norm();
          break;
        case Variant::kCoderPf: {
          const PfStep step = coder_pf_iteration(state, problem, L_cap);
          info.lipschitz_lhs = step.lhs;
          info.lipschitz_rhs = step.rhs;
          info.failed_checks = step.failed_checks;
          break;
        }
        case Variant::kPccm: pccm_iteration(state, problem); break;
        case Variant::kPrcm: prcm_pass(state, problem); break;
      }
    } catch (const DivergenceError& e) {
      elapsed += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      recorder.record(state, elapsed, trace);
      auto partial = std::make_shared<const SolveResult>(finish(state, std::move(trace)));
      throw DivergenceError(e.iteration(), e.what(), std::move(partial));
    }
    elapsed += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    recorder.accumulate(state, config.variant);
    if (options.observer) options.observer(info);
    if (state.k == 1 || state.k % config.trace_every == 0) {
      recorder.record(state, elapsed, trace);
      last_logged = state.k;
    }
  }
  if (state.k > 0 && last_logged != state.k) recorder.record(state, elapsed, trace);
  return finish(state, std::move(trace));
}

}  // namespace coder
