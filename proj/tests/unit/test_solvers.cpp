#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "coder/data_io.hpp"
#include "coder/lipschitz.hpp"
#include "coder/solvers.hpp"

using namespace coder;

namespace {

LeastSquaresProblem lasso(Index n, Index d, double lambda, std::uint64_t seed, Index block = 1) {
  const DenseMatrix A = gaussian_matrix(n, d, seed);
  Vector w = Vector::Zero(d);
  w.head(std::max<Index>(1, d / 5)).setOnes();
  const Vector b = A * w + 0.1 * gaussian_matrix(n, 1, seed + 1).col(0);
  return make_lasso(SparseMatrix::from_dense(A), b, lambda, BlockPartition::uniform(d, block));
}

LeastSquaresProblem elastic_net(Index n, Index d, std::uint64_t seed) {
  const DenseMatrix A = gaussian_matrix(n, d, seed);
  const Vector b = gaussian_matrix(n, 1, seed + 1).col(0);
  return make_elastic_net(SparseMatrix::from_dense(A), b, 0.5, 0.1);
}

// Dense transcription of the iteration: every block operator is a slice of
// F at the explicit mixed point.
struct OracleRun {
  std::vector<Vector> iterates;
  std::vector<Vector> averages;
};

OracleRun oracle(const GmviProblem& problem, const Vector& x0, double L, double gamma, Index iterations,
                 bool extrapolate) {
  const auto& part = problem.partition();
  OracleRun run;
  Vector x = x0;
  Vector G = Vector::Zero(x0.size());
  Vector p_prev = problem.full_operator(x0);
  Vector F_prev = p_prev;
  Vector weighted = Vector::Zero(x0.size());
  double A = 0.0;
  double a_prev = 0.0;
  for (Index k = 1; k <= iterations; ++k) {
    const double a = (1.0 + gamma * A) / (2.0 * L);
    A += a;
    Vector mixed = x;
    Vector p(x0.size());
    for (Index b = 0; b < part.num_blocks(); ++b) {
      const Index off = part.offset(b);
      const Index s = part.size(b);
      p.segment(off, s) = problem.full_operator(mixed).segment(off, s);
      Vector q = p.segment(off, s);
      if (extrapolate) q += (a_prev / a) * (F_prev.segment(off, s) - p_prev.segment(off, s));
      G.segment(off, s) += a * q;
      mixed.segment(off, s) = problem.prox_block(b, Vector(x0.segment(off, s) - G.segment(off, s)), A);
    }
    x = mixed;
    weighted += a * x;
    p_prev = p;
    F_prev = problem.full_operator(x);
    a_prev = a;
    run.iterates.push_back(x);
    run.averages.push_back(weighted / A);
  }
  return run;
}

SolverConfig coder_config(double L, Index iterations) {
  SolverConfig c;
  c.variant = Variant::kCoder;
  c.L = L;
  c.max_iterations = iterations;
  return c;
}

}  // namespace

TEST(Variant, ParsingRoundTrips) {
  for (Variant v : {Variant::kCoder, Variant::kCoderPf, Variant::kPccm, Variant::kPrcm}) {
    EXPECT_EQ(parse_variant(to_string(v)), v);
  }
  for (PermutationKind k :
       {PermutationKind::kFixed, PermutationKind::kShuffleOnce, PermutationKind::kShufflePerIteration}) {
    EXPECT_EQ(parse_permutation(to_string(k)), k);
  }
  EXPECT_THROW(parse_variant("extragradient"), Error);
  EXPECT_THROW(parse_permutation("random"), Error);
}

TEST(Schedule, StepSizesFollowRecurrence) {
  const auto problem = elastic_net(20, 8, 5);
  SolverConfig c = coder_config(4.0, 6);
  SolverState state = init_state(problem, c, Vector::Zero(8));
  double A = 0.0;
  for (Index k = 1; k <= 6; ++k) {
    coder_iteration(state, problem);
    const double a = (1.0 + 0.1 * A) / 8.0;
    A += a;
    EXPECT_NEAR(state.a, a, 1e-15);
    EXPECT_NEAR(state.A, A, 1e-14);
    EXPECT_EQ(state.k, k);
  }
  c.gamma = 0.0;
  SolverState flat = init_state(problem, c, Vector::Zero(8));
  for (int k = 0; k < 3; ++k) coder_iteration(flat, problem);
  EXPECT_NEAR(flat.A, 3.0 / 8.0, 1e-15);
}

TEST(Coder, MatchesDenseOracle) {
  for (Index block : {1, 3}) {
    const auto problem = lasso(15, 9, 0.3, 13, block);
    const double L = lipschitz_constants_linear(problem.gram(), problem.partition()).L;
    const Vector x0 = Vector::LinSpaced(9, -0.5, 0.5);
    const auto expected = oracle(problem, x0, L, 0.0, 12, true);
    SolverState state = init_state(problem, coder_config(L, 12), x0);
    for (Index k = 0; k < 12; ++k) {
      coder_iteration(state, problem);
      EXPECT_LT((state.x - expected.iterates[k]).norm(), 1e-11);
      EXPECT_LT((state.average() - expected.averages[k]).norm(), 1e-11);
    }
  }
}

TEST(Pccm, MatchesDenseOracleWithoutExtrapolation) {
  const auto problem = elastic_net(10, 6, 3);
  const double L = lipschitz_constants_linear(problem.gram(), problem.partition()).L;
  const auto expected = oracle(problem, Vector::Zero(6), L, 0.1, 8, false);
  SolverConfig c = coder_config(L, 8);
  c.variant = Variant::kPccm;
  SolverState state = init_state(problem, c, Vector::Zero(6));
  EXPECT_EQ(state.passes, 0.0);
  for (Index k = 0; k < 8; ++k) {
    pccm_iteration(state, problem);
    EXPECT_LT((state.x - expected.iterates[k]).norm(), 1e-12);
  }
  EXPECT_EQ(state.passes, 8.0);
}

TEST(Certificates, EstimateAndGapBoundHoldEveryIteration) {
  const auto la = lasso(40, 20, 1.0, 42);
  const auto en = elastic_net(40, 20, 7);
  for (const LeastSquaresProblem* problem : {&la, &en}) {
    const double L = lipschitz_constants_linear(problem->gram(), problem->partition()).L;
    const auto ref = compute_reference(*problem);
    ASSERT_TRUE(ref.certified);
    const Vector x0 = Vector::Zero(20);
    // Any comparison point in dom g works for the dual-averaging inequality.
    CertificateTracker at_random(*problem, Vector::LinSpaced(20, -1.0, 1.0), x0);
    CertificateTracker at_star(*problem, ref.x_star, x0);
    SolverState state = init_state(*problem, coder_config(L, 300), x0);
    for (Index k = 0; k < 300; ++k) {
      coder_iteration(state, *problem);
      at_random.add(state.a, state.x, state.F_x);
      at_star.add(state.a, state.x, state.F_x);
      EXPECT_LE(at_random.estimate_lhs(state.dual, state.A, state.x),
                at_random.estimate_rhs(state.A, state.gamma, state.x) + at_random.slack());
      EXPECT_LE(at_star.gap_certificate_lhs(state.A, state.gamma, state.x), at_star.gap_certificate_rhs() + at_star.slack());
    }
  }
}

TEST(Solve, TraceLayoutAndPassAccounting) {
  const auto problem = lasso(30, 10, 0.5, 3);
  const auto ref = compute_reference(problem);
  SolverConfig c = coder_config(lipschitz_constants_linear(problem.gram(), problem.partition()).L, 25);
  c.trace_every = 10;
  const auto result = solve(problem, c, Vector::Zero(10), {&ref, {}});
  ASSERT_EQ(result.trace.size(), 8u);
  const std::vector<Index> ks = {1, 10, 20, 25};
  for (std::size_t i = 0; i < ks.size(); ++i) {
    EXPECT_EQ(result.trace[2 * i].k, ks[i]);
    EXPECT_EQ(result.trace[2 * i].iterate, IterateKind::kLast);
    EXPECT_EQ(result.trace[2 * i + 1].iterate, IterateKind::kAverage);
    EXPECT_EQ(result.trace[2 * i].passes, 1.0 + 2.0 * static_cast<double>(ks[i]));
  }
  EXPECT_EQ(result.passes, 51.0);
  EXPECT_EQ(result.iterations, 25);

  c.max_passes = 20.0;
  c.max_iterations = 1000;
  const auto budgeted = solve(problem, c, Vector::Zero(10));
  EXPECT_EQ(budgeted.iterations, 9);
  EXPECT_LE(budgeted.passes, 20.0);

  c.variant = Variant::kPrcm;
  const auto prcm = solve(problem, c, Vector::Zero(10));
  EXPECT_EQ(prcm.iterations, 20);
  EXPECT_EQ(prcm.passes, 20.0);
}

TEST(Solve, ObserverSeesLipschitzInequality) {
  const auto problem = lasso(30, 12, 0.2, 8);
  const double L = lipschitz_constants_linear(problem.gram(), problem.partition()).L;
  Index calls = 0;
  SolveOptions options;
  options.observer = [&](const IterationInfo& info) {
    ++calls;
    EXPECT_LE(info.lipschitz_lhs, info.lipschitz_rhs * (1.0 + 1e-12) + 1e-12);
  };
  solve(problem, coder_config(L, 50), Vector::Zero(12), options);
  EXPECT_EQ(calls, 50);
}

TEST(CoderPf, DoublingStaysWithinBound) {
  const auto problem = lasso(40, 16, 0.5, 17);
  const double L_true = lipschitz_constants_linear(problem.gram(), problem.partition()).L;
  SolverConfig c;
  c.variant = Variant::kCoderPf;
  c.L0 = L_true / 16.0;
  c.max_iterations = 200;
  SolverState state = init_state(problem, c, Vector::Zero(16));
  for (int k = 0; k < 200; ++k) {
    const PfStep step = coder_pf_iteration(state, problem, 1e12 * c.L0);
    EXPECT_LE(step.lhs, step.rhs + 1e-9);
    EXPECT_LE(state.L, 2.0 * L_true);
  }
  EXPECT_LE(state.doublings, static_cast<Index>(std::ceil(std::log2(2.0 * L_true / c.L0))) + 200);
  EXPECT_THROW(coder_pf_iteration(state, problem, state.L / 4.0), Error);
}

TEST(CoderPf, RejectsPerIterationShuffle) {
  const auto problem = lasso(10, 4, 0.1, 1);
  SolverConfig c;
  c.variant = Variant::kCoderPf;
  c.L0 = 1.0;
  c.permutation = PermutationPolicy::shuffle_per_iteration(3);
  EXPECT_THROW(c.validate(problem), Error);
  c.permutation = PermutationPolicy::shuffle_once(3);
  EXPECT_NO_THROW(c.validate(problem));
}

TEST(SolverConfig, Validation) {
  const auto problem = lasso(10, 4, 0.1, 1);
  SolverConfig c = coder_config(0.0, 10);
  EXPECT_THROW(c.validate(problem), Error);
  c.L = 1.0;
  c.gamma = 0.5;
  EXPECT_THROW(c.validate(problem), Error);
  c.gamma.reset();
  c.order = {0, 1, 1, 3};
  EXPECT_THROW(c.validate(problem), Error);
  c.order = {3, 2, 1, 0};
  EXPECT_NO_THROW(c.validate(problem));
  EXPECT_THROW(init_state(problem, c, Vector::Zero(3)), Error);
}

TEST(Permutation, PoliciesControlOrder) {
  const auto problem = lasso(10, 6, 0.1, 2);
  SolverConfig c = coder_config(50.0, 3);
  c.permutation = PermutationPolicy::shuffle_once(11);
  const SolverState once = init_state(problem, c, Vector::Zero(6));
  EXPECT_NE(once.order, problem.partition().natural_order());
  EXPECT_EQ(once.order, init_state(problem, c, Vector::Zero(6)).order);

  c.permutation = PermutationPolicy::shuffle_per_iteration(11);
  const auto a = solve(problem, c, Vector::Zero(6));
  const auto b = solve(problem, c, Vector::Zero(6));
  EXPECT_EQ(a.x_last, b.x_last);
  c.permutation = PermutationPolicy::fixed();
  EXPECT_NE(solve(problem, c, Vector::Zero(6)).x_last, a.x_last);
}

TEST(Prcm, SeededAndDeterministic) {
  const auto problem = lasso(20, 8, 0.1, 4);
  SolverConfig c = coder_config(30.0, 40);
  c.variant = Variant::kPrcm;
  c.seed = 5;
  const auto a = solve(problem, c, Vector::Zero(8));
  EXPECT_EQ(a.x_last, solve(problem, c, Vector::Zero(8)).x_last);
  c.seed = 6;
  EXPECT_NE(a.x_last, solve(problem, c, Vector::Zero(8)).x_last);
}

TEST(Divergence, PccmOnBilinearGrowsAndKeepsPartialTrace) {
  const auto toy = make_bilinear_toy(5);
  SolverConfig c = coder_config(1.0, 5000);
  c.variant = Variant::kPccm;
  c.trace_every = 10;
  try {
    solve(toy, c, Vector::Ones(10));
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    ASSERT_TRUE(e.partial());
    const auto& trace = e.partial()->trace;
    ASSERT_GE(trace.size(), 4u);
    EXPECT_EQ(trace.back().k, e.iteration());
    EXPECT_GT(trace.back().norm, 10.0 * std::sqrt(10.0));
    EXPECT_GT(trace[trace.size() - 2].norm, trace.front().norm);
    EXPECT_EQ(e.code(), ErrorCode::kDivergence);
  }
  c.variant = Variant::kCoder;
  const auto result = solve(toy, c, Vector::Ones(10));
  EXPECT_LT(result.x_avg.norm(), 1e-2 * std::sqrt(10.0));
}

TEST(Divergence, NonFiniteStartRejected) {
  const auto toy = make_bilinear_toy(2);
  Vector x0 = Vector::Ones(4);
  x0(1) = std::nan("");
  EXPECT_THROW(solve(toy, coder_config(1.0, 3), x0), Error);
}

TEST(Svm, CoderDrivesPrimalGapDown) {
  SyntheticOptions o;
  o.n = 60;
  o.d = 10;
  o.density = 0.5;
  o.labels = LabelModel::kPlanted;
  o.noise = 1.0;
  const auto data = generate_synthetic(o);
  const auto svm = make_l1_svm(build_svm_matrix(data), 1e-2, 1.0 / 60.0);
  const auto report = lipschitz_constants_linear(svm.linear_operator(), svm.partition());
  EXPECT_NEAR(report.L, report.M, 1e-9 * report.M);
  ReferenceOptions ro;
  ro.max_passes = 40000;
  const auto ref = compute_reference(svm, ro);
  ASSERT_TRUE(ref.lower_bound.has_value());
  EXPECT_LE(*ref.lower_bound, *ref.f_star + 1e-12);
  SolverConfig c = coder_config(report.L, 1000);
  c.trace_every = 100;
  const auto result = solve(svm, c, default_start(svm), {&ref, {}});
  EXPECT_LT(result.trace.back().primal_gap, 1e-2 * result.trace[1].primal_gap);
  for (const auto& r : result.trace) EXPECT_LE(r.cert_lhs, r.cert_rhs + 1e-7 * (1.0 + r.cert_rhs * 2.0));
}
