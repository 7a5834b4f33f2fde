#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include "coder/bench.hpp"
#include "coder/data_io.hpp"

using namespace coder;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return RunConfig::parse(in);
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("coder_test_" + name)).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(RunConfig, DefaultsAndParsing) {
  const RunConfig defaults;
  EXPECT_EQ(defaults.get("problem.kind"), "lasso");
  EXPECT_EQ(defaults.get_double("solver.budget_passes"), kInfinity);
  const auto config = parse("[problem]\nkind = svm\nlambda = 1e-6, 1e-4,1e-2\n[lipschitz]\nd_list = 10:50:20, 7\n");
  EXPECT_EQ(config.get("problem.kind"), "svm");
  EXPECT_EQ(config.get_double_list("problem.lambda"), (std::vector<double>{1e-6, 1e-4, 1e-2}));
  EXPECT_EQ(config.get_int_list("lipschitz.d_list"), (std::vector<std::int64_t>{10, 30, 50, 7}));
  EXPECT_EQ(config.get_string_list("solver.variants"), (std::vector<std::string>{"coder", "pccm", "prcm"}));
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse("[solver]\nstep = 1\n"), Error);
  EXPECT_THROW(parse("[other]\nkind = 1\n"), Error);
  EXPECT_THROW(parse("kind = lasso\n"), Error);
  EXPECT_THROW(parse("[problem\n"), Error);
  const auto config = parse("[problem]\nn = ten\nd = 2.5\n");
  EXPECT_THROW(config.get_int("problem.n"), Error);
  EXPECT_THROW(config.get_int("problem.d"), Error);
  try {
    config.get_int("problem.n");
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
    EXPECT_EQ(exit_status_for(e.code()), kExitConfig);
  }
  EXPECT_EQ(exit_status_for(ErrorCode::kIo), kExitIo);
  EXPECT_EQ(exit_status_for(ErrorCode::kDivergence), kExitDivergence);
  EXPECT_THROW(RunConfig::load("/nonexistent/config.ini"), Error);
}

TEST(RunConfig, OverridesWin) {
  RunConfig config = parse("[solver]\nL_grid = 1,2\n[problem]\nseed = 3\n");
  Overrides o;
  o.seed = 9;
  o.L = "2.5";
  o.lambda = "0.3";
  o.budget_passes = 100.0;
  apply_overrides(config, o);
  EXPECT_EQ(config.get_seed("problem.seed"), 9u);
  EXPECT_EQ(config.get_seed("solver.permutation_seed"), 9u);
  EXPECT_EQ(config.get("solver.L_grid"), "");
  EXPECT_EQ(config.get_double("solver.L"), 2.5);
  EXPECT_EQ(config.get_double("problem.lambda"), 0.3);
  EXPECT_EQ(config.get_double("solver.budget_passes"), 100.0);
}

TEST(BuildProblem, KindsAndStarts) {
  auto config = parse("[problem]\nkind = elastic-net\nn = 20\nd = 6\nlambda2 = 0.2\n");
  const auto en = build_problem(config, 0.1);
  EXPECT_EQ(en.problem->kind(), "elastic-net");
  EXPECT_DOUBLE_EQ(en.problem->gamma(), 0.2);
  EXPECT_EQ(en.samples, 20);

  config = parse("[problem]\nkind = svm\nn = 30\nd = 5\nstart = ones\n");
  const auto svm = build_problem(config, 0.1);
  EXPECT_EQ(svm.problem->dim(), 35);
  EXPECT_EQ(svm.x0.head(5), Vector::Ones(5));
  EXPECT_EQ(svm.x0.tail(30), Vector::Zero(30));
  EXPECT_DOUBLE_EQ(dynamic_cast<const SvmProblem&>(*svm.problem).loss_weight(), 1.0 / 30.0);

  config = parse("[problem]\nkind = bilinear\nd = 4\nstart = ones\n");
  EXPECT_EQ(build_problem(config, 0.0).x0, Vector::Ones(8));
  config = parse("[problem]\nkind = qp\n");
  EXPECT_THROW(build_problem(config, 0.1), Error);
  config = parse("[problem]\nkind = svm\ndata = /nonexistent.libsvm\n");
  try {
    build_problem(config, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(exit_status_for(e.code()), kExitIo);
  }
}

TEST(BuildProblem, ReadsLibsvmWithSampleCap) {
  SyntheticOptions o;
  o.n = 40;
  o.d = 7;
  const auto path = temp_path("data.libsvm");
  save_libsvm(path, generate_synthetic(o));
  auto config = parse("[problem]\nkind = svm\nmax_samples = 25\ndata = " + path + "\n");
  const auto built = build_problem(config, 0.1);
  EXPECT_EQ(built.samples, 25);
  std::filesystem::remove(path);
}

TEST(ResolveL, GridAnchors) {
  const auto config = parse("[problem]\nn = 50\nd = 5\n[solver]\nL_grid = 1,2,3\n");
  const auto built = build_problem(config, 0.1);
  EXPECT_EQ(resolve_L_values(config, *built.problem, built.samples), (std::vector<double>{0.2, 0.4, 0.6000000000000001}));
  auto by_m = parse("[problem]\nn = 50\nd = 5\n[solver]\nL_grid = 0.5\nL_grid_base = M\n");
  const double M = problem_lipschitz(*built.problem).M;
  EXPECT_DOUBLE_EQ(resolve_L_values(by_m, *built.problem, 50).front(), 0.5 * M);
  const auto fixed = parse("[solver]\nL = 3\n");
  EXPECT_EQ(resolve_L_values(fixed, *built.problem, 50), (std::vector<double>{3.0}));
  const auto automatic = RunConfig();
  EXPECT_DOUBLE_EQ(resolve_L_values(automatic, *built.problem, 50).front(), problem_lipschitz(*built.problem).L);
}

TEST(Commands, SolveWritesTraceAndSignalsDivergence) {
  const auto out = temp_path("pccm.csv");
  auto config = parse("[problem]\nkind = bilinear\nd = 5\nstart = ones\n[solver]\nvariant = pccm\nL = 1\n"
                      "iterations = 2000\ntrace_every = 20\n[output]\npath = " + out + "\n");
  std::ostringstream log;
  std::ostringstream err;
  EXPECT_EQ(cmd_solve(config, 1, log, err), kExitDivergence);
  EXPECT_NE(err.str().find("divergence"), std::string::npos);
  std::ifstream in(out);
  const auto table = read_csv(in);
  ASSERT_GT(table.rows.size(), 4u);
  const auto dist = table.column("dist_sq");
  EXPECT_GT(parse_double(table.rows.back()[dist]), 100.0 * parse_double(table.rows.front()[dist]));

  config.set("solver.variant", "coder");
  EXPECT_EQ(cmd_solve(config, 1, log, err), kExitSuccess);
  config.set("output.path", "/nonexistent/dir/x.csv");
  EXPECT_EQ(cmd_solve(config, 1, log, err), kExitIo);
  config.set("solver.variant", "newton");
  EXPECT_EQ(cmd_solve(config, 1, log, err), kExitConfig);
  std::filesystem::remove(out);
}

TEST(Commands, SolveGridWritesSubTraces) {
  const auto out = temp_path("grid.csv");
  auto config = parse("[problem]\nn = 30\nd = 6\n[solver]\nL_grid = 1,2\nL_grid_base = L\niterations = 5\n"
                      "[output]\npath = " + out + "\n");
  std::ostringstream log;
  std::ostringstream err;
  ASSERT_EQ(cmd_solve(config, 2, log, err), kExitSuccess) << err.str();
  std::ifstream in(out);
  const auto table = read_csv(in);
  EXPECT_EQ(table.header.front(), "L");
  EXPECT_EQ(table.rows.size(), 2u * 2u * 5u);
  EXPECT_NE(table.rows.front()[0], table.rows.back()[0]);
  bool seeds_recorded = false;
  for (const auto& c : table.comments) seeds_recorded = seeds_recorded || c == "problem.seed = 1";
  EXPECT_TRUE(seeds_recorded);
  std::filesystem::remove(out);
}

TEST(Commands, BenchIsByteIdenticalAcrossRunsAndJobs) {
  const auto first = temp_path("bench1.csv");
  const auto second = temp_path("bench2.csv");
  const std::string body = "[problem]\nkind = svm\nn = 40\nd = 8\nlambda = 1e-4,1e-2\n[solver]\nL_grid = 1,2\n"
                           "budget_passes = 40\niterations = 100\ntrace_every = 5\n[reference]\nbudget_passes = 2000\n";
  std::ostringstream log;
  std::ostringstream err;
  auto config = parse(body + "[output]\npath = " + first + "\n");
  ASSERT_EQ(cmd_bench(config, 1, log, err), kExitSuccess) << err.str();
  config.set("output.path", second);
  ASSERT_EQ(cmd_bench(config, 4, log, err), kExitSuccess) << err.str();
  const std::string a = slurp(first);
  const std::string b = slurp(second);
  const auto strip = [](std::string s) {
    const auto pos = s.find("output.path");
    return s.erase(pos, s.find('\n', pos) - pos);
  };
  EXPECT_EQ(strip(a), strip(b));
  std::istringstream in(a);
  const auto table = read_csv(in);
  std::set<std::string> variants;
  for (const auto& row : table.rows) variants.insert(row[0]);
  EXPECT_EQ(variants, (std::set<std::string>{"coder", "pccm", "prcm"}));
  const auto summary = read_csv(*std::make_unique<std::ifstream>(temp_path("bench2.summary.csv")));
  EXPECT_EQ(summary.rows.size(), 2u * 3u * 2u);
  for (const auto& p : {first, second, temp_path("bench1.summary.csv"), temp_path("bench2.summary.csv")}) {
    std::filesystem::remove(p);
  }
}

TEST(Commands, LipschitzExampleAndGenData) {
  const auto out = temp_path("lip.csv");
  auto config = parse("[lipschitz]\nmode = example\nt_list = 1,2,10\n[output]\npath = " + out + "\n");
  std::ostringstream log;
  std::ostringstream err;
  ASSERT_EQ(cmd_lipschitz(config, 1, log, err), kExitSuccess) << err.str();
  std::ifstream in(out);
  const auto table = read_csv(in);
  ASSERT_EQ(table.rows.size(), 3u);
  for (const auto& row : table.rows) {
    const double t = parse_double(row[0]);
    EXPECT_NEAR(parse_double(row[table.column("M_sq")]), t * t + 1.0 / (t * t), 1e-9);
    EXPECT_LE(parse_double(row[table.column("L_sq")]), parse_double(row[table.column("trace_bound")]) + 1e-9);
  }

  const auto data = temp_path("gen.libsvm");
  config = parse("[problem]\nn = 30\nd = 9\n[output]\npath = " + data + "\n");
  ASSERT_EQ(cmd_gen_data(config, log, err), kExitSuccess);
  const std::string text = slurp(data);
  ASSERT_EQ(cmd_gen_data(config, log, err), kExitSuccess);
  EXPECT_EQ(slurp(data), text);
  const auto parsed = load_libsvm(data);
  EXPECT_EQ(parsed.features.rows(), 30);
  config.set("output.path", "/nonexistent/dir/gen.libsvm");
  EXPECT_EQ(cmd_gen_data(config, log, err), kExitIo);
  std::filesystem::remove(out);
  std::filesystem::remove(data);
}
