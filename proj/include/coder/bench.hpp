#pragma once

// Run configuration and the commands behind the coder-bench executable.
//
// Config files are INI style:
//
//   [problem]   kind, data, label_map, max_samples, n, d, density, seed,
//               labels, noise, lambda, lambda2, loss, block_size, start
//   [solver]    variant, variants, L, L_grid, L_grid_base, L0, gamma,
//               iterations, budget_passes, permutation, permutation_seed,
//               seed, trace_every, divergence_growth
//   [reference] policy, budget_passes, tol
//   [output]    path, summary, wall_time
//   [lipschitz] mode, n_list, d_list, repeats, seed, t_list
//
// Unknown sections or keys are rejected. Lists are comma separated and
// integer lists also accept start:stop:step ranges.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "coder/lipschitz.hpp"
#include "coder/metrics.hpp"
#include "coder/problems.hpp"
#include "coder/solvers.hpp"

namespace coder {

/// Exit statuses of the command-line front end.
enum ExitStatus : int {
  kExitSuccess = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitDivergence = 3,
  kExitIo = 4,
};

int exit_status_for(ErrorCode code);

/// Flat key/value view of a config, keyed "section.key", with every default
/// filled in.
class RunConfig {
 public:
  RunConfig();

  static RunConfig parse(std::istream& in);
  static RunConfig load(const std::string& path);

  /// Throws a config error for unknown keys.
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  std::string get_string(const std::string& key) const { return get(key); }
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_seed(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<std::int64_t> get_int_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

  /// Writes every setting as "# section.key = value" comment lines.
  std::vector<std::string> describe() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Command-line flags that take precedence over config values.
struct Overrides {
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> max_samples;
  std::optional<double> budget_passes;
  std::optional<std::string> L;
  std::optional<std::string> L0;
  std::optional<std::string> lambda;
};

void apply_overrides(RunConfig& config, const Overrides& overrides);

struct BuiltProblem {
  std::unique_ptr<GmviProblem> problem;
  Vector x0;
  /// Sample count n used by the 10/n tuning grid.
  Index samples = 0;
};

/// Builds the problem described by [problem] with the given lambda.
BuiltProblem build_problem(const RunConfig& config, double lambda);

/// Lipschitz report for an instance: exact when the stacked dimension fits
/// the dense cap, otherwise the matrix-free bound.
LipschitzReport problem_lipschitz(const GmviProblem& problem);

/// The L values a run uses: the single L setting, or L_grid multiples of
/// L_grid_base ("10/n", "M" or a number).
std::vector<double> resolve_L_values(const RunConfig& config, const GmviProblem& problem, Index samples);

SolverConfig make_solver_config(const RunConfig& config, Variant variant, double L, const GmviProblem& problem);

struct RunOutcome {
  Variant variant = Variant::kCoder;
  double lambda = 0.0;
  double L = 0.0;
  bool diverged = false;
  std::string message;
  SolveResult result;
  double initial_gap = kNaN;
  double final_avg_gap = kNaN;
  bool selected = false;
};

struct BenchReport {
  std::vector<RunOutcome> runs;
  std::map<double, ReferenceSolution> references;
};

/// Runs every (lambda, variant, L) combination on up to `jobs` threads and
/// marks, per (lambda, variant), the non-diverged run with the smallest
/// final averaged primal gap as selected.
BenchReport run_benchmark(const RunConfig& config, unsigned jobs);

/// Merged CSV: variant, lambda, L, then the trace columns. With
/// selected_only only the tuned run of each (lambda, variant) is written.
void write_bench_trace(std::ostream& out, const RunConfig& config, const BenchReport& report, bool selected_only);
void write_bench_summary(std::ostream& out, const BenchReport& report);

/// Subcommands. Each returns an ExitStatus and reports problems on `err`.
int cmd_solve(const RunConfig& config, unsigned jobs, std::ostream& log, std::ostream& err);
int cmd_bench(const RunConfig& config, unsigned jobs, std::ostream& log, std::ostream& err);
int cmd_lipschitz(const RunConfig& config, unsigned jobs, std::ostream& log, std::ostream& err);
int cmd_gen_data(const RunConfig& config, std::ostream& log, std::ostream& err);

}  // namespace coder
