// coder-bench: solve, bench, lipschitz and gen-data front end.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "coder/bench.hpp"

namespace {

struct Flags {
  std::string config_path;
  unsigned jobs = 1;
  coder::Overrides overrides;
};

void add_common(CLI::App* cmd, Flags& flags) {
  cmd->add_option("--config", flags.config_path, "INI config file");
  cmd->add_option("--out", flags.overrides.out, "Output path");
  cmd->add_option("--seed", flags.overrides.seed, "Master seed for data, sampling and shuffles");
  cmd->add_option("--max-samples", flags.overrides.max_samples, "Keep only the first N samples of a data file");
  cmd->add_option("--jobs", flags.jobs, "Concurrent runs")->check(CLI::PositiveNumber);
  cmd->add_option("--budget-passes", flags.overrides.budget_passes, "Budget in passes");
  cmd->add_option("--L", flags.overrides.L, "Lipschitz constant or 'auto'");
  cmd->add_option("--L0", flags.overrides.L0, "Initial estimate for coder-pf or 'auto'");
  cmd->add_option("--lambda", flags.overrides.lambda, "Regularization, comma separated for sweeps");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cyclic coordinate dual averaging with extrapolation: solvers and benchmarks"};
  app.require_subcommand(1);
  Flags flags;
  CLI::App* solve = app.add_subcommand("solve", "Run one solver (or an L grid) and write its trace");
  CLI::App* bench = app.add_subcommand("bench", "Compare variants over a lambda sweep");
  CLI::App* lipschitz = app.add_subcommand("lipschitz", "Compute L and M for a problem, the 2x2 example or a Figure 1 sweep");
  CLI::App* gen = app.add_subcommand("gen-data", "Write a synthetic LIBSVM data set");
  for (CLI::App* cmd : {solve, bench, lipschitz, gen}) add_common(cmd, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int status = app.exit(e);
    return status == 0 ? 0 : coder::kExitConfig;
  }

  coder::RunConfig config;
  try {
    if (!flags.config_path.empty()) config = coder::RunConfig::load(flags.config_path);
    coder::apply_overrides(config, flags.overrides);
  } catch (const coder::Error& e) {
    std::cerr << "error (" << coder::to_string(e.code()) << "): " << e.what() << '\n';
    return coder::exit_status_for(e.code());
  }

  if (solve->parsed()) return coder::cmd_solve(config, flags.jobs, std::cout, std::cerr);
  if (bench->parsed()) return coder::cmd_bench(config, flags.jobs, std::cout, std::cerr);
  if (lipschitz->parsed()) return coder::cmd_lipschitz(config, flags.jobs, std::cout, std::cerr);
  return coder::cmd_gen_data(config, std::cout, std::cerr);
}
