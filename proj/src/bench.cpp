#include "coder/bench.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "coder/data_io.hpp"

namespace coder {

int exit_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig:
    case ErrorCode::kInvalidArgument: return kExitConfig;
    case ErrorCode::kDivergence: return kExitDivergence;
    case ErrorCode::kIo:
    case ErrorCode::kParse: return kExitIo;
    default: return kExitFailure;
  }
}

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

namespace {

const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> table = {
      {"problem.kind", "lasso"},
      {"problem.data", ""},
      {"problem.label_map", "sign"},
      {"problem.max_samples", "0"},
      {"problem.n", "100"},
      {"problem.d", "50"},
      {"problem.density", "1"},
      {"problem.seed", "1"},
      {"problem.labels", "random"},
      {"problem.noise", "0.3"},
      {"problem.lambda", "0.1"},
      {"problem.lambda2", "0.1"},
      {"problem.loss", "mean"},
      {"problem.block_size", "1"},
      {"problem.start", "zeros"},
      {"solver.variant", "coder"},
      {"solver.variants", "coder,pccm,prcm"},
      {"solver.L", "auto"},
      {"solver.L_grid", ""},
      {"solver.L_grid_base", "10/n"},
      {"solver.L0", "auto"},
      {"solver.gamma", "auto"},
      {"solver.iterations", "1000"},
      {"solver.budget_passes", "inf"},
      {"solver.permutation", "fixed"},
      {"solver.permutation_seed", "0"},
      {"solver.seed", "0"},
      {"solver.trace_every", "1"},
      {"solver.divergence_growth", "1e6"},
      {"reference.policy", "compute"},
      {"reference.budget_passes", "40000"},
      {"reference.tol", "1e-10"},
      {"output.path", "out.csv"},
      {"output.summary", ""},
      {"output.wall_time", "false"},
      {"lipschitz.mode", "figure1"},
      {"lipschitz.n_list", "100"},
      {"lipschitz.d_list", "10:100:10"},
      {"lipschitz.repeats", "10"},
      {"lipschitz.seed", "1"},
      {"lipschitz.t_list", "1,2,10"},
  };
  return table;
}

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::kConfig, what); }

std::string trim(std::string_view text) {
  const auto begin = text.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  const auto end = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(begin, end - begin + 1));
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

double to_double(const std::string& key, const std::string& text) {
  try {
    return parse_double(trim(text));
  } catch (const Error&) {
    config_error("config key '" + key + "': '" + text + "' is not a number");
  }
}

std::int64_t to_int(const std::string& key, const std::string& text) {
  const double value = to_double(key, text);
  if (value != std::floor(value) || std::abs(value) > 9e15) {
    config_error("config key '" + key + "': '" + text + "' is not an integer");
  }
  return static_cast<std::int64_t>(value);
}

}  // namespace

RunConfig::RunConfig() : values_(defaults()) {}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) config_error("unknown config key '" + key + "'");
  it->second = trim(value);
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) config_error("unknown config key '" + key + "'");
  return it->second;
}

RunConfig RunConfig::parse(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    config_error(std::string("config parse error: ") + e.what());
  }
  RunConfig config;
  for (const auto& [section, children] : tree) {
    if (children.empty()) config_error("config key '" + section + "' must appear inside a section");
    for (const auto& [key, node] : children) config.set(section + "." + key, node.get_value<std::string>());
  }
  return config;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config file '" + path + "'");
  return parse(in);
}

double RunConfig::get_double(const std::string& key) const { return to_double(key, get(key)); }

std::int64_t RunConfig::get_int(const std::string& key) const { return to_int(key, get(key)); }

std::uint64_t RunConfig::get_seed(const std::string& key) const {
  const std::string& text = get(key);
  std::uint64_t value = 0;
  std::istringstream in(text);
  if (!(in >> value) || !in.eof()) config_error("config key '" + key + "': '" + text + "' is not a seed");
  return value;
}

std::vector<double> RunConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get(key))) out.push_back(to_double(key, item));
  return out;
}

std::vector<std::int64_t> RunConfig::get_int_list(const std::string& key) const {
  std::vector<std::int64_t> out;
  for (const auto& item : split_list(get(key))) {
    const auto first = item.find(':');
    if (first == std::string::npos) {
      out.push_back(to_int(key, item));
      continue;
    }
    const auto second = item.find(':', first + 1);
    const std::int64_t start = to_int(key, item.substr(0, first));
    const std::int64_t stop = to_int(key, item.substr(first + 1, second == std::string::npos ? std::string::npos
                                                                                            : second - first - 1));
    const std::int64_t step = second == std::string::npos ? 1 : to_int(key, item.substr(second + 1));
    if (step <= 0) config_error("config key '" + key + "': range step must be positive");
    for (std::int64_t v = start; v <= stop; v += step) out.push_back(v);
  }
  return out;
}

std::vector<std::string> RunConfig::get_string_list(const std::string& key) const { return split_list(get(key)); }

std::vector<std::string> RunConfig::describe() const {
  std::vector<std::string> lines;
  for (const auto& [key, value] : values_) lines.push_back(key + " = " + value);
  return lines;
}

void apply_overrides(RunConfig& config, const Overrides& o) {
  if (o.out) config.set("output.path", *o.out);
  if (o.seed) {
    const std::string s = std::to_string(*o.seed);
    for (const char* key : {"problem.seed", "solver.seed", "solver.permutation_seed", "lipschitz.seed"}) {
      config.set(key, s);
    }
  }
  if (o.max_samples) config.set("problem.max_samples", std::to_string(*o.max_samples));
  if (o.budget_passes) config.set("solver.budget_passes", format_double(*o.budget_passes));
  if (o.L) {
    config.set("solver.L", *o.L);
    config.set("solver.L_grid", "");
  }
  if (o.L0) config.set("solver.L0", *o.L0);
  if (o.lambda) config.set("problem.lambda", *o.lambda);
}

// ---------------------------------------------------------------------------
// Problems
// ---------------------------------------------------------------------------

namespace {

Vector project_start(const GmviProblem& problem, Vector x) {
  const auto& part = problem.partition();
  for (Index b = 0; b < part.num_blocks(); ++b) {
    const Vector z = x.segment(part.offset(b), part.size(b));
    problem.prox_block(b, z, 0.0, x.segment(part.offset(b), part.size(b)));
  }
  return x;
}

LabeledDataset load_dataset(const RunConfig& config, bool raw) {
  ParseOptions options;
  options.max_samples = config.get_int("problem.max_samples");
  const std::string map = config.get("problem.label_map");
  if (map != "sign" && map != "mnist") config_error("problem.label_map must be 'sign' or 'mnist'");
  if (raw || map == "mnist") {
    LabeledDataset data = load_libsvm(config.get("problem.data"), options, true);
    if (!raw) data.labels = remap_mnist_labels(data.labels);
    return data;
  }
  return load_libsvm(config.get("problem.data"), options, false);
}

SyntheticOptions synthetic_options(const RunConfig& config) {
  SyntheticOptions s;
  s.n = config.get_int("problem.n");
  s.d = config.get_int("problem.d");
  s.density = config.get_double("problem.density");
  s.seed = config.get_seed("problem.seed");
  s.noise = config.get_double("problem.noise");
  const std::string labels = config.get("problem.labels");
  if (labels == "random") {
    s.labels = LabelModel::kRandom;
  } else if (labels == "planted") {
    s.labels = LabelModel::kPlanted;
  } else {
    config_error("problem.labels must be 'random' or 'planted'");
  }
  if (s.n < 1 || s.d < 1) config_error("problem.n and problem.d must be >= 1");
  return s;
}

}  // namespace

BuiltProblem build_problem(const RunConfig& config, double lambda) {
  const std::string kind = config.get("problem.kind");
  const Index block_size = config.get_int("problem.block_size");
  if (block_size < 1) config_error("problem.block_size must be >= 1");
  BuiltProblem built;

  if (kind == "lasso" || kind == "elastic-net") {
    SparseMatrix A;
    Vector b;
    if (config.get("problem.data").empty()) {
      const auto s = synthetic_options(config);
      A = s.density >= 1.0 ? SparseMatrix::from_dense(gaussian_matrix(s.n, s.d, derive_seed(s.seed, {1})))
                           : gaussian_sparse(s.n, s.d, s.density, derive_seed(s.seed, {1}));
      Vector w = Vector::Zero(s.d);
      w.head(std::max<Index>(1, s.d / 5)).setOnes();
      std::mt19937_64 rng(derive_seed(s.seed, {2}));
      std::normal_distribution<double> normal(0.0, 1.0);
      b = csr_matvec(A, w);
      for (Index i = 0; i < b.size(); ++i) b(i) += s.noise * normal(rng);
    } else {
      const LabeledDataset data = load_dataset(config, true);
      A = data.features;
      b = Eigen::Map<const Vector>(data.labels.data(), static_cast<Index>(data.labels.size()));
    }
    built.samples = A.rows();
    auto partition = BlockPartition::uniform(A.cols(), block_size);
    if (kind == "lasso") {
      built.problem = std::make_unique<LeastSquaresProblem>(make_lasso(std::move(A), std::move(b), lambda, partition));
    } else {
      built.problem = std::make_unique<LeastSquaresProblem>(
          make_elastic_net(std::move(A), std::move(b), lambda, config.get_double("problem.lambda2"), partition));
    }
  } else if (kind == "svm") {
    LabeledDataset data =
        config.get("problem.data").empty() ? generate_synthetic(synthetic_options(config))
                                           : normalize_rows(load_dataset(config, false));
    const Index n = data.features.rows();
    if (n == 0) config_error("svm: the dataset has no samples");
    const std::string loss = config.get("problem.loss");
    if (loss != "sum" && loss != "mean") config_error("problem.loss must be 'sum' or 'mean'");
    const double weight = loss == "mean" ? 1.0 / static_cast<double>(n) : 1.0;
    SparseMatrix A_bar = build_svm_matrix(data);
    auto partition = BlockPartition::uniform(A_bar.cols() + A_bar.rows(), block_size);
    built.samples = n;
    built.problem = std::make_unique<SvmProblem>(make_l1_svm(std::move(A_bar), lambda, partition, weight));
  } else if (kind == "bilinear") {
    const Index d = config.get_int("problem.d");
    if (d < 1) config_error("problem.d must be >= 1");
    built.samples = d;
    built.problem = std::make_unique<BilinearToyProblem>(make_bilinear_toy(d));
  } else {
    config_error("problem.kind must be one of lasso, elastic-net, svm, bilinear");
  }

  const std::string start = config.get("problem.start");
  if (start == "zeros") {
    built.x0 = default_start(*built.problem);
  } else if (start == "ones") {
    built.x0 = project_start(*built.problem, Vector::Ones(built.problem->dim()));
  } else {
    config_error("problem.start must be 'zeros' or 'ones'");
  }
  return built;
}

LipschitzReport problem_lipschitz(const GmviProblem& problem) {
  const Index dim = problem.dim();
  const auto& part = problem.partition();
  if (const auto* ls = dynamic_cast<const LeastSquaresProblem*>(&problem)) {
    if (dim <= kDenseCap) return lipschitz_constants_linear(ls->gram(), part);
    const LinearApply normal = [ls](const Vector& v) -> Vector {
      return csr_tmatvec(ls->design(), csr_matvec(ls->design(), v));
    };
    return lipschitz_bound_matrix_free(normal, normal, dim, part);
  }
  if (const auto* svm = dynamic_cast<const SvmProblem*>(&problem)) {
    if (dim <= kDenseCap) return lipschitz_constants_linear(svm->linear_operator(), part);
    const Index d = svm->num_features();
    const Index n = svm->num_samples();
    const double w = svm->loss_weight();
    const LinearApply apply = [svm, d, n, w](const Vector& z) -> Vector {
      Vector out(d + n);
      out.head(d) = w * csr_tmatvec(svm->matrix(), z.tail(n));
      out.tail(n) = -w * csr_matvec(svm->matrix(), z.head(d));
      return out;
    };
    const LinearApply apply_t = [apply](const Vector& z) -> Vector { return -apply(z); };
    return lipschitz_bound_matrix_free(apply, apply_t, dim, part);
  }
  if (const auto* toy = dynamic_cast<const BilinearToyProblem*>(&problem)) {
    return lipschitz_constants_linear(toy->linear_operator(), part);
  }
  throw Error(ErrorCode::kInvalidArgument, "problem_lipschitz: no linear structure known for this problem");
}

std::vector<double> resolve_L_values(const RunConfig& config, const GmviProblem& problem, Index samples) {
  const auto grid = config.get_double_list("solver.L_grid");
  std::optional<LipschitzReport> report;
  const auto lipschitz = [&]() -> const LipschitzReport& {
    if (!report) report = problem_lipschitz(problem);
    return *report;
  };
  if (grid.empty()) {
    const std::string L = config.get("solver.L");
    const double value = L == "auto" ? lipschitz().L : config.get_double("solver.L");
    if (!(value > 0.0)) config_error("solver.L must be positive");
    return {value};
  }
  const std::string base_text = config.get("solver.L_grid_base");
  double base = 0.0;
  if (base_text == "10/n") {
    base = 10.0 / static_cast<double>(std::max<Index>(samples, 1));
  } else if (base_text == "M") {
    base = lipschitz().M;
  } else if (base_text == "L") {
    base = lipschitz().L;
  } else {
    base = config.get_double("solver.L_grid_base");
  }
  std::vector<double> values;
  for (double k : grid) {
    if (!(k > 0.0)) config_error("solver.L_grid multipliers must be positive");
    values.push_back(base * k);
  }
  return values;
}

SolverConfig make_solver_config(const RunConfig& config, Variant variant, double L, const GmviProblem& problem) {
  SolverConfig s;
  s.variant = variant;
  s.L = L;
  const std::string L0 = config.get("solver.L0");
  s.L0 = L0 == "auto" ? L : config.get_double("solver.L0");
  const std::string gamma = config.get("solver.gamma");
  if (gamma != "auto") s.gamma = config.get_double("solver.gamma");
  s.max_iterations = config.get_int("solver.iterations");
  s.max_passes = config.get_double("solver.budget_passes");
  s.permutation.kind = parse_permutation(config.get("solver.permutation"));
  s.permutation.seed = config.get_seed("solver.permutation_seed");
  s.seed = config.get_seed("solver.seed");
  s.trace_every = config.get_int("solver.trace_every");
  s.divergence_growth = config.get_double("solver.divergence_growth");
  try {
    s.validate(problem);
  } catch (const Error& e) {
    config_error(e.what());
  }
  return s;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

namespace {

template <typename Fn>
void parallel_for(std::size_t count, unsigned jobs, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(count)));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

std::optional<ReferenceSolution> make_reference(const RunConfig& config, const BuiltProblem& built) {
  const std::string policy = config.get("reference.policy");
  if (policy == "none") return std::nullopt;
  if (policy != "compute") config_error("reference.policy must be 'compute' or 'none'");
  ReferenceOptions options;
  const double budget = config.get_double("solver.budget_passes");
  options.max_passes = config.get_double("reference.budget_passes");
  if (std::isfinite(budget)) options.max_passes = std::max(options.max_passes, 10.0 * budget);
  options.tol = config.get_double("reference.tol");
  options.x0 = built.x0;
  return compute_reference(*built.problem, options);
}

RunOutcome run_one(const BuiltProblem& built, const SolverConfig& solver, const ReferenceSolution* reference,
                   double lambda) {
  RunOutcome outcome;
  outcome.variant = solver.variant;
  outcome.lambda = lambda;
  outcome.L = solver.variant == Variant::kCoderPf ? solver.L0 : solver.L;
  try {
    outcome.result = solve(*built.problem, solver, built.x0, SolveOptions{reference, {}});
  } catch (const DivergenceError& e) {
    outcome.diverged = true;
    outcome.message = e.what();
    if (e.partial()) outcome.result = *e.partial();
  }
  if (reference != nullptr && reference->f_star) {
    if (const auto value = built.problem->primal_value(built.x0)) outcome.initial_gap = *value - *reference->f_star;
  }
  for (auto it = outcome.result.trace.rbegin(); it != outcome.result.trace.rend(); ++it) {
    if (it->iterate == IterateKind::kAverage) {
      outcome.final_avg_gap = it->primal_gap;
      break;
    }
  }
  return outcome;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path + "' for writing");
  return out;
}

void close_output(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::kIo, "write to '" + path + "' failed");
}

std::string summary_path(const RunConfig& config) {
  const std::string explicit_path = config.get("output.summary");
  if (!explicit_path.empty()) return explicit_path;
  std::string path = config.get("output.path");
  if (path.size() > 4 && path.substr(path.size() - 4) == ".csv") path.resize(path.size() - 4);
  return path + ".summary.csv";
}

bool wall_time(const RunConfig& config) {
  const std::string v = config.get("output.wall_time");
  if (v != "true" && v != "false") config_error("output.wall_time must be 'true' or 'false'");
  return v == "true";
}

std::vector<std::string> trace_row(const TraceRecord& record, bool keep_time) {
  TraceRecord r = record;
  if (!keep_time) r.time_s = 0.0;
  return trace_csv_fields(r);
}

void write_header_comments(CsvWriter& csv, const RunConfig& config, std::string_view command) {
  csv.comment("coder-bench " + std::string(command));
  for (const auto& line : config.describe()) csv.comment(line);
}

std::string summary_line(const RunOutcome& o) {
  std::ostringstream line;
  line << "variant=" << to_string(o.variant) << " lambda=" << format_double(o.lambda) << " L=" << format_double(o.L)
       << " status=" << (o.diverged ? "diverged" : "ok") << " iterations=" << o.result.iterations
       << " passes=" << format_double(o.result.passes) << " doublings=" << o.result.doubling_count
       << " final_avg_gap=" << format_double(o.final_avg_gap)
       << " avg_norm=" << format_double(o.result.x_avg.size() > 0 ? o.result.x_avg.norm() : kNaN);
  return line.str();
}

}  // namespace

BenchReport run_benchmark(const RunConfig& config, unsigned jobs) {
  const auto lambdas = config.get_double_list("problem.lambda");
  if (lambdas.empty()) config_error("problem.lambda needs at least one value");
  std::vector<Variant> variants;
  for (const auto& name : config.get_string_list("solver.variants")) variants.push_back(parse_variant(name));
  if (variants.empty()) config_error("solver.variants needs at least one variant");

  std::vector<BuiltProblem> problems(lambdas.size());
  std::vector<std::optional<ReferenceSolution>> references(lambdas.size());
  std::vector<std::vector<double>> L_values(lambdas.size());
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    problems[i] = build_problem(config, lambdas[i]);
    L_values[i] = resolve_L_values(config, *problems[i].problem, problems[i].samples);
  }
  parallel_for(lambdas.size(), jobs, [&](std::size_t i) { references[i] = make_reference(config, problems[i]); });

  struct Task {
    std::size_t lambda_index;
    Variant variant;
    double L;
  };
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    for (Variant v : variants) {
      for (double L : L_values[i]) tasks.push_back({i, v, L});
    }
  }
  std::vector<SolverConfig> solver_configs;
  for (const auto& t : tasks) {
    solver_configs.push_back(make_solver_config(config, t.variant, t.L, *problems[t.lambda_index].problem));
  }

  BenchReport report;
  report.runs.resize(tasks.size());
  parallel_for(tasks.size(), jobs, [&](std::size_t j) {
    const auto& t = tasks[j];
    const auto& ref = references[t.lambda_index];
    report.runs[j] = run_one(problems[t.lambda_index], solver_configs[j], ref ? &*ref : nullptr, lambdas[t.lambda_index]);
  });

  // Tuning: per (lambda, variant) keep the best non-diverged final gap.
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    for (Variant v : variants) {
      RunOutcome* best = nullptr;
      RunOutcome* fallback = nullptr;
      for (std::size_t j = 0; j < tasks.size(); ++j) {
        if (tasks[j].lambda_index != i || tasks[j].variant != v) continue;
        RunOutcome& run = report.runs[j];
        if (fallback == nullptr) fallback = &run;
        if (run.diverged) continue;
        if (best == nullptr || run.final_avg_gap < best->final_avg_gap ||
            (std::isnan(best->final_avg_gap) && !std::isnan(run.final_avg_gap))) {
          best = &run;
        }
      }
      if (best == nullptr) best = fallback;
      if (best != nullptr) best->selected = true;
    }
    if (references[i]) report.references.emplace(lambdas[i], *references[i]);
  }
  return report;
}

void write_bench_trace(std::ostream& out, const RunConfig& config, const BenchReport& report, bool selected_only) {
  std::vector<std::string> header = {"variant", "lambda", "L"};
  const auto& trace_header = trace_csv_header();
  header.insert(header.end(), trace_header.begin(), trace_header.end());
  CsvWriter csv(out, header);
  write_header_comments(csv, config, "bench");
  const bool keep_time = wall_time(config);
  for (const auto& run : report.runs) {
    if (selected_only && !run.selected) continue;
    for (const auto& record : run.result.trace) {
      std::vector<std::string> fields = {std::string(to_string(run.variant)), format_double(run.lambda),
                                         format_double(run.L)};
      const auto rest = trace_row(record, keep_time);
      fields.insert(fields.end(), rest.begin(), rest.end());
      csv.row(fields);
    }
  }
}

void write_bench_summary(std::ostream& out, const BenchReport& report) {
  CsvWriter csv(out, {"variant", "lambda", "L", "status", "selected", "iterations", "passes", "doublings",
                      "initial_gap", "final_avg_gap"});
  for (const auto& run : report.runs) {
    csv.row({std::string(to_string(run.variant)), format_double(run.lambda), format_double(run.L),
             run.diverged ? "diverged" : "ok", run.selected ? "1" : "0", std::to_string(run.result.iterations),
             format_double(run.result.passes), std::to_string(run.result.doubling_count),
             format_double(run.initial_gap), format_double(run.final_avg_gap)});
  }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

namespace {

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return exit_status_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace

int cmd_solve(const RunConfig& config, unsigned jobs, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const auto lambdas = config.get_double_list("problem.lambda");
    if (lambdas.size() != 1) config_error("solve takes exactly one problem.lambda value (use bench for sweeps)");
    const Variant variant = parse_variant(config.get("solver.variant"));
    const BuiltProblem built = build_problem(config, lambdas.front());
    const auto L_values = resolve_L_values(config, *built.problem, built.samples);
    std::vector<SolverConfig> solvers;
    for (double L : L_values) solvers.push_back(make_solver_config(config, variant, L, *built.problem));
    const auto reference = make_reference(config, built);

    std::vector<RunOutcome> runs(solvers.size());
    parallel_for(solvers.size(), jobs, [&](std::size_t i) {
      runs[i] = run_one(built, solvers[i], reference ? &*reference : nullptr, lambdas.front());
    });

    const bool sweep = L_values.size() > 1;
    const std::string path = config.get("output.path");
    std::ofstream out = open_output(path);
    std::vector<std::string> header;
    if (sweep) header.push_back("L");
    const auto& trace_header = trace_csv_header();
    header.insert(header.end(), trace_header.begin(), trace_header.end());
    CsvWriter csv(out, header);
    write_header_comments(csv, config, "solve");
    const bool keep_time = wall_time(config);
    bool any_diverged = false;
    for (const auto& run : runs) {
      for (const auto& record : run.result.trace) {
        std::vector<std::string> fields;
        if (sweep) fields.push_back(format_double(run.L));
        const auto rest = trace_row(record, keep_time);
        fields.insert(fields.end(), rest.begin(), rest.end());
        csv.row(fields);
      }
      log << summary_line(run) << '\n';
      if (run.diverged) {
        err << run.message << '\n';
        any_diverged = true;
      }
    }
    close_output(out, path);
    return any_diverged ? kExitDivergence : kExitSuccess;
  });
}

int cmd_bench(const RunConfig& config, unsigned jobs, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const BenchReport report = run_benchmark(config, jobs);
    const std::string path = config.get("output.path");
    std::ofstream out = open_output(path);
    write_bench_trace(out, config, report, true);
    close_output(out, path);
    const std::string spath = summary_path(config);
    std::ofstream summary = open_output(spath);
    write_bench_summary(summary, report);
    close_output(summary, spath);
    for (const auto& run : report.runs) {
      if (run.selected) log << summary_line(run) << '\n';
    }
    return kExitSuccess;
  });
}

int cmd_lipschitz(const RunConfig& config, unsigned jobs, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const std::string mode = config.get("lipschitz.mode");
    const std::string path = config.get("output.path");
    std::ofstream out = open_output(path);
    if (mode == "figure1") {
      std::vector<Index> n_list;
      std::vector<Index> d_list;
      for (auto v : config.get_int_list("lipschitz.n_list")) n_list.push_back(v);
      for (auto v : config.get_int_list("lipschitz.d_list")) d_list.push_back(v);
      const Index repeats = config.get_int("lipschitz.repeats");
      if (n_list.empty() || d_list.empty() || repeats < 1) {
        config_error("lipschitz.n_list, lipschitz.d_list and lipschitz.repeats must be non-empty and positive");
      }
      const auto table = figure1_experiment(n_list, d_list, repeats, config.get_seed("lipschitz.seed"), jobs);
      CsvWriter csv(out, {"n", "d", "repeat", "L", "M"});
      write_header_comments(csv, config, "lipschitz");
      for (const auto& row : table.rows) {
        csv.row({std::to_string(row.n), std::to_string(row.d), std::to_string(row.repeat), format_double(row.L),
                 format_double(row.M)});
      }
      for (const auto& m : table.medians) {
        csv.row({std::to_string(m.n), std::to_string(m.d), "median", format_double(m.median_L),
                 format_double(m.median_M)});
        log << "n=" << m.n << " d=" << m.d << " median_L=" << format_double(m.median_L)
            << " median_M=" << format_double(m.median_M) << '\n';
      }
    } else if (mode == "example") {
      CsvWriter csv(out, {"t", "L", "M", "L_sq", "M_sq", "trace_bound"});
      write_header_comments(csv, config, "lipschitz");
      const BlockPartition partition = BlockPartition::singletons(2);
      for (double t : config.get_double_list("lipschitz.t_list")) {
        if (!(t >= 1.0)) config_error("lipschitz.t_list values must be >= 1");
        Vector u(2);
        u << 1.0 / (t * t), 1.0;
        Vector v(2);
        v << -t, 1.0 / t;
        const auto report = lipschitz_constants({u * u.transpose(), v * v.transpose()}, partition);
        const double bound = 1.0 + 1.0 / (t * t) + 1.0 / (t * t * t * t);
        csv.row({format_double(t), format_double(report.L), format_double(report.M),
                 format_double(report.L * report.L), format_double(report.M * report.M), format_double(bound)});
        log << "t=" << format_double(t) << " L=" << format_double(report.L) << " M=" << format_double(report.M)
            << '\n';
      }
    } else if (mode == "problem") {
      const auto lambdas = config.get_double_list("problem.lambda");
      const BuiltProblem built = build_problem(config, lambdas.empty() ? 0.0 : lambdas.front());
      const auto report = problem_lipschitz(*built.problem);
      CsvWriter csv(out, {"m", "L", "M", "sqrt_m_M", "method"});
      write_header_comments(csv, config, "lipschitz");
      const double bound = std::sqrt(static_cast<double>(report.m)) * report.M;
      csv.row({std::to_string(report.m), format_double(report.L), format_double(report.M), format_double(bound),
               std::string(to_string(report.method))});
      log << "m=" << report.m << " L=" << format_double(report.L) << " M=" << format_double(report.M)
          << " method=" << to_string(report.method) << '\n';
    } else {
      config_error("lipschitz.mode must be figure1, example or problem");
    }
    close_output(out, path);
    return kExitSuccess;
  });
}

int cmd_gen_data(const RunConfig& config, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const SyntheticOptions options = synthetic_options(config);
    const LabeledDataset data = generate_synthetic(options);
    const std::string path = config.get("output.path");
    save_libsvm(path, data);
    log << "wrote " << data.features.rows() << " samples with " << data.features.cols() << " features ("
        << data.features.nnz() << " nonzeros) to " << path << '\n';
    return kExitSuccess;
  });
}

}  // namespace coder
