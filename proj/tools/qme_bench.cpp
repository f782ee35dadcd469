// qme_bench: solves the CARE/GCARE/UQME test problems with the divide-and-conquer
// solver or a dense reference and prints CSV rows.
//
// Exit status: 0 success, 2 residual above budget or iteration limit hit,
// 3 structural precondition violated (see qme::is_structural), 1 bad input.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qme/bench.hpp"
#include "qme/hodlr.hpp"

namespace bench = qme::bench;
using nlohmann::json;

namespace {

constexpr int kExitTolerance = 2;
constexpr int kExitStructural = 3;

struct Options {
  std::string problem;
  std::vector<qme::Index> sizes{256};
  std::uint64_t seed = 1;
  qme::Index nmin = 256;
  double tau_sigma = 1e-12;
  double tau_care = 1e-8;
  double tau_uqme = 1e-8;
  int t_max = 100;
  bool parallel = false;
  bool dense_fallback = false;
  std::vector<std::string> methods{"dac"};
  std::string oracle;
  double check_tol = 1e-6;
  std::string equation = "care";
  std::vector<std::string> inputs;
  std::string out;
  std::string log;
  std::string save;
};

class Logger {
 public:
  explicit Logger(const std::string& path) {
    if (path.empty()) return;
    file_ = std::make_unique<std::ofstream>(path);
    if (!*file_) throw qme::Error(qme::ErrorCode::InvalidInput, "cannot open log file " + path);
  }
  void write(const json& j) {
    if (file_) *file_ << j.dump() << '\n';
  }

 private:
  std::unique_ptr<std::ofstream> file_;
};

class CsvSink {
 public:
  explicit CsvSink(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw qme::Error(qme::ErrorCode::InvalidInput, "cannot open " + path);
    }
    emit(bench::csv_header());
  }
  void row(const bench::BenchRow& r) { emit(bench::csv_row(r)); }

 private:
  void emit(const std::string& line) {
    std::cout << line << '\n';
    if (file_) *file_ << line << '\n';
  }
  std::unique_ptr<std::ofstream> file_;
};

bench::ProblemSpec make_spec(const Options& o, qme::Index n) {
  bench::ProblemSpec s;
  s.family = o.inputs.empty() ? o.problem : "file";
  s.n = n;
  s.seed = o.seed;
  s.files = o.inputs;
  s.file_equation = o.equation == "uqme" ? bench::Equation::Uqme : bench::Equation::Care;
  s.config.n_min = o.nmin;
  s.config.tau_sigma = o.tau_sigma;
  s.config.tau_care = o.tau_care;
  s.config.tau_uqme = o.tau_uqme;
  s.config.t_max = o.t_max;
  s.config.parallel_children = o.parallel;
  s.config.dense_fallback = o.dense_fallback;
  return s;
}

json node_json(const qme::dac::NodeRecord& r) {
  return {{"event", "node"},       {"path", r.path},
          {"depth", r.depth},      {"size", r.size},
          {"leaf", r.leaf},        {"correction_rank", r.correction_rank},
          {"iterations", r.iterations}, {"residual", r.residual},
          {"seconds", r.seconds},  {"converged", r.converged},
          {"fallback", r.fallback}};
}

json row_json(const bench::BenchRow& r, const std::string& family, double budget) {
  return {{"event", "result"},     {"problem", family},
          {"n", r.n},              {"method", r.method},
          {"time_s", r.time_s},    {"res", r.res},
          {"res_absolute", r.res_absolute}, {"hodlr_rank", r.hodlr_rank},
          {"iterations", r.iterations},     {"budget", budget}};
}

int exit_status(const qme::Error& e) {
  if (e.code() == qme::ErrorCode::InvalidInput) return 1;
  return qme::is_structural(e.code()) ? kExitStructural : kExitTolerance;
}

int error_exit(const qme::Error& e, Logger& log, const std::string& family, qme::Index n) {
  const bool structural = qme::is_structural(e.code());
  std::cerr << "qme_bench: " << e.what() << '\n';
  log.write({{"event", "error"},
             {"problem", family},
             {"n", n},
             {"code", std::string(qme::to_string(e.code()))},
             {"path", e.path()},
             {"structural", structural},
             {"message", e.what()}});
  return exit_status(e);
}

/// One run_bench call with logging; returns the exit status for this row.
int run_one(const bench::ProblemSpec& spec, bench::Method method, CsvSink& csv, Logger& log,
            const std::string& save_path) {
  try {
    const bench::BenchOutcome out = bench::run_bench(spec, method);
    for (const auto& node : out.report.nodes) log.write(node_json(node));
    const double budget = bench::residual_budget(spec);
    log.write(row_json(out.row, spec.family, budget));
    csv.row(out.row);
    if (!save_path.empty()) {
      std::ofstream f(save_path, std::ios::binary);
      if (!f) throw qme::Error(qme::ErrorCode::InvalidInput, "cannot open " + save_path);
      qme::save(f, out.X);
    }
    if (out.row.res > budget) {
      std::cerr << "qme_bench: residual " << out.row.res << " above budget " << budget << '\n';
      return kExitTolerance;
    }
    return 0;
  } catch (const qme::Error& e) {
    return error_exit(e, log, spec.family, spec.n);
  }
}

void require_equation(const bench::ProblemSpec& spec, bench::Equation eq, bool generalized) {
  if (bench::equation_of(spec) != eq)
    throw qme::Error(qme::ErrorCode::InvalidInput, "problem '" + spec.family + "' does not fit this subcommand");
  if (eq != bench::Equation::Care) return;
  const bool has_mass = spec.family == "gcare-ex3" || (spec.family == "file" && spec.files.size() == 4);
  if (has_mass != generalized)
    throw qme::Error(qme::ErrorCode::InvalidInput,
                     generalized ? "solve-gcare needs a problem with a mass matrix"
                                 : "problem has a mass matrix; use solve-gcare");
}

int cmd_solve(const Options& o, bench::Equation eq, bool generalized, bool update) {
  Logger log(o.log);
  const bench::ProblemSpec spec = make_spec(o, o.sizes.front());
  require_equation(spec, eq, generalized);
  const bench::Method method = update ? bench::Method::Update : bench::parse_method(o.methods.front());
  if (!update && method == bench::Method::Update)
    throw qme::Error(qme::ErrorCode::InvalidInput, "use update-care or update-uqme for update runs");
  CsvSink csv(o.out);
  return run_one(spec, method, csv, log, o.save);
}

int cmd_bench(const Options& o) {
  Logger log(o.log);
  std::vector<bench::Method> methods;
  for (const auto& m : o.methods) methods.push_back(bench::parse_method(m));
  CsvSink csv(o.out);
  int status = 0;
  for (qme::Index n : o.sizes) {
    for (bench::Method m : methods) status = std::max(status, run_one(make_spec(o, n), m, csv, log, {}));
  }
  return status;
}

int cmd_check(const Options& o) {
  Logger log(o.log);
  const bench::ProblemSpec spec = make_spec(o, o.sizes.front());
  CsvSink csv(o.out);
  try {
    const bench::BenchOutcome out = bench::run_bench(spec, bench::Method::Dac);
    for (const auto& node : out.report.nodes) log.write(node_json(node));
    const double budget = bench::residual_budget(spec);
    log.write(row_json(out.row, spec.family, budget));
    csv.row(out.row);

    qme::Stopwatch clock;
    const qme::Matrix ref = bench::oracle_solution(spec, o.oracle);
    const double oracle_s = clock.seconds();
    const double diff = (out.X.dense() - ref).norm() / ref.norm();
    std::printf("# oracle %s: %.3fs, relative difference %.3e\n", o.oracle.empty() ? "default" : o.oracle.c_str(),
                oracle_s, diff);
    log.write({{"event", "check"},
               {"problem", spec.family},
               {"n", out.row.n},
               {"oracle", o.oracle.empty() ? "default" : o.oracle},
               {"oracle_seconds", oracle_s},
               {"difference", diff},
               {"tolerance", o.check_tol}});
    if (diff > o.check_tol || out.row.res > budget) {
      std::cerr << "qme_bench: check failed (difference " << diff << ", residual " << out.row.res << ")\n";
      return kExitTolerance;
    }
    return 0;
  } catch (const qme::Error& e) {
    return error_exit(e, log, spec.family, spec.n);
  }
}

void add_problem_options(CLI::App* cmd, Options& o, const std::string& default_problem, bool multi) {
  cmd->add_option("--problem", o.problem, "care-ex1, care-ex2, gcare-ex3, dqbd-random, mass-spring")
      ->default_str(default_problem);
  cmd->final_callback([&o, default_problem] {
    if (o.problem.empty()) o.problem = default_problem;
  });
  if (multi)
    cmd->add_option("--n", o.sizes, "problem sizes")->capture_default_str();
  else
    cmd->add_option("--n", o.sizes, "problem size")->expected(1)->capture_default_str();
  cmd->add_option("--seed", o.seed, "generator seed")->capture_default_str();
  cmd->add_option("--input", o.inputs, "Matrix Market coefficient files (A B Q [E] or A B C)");
  cmd->add_option("--nmin", o.nmin, "leaf size of the recursion")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--tau-sigma", o.tau_sigma, "truncation tolerance")->capture_default_str();
  cmd->add_option("--tau-care", o.tau_care, "CARE correction tolerance")->capture_default_str();
  cmd->add_option("--tau-uqme", o.tau_uqme, "UQME correction tolerance")->capture_default_str();
  cmd->add_option("--t-max", o.t_max, "iteration budget of the correction solvers")->capture_default_str();
  cmd->add_flag("--parallel", o.parallel, "solve sibling subproblems concurrently");
  cmd->add_flag("--dense-fallback", o.dense_fallback, "solve failing nodes densely");
  cmd->add_option("--out", o.out, "CSV output file");
  cmd->add_option("--log", o.log, "JSON-lines log of per-node records");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Divide-and-conquer solvers for CARE and UQME test problems"};
  app.require_subcommand(1);
  Options o;

  auto* solve_care = app.add_subcommand("solve-care", "solve a CARE problem");
  auto* solve_gcare = app.add_subcommand("solve-gcare", "solve a generalized CARE problem");
  auto* solve_uqme = app.add_subcommand("solve-uqme", "solve a UQME problem");
  auto* update_care = app.add_subcommand("update-care", "update a CARE solution after a rank-one change");
  auto* update_uqme = app.add_subcommand("update-uqme", "update a UQME solution after a rank-one change");
  auto* bench_cmd = app.add_subcommand("bench", "time methods over several sizes");
  auto* check = app.add_subcommand("check", "compare the D&C solution with a dense oracle");

  add_problem_options(solve_care, o, "care-ex1", false);
  add_problem_options(solve_gcare, o, "gcare-ex3", false);
  add_problem_options(solve_uqme, o, "dqbd-random", false);
  add_problem_options(update_care, o, "care-ex1", false);
  add_problem_options(update_uqme, o, "dqbd-random", false);
  add_problem_options(bench_cmd, o, "care-ex1", true);
  add_problem_options(check, o, "care-ex1", false);
  for (auto* cmd : {solve_care, solve_gcare, solve_uqme}) {
    cmd->add_option("--method", o.methods, "dac or dense")->expected(1)->capture_default_str();
  }
  for (auto* cmd : {solve_care, solve_gcare, solve_uqme, update_care, update_uqme})
    cmd->add_option("--save", o.save, "write the solution in the HODLR binary format");
  bench_cmd->add_option("--method", o.methods, "dac, dense and/or update")->capture_default_str();
  for (auto* cmd : {bench_cmd, check})
    cmd->add_option("--equation", o.equation, "equation of --input files")
        ->check(CLI::IsMember({"care", "uqme"}))
        ->capture_default_str();
  check->add_option("--oracle", o.oracle, "schur (CARE), cr or eig (UQME)");
  check->add_option("--check-tol", o.check_tol, "relative difference allowed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*solve_care) return cmd_solve(o, bench::Equation::Care, false, false);
    if (*solve_gcare) return cmd_solve(o, bench::Equation::Care, true, false);
    if (*solve_uqme) return cmd_solve(o, bench::Equation::Uqme, false, false);
    if (*update_care) return cmd_solve(o, bench::Equation::Care, false, true);
    if (*update_uqme) return cmd_solve(o, bench::Equation::Uqme, false, true);
    if (*bench_cmd) return cmd_bench(o);
    if (*check) return cmd_check(o);
  } catch (const qme::Error& e) {
    std::cerr << "qme_bench: " << e.what() << '\n';
    return exit_status(e);
  } catch (const std::exception& e) {
    std::cerr << "qme_bench: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
