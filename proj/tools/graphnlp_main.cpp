// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

// Command-line front end: generate benchmark models, partition and
// aggregate them, export structure, solve with a selectable KKT backend,
// and emit per-run timing reports.
//
// Exit codes: 0 success/optimal, 1 solver failure, 2 parse or validation
// error. Logs go to standard error; data goes to standard output or the
// named files.

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "graphnlp/graphnlp.hpp"

namespace {

using namespace graphnlp;

int default_threads() {
  if (const char* env = std::getenv("GRAPHNLP_THREADS")) {
    const int t = std::atoi(env);
    if (t >= 1) return t;
  }
  return 1;
}

BackendKind parse_backend(const std::string& name) {
  if (name == "monolithic") return BackendKind::Monolithic;
  if (name == "schur-dual") return BackendKind::SchurDual;
  if (name == "schur-tree") return BackendKind::SchurTree;
  throw ConfigError("unknown backend: " + name);
}

struct GenerateArgs {
  std::string model;
  std::string output = "model.json";
  // pid
  int ns = 5;
  int n = 100;
  double tf = 10.0;
  // gas
  int scenarios = 2;
  int nt = 24;
  int nx = 10;
  int compressors = 11;
  int pipelines = 13;
  int junctions = 25;
  double demand_base = 50.0;
  double demand_step = 10.0;
  unsigned seed = 20240;
};

json generate_model(const GenerateArgs& a, std::string& generator,
                    OptiGraph& graph, std::int64_t& master) {
  if (a.model == "pid") {
    PidConfig cfg;
    cfg.scenarios = a.ns;
    cfg.steps = a.n;
    cfg.horizon = a.tf;
    cfg.disturbance.assign(a.ns, -1.0);
    const std::vector<double> sp{-2.0, -1.5, -0.5, 0.5, 1.0};
    cfg.setpoint.resize(a.ns);
    for (int s = 0; s < a.ns; ++s) cfg.setpoint[s] = sp[s % sp.size()];
    graph = build_pid(cfg);
    master = find_master(graph);
    generator = "pid";
    json config{{"scenarios", cfg.scenarios}, {"steps", cfg.steps},
                {"horizon", cfg.horizon}};
    return config;
  }
  if (a.model == "gas") {
    GasConfig cfg;
    cfg.scenarios = a.scenarios;
    cfg.time_points = a.nt;
    cfg.space_points = a.nx;
    cfg.n_compressors = a.compressors;
    cfg.n_pipelines = a.pipelines;
    cfg.n_junctions = a.junctions;
    cfg.demand_base = a.demand_base;
    cfg.demand_step = a.demand_step;
    cfg.seed = a.seed;
    if (a.nt < 16) {  // keep the demand window inside short horizons
      cfg.step_start = a.nt / 3;
      cfg.step_end = 2 * a.nt / 3;
    }
    graph = build_gas(cfg);
    master = find_master(graph);
    generator = "gas";
    json config{{"scenarios", cfg.scenarios},   {"time_points", cfg.time_points},
                {"space_points", cfg.space_points},
                {"compressors", cfg.n_compressors},
                {"pipelines", cfg.n_pipelines}, {"junctions", cfg.n_junctions},
                {"demand_base", cfg.demand_base},
                {"demand_step", cfg.demand_step}, {"seed", cfg.seed}};
    return config;
  }
  throw ConfigError("unknown model: " + a.model + " (expected pid or gas)");
}

struct SolveResult {
  SolveReport report;
  BackendKind backend;
  int threads;
};

SolveResult run_solve(const ModelFile& mf, BackendKind backend, int threads,
                      double tol, int max_iter, bool aggregate,
                      const std::string& dump_prefix, bool csv_log) {
  const OptiGraph* graph = &mf.graph;
  OptiGraph aggregated;
  std::int64_t master = mf.master_node;
  if (aggregate) {
    aggregated = mf.graph.aggregate();
    master = find_master(aggregated);
    graph = &aggregated;
  }
  FlatNLP flat = graph->flatten();
  flat.master_node = master;

  SolverOptions opts;
  opts.backend = backend;
  opts.threads = threads;
  opts.tol = tol;
  opts.max_iter = max_iter;
  opts.log = &std::cout;  // iteration log is the data product of solve
  opts.log_csv = csv_log;
  IpmSolver solver(flat, opts);
  SolveResult out{solver.solve(), backend, threads};
  if (!dump_prefix.empty()) solver.backend().dump(dump_prefix);
  return out;
}

void append_report_row(const std::string& path, const SolveResult& r) {
  const bool fresh = !std::ifstream(path).good();
  std::ofstream f(path, std::ios::app);
  if (!f) throw ParseError("cannot open report file " + path);
  if (fresh)
    f << "backend,threads,iterations,total_time,linear_time,func_time,"
         "objective,status\n";
  f << to_string(r.backend) << "," << r.threads << "," << r.report.iterations
    << "," << r.report.timings.total << "," << r.report.timings.linear_solve
    << "," << r.report.timings.function_eval << "," << std::setprecision(16)
    << r.report.objective << "," << to_string(r.report.status) << "\n";
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph-structured nonlinear optimization toolkit"};
  app.require_subcommand(1);

  // ---- generate ----
  GenerateArgs gen;
  auto* cmd_gen = app.add_subcommand("generate", "emit a benchmark model file");
  cmd_gen->add_option("model", gen.model, "pid or gas")->required();
  cmd_gen->add_option("-o,--output", gen.output, "output model file");
  cmd_gen->add_option("--ns", gen.ns, "pid: number of scenarios");
  cmd_gen->add_option("--n", gen.n, "pid: time points per scenario");
  cmd_gen->add_option("--tf", gen.tf, "pid: horizon length");
  cmd_gen->add_option("--scenarios", gen.scenarios, "gas: scenario count");
  cmd_gen->add_option("--nt", gen.nt, "gas: time points");
  cmd_gen->add_option("--nx", gen.nx, "gas: space points per pipeline");
  cmd_gen->add_option("--compressors", gen.compressors, "gas: compressors");
  cmd_gen->add_option("--pipelines", gen.pipelines, "gas: pipelines");
  cmd_gen->add_option("--junctions", gen.junctions, "gas: junctions");
  cmd_gen->add_option("--demand-base", gen.demand_base, "gas: base demand");
  cmd_gen->add_option("--demand-step", gen.demand_step, "gas: step magnitude");
  cmd_gen->add_option("--seed", gen.seed, "gas: demand profile seed");

  // ---- solve ----
  std::string solve_file, solve_backend = "monolithic", report_path,
              dump_prefix;
  int solve_threads = default_threads();
  double solve_tol = 1e-8;
  int solve_max_iter = 500;
  bool solve_aggregate = false, solve_csv = false;
  auto* cmd_solve = app.add_subcommand("solve", "solve a model file");
  cmd_solve->add_option("file", solve_file, "model file")->required();
  cmd_solve->add_option("--backend", solve_backend,
                        "monolithic | schur-dual | schur-tree");
  cmd_solve->add_option("--threads", solve_threads,
                        "worker threads for block backends");
  cmd_solve->add_option("--tol", solve_tol, "convergence tolerance");
  cmd_solve->add_option("--max-iter", solve_max_iter, "iteration limit");
  cmd_solve->add_option("--report", report_path, "append a CSV run record");
  cmd_solve->add_option("--dump-kkt", dump_prefix,
                        "write the KKT system and Schur matrix (MatrixMarket)");
  cmd_solve->add_flag("--aggregate", solve_aggregate,
                      "collapse top-level subgraphs into blocks before solving");
  cmd_solve->add_flag("--csv", solve_csv, "CSV iteration log");

  // ---- partition ----
  std::string part_file, part_out = "partitioned.json", membership_path;
  int part_parts = 0, by_time = 0;
  auto* cmd_part =
      app.add_subcommand("partition", "restructure a model into subgraphs");
  cmd_part->add_option("file", part_file, "model file")->required();
  cmd_part->add_option("-o,--output", part_out, "output model file");
  cmd_part->add_option("--parts", part_parts,
                       "built-in heuristic partition into P parts");
  cmd_part->add_option("--membership", membership_path,
                       "file with one part index per node");
  cmd_part->add_option("--by-time", by_time,
                       "time-window partition for scenario models");

  // ---- export ----
  std::string exp_file, exp_format = "dot", exp_out;
  auto* cmd_export =
      app.add_subcommand("export", "write graph structure artifacts");
  cmd_export->add_option("file", exp_file, "model file")->required();
  cmd_export->add_option("--format", exp_format, "dot | adjacency-csv");
  cmd_export->add_option("-o,--output", exp_out, "output path (default stdout)");

  // ---- bench ----
  GenerateArgs bench_gen;
  std::string bench_backends = "monolithic,schur-dual";
  std::string bench_threads = "1";
  int bench_repeats = 3;
  bool bench_aggregate = false;
  double bench_tol = 1e-8;
  auto* cmd_bench = app.add_subcommand(
      "bench", "timed solves: one warm-up plus repeats, averaged");
  cmd_bench->add_option("--model", bench_gen.model, "pid or gas")->required();
  cmd_bench->add_option("--ns", bench_gen.ns, "pid: scenarios");
  cmd_bench->add_option("--n", bench_gen.n, "pid: time points");
  cmd_bench->add_option("--scenarios", bench_gen.scenarios, "gas: scenarios");
  cmd_bench->add_option("--nt", bench_gen.nt, "gas: time points");
  cmd_bench->add_option("--nx", bench_gen.nx, "gas: space points");
  cmd_bench->add_option("--backends", bench_backends, "comma-separated list");
  cmd_bench->add_option("--threads", bench_threads, "comma-separated list");
  cmd_bench->add_option("--repeats", bench_repeats, "timed repetitions");
  cmd_bench->add_option("--tol", bench_tol, "convergence tolerance");
  cmd_bench->add_flag("--aggregate", bench_aggregate,
                      "aggregate before solving");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cmd_gen) {
      OptiGraph graph;
      std::int64_t master = -1;
      std::string generator;
      json config = generate_model(gen, generator, graph, master);
      json model = model_to_json(graph, gen.model, generator, config, master);
      write_model_file(gen.output, model);
      std::cerr << "wrote " << gen.output << " (" << graph.all_nodes().size()
                << " nodes)\n";
      return 0;
    }

    if (*cmd_solve) {
      ModelFile mf = read_model_file(solve_file);
      const BackendKind backend = parse_backend(solve_backend);
      SolveResult r = run_solve(mf, backend, solve_threads, solve_tol,
                                solve_max_iter, solve_aggregate, dump_prefix,
                                solve_csv);
      std::cerr << "status: " << to_string(r.report.status)
                << "  objective: " << std::setprecision(12)
                << r.report.objective
                << "  iterations: " << r.report.iterations
                << "  kkt_error: " << r.report.kkt_error << "\n";
      if (r.report.schur_dimension > 0)
        std::cerr << "schur dimension: " << r.report.schur_dimension << "\n";
      if (!report_path.empty()) append_report_row(report_path, r);
      return r.report.status == SolveStatus::Optimal ? 0 : 1;
    }

    if (*cmd_part) {
      ModelFile mf = read_model_file(part_file);
      Partition p;
      if (by_time > 0) {
        p = pid_time_partition(mf.graph, by_time);
      } else if (!membership_path.empty()) {
        std::ifstream f(membership_path);
        if (!f) throw ParseError("cannot open " + membership_path);
        int v;
        while (f >> v) p.membership.push_back(v);
        p.num_parts = p.membership.empty()
                          ? 0
                          : *std::max_element(p.membership.begin(),
                                              p.membership.end()) + 1;
      } else if (part_parts > 0) {
        p = mf.graph.heuristic_partition(part_parts);
      } else {
        throw ConfigError("choose one of --parts, --membership, --by-time");
      }
      mf.graph.partition(p);
      json model = model_to_json(mf.graph, mf.name, mf.generator, mf.config,
                                 mf.master_node);
      write_model_file(part_out, model);
      std::cerr << "wrote " << part_out << " with "
                << mf.graph.subgraphs().size() << " subgraphs\n";
      return 0;
    }

    if (*cmd_export) {
      ModelFile mf = read_model_file(exp_file);
      std::ofstream file_out;
      std::ostream* os = &std::cout;
      if (!exp_out.empty()) {
        file_out.open(exp_out);
        if (!file_out) throw ParseError("cannot open " + exp_out);
        os = &file_out;
      }
      if (exp_format == "dot") {
        write_dot(mf.graph, *os);
      } else if (exp_format == "adjacency-csv") {
        write_adjacency_csv(mf.graph, *os);
      } else {
        throw ConfigError("unknown export format: " + exp_format);
      }
      return 0;
    }

    if (*cmd_bench) {
      OptiGraph graph;
      std::int64_t master = -1;
      std::string generator;
      generate_model(bench_gen, generator, graph, master);
      json model = model_to_json(graph, bench_gen.model, generator,
                                 json::object(), master);
      ModelFile mf = model_from_json(model);

      std::cout << "model,backend,threads,iterations,total_time,linear_time,"
                   "func_time,total_per_iter,linear_per_iter,objective,status\n";
      for (const auto& bname : split_list(bench_backends)) {
        const BackendKind backend = parse_backend(bname);
        for (const auto& tstr : split_list(bench_threads)) {
          const int threads = std::stoi(tstr);
          SolveTimings avg;
          SolveReport last;
          // one warm-up run, then bench_repeats timed runs averaged
          for (int rep = 0; rep <= bench_repeats; ++rep) {
            SolverOptions opts;
            opts.backend = backend;
            opts.threads = threads;
            opts.tol = bench_tol;
            const OptiGraph* gptr = &mf.graph;
            OptiGraph agg;
            FlatNLP flat;
            std::int64_t m2 = mf.master_node;
            if (bench_aggregate) {
              agg = mf.graph.aggregate();
              m2 = find_master(agg);
              gptr = &agg;
            }
            flat = gptr->flatten();
            flat.master_node = m2;
            IpmSolver solver(flat, opts);
            last = solver.solve();
            if (rep == 0) continue;
            avg.total += last.timings.total / bench_repeats;
            avg.linear_solve += last.timings.linear_solve / bench_repeats;
            avg.function_eval += last.timings.function_eval / bench_repeats;
          }
          const double it = std::max(1, last.iterations);
          std::cout << bench_gen.model << "," << bname << "," << threads << ","
                    << last.iterations << "," << avg.total << ","
                    << avg.linear_solve << "," << avg.function_eval << ","
                    << avg.total / it << "," << avg.linear_solve / it << ","
                    << std::setprecision(16) << last.objective << ","
                    << to_string(last.status) << "\n";
        }
      }
      return 0;
    }
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const LengthMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
