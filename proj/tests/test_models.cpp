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

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "graphnlp/ipm.hpp"
#include "graphnlp/models.hpp"

using namespace graphnlp;

namespace {

PidConfig small_pid(int ns, int n) {
  PidConfig cfg;
  cfg.scenarios = ns;
  cfg.steps = n;
  cfg.disturbance.assign(ns, -1.0);
  cfg.setpoint.resize(ns);
  const std::vector<double> defaults{-2.0, -1.5, -0.5, 0.5, 1.0};
  for (int s = 0; s < ns; ++s) cfg.setpoint[s] = defaults[s % 5];
  return cfg;
}

GasConfig small_gas(int scenarios) {
  GasConfig cfg;
  cfg.n_compressors = 2;
  cfg.n_pipelines = 3;
  cfg.n_junctions = 6;
  cfg.time_points = 4;
  cfg.space_points = 3;
  cfg.scenarios = scenarios;
  cfg.step_start = 1;
  cfg.step_end = 3;
  return cfg;
}

}  // namespace

TEST_CASE("pid default build matches the published structure") {
  auto g = build_pid();
  CHECK(g.all_nodes().size() == 501);
  auto flat = g.flatten();
  CHECK(flat.n_vars == 4503);
  for (int row : flat.link_rows) {
    CompiledExpr ce(flat.constraints[row]);
    CHECK(ce.is_affine());
  }
}

TEST_CASE("pid nodes carry nine variables with lifted products") {
  auto g = build_pid(small_pid(1, 2));
  auto nodes = g.all_nodes();
  REQUIRE(nodes.size() == 3);  // master + two time nodes
  CHECK(nodes[0]->num_variables() == 3);
  CHECK(nodes[1]->num_variables() == 9);
  CHECK(nodes[2]->num_variables() == 9);
}

TEST_CASE("minimal pid instance solves and tracks the set point") {
  auto cfg = small_pid(1, 2);
  auto g = build_pid(cfg);
  auto flat = g.flatten();
  SolverOptions opts;
  opts.max_iter = 200;
  IpmSolver solver(flat, opts);
  auto report = solver.solve();
  REQUIRE(report.status == SolveStatus::Optimal);
  // the state must move toward the set point (negative direction here)
  // final-time x lives on the last node; block 2 of the flat layout
  const auto& blk = flat.blocks[2];
  CHECK(solver.state().x[blk.var_start + pid_var::x] < 0.0);
}

TEST_CASE("time partition reproduces the published part sizes") {
  auto g = build_pid();
  auto p = pid_time_partition(g, 4);
  REQUIRE(p.membership.size() == 501);
  std::vector<int> sizes(4, 0);
  for (int m : p.membership) sizes[m]++;
  CHECK(sizes == std::vector<int>{126, 125, 125, 125});

  auto p1 = pid_time_partition(g, 1);
  CHECK(std::all_of(p1.membership.begin(), p1.membership.end(),
                    [](int m) { return m == 0; }));
}

TEST_CASE("partitioning does not change the optimal objective") {
  auto cfg = small_pid(2, 10);
  auto g1 = build_pid(cfg);
  auto f1 = g1.flatten();
  SolverOptions opts;
  opts.max_iter = 300;
  auto r1 = solve(f1, opts);
  REQUIRE(r1.status == SolveStatus::Optimal);

  auto g2 = build_pid(cfg);
  g2.partition(pid_time_partition(g2, 4));
  auto f2 = g2.flatten();
  auto r2 = solve(f2, opts);
  REQUIRE(r2.status == SolveStatus::Optimal);
  CHECK(std::fabs(r1.objective - r2.objective) <= 1e-8 *
            std::max(1.0, std::fabs(r1.objective)));
}

TEST_CASE("pid solution shares tuning parameters everywhere") {
  auto cfg = small_pid(2, 10);
  auto g = build_pid(cfg);
  auto flat = g.flatten();
  SolverOptions opts;
  opts.max_iter = 300;
  IpmSolver solver(flat, opts);
  auto report = solver.solve();
  REQUIRE(report.status == SolveStatus::Optimal);
  const auto& x = solver.state().x;
  // block 0 is the master; scenario nodes follow
  const double kc = x[flat.blocks[0].var_start + 0];
  const double taui = x[flat.blocks[0].var_start + 1];
  const double taud = x[flat.blocks[0].var_start + 2];
  for (std::size_t b = 1; b < flat.blocks.size(); ++b) {
    const int vs = flat.blocks[b].var_start;
    CHECK(std::fabs(x[vs + pid_var::kc] - kc) <= 1e-8);
    CHECK(std::fabs(x[vs + pid_var::taui] - taui) <= 1e-8);
    CHECK(std::fabs(x[vs + pid_var::taud] - taud) <= 1e-8);
  }
}

TEST_CASE("demand profile shapes") {
  auto flatten_profile = demand_profile(0, 24, 50.0, 0.0, 8, 16);
  CHECK(std::all_of(flatten_profile.begin(), flatten_profile.end(),
                    [](double v) { return v == 50.0; }));

  auto stepped = demand_profile(1, 24, 50.0, 20.0, 8, 16);
  int elevated = 0;
  for (double v : stepped) elevated += (v > 50.0);
  CHECK(elevated == 8);

  auto s2 = demand_profile(2, 24, 50.0, 20.0, 8, 16);
  CHECK(stepped != s2);  // scenario index changes window or magnitude
  CHECK(demand_profile(2, 24, 50.0, 20.0, 8, 16) == s2);  // seeded
}

TEST_CASE("gas master block holds one power variable per compressor-time") {
  GasConfig cfg;  // paper dimensions
  cfg.scenarios = 1;
  auto g = build_gas(cfg);
  REQUIRE(g.nodes().size() == 1);
  CHECK(g.nodes()[0]->num_variables() == 11 * 24);
  CHECK(find_master(g) == g.nodes()[0]->id());
}

TEST_CASE("gas scenario growth leaves the master unchanged") {
  auto count_vars = [](int s) {
    GasConfig cfg = GasConfig{};
    cfg.scenarios = s;
    auto g = build_gas(cfg);
    return g.flatten().n_vars;
  };
  const int v1 = count_vars(1);
  const int v2 = count_vars(2);
  const int v3 = count_vars(3);
  // constant per-scenario increment, master shared
  CHECK(v2 - v1 == v3 - v2);
  // frozen accounting for the default instance: 264 master variables plus
  // 13165 per scenario (13128 model variables and 37 inequality slacks)
  CHECK(v1 == 264 + 13165);
}

TEST_CASE("gas links are all affine") {
  auto g = build_gas(small_gas(2));
  auto flat = g.flatten();
  for (int row : flat.link_rows) {
    CompiledExpr ce(flat.constraints[row]);
    CHECK(ce.is_affine());
  }
}

TEST_CASE("gas topology validation") {
  GasConfig bad = small_gas(1);
  bad.n_junctions = 5;
  CHECK_THROWS_AS(build_gas(bad), TopologyError);
  GasConfig bad2 = small_gas(1);
  bad2.alpha = -1.0;
  CHECK_THROWS_AS(build_gas(bad2), ConfigError);
}

TEST_CASE("small gas instance solves to a physical solution") {
  auto cfg = small_gas(1);
  auto g = build_gas(cfg);
  auto flat = g.flatten();
  SolverOptions opts;
  opts.max_iter = 300;
  opts.tol = 1e-8;
  IpmSolver solver(flat, opts);
  auto report = solver.solve();
  REQUIRE(report.status == SolveStatus::Optimal);

  // all constraints hold at the solution, junction balances included
  const auto& x = solver.state().x;
  for (const auto& c : flat.constraints)
    CHECK(std::fabs(evaluate(c, x)) <= 1e-6);
  // compressor power within its box
  for (int i = 0; i < flat.n_vars; ++i) {
    CHECK(x[i] >= flat.lower[i] - 1e-9);
    CHECK(x[i] <= flat.upper[i] + 1e-9);
  }
}
