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
#include <random>
#include <sstream>

#include "graphnlp/model_json.hpp"
#include "graphnlp/models.hpp"
#include "test_util.hpp"

using namespace graphnlp;
using namespace graphnlp::testutil;

namespace {

VariableRef flat_ref(std::int64_t node, int local) {
  VariableRef v;
  v.node = node;
  v.local = local;
  return v;
}

}  // namespace

TEST_CASE("the documented s-expression form parses") {
  // ["*", 100.0, ["^", ["-", -2.0, ["var", 0]], 2]]
  const json j = json::parse(R"(["*", 100.0, ["^", ["-", -2.0, ["var", 0]], 2]])");
  const Expr e = sexpr_to_expr(j, [](std::int64_t, int) {
    return VariableRef{};
  });
  CHECK(evaluate(e, std::vector<double>{0.0}) == 400.0);
}

TEST_CASE("expression serialization round trip") {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    const int nv = 1 + static_cast<int>(rng() % 4);
    const auto [e, x] = random_smooth_case(rng, nv, 5);
    const json j = expr_to_sexpr(e);
    const Expr back = sexpr_to_expr(j, [](std::int64_t node, int local) {
      // one-argument var form round-trips through global indices
      return flat_ref(node, local);
    });
    CHECK(evaluate(back, x) == evaluate(e, x));
  }
}

TEST_CASE("bad s-expressions raise parse errors") {
  auto resolve = [](std::int64_t, int) { return VariableRef{}; };
  CHECK_THROWS_AS(sexpr_to_expr(json::parse(R"(["frobnicate", 1])"), resolve),
                  ParseError);
  CHECK_THROWS_AS(sexpr_to_expr(json::parse(R"(["var"])"), resolve),
                  ParseError);
  CHECK_THROWS_AS(sexpr_to_expr(json::parse(R"(["^", ["var", 0], ["var", 1]])"),
                                resolve),
                  ParseError);
  CHECK_THROWS_AS(sexpr_to_expr(json::parse(R"({"not": "an array"})"), resolve),
                  ParseError);
}

TEST_CASE("model file round trip preserves the flattened problem") {
  PidConfig cfg;
  cfg.scenarios = 2;
  cfg.steps = 6;
  cfg.disturbance = {-1.0, -1.0};
  cfg.setpoint = {-2.0, 0.5};
  auto g = build_pid(cfg);
  const json model =
      model_to_json(g, "pid-test", "pid", json::object(), find_master(g));
  ModelFile mf = model_from_json(model);

  auto f1 = g.flatten();
  auto f2 = mf.graph.flatten();
  REQUIRE(f1.n_vars == f2.n_vars);
  REQUIRE(f1.n_cons == f2.n_cons);
  REQUIRE(f1.link_rows == f2.link_rows);
  CHECK(mf.master_node == find_master(mf.graph));

  std::mt19937 rng(4);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> x(f1.n_vars);
    for (auto& v : x) v = dist(rng);
    CHECK(std::fabs(evaluate(f1.objective, x) - evaluate(f2.objective, x)) <=
          1e-12 * std::max(1.0, std::fabs(evaluate(f1.objective, x))));
    for (int r = 0; r < f1.n_cons; ++r)
      CHECK(evaluate(f1.constraints[r], x) == evaluate(f2.constraints[r], x));
  }
}

TEST_CASE("gas model round trip keeps structure and bounds") {
  GasConfig cfg;
  cfg.n_compressors = 2;
  cfg.n_pipelines = 3;
  cfg.n_junctions = 6;
  cfg.time_points = 4;
  cfg.space_points = 3;
  cfg.scenarios = 1;
  cfg.step_start = 1;
  cfg.step_end = 3;
  auto g = build_gas(cfg);
  ModelFile mf = model_from_json(
      model_to_json(g, "gas-test", "gas", json::object(), find_master(g)));
  auto f1 = g.flatten();
  auto f2 = mf.graph.flatten();
  CHECK(f1.n_vars == f2.n_vars);
  CHECK(f1.n_cons == f2.n_cons);
  CHECK(f1.lower == f2.lower);  // includes the +/- inf encodings
  CHECK(f1.upper == f2.upper);
  CHECK(mf.master_node >= 0);
}

TEST_CASE("subgraph nesting survives serialization") {
  OptiGraph g;
  OptiNode& top = g.add_node("top");
  top.add_variable("x", -1.0, 1.0, 0.0);
  OptiGraph& outer = g.add_subgraph();
  OptiGraph& inner = outer.add_subgraph();
  OptiNode& a = inner.add_node("a");
  a.add_variable("y");
  a.set_objective(Expr::pow(a.var(0), 2));
  g.link_constraint(top.var(0) - a.var(0));

  ModelFile mf = model_from_json(model_to_json(g, "nested", "custom"));
  REQUIRE(mf.graph.subgraphs().size() == 1);
  REQUIRE(mf.graph.subgraphs()[0]->subgraphs().size() == 1);
  CHECK(mf.graph.all_nodes().size() == 2);
  CHECK(mf.graph.links().size() == 1);
}

TEST_CASE("schema errors raise parse errors") {
  CHECK_THROWS_AS(model_from_json(json::parse(R"({"metadata": {}})")),
                  ParseError);
  const char* dup = R"({
    "graph": {"nodes": [
      {"id": 1, "name": "a", "variables": [], "constraints": []},
      {"id": 1, "name": "b", "variables": [], "constraints": []}],
      "links": [], "subgraphs": []}})";
  CHECK_THROWS_AS(model_from_json(json::parse(dup)), ParseError);
  const char* bad_master = R"({
    "metadata": {"master_node": 7},
    "graph": {"nodes": [], "links": [], "subgraphs": []}})";
  CHECK_THROWS_AS(model_from_json(json::parse(bad_master)), ParseError);
}

TEST_CASE("dot export lists nodes and edges") {
  OptiGraph g;
  OptiNode& a = g.add_node("a");
  OptiNode& b = g.add_node("b");
  a.add_variable("x");
  b.add_variable("x");
  g.link_constraint(a.var(0) - b.var(0));
  std::stringstream ss;
  write_dot(g, ss);
  const std::string dot = ss.str();
  CHECK(dot.find("n0 -- n1") != std::string::npos);
  CHECK(dot.find("label=\"a\"") != std::string::npos);
}

TEST_CASE("adjacency csv has the block-plus-border shape for pid") {
  PidConfig cfg;
  cfg.scenarios = 2;
  cfg.steps = 4;
  cfg.disturbance = {-1.0, -1.0};
  cfg.setpoint = {-2.0, -1.5};
  auto g = build_pid(cfg);
  std::stringstream ss;
  write_adjacency_csv(g, ss);
  std::string line;
  std::getline(ss, line);  // header
  std::vector<std::vector<int>> m;
  while (std::getline(ss, line)) {
    std::vector<int> row;
    std::stringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');  // label
    while (std::getline(ls, cell, ',')) row.push_back(std::stoi(cell));
    m.push_back(row);
  }
  REQUIRE(m.size() == 9);  // master + 2 scenarios x 4 nodes
  // scenario blocks are tridiagonal chains; no cross-scenario edges
  for (int t1 = 1; t1 <= 4; ++t1)
    for (int t2 = 5; t2 <= 8; ++t2) CHECK(m[t1][t2] == 0);
  // master row touches the first node of each scenario block
  CHECK(m[0][1] == 1);
  CHECK(m[0][5] == 1);
  CHECK(m[0][2] == 0);
}
