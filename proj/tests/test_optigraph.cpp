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
#include <set>

#include "graphnlp/optigraph.hpp"

using namespace graphnlp;

namespace {

/// Path graph: n nodes, equality link between neighbours.
OptiGraph path_graph(int n) {
  OptiGraph g;
  std::vector<OptiNode*> nodes;
  for (int i = 0; i < n; ++i) {
    OptiNode& nd = g.add_node();
    nd.add_variable("x", -1.0, 1.0, 0.0);
    nodes.push_back(&nd);
  }
  for (int i = 0; i + 1 < n; ++i)
    g.link_constraint(nodes[i]->var(0) - nodes[i + 1]->var(0));
  return g;
}

}  // namespace

TEST_CASE("node construction assigns sequential locals") {
  OptiGraph g;
  OptiNode& n = g.add_node("a");
  auto v0 = n.add_variable("x");
  auto v1 = n.add_variable("y");
  CHECK(v0.local == 0);
  CHECK(v1.local == 1);
  CHECK(v0.node == n.id());
}

TEST_CASE("cross-node expressions are rejected") {
  OptiGraph g;
  OptiNode& a = g.add_node();
  OptiNode& b = g.add_node();
  a.add_variable("x");
  b.add_variable("y");
  CHECK_THROWS_AS(a.add_constraint(b.var(0)), CrossNodeExpression);
  CHECK_THROWS_AS(a.set_objective(a.var(0) + b.var(0)), CrossNodeExpression);
}

TEST_CASE("link constraint support") {
  OptiGraph g;
  OptiNode& a = g.add_node();
  OptiNode& b = g.add_node();
  OptiNode& c = g.add_node();
  a.add_variable("x");
  b.add_variable("x");
  c.add_variable("x");

  auto& l2 = g.link_constraint(a.var(0) - b.var(0));
  CHECK(l2.support == std::vector<std::int64_t>{a.id(), b.id()});

  auto& l3 = g.link_constraint(a.var(0) + b.var(0) + c.var(0));
  CHECK(l3.support.size() == 3);

  CHECK_THROWS_AS(g.link_constraint(a.var(0) * 2.0), SingleNodeLink);
}

TEST_CASE("links must reference reachable nodes") {
  OptiGraph g;
  OptiNode& a = g.add_node();
  a.add_variable("x");
  OptiGraph& sub = g.add_subgraph();
  OptiNode& b = sub.add_node();
  b.add_variable("x");
  // node a lives above the subgraph, so it is not reachable from sub
  CHECK_THROWS_AS(sub.link_constraint(a.var(0) - b.var(0)), UnreachableNode);
  // from the root both nodes are reachable
  CHECK_NOTHROW(g.link_constraint(a.var(0) - b.var(0)));
}

TEST_CASE("flatten counts and link rows") {
  OptiGraph g;
  OptiNode& a = g.add_node();
  OptiNode& b = g.add_node();
  a.add_variable("x");
  a.add_variable("y");
  b.add_variable("x");
  b.add_variable("y");
  a.add_constraint(a.var(0) + a.var(1) - 1.0);
  g.link_constraint(a.var(0) - b.var(0));
  auto flat = g.flatten();
  CHECK(flat.n_vars == 4);
  CHECK(flat.n_cons == 2);
  CHECK(flat.n_internal == 1);
  CHECK(flat.link_rows == std::vector<int>{1});
  CHECK(flat.blocks.size() == 2);
  CHECK(flat.blocks[0].var_start == 0);
  CHECK(flat.blocks[0].var_count == 2);
  CHECK(flat.blocks[1].var_start == 2);
}

TEST_CASE("inequalities become bounded slacks at flatten") {
  OptiGraph g;
  OptiNode& a = g.add_node();
  a.add_variable("x", 0.0, 10.0, 2.0);
  a.add_inequality(a.var(0) * a.var(0), 1.0, 4.0);
  auto flat = g.flatten();
  REQUIRE(flat.n_vars == 2);  // x plus slack
  CHECK(flat.lower[1] == 1.0);
  CHECK(flat.upper[1] == 4.0);
  CHECK(flat.n_cons == 1);
  // row is x^2 - s == 0; at x0 = 2 the slack starts at g(x0) = 4
  CHECK(flat.x0[1] == 4.0);
  std::vector<double> p{2.0, 4.0};
  CHECK(evaluate(flat.constraints[0], p) == 0.0);
}

TEST_CASE("partition moves nodes and homes links") {
  OptiGraph g = path_graph(10);
  auto before_ids = [&] {
    std::vector<std::int64_t> ids;
    for (auto* n : g.all_nodes()) ids.push_back(n->id());
    return ids;
  }();
  Partition p;
  p.num_parts = 2;
  p.membership = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  g.partition(p);
  REQUIRE(g.subgraphs().size() == 2);
  CHECK(g.subgraphs()[0]->nodes().size() == 5);
  CHECK(g.subgraphs()[1]->nodes().size() == 5);
  // 8 links internal to the halves, 1 cut link at top level
  CHECK(g.links().size() == 1);
  CHECK(g.subgraphs()[0]->links().size() == 4);
  CHECK(g.subgraphs()[1]->links().size() == 4);
  // node set is preserved up to permutation
  auto after_ids = [&] {
    std::vector<std::int64_t> ids;
    for (auto* n : g.all_nodes()) ids.push_back(n->id());
    return ids;
  }();
  std::sort(before_ids.begin(), before_ids.end());
  std::sort(after_ids.begin(), after_ids.end());
  CHECK(before_ids == after_ids);
}

TEST_CASE("partition validation errors") {
  OptiGraph g = path_graph(4);
  Partition bad_len{{0, 1}, 2};
  CHECK_THROWS_AS(g.partition(bad_len), LengthMismatch);
  Partition empty_part{{0, 0, 0, 0}, 2};
  CHECK_THROWS_AS(g.partition(empty_part), EmptyPart);
  Partition bad_value{{0, 0, 0, 5}, 2};
  CHECK_THROWS_AS(g.partition(bad_value), InvalidPartCount);
}

TEST_CASE("all-zero membership yields one subgraph holding every link") {
  OptiGraph g = path_graph(6);
  Partition p{std::vector<int>(6, 0), 1};
  g.partition(p);
  REQUIRE(g.subgraphs().size() == 1);
  CHECK(g.links().empty());
  CHECK(g.subgraphs()[0]->links().size() == 5);
}

TEST_CASE("aggregate collapses subgraphs to single nodes") {
  OptiGraph g;
  OptiNode& master = g.add_node("master");
  master.add_variable("k", -1.0, 1.0, 0.0);
  for (int s = 0; s < 5; ++s) {
    OptiGraph& sub = g.add_subgraph();
    OptiNode* prev = nullptr;
    OptiNode* first = nullptr;
    for (int t = 0; t < 3; ++t) {
      OptiNode& nd = sub.add_node();
      nd.add_variable("x", -2.0, 2.0, 0.1);
      nd.add_variable("u");
      nd.set_objective(Expr::pow(nd.var(0), 2));
      if (prev) sub.link_constraint(prev->var(0) - nd.var(0));
      if (t == 0) first = &nd;
      prev = &nd;
    }
    g.link_constraint(first->var(1) - master.var(0));
  }
  auto flat_before = g.flatten();
  OptiGraph agg = g.aggregate();
  CHECK(agg.all_nodes().size() == 6);
  auto flat_after = agg.flatten();
  CHECK(flat_after.n_vars == flat_before.n_vars);
  CHECK(flat_after.n_cons == flat_before.n_cons);
  // aggregated node carries the union of member variables
  CHECK(agg.all_nodes()[1]->num_variables() == 6);
}

TEST_CASE("aggregate preserves the objective at mapped points") {
  OptiGraph g;
  OptiNode& top = g.add_node();
  top.add_variable("y");
  top.set_objective(Expr::exp(top.var(0)));
  OptiGraph& sub = g.add_subgraph();
  OptiNode& a = sub.add_node();
  OptiNode& b = sub.add_node();
  a.add_variable("x");
  b.add_variable("x");
  a.set_objective(Expr::pow(a.var(0), 2));
  b.set_objective(Expr::constant(3.0) * b.var(0));
  sub.link_constraint(a.var(0) - b.var(0));
  g.link_constraint(top.var(0) - a.var(0));

  auto f1 = g.flatten();
  auto f2 = g.aggregate().flatten();
  REQUIRE(f1.n_vars == f2.n_vars);
  // aggregation keeps the all_nodes variable order, so points map by index
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> x(f1.n_vars);
    for (auto& v : x) v = dist(rng);
    CHECK(evaluate(f1.objective, x) == evaluate(f2.objective, x));
  }
}

TEST_CASE("graph with no subgraphs aggregates unchanged") {
  OptiGraph g = path_graph(3);
  OptiGraph agg = g.aggregate();
  CHECK(agg.all_nodes().size() == 3);
  CHECK(agg.links().size() == 2);
}

TEST_CASE("heuristic partition balances a path graph") {
  OptiGraph g = path_graph(10);
  auto p = g.heuristic_partition(2);
  REQUIRE(p.membership.size() == 10);
  int c0 = 0, cut = 0;
  for (int m : p.membership) c0 += (m == 0);
  CHECK(c0 == 5);
  for (int i = 0; i + 1 < 10; ++i)
    if (p.membership[i] != p.membership[i + 1]) ++cut;
  CHECK(cut == 1);  // brute-force best cut for a path

  auto p1 = g.heuristic_partition(1);
  CHECK(std::all_of(p1.membership.begin(), p1.membership.end(),
                    [](int m) { return m == 0; }));
  auto pn = g.heuristic_partition(10);
  std::set<int> parts(pn.membership.begin(), pn.membership.end());
  CHECK(parts.size() == 10);

  CHECK_THROWS_AS(g.heuristic_partition(0), InvalidPartCount);
  CHECK_THROWS_AS(g.heuristic_partition(11), InvalidPartCount);

  auto p2 = g.heuristic_partition(2);
  CHECK(p.membership == p2.membership);  // deterministic
}

TEST_CASE("adjacency export") {
  OptiGraph g;
  OptiNode& a = g.add_node("a");
  OptiNode& b = g.add_node("b");
  OptiNode& c = g.add_node("c");
  a.add_variable("x");
  b.add_variable("x");
  c.add_variable("x");
  g.link_constraint(a.var(0) - b.var(0));
  auto adj = g.adjacency_export();
  REQUIRE(adj.edges.size() == 1);
  CHECK(adj.edges[0] == std::pair<int, int>{0, 1});

  g.link_constraint(a.var(0) + b.var(0) + c.var(0));
  auto adj3 = g.adjacency_export();
  CHECK(adj3.edges.size() == 3);  // clique expansion of the hyperedge
}

TEST_CASE("partition keeps flattened problem sizes") {
  OptiGraph g = path_graph(8);
  for (auto* n : g.all_nodes())
    n->set_objective(Expr::pow(n->var(0) - 0.3, 2));
  auto f1 = g.flatten();
  auto p = g.heuristic_partition(3);
  g.partition(p);
  auto f2 = g.flatten();
  CHECK(f1.n_vars == f2.n_vars);
  CHECK(f1.n_cons == f2.n_cons);
}
