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

#ifndef GRAPHNLP_OPTIGRAPH_HPP
#define GRAPHNLP_OPTIGRAPH_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "graphnlp/errors.hpp"
#include "graphnlp/expr.hpp"

namespace graphnlp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Variable {
  std::string name;
  double lower = -kInf;
  double upper = kInf;
  double init = 0.0;
};

enum class ConstraintKind { Equality, Inequality };

/// A node-internal constraint: expr == 0 (equality) or lo <= expr <= hi.
struct Constraint {
  Expr expr;
  ConstraintKind kind = ConstraintKind::Equality;
  double lo = 0.0;
  double hi = 0.0;
};

/// A constraint whose expression spans two or more nodes; the hyperedge of
/// the model graph.
struct LinkConstraint {
  Expr expr;
  ConstraintKind kind = ConstraintKind::Equality;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::int64_t> support;  // sorted distinct node ids
};

class OptiGraph;

/// A self-contained optimization problem: variables, constraints over those
/// variables only, and an objective contribution.
class OptiNode {
 public:
  OptiNode(std::int64_t id, std::string name)
      : id_(id), name_(std::move(name)) {}

  std::int64_t id() const { return id_; }
  const std::string& name() const { return name_; }
  void set_name(std::string n) { name_ = std::move(n); }

  VariableRef add_variable(const std::string& name, double lower = -kInf,
                           double upper = kInf, double init = 0.0) {
    if (!(lower <= upper))
      throw ConfigError("variable " + name + ": lower bound exceeds upper");
    Variable v{name, lower, upper, init};
    variables_.push_back(std::move(v));
    VariableRef ref;
    ref.node = id_;
    ref.local = static_cast<int>(variables_.size()) - 1;
    return ref;
  }

  void add_constraint(const Expr& expr,
                      ConstraintKind kind = ConstraintKind::Equality,
                      double lo = 0.0, double hi = 0.0) {
    validate_ownership(expr);
    constraints_.push_back(Constraint{expr, kind, lo, hi});
  }

  /// lhs == rhs as the equality lhs - rhs == 0.
  void add_equality(const Expr& lhs, const Expr& rhs) {
    add_constraint(lhs - rhs, ConstraintKind::Equality);
  }
  void add_inequality(const Expr& expr, double lo, double hi) {
    add_constraint(expr, ConstraintKind::Inequality, lo, hi);
  }

  void set_objective(const Expr& expr) {
    validate_ownership(expr);
    objective_ = expr;
  }
  void add_to_objective(const Expr& expr) {
    validate_ownership(expr);
    objective_ = objective_ + expr;
  }

  const std::vector<Variable>& variables() const { return variables_; }
  std::vector<Variable>& variables() { return variables_; }
  const std::vector<Constraint>& constraints() const { return constraints_; }
  const Expr& objective() const { return objective_; }

  int num_variables() const { return static_cast<int>(variables_.size()); }

  Expr var(int local) const {
    if (local < 0 || local >= num_variables())
      throw IndexError("local variable index out of range");
    VariableRef r;
    r.node = id_;
    r.local = local;
    return Expr::variable(r);
  }

 private:
  void validate_ownership(const Expr& expr) const {
    for (const auto& v : collect_variables(expr)) {
      if (v.node != id_)
        throw CrossNodeExpression(
            "expression on node " + std::to_string(id_) +
            " references a variable of node " + std::to_string(v.node));
      if (v.local < 0 || v.local >= num_variables())
        throw IndexError("expression references variable " +
                         std::to_string(v.local) + " not present on node " +
                         std::to_string(id_));
    }
  }

  std::int64_t id_;
  std::string name_;
  std::vector<Variable> variables_;
  std::vector<Constraint> constraints_;
  Expr objective_ = Expr::constant(0.0);
};

/// Node membership labeling that defines a partition into subgraphs.
struct Partition {
  std::vector<int> membership;  // one entry per node in all_nodes order
  int num_parts = 0;
};

struct BlockRange {
  std::int64_t node_id = -1;
  int var_start = 0, var_count = 0;
  int con_start = 0, con_count = 0;
};

/// The flattened standard-form problem: minimize objective subject to
/// equality constraints and variable bounds. Model inequalities are
/// converted to equalities with bounded slack variables here, so every row
/// is an equality. Immutable once built; shareable across threads.
struct FlatNLP {
  int n_vars = 0;
  int n_cons = 0;
  int n_internal = 0;  // rows [n_internal, n_cons) are link rows
  std::vector<double> lower, upper, x0;
  std::vector<Expr> constraints;
  Expr objective = Expr::constant(0.0);
  std::vector<BlockRange> blocks;
  std::vector<int> link_rows;
  std::vector<std::string> var_names;
  std::int64_t master_node = -1;  // optional two-stage annotation

  int block_of_node(std::int64_t node_id) const {
    for (std::size_t b = 0; b < blocks.size(); ++b)
      if (blocks[b].node_id == node_id) return static_cast<int>(b);
    return -1;
  }
};

/// Hierarchical model container: nodes, link-constraint edges and nested
/// subgraphs. Node ids are unique across the whole hierarchy.
class OptiGraph {
 public:
  OptiGraph() : counter_(std::make_shared<std::int64_t>(0)) {}

  OptiNode& add_node(const std::string& name = "") {
    const std::int64_t id = (*counter_)++;
    auto node = std::make_unique<OptiNode>(
        id, name.empty() ? "n" + std::to_string(id) : name);
    nodes_.push_back(std::move(node));
    return *nodes_.back();
  }

  OptiGraph& add_subgraph() {
    auto g = std::unique_ptr<OptiGraph>(new OptiGraph(counter_, this));
    subgraphs_.push_back(std::move(g));
    return *subgraphs_.back();
  }

  LinkConstraint& link_constraint(const Expr& expr,
                                  ConstraintKind kind = ConstraintKind::Equality,
                                  double lo = 0.0, double hi = 0.0) {
    std::set<std::int64_t> ids;
    for (const auto& v : collect_variables(expr)) ids.insert(v.node);
    if (ids.size() < 2)
      throw SingleNodeLink(
          "link constraint must reference at least two nodes");
    for (auto id : ids)
      if (find_node(id) == nullptr)
        throw UnreachableNode("link references node " + std::to_string(id) +
                              " not reachable from this graph");
    LinkConstraint lc;
    lc.expr = expr;
    lc.kind = kind;
    lc.lo = lo;
    lc.hi = hi;
    lc.support.assign(ids.begin(), ids.end());
    links_.push_back(std::move(lc));
    return links_.back();
  }

  const std::vector<std::unique_ptr<OptiNode>>& nodes() const { return nodes_; }
  const std::vector<LinkConstraint>& links() const { return links_; }
  const std::vector<std::unique_ptr<OptiGraph>>& subgraphs() const {
    return subgraphs_;
  }
  OptiGraph* parent() const { return parent_; }

  /// Traversal order: this graph's nodes first, then subgraphs depth-first
  /// in insertion order.
  std::vector<OptiNode*> all_nodes() const {
    std::vector<OptiNode*> out;
    collect_nodes(out);
    return out;
  }

  /// Links in the same traversal order as all_nodes: this level first, then
  /// subgraphs depth-first.
  std::vector<const LinkConstraint*> all_links() const {
    std::vector<const LinkConstraint*> out;
    collect_links(out);
    return out;
  }

  OptiNode* find_node(std::int64_t id) const {
    for (const auto& n : nodes_)
      if (n->id() == id) return n.get();
    for (const auto& g : subgraphs_) {
      if (OptiNode* n = g->find_node(id)) return n;
    }
    return nullptr;
  }

  // --- restructuring ---------------------------------------------------

  /// Restructures the graph in place into exactly p.num_parts subgraphs.
  /// Node i of all_nodes moves to subgraph p.membership[i]; a link moves
  /// into a subgraph when its whole support lands there, otherwise it stays
  /// at this level. The flattened problem is unchanged up to ordering.
  void partition(const Partition& p) {
    auto order = all_nodes();
    if (p.membership.size() != order.size())
      throw LengthMismatch("membership length " +
                           std::to_string(p.membership.size()) +
                           " does not match node count " +
                           std::to_string(order.size()));
    if (p.num_parts < 1 || p.num_parts > static_cast<int>(order.size()))
      throw InvalidPartCount("invalid part count " +
                             std::to_string(p.num_parts));
    std::vector<char> used(p.num_parts, 0);
    std::unordered_map<std::int64_t, int> part_of;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const int m = p.membership[i];
      if (m < 0 || m >= p.num_parts)
        throw InvalidPartCount("membership value " + std::to_string(m) +
                               " outside [0, " + std::to_string(p.num_parts) +
                               ")");
      used[m] = 1;
      part_of[order[i]->id()] = m;
    }
    for (int q = 0; q < p.num_parts; ++q)
      if (!used[q]) throw EmptyPart("part " + std::to_string(q) + " is empty");

    std::vector<std::unique_ptr<OptiNode>> detached;
    std::vector<LinkConstraint> all_lc;
    detach_recursive(detached, all_lc);
    subgraphs_.clear();
    // detach order equals all_nodes order
    std::vector<OptiGraph*> parts;
    for (int q = 0; q < p.num_parts; ++q) parts.push_back(&add_subgraph());
    for (std::size_t i = 0; i < detached.size(); ++i) {
      const int q = part_of.at(detached[i]->id());
      parts[q]->nodes_.push_back(std::move(detached[i]));
    }
    for (auto& lc : all_lc) {
      const int q0 = part_of.at(lc.support.front());
      const bool same = std::all_of(
          lc.support.begin(), lc.support.end(),
          [&](std::int64_t id) { return part_of.at(id) == q0; });
      if (same)
        parts[q0]->links_.push_back(std::move(lc));
      else
        links_.push_back(std::move(lc));
    }
  }

  /// Collapses each top-level subgraph into a single node carrying the
  /// union of its variables (renamed "<node_id>.<name>") and constraints;
  /// links internal to a subgraph become node constraints. Returns a new
  /// graph; this graph is left untouched.
  OptiGraph aggregate() const {
    OptiGraph out;
    // (old node id, old local) -> ref on the new graph
    std::map<std::pair<std::int64_t, int>, VariableRef> var_map;

    for (const auto& n : nodes_) {
      OptiNode& copy = out.add_node(n->name());
      for (int l = 0; l < n->num_variables(); ++l) {
        const Variable& v = n->variables()[l];
        var_map[{n->id(), l}] =
            copy.add_variable(v.name, v.lower, v.upper, v.init);
      }
    }
    std::vector<OptiNode*> agg_nodes;
    for (const auto& g : subgraphs_) {
      OptiNode& agg = out.add_node("agg" + std::to_string(agg_nodes.size()));
      agg_nodes.push_back(&agg);
      for (const OptiNode* n : g->all_nodes()) {
        for (int l = 0; l < n->num_variables(); ++l) {
          const Variable& v = n->variables()[l];
          var_map[{n->id(), l}] = agg.add_variable(
              std::to_string(n->id()) + "." + v.name, v.lower, v.upper, v.init);
        }
      }
    }
    auto rebind = [&](const Expr& e) {
      return remap_variables(e, [&](const VariableRef& v) {
        return var_map.at({v.node, v.local});
      });
    };
    // node contents after all variables exist
    auto top = nodes_.begin();
    for (std::size_t i = 0; i < nodes_.size(); ++i, ++top) {
      OptiNode& copy = *out.nodes_[i];
      for (const auto& c : (*top)->constraints())
        copy.add_constraint(rebind(c.expr), c.kind, c.lo, c.hi);
      if (!(*top)->objective().is_zero_constant())
        copy.set_objective(rebind((*top)->objective()));
    }
    for (std::size_t s = 0; s < subgraphs_.size(); ++s) {
      OptiNode& agg = *agg_nodes[s];
      std::vector<Expr> objective_terms;
      for (const OptiNode* n : subgraphs_[s]->all_nodes()) {
        for (const auto& c : n->constraints())
          agg.add_constraint(rebind(c.expr), c.kind, c.lo, c.hi);
        if (!n->objective().is_zero_constant())
          objective_terms.push_back(rebind(n->objective()));
      }
      for (const LinkConstraint* lc : subgraphs_[s]->all_links())
        agg.add_constraint(rebind(lc->expr), lc->kind, lc->lo, lc->hi);
      if (!objective_terms.empty())
        agg.set_objective(Expr::sum(std::move(objective_terms)));
    }
    for (const auto& lc : links_) {
      const Expr e = rebind(lc.expr);
      std::set<std::int64_t> ids;
      for (const auto& v : collect_variables(e)) ids.insert(v.node);
      if (ids.size() >= 2) {
        out.link_constraint(e, lc.kind, lc.lo, lc.hi);
      } else {
        out.find_node(*ids.begin())->add_constraint(e, lc.kind, lc.lo, lc.hi);
      }
    }
    return out;
  }

  // --- flattening --------------------------------------------------------

  FlatNLP flatten() const {
    FlatNLP flat;
    auto order = all_nodes();
    auto links = all_links();

    // variable layout: node variables, then slacks of the node's own
    // inequality constraints, then slacks of link inequalities homed here
    // (a link slack lives on the first support node in traversal order).
    std::unordered_map<std::int64_t, int> node_pos;
    for (std::size_t i = 0; i < order.size(); ++i)
      node_pos[order[i]->id()] = static_cast<int>(i);

    std::vector<std::vector<const LinkConstraint*>> homed_links(order.size());
    for (const LinkConstraint* lc : links) {
      if (lc->kind != ConstraintKind::Inequality) continue;
      int home = static_cast<int>(order.size());
      for (auto id : lc->support) home = std::min(home, node_pos.at(id));
      homed_links[home].push_back(lc);
    }

    std::map<std::pair<std::int64_t, int>, int> global_of;
    std::unordered_map<const LinkConstraint*, int> link_slack;
    flat.blocks.resize(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      const OptiNode* n = order[i];
      BlockRange& blk = flat.blocks[i];
      blk.node_id = n->id();
      blk.var_start = flat.n_vars;
      for (int l = 0; l < n->num_variables(); ++l) {
        const Variable& v = n->variables()[l];
        global_of[{n->id(), l}] = flat.n_vars++;
        flat.lower.push_back(v.lower);
        flat.upper.push_back(v.upper);
        flat.x0.push_back(v.init);
        flat.var_names.push_back(n->name() + "." + v.name);
      }
      int islack = 0;
      for (const auto& c : n->constraints()) {
        if (c.kind != ConstraintKind::Inequality) continue;
        flat.n_vars++;
        flat.lower.push_back(c.lo);
        flat.upper.push_back(c.hi);
        flat.x0.push_back(0.0);
        flat.var_names.push_back(n->name() + ".slack" + std::to_string(islack));
        ++islack;
      }
      for (const LinkConstraint* lc : homed_links[i]) {
        link_slack[lc] = flat.n_vars++;
        flat.lower.push_back(lc->lo);
        flat.upper.push_back(lc->hi);
        flat.x0.push_back(0.0);
        flat.var_names.push_back(n->name() + ".lslack" + std::to_string(islack));
        ++islack;
      }
      blk.var_count = flat.n_vars - blk.var_start;
    }

    auto rebind = [&](const Expr& e) {
      return remap_variables(e, [&](const VariableRef& v) {
        VariableRef g = v;
        g.global = global_of.at({v.node, v.local});
        return g;
      });
    };

    // internal rows first, grouped by node
    for (std::size_t i = 0; i < order.size(); ++i) {
      const OptiNode* n = order[i];
      BlockRange& blk = flat.blocks[i];
      blk.con_start = static_cast<int>(flat.constraints.size());
      int slack_global = blk.var_start + n->num_variables();
      for (const auto& c : n->constraints()) {
        Expr row = rebind(c.expr);
        if (c.kind == ConstraintKind::Inequality) {
          VariableRef s;
          s.node = n->id();
          s.local = -1;
          s.global = slack_global++;
          row = row - Expr::variable(s);
        }
        flat.constraints.push_back(std::move(row));
      }
      blk.con_count = static_cast<int>(flat.constraints.size()) - blk.con_start;
    }
    flat.n_internal = static_cast<int>(flat.constraints.size());
    for (const LinkConstraint* lc : links) {
      Expr row = rebind(lc->expr);
      if (lc->kind == ConstraintKind::Inequality) {
        VariableRef s;
        s.global = link_slack.at(lc);
        s.local = -1;
        row = row - Expr::variable(s);
      }
      flat.link_rows.push_back(static_cast<int>(flat.constraints.size()));
      flat.constraints.push_back(std::move(row));
    }
    flat.n_cons = static_cast<int>(flat.constraints.size());

    // objective: sum of node objectives
    std::vector<Expr> terms;
    for (const OptiNode* n : order)
      if (!n->objective().is_zero_constant())
        terms.push_back(rebind(n->objective()));
    flat.objective = Expr::sum(std::move(terms));

    init_slacks(flat);
    return flat;
  }

  // --- built-in heuristic partitioner -------------------------------------

  /// Greedy breadth-first growth over the link adjacency, balancing part
  /// sizes within one node. Deterministic for a fixed graph ordering.
  Partition heuristic_partition(int parts) const {
    auto order = all_nodes();
    const int n = static_cast<int>(order.size());
    if (parts < 1 || parts > n)
      throw InvalidPartCount("part count " + std::to_string(parts) +
                             " out of range for " + std::to_string(n) +
                             " nodes");
    std::unordered_map<std::int64_t, int> pos;
    for (int i = 0; i < n; ++i) pos[order[i]->id()] = i;
    std::vector<std::set<int>> adj(n);
    for (const LinkConstraint* lc : all_links()) {
      for (auto a : lc->support)
        for (auto b : lc->support) {
          if (a == b) continue;
          adj[pos.at(a)].insert(pos.at(b));
        }
    }
    Partition p;
    p.num_parts = parts;
    p.membership.assign(n, -1);
    std::vector<int> target(parts, n / parts);
    for (int q = 0; q < n % parts; ++q) target[q]++;
    int next_seed = 0;
    for (int q = 0; q < parts; ++q) {
      int filled = 0;
      std::vector<int> queue;
      std::size_t head = 0;
      while (filled < target[q]) {
        if (head == queue.size()) {
          while (next_seed < n && p.membership[next_seed] != -1) ++next_seed;
          queue.push_back(next_seed);
        }
        const int v = queue[head++];
        if (p.membership[v] != -1) continue;
        p.membership[v] = q;
        ++filled;
        for (int w : adj[v])
          if (p.membership[w] == -1) queue.push_back(w);
      }
    }
    return p;
  }

  struct AdjacencyExport {
    std::vector<std::string> labels;
    std::vector<std::pair<int, int>> edges;  // indices into labels, a < b
    std::vector<int> part;  // top-level subgraph index, -1 for root nodes
  };

  /// Clique expansion of the link hypergraph with stable node ordering.
  AdjacencyExport adjacency_export() const {
    AdjacencyExport out;
    auto order = all_nodes();
    std::unordered_map<std::int64_t, int> pos;
    for (std::size_t i = 0; i < order.size(); ++i) {
      pos[order[i]->id()] = static_cast<int>(i);
      out.labels.push_back(order[i]->name());
    }
    out.part.assign(order.size(), -1);
    for (std::size_t s = 0; s < subgraphs_.size(); ++s)
      for (const OptiNode* n : subgraphs_[s]->all_nodes())
        out.part[pos.at(n->id())] = static_cast<int>(s);
    std::set<std::pair<int, int>> edges;
    for (const LinkConstraint* lc : all_links())
      for (auto a : lc->support)
        for (auto b : lc->support) {
          const int pa = pos.at(a), pb = pos.at(b);
          if (pa < pb) edges.emplace(pa, pb);
        }
    out.edges.assign(edges.begin(), edges.end());
    return out;
  }

 private:
  OptiGraph(std::shared_ptr<std::int64_t> counter, OptiGraph* parent)
      : parent_(parent), counter_(std::move(counter)) {}

  void collect_nodes(std::vector<OptiNode*>& out) const {
    for (const auto& n : nodes_) out.push_back(n.get());
    for (const auto& g : subgraphs_) g->collect_nodes(out);
  }
  void collect_links(std::vector<const LinkConstraint*>& out) const {
    for (const auto& l : links_) out.push_back(&l);
    for (const auto& g : subgraphs_) g->collect_links(out);
  }
  void detach_recursive(std::vector<std::unique_ptr<OptiNode>>& nodes,
                        std::vector<LinkConstraint>& links) {
    for (auto& n : nodes_) nodes.push_back(std::move(n));
    nodes_.clear();
    for (auto& l : links_) links.push_back(std::move(l));
    links_.clear();
    for (auto& g : subgraphs_) g->detach_recursive(nodes, links);
    subgraphs_.clear();
  }

  static void init_slacks(FlatNLP& flat);

  std::vector<std::unique_ptr<OptiNode>> nodes_;
  std::vector<LinkConstraint> links_;
  std::vector<std::unique_ptr<OptiGraph>> subgraphs_;
  OptiGraph* parent_ = nullptr;
  std::shared_ptr<std::int64_t> counter_;
};

/// Slack starting values: each slack row has the form g(x) - s == 0, so the
/// natural start is s0 = clamp(g(x0), lo, hi). Rows are identified by the
/// trailing "- s" structure introduced in flatten().
inline void OptiGraph::init_slacks(FlatNLP& flat) {
  for (const Expr& row : flat.constraints) {
    const ExprNode& n = row.node();
    if (n.kind != ExprKind::Difference) continue;
    const ExprNode& rhs = *n.children[1];
    if (rhs.kind != ExprKind::Variable || rhs.var.local != -1) continue;
    const int s = rhs.var.global;
    const Expr g = Expr::adopt(n.children[0]);
    double g0;
    try {
      g0 = evaluate(g, flat.x0);
    } catch (const Error&) {
      g0 = 0.0;
    }
    flat.x0[s] = std::min(flat.upper[s], std::max(flat.lower[s], g0));
  }
}

}  // namespace graphnlp

#endif  // GRAPHNLP_OPTIGRAPH_HPP
