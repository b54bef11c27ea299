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

#ifndef GRAPHNLP_MODEL_JSON_HPP
#define GRAPHNLP_MODEL_JSON_HPP

#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "graphnlp/errors.hpp"
#include "graphnlp/optigraph.hpp"

namespace graphnlp {

using json = nlohmann::json;

// --- s-expression form of expressions ---------------------------------------
// constants are plain numbers; variables are ["var", node, local] (or
// ["var", global] in flat contexts); operators are prefix arrays, e.g.
// ["*", 100.0, ["^", ["-", -2.0, ["var", 0]], 2]].

inline json expr_to_sexpr(const Expr& e) {
  const ExprNode& n = e.node();
  switch (n.kind) {
    case ExprKind::Constant:
      return n.scalar;
    case ExprKind::Variable:
      if (n.var.node >= 0)
        return json::array({"var", n.var.node, n.var.local});
      return json::array({"var", n.var.global});
    case ExprKind::Sum: {
      json a = json::array({"+"});
      for (const auto& c : n.children) a.push_back(expr_to_sexpr(Expr::adopt(c)));
      return a;
    }
    case ExprKind::Difference:
      return json::array({"-", expr_to_sexpr(Expr::adopt(n.children[0])),
                          expr_to_sexpr(Expr::adopt(n.children[1]))});
    case ExprKind::Product:
      return json::array({"*", expr_to_sexpr(Expr::adopt(n.children[0])),
                          expr_to_sexpr(Expr::adopt(n.children[1]))});
    case ExprKind::Quotient:
      return json::array({"/", expr_to_sexpr(Expr::adopt(n.children[0])),
                          expr_to_sexpr(Expr::adopt(n.children[1]))});
    case ExprKind::Power: {
      json ex = n.integer_exponent ? json(static_cast<long long>(n.scalar))
                                   : json(n.scalar);
      return json::array(
          {"^", expr_to_sexpr(Expr::adopt(n.children[0])), ex});
    }
    case ExprKind::Exp:
      return json::array({"exp", expr_to_sexpr(Expr::adopt(n.children[0]))});
    case ExprKind::Log:
      return json::array({"log", expr_to_sexpr(Expr::adopt(n.children[0]))});
    case ExprKind::SmoothAbs:
      return json::array({"sabs", expr_to_sexpr(Expr::adopt(n.children[0]))});
  }
  throw ParseError("unknown expression kind");
}

/// Rebuilds an expression from its s-expression. resolve maps
/// (node, local) to a VariableRef; the one-argument variable form gets
/// node = -1 and local = global = index.
inline Expr sexpr_to_expr(
    const json& j,
    const std::function<VariableRef(std::int64_t, int)>& resolve) {
  if (j.is_number()) return Expr::constant(j.get<double>());
  if (!j.is_array() || j.empty() || !j[0].is_string())
    throw ParseError("malformed s-expression: " + j.dump());
  const std::string op = j[0].get<std::string>();
  auto arg = [&](std::size_t i) { return sexpr_to_expr(j[i], resolve); };
  if (op == "var") {
    if (j.size() == 2) {
      const int g = j[1].get<int>();
      VariableRef v;
      v.node = -1;
      v.local = g;
      v.global = g;
      return Expr::variable(v);
    }
    if (j.size() == 3)
      return Expr::variable(
          resolve(j[1].get<std::int64_t>(), j[2].get<int>()));
    throw ParseError("var takes one or two indices");
  }
  if (op == "+") {
    std::vector<Expr> terms;
    for (std::size_t i = 1; i < j.size(); ++i) terms.push_back(arg(i));
    return Expr::sum(std::move(terms));
  }
  if (op == "-") {
    if (j.size() == 2) return Expr::constant(0.0) - arg(1);
    if (j.size() == 3) return arg(1) - arg(2);
    throw ParseError("- takes one or two operands");
  }
  if (op == "*") {
    if (j.size() < 3) throw ParseError("* takes at least two operands");
    Expr acc = arg(1);
    for (std::size_t i = 2; i < j.size(); ++i) acc = acc * arg(i);
    return acc;
  }
  if (op == "/") {
    if (j.size() != 3) throw ParseError("/ takes two operands");
    return arg(1) / arg(2);
  }
  if (op == "^") {
    if (j.size() != 3 || !j[2].is_number())
      throw ParseError("^ takes a base and a numeric exponent");
    if (j[2].is_number_integer())
      return Expr::pow(arg(1), j[2].get<int>());
    return Expr::pow(arg(1), j[2].get<double>());
  }
  if (op == "exp") return Expr::exp(arg(1));
  if (op == "log") return Expr::log(arg(1));
  if (op == "sabs") return Expr::smooth_abs(arg(1));
  throw ParseError("unknown operator in s-expression: " + op);
}

// --- whole-model serialization ----------------------------------------------

inline json bound_to_json(double b) {
  if (b == kInf) return "inf";
  if (b == -kInf) return "-inf";
  return b;
}

inline double bound_from_json(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    throw ParseError("bad bound value: " + s);
  }
  return j.get<double>();
}

namespace model_json_detail {

inline json graph_to_json(const OptiGraph& g) {
  json out;
  out["nodes"] = json::array();
  for (const auto& n : g.nodes()) {
    json jn;
    jn["id"] = n->id();
    jn["name"] = n->name();
    jn["variables"] = json::array();
    for (const auto& v : n->variables())
      jn["variables"].push_back({{"name", v.name},
                                 {"lb", bound_to_json(v.lower)},
                                 {"ub", bound_to_json(v.upper)},
                                 {"init", v.init}});
    jn["constraints"] = json::array();
    for (const auto& c : n->constraints()) {
      json jc;
      jc["expr"] = expr_to_sexpr(c.expr);
      if (c.kind == ConstraintKind::Equality) {
        jc["kind"] = "eq";
      } else {
        jc["kind"] = "ineq";
        jc["lo"] = bound_to_json(c.lo);
        jc["hi"] = bound_to_json(c.hi);
      }
      jn["constraints"].push_back(std::move(jc));
    }
    if (!n->objective().is_zero_constant())
      jn["objective"] = expr_to_sexpr(n->objective());
    out["nodes"].push_back(std::move(jn));
  }
  out["links"] = json::array();
  for (const auto& l : g.links()) {
    json jl;
    jl["expr"] = expr_to_sexpr(l.expr);
    if (l.kind == ConstraintKind::Equality) {
      jl["kind"] = "eq";
    } else {
      jl["kind"] = "ineq";
      jl["lo"] = bound_to_json(l.lo);
      jl["hi"] = bound_to_json(l.hi);
    }
    out["links"].push_back(std::move(jl));
  }
  out["subgraphs"] = json::array();
  for (const auto& s : g.subgraphs())
    out["subgraphs"].push_back(graph_to_json(*s));
  return out;
}

// creates nodes and variables and fills the id translation map
inline void build_nodes(const json& jg, OptiGraph& g,
                        std::map<std::int64_t, OptiNode*>& by_file_id) {
  for (const auto& jn : jg.at("nodes")) {
    OptiNode& n = g.add_node(jn.value("name", ""));
    const std::int64_t file_id = jn.at("id").get<std::int64_t>();
    if (by_file_id.count(file_id))
      throw ParseError("duplicate node id " + std::to_string(file_id));
    by_file_id[file_id] = &n;
    for (const auto& jv : jn.at("variables"))
      n.add_variable(jv.at("name").get<std::string>(),
                     bound_from_json(jv.at("lb")), bound_from_json(jv.at("ub")),
                     jv.value("init", 0.0));
  }
  for (const auto& js : jg.at("subgraphs"))
    build_nodes(js, g.add_subgraph(), by_file_id);
}

inline void build_constraints(
    const json& jg, OptiGraph& g,
    const std::map<std::int64_t, OptiNode*>& by_file_id) {
  auto resolve = [&](std::int64_t file_node, int local) {
    auto it = by_file_id.find(file_node);
    if (it == by_file_id.end())
      throw ParseError("expression references unknown node " +
                       std::to_string(file_node));
    VariableRef v;
    v.node = it->second->id();
    v.local = local;
    return v;
  };
  std::size_t node_index = 0;
  for (const auto& jn : jg.at("nodes")) {
    OptiNode& n = *g.nodes()[node_index++];
    for (const auto& jc : jn.at("constraints")) {
      const Expr e = sexpr_to_expr(jc.at("expr"), resolve);
      if (jc.at("kind") == "eq")
        n.add_constraint(e);
      else
        n.add_inequality(e, bound_from_json(jc.at("lo")),
                         bound_from_json(jc.at("hi")));
    }
    if (jn.contains("objective"))
      n.set_objective(sexpr_to_expr(jn.at("objective"), resolve));
  }
  for (const auto& jl : jg.at("links")) {
    const Expr e = sexpr_to_expr(jl.at("expr"), resolve);
    if (jl.at("kind") == "eq")
      g.link_constraint(e);
    else
      g.link_constraint(e, ConstraintKind::Inequality,
                        bound_from_json(jl.at("lo")),
                        bound_from_json(jl.at("hi")));
  }
  std::size_t sub_index = 0;
  for (const auto& js : jg.at("subgraphs"))
    build_constraints(js, *g.subgraphs()[sub_index++], by_file_id);
}

}  // namespace model_json_detail

/// A parsed model file: the graph plus metadata, with the master-node
/// annotation already translated to the rebuilt node ids.
struct ModelFile {
  OptiGraph graph;
  std::string name;
  std::string generator;
  json config = json::object();
  std::int64_t master_node = -1;
};

inline json model_to_json(const OptiGraph& g, const std::string& name,
                          const std::string& generator,
                          const json& config = json::object(),
                          std::int64_t master_node = -1) {
  json out;
  out["metadata"] = {{"name", name}, {"generator", generator},
                     {"config", config}};
  if (master_node >= 0) out["metadata"]["master_node"] = master_node;
  out["graph"] = model_json_detail::graph_to_json(g);
  return out;
}

inline ModelFile model_from_json(const json& j) {
  try {
    ModelFile mf;
    const json& jg = j.at("graph");
    std::map<std::int64_t, OptiNode*> by_file_id;
    model_json_detail::build_nodes(jg, mf.graph, by_file_id);
    model_json_detail::build_constraints(jg, mf.graph, by_file_id);
    if (j.contains("metadata")) {
      const json& md = j.at("metadata");
      mf.name = md.value("name", "");
      mf.generator = md.value("generator", "");
      if (md.contains("config")) mf.config = md.at("config");
      if (md.contains("master_node")) {
        const auto file_id = md.at("master_node").get<std::int64_t>();
        auto it = by_file_id.find(file_id);
        if (it == by_file_id.end())
          throw ParseError("metadata master_node " + std::to_string(file_id) +
                           " is not a node of the model");
        mf.master_node = it->second->id();
      }
    }
    return mf;
  } catch (const json::exception& e) {
    throw ParseError(std::string("model schema error: ") + e.what());
  }
}

inline void write_model_file(const std::string& path, const json& model) {
  std::ofstream f(path);
  if (!f) throw ParseError("cannot open " + path + " for writing");
  f << model.dump(1) << "\n";
}

inline ModelFile read_model_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("JSON parse error: ") + e.what());
  }
  return model_from_json(j);
}

// --- graph drawing and adjacency exports ------------------------------------

inline void write_dot(const OptiGraph& g, std::ostream& os) {
  auto adj = g.adjacency_export();
  os << "graph model {\n  node [shape=circle];\n";
  static const char* palette[] = {"lightblue",  "lightgreen", "lightsalmon",
                                  "plum",       "khaki",      "lightcyan",
                                  "mistyrose",  "palegreen"};
  for (std::size_t i = 0; i < adj.labels.size(); ++i) {
    os << "  n" << i << " [label=\"" << adj.labels[i] << "\"";
    if (adj.part[i] >= 0)
      os << ", style=filled, fillcolor=" << palette[adj.part[i] % 8];
    os << "];\n";
  }
  for (const auto& [a, b] : adj.edges) os << "  n" << a << " -- n" << b << ";\n";
  os << "}\n";
}

inline void write_adjacency_csv(const OptiGraph& g, std::ostream& os) {
  auto adj = g.adjacency_export();
  const std::size_t n = adj.labels.size();
  std::vector<std::vector<char>> m(n, std::vector<char>(n, 0));
  for (const auto& [a, b] : adj.edges) m[a][b] = m[b][a] = 1;
  os << "node";
  for (const auto& l : adj.labels) os << "," << l;
  os << "\n";
  for (std::size_t i = 0; i < n; ++i) {
    os << adj.labels[i];
    for (std::size_t j = 0; j < n; ++j) os << "," << int(m[i][j]);
    os << "\n";
  }
}

}  // namespace graphnlp

#endif  // GRAPHNLP_MODEL_JSON_HPP
