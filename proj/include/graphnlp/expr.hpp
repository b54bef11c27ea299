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

#ifndef GRAPHNLP_EXPR_HPP
#define GRAPHNLP_EXPR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "graphnlp/errors.hpp"

namespace graphnlp {

/// Smoothing constant for smooth_abs(u) = sqrt(u^2 + kSmoothAbsEps).
inline constexpr double kSmoothAbsEps = 1e-4;

/// Reference to a decision variable. A variable is owned by a model node
/// (node/local pair); the global index is assigned when the model is
/// flattened. Free-standing expressions (tests, oracles) may set the global
/// index directly and leave node = -1.
struct VariableRef {
  std::int64_t node = -1;
  int local = -1;
  int global = -1;

  friend bool operator==(const VariableRef& a, const VariableRef& b) {
    return a.node == b.node && a.local == b.local && a.global == b.global;
  }
};

enum class ExprKind : std::uint8_t {
  Constant,
  Variable,
  Sum,         // n-ary
  Difference,  // binary
  Product,     // binary
  Quotient,    // binary
  Power,       // unary, integer or real exponent
  Exp,
  Log,
  SmoothAbs,
};

class ExprNode;
using ExprNodePtr = std::shared_ptr<const ExprNode>;

/// One node of an immutable expression DAG.
class ExprNode {
 public:
  ExprKind kind;
  double scalar = 0.0;  // constant value, or the exponent for Power
  bool integer_exponent = false;
  VariableRef var;
  std::vector<ExprNodePtr> children;
};

/// Value-semantic handle to an immutable expression DAG. Expressions are
/// safe to share across threads; all evaluation state lives in a
/// caller-owned ExprWorkspace.
class Expr {
 public:
  Expr() : node_(constant_node(0.0)) {}

  static Expr constant(double c) { return Expr(constant_node(c)); }

  static Expr variable(VariableRef v) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprKind::Variable;
    n->var = v;
    return Expr(std::move(n));
  }

  /// Free-standing variable addressed by global index.
  static Expr variable(int global_index) {
    VariableRef v;
    v.global = global_index;
    v.local = global_index;
    return variable(v);
  }

  static Expr sum(std::vector<Expr> terms) {
    if (terms.empty()) return constant(0.0);
    if (terms.size() == 1) return terms[0];
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprKind::Sum;
    for (auto& t : terms) {
      // flatten nested sums so long chains stay shallow
      if (t.node_->kind == ExprKind::Sum) {
        for (const auto& c : t.node_->children) n->children.push_back(c);
      } else {
        n->children.push_back(t.node_);
      }
    }
    return Expr(std::move(n));
  }

  static Expr pow(const Expr& base, int exponent) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprKind::Power;
    n->scalar = static_cast<double>(exponent);
    n->integer_exponent = true;
    n->children = {base.node_};
    return Expr(std::move(n));
  }

  static Expr pow(const Expr& base, double exponent) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprKind::Power;
    n->scalar = exponent;
    n->integer_exponent = false;
    n->children = {base.node_};
    return Expr(std::move(n));
  }

  static Expr exp(const Expr& a) { return unary(ExprKind::Exp, a); }
  static Expr log(const Expr& a) { return unary(ExprKind::Log, a); }
  static Expr smooth_abs(const Expr& a) { return unary(ExprKind::SmoothAbs, a); }

  /// Wraps an existing DAG node without copying (deserialization, rewrites).
  static Expr adopt(ExprNodePtr n) { return Expr(std::move(n)); }

  friend Expr operator+(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant())
      return constant(a.node_->scalar + b.node_->scalar);
    return sum({a, b});
  }
  friend Expr operator-(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant())
      return constant(a.node_->scalar - b.node_->scalar);
    return binary(ExprKind::Difference, a, b);
  }
  friend Expr operator*(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant())
      return constant(a.node_->scalar * b.node_->scalar);
    return binary(ExprKind::Product, a, b);
  }
  friend Expr operator/(const Expr& a, const Expr& b) {
    return binary(ExprKind::Quotient, a, b);
  }
  friend Expr operator-(const Expr& a) { return constant(0.0) - a; }

  friend Expr operator+(double c, const Expr& a) { return constant(c) + a; }
  friend Expr operator+(const Expr& a, double c) { return a + constant(c); }
  friend Expr operator-(double c, const Expr& a) { return constant(c) - a; }
  friend Expr operator-(const Expr& a, double c) { return a - constant(c); }
  friend Expr operator*(double c, const Expr& a) { return constant(c) * a; }
  friend Expr operator*(const Expr& a, double c) { return a * constant(c); }
  friend Expr operator/(const Expr& a, double c) { return a / constant(c); }
  friend Expr operator/(double c, const Expr& a) { return constant(c) / a; }

  const ExprNode& node() const { return *node_; }
  const ExprNodePtr& ptr() const { return node_; }

  bool is_constant() const { return node_->kind == ExprKind::Constant; }
  bool is_zero_constant() const {
    return is_constant() && node_->scalar == 0.0;
  }

 private:
  explicit Expr(ExprNodePtr n) : node_(std::move(n)) {}

  static ExprNodePtr constant_node(double c) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprKind::Constant;
    n->scalar = c;
    return n;
  }
  static Expr unary(ExprKind k, const Expr& a) {
    auto n = std::make_shared<ExprNode>();
    n->kind = k;
    n->children = {a.node_};
    return Expr(std::move(n));
  }
  static Expr binary(ExprKind k, const Expr& a, const Expr& b) {
    auto n = std::make_shared<ExprNode>();
    n->kind = k;
    n->children = {a.node_, b.node_};
    return Expr(std::move(n));
  }

  ExprNodePtr node_;
};

/// Visits every distinct node of the DAG once (children before parents).
inline void visit_postorder(const Expr& e,
                            const std::function<void(const ExprNode&)>& fn) {
  std::unordered_map<const ExprNode*, bool> seen;
  std::vector<std::pair<const ExprNode*, std::size_t>> stack;
  stack.emplace_back(&e.node(), 0);
  seen[&e.node()] = true;
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->children.size()) {
      const ExprNode* c = n->children[next++].get();
      if (!seen[c]) {
        seen[c] = true;
        stack.emplace_back(c, 0);
      }
    } else {
      fn(*n);
      stack.pop_back();
    }
  }
}

/// All variable references appearing in the expression (one entry per
/// distinct leaf node).
inline std::vector<VariableRef> collect_variables(const Expr& e) {
  std::vector<VariableRef> out;
  visit_postorder(e, [&](const ExprNode& n) {
    if (n.kind == ExprKind::Variable) out.push_back(n.var);
  });
  return out;
}

/// Structure-preserving rewrite of every variable leaf. Used to rebind
/// model expressions onto flattened global indices or aggregated nodes.
inline Expr remap_variables(
    const Expr& e, const std::function<VariableRef(const VariableRef&)>& fn) {
  std::unordered_map<const ExprNode*, ExprNodePtr> memo;
  std::function<ExprNodePtr(const ExprNodePtr&)> rec =
      [&](const ExprNodePtr& n) -> ExprNodePtr {
    auto it = memo.find(n.get());
    if (it != memo.end()) return it->second;
    ExprNodePtr result;
    if (n->kind == ExprKind::Variable) {
      auto m = std::make_shared<ExprNode>(*n);
      m->var = fn(n->var);
      result = m;
    } else if (n->children.empty()) {
      result = n;
    } else {
      auto m = std::make_shared<ExprNode>(*n);
      for (auto& c : m->children) c = rec(c);
      result = m;
    }
    memo.emplace(n.get(), result);
    return result;
  };
  return Expr::adopt(rec(e.ptr()));
}

// --- sparse containers -----------------------------------------------------

/// Sorted sparse vector: (index, value) pairs with strictly increasing index.
using SparseVec = std::vector<std::pair<int, double>>;

/// Coordinate-format sparse matrix. Duplicate entries are summed when the
/// triplet is assembled into a concrete matrix.
struct SparseTriplet {
  std::vector<int> rows;
  std::vector<int> cols;
  std::vector<double> values;
  int nrows = 0;
  int ncols = 0;

  std::size_t nnz() const { return values.size(); }
  void add(int r, int c, double v) {
    rows.push_back(r);
    cols.push_back(c);
    values.push_back(v);
  }
};

// --- compiled tape ----------------------------------------------------------

/// Scratch space for tape sweeps; owned by the caller so evaluations of
/// disjoint expressions may run concurrently.
class ExprWorkspace {
 public:
  std::vector<double> val, dot, adj, adjdot;

  void ensure(std::size_t n) {
    if (val.size() < n) {
      val.resize(n);
      dot.resize(n);
      adj.resize(n);
      adjdot.resize(n);
    }
  }
};

/// An expression linearized into a topologically ordered tape with exact
/// first and second derivative sweeps (reverse for gradients,
/// forward-over-reverse for Hessian columns). The variable list and the
/// Hessian sparsity pattern are fixed at compile time, so patterns are
/// identical across evaluation points.
class CompiledExpr {
 public:
  CompiledExpr() = default;

  explicit CompiledExpr(const Expr& root) { compile(root); }

  int tape_size() const { return static_cast<int>(tape_.size()); }

  /// Sorted global indices of the variables appearing in the expression.
  const std::vector<int>& variables() const { return vars_; }

  /// Lower-triangle Hessian pattern as (row, col) global index pairs with
  /// row >= col, sorted lexicographically.
  const std::vector<std::pair<int, int>>& hessian_pattern() const {
    return hess_pattern_;
  }

  bool is_affine() const { return hess_pattern_.empty(); }

  double value(std::span<const double> x, ExprWorkspace& ws) const {
    forward(x, ws);
    return ws.val[root_];
  }

  /// Computes the value and leaves per-variable adjoints in the workspace.
  /// Gradient entries are then adj(var_slot(i)) for each variable i.
  double value_and_gradient(std::span<const double> x, ExprWorkspace& ws) const {
    forward(x, ws);
    reverse(ws);
    return ws.val[root_];
  }

  double gradient_entry(int var_pos, const ExprWorkspace& ws) const {
    return ws.adj[var_slots_[var_pos]];
  }

  /// Appends gradient contributions scaled by w: grad[g] += w * d expr/d x_g.
  void accumulate_gradient(double w, const ExprWorkspace& ws,
                           std::span<double> grad) const {
    for (std::size_t i = 0; i < vars_.size(); ++i)
      grad[vars_[i]] += w * ws.adj[var_slots_[i]];
  }

  /// Hessian columns grouped by pattern column. For each seed column this
  /// runs one forward-tangent + reverse-tangent sweep and appends
  /// w * H(row, col) into out[slot] for the pattern entries of that column.
  /// Requires value_and_gradient to have been called at the same point.
  void accumulate_hessian(double w, ExprWorkspace& ws,
                          std::span<double> out) const {
    for (const auto& seed : seeds_) {
      std::fill(ws.dot.begin(), ws.dot.begin() + tape_.size(), 0.0);
      ws.dot[var_slots_[seed.var_pos]] = 1.0;
      forward_tangent(ws);
      reverse_tangent(ws);
      for (const auto& [row_slot, out_slot] : seed.entries)
        out[out_slot] += w * ws.adjdot[row_slot];
    }
  }

  /// Remaps the Hessian pattern output slots. entry i of hessian_pattern()
  /// writes to slots[i] in accumulate_hessian's output span.
  void set_hessian_slots(const std::vector<int>& slots) {
    for (auto& seed : seeds_)
      for (auto& [row_slot, out_slot] : seed.entries)
        out_slot = slots[out_slot];
  }

  void ensure_workspace(ExprWorkspace& ws) const { ws.ensure(tape_.size()); }

 private:
  struct Entry {
    ExprKind kind;
    double scalar = 0.0;
    bool integer_exponent = false;
    int global = -1;  // variable global index
    int a = -1, b = -1;  // child slots (binary/unary), or pool range for Sum
  };
  struct Seed {
    int var_pos;  // index into vars_
    std::vector<std::pair<int, int>> entries;  // (row var slot, output slot)
  };

  void compile(const Expr& root) {
    std::unordered_map<const ExprNode*, int> slot_of;
    std::unordered_map<int, int> var_slot_by_global;

    std::vector<std::pair<const ExprNode*, std::size_t>> stack;
    stack.emplace_back(&root.node(), 0);
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (slot_of.count(n)) {
        stack.pop_back();
        continue;
      }
      if (next < n->children.size()) {
        const ExprNode* c = n->children[next++].get();
        if (!slot_of.count(c)) stack.emplace_back(c, 0);
        continue;
      }
      // all children placed; place n
      Entry e;
      e.kind = n->kind;
      e.scalar = n->scalar;
      e.integer_exponent = n->integer_exponent;
      if (n->kind == ExprKind::Variable) {
        e.global = n->var.global;
        auto it = var_slot_by_global.find(e.global);
        if (it != var_slot_by_global.end()) {
          slot_of[n] = it->second;  // merge duplicate leaves of one variable
          stack.pop_back();
          continue;
        }
      }
      if (n->kind == ExprKind::Sum) {
        e.a = static_cast<int>(pool_.size());
        for (const auto& c : n->children) pool_.push_back(slot_of.at(c.get()));
        e.b = static_cast<int>(pool_.size());
      } else if (!n->children.empty()) {
        e.a = slot_of.at(n->children[0].get());
        if (n->children.size() > 1) e.b = slot_of.at(n->children[1].get());
      }
      int slot = static_cast<int>(tape_.size());
      tape_.push_back(e);
      slot_of[n] = slot;
      if (n->kind == ExprKind::Variable) var_slot_by_global[e.global] = slot;
      stack.pop_back();
    }
    root_ = slot_of.at(&root.node());

    // variable list sorted by global index
    std::vector<std::pair<int, int>> gv(var_slot_by_global.begin(),
                                        var_slot_by_global.end());
    std::sort(gv.begin(), gv.end());
    for (auto& [g, s] : gv) {
      vars_.push_back(g);
      var_slots_.push_back(s);
    }

    build_hessian_pattern();
  }

  // Structural Hessian pattern: conservative propagation of nonlinear
  // variable interactions up the tape.
  void build_hessian_pattern() {
    const std::size_t nt = tape_.size();
    std::vector<std::vector<int>> varset(nt);  // sorted globals per slot
    std::set<std::pair<int, int>> pairs;       // (row >= col) global pairs

    auto merge = [](const std::vector<int>& a, const std::vector<int>& b) {
      std::vector<int> out;
      std::set_union(a.begin(), a.end(), b.begin(), b.end(),
                     std::back_inserter(out));
      return out;
    };
    auto self_pairs = [&](const std::vector<int>& vs) {
      for (std::size_t i = 0; i < vs.size(); ++i)
        for (std::size_t j = 0; j <= i; ++j) pairs.emplace(vs[i], vs[j]);
    };
    auto cross_pairs = [&](const std::vector<int>& a,
                           const std::vector<int>& b) {
      for (int u : a)
        for (int v : b) pairs.emplace(std::max(u, v), std::min(u, v));
    };

    for (std::size_t k = 0; k < nt; ++k) {
      const Entry& e = tape_[k];
      switch (e.kind) {
        case ExprKind::Constant:
          break;
        case ExprKind::Variable:
          varset[k] = {e.global};
          break;
        case ExprKind::Sum: {
          std::vector<int> vs;
          for (int p = e.a; p < e.b; ++p) vs = merge(vs, varset[pool_[p]]);
          varset[k] = std::move(vs);
          break;
        }
        case ExprKind::Difference:
          varset[k] = merge(varset[e.a], varset[e.b]);
          break;
        case ExprKind::Product:
          cross_pairs(varset[e.a], varset[e.b]);
          varset[k] = merge(varset[e.a], varset[e.b]);
          break;
        case ExprKind::Quotient:
          cross_pairs(varset[e.a], varset[e.b]);
          self_pairs(varset[e.b]);
          varset[k] = merge(varset[e.a], varset[e.b]);
          break;
        case ExprKind::Power:
          if (e.integer_exponent && (e.scalar == 0.0 || e.scalar == 1.0)) {
            // exact linear cases
          } else {
            self_pairs(varset[e.a]);
          }
          varset[k] = (e.integer_exponent && e.scalar == 0.0)
                          ? std::vector<int>{}
                          : varset[e.a];
          break;
        case ExprKind::Exp:
        case ExprKind::Log:
        case ExprKind::SmoothAbs:
          self_pairs(varset[e.a]);
          varset[k] = varset[e.a];
          break;
      }
    }

    hess_pattern_.assign(pairs.begin(), pairs.end());

    // group entries by seed column for forward-over-reverse sweeps
    std::unordered_map<int, int> slot_by_global;
    for (std::size_t i = 0; i < vars_.size(); ++i)
      slot_by_global[vars_[i]] = var_slots_[i];
    std::unordered_map<int, int> pos_by_global;
    for (std::size_t i = 0; i < vars_.size(); ++i) pos_by_global[vars_[i]] = i;

    std::map<int, Seed> by_col;
    for (std::size_t t = 0; t < hess_pattern_.size(); ++t) {
      auto [r, c] = hess_pattern_[t];
      auto& seed = by_col[c];
      seed.var_pos = pos_by_global.at(c);
      seed.entries.emplace_back(slot_by_global.at(r), static_cast<int>(t));
    }
    for (auto& [c, s] : by_col) seeds_.push_back(std::move(s));
  }

  void forward(std::span<const double> x, ExprWorkspace& ws) const {
    ws.ensure(tape_.size());
    auto& val = ws.val;
    for (std::size_t k = 0; k < tape_.size(); ++k) {
      const Entry& e = tape_[k];
      switch (e.kind) {
        case ExprKind::Constant:
          val[k] = e.scalar;
          break;
        case ExprKind::Variable:
          if (e.global < 0 || e.global >= static_cast<int>(x.size()))
            throw IndexError("variable with global index " +
                             std::to_string(e.global) +
                             " is unbound or out of range");
          val[k] = x[e.global];
          break;
        case ExprKind::Sum: {
          double s = 0.0;
          for (int p = e.a; p < e.b; ++p) s += val[pool_[p]];
          val[k] = s;
          break;
        }
        case ExprKind::Difference:
          val[k] = val[e.a] - val[e.b];
          break;
        case ExprKind::Product:
          val[k] = val[e.a] * val[e.b];
          break;
        case ExprKind::Quotient:
          if (val[e.b] == 0.0) throw DomainError("division by zero");
          val[k] = val[e.a] / val[e.b];
          break;
        case ExprKind::Power: {
          double base = val[e.a];
          if (e.integer_exponent) {
            if (base == 0.0 && e.scalar < 0.0)
              throw DomainError("zero base with negative exponent");
            val[k] = std::pow(base, e.scalar);
          } else {
            if (base <= 0.0)
              throw DomainError("nonpositive base with real exponent");
            val[k] = std::pow(base, e.scalar);
          }
          break;
        }
        case ExprKind::Exp:
          val[k] = std::exp(val[e.a]);
          break;
        case ExprKind::Log:
          if (val[e.a] <= 0.0)
            throw DomainError("log of nonpositive argument");
          val[k] = std::log(val[e.a]);
          break;
        case ExprKind::SmoothAbs:
          val[k] = std::sqrt(val[e.a] * val[e.a] + kSmoothAbsEps);
          break;
      }
    }
  }

  // first partials of entry k with respect to its children, at current vals
  void partials(std::size_t k, const ExprWorkspace& ws, double& pa,
                double& pb) const {
    const Entry& e = tape_[k];
    const auto& val = ws.val;
    switch (e.kind) {
      case ExprKind::Difference:
        pa = 1.0;
        pb = -1.0;
        break;
      case ExprKind::Product:
        pa = val[e.b];
        pb = val[e.a];
        break;
      case ExprKind::Quotient:
        pa = 1.0 / val[e.b];
        pb = -val[e.a] / (val[e.b] * val[e.b]);
        break;
      case ExprKind::Power: {
        double base = val[e.a];
        if (e.integer_exponent && base == 0.0 && e.scalar < 2.0) {
          // d/dx x^1 = 1, x^0 = 0 handled below without pow at 0
          pa = (e.scalar == 1.0) ? 1.0 : 0.0;
        } else {
          pa = e.scalar * std::pow(base, e.scalar - 1.0);
        }
        pb = 0.0;
        break;
      }
      case ExprKind::Exp:
        pa = val[k];
        pb = 0.0;
        break;
      case ExprKind::Log:
        pa = 1.0 / val[e.a];
        pb = 0.0;
        break;
      case ExprKind::SmoothAbs:
        pa = val[e.a] / val[k];
        pb = 0.0;
        break;
      default:
        pa = pb = 0.0;
        break;
    }
  }

  void reverse(ExprWorkspace& ws) const {
    auto& adj = ws.adj;
    std::fill(adj.begin(), adj.begin() + tape_.size(), 0.0);
    adj[root_] = 1.0;
    for (std::size_t k = tape_.size(); k-- > 0;) {
      const Entry& e = tape_[k];
      const double a = adj[k];
      if (a == 0.0) continue;
      if (e.kind == ExprKind::Sum) {
        for (int p = e.a; p < e.b; ++p) adj[pool_[p]] += a;
      } else if (e.b >= 0) {
        double pa, pb;
        partials(k, ws, pa, pb);
        adj[e.a] += pa * a;
        adj[e.b] += pb * a;
      } else if (e.a >= 0) {
        double pa, pb;
        partials(k, ws, pa, pb);
        adj[e.a] += pa * a;
      }
    }
  }

  void forward_tangent(ExprWorkspace& ws) const {
    auto& dot = ws.dot;
    const auto& val = ws.val;
    for (std::size_t k = 0; k < tape_.size(); ++k) {
      const Entry& e = tape_[k];
      switch (e.kind) {
        case ExprKind::Constant:
          dot[k] = 0.0;
          break;
        case ExprKind::Variable:
          break;  // seeded by caller
        case ExprKind::Sum: {
          double s = 0.0;
          for (int p = e.a; p < e.b; ++p) s += dot[pool_[p]];
          dot[k] = s;
          break;
        }
        default: {
          double pa, pb;
          partials(k, ws, pa, pb);
          dot[k] = pa * dot[e.a];
          if (e.b >= 0) dot[k] += pb * dot[e.b];
          break;
        }
      }
      (void)val;
    }
  }

  // Reverse sweep for adjoint tangents:
  //   adjdot(c) += phi_c' * adjdot(k) + adj(k) * sum_j phi_cj'' * dot(j)
  void reverse_tangent(ExprWorkspace& ws) const {
    const auto& val = ws.val;
    const auto& dot = ws.dot;
    const auto& adj = ws.adj;
    auto& adjdot = ws.adjdot;
    std::fill(adjdot.begin(), adjdot.begin() + tape_.size(), 0.0);
    for (std::size_t k = tape_.size(); k-- > 0;) {
      const Entry& e = tape_[k];
      const double ad = adjdot[k];
      const double a = adj[k];
      if (ad == 0.0 && a == 0.0) continue;
      switch (e.kind) {
        case ExprKind::Constant:
        case ExprKind::Variable:
          break;
        case ExprKind::Sum:
          for (int p = e.a; p < e.b; ++p) adjdot[pool_[p]] += ad;
          break;
        case ExprKind::Difference:
          adjdot[e.a] += ad;
          adjdot[e.b] -= ad;
          break;
        case ExprKind::Product:
          adjdot[e.a] += val[e.b] * ad + a * dot[e.b];
          adjdot[e.b] += val[e.a] * ad + a * dot[e.a];
          break;
        case ExprKind::Quotient: {
          const double u = val[e.a], v = val[e.b];
          const double pa = 1.0 / v;
          const double pb = -u / (v * v);
          // d(1/v)/du = 0, d(1/v)/dv = -1/v^2
          // d(-u/v^2)/du = -1/v^2, d(-u/v^2)/dv = 2u/v^3
          const double dpa = -(1.0 / (v * v)) * dot[e.b];
          const double dpb =
              -(1.0 / (v * v)) * dot[e.a] + (2.0 * u / (v * v * v)) * dot[e.b];
          adjdot[e.a] += pa * ad + a * dpa;
          adjdot[e.b] += pb * ad + a * dpb;
          break;
        }
        case ExprKind::Power: {
          const double base = val[e.a];
          double pa, sec;
          if (e.integer_exponent && base == 0.0 && e.scalar < 3.0) {
            pa = (e.scalar == 1.0) ? 1.0 : 0.0;
            sec = (e.scalar == 2.0) ? 2.0 : 0.0;
          } else {
            pa = e.scalar * std::pow(base, e.scalar - 1.0);
            sec = e.scalar * (e.scalar - 1.0) * std::pow(base, e.scalar - 2.0);
          }
          adjdot[e.a] += pa * ad + a * sec * dot[e.a];
          break;
        }
        case ExprKind::Exp: {
          const double w = val[k];
          adjdot[e.a] += w * ad + a * w * dot[e.a];
          break;
        }
        case ExprKind::Log: {
          const double u = val[e.a];
          adjdot[e.a] += (1.0 / u) * ad - a * (1.0 / (u * u)) * dot[e.a];
          break;
        }
        case ExprKind::SmoothAbs: {
          const double w = val[k], u = val[e.a];
          const double pa = u / w;
          const double sec = kSmoothAbsEps / (w * w * w);
          adjdot[e.a] += pa * ad + a * sec * dot[e.a];
          break;
        }
      }
    }
  }

  std::vector<Entry> tape_;
  std::vector<int> pool_;  // child slots of n-ary sums
  int root_ = -1;
  std::vector<int> vars_;       // sorted global indices
  std::vector<int> var_slots_;  // tape slot per variable (same order)
  std::vector<std::pair<int, int>> hess_pattern_;
  std::vector<Seed> seeds_;
};

// --- free-function interface -----------------------------------------------

inline double evaluate(const Expr& expr, std::span<const double> x) {
  CompiledExpr ce(expr);
  ExprWorkspace ws;
  return ce.value(x, ws);
}

inline SparseVec gradient(const Expr& expr, std::span<const double> x) {
  CompiledExpr ce(expr);
  ExprWorkspace ws;
  ce.value_and_gradient(x, ws);
  SparseVec out;
  const auto& vars = ce.variables();
  for (std::size_t i = 0; i < vars.size(); ++i)
    out.emplace_back(vars[i], ce.gradient_entry(static_cast<int>(i), ws));
  return out;
}

/// Jacobian of a constraint list; row i is the gradient of constraints[i].
/// The sparsity pattern depends only on expression structure.
inline SparseTriplet jacobian(const std::vector<Expr>& constraints,
                              std::span<const double> x) {
  SparseTriplet out;
  out.nrows = static_cast<int>(constraints.size());
  out.ncols = static_cast<int>(x.size());
  ExprWorkspace ws;
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    CompiledExpr ce(constraints[i]);
    ce.value_and_gradient(x, ws);
    const auto& vars = ce.variables();
    for (std::size_t j = 0; j < vars.size(); ++j)
      out.add(static_cast<int>(i), vars[j],
              ce.gradient_entry(static_cast<int>(j), ws));
  }
  return out;
}

/// Lower triangle of obj_weight * hess(objective) + sum_i lambda_i * hess(c_i).
inline SparseTriplet lagrangian_hessian(const Expr& objective,
                                        const std::vector<Expr>& constraints,
                                        std::span<const double> x,
                                        double obj_weight,
                                        std::span<const double> lambda) {
  if (lambda.size() != constraints.size())
    throw IndexError("lambda length does not match constraint count");
  std::map<std::pair<int, int>, double> acc;
  ExprWorkspace ws;
  auto add_expr = [&](const Expr& e, double w) {
    CompiledExpr ce(e);
    const auto& pat = ce.hessian_pattern();
    if (pat.empty()) return;
    ce.value_and_gradient(x, ws);
    std::vector<double> vals(pat.size(), 0.0);
    ce.accumulate_hessian(w, ws, vals);
    for (std::size_t t = 0; t < pat.size(); ++t) {
      acc[pat[t]];  // keep structural zeros in the pattern
      acc[pat[t]] += vals[t];
    }
  };
  add_expr(objective, obj_weight);
  for (std::size_t i = 0; i < constraints.size(); ++i)
    add_expr(constraints[i], lambda[i]);

  SparseTriplet out;
  out.nrows = out.ncols = static_cast<int>(x.size());
  for (const auto& [rc, v] : acc) out.add(rc.first, rc.second, v);
  return out;
}

inline bool is_affine(const Expr& e) { return CompiledExpr(e).is_affine(); }

}  // namespace graphnlp

#endif  // GRAPHNLP_EXPR_HPP
