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

#ifndef GRAPHNLP_NLP_FUNCTIONS_HPP
#define GRAPHNLP_NLP_FUNCTIONS_HPP

#include <map>
#include <span>
#include <vector>

#include "graphnlp/expr.hpp"
#include "graphnlp/optigraph.hpp"

namespace graphnlp {

/// Compiled evaluator for a FlatNLP: expression tapes, and Jacobian/Hessian
/// sparsity patterns computed once (patterns are identical across all
/// evaluation points).
class NlpFunctions {
 public:
  explicit NlpFunctions(const FlatNLP& flat)
      : n_(flat.n_vars), m_(flat.n_cons), objective_(flat.objective) {
    cons_.reserve(flat.constraints.size());
    for (const auto& c : flat.constraints) cons_.emplace_back(c);

    for (std::size_t i = 0; i < cons_.size(); ++i) {
      for (int g : cons_[i].variables()) {
        jac_rows_.push_back(static_cast<int>(i));
        jac_cols_.push_back(g);
      }
    }

    // union Hessian pattern over objective and constraints
    std::map<std::pair<int, int>, int> slot;
    auto claim = [&](const CompiledExpr& ce) {
      for (const auto& rc : ce.hessian_pattern())
        slot.emplace(rc, 0);
    };
    claim(objective_);
    for (const auto& ce : cons_) claim(ce);
    int k = 0;
    for (auto& [rc, s] : slot) {
      s = k++;
      hess_rows_.push_back(rc.first);
      hess_cols_.push_back(rc.second);
    }
    auto bind = [&](CompiledExpr& ce) {
      std::vector<int> map;
      map.reserve(ce.hessian_pattern().size());
      for (const auto& rc : ce.hessian_pattern()) map.push_back(slot.at(rc));
      ce.set_hessian_slots(map);
    };
    bind(objective_);
    for (auto& ce : cons_) bind(ce);
  }

  int n() const { return n_; }
  int m() const { return m_; }

  double objective(std::span<const double> x) {
    return objective_.value(x, ws_);
  }

  /// Objective value with dense gradient (overwrites grad).
  double objective_gradient(std::span<const double> x,
                            std::span<double> grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    const double f = objective_.value_and_gradient(x, ws_);
    objective_.accumulate_gradient(1.0, ws_, grad);
    return f;
  }

  void constraint_values(std::span<const double> x, std::span<double> c) {
    for (std::size_t i = 0; i < cons_.size(); ++i) c[i] = cons_[i].value(x, ws_);
  }

  const std::vector<int>& jac_rows() const { return jac_rows_; }
  const std::vector<int>& jac_cols() const { return jac_cols_; }
  std::size_t jac_nnz() const { return jac_rows_.size(); }

  /// Constraint values and Jacobian entries (fixed pattern) in one sweep.
  void constraints_and_jacobian(std::span<const double> x, std::span<double> c,
                                std::span<double> jvals) {
    std::size_t k = 0;
    for (std::size_t i = 0; i < cons_.size(); ++i) {
      c[i] = cons_[i].value_and_gradient(x, ws_);
      const auto& vars = cons_[i].variables();
      for (std::size_t j = 0; j < vars.size(); ++j)
        jvals[k++] = cons_[i].gradient_entry(static_cast<int>(j), ws_);
    }
  }

  const std::vector<int>& hess_rows() const { return hess_rows_; }
  const std::vector<int>& hess_cols() const { return hess_cols_; }
  std::size_t hess_nnz() const { return hess_rows_.size(); }

  /// Lower triangle of obj_weight * grad^2 f + sum_i lambda_i * grad^2 c_i
  /// on the fixed union pattern.
  void hessian_values(std::span<const double> x, double obj_weight,
                      std::span<const double> lambda, std::span<double> vals) {
    std::fill(vals.begin(), vals.end(), 0.0);
    if (obj_weight != 0.0 && !objective_.hessian_pattern().empty()) {
      objective_.value_and_gradient(x, ws_);
      objective_.accumulate_hessian(obj_weight, ws_, vals);
    }
    for (std::size_t i = 0; i < cons_.size(); ++i) {
      if (lambda[i] == 0.0 || cons_[i].hessian_pattern().empty()) continue;
      cons_[i].value_and_gradient(x, ws_);
      cons_[i].accumulate_hessian(lambda[i], ws_, vals);
    }
  }

  bool constraint_is_affine(int i) const { return cons_[i].is_affine(); }
  const CompiledExpr& constraint(int i) const { return cons_[i]; }

 private:
  int n_, m_;
  CompiledExpr objective_;
  std::vector<CompiledExpr> cons_;
  std::vector<int> jac_rows_, jac_cols_;
  std::vector<int> hess_rows_, hess_cols_;
  ExprWorkspace ws_;
};

}  // namespace graphnlp

#endif  // GRAPHNLP_NLP_FUNCTIONS_HPP
