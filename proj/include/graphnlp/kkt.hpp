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

#ifndef GRAPHNLP_KKT_HPP
#define GRAPHNLP_KKT_HPP

#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "graphnlp/errors.hpp"
#include "graphnlp/ldlt.hpp"
#include "graphnlp/nlp_functions.hpp"
#include "graphnlp/optigraph.hpp"
#include "graphnlp/sparse.hpp"

namespace graphnlp {

/// Derivative data for one reduced KKT system
///   [ W + Sigma + dw*I   J^T      ] [dx]   [rhs_x]
///   [ J                  -dc*I    ] [dl] = [rhs_c]
/// assembled by the solver at the current iterate.
struct KktData {
  const FlatNLP* flat = nullptr;
  std::vector<double> sigma;      // n, bound-barrier diagonal
  std::vector<double> jac_vals;   // NlpFunctions jacobian pattern
  std::vector<double> hess_vals;  // NlpFunctions hessian pattern (lower)
  double delta_w = 0.0;
  double delta_c = 0.0;
  std::vector<double> rhs_x;  // n
  std::vector<double> rhs_c;  // m
};

/// Runs job(0..njobs) on up to nthreads workers. Each job writes disjoint
/// state; any ordered reduction is the caller's responsibility, which keeps
/// results identical across thread counts.
inline void parallel_for(int nthreads, int njobs,
                         const std::function<void(int)>& job) {
  const int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw > 0) nthreads = std::min(nthreads, hw);  // avoid oversubscription
  nthreads = std::max(1, std::min(nthreads, njobs));
  if (nthreads <= 1) {
    for (int i = 0; i < njobs; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex err_mutex;
  std::vector<std::thread> workers;
  workers.reserve(nthreads);
  for (int t = 0; t < nthreads; ++t) {
    workers.emplace_back([&] {
      try {
        for (int i; (i = next.fetch_add(1)) < njobs;) job(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  if (err) std::rethrow_exception(err);
}

class KktBackend {
 public:
  virtual ~KktBackend() = default;
  virtual std::string name() const = 0;

  /// Assembles and factorizes at the given data; returns the exact inertia
  /// of the factored system, or nullopt when a sub-factorization hit a zero
  /// pivot (caller regularizes and retries).
  virtual std::optional<Inertia> factorize(const KktData& d) = 0;

  /// Solves the reduced system after a successful factorize; returns the
  /// achieved residual infinity norm.
  virtual double solve(const KktData& d, std::vector<double>& dx,
                       std::vector<double>& dl) = 0;

  /// Dimension of the dense coupling system solved by this backend.
  virtual int schur_dimension() const { return 0; }

  virtual void dump(const std::string& prefix) const { (void)prefix; }
};

namespace kkt_detail {

inline double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

}  // namespace kkt_detail

// ---------------------------------------------------------------------------
// Monolithic backend: one sparse symmetric-indefinite factorization of the
// whole reduced system.
// ---------------------------------------------------------------------------
class MonolithicBackend : public KktBackend {
 public:
  MonolithicBackend(const FlatNLP& flat, const NlpFunctions& funcs)
      : flat_(&flat), n_(flat.n_vars), m_(flat.n_cons) {
    const auto& hr = funcs.hess_rows();
    const auto& hc = funcs.hess_cols();
    const auto& jr = funcs.jac_rows();
    const auto& jc = funcs.jac_cols();
    // triplet layout: [hessian | sigma+dw diag | jacobian | -dc diag]
    for (std::size_t k = 0; k < hr.size(); ++k) push(hr[k], hc[k]);
    for (int i = 0; i < n_; ++i) push(i, i);
    for (std::size_t k = 0; k < jr.size(); ++k) push(n_ + jr[k], jc[k]);
    for (int r = 0; r < m_; ++r) push(n_ + r, n_ + r);
    vals_.resize(rows_.size());
  }

  std::string name() const override { return "monolithic"; }

  std::optional<Inertia> factorize(const KktData& d) override {
    std::size_t k = 0;
    for (double v : d.hess_vals) vals_[k++] = v;
    for (int i = 0; i < n_; ++i) vals_[k++] = d.sigma[i] + d.delta_w;
    for (double v : d.jac_vals) vals_[k++] = v;
    for (int r = 0; r < m_; ++r) vals_[k++] = -d.delta_c;
    matrix_ = SparseSym::from_triplets(n_ + m_, rows_, cols_, vals_);
    LdltOptions opts;
    opts.allow_singular = true;
    if (!symbolic_) symbolic_ = std::make_unique<LdltSymbolic>(matrix_);
    factor_ =
        std::make_unique<Factorization>(ldlt_factor(*symbolic_, matrix_, opts));
    return factor_->inertia();
  }

  double solve(const KktData& d, std::vector<double>& dx,
               std::vector<double>& dl) override {
    std::vector<double> rhs(n_ + m_);
    std::copy(d.rhs_x.begin(), d.rhs_x.end(), rhs.begin());
    std::copy(d.rhs_c.begin(), d.rhs_c.end(), rhs.begin() + n_);
    double res = 0.0;
    auto sol = solve_refined(matrix_, *factor_, rhs, 8, 1e-14, &res);
    dx.assign(sol.begin(), sol.begin() + n_);
    dl.assign(sol.begin() + n_, sol.end());
    return res;
  }

  const SparseSym& matrix() const { return matrix_; }

  void dump(const std::string& prefix) const override {
    write_matrix_market(matrix_, prefix + "_kkt.mtx");
  }

 private:
  void push(int r, int c) {
    rows_.push_back(r);
    cols_.push_back(c);
  }

  const FlatNLP* flat_;
  int n_, m_;
  std::vector<int> rows_, cols_;
  std::vector<double> vals_;
  std::unique_ptr<LdltSymbolic> symbolic_;
  SparseSym matrix_;
  std::unique_ptr<Factorization> factor_;
};

// ---------------------------------------------------------------------------
// Block-bordered view shared by the Schur backends. Each model node is a
// diagonal block; link rows form the border. Requires affine links so the
// Lagrangian Hessian stays block-diagonal.
// ---------------------------------------------------------------------------

/// Assembled block-bordered KKT system: per-node diagonal blocks K_n,
/// border rows, residuals, and the dense Schur matrix once formed.
struct BlockKkt {
  struct Block {
    BlockRange range;
    int dim = 0;              // var_count + con_count (+ absorbed link rows)
    int absorbed_links = 0;   // tree backend only
    SparseSym K;
    std::vector<int> touched;  // border rows (dual) or master cols (tree)
    // border entries: (index into touched, local row in block, value slot)
    std::vector<std::tuple<int, int, int>> border_pattern;
    std::vector<double> border_vals;
  };
  std::vector<Block> blocks;
  int n_links = 0;
  DenseSym schur;
};

/// Primal-dual step of the block system: per-block segments plus link duals.
struct BlockStep {
  std::vector<std::vector<double>> d_block;
  std::vector<double> d_link;
};

class BlockedBackendBase : public KktBackend {
 public:
  BlockedBackendBase(const FlatNLP& flat, const NlpFunctions& funcs,
                     int threads)
      : flat_(&flat), funcs_(&funcs), threads_(std::max(1, threads)) {
    const int n = flat.n_vars;
    var_block_.assign(n, -1);
    for (std::size_t b = 0; b < flat.blocks.size(); ++b) {
      const auto& blk = flat.blocks[b];
      for (int v = blk.var_start; v < blk.var_start + blk.var_count; ++v)
        var_block_[v] = static_cast<int>(b);
    }
    for (int row : flat.link_rows) {
      if (!funcs.constraint_is_affine(row))
        throw NonAffineLink("link row " + std::to_string(row) +
                            " is not affine; Schur backends require affine "
                            "linking constraints");
    }
  }

  int threads() const { return threads_; }
  void set_threads(int t) { threads_ = std::max(1, t); }

 protected:
  // index of a link row within flat.link_rows
  int link_index(int row) const { return row - flat_->n_internal; }

  const FlatNLP* flat_;
  const NlpFunctions* funcs_;
  std::vector<int> var_block_;
  int threads_;
};

// ---------------------------------------------------------------------------
// Dual Schur backend: the border carries every link row; the Schur system has
// one row per linking constraint.
// ---------------------------------------------------------------------------
class SchurDualBackend : public BlockedBackendBase {
 public:
  SchurDualBackend(const FlatNLP& flat, const NlpFunctions& funcs, int threads)
      : BlockedBackendBase(flat, funcs, threads) {
    const int nb = static_cast<int>(flat.blocks.size());
    bk_.blocks.resize(nb);
    triplets_.resize(nb);
    bk_.n_links = static_cast<int>(flat.link_rows.size());
    for (int b = 0; b < nb; ++b) {
      auto& blk = bk_.blocks[b];
      blk.range = flat.blocks[b];
      blk.dim = blk.range.var_count + blk.range.con_count;
    }
    // triplet layout per block mirrors the monolithic assembly order:
    // [hessian | sigma+dw diag | jacobian rows | -dc diag]
    const auto& hr = funcs.hess_rows();
    const auto& hc = funcs.hess_cols();
    for (std::size_t k = 0; k < hr.size(); ++k) {
      const int b = var_block_[hr[k]];
      if (b != var_block_[hc[k]])
        throw NonAffineLink(
            "cross-block Hessian entry; a nonlinear expression couples nodes " +
            std::to_string(b) + " and " + std::to_string(var_block_[hc[k]]));
      add_entry(b, hr[k] - off(b), hc[k] - off(b), static_cast<int>(k), 0);
    }
    for (int b = 0; b < nb; ++b) {
      const auto& r = bk_.blocks[b].range;
      for (int i = 0; i < r.var_count; ++i)
        add_entry(b, i, i, r.var_start + i, 1);
    }
    const auto& jr = funcs.jac_rows();
    const auto& jc = funcs.jac_cols();
    std::vector<std::vector<std::pair<int, int>>> border_by_block(nb);
    for (std::size_t k = 0; k < jr.size(); ++k) {
      const int row = jr[k];
      const int b = var_block_[jc[k]];
      const auto& r = bk_.blocks[b].range;
      if (row < flat.n_internal) {
        if (row < r.con_start || row >= r.con_start + r.con_count)
          throw NonAffineLink("internal row " + std::to_string(row) +
                              " references a foreign block");
        add_entry(b, r.var_count + (row - r.con_start), jc[k] - off(b),
                  static_cast<int>(k), 2);
      } else {
        border_by_block[b].emplace_back(static_cast<int>(k), row);
      }
    }
    for (int b = 0; b < nb; ++b) {
      const auto& r = bk_.blocks[b].range;
      for (int i = 0; i < r.con_count; ++i)
        add_entry(b, r.var_count + i, r.var_count + i, 0, 3);
    }
    // border: touched link rows per block, pattern in jacobian order
    for (int b = 0; b < nb; ++b) {
      auto& blk = bk_.blocks[b];
      std::set<int> touched;
      for (auto& [slot, row] : border_by_block[b])
        touched.insert(link_index(row));
      blk.touched.assign(touched.begin(), touched.end());
      for (auto& [slot, row] : border_by_block[b]) {
        const int t = static_cast<int>(
            std::lower_bound(blk.touched.begin(), blk.touched.end(),
                             link_index(row)) -
            blk.touched.begin());
        const int col = jc[slot] - off(b);
        blk.border_pattern.emplace_back(t, col, slot);
      }
      blk.border_vals.resize(blk.border_pattern.size());
    }
    factors_.resize(nb);
    symbolics_.resize(nb);
  }

  std::string name() const override { return "schur-dual"; }
  int schur_dimension() const override { return bk_.n_links; }
  const BlockKkt& block_kkt() const { return bk_; }

  /// Assembles block matrices and border values without factorizing.
  void assemble_only(const KktData& d) { assemble_blocks(d); }

  std::optional<Inertia> factorize(const KktData& d) override {
    const int nb = static_cast<int>(bk_.blocks.size());
    assemble_blocks(d);
    std::atomic<bool> singular{false};
    parallel_for(threads_, nb, [&](int b) {
      LdltOptions opts;
      opts.allow_singular = true;
      if (!symbolics_[b])
        symbolics_[b] = std::make_unique<LdltSymbolic>(bk_.blocks[b].K);
      factors_[b] = std::make_unique<Factorization>(
          ldlt_factor(*symbolics_[b], bk_.blocks[b].K, opts));
      if (factors_[b]->inertia().zero > 0) singular.store(true);
    });
    if (singular.load()) return std::nullopt;

    // S = -dc*I - sum_b B_b K_b^{-1} B_b^T, formed from batched block solves
    const int nl = bk_.n_links;
    bk_.schur = DenseSym(nl);
    for (int i = 0; i < nl; ++i) bk_.schur.at(i, i) = -d.delta_c;
    std::vector<DenseSym> contrib(nb);
    parallel_for(threads_, nb, [&](int b) {
      contrib[b] = block_schur_contribution(b);
    });
    for (int b = 0; b < nb; ++b) {
      const auto& blk = bk_.blocks[b];
      const int nt = static_cast<int>(blk.touched.size());
      for (int q = 0; q < nt; ++q)
        for (int p = q; p < nt; ++p) {
          bk_.schur.at(blk.touched[p], blk.touched[q]) -= contrib[b].at(p, q);
        }
    }
    // deterministic symmetrization of the assembled lower triangle
    bk_.schur.symmetrize_from_lower();
    if (nl > 0) {
      LdltOptions opts;
      opts.allow_singular = true;
      schur_factor_ =
          std::make_unique<Factorization>(dense_sym_factor(bk_.schur, opts));
      if (schur_factor_->inertia().zero > 0) return std::nullopt;
    } else {
      schur_factor_.reset();
    }

    Inertia total;
    for (int b = 0; b < nb; ++b) {
      total.positive += factors_[b]->inertia().positive;
      total.negative += factors_[b]->inertia().negative;
      total.zero += factors_[b]->inertia().zero;
    }
    if (schur_factor_) {
      total.positive += schur_factor_->inertia().positive;
      total.negative += schur_factor_->inertia().negative;
      total.zero += schur_factor_->inertia().zero;
    }
    return total;
  }

  double solve(const KktData& d, std::vector<double>& dx,
               std::vector<double>& dl) override {
    BlockStep step = solve_block_step(d);
    scatter_step(step, dx, dl);
    return last_residual_;
  }

  /// Full block solve via the Schur complement, with iterative refinement of
  /// the complete bordered system.
  BlockStep solve_block_step(const KktData& d) {
    const int nb = static_cast<int>(bk_.blocks.size());
    const int nl = bk_.n_links;
    BlockStep step;
    step.d_block.assign(nb, {});
    step.d_link.assign(nl, 0.0);

    std::vector<std::vector<double>> rhs_b(nb);
    for (int b = 0; b < nb; ++b) rhs_b[b] = gather_block_rhs(d, b);
    std::vector<double> rhs_l(nl);
    for (int l = 0; l < nl; ++l)
      rhs_l[l] = d.rhs_c[flat_->link_rows[l] ];

    double rhs_norm = kkt_detail::inf_norm(d.rhs_x);
    rhs_norm = std::max(rhs_norm, kkt_detail::inf_norm(d.rhs_c));

    solve_once(rhs_b, rhs_l, step.d_block, step.d_link);

    // refinement against the bordered system, keeping the best iterate
    BlockStep best = step;
    double best_r = std::numeric_limits<double>::infinity();
    double prev_r = best_r;
    for (int pass = 0;; ++pass) {
      std::vector<std::vector<double>> res_b(nb);
      std::vector<double> res_l(nl);
      residual(d, step, rhs_b, rhs_l, res_b, res_l);
      double rn = kkt_detail::inf_norm(res_l);
      for (int b = 0; b < nb; ++b)
        rn = std::max(rn, kkt_detail::inf_norm(res_b[b]));
      if (rn < best_r) {
        best_r = rn;
        best = step;
      }
      if (rn <= 1e-14 * (1.0 + rhs_norm) || pass == 8 || rn > 0.5 * prev_r)
        break;
      prev_r = rn;
      std::vector<std::vector<double>> cor_b(nb);
      std::vector<double> cor_l(nl);
      solve_once(res_b, res_l, cor_b, cor_l);
      for (int b = 0; b < nb; ++b)
        for (std::size_t i = 0; i < cor_b[b].size(); ++i)
          step.d_block[b][i] += cor_b[b][i];
      for (int l = 0; l < nl; ++l) step.d_link[l] += cor_l[l];
    }
    last_residual_ = best_r;
    return best;
  }

  void dump(const std::string& prefix) const override {
    for (std::size_t b = 0; b < bk_.blocks.size(); ++b)
      write_matrix_market(bk_.blocks[b].K,
                          prefix + "_block" + std::to_string(b) + ".mtx");
    std::ofstream f(prefix + "_schur.mtx");
    write_matrix_market_dense(bk_.schur, f);
  }

 private:
  int off(int b) const { return bk_.blocks[b].range.var_start; }

  // kind: 0 hessian (value = hess_vals[slot]), 1 sigma+dw (slot = var index),
  // 2 jacobian (value = jac_vals[slot]), 3 constant -dc
  void add_entry(int b, int i, int j, int slot, int kind) {
    if (i < j) std::swap(i, j);
    auto& t = triplets_[b];
    t.rows.push_back(i);
    t.cols.push_back(j);
    t.slots.push_back(slot);
    t.kinds.push_back(kind);
  }

  void assemble_blocks(const KktData& d) {
    const int nb = static_cast<int>(bk_.blocks.size());
    if (static_cast<int>(triplets_.size()) < nb) triplets_.resize(nb);
    parallel_for(threads_, nb, [&](int b) {
      auto& t = triplets_[b];
      std::vector<double> vals(t.rows.size());
      for (std::size_t k = 0; k < t.rows.size(); ++k) {
        switch (t.kinds[k]) {
          case 0: vals[k] = d.hess_vals[t.slots[k]]; break;
          case 1: vals[k] = d.sigma[t.slots[k]] + d.delta_w; break;
          case 2: vals[k] = d.jac_vals[t.slots[k]]; break;
          default: vals[k] = -d.delta_c; break;
        }
      }
      bk_.blocks[b].K = SparseSym::from_triplets(bk_.blocks[b].dim, t.rows,
                                                 t.cols, vals);
      auto& blk = bk_.blocks[b];
      for (std::size_t k = 0; k < blk.border_pattern.size(); ++k)
        blk.border_vals[k] = d.jac_vals[std::get<2>(blk.border_pattern[k])];
    });
  }

  // C = B_b K_b^{-1} B_b^T over the touched link rows, batch width 32
  DenseSym block_schur_contribution(int b) {
    const auto& blk = bk_.blocks[b];
    const int nt = static_cast<int>(blk.touched.size());
    DenseSym c(nt);
    if (nt == 0) return c;
    const int dim = blk.dim;
    const int batch = 32;
    std::vector<double> w(static_cast<std::size_t>(dim) * batch);
    for (int q0 = 0; q0 < nt; q0 += batch) {
      const int nq = std::min(batch, nt - q0);
      std::fill(w.begin(), w.begin() + static_cast<std::size_t>(dim) * nq, 0.0);
      // columns of B^T: scatter border entries (t, col) into column t-q0
      for (std::size_t k = 0; k < blk.border_pattern.size(); ++k) {
        const auto& [t, col, slot] = blk.border_pattern[k];
        if (t >= q0 && t < q0 + nq)
          w[static_cast<std::size_t>(t - q0) * dim + col] += blk.border_vals[k];
      }
      factors_[b]->solve_multi_inplace(w.data(), dim, nq);
      // C[:, q] += B * w_q
      for (std::size_t k = 0; k < blk.border_pattern.size(); ++k) {
        const auto& [t, col, slot] = blk.border_pattern[k];
        const double v = blk.border_vals[k];
        for (int q = 0; q < nq; ++q)
          c.at(t, q0 + q) += v * w[static_cast<std::size_t>(q) * dim + col];
      }
    }
    return c;
  }

  std::vector<double> gather_block_rhs(const KktData& d, int b) const {
    const auto& r = bk_.blocks[b].range;
    std::vector<double> rhs(bk_.blocks[b].dim);
    for (int i = 0; i < r.var_count; ++i) rhs[i] = d.rhs_x[r.var_start + i];
    for (int i = 0; i < r.con_count; ++i)
      rhs[r.var_count + i] = d.rhs_c[r.con_start + i];
    return rhs;
  }

  void apply_border(int b, std::span<const double> d_link,
                    std::span<double> out, double sign) const {
    const auto& blk = bk_.blocks[b];
    for (std::size_t k = 0; k < blk.border_pattern.size(); ++k) {
      const auto& [t, col, slot] = blk.border_pattern[k];
      out[col] += sign * blk.border_vals[k] * d_link[blk.touched[t]];
    }
  }

  void solve_once(const std::vector<std::vector<double>>& rhs_b,
                  const std::vector<double>& rhs_l,
                  std::vector<std::vector<double>>& d_block,
                  std::vector<double>& d_link) {
    const int nb = static_cast<int>(bk_.blocks.size());
    const int nl = bk_.n_links;
    d_block.assign(nb, {});
    d_link.assign(nl, 0.0);
    // g_b = B_b K_b^{-1} rhs_b, reduced in block order
    std::vector<std::vector<double>> g(nb);
    parallel_for(threads_, nb, [&](int b) {
      std::vector<double> w = rhs_b[b];
      factors_[b]->solve_inplace(w);
      const auto& blk = bk_.blocks[b];
      std::vector<double> gb(blk.touched.size(), 0.0);
      for (std::size_t k = 0; k < blk.border_pattern.size(); ++k) {
        const auto& [t, col, slot] = blk.border_pattern[k];
        gb[t] += blk.border_vals[k] * w[col];
      }
      g[b] = std::move(gb);
    });
    std::vector<double> srhs(rhs_l);
    for (int b = 0; b < nb; ++b) {
      const auto& blk = bk_.blocks[b];
      for (std::size_t t = 0; t < blk.touched.size(); ++t)
        srhs[blk.touched[t]] -= g[b][t];
    }
    if (nl > 0) {
      if (!schur_factor_) throw SingularSchur("schur system not factorized");
      d_link = schur_factor_->solve(srhs);
    }
    parallel_for(threads_, nb, [&](int b) {
      std::vector<double> w = rhs_b[b];
      apply_border(b, d_link, w, -1.0);
      factors_[b]->solve_inplace(w);
      d_block[b] = std::move(w);
    });
  }

  void residual(const KktData& d, const BlockStep& step,
                const std::vector<std::vector<double>>& rhs_b,
                const std::vector<double>& rhs_l,
                std::vector<std::vector<double>>& res_b,
                std::vector<double>& res_l) {
    const int nb = static_cast<int>(bk_.blocks.size());
    const int nl = bk_.n_links;
    res_b.assign(nb, {});
    res_l = rhs_l;
    for (int l = 0; l < nl; ++l) res_l[l] += d.delta_c * step.d_link[l];
    parallel_for(threads_, nb, [&](int b) {
      std::vector<double> r = rhs_b[b];
      bk_.blocks[b].K.sym_matvec(step.d_block[b], r, -1.0);
      apply_border(b, step.d_link, r, -1.0);
      res_b[b] = std::move(r);
    });
    // border rows: rhs_l - B d - (-dc) d_link handled above
    for (int b = 0; b < nb; ++b) {
      const auto& blk = bk_.blocks[b];
      for (std::size_t k = 0; k < blk.border_pattern.size(); ++k) {
        const auto& [t, col, slot] = blk.border_pattern[k];
        res_l[blk.touched[t]] -= blk.border_vals[k] * step.d_block[b][col];
      }
    }
  }

  void scatter_step(const BlockStep& step, std::vector<double>& dx,
                    std::vector<double>& dl) const {
    dx.assign(flat_->n_vars, 0.0);
    dl.assign(flat_->n_cons, 0.0);
    for (std::size_t b = 0; b < bk_.blocks.size(); ++b) {
      const auto& r = bk_.blocks[b].range;
      for (int i = 0; i < r.var_count; ++i)
        dx[r.var_start + i] = step.d_block[b][i];
      for (int i = 0; i < r.con_count; ++i)
        dl[r.con_start + i] = step.d_block[b][r.var_count + i];
    }
    for (int l = 0; l < bk_.n_links; ++l)
      dl[flat_->link_rows[l]] = step.d_link[l];
  }

  struct BlockTriplets {
    std::vector<int> rows, cols, slots, kinds;
  };

  BlockKkt bk_;
  std::vector<BlockTriplets> triplets_;
  std::vector<std::unique_ptr<Factorization>> factors_;
  std::vector<std::unique_ptr<LdltSymbolic>> symbolics_;
  std::unique_ptr<Factorization> schur_factor_;
  double last_residual_ = 0.0;
};

// ---------------------------------------------------------------------------
// Two-stage tree backend: every link couples a designated master block with
// exactly one child block. Children absorb their link rows, so the Schur
// complement is pivoted on the master variables and its dimension does not
// grow with the number of child blocks.
// ---------------------------------------------------------------------------
class SchurTreeBackend : public BlockedBackendBase {
 public:
  SchurTreeBackend(const FlatNLP& flat, const NlpFunctions& funcs, int threads)
      : BlockedBackendBase(flat, funcs, threads) {
    if (flat.master_node < 0)
      throw NotTwoStage("model carries no master-node annotation");
    master_block_ = flat.block_of_node(flat.master_node);
    if (master_block_ < 0)
      throw NotTwoStage("master node " + std::to_string(flat.master_node) +
                        " is not a block of the flattened model");
    const int nb = static_cast<int>(flat.blocks.size());
    const auto& mr = flat.blocks[master_block_];
    master_dim_ = mr.var_count + mr.con_count;

    // children in block order, skipping the master
    child_of_block_.assign(nb, -1);
    for (int b = 0; b < nb; ++b) {
      if (b == master_block_) continue;
      child_of_block_[b] = static_cast<int>(child_blocks_.size());
      child_blocks_.push_back(b);
    }
    const int nc = static_cast<int>(child_blocks_.size());
    children_.resize(nc);
    for (int c = 0; c < nc; ++c) children_[c].range = flat.blocks[child_blocks_[c]];

    // assign each link row to its unique child; verify the tree shape
    const auto& jr = funcs.jac_rows();
    const auto& jc = funcs.jac_cols();
    const int nl = static_cast<int>(flat.link_rows.size());
    std::vector<std::set<int>> row_blocks(nl);
    for (std::size_t k = 0; k < jr.size(); ++k)
      if (jr[k] >= flat.n_internal)
        row_blocks[jr[k] - flat.n_internal].insert(var_block_[jc[k]]);
    link_child_.assign(nl, -1);
    for (int l = 0; l < nl; ++l) {
      std::set<int> others = row_blocks[l];
      others.erase(master_block_);
      if (row_blocks[l].count(master_block_) == 0 || others.size() != 1)
        throw NotTwoStage("link row " + std::to_string(flat.link_rows[l]) +
                          " does not couple the master with exactly one "
                          "other block");
      const int child = child_of_block_[*others.begin()];
      link_child_[l] = child;
      children_[child].links.push_back(l);
    }

    // per-child triplet patterns: [hess | sigma | internal jac | -dc |
    //                              link jac | -dc on link rows]
    const auto& hr = funcs.hess_rows();
    const auto& hc = funcs.hess_cols();
    for (std::size_t k = 0; k < hr.size(); ++k) {
      const int b = var_block_[hr[k]];
      if (b != var_block_[hc[k]])
        throw NonAffineLink("cross-block Hessian entry between blocks " +
                            std::to_string(b) + " and " +
                            std::to_string(var_block_[hc[k]]));
      if (b == master_block_) {
        master_entries_.push_back({hr[k] - mr.var_start, hc[k] - mr.var_start,
                                   static_cast<int>(k), 0});
      } else {
        const int c = child_of_block_[b];
        add_child_entry(c, hr[k] - children_[c].range.var_start,
                        hc[k] - children_[c].range.var_start,
                        static_cast<int>(k), 0);
      }
    }
    for (int c = 0; c < nc; ++c)
      for (int i = 0; i < children_[c].range.var_count; ++i)
        add_child_entry(c, i, i, children_[c].range.var_start + i, 1);
    for (int i = 0; i < mr.var_count; ++i)
      master_entries_.push_back({i, i, mr.var_start + i, 1});

    for (std::size_t k = 0; k < jr.size(); ++k) {
      const int row = jr[k];
      const int b = var_block_[jc[k]];
      if (row < flat.n_internal) {
        const auto& r = flat.blocks[b];
        if (row < r.con_start || row >= r.con_start + r.con_count)
          throw NonAffineLink("internal row " + std::to_string(row) +
                              " references a foreign block");
        if (b == master_block_)
          master_entries_.push_back({mr.var_count + (row - r.con_start),
                                     jc[k] - r.var_start, static_cast<int>(k),
                                     2});
        else
          add_child_entry(child_of_block_[b],
                          r.var_count + (row - r.con_start),
                          jc[k] - r.var_start, static_cast<int>(k), 2);
      } else {
        const int l = row - flat.n_internal;
        const int c = link_child_[l];
        const int local_l = static_cast<int>(
            std::find(children_[c].links.begin(), children_[c].links.end(), l) -
            children_[c].links.begin());
        auto& ch = children_[c];
        const int base = ch.range.var_count + ch.range.con_count;
        if (b == master_block_) {
          ch.border.emplace_back(base + local_l, jc[k] - mr.var_start,
                                 static_cast<int>(k));
        } else {
          add_child_entry(c, base + local_l, jc[k] - ch.range.var_start,
                          static_cast<int>(k), 2);
        }
      }
    }
    for (int c = 0; c < nc; ++c) {
      auto& ch = children_[c];
      const int base = ch.range.var_count + ch.range.con_count;
      for (int i = 0; i < ch.range.con_count; ++i)
        add_child_entry(c, ch.range.var_count + i, ch.range.var_count + i, 0,
                        3);
      for (std::size_t l = 0; l < ch.links.size(); ++l)
        add_child_entry(c, base + static_cast<int>(l),
                        base + static_cast<int>(l), 0, 3);
      ch.dim = base + static_cast<int>(ch.links.size());
    }
    for (int i = 0; i < mr.con_count; ++i)
      master_entries_.push_back({mr.var_count + i, mr.var_count + i, 0, 3});

    factors_.resize(nc);
    symbolics_.resize(nc);
  }

  std::string name() const override { return "schur-tree"; }
  int schur_dimension() const override { return master_dim_; }

  std::optional<Inertia> factorize(const KktData& d) override {
    const int nc = static_cast<int>(children_.size());
    std::atomic<bool> singular{false};
    parallel_for(threads_, nc, [&](int c) {
      auto& ch = children_[c];
      std::vector<double> vals(ch.rows.size());
      for (std::size_t k = 0; k < ch.rows.size(); ++k) {
        switch (ch.kinds[k]) {
          case 0: vals[k] = d.hess_vals[ch.slots[k]]; break;
          case 1: vals[k] = d.sigma[ch.slots[k]] + d.delta_w; break;
          case 2: vals[k] = d.jac_vals[ch.slots[k]]; break;
          default: vals[k] = -d.delta_c; break;
        }
      }
      ch.K = SparseSym::from_triplets(ch.dim, ch.rows, ch.cols, vals);
      ch.border_vals.resize(ch.border.size());
      for (std::size_t k = 0; k < ch.border.size(); ++k)
        ch.border_vals[k] = d.jac_vals[std::get<2>(ch.border[k])];
      LdltOptions opts;
      opts.allow_singular = true;
      if (!symbolics_[c]) symbolics_[c] = std::make_unique<LdltSymbolic>(ch.K);
      factors_[c] = std::make_unique<Factorization>(
          ldlt_factor(*symbolics_[c], ch.K, opts));
      if (factors_[c]->inertia().zero > 0) singular.store(true);
    });
    if (singular.load()) return std::nullopt;

    // S = K_m - sum_c B_c^T Kc^{-1} B_c on the master block
    schur_ = DenseSym(master_dim_);
    const auto& mr = flat_->blocks[master_block_];
    for (const auto& e : master_entries_) {
      double v;
      switch (e.kind) {
        case 0: v = d.hess_vals[e.slot]; break;
        case 1: v = d.sigma[e.slot] + d.delta_w; break;
        case 2: v = d.jac_vals[e.slot]; break;
        default: v = -d.delta_c; break;
      }
      int i = e.i, j = e.j;
      if (i < j) std::swap(i, j);
      schur_.at(i, j) += v;
    }
    (void)mr;
    std::vector<DenseSym> contrib(nc);
    parallel_for(threads_, nc, [&](int c) { contrib[c] = child_contribution(c); });
    for (int c = 0; c < nc; ++c) {
      const auto& cols = children_[c].master_cols;
      for (std::size_t q = 0; q < cols.size(); ++q)
        for (std::size_t p = 0; p < cols.size(); ++p) {
          if (cols[p] < cols[q]) continue;
          schur_.at(cols[p], cols[q]) -= contrib[c].at(static_cast<int>(p),
                                                       static_cast<int>(q));
        }
    }
    schur_.symmetrize_from_lower();
    LdltOptions opts;
    opts.allow_singular = true;
    schur_factor_ =
        std::make_unique<Factorization>(dense_sym_factor(schur_, opts));
    if (schur_factor_->inertia().zero > 0) return std::nullopt;

    Inertia total = schur_factor_->inertia();
    for (int c = 0; c < nc; ++c) {
      total.positive += factors_[c]->inertia().positive;
      total.negative += factors_[c]->inertia().negative;
      total.zero += factors_[c]->inertia().zero;
    }
    return total;
  }

  double solve(const KktData& d, std::vector<double>& dx,
               std::vector<double>& dl) override {
    const int nc = static_cast<int>(children_.size());
    std::vector<std::vector<double>> rhs_c(nc);
    for (int c = 0; c < nc; ++c) rhs_c[c] = gather_child_rhs(d, c);
    std::vector<double> rhs_m = gather_master_rhs(d);
    double rhs_norm = kkt_detail::inf_norm(d.rhs_x);
    rhs_norm = std::max(rhs_norm, kkt_detail::inf_norm(d.rhs_c));

    std::vector<std::vector<double>> dchild(nc);
    std::vector<double> dmaster;
    solve_once(rhs_c, rhs_m, dchild, dmaster);

    auto best_child = dchild;
    auto best_master = dmaster;
    double best_r = std::numeric_limits<double>::infinity();
    double prev_r = best_r;
    for (int pass = 0;; ++pass) {
      std::vector<std::vector<double>> res_c(nc);
      std::vector<double> res_m;
      residual(d, dchild, dmaster, rhs_c, rhs_m, res_c, res_m);
      double rn = kkt_detail::inf_norm(res_m);
      for (int c = 0; c < nc; ++c)
        rn = std::max(rn, kkt_detail::inf_norm(res_c[c]));
      if (rn < best_r) {
        best_r = rn;
        best_child = dchild;
        best_master = dmaster;
      }
      if (rn <= 1e-14 * (1.0 + rhs_norm) || pass == 8 || rn > 0.5 * prev_r)
        break;
      prev_r = rn;
      std::vector<std::vector<double>> cor_c(nc);
      std::vector<double> cor_m;
      solve_once(res_c, res_m, cor_c, cor_m);
      for (int c = 0; c < nc; ++c)
        for (std::size_t i = 0; i < cor_c[c].size(); ++i)
          dchild[c][i] += cor_c[c][i];
      for (std::size_t i = 0; i < cor_m.size(); ++i) dmaster[i] += cor_m[i];
    }
    dchild = std::move(best_child);
    dmaster = std::move(best_master);
    last_residual_ = best_r;

    // scatter
    dx.assign(flat_->n_vars, 0.0);
    dl.assign(flat_->n_cons, 0.0);
    for (int c = 0; c < nc; ++c) {
      const auto& r = children_[c].range;
      for (int i = 0; i < r.var_count; ++i)
        dx[r.var_start + i] = dchild[c][i];
      for (int i = 0; i < r.con_count; ++i)
        dl[r.con_start + i] = dchild[c][r.var_count + i];
      const int base = r.var_count + r.con_count;
      for (std::size_t l = 0; l < children_[c].links.size(); ++l)
        dl[flat_->link_rows[children_[c].links[l]]] = dchild[c][base + l];
    }
    const auto& mr = flat_->blocks[master_block_];
    for (int i = 0; i < mr.var_count; ++i) dx[mr.var_start + i] = dmaster[i];
    for (int i = 0; i < mr.con_count; ++i)
      dl[mr.con_start + i] = dmaster[mr.var_count + i];
    return last_residual_;
  }

  void dump(const std::string& prefix) const override {
    std::ofstream f(prefix + "_schur.mtx");
    write_matrix_market_dense(schur_, f);
  }

 private:
  struct MasterEntry {
    int i, j, slot, kind;
  };
  struct Child {
    BlockRange range;
    int dim = 0;
    std::vector<int> links;  // link indices handled by this child
    std::vector<int> rows, cols, slots, kinds;
    SparseSym K;
    // border entries: (local row, master var local col, jac slot)
    std::vector<std::tuple<int, int, int>> border;
    std::vector<double> border_vals;
    std::vector<int> master_cols;  // touched master columns, sorted
  };

  void add_child_entry(int c, int i, int j, int slot, int kind) {
    if (i < j) std::swap(i, j);
    auto& ch = children_[c];
    ch.rows.push_back(i);
    ch.cols.push_back(j);
    ch.slots.push_back(slot);
    ch.kinds.push_back(kind);
  }

  DenseSym child_contribution(int c) {
    auto& ch = children_[c];
    if (ch.master_cols.empty()) {
      std::set<int> mc;
      for (const auto& [row, col, slot] : ch.border) mc.insert(col);
      ch.master_cols.assign(mc.begin(), mc.end());
    }
    const int nt = static_cast<int>(ch.master_cols.size());
    DenseSym out(nt);
    if (nt == 0) return out;
    auto colpos = [&](int col) {
      return static_cast<int>(
          std::lower_bound(ch.master_cols.begin(), ch.master_cols.end(), col) -
          ch.master_cols.begin());
    };
    const int batch = 32;
    std::vector<double> w(static_cast<std::size_t>(ch.dim) * batch);
    for (int q0 = 0; q0 < nt; q0 += batch) {
      const int nq = std::min(batch, nt - q0);
      std::fill(w.begin(), w.begin() + static_cast<std::size_t>(ch.dim) * nq,
                0.0);
      for (std::size_t k = 0; k < ch.border.size(); ++k) {
        const auto& [row, col, slot] = ch.border[k];
        const int q = colpos(col) - q0;
        if (q >= 0 && q < nq)
          w[static_cast<std::size_t>(q) * ch.dim + row] += ch.border_vals[k];
      }
      factors_[c]->solve_multi_inplace(w.data(), ch.dim, nq);
      for (std::size_t k = 0; k < ch.border.size(); ++k) {
        const auto& [row, col, slot] = ch.border[k];
        const double v = ch.border_vals[k];
        const int p = colpos(col);
        for (int q = 0; q < nq; ++q)
          out.at(p, q0 + q) += v * w[static_cast<std::size_t>(q) * ch.dim + row];
      }
    }
    return out;
  }

  std::vector<double> gather_child_rhs(const KktData& d, int c) const {
    const auto& ch = children_[c];
    std::vector<double> rhs(ch.dim);
    for (int i = 0; i < ch.range.var_count; ++i)
      rhs[i] = d.rhs_x[ch.range.var_start + i];
    for (int i = 0; i < ch.range.con_count; ++i)
      rhs[ch.range.var_count + i] = d.rhs_c[ch.range.con_start + i];
    const int base = ch.range.var_count + ch.range.con_count;
    for (std::size_t l = 0; l < ch.links.size(); ++l)
      rhs[base + l] = d.rhs_c[flat_->link_rows[ch.links[l]]];
    return rhs;
  }

  std::vector<double> gather_master_rhs(const KktData& d) const {
    const auto& mr = flat_->blocks[master_block_];
    std::vector<double> rhs(master_dim_);
    for (int i = 0; i < mr.var_count; ++i) rhs[i] = d.rhs_x[mr.var_start + i];
    for (int i = 0; i < mr.con_count; ++i)
      rhs[mr.var_count + i] = d.rhs_c[mr.con_start + i];
    return rhs;
  }

  void solve_once(const std::vector<std::vector<double>>& rhs_c,
                  const std::vector<double>& rhs_m,
                  std::vector<std::vector<double>>& dchild,
                  std::vector<double>& dmaster) {
    const int nc = static_cast<int>(children_.size());
    dchild.assign(nc, {});
    std::vector<std::vector<double>> g(nc);
    parallel_for(threads_, nc, [&](int c) {
      std::vector<double> w = rhs_c[c];
      factors_[c]->solve_inplace(w);
      std::vector<double> gm(master_dim_, 0.0);
      for (std::size_t k = 0; k < children_[c].border.size(); ++k) {
        const auto& [row, col, slot] = children_[c].border[k];
        gm[col] += children_[c].border_vals[k] * w[row];
      }
      g[c] = std::move(gm);
    });
    std::vector<double> srhs = rhs_m;
    for (int c = 0; c < nc; ++c)
      for (int i = 0; i < master_dim_; ++i) srhs[i] -= g[c][i];
    dmaster = schur_factor_->solve(srhs);
    parallel_for(threads_, nc, [&](int c) {
      std::vector<double> w = rhs_c[c];
      for (std::size_t k = 0; k < children_[c].border.size(); ++k) {
        const auto& [row, col, slot] = children_[c].border[k];
        w[row] -= children_[c].border_vals[k] * dmaster[col];
      }
      factors_[c]->solve_inplace(w);
      dchild[c] = std::move(w);
    });
  }

  void residual(const KktData& d,
                const std::vector<std::vector<double>>& dchild,
                const std::vector<double>& dmaster,
                const std::vector<std::vector<double>>& rhs_c,
                const std::vector<double>& rhs_m,
                std::vector<std::vector<double>>& res_c,
                std::vector<double>& res_m) {
    const int nc = static_cast<int>(children_.size());
    res_c.assign(nc, {});
    res_m = rhs_m;
    // master rows: r_m - K_m d_m - sum_c B_c^T d_c
    for (const auto& e : master_entries_) {
      double v;
      switch (e.kind) {
        case 0: v = d.hess_vals[e.slot]; break;
        case 1: v = d.sigma[e.slot] + d.delta_w; break;
        case 2: v = d.jac_vals[e.slot]; break;
        default: v = -d.delta_c; break;
      }
      res_m[e.i] -= v * dmaster[e.j];
      if (e.i != e.j) res_m[e.j] -= v * dmaster[e.i];
    }
    parallel_for(threads_, nc, [&](int c) {
      std::vector<double> r = rhs_c[c];
      children_[c].K.sym_matvec(dchild[c], r, -1.0);
      for (std::size_t k = 0; k < children_[c].border.size(); ++k) {
        const auto& [row, col, slot] = children_[c].border[k];
        r[row] -= children_[c].border_vals[k] * dmaster[col];
      }
      res_c[c] = std::move(r);
    });
    for (int c = 0; c < nc; ++c)
      for (std::size_t k = 0; k < children_[c].border.size(); ++k) {
        const auto& [row, col, slot] = children_[c].border[k];
        res_m[col] -= children_[c].border_vals[k] * dchild[c][row];
      }
  }

  int master_block_ = -1;
  int master_dim_ = 0;
  std::vector<int> child_blocks_;
  std::vector<int> child_of_block_;
  std::vector<int> link_child_;
  std::vector<Child> children_;
  std::vector<MasterEntry> master_entries_;
  std::vector<std::unique_ptr<Factorization>> factors_;
  std::vector<std::unique_ptr<LdltSymbolic>> symbolics_;
  DenseSym schur_;
  std::unique_ptr<Factorization> schur_factor_;
  double last_residual_ = 0.0;
};

/// Assembles the block-bordered system of the dual-Schur layout at the given
/// data without factorizing it (structure inspection and tests).
inline BlockKkt assemble_block_kkt(const FlatNLP& flat, NlpFunctions& funcs,
                                   const KktData& d) {
  SchurDualBackend backend(flat, funcs, 1);
  backend.assemble_only(d);
  return backend.block_kkt();
}

}  // namespace graphnlp

#endif  // GRAPHNLP_KKT_HPP
