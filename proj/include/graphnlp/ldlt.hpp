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

#ifndef GRAPHNLP_LDLT_HPP
#define GRAPHNLP_LDLT_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "graphnlp/errors.hpp"
#include "graphnlp/ordering.hpp"
#include "graphnlp/sparse.hpp"

namespace graphnlp {

struct Inertia {
  int positive = 0;
  int negative = 0;
  int zero = 0;

  friend bool operator==(const Inertia& a, const Inertia& b) {
    return a.positive == b.positive && a.negative == b.negative &&
           a.zero == b.zero;
  }
};

struct LdltOptions {
  double pivot_tol = 0.01;   // threshold u: accept 1x1 pivot if |d| >= u*gamma
  bool allow_singular = false;
  // Optional precomputed fill-reducing ordering (perm[k] = original index).
  // Reused across refactorizations of an unchanged sparsity pattern.
  const std::vector<int>* ordering = nullptr;
};

/// P M P^T = L D L^T with unit lower-triangular L and block-diagonal D
/// (1x1 and 2x2 pivots). The permutation reflects both the fill-reducing
/// preorder and any numerical pivot reordering.
class Factorization {
 public:
  int n() const { return n_; }
  const Inertia& inertia() const { return inertia_; }

  /// order[t] = original index eliminated at step t.
  const std::vector<int>& order() const { return order_; }

  void solve_inplace(std::span<double> x) const {
    if (n_ == 0) return;
    work_.resize(n_);
    solve_cols(x.data(), n_, 1, work_.data());
  }

  std::vector<double> solve(std::span<const double> b) const {
    std::vector<double> x(b.begin(), b.end());
    solve_inplace(x);
    return x;
  }

  /// Solves for several right-hand sides stored column-major (ld rows).
  void solve_multi_inplace(double* b, int ld, int ncols) const {
    if (n_ == 0 || ncols == 0) return;
    work_.resize(static_cast<std::size_t>(n_) * ncols);
    solve_cols(b, ld, ncols, work_.data());
  }

 private:
  friend class LdltEngine;
  friend Factorization dense_sym_factor(const DenseSym&, const LdltOptions&);

  void solve_cols(double* b, int ld, int nc, double* w) const {
    // scatter into factor order
    for (int c = 0; c < nc; ++c)
      for (int t = 0; t < n_; ++t) w[c * n_ + t] = b[c * ld + order_[t]];
    // forward: L y = w
    for (int t = 0; t < n_; ++t) {
      for (int k = lptr_[t]; k < lptr_[t + 1]; ++k) {
        const int r = lrow_[k];
        const double v = lval_[k];
        for (int c = 0; c < nc; ++c) w[c * n_ + r] -= v * w[c * n_ + t];
      }
    }
    // diagonal: D z = y
    for (int t = 0; t < n_;) {
      if (two_start_[t]) {
        const double a = d_diag_[t], bb = d_sub_[t], cdd = d_diag_[t + 1];
        const double det = a * cdd - bb * bb;
        for (int c = 0; c < nc; ++c) {
          const double y1 = w[c * n_ + t], y2 = w[c * n_ + t + 1];
          w[c * n_ + t] = (cdd * y1 - bb * y2) / det;
          w[c * n_ + t + 1] = (a * y2 - bb * y1) / det;
        }
        t += 2;
      } else {
        const double d = d_diag_[t];
        if (d == 0.0)
          throw StructurallySingular("solve with zero pivot at position " +
                                         std::to_string(t),
                                     inertia_.zero);
        for (int c = 0; c < nc; ++c) w[c * n_ + t] /= d;
        t += 1;
      }
    }
    // backward: L^T x = z
    for (int t = n_ - 1; t >= 0; --t) {
      for (int k = lptr_[t]; k < lptr_[t + 1]; ++k) {
        const int r = lrow_[k];
        const double v = lval_[k];
        for (int c = 0; c < nc; ++c) w[c * n_ + t] -= v * w[c * n_ + r];
      }
    }
    // gather back to original order
    for (int c = 0; c < nc; ++c)
      for (int t = 0; t < n_; ++t) b[c * ld + order_[t]] = w[c * n_ + t];
  }

  int n_ = 0;
  Inertia inertia_;
  std::vector<int> order_;
  std::vector<int> lptr_{0};
  std::vector<int> lrow_;  // factor positions, each > its column position
  std::vector<double> lval_;
  std::vector<double> d_diag_, d_sub_;
  std::vector<std::uint8_t> two_start_;
  mutable std::vector<double> work_;
};

/// Multifrontal factorization engine. Fronts are dense symmetric blocks;
/// fully-summed variables are eliminated with threshold 1x1/2x2 pivoting,
/// variables failing the stability test are delayed into the parent front.
class LdltEngine {
 public:
  // --- dense front elimination --------------------------------------------

  struct Builder {
    std::vector<int> elim_ids;
    std::vector<int> lptr{0};
    std::vector<int> lrow_ids;
    std::vector<double> lval;
    std::vector<double> d_diag, d_sub;
    std::vector<std::uint8_t> two_start;
    Inertia inertia;
  };

  struct Front {
    int m = 0;
    int fs = 0;  // positions [0, fs) are fully summed
    std::vector<int> ids;
    std::vector<double> a;  // m x m buffer, lower triangle authoritative

    // valid for i >= j only
    double& at(int i, int j) { return a[static_cast<std::size_t>(j) * m + i]; }
    double at(int i, int j) const {
      return a[static_cast<std::size_t>(j) * m + i];
    }
    // symmetric read for arbitrary index order
    double sym(int i, int j) const { return i >= j ? at(i, j) : at(j, i); }
    void add_sym(int i, int j, double v) {
      if (i >= j)
        at(i, j) += v;
      else
        at(j, i) += v;
    }

    void init(int m_, int fs_) {
      m = m_;
      fs = fs_;
      ids.assign(m, -1);
      a.assign(static_cast<std::size_t>(m) * m, 0.0);
    }

    // symmetric permutation touching only the stored lower triangle
    void swap_positions(int p, int q) {
      if (p == q) return;
      if (p > q) std::swap(p, q);
      std::swap(ids[p], ids[q]);
      for (int j = 0; j < p; ++j) std::swap(at(p, j), at(q, j));
      for (int j = p + 1; j < q; ++j) std::swap(at(j, p), at(q, j));
      std::swap(at(p, p), at(q, q));
      for (int i = q + 1; i < m; ++i) std::swap(at(i, p), at(i, q));
    }
  };

  /// Eliminates fully-summed positions of the front in place. In force mode
  /// (root fronts, dense factorization) every candidate is eliminated, falling
  /// back to Bunch-Kaufman partial pivoting; otherwise unstable candidates are
  /// left in place for the parent. Returns the number eliminated.
  static int eliminate_front(Front& f, double u, bool force, Builder& out) {
    const double alpha_bk = 0.6404;  // (1 + sqrt(17)) / 8
    int k = 0;
    while (k < f.fs) {
      int p1 = -1;
      // threshold-stable 1x1 pivot, first acceptable in position order
      for (int p = k; p < f.fs; ++p) {
        const double g = colmax(f, p, k, p, -1);
        const double d = std::fabs(f.at(p, p));
        if (d > 0.0 && d >= u * g) {
          p1 = p;
          break;
        }
      }
      if (p1 >= 0) {
        eliminate_1x1(f, k, p1, out);
        ++k;
        continue;
      }
      // threshold-stable 2x2 pivot among fully summed candidates
      int pp = -1, qq = -1;
      for (int p = k; p < f.fs && pp < 0; ++p) {
        int q = -1;
        double best = 0.0;
        for (int i = k; i < f.fs; ++i) {
          if (i == p) continue;
          const double v = std::fabs(f.sym(i, p));
          if (v > best) {
            best = v;
            q = i;
          }
        }
        if (q < 0 || best == 0.0) continue;
        if (stable_2x2(f, p, q, k, u)) {
          pp = p;
          qq = q;
        }
      }
      if (pp >= 0) {
        eliminate_2x2(f, k, pp, qq, out);
        k += 2;
        continue;
      }
      if (!force) break;  // delay the rest to the parent front

      // Bunch-Kaufman fallback; in force mode the front has no non-summed
      // rows, so partial pivoting always makes progress.
      int p = k;
      for (int i = k + 1; i < f.fs; ++i)
        if (std::fabs(f.at(i, i)) > std::fabs(f.at(p, p))) p = i;
      const double gp = colmax(f, p, k, p, -1);
      const double dp = std::fabs(f.at(p, p));
      if (gp == 0.0) {
        if (dp == 0.0) {
          // fully decoupled zero row/column
          f.swap_positions(k, p);
          out.elim_ids.push_back(f.ids[k]);
          out.d_diag.push_back(0.0);
          out.d_sub.push_back(0.0);
          out.two_start.push_back(0);
          out.lptr.push_back(static_cast<int>(out.lrow_ids.size()));
          out.inertia.zero += 1;
          ++k;
        } else {
          eliminate_1x1(f, k, p, out);
          ++k;
        }
        continue;
      }
      if (dp >= alpha_bk * gp) {
        eliminate_1x1(f, k, p, out);
        ++k;
        continue;
      }
      int r = -1;
      double best = 0.0;
      for (int i = k; i < f.m; ++i) {
        if (i == p) continue;
        const double v = std::fabs(f.sym(i, p));
        if (v > best) {
          best = v;
          r = i;
        }
      }
      const double gr = colmax(f, r, k, r, -1);
      if (std::fabs(f.at(r, r)) >= alpha_bk * gr) {
        eliminate_1x1(f, k, r, out);
        ++k;
      } else {
        eliminate_2x2(f, k, p, r, out);
        k += 2;
      }
    }
    return k;
  }

  // --- sparse multifrontal driver ------------------------------------------

  /// Pattern-level analysis shared across refactorizations of one sparsity
  /// structure: fill-reducing order composed with an elimination-tree
  /// postorder, the permuted pattern, and a value scatter map.
  struct Symbolic {
    int n = 0;
    std::vector<int> perm;                // perm[k] = original index
    std::vector<int> col_ptr, row_ind;    // permuted lower pattern
    std::vector<int> scatter;             // original entry -> pattern slot
    std::vector<int> parent;
    std::vector<std::vector<int>> children;
    // fundamental supernodes: consecutive columns eliminated in one front
    std::vector<std::pair<int, int>> supernodes;  // [first, last] inclusive
    std::vector<int> super_of;                    // column -> supernode id
    std::vector<std::vector<int>> super_children;

    Symbolic() = default;
    explicit Symbolic(const SparseSym& a,
                      const std::vector<int>* ordering = nullptr) {
      n = a.n();
      perm = ordering ? *ordering : min_degree_ordering(a);
      if (static_cast<int>(perm.size()) != n)
        throw IndexError("ordering length does not match matrix dimension");
      build(a);
      std::vector<int> post = postorder(parent);
      std::vector<int> composed(n);
      for (int k = 0; k < n; ++k) composed[k] = perm[post[k]];
      perm.swap(composed);
      build(a);
      children.assign(n, {});
      for (int j = 0; j < n; ++j)
        if (parent[j] >= 0) children[parent[j]].push_back(j);
      find_supernodes();
    }

   private:
    void build(const SparseSym& a) {
      std::vector<int> inv(n);
      for (int k = 0; k < n; ++k) inv[perm[k]] = k;
      // (col, row, original entry index), sorted into CSC order
      std::vector<std::array<int, 3>> entries;
      entries.reserve(a.nnz());
      int orig = 0;
      for (int j = 0; j < n; ++j)
        for (int k = a.col_ptr()[j]; k < a.col_ptr()[j + 1]; ++k, ++orig) {
          int pi = inv[a.row_ind()[k]], pj = inv[j];
          if (pi < pj) std::swap(pi, pj);
          entries.push_back({pj, pi, orig});
        }
      std::sort(entries.begin(), entries.end());
      col_ptr.assign(n + 1, 0);
      row_ind.resize(entries.size());
      scatter.assign(entries.size(), 0);
      for (std::size_t k = 0; k < entries.size(); ++k) {
        col_ptr[entries[k][0] + 1]++;
        row_ind[k] = entries[k][1];
        scatter[entries[k][2]] = static_cast<int>(k);
      }
      for (int j = 0; j < n; ++j) col_ptr[j + 1] += col_ptr[j];
      // elimination tree on the permuted pattern
      std::vector<std::vector<int>> up(n);
      for (int j = 0; j < n; ++j)
        for (int k = col_ptr[j]; k < col_ptr[j + 1]; ++k)
          if (row_ind[k] > j) up[row_ind[k]].push_back(j);
      parent.assign(n, -1);
      std::vector<int> ancestor(n, -1);
      for (int j = 0; j < n; ++j) {
        for (int i : up[j]) {
          int t = i;
          while (ancestor[t] != -1 && ancestor[t] != j) {
            const int next = ancestor[t];
            ancestor[t] = j;
            t = next;
          }
          if (ancestor[t] == -1) {
            ancestor[t] = j;
            parent[t] = j;
          }
        }
      }
    }

    // Predicted no-pivoting column counts of L via row-subtree traversal,
    // then maximal chains with parent[j] = j+1, count(j) = count(j+1) + 1
    // and a single child. Delayed pivots simply enlarge these fronts.
    void find_supernodes() {
      std::vector<int> counts(n, 1);
      std::vector<int> mark(n, -1);
      // row-major traversal so each row's subtree is marked exactly once
      std::vector<std::vector<int>> row_cols(n);
      for (int j = 0; j < n; ++j)
        for (int k = col_ptr[j]; k < col_ptr[j + 1]; ++k)
          if (row_ind[k] != j) row_cols[row_ind[k]].push_back(j);
      for (int i = 0; i < n; ++i) {
        for (int j : row_cols[i]) {
          int t = j;
          while (t != -1 && t != i && mark[t] != i) {
            counts[t]++;
            mark[t] = i;
            t = parent[t];
          }
        }
      }
      std::vector<int> nchildren(n, 0);
      for (int j = 0; j < n; ++j)
        if (parent[j] >= 0) nchildren[parent[j]]++;

      super_of.assign(n, -1);
      for (int j = 0; j < n;) {
        int last = j;
        while (last + 1 < n && parent[last] == last + 1 &&
               nchildren[last + 1] == 1 && counts[last] == counts[last + 1] + 1)
          ++last;
        const int id = static_cast<int>(supernodes.size());
        supernodes.emplace_back(j, last);
        for (int t = j; t <= last; ++t) super_of[t] = id;
        j = last + 1;
      }
      super_children.assign(supernodes.size(), {});
      for (std::size_t s = 0; s < supernodes.size(); ++s) {
        const int first = supernodes[s].first;
        for (int c : children[first])
          super_children[s].push_back(super_of[c]);
      }
    }
  };

  static Factorization factor(const Symbolic& sym, const SparseSym& A,
                              const LdltOptions& opts) {
    const int n = sym.n;
    if (A.n() != n) throw IndexError("matrix does not match symbolic analysis");

    // permuted values via the precomputed scatter
    std::vector<double> ap(A.nnz());
    for (std::size_t k = 0; k < A.nnz(); ++k)
      ap[sym.scatter[k]] = A.values()[k];

    Builder fb;
    fb.elim_ids.reserve(n);
    const std::size_t ns = sym.supernodes.size();
    std::vector<std::unique_ptr<Front>> cb(ns);  // contribution blocks
    std::vector<int> delayed_count(ns, 0);
    std::vector<int> pos_of(n, -1);

    Front front;
    std::vector<int> fs_ids, rest;
    for (std::size_t s = 0; s < ns; ++s) {
      const auto [first, last] = sym.supernodes[s];
      // fully summed: delayed variables from child fronts, then the members
      fs_ids.clear();
      for (int c : sym.super_children[s])
        for (int t = 0; t < delayed_count[c]; ++t)
          fs_ids.push_back(cb[c]->ids[t]);
      for (int j = first; j <= last; ++j) fs_ids.push_back(j);

      // remaining rows: member column patterns plus child carry-over
      rest.clear();
      for (int j = first; j <= last; ++j)
        for (int k = sym.col_ptr[j]; k < sym.col_ptr[j + 1]; ++k) {
          const int i = sym.row_ind[k];
          if (i > last) rest.push_back(i);
        }
      for (int c : sym.super_children[s])
        for (std::size_t t = delayed_count[c]; t < cb[c]->ids.size(); ++t) {
          const int i = cb[c]->ids[t];
          if (i > last) rest.push_back(i);
        }
      std::sort(rest.begin(), rest.end());
      rest.erase(std::unique(rest.begin(), rest.end()), rest.end());

      const int fs = static_cast<int>(fs_ids.size());
      const int m = fs + static_cast<int>(rest.size());
      front.init(m, fs);
      for (int t = 0; t < fs; ++t) front.ids[t] = fs_ids[t];
      for (std::size_t t = 0; t < rest.size(); ++t)
        front.ids[fs + t] = rest[t];
      for (int t = 0; t < m; ++t) pos_of[front.ids[t]] = t;

      // assemble original entries of the member columns
      for (int j = first; j <= last; ++j) {
        const int pj = pos_of[j];
        for (int k = sym.col_ptr[j]; k < sym.col_ptr[j + 1]; ++k)
          front.add_sym(pos_of[sym.row_ind[k]], pj, ap[k]);
      }
      // assemble child contribution blocks
      for (int c : sym.super_children[s]) {
        const Front& g = *cb[c];
        for (int b = 0; b < g.m; ++b) {
          const int pb = pos_of[g.ids[b]];
          for (int a = b; a < g.m; ++a)
            front.add_sym(pos_of[g.ids[a]], pb, g.at(a, b));
        }
        cb[c].reset();
      }
      for (int t = 0; t < m; ++t) pos_of[front.ids[t]] = -1;

      const bool is_root = sym.parent[last] < 0;
      const int elim = eliminate_front(front, opts.pivot_tol, is_root, fb);

      if (!is_root) {
        auto rem = std::make_unique<Front>();
        const int mm = m - elim;
        rem->init(mm, 0);
        rem->ids.assign(front.ids.begin() + elim, front.ids.end());
        for (int b = 0; b < mm; ++b)
          for (int a = b; a < mm; ++a)
            rem->at(a, b) = front.at(a + elim, b + elim);
        delayed_count[s] = front.fs - elim;
        cb[s] = std::move(rem);
      }
    }

    return finish(n, sym.perm, fb, opts);
  }

  static Factorization factor(const SparseSym& A, const LdltOptions& opts) {
    Symbolic sym(A, opts.ordering);
    return factor(sym, A, opts);
  }

  static Factorization finish(int n, const std::vector<int>& perm, Builder& fb,
                              const LdltOptions& opts) {
    Factorization F;
    F.n_ = n;
    F.inertia_ = fb.inertia;
    std::vector<int> elim_pos(n, -1);
    for (int t = 0; t < n; ++t) elim_pos[fb.elim_ids[t]] = t;
    F.order_.resize(n);
    for (int t = 0; t < n; ++t) F.order_[t] = perm[fb.elim_ids[t]];
    F.lptr_ = std::move(fb.lptr);
    F.lval_ = std::move(fb.lval);
    F.lrow_.resize(fb.lrow_ids.size());
    for (std::size_t k = 0; k < fb.lrow_ids.size(); ++k)
      F.lrow_[k] = elim_pos[fb.lrow_ids[k]];
    F.d_diag_ = std::move(fb.d_diag);
    F.d_sub_ = std::move(fb.d_sub);
    F.two_start_ = std::move(fb.two_start);
    if (F.inertia_.zero > 0 && !opts.allow_singular)
      throw StructurallySingular(
          "matrix is singular: " + std::to_string(F.inertia_.zero) +
              " zero pivot(s)",
          F.inertia_.zero);
    return F;
  }

  // column max magnitude over rows [lo, m), excluding p (and q if >= 0)
  static double colmax(const Front& f, int col, int lo, int p, int q) {
    double g = 0.0;
    for (int i = lo; i < f.m; ++i) {
      if (i == p || i == q) continue;
      g = std::max(g, std::fabs(f.sym(i, col)));
    }
    return g;
  }

  static bool stable_2x2(const Front& f, int p, int q, int k, double u) {
    const double a = f.at(p, p), b = f.sym(q, p), c = f.at(q, q);
    const double det = a * c - b * b;
    if (det == 0.0) return false;
    const double e11 = c / det, e12 = -b / det, e22 = a / det;
    const double gp = colmax(f, p, k, p, q);
    const double gq = colmax(f, q, k, p, q);
    const double r1 = std::fabs(e11) * gp + std::fabs(e12) * gq;
    const double r2 = std::fabs(e12) * gp + std::fabs(e22) * gq;
    return std::max(r1, r2) <= 1.0 / u;
  }

  static void eliminate_1x1(Front& f, int k, int p, Builder& out) {
    f.swap_positions(k, p);
    const double d = f.at(k, k);
    out.elim_ids.push_back(f.ids[k]);
    out.d_diag.push_back(d);
    out.d_sub.push_back(0.0);
    out.two_start.push_back(0);
    if (d > 0.0)
      out.inertia.positive += 1;
    else
      out.inertia.negative += 1;
    for (int i = k + 1; i < f.m; ++i) {
      const double l = f.at(i, k) / d;
      if (l != 0.0) {
        out.lrow_ids.push_back(f.ids[i]);
        out.lval.push_back(l);
      }
      f.at(i, k) = l;  // keep L in place for the rank-1 update below
    }
    out.lptr.push_back(static_cast<int>(out.lrow_ids.size()));
    for (int j = k + 1; j < f.m; ++j) {
      const double lj = f.at(j, k);
      if (lj == 0.0) continue;
      const double s = d * lj;
      double* colj = &f.at(j, j);
      const double* colk = &f.at(j, k);
      const int len = f.m - j;
      for (int i = 0; i < len; ++i) colj[i] -= colk[i] * s;
    }
  }

  static void eliminate_2x2(Front& f, int k, int p, int q, Builder& out) {
    f.swap_positions(k, p);
    if (q == k) q = p;
    f.swap_positions(k + 1, q);
    const double a = f.at(k, k), b = f.at(k + 1, k), c = f.at(k + 1, k + 1);
    const double det = a * c - b * b;
    const double e11 = c / det, e12 = -b / det, e22 = a / det;

    out.elim_ids.push_back(f.ids[k]);
    out.elim_ids.push_back(f.ids[k + 1]);
    out.d_diag.push_back(a);
    out.d_diag.push_back(c);
    out.d_sub.push_back(b);
    out.d_sub.push_back(0.0);
    out.two_start.push_back(1);
    out.two_start.push_back(0);
    if (det < 0.0) {
      out.inertia.positive += 1;
      out.inertia.negative += 1;
    } else if (a + c > 0.0) {
      out.inertia.positive += 2;
    } else {
      out.inertia.negative += 2;
    }

    const int m = f.m;
    std::vector<double> w1(m - k - 2), w2(m - k - 2), l1(m - k - 2),
        l2(m - k - 2);
    for (int i = k + 2; i < m; ++i) {
      const double x1 = f.at(i, k), x2 = f.at(i, k + 1);
      w1[i - k - 2] = x1;
      w2[i - k - 2] = x2;
      l1[i - k - 2] = x1 * e11 + x2 * e12;
      l2[i - k - 2] = x1 * e12 + x2 * e22;
    }
    for (int i = k + 2; i < m; ++i) {
      if (l1[i - k - 2] != 0.0) {
        out.lrow_ids.push_back(f.ids[i]);
        out.lval.push_back(l1[i - k - 2]);
      }
    }
    out.lptr.push_back(static_cast<int>(out.lrow_ids.size()));
    for (int i = k + 2; i < m; ++i) {
      if (l2[i - k - 2] != 0.0) {
        out.lrow_ids.push_back(f.ids[i]);
        out.lval.push_back(l2[i - k - 2]);
      }
    }
    out.lptr.push_back(static_cast<int>(out.lrow_ids.size()));

    for (int j = k + 2; j < m; ++j) {
      const double wj1 = w1[j - k - 2], wj2 = w2[j - k - 2];
      if (wj1 == 0.0 && wj2 == 0.0) continue;
      double* colj = &f.at(j, j);
      const double* c1 = l1.data() + (j - k - 2);
      const double* c2 = l2.data() + (j - k - 2);
      const int len = m - j;
      for (int i = 0; i < len; ++i) colj[i] -= c1[i] * wj1 + c2[i] * wj2;
    }
  }

  static std::vector<int> postorder(const std::vector<int>& parent) {
    const int n = static_cast<int>(parent.size());
    std::vector<std::vector<int>> children(n);
    std::vector<int> roots;
    for (int j = 0; j < n; ++j) {
      if (parent[j] >= 0)
        children[parent[j]].push_back(j);
      else
        roots.push_back(j);
    }
    std::vector<int> post;
    post.reserve(n);
    std::vector<std::pair<int, std::size_t>> stack;
    for (int r : roots) {
      stack.emplace_back(r, 0);
      while (!stack.empty()) {
        auto& [v, next] = stack.back();
        if (next < children[v].size()) {
          stack.emplace_back(children[v][next++], 0);
        } else {
          post.push_back(v);
          stack.pop_back();
        }
      }
    }
    return post;
  }
};

/// Reusable pattern analysis; build once per sparsity structure and pass to
/// ldlt_factor for cheap refactorization across iterations.
using LdltSymbolic = LdltEngine::Symbolic;

/// Sparse symmetric-indefinite factorization with fill-reducing preorder and
/// exact inertia. Throws StructurallySingular on zero pivots unless
/// opts.allow_singular is set.
inline Factorization ldlt_factor(const SparseSym& m,
                                 const LdltOptions& opts = {}) {
  return LdltEngine::factor(m, opts);
}

inline Factorization ldlt_factor(const LdltSymbolic& symbolic,
                                 const SparseSym& m,
                                 const LdltOptions& opts = {}) {
  return LdltEngine::factor(symbolic, m, opts);
}

/// Dense symmetric-indefinite factorization (single front, no ordering).
inline Factorization dense_sym_factor(const DenseSym& m,
                                      const LdltOptions& opts = {}) {
  const int n = m.n();
  LdltEngine::Front f;
  f.init(n, n);
  for (int t = 0; t < n; ++t) f.ids[t] = t;
  for (int j = 0; j < n; ++j)
    for (int i = j; i < n; ++i) f.at(i, j) = m.at(i, j);
  LdltEngine::Builder fb;
  LdltEngine::eliminate_front(f, opts.pivot_tol, /*force=*/true, fb);
  std::vector<int> identity(n);
  for (int t = 0; t < n; ++t) identity[t] = t;
  return LdltEngine::finish(n, identity, fb, opts);
}

/// Solve with iterative refinement against the assembled matrix; stops on
/// the tolerance, on stagnation (keeping the best iterate), or after
/// max_refine corrections. achieved_residual receives ||Mx-b||_inf at exit.
template <class Matrix>
std::vector<double> solve_refined(const Matrix& m, const Factorization& f,
                                  std::span<const double> b,
                                  int max_refine = 3, double rtol = 1e-12,
                                  double* achieved_residual = nullptr) {
  const int n = f.n();
  std::vector<double> x = f.solve(b);
  double bnorm = 0.0;
  for (double v : b) bnorm = std::max(bnorm, std::fabs(v));
  std::vector<double> r(n);
  std::vector<double> best_x;
  double best_r = std::numeric_limits<double>::infinity();
  double prev_r = std::numeric_limits<double>::infinity();
  for (int it = 0;; ++it) {
    std::copy(b.begin(), b.end(), r.begin());
    m.sym_matvec(x, r, -1.0);
    double rnorm = 0.0;
    for (double v : r) rnorm = std::max(rnorm, std::fabs(v));
    if (rnorm < best_r) {
      best_r = rnorm;
      best_x = x;
    }
    if (rnorm <= rtol * (1.0 + bnorm) || it == max_refine ||
        rnorm > 0.5 * prev_r)
      break;
    prev_r = rnorm;
    std::vector<double> dx = f.solve(r);
    for (int i = 0; i < n; ++i) x[i] += dx[i];
  }
  if (achieved_residual) *achieved_residual = best_r;
  return best_x;
}

}  // namespace graphnlp

#endif  // GRAPHNLP_LDLT_HPP
