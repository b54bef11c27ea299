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

#ifndef GRAPHNLP_SPARSE_HPP
#define GRAPHNLP_SPARSE_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "graphnlp/errors.hpp"
#include "graphnlp/expr.hpp"

namespace graphnlp {

/// Symmetric sparse matrix, lower triangle stored in compressed columns.
/// Entry invariant: row index >= column index, rows sorted within a column.
class SparseSym {
 public:
  SparseSym() = default;
  explicit SparseSym(int n) : n_(n), col_ptr_(n + 1, 0) {}

  /// Assembles from triplet data; entries above the diagonal are mirrored
  /// into the lower triangle, duplicates are summed.
  static SparseSym from_triplets(int n, std::span<const int> rows,
                                 std::span<const int> cols,
                                 std::span<const double> vals) {
    SparseSym m(n);
    const std::size_t nz = vals.size();
    std::vector<int> r(nz), c(nz);
    for (std::size_t k = 0; k < nz; ++k) {
      int i = rows[k], j = cols[k];
      if (i < 0 || i >= n || j < 0 || j >= n)
        throw IndexError("triplet entry out of range");
      if (i < j) std::swap(i, j);
      r[k] = i;
      c[k] = j;
    }
    // count, bucket, then compress duplicates per column
    std::vector<int> count(n, 0);
    for (std::size_t k = 0; k < nz; ++k) count[c[k]]++;
    std::vector<int> start(n + 1, 0);
    for (int j = 0; j < n; ++j) start[j + 1] = start[j] + count[j];
    std::vector<int> ri(nz);
    std::vector<double> rv(nz);
    std::vector<int> pos(start.begin(), start.end() - 1);
    for (std::size_t k = 0; k < nz; ++k) {
      ri[pos[c[k]]] = r[k];
      rv[pos[c[k]]] = vals[k];
      pos[c[k]]++;
    }
    m.col_ptr_[0] = 0;
    for (int j = 0; j < n; ++j) {
      const int lo = start[j], hi = start[j + 1];
      std::vector<std::pair<int, double>> col;
      col.reserve(hi - lo);
      for (int k = lo; k < hi; ++k) col.emplace_back(ri[k], rv[k]);
      // stable: duplicates are summed in insertion order, so two assemblies
      // that insert contributions in the same order agree bit for bit
      std::stable_sort(col.begin(), col.end(),
                       [](const auto& a, const auto& b) {
                         return a.first < b.first;
                       });
      int last = -1;
      for (const auto& [row, v] : col) {
        if (row == last) {
          m.values_.back() += v;
        } else {
          m.row_ind_.push_back(row);
          m.values_.push_back(v);
          last = row;
        }
      }
      m.col_ptr_[j + 1] = static_cast<int>(m.row_ind_.size());
    }
    return m;
  }

  static SparseSym from_triplets(const SparseTriplet& t) {
    if (t.nrows != t.ncols)
      throw IndexError("symmetric assembly requires a square triplet");
    return from_triplets(t.nrows, t.rows, t.cols, t.values);
  }

  int n() const { return n_; }
  std::size_t nnz() const { return values_.size(); }
  const std::vector<int>& col_ptr() const { return col_ptr_; }
  const std::vector<int>& row_ind() const { return row_ind_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  /// y += alpha * M * x using the full symmetric matrix.
  void sym_matvec(std::span<const double> x, std::span<double> y,
                  double alpha = 1.0) const {
    for (int j = 0; j < n_; ++j) {
      for (int k = col_ptr_[j]; k < col_ptr_[j + 1]; ++k) {
        const int i = row_ind_[k];
        const double v = alpha * values_[k];
        y[i] += v * x[j];
        if (i != j) y[j] += v * x[i];
      }
    }
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::fabs(v));
    return m;
  }

 private:
  int n_ = 0;
  std::vector<int> col_ptr_;
  std::vector<int> row_ind_;
  std::vector<double> values_;
};

/// Column-major dense symmetric matrix, full storage, lower triangle
/// authoritative.
class DenseSym {
 public:
  DenseSym() = default;
  explicit DenseSym(int n) : n_(n), a_(static_cast<std::size_t>(n) * n, 0.0) {}

  int n() const { return n_; }
  double& at(int i, int j) { return a_[static_cast<std::size_t>(j) * n_ + i]; }
  double at(int i, int j) const {
    return a_[static_cast<std::size_t>(j) * n_ + i];
  }
  double* data() { return a_.data(); }
  const double* data() const { return a_.data(); }

  /// Mirrors the lower triangle into the upper one.
  void symmetrize_from_lower() {
    for (int j = 0; j < n_; ++j)
      for (int i = j + 1; i < n_; ++i) at(j, i) = at(i, j);
  }

  void sym_matvec(std::span<const double> x, std::span<double> y,
                  double alpha = 1.0) const {
    for (int j = 0; j < n_; ++j) {
      y[j] += alpha * at(j, j) * x[j];
      for (int i = j + 1; i < n_; ++i) {
        y[i] += alpha * at(i, j) * x[j];
        y[j] += alpha * at(i, j) * x[i];
      }
    }
  }

 private:
  int n_ = 0;
  std::vector<double> a_;
};

// --- Matrix Market coordinate I/O (symmetric, test fixtures and dumps) -----

inline void write_matrix_market(const SparseSym& m, std::ostream& os) {
  os << "%%MatrixMarket matrix coordinate real symmetric\n";
  os << m.n() << " " << m.n() << " " << m.nnz() << "\n";
  os << std::setprecision(17);
  for (int j = 0; j < m.n(); ++j)
    for (int k = m.col_ptr()[j]; k < m.col_ptr()[j + 1]; ++k)
      os << m.row_ind()[k] + 1 << " " << j + 1 << " " << m.values()[k] << "\n";
}

inline void write_matrix_market(const SparseSym& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ParseError("cannot open " + path + " for writing");
  write_matrix_market(m, f);
}

inline void write_matrix_market_dense(const DenseSym& m, std::ostream& os) {
  os << "%%MatrixMarket matrix coordinate real symmetric\n";
  std::size_t nz = 0;
  for (int j = 0; j < m.n(); ++j)
    for (int i = j; i < m.n(); ++i)
      if (m.at(i, j) != 0.0) ++nz;
  os << m.n() << " " << m.n() << " " << nz << "\n";
  os << std::setprecision(17);
  for (int j = 0; j < m.n(); ++j)
    for (int i = j; i < m.n(); ++i)
      if (m.at(i, j) != 0.0)
        os << i + 1 << " " << j + 1 << " " << m.at(i, j) << "\n";
}

inline SparseSym read_matrix_market(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) ||
      line.rfind("%%MatrixMarket", 0) != 0 ||
      line.find("symmetric") == std::string::npos)
    throw ParseError("expected a MatrixMarket symmetric coordinate header");
  while (std::getline(is, line)) {
    if (!line.empty() && line[0] != '%') break;
  }
  std::istringstream hdr(line);
  int nr = 0, nc = 0;
  std::size_t nz = 0;
  hdr >> nr >> nc >> nz;
  if (nr != nc || nr <= 0) throw ParseError("bad MatrixMarket size line");
  std::vector<int> rows, cols;
  std::vector<double> vals;
  rows.reserve(nz);
  cols.reserve(nz);
  vals.reserve(nz);
  for (std::size_t k = 0; k < nz; ++k) {
    int i, j;
    double v;
    if (!(is >> i >> j >> v)) throw ParseError("truncated MatrixMarket data");
    rows.push_back(i - 1);
    cols.push_back(j - 1);
    vals.push_back(v);
  }
  return SparseSym::from_triplets(nr, rows, cols, vals);
}

inline SparseSym read_matrix_market(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open " + path);
  return read_matrix_market(f);
}

}  // namespace graphnlp

#endif  // GRAPHNLP_SPARSE_HPP
