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
#include <random>
#include <sstream>

#include "graphnlp/ldlt.hpp"
#include "test_util.hpp"

using namespace graphnlp;
using namespace graphnlp::testutil;

namespace {

SparseSym make_sparse(int n, const std::vector<std::tuple<int, int, double>>& e) {
  std::vector<int> r, c;
  std::vector<double> v;
  for (auto& [i, j, x] : e) {
    r.push_back(i);
    c.push_back(j);
    v.push_back(x);
  }
  return SparseSym::from_triplets(n, r, c, v);
}

double solve_residual(const SparseSym& m, const std::vector<double>& x,
                      const std::vector<double>& b) {
  std::vector<double> r(b);
  m.sym_matvec(x, r, -1.0);
  double rn = 0.0, bn = 0.0;
  for (double t : r) rn = std::max(rn, std::fabs(t));
  for (double t : b) bn = std::max(bn, std::fabs(t));
  return rn / std::max(bn, 1e-300);
}

}  // namespace

TEST_CASE("diagonal factorization and solve") {
  auto m = make_sparse(2, {{0, 0, 2.0}, {1, 1, 3.0}});
  auto f = ldlt_factor(m);
  CHECK(f.inertia() == Inertia{2, 0, 0});
  auto x = f.solve(std::vector<double>{2.0, 3.0});
  CHECK(x[0] == Catch::Approx(1.0));
  CHECK(x[1] == Catch::Approx(1.0));
}

TEST_CASE("off-diagonal 2x2 needs a block pivot") {
  auto m = make_sparse(2, {{1, 0, 1.0}});
  auto f = ldlt_factor(m);
  CHECK(f.inertia() == Inertia{1, 1, 0});
  auto x = f.solve(std::vector<double>{3.0, 5.0});
  CHECK(x[0] == Catch::Approx(5.0));
  CHECK(x[1] == Catch::Approx(3.0));
}

TEST_CASE("random SPD solves to tight residual") {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const int n = 20;
  // A = G^T G + I
  std::vector<std::vector<double>> g(n, std::vector<double>(n));
  for (auto& row : g)
    for (auto& v : row) v = dist(rng);
  DenseSym a(n);
  for (int j = 0; j < n; ++j)
    for (int i = j; i < n; ++i) {
      double s = (i == j) ? 1.0 : 0.0;
      for (int k = 0; k < n; ++k) s += g[k][i] * g[k][j];
      a.at(i, j) = s;
    }
  auto m = to_sparse(a);
  auto f = ldlt_factor(m);
  CHECK(f.inertia() == Inertia{n, 0, 0});
  std::vector<double> b(n);
  for (auto& v : b) v = dist(rng);
  double res = 0.0;
  auto x = solve_refined(m, f, b, 1, 1e-13, &res);
  CHECK(solve_residual(m, x, b) <= 1e-12);
}

TEST_CASE("identity and scalar solves") {
  auto id = make_sparse(3, {{0, 0, 1.0}, {1, 1, 1.0}, {2, 2, 1.0}});
  auto f = ldlt_factor(id);
  auto x = f.solve(std::vector<double>{4.0, -1.0, 2.5});
  CHECK(x == std::vector<double>{4.0, -1.0, 2.5});

  auto d4 = make_sparse(1, {{0, 0, 4.0}});
  auto f4 = ldlt_factor(d4);
  CHECK(f4.solve(std::vector<double>{8.0})[0] == Catch::Approx(2.0));
}

TEST_CASE("block rhs equals stacked single solves") {
  std::mt19937 rng(3);
  auto a = random_dense_sym(rng, 12);
  for (int i = 0; i < 12; ++i) a.at(i, i) += 4.0;  // make it nonsingular
  auto m = to_sparse(a);
  auto f = ldlt_factor(m);
  const int nc = 32;
  std::vector<double> B(12 * nc);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (auto& v : B) v = dist(rng);
  std::vector<double> Bcopy(B);
  f.solve_multi_inplace(B.data(), 12, nc);
  for (int c = 0; c < nc; ++c) {
    std::vector<double> b(Bcopy.begin() + c * 12, Bcopy.begin() + (c + 1) * 12);
    auto x = f.solve(b);
    for (int i = 0; i < 12; ++i) CHECK(B[c * 12 + i] == x[i]);
  }
}

TEST_CASE("dense factorization examples") {
  DenseSym one(1);
  one.at(0, 0) = 5.0;
  auto f1 = dense_sym_factor(one);
  CHECK(f1.solve(std::vector<double>{10.0})[0] == Catch::Approx(2.0));

  DenseSym hilbert(4);
  for (int j = 0; j < 4; ++j)
    for (int i = j; i < 4; ++i) hilbert.at(i, j) = 1.0 / (i + j + 1);
  std::vector<double> rhs(4, 0.0);
  hilbert.symmetrize_from_lower();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) rhs[i] += hilbert.at(i, j);
  auto fh = dense_sym_factor(hilbert);
  auto x = fh.solve(rhs);
  for (int i = 0; i < 4; ++i) CHECK(x[i] == Catch::Approx(1.0).margin(1e-8));

  DenseSym ind(2);
  ind.at(0, 0) = 1.0;
  ind.at(1, 0) = 2.0;
  ind.at(1, 1) = 1.0;
  CHECK(dense_sym_factor(ind).inertia() == Inertia{1, 1, 0});
}

TEST_CASE("inertia matches Jacobi eigenvalue oracle") {
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 30);
    auto a = random_dense_sym(rng, n);
    auto expected = jacobi_inertia(a);
    auto f = ldlt_factor(to_sparse(a), {.allow_singular = true});
    INFO("trial " << trial << " n " << n);
    CHECK(f.inertia() == expected);
    // dense engine must agree with the sparse one
    auto fd = dense_sym_factor(a, {.allow_singular = true});
    CHECK(fd.inertia() == expected);
  }
}

TEST_CASE("saddle point KKT inertia") {
  // [[I2, A^T], [A, 0]] with A = [1 1] has inertia (2, 1, 0)
  auto m = make_sparse(3, {{0, 0, 1.0}, {1, 1, 1.0}, {2, 0, 1.0}, {2, 1, 1.0}});
  auto f = ldlt_factor(m);
  CHECK(f.inertia() == Inertia{2, 1, 0});
  // solve a known system: x = (0.5, 0.5), lambda = -0.5 solves
  // [I A'; A 0][x; l] = [1 1 ; 1]... direct residual check instead
  std::vector<double> b{1.0, 1.0, 1.0};
  auto x = solve_refined(m, f, b, 2);
  CHECK(solve_residual(m, x, b) <= 1e-12);
}

TEST_CASE("refined residual on moderately conditioned systems") {
  std::mt19937 rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 5 + static_cast<int>(rng() % 40);
    auto a = random_dense_sym(rng, n);
    auto m = to_sparse(a);
    auto f = ldlt_factor(m, {.allow_singular = true});
    if (f.inertia().zero > 0) continue;
    std::vector<double> b(n);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto& v : b) v = dist(rng);
    auto x = solve_refined(m, f, b, 2);
    CHECK(solve_residual(m, x, b) <= 1e-10);
  }
}

TEST_CASE("factorization is deterministic") {
  std::mt19937 rng(5);
  auto a = random_dense_sym(rng, 25);
  auto m = to_sparse(a);
  auto f1 = ldlt_factor(m, {.allow_singular = true});
  auto f2 = ldlt_factor(m, {.allow_singular = true});
  CHECK(f1.order() == f2.order());
  std::vector<double> b(25, 1.0);
  CHECK(f1.solve(b) == f2.solve(b));
}

TEST_CASE("singular matrix reports zero pivots") {
  auto m = make_sparse(2, {{0, 0, 1.0}});
  CHECK_THROWS_AS(ldlt_factor(m), StructurallySingular);
  auto f = ldlt_factor(m, {.allow_singular = true});
  CHECK(f.inertia() == Inertia{1, 0, 1});
}

TEST_CASE("matrix market round trip") {
  std::mt19937 rng(11);
  auto a = random_dense_sym(rng, 8);
  auto m = to_sparse(a);
  std::stringstream ss;
  write_matrix_market(m, ss);
  auto m2 = read_matrix_market(ss);
  REQUIRE(m2.n() == m.n());
  REQUIRE(m2.nnz() == m.nnz());
  for (std::size_t k = 0; k < m.nnz(); ++k)
    CHECK(m2.values()[k] == m.values()[k]);
}
