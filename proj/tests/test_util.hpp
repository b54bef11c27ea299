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

#ifndef GRAPHNLP_TESTS_TEST_UTIL_HPP
#define GRAPHNLP_TESTS_TEST_UTIL_HPP

#include <cmath>
#include <random>
#include <vector>

#include "graphnlp/expr.hpp"
#include "graphnlp/ldlt.hpp"

namespace graphnlp::testutil {

/// Cyclic Jacobi eigenvalue iteration: the independent inertia oracle.
inline Inertia jacobi_inertia(DenseSym a, double tol = 1e-12) {
  const int n = a.n();
  a.symmetrize_from_lower();
  double scale = 0.0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) scale = std::max(scale, std::fabs(a.at(i, j)));
  if (scale == 0.0) scale = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q)
        off = std::max(off, std::fabs(a.at(p, q)));
    if (off <= tol * scale) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (std::fabs(apq) <= 1e-300) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double cs = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * cs;
        for (int k = 0; k < n; ++k) {
          const double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = cs * akp - sn * akq;
          a.at(k, q) = sn * akp + cs * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = cs * apk - sn * aqk;
          a.at(q, k) = sn * apk + cs * aqk;
        }
      }
  }
  Inertia in;
  for (int i = 0; i < n; ++i) {
    const double d = a.at(i, i);
    if (d > tol * scale)
      in.positive++;
    else if (d < -tol * scale)
      in.negative++;
    else
      in.zero++;
  }
  return in;
}

inline DenseSym random_dense_sym(std::mt19937& rng, int n) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  DenseSym a(n);
  for (int j = 0; j < n; ++j)
    for (int i = j; i < n; ++i) a.at(i, j) = dist(rng);
  return a;
}

inline SparseSym to_sparse(const DenseSym& a) {
  std::vector<int> r, c;
  std::vector<double> v;
  for (int j = 0; j < a.n(); ++j)
    for (int i = j; i < a.n(); ++i)
      if (a.at(i, j) != 0.0) {
        r.push_back(i);
        c.push_back(j);
        v.push_back(a.at(i, j));
      }
  return SparseSym::from_triplets(a.n(), r, c, v);
}

inline bool close(double a, double b, double tol) {
  return std::fabs(a - b) <= tol * std::max({1.0, std::fabs(a), std::fabs(b)});
}

/// Random smooth expression over variables [0, nvars). Arguments of log,
/// quotient and real powers are kept away from their domain boundaries so
/// central differences are valid at sampled points.
inline Expr random_expr(std::mt19937& rng, int nvars, int depth) {
  std::uniform_int_distribution<int> kind(0, 9);
  std::uniform_int_distribution<int> var(0, nvars - 1);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  auto leaf = [&]() -> Expr {
    if (kind(rng) < 3) return Expr::constant(coef(rng));
    return Expr::variable(var(rng));
  };
  if (depth <= 0) return leaf();
  auto sub = [&]() { return random_expr(rng, nvars, depth - 1); };
  auto positive = [&](const Expr& e) {
    return Expr::smooth_abs(e) + Expr::constant(0.5);
  };
  switch (kind(rng)) {
    case 0:
      return sub() + sub();
    case 1:
      return sub() - sub();
    case 2:
      return sub() * sub();
    case 3:
      return sub() / positive(sub());
    case 4:
      return Expr::pow(sub(), 2);
    case 5:
      return Expr::pow(sub(), 3);
    case 6:
      return Expr::pow(positive(sub()), 1.7);
    case 7:
      return Expr::exp(Expr::constant(0.3) * sub());
    case 8:
      return Expr::log(positive(sub()));
    default:
      return Expr::smooth_abs(sub());
  }
}

inline std::vector<double> random_point(std::mt19937& rng, int nvars) {
  std::uniform_real_distribution<double> dist(0.5, 2.0);
  std::vector<double> x(nvars);
  for (auto& v : x) v = dist(rng);
  return x;
}

/// Value, gradient and Hessian magnitudes small enough that central
/// differences at steps 1e-6/1e-5 carry the digits the comparisons need.
inline bool well_scaled(const Expr& e, const std::vector<double>& x,
                        double cap = 1e6) {
  const double v = evaluate(e, x);
  if (!std::isfinite(v) || std::fabs(v) > cap) return false;
  for (const auto& [i, g] : gradient(e, x))
    if (!std::isfinite(g) || std::fabs(g) > cap) return false;
  auto h = lagrangian_hessian(e, {}, x, 1.0, {});
  for (double w : h.values)
    if (!std::isfinite(w) || std::fabs(w) > cap) return false;
  return true;
}

/// Draws (expression, point) pairs until the scale check passes.
inline std::pair<Expr, std::vector<double>> random_smooth_case(
    std::mt19937& rng, int nvars, int depth) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    Expr e = random_expr(rng, nvars, depth);
    auto x = random_point(rng, nvars);
    if (well_scaled(e, x)) return {std::move(e), std::move(x)};
  }
  return {Expr::pow(Expr::variable(0), 2), random_point(rng, nvars)};
}

/// Central finite difference of the expression value.
inline double fd_gradient(const Expr& e, std::vector<double> x, int i,
                          double h = 1e-6) {
  x[i] += h;
  const double fp = evaluate(e, x);
  x[i] -= 2 * h;
  const double fm = evaluate(e, x);
  return (fp - fm) / (2 * h);
}

/// Central finite difference of the analytic gradient (Hessian oracle).
inline double fd_hessian(const Expr& e, std::vector<double> x, int i, int j,
                         double h = 1e-5) {
  auto grad_i = [&](const std::vector<double>& p) {
    for (const auto& [g, v] : gradient(e, p))
      if (g == i) return v;
    return 0.0;
  };
  x[j] += h;
  const double gp = grad_i(x);
  x[j] -= 2 * h;
  const double gm = grad_i(x);
  return (gp - gm) / (2 * h);
}

}  // namespace graphnlp::testutil

#endif  // GRAPHNLP_TESTS_TEST_UTIL_HPP
