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

#ifndef GRAPHNLP_IPM_HPP
#define GRAPHNLP_IPM_HPP

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "graphnlp/errors.hpp"
#include "graphnlp/kkt.hpp"
#include "graphnlp/nlp_functions.hpp"
#include "graphnlp/optigraph.hpp"

namespace graphnlp {

enum class BackendKind { Monolithic, SchurDual, SchurTree };

inline std::string to_string(BackendKind k) {
  switch (k) {
    case BackendKind::Monolithic: return "monolithic";
    case BackendKind::SchurDual: return "schur-dual";
    default: return "schur-tree";
  }
}

struct SolverOptions {
  double tol = 1e-8;
  int max_iter = 500;
  double mu0 = 0.1;
  double fraction_to_boundary = 0.995;  // tau
  BackendKind backend = BackendKind::Monolithic;
  int threads = 1;
  double delta_w0 = 1e-4;       // Hessian regularization seed
  double delta_w_growth = 8.0;  // geometric growth factor
  double delta_w_max = 1e40;
  double delta_c0 = 1e-8;  // constraint regularization: delta_c0 * mu^0.25

  // barrier schedule and filter constants; defaults follow common
  // filter line-search practice and are all overridable here
  double kappa_eps = 10.0;
  double kappa_mu = 0.2;
  double theta_mu = 1.5;
  double kappa1 = 1e-2;  // initial interior push
  double gamma_theta = 1e-5;
  double gamma_phi = 1e-5;
  double eta_phi = 1e-4;
  double s_theta = 1.1;
  double s_phi = 2.3;
  double delta_switch = 1.0;
  double alpha_min = 1e-14;
  double kappa_sigma = 1e10;  // bound-dual safeguard box

  std::ostream* log = nullptr;
  bool log_csv = false;

  void validate() const {
    if (!(tol > 0)) throw ConfigError("tol must be positive");
    if (!(fraction_to_boundary > 0 && fraction_to_boundary < 1))
      throw ConfigError("fraction_to_boundary must lie in (0, 1)");
    if (max_iter < 1) throw ConfigError("max_iter must be positive");
    if (!(mu0 > 0)) throw ConfigError("mu0 must be positive");
  }
};

enum class SolveStatus { Optimal, MaxIter, InfeasibleStep, Error };

inline std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::MaxIter: return "max_iter";
    case SolveStatus::InfeasibleStep: return "infeasible_step";
    default: return "error";
  }
}

struct SolveTimings {
  double function_eval = 0.0;
  double derivative_eval = 0.0;
  double linear_solve = 0.0;
  double total = 0.0;
};

struct SolveReport {
  SolveStatus status = SolveStatus::Error;
  double objective = 0.0;
  int iterations = 0;
  SolveTimings timings;
  double kkt_error = std::numeric_limits<double>::infinity();
  int schur_dimension = 0;
  int inertia_corrections = 0;
  std::string message;
};

/// Primal-dual iterate: primal x, equality duals lambda, bound duals for
/// each finite side, barrier parameter and iteration counter.
struct IterationState {
  std::vector<double> x;
  std::vector<double> lambda;
  std::vector<double> zl, zu;  // entries 0 where the side is infinite
  double mu = 0.1;
  int k = 0;
};

struct SearchDirection {
  std::vector<double> dx;
  std::vector<double> dlambda;
  std::vector<double> dzl, dzu;
};

/// Primal-dual direction from one backend together with the regularization
/// that certified the factorization.
struct BackendStep {
  std::vector<double> dx, dl;
  double delta_w = 0.0;
  double delta_c = 0.0;
  int corrections = 0;
  double residual = 0.0;
};

/// Inertia-correction loop around a backend: retries with growing delta_w
/// (and delta_c tied to mu) until the factorization reports exactly
/// (n, m, 0), then solves. Mutates data's delta fields.
inline BackendStep regularized_step(KktBackend& backend, KktData& data, int n,
                                    int m, const SolverOptions& opts,
                                    double mu) {
  const Inertia target{n, m, 0};
  BackendStep out;
  // the mu-scaled dual shift is on from the start: it bounds the dual-space
  // conditioning so that monolithic and Schur solves of the same system
  // agree to the step tolerance even at degenerate iterates
  double dw = 0.0;
  const double dc = opts.delta_c0 * std::pow(mu, 0.25);
  for (int attempt = 0;; ++attempt) {
    if (attempt == 1)
      dw = opts.delta_w0;
    else if (attempt > 1)
      dw *= opts.delta_w_growth;
    if (dw > opts.delta_w_max)
      throw SingularKKT("KKT system singular beyond regularization limit");
    data.delta_w = dw;
    data.delta_c = dc;
    auto inertia = backend.factorize(data);
    if (inertia.has_value() && *inertia == target) break;
    out.corrections += 1;
  }
  out.delta_w = dw;
  out.delta_c = dc;
  out.residual = backend.solve(data, out.dx, out.dl);
  return out;
}

/// Monotone barrier reduction: mu+ = max(tol/11, min(kappa*mu, mu^theta)).
inline double update_barrier(double mu, double tol, double kappa_mu = 0.2,
                             double theta_mu = 1.5) {
  return std::max(tol / 11.0,
                  std::min(kappa_mu * mu, std::pow(mu, theta_mu)));
}

/// Largest alpha in (0, 1] with x + alpha*dx and z + alpha*dz keeping a
/// (1 - tau) margin of their current slack to the boundary.
inline double fraction_to_boundary_alpha(
    std::span<const double> x, std::span<const double> dx,
    std::span<const double> lower, std::span<const double> upper,
    std::span<const double> zl, std::span<const double> dzl,
    std::span<const double> zu, std::span<const double> dzu, double tau) {
  double alpha = 1.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isfinite(lower[i]) && dx[i] < 0.0)
      alpha = std::min(alpha, -tau * (x[i] - lower[i]) / dx[i]);
    if (std::isfinite(upper[i]) && dx[i] > 0.0)
      alpha = std::min(alpha, tau * (upper[i] - x[i]) / dx[i]);
  }
  for (std::size_t i = 0; i < zl.size(); ++i) {
    if (zl[i] > 0.0 && dzl[i] < 0.0)
      alpha = std::min(alpha, -tau * zl[i] / dzl[i]);
    if (zu[i] > 0.0 && dzu[i] < 0.0)
      alpha = std::min(alpha, -tau * zu[i] / dzu[i]);
  }
  return alpha;
}

/// Filter line-search interior-point solver over a FlatNLP, parameterized by
/// a KKT backend (monolithic or Schur decomposition).
class IpmSolver {
 public:
  explicit IpmSolver(const FlatNLP& flat, SolverOptions opts = {})
      : flat_(&flat), opts_(opts), funcs_(flat) {
    opts_.validate();
    n_ = flat.n_vars;
    m_ = flat.n_cons;
    lower_ = flat.lower;
    upper_ = flat.upper;
    // equal bounds are relaxed slightly so the iterate can stay interior
    for (int i = 0; i < n_; ++i) {
      if (std::isfinite(lower_[i]) && std::isfinite(upper_[i]) &&
          upper_[i] - lower_[i] < 1e-10) {
        const double pad = 1e-8 * std::max(1.0, std::fabs(lower_[i]));
        lower_[i] -= pad;
        upper_[i] += pad;
      }
    }
    switch (opts_.backend) {
      case BackendKind::Monolithic:
        backend_ = std::make_unique<MonolithicBackend>(flat, funcs_);
        break;
      case BackendKind::SchurDual:
        backend_ =
            std::make_unique<SchurDualBackend>(flat, funcs_, opts_.threads);
        break;
      case BackendKind::SchurTree:
        backend_ =
            std::make_unique<SchurTreeBackend>(flat, funcs_, opts_.threads);
        break;
    }
    initialize();
  }

  IterationState& state() { return state_; }
  const IterationState& state() const { return state_; }

  /// Replaces the iterate (tests, warm restarts); evaluations are refreshed
  /// on the next use.
  void set_state(IterationState s) {
    state_ = std::move(s);
    evals_fresh_ = false;
  }
  KktBackend& backend() { return *backend_; }
  NlpFunctions& functions() { return funcs_; }
  const SolverOptions& options() const { return opts_; }
  const KktData& last_kkt_data() const { return data_; }
  const std::vector<double>& bound_lower() const { return lower_; }
  const std::vector<double>& bound_upper() const { return upper_; }

  /// Called after each computed direction (cross-backend comparisons).
  std::function<void(const IterationState&, const SearchDirection&)>
      step_observer;

  /// Pushes the initial point strictly inside the bounds and starts the
  /// duals at lambda = 0, z = mu0 / slack.
  void initialize() {
    state_.x = flat_->x0;
    for (int i = 0; i < n_; ++i) {
      const double l = lower_[i], u = upper_[i];
      double lo_push = 0.0, up_push = 0.0;
      if (std::isfinite(l))
        lo_push = std::isfinite(u)
                      ? std::min(opts_.kappa1 * std::max(1.0, std::fabs(l)),
                                 0.25 * (u - l))
                      : opts_.kappa1 * std::max(1.0, std::fabs(l));
      if (std::isfinite(u))
        up_push = std::isfinite(l)
                      ? std::min(opts_.kappa1 * std::max(1.0, std::fabs(u)),
                                 0.25 * (u - l))
                      : opts_.kappa1 * std::max(1.0, std::fabs(u));
      if (std::isfinite(l)) state_.x[i] = std::max(state_.x[i], l + lo_push);
      if (std::isfinite(u)) state_.x[i] = std::min(state_.x[i], u - up_push);
    }
    state_.lambda.assign(m_, 0.0);
    state_.zl.assign(n_, 0.0);
    state_.zu.assign(n_, 0.0);
    state_.mu = opts_.mu0;
    state_.k = 0;
    for (int i = 0; i < n_; ++i) {
      if (std::isfinite(lower_[i]))
        state_.zl[i] = state_.mu / (state_.x[i] - lower_[i]);
      if (std::isfinite(upper_[i]))
        state_.zu[i] = state_.mu / (upper_[i] - state_.x[i]);
    }
    evals_fresh_ = false;
    refresh();
    reset_filter();
  }

  /// Scaled KKT error of the current iterate at barrier parameter mu
  /// (pass 0 for the termination measure).
  double kkt_error(double mu) {
    refresh();
    const double s_max = 100.0;
    double dual_sum = 0.0;
    int dual_count = m_;
    for (double v : state_.lambda) dual_sum += std::fabs(v);
    int nz = 0;
    double z_sum = 0.0;
    for (int i = 0; i < n_; ++i) {
      if (std::isfinite(lower_[i])) {
        z_sum += state_.zl[i];
        ++nz;
      }
      if (std::isfinite(upper_[i])) {
        z_sum += state_.zu[i];
        ++nz;
      }
    }
    dual_sum += z_sum;
    dual_count += nz;
    const double s_d =
        dual_count > 0
            ? std::max(s_max, dual_sum / dual_count) / s_max
            : 1.0;
    const double s_c = nz > 0 ? std::max(s_max, z_sum / nz) / s_max : 1.0;

    double stat = 0.0;
    for (int i = 0; i < n_; ++i) {
      double r = grad_f_[i] - state_.zl[i] + state_.zu[i];
      r += jtlambda_[i];
      stat = std::max(stat, std::fabs(r));
    }
    double feas = 0.0;
    for (double v : c_) feas = std::max(feas, std::fabs(v));
    double comp = 0.0;
    for (int i = 0; i < n_; ++i) {
      if (std::isfinite(lower_[i]))
        comp = std::max(
            comp, std::fabs((state_.x[i] - lower_[i]) * state_.zl[i] - mu));
      if (std::isfinite(upper_[i]))
        comp = std::max(
            comp, std::fabs((upper_[i] - state_.x[i]) * state_.zu[i] - mu));
    }
    return std::max({stat / s_d, feas, comp / s_c});
  }

  /// Newton direction for the current iterate: assembles the reduced KKT
  /// system, applies inertia corrections until the factorization certifies
  /// (n, m, 0), solves with refinement, and recovers the bound-dual step.
  SearchDirection compute_step() {
    refresh();
    build_kkt_data();
    regularized_solve();
    SearchDirection dir;
    dir.dx = dx_;
    dir.dlambda = dl_;
    dir.dzl.assign(n_, 0.0);
    dir.dzu.assign(n_, 0.0);
    for (int i = 0; i < n_; ++i) {
      if (std::isfinite(lower_[i])) {
        const double sl = state_.x[i] - lower_[i];
        dir.dzl[i] =
            state_.mu / sl - state_.zl[i] - (state_.zl[i] / sl) * dir.dx[i];
      }
      if (std::isfinite(upper_[i])) {
        const double su = upper_[i] - state_.x[i];
        dir.dzu[i] =
            state_.mu / su - state_.zu[i] + (state_.zu[i] / su) * dir.dx[i];
      }
    }
    if (step_observer) step_observer(state_, dir);
    return dir;
  }

  /// Backtracking filter line search from the fraction-to-boundary limit.
  /// Returns the accepted step length; throws LineSearchFailure below
  /// alpha_min.
  double filter_line_search(const SearchDirection& dir) {
    refresh();
    const double tau = opts_.fraction_to_boundary;
    const double alpha_max = fraction_to_boundary_alpha(
        state_.x, dir.dx, lower_, upper_, state_.zl, dir.dzl, state_.zu,
        dir.dzu, tau);
    const double theta0 = constraint_violation(c_);
    const double phi0 = barrier_objective(state_.x, f_);
    double dphi = 0.0;
    for (int i = 0; i < n_; ++i) {
      double g = grad_f_[i];
      if (std::isfinite(lower_[i])) g -= state_.mu / (state_.x[i] - lower_[i]);
      if (std::isfinite(upper_[i])) g += state_.mu / (upper_[i] - state_.x[i]);
      dphi += g * dir.dx[i];
    }

    double alpha = alpha_max;
    std::vector<double> xt(n_);
    std::vector<double> ct(m_);
    while (alpha >= opts_.alpha_min) {
      for (int i = 0; i < n_; ++i) xt[i] = state_.x[i] + alpha * dir.dx[i];
      double ft;
      bool ok = true;
      double theta_t = 0.0, phi_t = 0.0;
      try {
        auto t0 = clock_now();
        ft = funcs_.objective(xt);
        funcs_.constraint_values(xt, ct);
        timings_.function_eval += since(t0);
        theta_t = constraint_violation(ct);
        phi_t = barrier_objective(xt, ft);
        ok = std::isfinite(theta_t) && std::isfinite(phi_t);
      } catch (const Error&) {
        ok = false;
      }
      if (ok && theta_t <= theta_max_ && !filter_dominates(theta_t, phi_t)) {
        const bool switching =
            theta0 <= theta_min_ && dphi < 0.0 &&
            alpha * std::pow(-dphi, opts_.s_phi) >
                opts_.delta_switch * std::pow(theta0, opts_.s_theta);
        if (switching) {
          if (phi_t <= phi0 + opts_.eta_phi * alpha * dphi) return alpha;
        } else {
          if (theta_t <= (1.0 - opts_.gamma_theta) * theta0 ||
              phi_t <= phi0 - opts_.gamma_phi * theta0) {
            filter_.emplace_back((1.0 - opts_.gamma_theta) * theta0,
                                 phi0 - opts_.gamma_phi * theta0);
            return alpha;
          }
        }
      }
      alpha *= 0.5;
    }
    throw LineSearchFailure("line search failed: step below " +
                            std::to_string(opts_.alpha_min));
  }

  void apply_step(const SearchDirection& dir, double alpha) {
    for (int i = 0; i < n_; ++i) state_.x[i] += alpha * dir.dx[i];
    for (int i = 0; i < m_; ++i) state_.lambda[i] += alpha * dir.dlambda[i];
    for (int i = 0; i < n_; ++i) {
      state_.zl[i] += alpha * dir.dzl[i];
      state_.zu[i] += alpha * dir.dzu[i];
    }
    // dual safeguard: keep z within a large box around mu / slack
    const double ks = opts_.kappa_sigma;
    for (int i = 0; i < n_; ++i) {
      if (std::isfinite(lower_[i])) {
        const double sl = state_.x[i] - lower_[i];
        state_.zl[i] = std::min(std::max(state_.zl[i], state_.mu / (ks * sl)),
                                ks * state_.mu / sl);
      }
      if (std::isfinite(upper_[i])) {
        const double su = upper_[i] - state_.x[i];
        state_.zu[i] = std::min(std::max(state_.zu[i], state_.mu / (ks * su)),
                                ks * state_.mu / su);
      }
    }
    state_.k += 1;
    evals_fresh_ = false;
    assert_interior();
  }

  /// One outer iteration: barrier update when the subproblem is converged,
  /// direction, line search, state update. Returns true once the
  /// termination measure meets tol.
  bool step_once() {
    refresh();
    if (kkt_error(0.0) <= opts_.tol) return true;
    const double mu_floor = opts_.tol / 11.0;
    while (state_.mu > mu_floor &&
           kkt_error(state_.mu) <= opts_.kappa_eps * state_.mu) {
      state_.mu = update_barrier(state_.mu, opts_.tol, opts_.kappa_mu,
                                 opts_.theta_mu);
      reset_filter();
    }
    SearchDirection dir = compute_step();
    const double alpha = filter_line_search(dir);
    log_iteration(alpha);
    apply_step(dir, alpha);
    return false;
  }

  /// Assembled derivative data for the current iterate, without
  /// regularization (cross-backend checks and diagnostics).
  KktData make_kkt_data() {
    refresh();
    build_kkt_data();
    return data_;
  }

  SolveReport solve() {
    const auto t_start = clock_now();
    SolveReport report;
    report.schur_dimension = backend_->schur_dimension();
    log_header();
    try {
      for (int iter = 0; iter < opts_.max_iter; ++iter) {
        if (step_once()) {
          report.status = SolveStatus::Optimal;
          report.kkt_error = kkt_error(0.0);
          break;
        }
      }
      if (report.status != SolveStatus::Optimal) {
        refresh();
        report.kkt_error = kkt_error(0.0);
        if (report.kkt_error <= opts_.tol)
          report.status = SolveStatus::Optimal;
        else
          report.status = SolveStatus::MaxIter;
      }
    } catch (const LineSearchFailure& e) {
      report.status = SolveStatus::InfeasibleStep;
      report.message = e.what();
      report.kkt_error = kkt_error(0.0);
    } catch (const Error& e) {
      report.status = SolveStatus::Error;
      report.message = e.what();
    }
    refresh();
    report.objective = f_;
    report.iterations = state_.k;
    report.inertia_corrections = total_corrections_;
    timings_.total = since(t_start);
    report.timings = timings_;
    return report;
  }

  int total_inertia_corrections() const { return total_corrections_; }

 private:
  static std::chrono::steady_clock::time_point clock_now() {
    return std::chrono::steady_clock::now();
  }
  static double since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(clock_now() - t0).count();
  }

  void refresh() {
    if (evals_fresh_) return;
    grad_f_.assign(n_, 0.0);
    c_.assign(m_, 0.0);
    jac_vals_.assign(funcs_.jac_nnz(), 0.0);
    auto t0 = clock_now();
    f_ = funcs_.objective_gradient(state_.x, grad_f_);
    funcs_.constraints_and_jacobian(state_.x, c_, jac_vals_);
    timings_.derivative_eval += since(t0);
    jtlambda_.assign(n_, 0.0);
    const auto& jr = funcs_.jac_rows();
    const auto& jc = funcs_.jac_cols();
    for (std::size_t k = 0; k < jr.size(); ++k)
      jtlambda_[jc[k]] += jac_vals_[k] * state_.lambda[jr[k]];
    evals_fresh_ = true;
  }

  void build_kkt_data() {
    data_.flat = flat_;
    data_.sigma.assign(n_, 0.0);
    for (int i = 0; i < n_; ++i) {
      if (std::isfinite(lower_[i]))
        data_.sigma[i] += state_.zl[i] / (state_.x[i] - lower_[i]);
      if (std::isfinite(upper_[i]))
        data_.sigma[i] += state_.zu[i] / (upper_[i] - state_.x[i]);
    }
    data_.jac_vals = jac_vals_;
    auto t0 = clock_now();
    data_.hess_vals.assign(funcs_.hess_nnz(), 0.0);
    funcs_.hessian_values(state_.x, 1.0, state_.lambda, data_.hess_vals);
    timings_.derivative_eval += since(t0);
    data_.rhs_x.assign(n_, 0.0);
    for (int i = 0; i < n_; ++i) {
      double r = -(grad_f_[i] + jtlambda_[i]);
      if (std::isfinite(lower_[i]))
        r += state_.mu / (state_.x[i] - lower_[i]);
      if (std::isfinite(upper_[i]))
        r -= state_.mu / (upper_[i] - state_.x[i]);
      data_.rhs_x[i] = r;
    }
    data_.rhs_c.assign(m_, 0.0);
    for (int i = 0; i < m_; ++i) data_.rhs_c[i] = -c_[i];
  }

  void regularized_solve() {
    auto t0 = clock_now();
    BackendStep bs =
        regularized_step(*backend_, data_, n_, m_, opts_, state_.mu);
    total_corrections_ += bs.corrections;
    dx_ = std::move(bs.dx);
    dl_ = std::move(bs.dl);
    timings_.linear_solve += since(t0);
  }

  double constraint_violation(const std::vector<double>& c) const {
    double s = 0.0;
    for (double v : c) s += std::fabs(v);
    return s;
  }

  double barrier_objective(const std::vector<double>& x, double f) const {
    double phi = f;
    for (int i = 0; i < n_; ++i) {
      if (std::isfinite(lower_[i])) {
        const double sl = x[i] - lower_[i];
        if (sl <= 0.0) return std::numeric_limits<double>::infinity();
        phi -= state_.mu * std::log(sl);
      }
      if (std::isfinite(upper_[i])) {
        const double su = upper_[i] - x[i];
        if (su <= 0.0) return std::numeric_limits<double>::infinity();
        phi -= state_.mu * std::log(su);
      }
    }
    return phi;
  }

  bool filter_dominates(double theta, double phi) const {
    for (const auto& [ft, fp] : filter_)
      if (theta >= ft && phi >= fp) return true;
    return false;
  }

  void reset_filter() {
    refresh();
    const double theta0 = constraint_violation(c_);
    theta_max_ = 1e4 * std::max(1.0, theta0);
    theta_min_ = 1e-4 * std::max(1.0, theta0);
    filter_.clear();
    filter_.emplace_back(theta_max_, -std::numeric_limits<double>::infinity());
  }

  void assert_interior() const {
    for (int i = 0; i < n_; ++i) {
      const bool ok =
          (!std::isfinite(lower_[i]) || state_.x[i] > lower_[i]) &&
          (!std::isfinite(upper_[i]) || state_.x[i] < upper_[i]);
      if (!ok)
        throw Error("iterate left the interior at variable " +
                    std::to_string(i));
    }
  }

  void log_header() {
    if (!opts_.log) return;
    if (opts_.log_csv)
      *opts_.log << "iter,objective,cons_inf,mu,alpha,corrections\n";
    else
      *opts_.log << std::setw(4) << "iter" << std::setw(18) << "objective"
                 << std::setw(12) << "inf_pr" << std::setw(12) << "mu"
                 << std::setw(12) << "alpha" << std::setw(6) << "reg" << "\n";
  }

  void log_iteration(double alpha) {
    if (!opts_.log) return;
    double feas = 0.0;
    for (double v : c_) feas = std::max(feas, std::fabs(v));
    if (opts_.log_csv) {
      *opts_.log << state_.k << "," << std::setprecision(16) << f_ << ","
                 << feas << "," << state_.mu << "," << alpha << ","
                 << total_corrections_ << "\n";
    } else {
      *opts_.log << std::setw(4) << state_.k << std::setw(18)
                 << std::setprecision(9) << f_ << std::setw(12)
                 << std::setprecision(3) << feas << std::setw(12) << state_.mu
                 << std::setw(12) << alpha << std::setw(6)
                 << total_corrections_ << "\n";
    }
  }

  const FlatNLP* flat_;
  SolverOptions opts_;
  NlpFunctions funcs_;
  std::unique_ptr<KktBackend> backend_;
  int n_ = 0, m_ = 0;
  std::vector<double> lower_, upper_;
  IterationState state_;

  // iterate-stamped evaluations
  bool evals_fresh_ = false;
  double f_ = 0.0;
  std::vector<double> grad_f_, c_, jac_vals_, jtlambda_;

  KktData data_;
  std::vector<double> dx_, dl_;
  int total_corrections_ = 0;

  // filter state
  std::vector<std::pair<double, double>> filter_;
  double theta_max_ = 0.0, theta_min_ = 0.0;

  SolveTimings timings_;
};

/// Convenience wrapper: flatten-level solve with the configured backend.
inline SolveReport solve(const FlatNLP& flat, const SolverOptions& opts = {}) {
  IpmSolver solver(flat, opts);
  return solver.solve();
}

}  // namespace graphnlp

#endif  // GRAPHNLP_IPM_HPP
