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

#ifndef GRAPHNLP_MODELS_HPP
#define GRAPHNLP_MODELS_HPP

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "graphnlp/errors.hpp"
#include "graphnlp/optigraph.hpp"

namespace graphnlp {

// ---------------------------------------------------------------------------
// Stochastic PID controller tuning
// ---------------------------------------------------------------------------

/// Scenario-based controller tuning instance. One node per time point per
/// scenario; the products Kc*x, tauI*int, tauD*x are lifted into node-local
/// dummy variables so every linking constraint is affine.
struct PidConfig {
  int scenarios = 5;                       // NS
  int steps = 100;                         // N time points per scenario
  double horizon = 10.0;                   // Tf
  double gain = 1.0;                       // K
  double x_init = 0.0;                     // x0
  double disturbance_gain = 0.5;           // Kd
  double time_constant = 1.0;              // tau
  std::vector<double> disturbance = {-1.0, -1.0, -1.0, -1.0, -1.0};
  std::vector<double> setpoint = {-2.0, -1.5, -0.5, 0.5, 1.0};

  void validate() const {
    if (scenarios < 1) throw ConfigError("scenarios must be >= 1");
    if (steps < 2) throw ConfigError("steps must be >= 2");
    if (static_cast<int>(disturbance.size()) != scenarios ||
        static_cast<int>(setpoint.size()) != scenarios)
      throw ConfigError(
          "disturbance and setpoint vectors must have one entry per scenario");
  }
};

namespace pid_var {
inline constexpr int x = 0;
inline constexpr int u = 1;
inline constexpr int integ = 2;
inline constexpr int kc = 3;
inline constexpr int taui = 4;
inline constexpr int taud = 5;
inline constexpr int kcx = 6;
inline constexpr int tauiint = 7;
inline constexpr int taudx = 8;
}  // namespace pid_var

inline OptiGraph build_pid(const PidConfig& cfg = {}) {
  cfg.validate();
  const double h = cfg.horizon / cfg.steps;
  OptiGraph g;

  OptiNode& master = g.add_node("master");
  master.add_variable("Kc", -10.0, 10.0, 0.0);
  master.add_variable("tauI", -100.0, 100.0, 0.0);
  master.add_variable("tauD", -100.0, 100.0, 0.0);

  for (int s = 0; s < cfg.scenarios; ++s) {
    OptiGraph& sub = g.add_subgraph();
    const double xsp = cfg.setpoint[s];
    const double dist = cfg.disturbance[s];
    std::vector<OptiNode*> nodes;
    for (int t = 0; t < cfg.steps; ++t) {
      OptiNode& nd =
          sub.add_node("s" + std::to_string(s) + "t" + std::to_string(t));
      nd.add_variable("x", -2.5, 2.5, cfg.x_init);
      nd.add_variable("u", -2.0, 2.0, 0.0);
      nd.add_variable("int");
      nd.add_variable("Kc");
      nd.add_variable("tauI");
      nd.add_variable("tauD");
      nd.add_variable("Kcx");
      nd.add_variable("tauIint");
      nd.add_variable("tauDx");
      nd.add_equality(nd.var(pid_var::kcx), nd.var(pid_var::kc) * nd.var(pid_var::x));
      nd.add_equality(nd.var(pid_var::tauiint),
                      nd.var(pid_var::taui) * nd.var(pid_var::integ));
      nd.add_equality(nd.var(pid_var::taudx),
                      nd.var(pid_var::taud) * nd.var(pid_var::x));
      nd.set_objective((1.0 / cfg.scenarios) *
                       (100.0 * Expr::pow(xsp - nd.var(pid_var::x), 2) +
                        0.01 * Expr::pow(nd.var(pid_var::u), 2)));
      nodes.push_back(&nd);
    }
    nodes[0]->add_constraint(nodes[0]->var(pid_var::integ));
    nodes[0]->add_constraint(nodes[0]->var(pid_var::x) - cfg.x_init);

    for (int t = 0; t + 1 < cfg.steps; ++t) {
      OptiNode& a = *nodes[t];
      OptiNode& b = *nodes[t + 1];
      // first-order process dynamics, implicit in the next state
      sub.link_constraint(
          (1.0 / cfg.time_constant) * (b.var(pid_var::x) - a.var(pid_var::x)) /
              h +
          b.var(pid_var::x) - cfg.gain * b.var(pid_var::u) -
          cfg.disturbance_gain * dist);
      // lifted controller law
      sub.link_constraint(b.var(pid_var::u) -
                          (a.var(pid_var::kc) * xsp - a.var(pid_var::kcx) +
                           b.var(pid_var::tauiint) + b.var(pid_var::taudx) / h -
                           a.var(pid_var::taudx) / h));
      // rectangle-rule integral of the tracking error
      sub.link_constraint((b.var(pid_var::integ) - a.var(pid_var::integ)) / h -
                          (xsp - b.var(pid_var::x)));
      // tuning parameters are shared along the horizon
      sub.link_constraint(a.var(pid_var::kc) - b.var(pid_var::kc));
      sub.link_constraint(a.var(pid_var::taui) - b.var(pid_var::taui));
      sub.link_constraint(a.var(pid_var::taud) - b.var(pid_var::taud));
    }
    g.link_constraint(nodes[0]->var(pid_var::kc) - master.var(0));
    g.link_constraint(nodes[0]->var(pid_var::taui) - master.var(1));
    g.link_constraint(nodes[0]->var(pid_var::taud) - master.var(2));
  }
  return g;
}

/// Contiguous time-window partition: the master joins the first part and
/// every scenario contributes steps/parts consecutive time points per part.
inline Partition pid_time_partition(const OptiGraph& g, int parts = 4) {
  const auto& subs = g.subgraphs();
  if (subs.empty()) throw ConfigError("graph has no scenario subgraphs");
  const int ns = static_cast<int>(subs.size());
  const int n = static_cast<int>(subs[0]->nodes().size());
  for (const auto& s : subs)
    if (static_cast<int>(s->nodes().size()) != n)
      throw ConfigError("scenario subgraphs are unbalanced");
  if (parts < 1 || parts > n) throw InvalidPartCount("bad part count");
  Partition p;
  p.num_parts = parts;
  p.membership.assign(1 + static_cast<std::size_t>(ns) * n, 0);
  std::size_t idx = 0;
  p.membership[idx++] = 0;  // master
  for (int s = 0; s < ns; ++s)
    for (int t = 0; t < n; ++t)
      p.membership[idx++] = std::min(parts - 1, t * parts / n);
  return p;
}

// ---------------------------------------------------------------------------
// Stochastic natural gas network
// ---------------------------------------------------------------------------

/// Two-stage stochastic gas network. The chain alternates compressors and
/// pipelines between junctions; junction 0 supplies gas and the final
/// junction delivers against a scenario demand profile. All physical
/// constants live here so an instance is fully reproducible from its config.
struct GasConfig {
  int n_compressors = 11;
  int n_pipelines = 13;
  int n_junctions = 25;
  int time_points = 24;  // Nt
  int space_points = 10; // Nx per pipeline
  int scenarios = 2;     // S

  // demand profile: base load with one elevated window per scenario
  double demand_base = 50.0;
  double demand_step = 10.0;
  int step_start = 8;
  int step_end = 16;  // window [step_start, step_end)
  unsigned seed = 20240;

  // gas and pipe physics
  double c1 = 0.5;
  double c2 = 1.0;
  double c3 = 0.012;
  double dt = 1.0;
  double pipe_length = 10.0;  // dx = pipe_length / (space_points - 1)
  double heat_capacity = 0.1;     // cP
  double temperature = 100.0;     // T
  double isentropic_gamma = 1.4;  // gamma

  // bounds
  double pressure_min = 30.0;
  double pressure_max = 100.0;
  double boost_min = 0.0;
  double boost_max = 40.0;
  double supply_max = 125.0;  // phi_supply
  double power_max = 1000.0;  // psi_power
  double flow_max = 150.0;

  // objective weights: compression cost, delivery revenue, oversupply penalty
  double alpha = 0.1;
  double beta = 1.0;
  double kappa = 1.0;

  void validate() const {
    if (n_compressors < 1 || n_pipelines < 1)
      throw ConfigError("need at least one compressor and one pipeline");
    if (n_junctions != n_compressors + n_pipelines + 1)
      throw TopologyError("chain topology requires junctions = compressors + "
                          "pipelines + 1");
    if (time_points < 2 || space_points < 2)
      throw ConfigError("time_points and space_points must be >= 2");
    if (scenarios < 1) throw ConfigError("scenarios must be >= 1");
    if (!(pressure_min <= pressure_max) || !(boost_min <= boost_max))
      throw ConfigError("bounds must satisfy lower <= upper");
    if (!(alpha > 0 && beta > 0 && kappa > 0))
      throw ConfigError("objective weights must be positive");
    if (step_start < 0 || step_end > time_points || step_start > step_end)
      throw ConfigError("demand step window out of range");
  }

  double dx() const { return pipe_length / (space_points - 1); }
};

/// Piecewise-constant demand: base level with one up-step window whose
/// placement and magnitude are jittered deterministically per scenario.
inline std::vector<double> demand_profile(int scenario, int time_points,
                                          double base, double step_mag,
                                          int step_start, int step_end,
                                          unsigned seed = 20240) {
  std::mt19937 rng(seed ^ (0x9e3779b9u * static_cast<unsigned>(scenario + 1)));
  const int max_left = step_start;
  const int max_right = time_points - step_end;
  std::uniform_int_distribution<int> shift_dist(-std::min(2, max_left),
                                                std::min(2, max_right));
  std::uniform_real_distribution<double> scale_dist(0.75, 1.25);
  const int shift = shift_dist(rng);
  const double scale = scale_dist(rng);
  std::vector<double> d(time_points, base);
  for (int t = step_start + shift; t < step_end + shift; ++t)
    d[t] += scale * step_mag;
  return d;
}

namespace gas_detail {

enum class DeviceKind { Compressor, Pipeline };

/// Chain layout: alternate compressor/pipeline while both remain, then
/// append the leftovers. Device i sits between junctions i and i+1.
inline std::vector<DeviceKind> device_chain(const GasConfig& cfg) {
  std::vector<DeviceKind> chain;
  int c = cfg.n_compressors, p = cfg.n_pipelines;
  bool next_compressor = true;
  while (c > 0 || p > 0) {
    if ((next_compressor && c > 0) || p == 0) {
      chain.push_back(DeviceKind::Compressor);
      --c;
    } else {
      chain.push_back(DeviceKind::Pipeline);
      --p;
    }
    next_compressor = !next_compressor;
  }
  return chain;
}

struct CompressorNodes {
  std::vector<OptiNode*> t;  // one node per time point
};
struct PipelineNodes {
  std::vector<std::vector<OptiNode*>> tk;  // [time][space]
};
struct JunctionNodes {
  std::vector<OptiNode*> t;
};

namespace cvar {
inline constexpr int p_in = 0;
inline constexpr int p_out = 1;
inline constexpr int boost = 2;
inline constexpr int power = 3;
inline constexpr int f = 4;
inline constexpr int f_in = 5;
inline constexpr int f_out = 6;
}  // namespace cvar

// pipeline node layouts (space_points >= 2 so the first node always has a
// friction variable and is distinct from the last)
namespace pvar {
inline constexpr int p = 0;
inline constexpr int f = 1;
inline constexpr int phi = 2;       // interior and first nodes only
inline constexpr int first_p_in = 3;
inline constexpr int first_f_in = 4;
inline constexpr int first_linepack = 5;
inline constexpr int last_p_out = 2;
inline constexpr int last_f_out = 3;
}  // namespace pvar

}  // namespace gas_detail

inline OptiGraph build_gas(const GasConfig& cfg = {}) {
  using namespace gas_detail;
  cfg.validate();
  const auto chain = device_chain(cfg);
  const int nt = cfg.time_points;
  const int nx = cfg.space_points;
  const double dx = cfg.dx();
  const double kexp = (cfg.isentropic_gamma - 1.0) / cfg.isentropic_gamma;
  const double p0 = 0.5 * (cfg.pressure_min + cfg.pressure_max);
  const double boost0 =
      std::min(0.5 * (cfg.boost_min + cfg.boost_max), 5.0);
  const double f0 = cfg.demand_base;
  const double power0 =
      cfg.heat_capacity * cfg.temperature * f0 *
      (std::pow((p0 + boost0) / p0, kexp) - 1.0);

  OptiGraph g;
  OptiNode& master = g.add_node("master");
  for (int c = 0, dev = 0; dev < static_cast<int>(chain.size()); ++dev) {
    if (chain[dev] != DeviceKind::Compressor) continue;
    for (int t = 0; t < nt; ++t)
      master.add_variable("Pbar_c" + std::to_string(c) + "_t" +
                              std::to_string(t),
                          0.0, cfg.power_max, power0);
    ++c;
  }

  for (int s = 0; s < cfg.scenarios; ++s) {
    const auto demand =
        demand_profile(s, nt, cfg.demand_base, cfg.demand_step, cfg.step_start,
                       cfg.step_end, cfg.seed);
    OptiGraph& scen = g.add_subgraph();
    const std::string ss = "s" + std::to_string(s);

    // junction time chains
    std::vector<JunctionNodes> junctions(cfg.n_junctions);
    for (int j = 0; j < cfg.n_junctions; ++j) {
      OptiGraph& jg = scen.add_subgraph();
      for (int t = 0; t < nt; ++t) {
        OptiNode& nd = jg.add_node(ss + "_j" + std::to_string(j) + "_t" +
                                   std::to_string(t));
        nd.add_variable("theta", cfg.pressure_min, cfg.pressure_max, p0);
        if (j == 0) {
          nd.add_variable("Fbar", 0.0, cfg.supply_max, f0);
        } else if (j == cfg.n_junctions - 1) {
          nd.add_variable("F", 0.0, kInf, demand[t]);
          nd.add_variable("Ftilde", 0.0, kInf, 0.0);
          // delivered flow may exceed demand only through the priced slack
          nd.add_inequality(nd.var(1) - nd.var(2), -kInf, demand[t]);
          nd.set_objective(cfg.kappa * nd.var(2) - cfg.beta * nd.var(1));
        }
        junctions[j].t.push_back(&nd);
      }
    }

    // devices
    std::vector<CompressorNodes> compressors;
    std::vector<PipelineNodes> pipelines;
    std::vector<int> device_index(chain.size());  // index within its kind
    for (int dev = 0; dev < static_cast<int>(chain.size()); ++dev) {
      if (chain[dev] == DeviceKind::Compressor) {
        device_index[dev] = static_cast<int>(compressors.size());
        CompressorNodes cn;
        OptiGraph& cg = scen.add_subgraph();
        const int ci = device_index[dev];
        for (int t = 0; t < nt; ++t) {
          OptiNode& nd = cg.add_node(ss + "_c" + std::to_string(ci) + "_t" +
                                     std::to_string(t));
          nd.add_variable("p_in", cfg.pressure_min, cfg.pressure_max, p0);
          nd.add_variable("p_out", cfg.pressure_min, cfg.pressure_max,
                          p0 + boost0);
          nd.add_variable("boost", cfg.boost_min, cfg.boost_max, boost0);
          nd.add_variable("power", 0.0, cfg.power_max, power0);
          nd.add_variable("f", 0.0, cfg.flow_max, f0);
          nd.add_variable("f_in", 0.0, cfg.flow_max, f0);
          nd.add_variable("f_out", 0.0, cfg.flow_max, f0);
          // isentropic compression power
          nd.add_equality(
              nd.var(cvar::power),
              cfg.heat_capacity * cfg.temperature * nd.var(cvar::f) *
                  (Expr::pow(nd.var(cvar::p_out) / nd.var(cvar::p_in), kexp) -
                   1.0));
          nd.add_equality(nd.var(cvar::p_out),
                          nd.var(cvar::p_in) + nd.var(cvar::boost));
          nd.add_equality(nd.var(cvar::f_in), nd.var(cvar::f));
          nd.add_equality(nd.var(cvar::f_out), nd.var(cvar::f));
          nd.set_objective(cfg.alpha * nd.var(cvar::power));
          cn.t.push_back(&nd);
        }
        compressors.push_back(std::move(cn));
      } else {
        device_index[dev] = static_cast<int>(pipelines.size());
        PipelineNodes pn;
        pn.tk.assign(nt, {});
        OptiGraph& pg = scen.add_subgraph();
        const int pi = device_index[dev];
        for (int t = 0; t < nt; ++t) {
          for (int k = 0; k < nx; ++k) {
            OptiNode& nd = pg.add_node(ss + "_p" + std::to_string(pi) + "_t" +
                                       std::to_string(t) + "_k" +
                                       std::to_string(k));
            nd.add_variable("p", cfg.pressure_min, cfg.pressure_max, p0);
            nd.add_variable("f", -cfg.flow_max, cfg.flow_max, f0);
            if (k + 1 < nx) {
              // lifted friction term: phi * p == c3 * f * |f|
              const double phi0 = cfg.c3 * f0 * f0 / p0;
              nd.add_variable("phi", -kInf, kInf, phi0);
              nd.add_equality(nd.var(pvar::phi) * nd.var(pvar::p),
                              cfg.c3 * nd.var(pvar::f) *
                                  Expr::smooth_abs(nd.var(pvar::f)));
            }
            if (k == 0) {
              const int base = nd.num_variables();
              nd.add_variable("p_in", cfg.pressure_min, cfg.pressure_max, p0);
              nd.add_variable("f_in", -cfg.flow_max, cfg.flow_max, f0);
              nd.add_variable("linepack", 0.0, kInf,
                              (nx - 1) * dx * p0 / cfg.c1);
              nd.add_equality(nd.var(0), nd.var(base));
              nd.add_equality(nd.var(1), nd.var(base + 1));
            }
            if (k == nx - 1) {
              const int base = nd.num_variables();
              nd.add_variable("p_out", cfg.pressure_min, cfg.pressure_max, p0);
              nd.add_variable("f_out", -cfg.flow_max, cfg.flow_max, f0);
              nd.add_equality(nd.var(0), nd.var(base));
              nd.add_equality(nd.var(1), nd.var(base + 1));
            }
            pn.tk[t].push_back(&nd);
          }
        }
        auto p_at = [&](int t, int k) { return pn.tk[t][k]->var(pvar::p); };
        auto f_at = [&](int t, int k) { return pn.tk[t][k]->var(pvar::f); };
        auto phi_at = [&](int t, int k) {
          return pn.tk[t][k]->var(pvar::phi);
        };
        // transient mass and momentum balances
        for (int t = 1; t < nt; ++t)
          for (int k = 0; k + 1 < nx; ++k) {
            pg.link_constraint((p_at(t, k) - p_at(t - 1, k)) / cfg.dt +
                               cfg.c1 * (f_at(t, k + 1) - f_at(t, k)) / dx);
            pg.link_constraint((f_at(t, k) - f_at(t - 1, k)) / cfg.dt +
                               cfg.c2 * (p_at(t, k + 1) - p_at(t, k)) / dx +
                               phi_at(t, k));
          }
        // steady-state start
        for (int k = 0; k + 1 < nx; ++k) {
          pg.link_constraint((f_at(0, k + 1) - f_at(0, k)) / dx);
          pg.link_constraint(cfg.c2 * (p_at(0, k + 1) - p_at(0, k)) / dx +
                             phi_at(0, k));
        }
        // linepack definition and end-of-horizon refill
        for (int t = 0; t < nt; ++t) {
          std::vector<Expr> terms;
          for (int k = 0; k + 1 < nx; ++k)
            terms.push_back(p_at(t, k) * (dx / cfg.c1));
          pg.link_constraint(pn.tk[t][0]->var(pvar::first_linepack) -
                             Expr::sum(terms));
        }
        pg.link_constraint(pn.tk[nt - 1][0]->var(pvar::first_linepack) -
                               pn.tk[0][0]->var(pvar::first_linepack),
                           ConstraintKind::Inequality, 0.0, kInf);
        pipelines.push_back(std::move(pn));
      }
    }

    // junction-device coupling
    auto dev_f_in = [&](int dev, int t) -> Expr {
      if (chain[dev] == DeviceKind::Compressor)
        return compressors[device_index[dev]].t[t]->var(cvar::f_in);
      return pipelines[device_index[dev]].tk[t][0]->var(pvar::first_f_in);
    };
    auto dev_f_out = [&](int dev, int t) -> Expr {
      if (chain[dev] == DeviceKind::Compressor)
        return compressors[device_index[dev]].t[t]->var(cvar::f_out);
      return pipelines[device_index[dev]].tk[t][nx - 1]->var(pvar::last_f_out);
    };
    auto dev_p_in = [&](int dev, int t) -> Expr {
      if (chain[dev] == DeviceKind::Compressor)
        return compressors[device_index[dev]].t[t]->var(cvar::p_in);
      return pipelines[device_index[dev]].tk[t][0]->var(pvar::first_p_in);
    };
    auto dev_p_out = [&](int dev, int t) -> Expr {
      if (chain[dev] == DeviceKind::Compressor)
        return compressors[device_index[dev]].t[t]->var(cvar::p_out);
      return pipelines[device_index[dev]].tk[t][nx - 1]->var(pvar::last_p_out);
    };
    const int last = static_cast<int>(chain.size()) - 1;
    for (int t = 0; t < nt; ++t) {
      // supply at junction 0, delivery at the last junction
      scen.link_constraint(junctions[0].t[t]->var(1) - dev_f_in(0, t));
      scen.link_constraint(dev_f_out(last, t) -
                           junctions[cfg.n_junctions - 1].t[t]->var(1));
      // interior conservation
      for (int j = 1; j + 1 < cfg.n_junctions; ++j)
        scen.link_constraint(dev_f_out(j - 1, t) - dev_f_in(j, t));
      // pressure consistency with both end junctions of each device
      for (int dev = 0; dev < static_cast<int>(chain.size()); ++dev) {
        scen.link_constraint(dev_p_in(dev, t) - junctions[dev].t[t]->var(0));
        scen.link_constraint(dev_p_out(dev, t) -
                             junctions[dev + 1].t[t]->var(0));
      }
    }
    // first-stage coupling: equal compressor power across scenarios
    for (int c = 0; c < cfg.n_compressors; ++c)
      for (int t = 0; t < nt; ++t)
        g.link_constraint(master.var(c * nt + t) -
                          compressors[c].t[t]->var(cvar::power));
  }
  return g;
}

/// Root-level node named "master", or -1 when absent.
inline std::int64_t find_master(const OptiGraph& g) {
  for (const auto& n : g.nodes())
    if (n->name() == "master") return n->id();
  return -1;
}

}  // namespace graphnlp

#endif  // GRAPHNLP_MODELS_HPP
