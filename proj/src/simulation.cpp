#include "dcvoc/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <thread>

namespace dcvoc {

namespace {

constexpr double kDivergenceCap = 1e3;    // pu; unstable runs stay classifiable
constexpr double kSettleBand = 1e-3;      // pu
constexpr double kSettleWindow = 0.5;     // s
constexpr double kEquilibriumTol = 1e-2;  // pu

struct ActiveRefs {
  double p_ref{0.0};
  double q_ref{0.0};
  bool in_lvrt{false};
};

DcvocParams active_dcvoc_params(const Scenario& scenario, const ActiveRefs& refs) {
  DcvocParams p = scenario.controller.dcvoc;
  p.p_ref = refs.p_ref;
  p.q_ref = refs.q_ref;
  if (refs.in_lvrt && scenario.track_iref_to_refs) {
    p.i_ref = std::hypot(refs.p_ref, refs.q_ref);
  }
  return p;
}

Vec2 dcvoc_current(const StateVec& x) { return Vec2(x[0], x[1]); }

/// Resolves the GFL algebraic loop u = ug + Z e^{J phi_g} i_cmd(u) by fixed
/// point iteration (the loop gain Zg*kpp*|di/du| is well below 1 at sane
/// parameters).
PllGflRates gfl_algebraic(const PllGflState& state, const Scenario& scenario,
                          double ug, const Impedance& z, Vec2& u_out) {
  const PllGflParams& params = scenario.controller.gfl;
  Vec2 u(ug, 0.0);
  PllGflRates rates;
  for (int k = 0; k < 30; ++k) {
    rates = pll_gfl_rhs(state, u, params, scenario.grid.omega_g);
    const Vec2 u_next = terminal_voltage(rates.i_command, scenario.grid, ug, z);
    if ((u_next - u).norm() < 1e-14) {
      u = u_next;
      break;
    }
    u = u_next;
  }
  rates = pll_gfl_rhs(state, u, params, scenario.grid.omega_g);
  u_out = u;
  return rates;
}

Vec2 forming_current(const Vec2& u, double ug, const Impedance& z) {
  // i = (Zg e^{J phi_g})^{-1} (u - [ug 0])
  return (1.0 / z.zg) * (Rot2(-z.phi_g) * (u - Vec2(ug, 0.0)));
}

StateVec controller_deriv(const StateVec& x, const Scenario& scenario, double ug,
                          const Impedance& z, const ActiveRefs& refs) {
  StateVec dx = StateVec::Zero();
  switch (scenario.controller.kind) {
    case ControllerKind::dcvoc: {
      const DcvocParams params = active_dcvoc_params(scenario, refs);
      DcvocState s{dcvoc_current(x), x[2]};
      const Vec2 u = terminal_voltage(s.i, scenario.grid, ug, z);
      DcvocRates rates = dcvoc_rhs(s, u, params);
      if (scenario.saturation_enabled) {
        rates = saturate(s, rates, scenario.controller.dcvoc.i_max);
      }
      const double du_meas =
          scenario.lvrt ? (u.norm() - x[3]) / scenario.lvrt->t_filter : 0.0;
      dx << rates.di.x(), rates.di.y(), rates.domega_delta, du_meas;
      break;
    }
    case ControllerKind::gfl: {
      PllGflState s{x[0], x[1], x[2]};
      Vec2 u;
      const PllGflRates rates = gfl_algebraic(s, scenario, ug, z, u);
      dx << rates.dtheta, rates.dxi_pll, rates.dxi_p, 0.0;
      break;
    }
    case ControllerKind::dvoc: {
      DvocState s{Vec2(x[0], x[1])};
      const Vec2 i = forming_current(s.u, ug, z);
      const Vec2 du = dvoc_rhs(s, i, scenario.controller.dvoc);
      dx << du.x(), du.y(), 0.0, 0.0;
      break;
    }
    case ControllerKind::droop: {
      DroopGfmState s{x[0], x[1]};
      const Vec2 u_vec = s.u * Vec2(std::cos(s.theta_u), std::sin(s.theta_u));
      const Vec2 i = forming_current(u_vec, ug, z);
      const DroopGfmRates rates =
          droop_gfm_rhs(s, i, scenario.controller.droop, scenario.grid.omega_g);
      dx << rates.dtheta_u, rates.du, 0.0, 0.0;
      break;
    }
  }
  return dx;
}

struct NewtonProblem {
  virtual ~NewtonProblem() = default;
  virtual Vec2 residual(const Vec2& v) const = 0;
};

Vec2 newton2(const NewtonProblem& problem, Vec2 v, double tol = 1e-13,
             int max_iter = 100) {
  for (int iter = 0; iter < max_iter; ++iter) {
    const Vec2 r = problem.residual(v);
    if (r.norm() < tol) return v;
    const double h = 1e-7;
    Mat2 jac;
    jac.col(0) = (problem.residual(v + Vec2(h, 0)) - r) / h;
    jac.col(1) = (problem.residual(v + Vec2(0, h)) - r) / h;
    v -= jac.partialPivLu().solve(r);
  }
  if (problem.residual(v).norm() > 1e-9) {
    throw NoEquilibriumError("newton2: steady-state solve did not converge");
  }
  return v;
}

}  // namespace

const char* to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::dcvoc: return "dcvoc";
    case ControllerKind::gfl: return "gfl";
    case ControllerKind::dvoc: return "dvoc";
    case ControllerKind::droop: return "droop";
  }
  return "?";
}

const char* to_string(Classification c) {
  switch (c) {
    case Classification::converged: return "converged";
    case Classification::oscillatory: return "oscillatory";
    case Classification::diverged: return "diverged";
    case Classification::floor_violation: return "floor_violation";
  }
  return "?";
}

void Scenario::validate() const {
  if (!(dt > 0.0 && dt <= 1e-3)) throw std::invalid_argument("scenario: need 0 < dt <= 1e-3");
  if (t_end <= 0.0) throw std::invalid_argument("scenario: t_end must be > 0");
  if (capture_stride < 1) throw std::invalid_argument("scenario: capture_stride >= 1");
  grid.validate();
  if (lvrt) lvrt->validate();
  switch (controller.kind) {
    case ControllerKind::dcvoc: controller.dcvoc.validate(); break;
    case ControllerKind::gfl: controller.gfl.validate(); break;
    case ControllerKind::dvoc: controller.dvoc.validate(); break;
    case ControllerKind::droop: controller.droop.validate(); break;
  }
  if ((controller.kind == ControllerKind::dvoc ||
       controller.kind == ControllerKind::droop) &&
      impedance_of(grid).zg <= 0.0) {
    throw std::invalid_argument("scenario: forming controllers need Zg > 0");
  }
}

GridModel Scenario::snapped_grid() const {
  GridModel snapped = grid;
  for (auto& e : snapped.events) {
    e.t_start = std::floor(e.t_start / dt + 1e-9) * dt;
    e.t_end = std::floor(e.t_end / dt + 1e-9) * dt;
  }
  return snapped;
}

StateVec initial_state_from_equilibrium(const Scenario& scenario) {
  const double ug = scenario.grid.ug_nominal;
  const Impedance z = impedance_of(scenario.grid);
  StateVec x = StateVec::Zero();
  switch (scenario.controller.kind) {
    case ControllerKind::dcvoc: {
      const EquilibriumResult eq =
          solve_equilibrium(scenario.controller.dcvoc, scenario.grid, ug);
      x << eq.i_s.x(), eq.i_s.y(), 0.0, eq.u_s.norm();
      break;
    }
    case ControllerKind::gfl: {
      const PllGflParams& p = scenario.controller.gfl;
      struct Problem : NewtonProblem {
        const Scenario* scenario;
        const Impedance* z;
        double ug;
        Vec2 residual(const Vec2& v) const override {
          const double theta = v.x(), i_mag = v.y();
          const Vec2 i = i_mag * Vec2(std::cos(theta), std::sin(theta));
          const Vec2 u = terminal_voltage(i, scenario->grid, ug, *z);
          const double u_q = -u.x() * std::sin(theta) + u.y() * std::cos(theta);
          const PowerPair pq = apparent_power(u, i);
          return Vec2(u_q, pq.p - scenario->controller.gfl.p_ref);
        }
      } problem;
      problem.scenario = &scenario;
      problem.z = &z;
      problem.ug = ug;
      const double xi_pll =
          (scenario.grid.omega_g - p.omega0) / (p.omega_base * p.kplli);
      try {
        const Vec2 sol = newton2(problem, Vec2(0.0, p.p_ref / ug));
        x << sol.x(), xi_pll, sol.y() / p.kpi, 0.0;
      } catch (const NoEquilibriumError&) {
        // p_ref is infeasible at unity power factor (weak grid): the model's
        // steady state is the current clamp with a locked PLL and the power
        // integrator frozen by the anti-windup rule.
        const double sin_lock = p.i_max * scenario.grid.lg / ug;
        const double theta = sin_lock < 1.0 ? std::asin(sin_lock) : 0.0;
        const double u_d = ug * std::cos(theta) + p.i_max * scenario.grid.rg;
        const double xi_p =
            (1.05 * p.i_max * (1.0 + p.kpp * u_d) - p.kpp * p.p_ref) / p.kpi;
        x << theta, xi_pll, xi_p, 0.0;
      }
      break;
    }
    case ControllerKind::dvoc: {
      struct Problem : NewtonProblem {
        const Scenario* scenario;
        const Impedance* z;
        double ug;
        Vec2 residual(const Vec2& u) const override {
          const Vec2 i = forming_current(u, ug, *z);
          return dvoc_rhs({u}, i, scenario->controller.dvoc) /
                 scenario->controller.dvoc.omega_base;
        }
      } problem;
      problem.scenario = &scenario;
      problem.z = &z;
      problem.ug = ug;
      const Vec2 sol = newton2(problem, Vec2(scenario.controller.dvoc.u_ref, 0.1));
      x << sol.x(), sol.y(), 0.0, 0.0;
      break;
    }
    case ControllerKind::droop: {
      struct Problem : NewtonProblem {
        const Scenario* scenario;
        const Impedance* z;
        double ug;
        Vec2 residual(const Vec2& v) const override {
          const DroopGfmState s{v.x(), v.y()};
          const Vec2 u_vec = s.u * Vec2(std::cos(s.theta_u), std::sin(s.theta_u));
          const Vec2 i = forming_current(u_vec, ug, *z);
          const DroopGfmRates r = droop_gfm_rhs(s, i, scenario->controller.droop,
                                                scenario->grid.omega_g);
          return Vec2(r.dtheta_u, r.du) / scenario->controller.droop.omega_base;
        }
      } problem;
      problem.scenario = &scenario;
      problem.z = &z;
      problem.ug = ug;
      const Vec2 sol = newton2(problem, Vec2(0.1, scenario.controller.droop.u_ref));
      x << sol.x(), sol.y(), 0.0, 0.0;
      break;
    }
  }
  return x;
}

StateVec step(const StateVec& state, double t, const Scenario& scenario,
              const GridModel& snapped, bool& in_lvrt) {
  const double ug = ug_at(snapped, t);
  const Impedance z = impedance_of(snapped);

  ActiveRefs refs{scenario.controller.dcvoc.p_ref, scenario.controller.dcvoc.q_ref,
                  false};
  if (scenario.lvrt && scenario.controller.kind == ControllerKind::dcvoc) {
    const LvrtRefs lr =
        lvrt_refs(std::max(state[3], 0.0), *scenario.lvrt,
                  scenario.controller.dcvoc.p_ref,
                  scenario.controller.dcvoc.q_ref, in_lvrt);
    refs = {lr.p_ref, lr.q_ref, lr.in_lvrt};
    in_lvrt = lr.in_lvrt;
  }

  const double dt = scenario.dt;
  const StateVec k1 = controller_deriv(state, scenario, ug, z, refs);
  const StateVec k2 = controller_deriv(state + 0.5 * dt * k1, scenario, ug, z, refs);
  const StateVec k3 = controller_deriv(state + 0.5 * dt * k2, scenario, ug, z, refs);
  const StateVec k4 = controller_deriv(state + dt * k3, scenario, ug, z, refs);
  StateVec next = state + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (scenario.controller.kind == ControllerKind::dcvoc &&
      scenario.saturation_enabled) {
    // Discrete counterpart of the projection: a stage can carry the update
    // slightly past the limit circle, so the step lands back on it.
    const double i_max = scenario.controller.dcvoc.i_max;
    const double i_mag = Vec2(next[0], next[1]).norm();
    if (i_mag > i_max) {
      next[0] *= i_max / i_mag;
      next[1] *= i_max / i_mag;
    }
  }
  if (scenario.controller.kind == ControllerKind::gfl ||
      scenario.controller.kind == ControllerKind::droop) {
    // The leading state is an angle; keep it wrapped so a pole-slipping run
    // stays integrable instead of tripping the divergence cap.
    next[0] = std::remainder(next[0], 2.0 * M_PI);
  }
  return next;
}

namespace {

Sample capture_sample(const StateVec& x, double t, const Scenario& scenario,
                      const GridModel& snapped, bool in_lvrt, bool saturated) {
  const double ug = ug_at(snapped, t);
  const Impedance z = impedance_of(snapped);
  Sample s;
  s.t = t;
  s.in_lvrt = in_lvrt;
  s.saturated = saturated;
  s.p_ref_active = scenario.controller.dcvoc.p_ref;
  s.q_ref_active = scenario.controller.dcvoc.q_ref;
  switch (scenario.controller.kind) {
    case ControllerKind::dcvoc: {
      ActiveRefs refs{scenario.controller.dcvoc.p_ref,
                      scenario.controller.dcvoc.q_ref, in_lvrt};
      s.i = dcvoc_current(x);
      s.u = terminal_voltage(s.i, snapped, ug, z);
      if (scenario.lvrt && in_lvrt) {
        const LvrtRefs lr =
            lvrt_refs(std::max(x[3], 0.0), *scenario.lvrt,
                      scenario.controller.dcvoc.p_ref,
                      scenario.controller.dcvoc.q_ref, in_lvrt);
        refs = {lr.p_ref, lr.q_ref, lr.in_lvrt};
      }
      s.p_ref_active = refs.p_ref;
      s.q_ref_active = refs.q_ref;
      s.omega = x[2];
      break;
    }
    case ControllerKind::gfl: {
      PllGflState gs{x[0], x[1], x[2]};
      Vec2 u;
      const PllGflRates rates = gfl_algebraic(gs, scenario, ug, z, u);
      s.i = rates.i_command;
      s.u = u;
      const PllGflParams& p = scenario.controller.gfl;
      s.omega = (rates.dtheta - (p.omega0 - snapped.omega_g)) / p.omega_base;
      s.p_ref_active = p.p_ref;
      s.q_ref_active = 0.0;
      s.saturated = rates.clamped;
      break;
    }
    case ControllerKind::dvoc: {
      s.u = Vec2(x[0], x[1]);
      s.i = forming_current(s.u, ug, z);
      const DvocParams& p = scenario.controller.dvoc;
      const PowerPair pq = apparent_power(s.u, s.i);
      const PowerPair meas =
          rotated_power(pq.p, pq.q, p.phi, std::max(s.u.squaredNorm(), 1e-12));
      const PowerPair ref = rotated_power(p.p_ref, p.q_ref, p.phi, p.u_ref * p.u_ref);
      s.omega = p.kp * (ref.p - meas.p);
      s.p_ref_active = p.p_ref;
      s.q_ref_active = p.q_ref;
      break;
    }
    case ControllerKind::droop: {
      const DroopGfmParams& p = scenario.controller.droop;
      s.u = x[1] * Vec2(std::cos(x[0]), std::sin(x[0]));
      s.i = forming_current(s.u, ug, z);
      const PowerPair pq = apparent_power(s.u, s.i);
      s.omega = p.kp * (p.p_ref - pq.p);
      s.p_ref_active = p.p_ref;
      s.q_ref_active = p.q_ref;
      break;
    }
  }
  const PowerPair pq = apparent_power(s.u, s.i);
  s.p = pq.p;
  s.q = pq.q;
  return s;
}

bool state_diverged(const StateVec& x) {
  return !x.allFinite() || x.cwiseAbs().maxCoeff() > kDivergenceCap;
}

struct SignalStats {
  double mean_ia{0.0}, mean_ib{0.0}, mean_p{0.0}, mean_q{0.0}, mean_omega{0.0};
  double max_dev{0.0};
};

SignalStats window_stats(const std::vector<Sample>& samples, std::size_t begin) {
  SignalStats st;
  const std::size_t n = samples.size() - begin;
  for (std::size_t k = begin; k < samples.size(); ++k) {
    st.mean_ia += samples[k].i.x();
    st.mean_ib += samples[k].i.y();
    st.mean_p += samples[k].p;
    st.mean_q += samples[k].q;
    st.mean_omega += samples[k].omega;
  }
  st.mean_ia /= n;
  st.mean_ib /= n;
  st.mean_p /= n;
  st.mean_q /= n;
  st.mean_omega /= n;
  for (std::size_t k = begin; k < samples.size(); ++k) {
    double d = std::abs(samples[k].i.x() - st.mean_ia);
    d = std::max(d, std::abs(samples[k].i.y() - st.mean_ib));
    d = std::max(d, std::abs(samples[k].p - st.mean_p));
    d = std::max(d, std::abs(samples[k].q - st.mean_q));
    d = std::max(d, std::abs(samples[k].omega - st.mean_omega));
    st.max_dev = std::max(st.max_dev, d);
  }
  return st;
}

}  // namespace

RunOutcome simulate(const Scenario& scenario) {
  scenario.validate();
  const GridModel snapped = scenario.snapped_grid();
  RunOutcome outcome;
  StateVec x = scenario.initial_from_equilibrium
                   ? initial_state_from_equilibrium(scenario)
                   : scenario.initial_state;
  bool in_lvrt = false;
  const std::size_t n_steps =
      static_cast<std::size_t>(std::llround(scenario.t_end / scenario.dt));

  bool floor_hit = false;
  const double i_max = scenario.controller.dcvoc.i_max;
  auto is_saturated = [&](const StateVec& s) {
    return scenario.controller.kind == ControllerKind::dcvoc &&
           scenario.saturation_enabled && dcvoc_current(s).norm() >= i_max - 1e-9;
  };

  outcome.series.samples.push_back(
      capture_sample(x, 0.0, scenario, snapped, in_lvrt, is_saturated(x)));
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double t = k * scenario.dt;
    try {
      x = step(x, t, scenario, snapped, in_lvrt);
    } catch (const DegenerateCurrentError&) {
      floor_hit = true;
      break;
    }
    if (state_diverged(x)) {
      outcome.series.truncated_divergent = true;
      break;
    }
    if ((k + 1) % scenario.capture_stride == 0 || k + 1 == n_steps) {
      outcome.series.samples.push_back(capture_sample(
          x, (k + 1) * scenario.dt, scenario, snapped, in_lvrt, is_saturated(x)));
    }
  }
  outcome.final_state = x;

  if (floor_hit) {
    outcome.classification = Classification::floor_violation;
    return outcome;
  }
  if (outcome.series.truncated_divergent) {
    outcome.classification = Classification::diverged;
    return outcome;
  }

  // Settledness over the last 0.5 s window, plus distance of the window mean
  // from the analytic equilibrium.
  const auto& samples = outcome.series.samples;
  const double window_start = scenario.t_end - kSettleWindow;
  std::size_t begin = 0;
  while (begin + 2 < samples.size() && samples[begin].t < window_start) ++begin;
  const SignalStats st = window_stats(samples, begin);
  bool settled = st.max_dev <= kSettleBand;
  bool matches_eq = true;
  switch (scenario.controller.kind) {
    case ControllerKind::dcvoc: {
      try {
        const EquilibriumResult eq = solve_equilibrium(
            scenario.controller.dcvoc, snapped, ug_at(snapped, scenario.t_end));
        matches_eq = std::abs(st.mean_ia - eq.i_s.x()) <= kEquilibriumTol &&
                     std::abs(st.mean_ib - eq.i_s.y()) <= kEquilibriumTol &&
                     std::abs(st.mean_p - eq.p_s) <= kEquilibriumTol &&
                     std::abs(st.mean_q - eq.q_s) <= kEquilibriumTol &&
                     std::abs(st.mean_omega) <= kEquilibriumTol;
      } catch (const NoEquilibriumError&) {
        matches_eq = false;
      }
      break;
    }
    case ControllerKind::gfl:
      matches_eq =
          std::abs(st.mean_p - scenario.controller.gfl.p_ref) <= kEquilibriumTol;
      break;
    case ControllerKind::dvoc:
    case ControllerKind::droop:
      matches_eq = true;  // settledness only for the forming references
      break;
  }
  outcome.classification = (settled && matches_eq) ? Classification::converged
                                                   : Classification::oscillatory;

  if (outcome.classification == Classification::converged) {
    double settle = 0.0;
    for (std::size_t k = samples.size(); k-- > 0;) {
      const Sample& s = samples[k];
      double d = std::abs(s.i.x() - st.mean_ia);
      d = std::max(d, std::abs(s.i.y() - st.mean_ib));
      d = std::max(d, std::abs(s.p - st.mean_p));
      d = std::max(d, std::abs(s.q - st.mean_q));
      d = std::max(d, std::abs(s.omega - st.mean_omega));
      if (d > kSettleBand) {
        settle = s.t;
        break;
      }
    }
    outcome.settle_time = settle;
  }
  return outcome;
}

std::vector<TrajectorySample> dcvoc_trajectory(const TimeSeries& series) {
  std::vector<TrajectorySample> traj;
  traj.reserve(series.samples.size());
  for (const auto& s : series.samples) {
    traj.push_back({s.t, s.i, s.omega});
  }
  return traj;
}

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

unsigned worker_count() {
  if (const char* env = std::getenv("DCVOC_WORKERS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<unsigned>(n);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

void TimeSeries::write_csv(std::ostream& os, const Scenario& scenario) const {
  os << "# scenario: " << scenario.name << '\n';
  os << "# controller: " << to_string(scenario.controller.kind) << '\n';
  os << "# dt: " << std::setprecision(12) << scenario.dt << '\n';
  os << "# seed: " << scenario.seed << '\n';
  os << "# config_hash: " << std::hex << std::setw(16) << std::setfill('0')
     << fnv1a64(scenario.config_fingerprint) << std::dec << std::setfill(' ') << '\n';
  if (truncated_divergent) os << "# truncated: divergence cap reached\n";
  os << "t,i_alpha,i_beta,i_mag,u_alpha,u_beta,u_mag,p,q,omega,"
        "p_ref_active,q_ref_active,saturated,in_lvrt\n";
  os << std::setprecision(12);
  for (const auto& s : samples) {
    os << s.t << ',' << s.i.x() << ',' << s.i.y() << ',' << s.i.norm() << ','
       << s.u.x() << ',' << s.u.y() << ',' << s.u.norm() << ',' << s.p << ','
       << s.q << ',' << s.omega << ',' << s.p_ref_active << ',' << s.q_ref_active
       << ',' << (s.saturated ? 1 : 0) << ',' << (s.in_lvrt ? 1 : 0) << '\n';
  }
}

}  // namespace dcvoc
