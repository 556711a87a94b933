#pragma once

#include <algorithm>
#include <stdexcept>

#include "dcvoc/frame.hpp"

namespace dcvoc {

// Per-unit time convention: controller gains are per-unit, so state
// derivatives returned here are the per-unit vector fields scaled by
// omega_base (rad/s) to run in physical seconds. Setting omega_base = 1
// switches the convention off.
inline constexpr double kDefaultOmegaBase = 2.0 * M_PI * 50.0;

// The i = 0 manifold is excluded from the current-forming dynamics; the
// 1/i^2 terms are guarded by this floor and crossing it is an error, not a
// clamp.
inline constexpr double kCurrentFloor = 1e-3;

struct DegenerateCurrentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// dCVOC
// ---------------------------------------------------------------------------

struct DcvocParams {
  double kp{20.0};     // pu
  double kplli{20.0};  // pu
  double phi{M_PI_2};  // rad, power rotation angle
  double p_ref{1.0};   // pu
  double q_ref{0.0};   // pu
  double i_ref{1.0};   // pu
  double i_max{1.2};   // pu
  double omega0{kDefaultOmegaBase};      // rad/s
  double omega_base{kDefaultOmegaBase};  // rad/s

  double epsilon() const { return kplli / (kp * kp); }

  void validate() const {
    if (kp <= 0.0 || kplli <= 0.0) throw std::invalid_argument("dcvoc: gains must be > 0");
    if (i_ref <= 0.0) throw std::invalid_argument("dcvoc: i_ref must be > 0");
    if (i_max <= 0.0) throw std::invalid_argument("dcvoc: i_max must be > 0");
  }
};

/// State in the grid-aligned frame; omega_delta is the per-unit frequency
/// deviation state (integral channel plus the nominal/grid offset).
struct DcvocState {
  Vec2 i{Vec2::Zero()};    // pu
  double omega_delta{0.0};  // pu
};

struct DcvocRates {
  Vec2 di{Vec2::Zero()};
  double domega_delta{0.0};
};

/// Vector-form dCVOC:
///   di/dt      = kp (e^{J(pi/2-phi)} u - S_ref_Delta(omega_delta) i)
///   domega/dt  = (kplli/kp) |i| (q_phi - q_ref_phi)
/// Reference powers use i_ref^2 as scale, measured powers use |i|^2.
inline DcvocRates dcvoc_rhs(const DcvocState& state, const Vec2& u,
                            const DcvocParams& params) {
  const double i_mag = state.i.norm();
  if (i_mag < kCurrentFloor) {
    throw DegenerateCurrentError("dcvoc_rhs: current magnitude below floor");
  }
  const PowerPair pq = apparent_power(u, state.i);
  const PowerPair meas = rotated_power(pq.p, pq.q, params.phi, i_mag * i_mag);
  const PowerPair ref =
      rotated_power(params.p_ref, params.q_ref, params.phi, params.i_ref * params.i_ref);

  // S_ref_Delta = [p_ref_phi, -(q_ref_phi - omega_delta); q_ref_phi - omega_delta, p_ref_phi]
  const Vec2 s_ref_i =
      complex_mul(Vec2(ref.p, ref.q - state.omega_delta), state.i);
  const Vec2 u_rot = Rot2(M_PI_2 - params.phi) * u;

  DcvocRates rates;
  rates.di = params.omega_base * params.kp * (u_rot - s_ref_i);
  rates.domega_delta =
      params.omega_base * (params.kplli / params.kp) * i_mag * (meas.q - ref.q);
  return rates;
}

/// Polar-form dCVOC, used as the coordinate-change cross-check of dcvoc_rhs.
/// State: current angle delta (grid frame), magnitude, and the reactive
/// integrator xi with xi' = |i| (q_phi - q_ref_phi) in per-unit time.
struct DcvocPolarState {
  double delta{0.0};  // rad
  double i_mag{0.0};  // pu
  double xi{0.0};     // pu
};

struct DcvocPolarRates {
  double ddelta{0.0};
  double di_mag{0.0};
  double dxi{0.0};
};

/// omega_delta = (kplli xi + (omega0 - omega_g)/omega_base) / kp.
inline double polar_omega_delta(const DcvocPolarState& s, const DcvocParams& params,
                                double omega_g) {
  return (params.kplli * s.xi + (params.omega0 - omega_g) / params.omega_base) /
         params.kp;
}

inline DcvocPolarRates dcvoc_rhs_polar(const DcvocPolarState& state, const Vec2& u,
                                       const DcvocParams& params, double omega_g) {
  if (state.i_mag < kCurrentFloor) {
    throw DegenerateCurrentError("dcvoc_rhs_polar: current magnitude below floor");
  }
  const Vec2 i_vec =
      state.i_mag * Vec2(std::cos(state.delta), std::sin(state.delta));
  const PowerPair pq = apparent_power(u, i_vec);
  const PowerPair meas =
      rotated_power(pq.p, pq.q, params.phi, state.i_mag * state.i_mag);
  const PowerPair ref =
      rotated_power(params.p_ref, params.q_ref, params.phi, params.i_ref * params.i_ref);

  DcvocPolarRates rates;
  // delta' = kp (q_phi - q_ref_phi) + kp omega_delta (grid frame)
  rates.ddelta = params.omega_base * params.kp *
                 ((meas.q - ref.q) + polar_omega_delta(state, params, omega_g));
  rates.di_mag = params.omega_base * params.kp * (meas.p - ref.p) * state.i_mag;
  rates.dxi = params.omega_base * state.i_mag * (meas.q - ref.q);
  return rates;
}

/// Prop.-2 saturation rule: at |i| >= i_max, an outward radial component of
/// di/dt is removed (projection onto the tangent of the limit circle); the
/// angular dynamics and omega_delta are untouched.
inline DcvocRates saturate(const DcvocState& state, const DcvocRates& rates,
                           double i_max) {
  const double i_mag = state.i.norm();
  if (i_mag < i_max || i_mag == 0.0) return rates;
  const Vec2 radial = state.i / i_mag;
  const double outward = rates.di.dot(radial);
  if (outward <= 0.0) return rates;
  DcvocRates projected = rates;
  projected.di -= outward * radial;
  return projected;
}

// ---------------------------------------------------------------------------
// LVRT reference scheduling (grid-code reactive support during sags)
// ---------------------------------------------------------------------------

// Reactive demand in the schedule is keyed to the grid-code 0.9 pu level,
// independent of the entry threshold chosen for a given grid.
inline constexpr double kLvrtCodeVoltage = 0.9;  // pu

struct LvrtConfig {
  double u_threshold{0.9};  // pu
  double kl{2.0};           // pu/pu reactive-support slope
  double p_min{0.0};        // pu
  double i_max{1.2};        // pu
  double hysteresis{0.02};  // pu
  double u_floor{0.1};      // pu
  // Time constant of the voltage-magnitude measurement the scheduler sees.
  // Sag detection averages over about one grid cycle; feeding the scheduler
  // the instantaneous magnitude couples it algebraically to the current loop.
  double t_filter{0.02};  // s
  // The verbatim schedule multiplies k_s onto the already-capped reactive
  // term; this flag instead caps after scaling (q_ref <= sqrt(i_max^2-p_min^2)).
  bool cap_after_scaling{false};

  void validate() const {
    if (!(0.0 < u_floor && u_floor < u_threshold && u_threshold <= 1.0))
      throw std::invalid_argument("lvrt: need 0 < u_floor < u_threshold <= 1");
    if (kl < 0.0) throw std::invalid_argument("lvrt: kl must be >= 0");
    if (!(0.0 <= p_min && p_min <= i_max))
      throw std::invalid_argument("lvrt: need 0 <= p_min <= i_max");
    if (!(t_filter > 0.0))
      throw std::invalid_argument("lvrt: t_filter must be > 0");
  }
};

struct LvrtRefs {
  double p_ref{0.0};
  double q_ref{0.0};
  bool in_lvrt{false};
};

inline LvrtRefs lvrt_refs(double u_mag, const LvrtConfig& cfg, double base_p_ref,
                          double base_q_ref, bool in_lvrt) {
  if (u_mag < 0.0) throw std::domain_error("lvrt_refs: negative voltage magnitude");
  const bool active =
      in_lvrt ? !(u_mag > cfg.u_threshold + cfg.hysteresis) : (u_mag <= cfg.u_threshold);
  if (!active) return {base_p_ref, base_q_ref, false};

  const double ks = 1.0 / std::max(u_mag, cfg.u_floor);
  const double q_cap = std::sqrt(cfg.i_max * cfg.i_max - cfg.p_min * cfg.p_min);
  const double q_demand = cfg.kl * (kLvrtCodeVoltage - u_mag);
  const double q_ref = cfg.cap_after_scaling ? std::min(ks * q_demand, q_cap)
                                             : ks * std::min(q_demand, q_cap);
  const double p_ref = std::max(
      ks * cfg.p_min, std::sqrt(std::max(0.0, ks * cfg.i_max * (ks * cfg.i_max) -
                                                  q_ref * q_ref)));
  return {p_ref, q_ref, true};
}

// ---------------------------------------------------------------------------
// Conventional PLL-based GFL baseline
// ---------------------------------------------------------------------------

struct PllGflParams {
  double kpllp{0.5};  // pu
  double kplli{20.0};  // pu
  double kpp{0.5};     // pu
  double kpi{20.0};    // pu
  double p_ref{1.0};   // pu
  double i_max{1.2};   // pu
  double omega0{kDefaultOmegaBase};      // rad/s
  double omega_base{kDefaultOmegaBase};  // rad/s

  void validate() const {
    if (kpllp <= 0.0 || kplli <= 0.0 || kpp <= 0.0 || kpi <= 0.0)
      throw std::invalid_argument("gfl: gains must be > 0");
  }
};

/// theta is the current angle in the grid-aligned frame; xi_pll integrates
/// u_q, xi_p integrates the active-power error (both in per-unit time).
struct PllGflState {
  double theta{0.0};
  double xi_pll{0.0};
  double xi_p{0.0};
};

struct PllGflRates {
  double dtheta{0.0};  // rad/s, already net of the grid frame rotation
  double dxi_pll{0.0};
  double dxi_p{0.0};
  Vec2 i_command{Vec2::Zero()};
  double i_mag{0.0};
  bool clamped{false};
};

/// theta_i' = omega0 + omega_base (kpllp u_q + kplli xi_pll); the current
/// command magnitude is a PI on active-power error, clamped to [0, i_max]
/// with a conditionally frozen integrator.
inline PllGflRates pll_gfl_rhs(const PllGflState& state, const Vec2& u,
                               const PllGflParams& params, double omega_g) {
  const double c = std::cos(state.theta), s = std::sin(state.theta);
  const double u_q = -u.x() * s + u.y() * c;

  PllGflRates rates;
  // The current command magnitude satisfies the algebraic loop
  //   i_mag = kpp (p_ref - p(i_mag)) + kpi xi_p,  p(i_mag) = u_d i_mag,
  // with u_d the voltage component along theta (ideal current regulation).
  const double u_d = u.x() * c + u.y() * s;
  const double denom = 1.0 + params.kpp * u_d;
  const double numer = params.kpp * params.p_ref + params.kpi * state.xi_p;
  double i_mag = denom > 1e-6 ? numer / denom : (numer > 0.0 ? params.i_max : 0.0);
  bool clamped = false;
  if (i_mag > params.i_max) {
    i_mag = params.i_max;
    clamped = true;
  } else if (i_mag < 0.0) {
    i_mag = 0.0;
    clamped = true;
  }
  rates.i_command = i_mag * Vec2(c, s);
  const PowerPair pq = apparent_power(u, rates.i_command);
  const double p_err = params.p_ref - pq.p;

  rates.dtheta = (params.omega0 - omega_g) +
                 params.omega_base * (params.kpllp * u_q + params.kplli * state.xi_pll);
  rates.dxi_pll = params.omega_base * u_q;
  // Conditional anti-windup: freeze the integrator while the clamp is active
  // and the error would push further into it.
  const bool windup = clamped && ((i_mag >= params.i_max && p_err > 0.0) ||
                                  (i_mag <= 0.0 && p_err < 0.0));
  rates.dxi_p = windup ? 0.0 : params.omega_base * p_err;
  rates.i_mag = i_mag;
  rates.clamped = clamped;
  return rates;
}

// ---------------------------------------------------------------------------
// dVOC (grid-forming duality reference)
// ---------------------------------------------------------------------------

struct DvocParams {
  double kp{20.0};
  double kv{10.0};
  double phi{M_PI_2};
  double p_ref{1.0};
  double q_ref{0.0};
  double u_ref{1.0};
  double omega0{kDefaultOmegaBase};
  double omega_base{kDefaultOmegaBase};

  void validate() const {
    if (kv < 0.0 || kp <= 0.0) throw std::invalid_argument("dvoc: bad gains");
    if (u_ref <= 0.0) throw std::invalid_argument("dvoc: u_ref must be > 0");
  }
};

struct DvocState {
  Vec2 u{Vec2::Zero()};  // pu, grid-aligned frame
};

/// Vector form of the dVOC law: magnitude channel on reactive-power error
/// plus the nonlinear voltage term, angle channel on active-power error.
///   du/dt = [kp (q_ref_phi - q_phi) + kv (u_ref^2-u^2)/u_ref^2] u
///           + kp (p_ref_phi - p_phi) J u
inline Vec2 dvoc_rhs(const DvocState& state, const Vec2& i_measured,
                     const DvocParams& params) {
  const double u_mag = state.u.norm();
  if (u_mag < kCurrentFloor) {
    throw DegenerateCurrentError("dvoc_rhs: voltage magnitude below floor");
  }
  const PowerPair pq = apparent_power(state.u, i_measured);
  const PowerPair meas = rotated_power(pq.p, pq.q, params.phi, u_mag * u_mag);
  const PowerPair ref =
      rotated_power(params.p_ref, params.q_ref, params.phi, params.u_ref * params.u_ref);

  const double radial =
      params.kp * (ref.q - meas.q) +
      params.kv * (params.u_ref * params.u_ref - u_mag * u_mag) /
          (params.u_ref * params.u_ref);
  const double tangential = params.kp * (ref.p - meas.p);
  const Vec2 j_u(-state.u.y(), state.u.x());
  return params.omega_base * (radial * state.u + tangential * j_u);
}

// ---------------------------------------------------------------------------
// Droop GFM reference controller
// ---------------------------------------------------------------------------

struct DroopGfmParams {
  double kp{0.02};
  double kv{0.1};
  double p_ref{1.0};
  double q_ref{0.0};
  double u_ref{1.0};
  double omega0{kDefaultOmegaBase};
  double omega_base{kDefaultOmegaBase};

  void validate() const {
    if (kv <= 0.0) throw std::invalid_argument("droop: kv must be > 0");
  }
};

struct DroopGfmState {
  double theta_u{0.0};  // rad, grid frame
  double u{1.0};        // pu
};

struct DroopGfmRates {
  double dtheta_u{0.0};  // rad/s, net of grid frame
  double du{0.0};
};

inline DroopGfmRates droop_gfm_rhs(const DroopGfmState& state, const Vec2& i_measured,
                                   const DroopGfmParams& params, double omega_g) {
  if (state.u <= 0.0) throw std::domain_error("droop_gfm_rhs: nonpositive voltage");
  const Vec2 u_vec = state.u * Vec2(std::cos(state.theta_u), std::sin(state.theta_u));
  const PowerPair pq = apparent_power(u_vec, i_measured);
  DroopGfmRates rates;
  rates.dtheta_u = (params.omega0 - omega_g) +
                   params.omega_base * params.kp * (params.p_ref - pq.p);
  rates.du = params.omega_base * (params.kp * (params.q_ref - pq.q) +
                                  params.kv * (params.u_ref - state.u));
  return rates;
}

}  // namespace dcvoc
