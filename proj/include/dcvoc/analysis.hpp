#pragma once

#include <cstdint>
#include <vector>

#include "dcvoc/controllers.hpp"
#include "dcvoc/network.hpp"

namespace dcvoc {

struct NoEquilibriumError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Closed-form equilibrium
// ---------------------------------------------------------------------------

struct EquilibriumResult {
  Vec2 i_s{Vec2::Zero()};     // pu
  double omega_delta_s{0.0};  // pu (always zero)
  Vec2 u_s{Vec2::Zero()};     // pu
  double p_s{0.0};
  double q_s{0.0};
  double i_mag_s{0.0};
  double det{0.0};       // det(Zg e^{J phi_g} - S_ref), singularity indicator
  double residual{0.0};  // per-unit closed-loop rhs norm at the result
};

/// Distance of i_ref^2 (Rg + j Lg) from p_ref + j q_ref: the nonsingularity
/// margin of the equilibrium matrix.
inline double eq14_margin(const DcvocParams& params, const GridModel& grid) {
  const double ir2 = params.i_ref * params.i_ref;
  return std::hypot(ir2 * grid.rg - params.p_ref, ir2 * grid.lg - params.q_ref);
}

/// Per-unit closed-loop rhs at (i, omega_delta) against the algebraic grid:
/// the current channel of the interconnected dynamics divided by kp, stacked
/// with the frequency-channel integrand.
inline Eigen::Vector3d closed_loop_residual(const Vec2& i, double omega_delta,
                                            const DcvocParams& params,
                                            const Impedance& z, double ug) {
  const Vec2 u = Vec2(ug, 0.0) + z.zg * (Rot2(z.phi_g) * i);
  const double i_mag = i.norm();
  const PowerPair pq = apparent_power(u, i);
  const PowerPair meas = rotated_power(pq.p, pq.q, params.phi, i_mag * i_mag);
  const PowerPair ref =
      rotated_power(params.p_ref, params.q_ref, params.phi, params.i_ref * params.i_ref);
  const Vec2 u_rot = Rot2(M_PI_2 - params.phi) * u;
  const Vec2 di = u_rot - complex_mul(Vec2(ref.p, ref.q - omega_delta), i);
  Eigen::Vector3d r;
  r << di.x(), di.y(), i_mag * (meas.q - ref.q);
  return r;
}

/// i_s = -(Zg e^{J phi_g} - S_ref)^{-1} [ug 0]^T, omega_delta_s = 0.
/// Throws NoEquilibriumError when the matrix is singular (i.e. the margin
/// above vanishes).
inline EquilibriumResult solve_equilibrium(const DcvocParams& params,
                                           const GridModel& grid, double ug) {
  const Impedance z = impedance_of(grid);
  const double ir2 = params.i_ref * params.i_ref;
  const Mat2 m = z.zg * Rot2(z.phi_g).matrix() -
                 complex_to_matrix(Vec2(params.p_ref / ir2, params.q_ref / ir2));
  const double det = m.determinant();
  if (std::abs(det) < 1e-12) {
    throw NoEquilibriumError("solve_equilibrium: i_ref^2 (Rg + j Lg) = p_ref + j q_ref");
  }
  EquilibriumResult eq;
  eq.i_s = m.partialPivLu().solve(Vec2(-ug, 0.0));
  eq.omega_delta_s = 0.0;
  eq.u_s = Vec2(ug, 0.0) + z.zg * (Rot2(z.phi_g) * eq.i_s);
  const PowerPair pq = apparent_power(eq.u_s, eq.i_s);
  eq.p_s = pq.p;
  eq.q_s = pq.q;
  eq.i_mag_s = eq.i_s.norm();
  eq.det = det;
  eq.residual = closed_loop_residual(eq.i_s, 0.0, params, z, ug).norm();
  return eq;
}

struct SteadyPower {
  double p_s{0.0};
  double q_s{0.0};
  double i_mag_s{0.0};
};

/// p_s + j q_s = u_s^2 i_ref^2 (p_ref + j q_ref) / (p_ref^2 + q_ref^2),
/// i_s = u_s i_ref^2 / sqrt(p_ref^2 + q_ref^2).
inline SteadyPower steady_power(double u_mag_s, double p_ref, double q_ref,
                                double i_ref) {
  const double s2 = p_ref * p_ref + q_ref * q_ref;
  if (s2 <= 0.0) throw std::domain_error("steady_power: zero reference power");
  const double u2 = u_mag_s * u_mag_s;
  const double ir2 = i_ref * i_ref;
  return {u2 * ir2 * p_ref / s2, u2 * ir2 * q_ref / s2, u_mag_s * ir2 / std::sqrt(s2)};
}

// ---------------------------------------------------------------------------
// Global-stability certificate
// ---------------------------------------------------------------------------

struct StabilityReport {
  bool equilibrium_exists{false};
  double eq14_margin{0.0};
  double eq11_lhs{0.0};
  double eq11_rhs{0.0};
  double eq11_margin{0.0};
  double epsilon{0.0};
  bool condition_holds{false};
};

/// sqrt(p_ref^2 + q_ref^2) cos(pi/2 - phi) > i_ref^2 Zg cos(pi/2 + phi_g - phi),
/// together with nonsingularity and epsilon > 0.
inline StabilityReport check_stability_condition(const DcvocParams& params,
                                                 const GridModel& grid) {
  const Impedance z = impedance_of(grid);
  StabilityReport report;
  report.eq14_margin = eq14_margin(params, grid);
  report.equilibrium_exists = report.eq14_margin > 1e-12;
  report.eq11_lhs = std::hypot(params.p_ref, params.q_ref) * std::cos(M_PI_2 - params.phi);
  report.eq11_rhs = params.i_ref * params.i_ref * z.zg *
                    std::cos(M_PI_2 + z.phi_g - params.phi);
  report.eq11_margin = report.eq11_lhs - report.eq11_rhs;
  report.epsilon = params.epsilon();
  report.condition_holds = report.eq11_margin > 0.0 && report.equilibrium_exists &&
                           report.epsilon > 0.0;
  return report;
}

// ---------------------------------------------------------------------------
// Singular-perturbation decomposition
// ---------------------------------------------------------------------------

/// Shifted slow/fast coordinates: x = omega_delta, z = i - i_s, with the
/// boundary-layer quasi-steady state z_s(x) and the reduced slow system
/// dx/dtau = f_s(x), tau = (kplli/kp) t_pu.
struct SlowFastDecomposition {
  double a{0.0};
  double b{0.0};
  double tau_scale{0.0};  // kplli/kp
  double eps{0.0};        // kplli/kp^2
  double ug{0.0};
  double phi{0.0};
  Vec2 i_s{Vec2::Zero()};
};

inline SlowFastDecomposition make_decomposition(const DcvocParams& params,
                                                const GridModel& grid, double ug) {
  const Impedance z = impedance_of(grid);
  const PowerPair ref =
      rotated_power(params.p_ref, params.q_ref, params.phi, params.i_ref * params.i_ref);
  SlowFastDecomposition d;
  d.a = z.zg * std::cos(M_PI_2 + z.phi_g - params.phi) - ref.p;
  d.b = z.zg * std::sin(M_PI_2 + z.phi_g - params.phi) - ref.q;
  d.tau_scale = params.kplli / params.kp;
  d.eps = params.epsilon();
  d.ug = ug;
  d.phi = params.phi;
  d.i_s = solve_equilibrium(params, grid, ug).i_s;
  return d;
}

/// Boundary-layer equilibrium
///   z_s(x) = z_0 u_{g,phi} - i_s,
///   z_0 u_{g,phi} = e^{J(pi/2-phi)} (ug / (a^2+(b+x)^2)) [-a, b+x]^T.
inline Vec2 quasi_steady_zs(double x, const SlowFastDecomposition& d) {
  const double bx = d.b + x;
  const double denom = d.a * d.a + bx * bx;
  if (denom <= 0.0) {
    throw std::domain_error("quasi_steady_zs: singular boundary-layer equilibrium");
  }
  const Vec2 v(-d.a, bx);
  return Rot2(M_PI_2 - d.phi) * (d.ug / denom * v) - d.i_s;
}

/// d z_s / d x in closed form (matches central differences of
/// quasi_steady_zs; the sign follows from direct differentiation).
inline Vec2 quasi_steady_zs_dx(double x, const SlowFastDecomposition& d) {
  const double bx = d.b + x;
  const double denom = d.a * d.a + bx * bx;
  const Vec2 v(2.0 * d.a * bx, d.a * d.a - bx * bx);
  return Rot2(M_PI_2 - d.phi) * (d.ug / (denom * denom) * v);
}

/// Reduced slow system f_s(x) = -|z_0 u_{g,phi}| x = -ug x / sqrt(a^2+(b+x)^2).
inline double reduced_slow_rhs(double x, const SlowFastDecomposition& d) {
  const double bx = d.b + x;
  const double denom = d.a * d.a + bx * bx;
  if (denom <= 0.0) throw std::domain_error("reduced_slow_rhs: singular denominator");
  return -d.ug * x / std::sqrt(denom);
}

// ---------------------------------------------------------------------------
// Lyapunov verification
// ---------------------------------------------------------------------------

struct LyapunovValue {
  double v1{0.0};
  double v2{0.0};
  double v{0.0};
};

/// V1 = (kp/2kplli) x^2, V2 = (kp eps / 2kplli) y^T y with
/// x = omega_delta - omega_delta_s and y = (i - i_s) - z_s(x).
inline LyapunovValue lyapunov(const DcvocState& state, const EquilibriumResult& eq,
                              const SlowFastDecomposition& d,
                              const DcvocParams& params) {
  const double x = state.omega_delta - eq.omega_delta_s;
  const Vec2 z = state.i - eq.i_s;
  const Vec2 y = z - quasi_steady_zs(x, d);
  LyapunovValue val;
  val.v1 = params.kp / (2.0 * params.kplli) * x * x;
  val.v2 = params.kp * d.eps / (2.0 * params.kplli) * y.dot(y);
  val.v = val.v1 + val.v2;
  return val;
}

struct TrajectorySample {
  double t{0.0};
  Vec2 i{Vec2::Zero()};
  double omega_delta{0.0};
};

struct LyapunovScan {
  std::size_t steps{0};
  std::size_t violations{0};
  double fraction_decreasing{0.0};
  double max_increase{0.0};
  double first_violation_time{-1.0};
  double v_final{0.0};
  bool pass{false};
};

/// Evaluates V along a trajectory and reports monotonicity: pass means V is
/// non-increasing after the first step up to the per-step tolerance.
inline LyapunovScan lyapunov_decrease_scan(const std::vector<TrajectorySample>& traj,
                                           const EquilibriumResult& eq,
                                           const SlowFastDecomposition& d,
                                           const DcvocParams& params,
                                           double tol = 1e-8) {
  if (traj.size() < 2) {
    throw std::invalid_argument("lyapunov_decrease_scan: need at least 2 samples");
  }
  LyapunovScan scan;
  double v_prev = lyapunov({traj.front().i, traj.front().omega_delta}, eq, d, params).v;
  std::size_t decreasing = 0;
  for (std::size_t k = 1; k < traj.size(); ++k) {
    const double v =
        lyapunov({traj[k].i, traj[k].omega_delta}, eq, d, params).v;
    const double dv = v - v_prev;
    if (dv < 0.0) ++decreasing;
    if (dv > tol) {
      ++scan.violations;
      if (scan.first_violation_time < 0.0) scan.first_violation_time = traj[k].t;
      scan.max_increase = std::max(scan.max_increase, dv);
    }
    v_prev = v;
    ++scan.steps;
  }
  scan.fraction_decreasing = static_cast<double>(decreasing) / scan.steps;
  scan.v_final = v_prev;
  scan.pass = scan.violations == 0;
  return scan;
}

// ---------------------------------------------------------------------------
// Empirical region-of-attraction sampling (implemented in src/roa.cpp, on top
// of the simulation engine)
// ---------------------------------------------------------------------------

struct RoaSampleOutcome {
  std::size_t index{0};
  Vec2 i0{Vec2::Zero()};
  double omega_delta0{0.0};
  bool converged{false};
  double t_converged{-1.0};
};

struct RoaResult {
  double fraction_converged{0.0};
  std::size_t n_converged{0};
  std::size_t worst_index{0};  // slowest (or a non-converged) trajectory
  std::vector<RoaSampleOutcome> outcomes;
};

RoaResult roa_sample(const DcvocParams& params, const GridModel& grid, std::size_t n,
                     double radius, std::uint64_t seed);

}  // namespace dcvoc
