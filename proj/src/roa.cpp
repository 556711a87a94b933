#include <atomic>
#include <cmath>
#include <random>
#include <thread>

#include "dcvoc/simulation.hpp"

namespace dcvoc {

namespace {

constexpr double kRoaDt = 5e-5;            // s
constexpr double kRoaTmax = 10.0;          // s
constexpr double kConvergedDist = 1e-4;    // pu, state distance to equilibrium
constexpr double kConvergedSustain = 0.1;  // s

/// Integrates one trajectory with early exit once the state stays within
/// kConvergedDist of the equilibrium for kConvergedSustain seconds.
RoaSampleOutcome run_sample(std::size_t index, const Vec2& i0, double omega0,
                            const Scenario& scenario, const EquilibriumResult& eq) {
  Scenario s = scenario;
  s.initial_from_equilibrium = false;
  s.initial_state << i0.x(), i0.y(), omega0, 0.0;
  const GridModel snapped = s.snapped_grid();

  RoaSampleOutcome out;
  out.index = index;
  out.i0 = i0;
  out.omega_delta0 = omega0;

  StateVec x = s.initial_state;
  bool in_lvrt = false;
  const std::size_t n_steps = static_cast<std::size_t>(std::llround(kRoaTmax / s.dt));
  double inside_since = -1.0;
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double t = k * s.dt;
    const double dist =
        std::sqrt((Vec2(x[0], x[1]) - eq.i_s).squaredNorm() + x[2] * x[2]);
    if (dist < kConvergedDist) {
      if (inside_since < 0.0) inside_since = t;
      if (t - inside_since >= kConvergedSustain) {
        out.converged = true;
        out.t_converged = inside_since;
        return out;
      }
    } else {
      inside_since = -1.0;
    }
    try {
      x = step(x, t, s, snapped, in_lvrt);
    } catch (const DegenerateCurrentError&) {
      return out;
    }
    if (!x.allFinite()) return out;
  }
  return out;
}

}  // namespace

RoaResult roa_sample(const DcvocParams& params, const GridModel& grid, std::size_t n,
                     double radius, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("roa_sample: n must be >= 1");

  Scenario scenario;
  scenario.name = "roa";
  scenario.controller.kind = ControllerKind::dcvoc;
  scenario.controller.dcvoc = params;
  scenario.grid = grid;
  scenario.grid.events.clear();
  scenario.t_end = kRoaTmax;
  scenario.dt = kRoaDt;
  scenario.seed = seed;
  const EquilibriumResult eq = solve_equilibrium(params, grid, grid.ug_nominal);

  // Initial states drawn sequentially with a per-sample generator so the
  // set is independent of worker count.
  std::vector<Vec2> i0(n);
  std::vector<double> w0(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ull * (k + 1)));
    std::uniform_real_distribution<double> mag(kCurrentFloor, radius);
    std::uniform_real_distribution<double> ang(-M_PI, M_PI);
    std::uniform_real_distribution<double> omega(-radius, radius);
    const double m = mag(rng), a = ang(rng);
    i0[k] = m * Vec2(std::cos(a), std::sin(a));
    w0[k] = omega(rng);
  }

  RoaResult result;
  result.outcomes.resize(n);
  std::atomic<std::size_t> next{0};
  const unsigned workers = std::min<unsigned>(worker_count(), n);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t k = next.fetch_add(1); k < n; k = next.fetch_add(1)) {
        result.outcomes[k] = run_sample(k, i0[k], w0[k], scenario, eq);
      }
    });
  }
  for (auto& t : pool) t.join();

  double worst_t = -1.0;
  for (const auto& o : result.outcomes) {
    if (o.converged) {
      ++result.n_converged;
      if (o.t_converged > worst_t) {
        worst_t = o.t_converged;
        result.worst_index = o.index;
      }
    }
  }
  for (const auto& o : result.outcomes) {
    if (!o.converged) {
      result.worst_index = o.index;
      break;
    }
  }
  result.fraction_converged = static_cast<double>(result.n_converged) / n;
  return result;
}

}  // namespace dcvoc
