#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dcvoc/analysis.hpp"

namespace dcvoc {

enum class ControllerKind { dcvoc, gfl, dvoc, droop };

const char* to_string(ControllerKind kind);

struct ControllerConfig {
  ControllerKind kind{ControllerKind::dcvoc};
  DcvocParams dcvoc;
  PllGflParams gfl;
  DvocParams dvoc;
  DroopGfmParams droop;
};

/// Integration state, packed per controller kind:
///   dcvoc: (i_alpha, i_beta, omega_delta)
///   gfl:   (theta, xi_pll, xi_p)        theta in the grid frame
///   dvoc:  (u_alpha, u_beta)
///   droop: (theta_u, u)
using StateVec = Eigen::Vector4d;

struct Scenario {
  std::string name{"scenario"};
  ControllerConfig controller;
  GridModel grid;
  std::optional<LvrtConfig> lvrt;
  double t_end{3.0};
  double dt{1e-4};
  std::size_t capture_stride{10};
  std::uint64_t seed{1};
  bool saturation_enabled{true};
  // During LVRT the current reference tracks sqrt(p_ref^2+q_ref^2), so the
  // fault current heads to ~i_max and the scheduled reactive power is met.
  bool track_iref_to_refs{true};
  bool initial_from_equilibrium{true};
  StateVec initial_state{StateVec::Zero()};  // used when !initial_from_equilibrium
  std::string config_fingerprint;            // serialized config, hashed into outputs

  void validate() const;
  /// Event times snapped down to the integration-step grid.
  GridModel snapped_grid() const;
};

struct Sample {
  double t{0.0};
  Vec2 i{Vec2::Zero()};
  Vec2 u{Vec2::Zero()};
  double p{0.0};
  double q{0.0};
  double omega{0.0};  // omega_delta (pu) or (theta_i' - omega0)/omega_base
  double p_ref_active{0.0};
  double q_ref_active{0.0};
  bool saturated{false};
  bool in_lvrt{false};
};

struct TimeSeries {
  std::vector<Sample> samples;
  bool truncated_divergent{false};

  void write_csv(std::ostream& os, const Scenario& scenario) const;
};

enum class Classification { converged, oscillatory, diverged, floor_violation };

const char* to_string(Classification c);

struct RunOutcome {
  TimeSeries series;
  Classification classification{Classification::oscillatory};
  StateVec final_state{StateVec::Zero()};
  double settle_time{-1.0};
};

/// Pre-fault steady state of the configured controller (closed-form for
/// dCVOC, algebraic PLL/power-loop solve for the GFL baseline, Newton for
/// the forming controllers).
StateVec initial_state_from_equilibrium(const Scenario& scenario);

/// One fixed-step classical fourth-order update of the closed loop. The grid
/// voltage and LVRT references are held over the step's stages.
StateVec step(const StateVec& state, double t, const Scenario& scenario,
              const GridModel& snapped, bool& in_lvrt);

RunOutcome simulate(const Scenario& scenario);

/// Trajectory view consumed by the Lyapunov scan (dCVOC runs only).
std::vector<TrajectorySample> dcvoc_trajectory(const TimeSeries& series);

std::uint64_t fnv1a64(const std::string& data);

/// Worker count for batch runs: DCVOC_WORKERS env var, else hardware
/// concurrency.
unsigned worker_count();

}  // namespace dcvoc
