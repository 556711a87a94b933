#pragma once

#include <stdexcept>
#include <vector>

#include "dcvoc/frame.hpp"

namespace dcvoc {

/// Step change of the grid voltage magnitude on [t_start, t_end).
struct GridEvent {
  double t_start{0.0};  // s
  double t_end{0.0};    // s
  double ug_during{0.0};  // pu
};

/// Quasi-static phasor grid: stiff source behind a series R-L impedance.
/// Immutable after construction; all queries are read-only.
struct GridModel {
  double ug_nominal{1.0};  // pu
  double rg{0.0};          // pu
  double lg{0.0};          // pu
  double omega_g{2.0 * M_PI * 50.0};  // rad/s
  std::vector<GridEvent> events;      // sorted, non-overlapping

  void validate() const {
    if (ug_nominal <= 0.0) throw std::invalid_argument("grid: ug_nominal must be > 0");
    if (rg < 0.0 || lg < 0.0) throw std::invalid_argument("grid: negative impedance");
    double prev_end = -1.0;
    for (const auto& e : events) {
      if (!(e.t_start < e.t_end)) throw std::invalid_argument("grid event: t_start >= t_end");
      if (e.ug_during < 0.0) throw std::invalid_argument("grid event: negative voltage");
      if (e.t_start < prev_end) throw std::invalid_argument("grid events overlap");
      prev_end = e.t_end;
    }
  }
};

struct Impedance {
  double zg{0.0};     // pu magnitude
  double phi_g{0.0};  // rad
};

/// Zg = sqrt(Rg^2 + Lg^2), phi_g = atan2(Lg, Rg).
inline Impedance impedance_of(const GridModel& grid) {
  return {std::hypot(grid.rg, grid.lg), (grid.rg == 0.0 && grid.lg == 0.0)
                                            ? 0.0
                                            : std::atan2(grid.lg, grid.rg)};
}

/// Grid source magnitude at time t: event value inside [t_start, t_end),
/// nominal otherwise.
inline double ug_at(const GridModel& grid, double t) {
  for (const auto& e : grid.events) {
    if (t >= e.t_start && t < e.t_end) return e.ug_during;
  }
  return grid.ug_nominal;
}

/// u = [ug 0]^T + Zg e^{J phi_g} i  (grid-aligned frame).
inline Vec2 terminal_voltage(const Vec2& i, const GridModel& grid, double t) {
  const Impedance z = impedance_of(grid);
  return Vec2(ug_at(grid, t), 0.0) + z.zg * (Rot2(z.phi_g) * i);
}

inline Vec2 terminal_voltage(const Vec2& i, const GridModel& grid, double ug,
                             const Impedance& z) {
  return Vec2(ug, 0.0) + z.zg * (Rot2(z.phi_g) * i);
}

}  // namespace dcvoc
