#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "dcvoc/simulation.hpp"

namespace dcvoc {

struct ParseError : std::runtime_error {
  int line{0};
  ParseError(const std::string& msg, int line_no)
      : std::runtime_error(msg + " (line " + std::to_string(line_no) + ")"),
        line(line_no) {}
};

/// Strict scenario-config parsing: unknown sections or keys are errors.
/// Sections: [controller] [grid] [events] [lvrt] [sim].
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& path);

/// Canonical text form; parse(serialize(s)) reproduces s exactly.
std::string serialize_scenario(const Scenario& scenario);

/// Default LVRT minimum active power: smallest p_ref keeping the stability
/// inequality satisfied with 10% margin, zero when phi matches the line
/// angle.
double default_lvrt_p_min(const DcvocParams& params, const GridModel& grid);

struct BundledScenario {
  std::string name;
  std::string config_text;
};

/// The four grid cases x {dcvoc, gfl} plus the dvoc duality demo.
const std::vector<BundledScenario>& bundled_scenarios();

}  // namespace dcvoc
