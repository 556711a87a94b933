#include <doctest.h>

#include "dcvoc/config.hpp"

using namespace dcvoc;

namespace {

const char* kFullConfig =
    "[controller]\n"
    "kind = dcvoc\n"
    "kp = 20\n"
    "kplli = 4\n"
    "phi = pi/2\n"
    "p_ref = 0.9\n"
    "q_ref = 0.1\n"
    "i_ref = 1.0\n"
    "i_max = 1.2\n"
    "\n"
    "[grid]\n"
    "ug = 1.0\n"
    "rg = 0.05\n"
    "lg = 0.65\n"
    "\n"
    "[events]\n"
    "event = 1.0 2.0 0.2\n"
    "\n"
    "[lvrt]\n"
    "enabled = true\n"
    "kl = 2.0\n"
    "p_min = 0.1\n"
    "i_max = 1.2\n"
    "\n"
    "[sim]\n"
    "name = roundtrip\n"
    "t_end = 3.0\n"
    "dt = 1e-4\n"
    "capture_stride = 10\n"
    "seed = 7\n";

}  // namespace

TEST_CASE("parse_scenario reads a full config") {
  const Scenario s = parse_scenario(kFullConfig);
  CHECK(s.controller.kind == ControllerKind::dcvoc);
  CHECK(s.controller.dcvoc.kplli == 4.0);
  CHECK(s.controller.dcvoc.phi == M_PI_2);
  CHECK(s.controller.dcvoc.p_ref == 0.9);
  CHECK(s.grid.lg == 0.65);
  REQUIRE(s.grid.events.size() == 1);
  CHECK(s.grid.events[0].ug_during == 0.2);
  REQUIRE(s.lvrt.has_value());
  CHECK(s.lvrt->p_min == 0.1);
  CHECK(s.name == "roundtrip");
  CHECK(s.seed == 7);
  CHECK_FALSE(s.config_fingerprint.empty());
}

TEST_CASE("parse -> serialize -> parse is the identity") {
  const Scenario a = parse_scenario(kFullConfig);
  const std::string text = serialize_scenario(a);
  const Scenario b = parse_scenario(text);
  CHECK(serialize_scenario(b) == text);
  CHECK(b.controller.dcvoc.kplli == a.controller.dcvoc.kplli);
  CHECK(b.lvrt->p_min == a.lvrt->p_min);
  CHECK(b.grid.events[0].t_start == a.grid.events[0].t_start);
  CHECK(b.seed == a.seed);
}

TEST_CASE("strict parsing rejects malformed input with line numbers") {
  SUBCASE("unknown key") {
    try {
      parse_scenario("[controller]\nkind = dcvoc\nkq = 3\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line == 3);
      CHECK(std::string(e.what()).find("kq") != std::string::npos);
    }
  }

  SUBCASE("unknown section") {
    try {
      parse_scenario("[controler]\nkind = dcvoc\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line == 1);
    }
  }

  SUBCASE("key outside a section") {
    CHECK_THROWS_AS(parse_scenario("kind = dcvoc\n"), ParseError);
  }

  SUBCASE("duplicate key") {
    CHECK_THROWS_AS(parse_scenario("[controller]\nkp = 1\nkp = 2\n"), ParseError);
  }

  SUBCASE("invalid number") {
    CHECK_THROWS_AS(parse_scenario("[controller]\nkp = fast\n"), ParseError);
  }

  SUBCASE("invalid boolean") {
    CHECK_THROWS_AS(parse_scenario("[sim]\nsaturation = yes\n"), ParseError);
  }

  SUBCASE("malformed event") {
    CHECK_THROWS_AS(parse_scenario("[events]\nevent = 1.0 2.0\n"), ParseError);
    CHECK_THROWS_AS(parse_scenario("[events]\nevent = 1.0 2.0 0.5 9\n"), ParseError);
  }

  SUBCASE("custom initial state requires the vector") {
    CHECK_THROWS_AS(parse_scenario("[sim]\ninitial = custom\n"), ParseError);
  }
}

TEST_CASE("angle tokens") {
  Scenario s = parse_scenario("[controller]\nkind = dcvoc\nphi = pi\n");
  CHECK(s.controller.dcvoc.phi == M_PI);

  s = parse_scenario(
      "[controller]\nkind = dcvoc\nphi = phi_g\n[grid]\nrg = 0.2\nlg = 0.25\n");
  CHECK(s.controller.dcvoc.phi == doctest::Approx(std::atan2(0.25, 0.2)).epsilon(1e-14));
}

TEST_CASE("lvrt p_min = auto keeps a 10% stability margin") {
  const Scenario s = parse_scenario(
      "[controller]\nkind = dcvoc\n[grid]\nrg = 0.05\nlg = 0.65\n"
      "[lvrt]\nenabled = true\np_min = auto\n");
  REQUIRE(s.lvrt.has_value());
  // phi = pi/2: rhs of the certificate is i_ref^2 Rg = 0.05, so p_min = 0.055.
  CHECK(s.lvrt->p_min == doctest::Approx(0.055).epsilon(1e-12));

  DcvocParams p;
  GridModel g;
  g.rg = 0.2;
  g.lg = 0.25;
  p.phi = impedance_of(g).phi_g;
  CHECK(default_lvrt_p_min(p, g) == 0.0);
}

TEST_CASE("use_time_base = false runs in per-unit time") {
  const Scenario s = parse_scenario(
      "[controller]\nkind = dcvoc\n[sim]\nuse_time_base = false\n");
  CHECK(s.controller.dcvoc.omega_base == 1.0);
  const Scenario rt = parse_scenario(serialize_scenario(s));
  CHECK(rt.controller.dcvoc.omega_base == 1.0);
}

TEST_CASE("custom initial state round-trips") {
  const Scenario s = parse_scenario(
      "[controller]\nkind = dcvoc\n[sim]\ninitial = custom\n"
      "initial_state = 0.5 0.25 -0.1 0\n");
  CHECK_FALSE(s.initial_from_equilibrium);
  CHECK(s.initial_state[0] == 0.5);
  CHECK(s.initial_state[2] == -0.1);
  const Scenario rt = parse_scenario(serialize_scenario(s));
  CHECK(rt.initial_state == s.initial_state);
}

TEST_CASE("bundled scenarios parse and cover the campaign") {
  const auto& bundle = bundled_scenarios();
  REQUIRE(bundle.size() == 9);
  int n_dcvoc = 0, n_gfl = 0, n_dvoc = 0;
  for (const auto& b : bundle) {
    const Scenario s = parse_scenario(b.config_text);
    CHECK(s.name == b.name);
    CHECK(s.t_end == 3.0);
    switch (s.controller.kind) {
      case ControllerKind::dcvoc:
        ++n_dcvoc;
        CHECK(s.lvrt.has_value());
        break;
      case ControllerKind::gfl: ++n_gfl; break;
      case ControllerKind::dvoc: ++n_dvoc; break;
      default: break;
    }
  }
  CHECK(n_dcvoc == 4);
  CHECK(n_gfl == 4);
  CHECK(n_dvoc == 1);
}

TEST_CASE("load_scenario reports missing files") {
  CHECK_THROWS_AS(load_scenario("/nonexistent/path.cfg"), std::runtime_error);
}
