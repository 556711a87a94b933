#include "dcvoc/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace dcvoc {

namespace {

struct Entry {
  std::string section;
  std::string key;
  std::string value;
  int line{0};
  bool used{false};
};

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<Entry> tokenize(const std::string& text) {
  std::vector<Entry> entries;
  std::istringstream in(text);
  std::string raw, section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("unterminated section header", line_no);
      section = trim(line.substr(1, line.size() - 2));
      static const char* known[] = {"controller", "grid", "events", "lvrt", "sim"};
      bool ok = false;
      for (const char* k : known) ok = ok || section == k;
      if (!ok) throw ParseError("unknown section [" + section + "]", line_no);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line_no);
    if (section.empty()) throw ParseError("key outside any section", line_no);
    entries.push_back(
        {section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no, false});
  }
  return entries;
}

class Reader {
 public:
  explicit Reader(std::vector<Entry> entries) : entries_(std::move(entries)) {}

  const Entry* find(const std::string& section, const std::string& key) {
    const Entry* found = nullptr;
    for (auto& e : entries_) {
      if (e.section == section && e.key == key) {
        if (found) throw ParseError("duplicate key '" + key + "'", e.line);
        e.used = true;
        found = &e;
      }
    }
    return found;
  }

  std::string str(const std::string& section, const std::string& key,
                  const std::string& fallback) {
    const Entry* e = find(section, key);
    return e ? e->value : fallback;
  }

  double number(const std::string& section, const std::string& key, double fallback) {
    const Entry* e = find(section, key);
    return e ? parse_number(*e) : fallback;
  }

  bool boolean(const std::string& section, const std::string& key, bool fallback) {
    const Entry* e = find(section, key);
    if (!e) return fallback;
    if (e->value == "true") return true;
    if (e->value == "false") return false;
    throw ParseError("expected true/false for '" + key + "'", e->line);
  }

  std::vector<const Entry*> all(const std::string& section, const std::string& key) {
    std::vector<const Entry*> out;
    for (auto& e : entries_) {
      if (e.section == section && e.key == key) {
        e.used = true;
        out.push_back(&e);
      }
    }
    return out;
  }

  void check_all_used() const {
    for (const auto& e : entries_) {
      if (!e.used) {
        throw ParseError("unknown key '" + e.key + "' in [" + e.section + "]", e.line);
      }
    }
  }

  static double parse_number(const Entry& e) {
    if (e.value == "pi/2") return M_PI_2;
    if (e.value == "pi") return M_PI;
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(e.value, &pos);
    } catch (const std::exception&) {
      throw ParseError("invalid number '" + e.value + "'", e.line);
    }
    if (pos != e.value.size()) throw ParseError("invalid number '" + e.value + "'", e.line);
    return v;
  }

 private:
  std::vector<Entry> entries_;
};

constexpr double kTwoPi = 2.0 * M_PI;

}  // namespace

double default_lvrt_p_min(const DcvocParams& params, const GridModel& grid) {
  const Impedance z = impedance_of(grid);
  if (std::abs(params.phi - z.phi_g) < 1e-9) return 0.0;
  const double lhs_gain = std::cos(M_PI_2 - params.phi);
  const double rhs = params.i_ref * params.i_ref * z.zg *
                     std::cos(M_PI_2 + z.phi_g - params.phi);
  if (rhs <= 0.0 || lhs_gain <= 0.0) return 0.0;
  const double s_needed = 1.1 * rhs / lhs_gain;  // required sqrt(p^2+q^2)
  const double p2 = s_needed * s_needed - params.q_ref * params.q_ref;
  return p2 > 0.0 ? std::sqrt(p2) : 0.0;
}

Scenario parse_scenario(const std::string& text) {
  Reader r(tokenize(text));
  Scenario s;

  // [grid] first: phi may reference the impedance angle.
  s.grid.ug_nominal = r.number("grid", "ug", 1.0);
  s.grid.rg = r.number("grid", "rg", 0.0);
  s.grid.lg = r.number("grid", "lg", 0.0);
  s.grid.omega_g = kTwoPi * r.number("grid", "omega_g_hz", 50.0);

  for (const Entry* e : r.all("events", "event")) {
    std::istringstream fields(e->value);
    GridEvent ev;
    if (!(fields >> ev.t_start >> ev.t_end >> ev.ug_during)) {
      throw ParseError("event expects 't_start t_end ug'", e->line);
    }
    std::string rest;
    if (fields >> rest) throw ParseError("trailing fields in event", e->line);
    s.grid.events.push_back(ev);
  }

  const std::string kind = r.str("controller", "kind", "dcvoc");
  const double omega0 = kTwoPi * r.number("controller", "omega0_hz", 50.0);
  const bool use_time_base = r.boolean("sim", "use_time_base", true);
  const double omega_base = use_time_base ? kDefaultOmegaBase : 1.0;

  auto read_phi = [&](double fallback) {
    const Entry* e = r.find("controller", "phi");
    if (!e) return fallback;
    if (e->value == "phi_g") return impedance_of(s.grid).phi_g;
    return Reader::parse_number(*e);
  };

  if (kind == "dcvoc") {
    s.controller.kind = ControllerKind::dcvoc;
    auto& p = s.controller.dcvoc;
    p.kp = r.number("controller", "kp", p.kp);
    p.kplli = r.number("controller", "kplli", p.kplli);
    p.phi = read_phi(p.phi);
    p.p_ref = r.number("controller", "p_ref", p.p_ref);
    p.q_ref = r.number("controller", "q_ref", p.q_ref);
    p.i_ref = r.number("controller", "i_ref", p.i_ref);
    p.i_max = r.number("controller", "i_max", p.i_max);
    p.omega0 = omega0;
    p.omega_base = omega_base;
  } else if (kind == "gfl") {
    s.controller.kind = ControllerKind::gfl;
    auto& p = s.controller.gfl;
    p.kpllp = r.number("controller", "kpllp", p.kpllp);
    p.kplli = r.number("controller", "kplli", p.kplli);
    p.kpp = r.number("controller", "kpp", p.kpp);
    p.kpi = r.number("controller", "kpi", p.kpi);
    p.p_ref = r.number("controller", "p_ref", p.p_ref);
    p.i_max = r.number("controller", "i_max", p.i_max);
    p.omega0 = omega0;
    p.omega_base = omega_base;
  } else if (kind == "dvoc") {
    s.controller.kind = ControllerKind::dvoc;
    auto& p = s.controller.dvoc;
    p.kp = r.number("controller", "kp", p.kp);
    p.kv = r.number("controller", "kv", p.kv);
    p.phi = read_phi(p.phi);
    p.p_ref = r.number("controller", "p_ref", p.p_ref);
    p.q_ref = r.number("controller", "q_ref", p.q_ref);
    p.u_ref = r.number("controller", "u_ref", p.u_ref);
    p.omega0 = omega0;
    p.omega_base = omega_base;
  } else if (kind == "droop") {
    s.controller.kind = ControllerKind::droop;
    auto& p = s.controller.droop;
    p.kp = r.number("controller", "kp", p.kp);
    p.kv = r.number("controller", "kv", p.kv);
    p.p_ref = r.number("controller", "p_ref", p.p_ref);
    p.q_ref = r.number("controller", "q_ref", p.q_ref);
    p.u_ref = r.number("controller", "u_ref", p.u_ref);
    p.omega0 = omega0;
    p.omega_base = omega_base;
  } else {
    throw ParseError("unknown controller kind '" + kind + "'", 0);
  }

  if (r.boolean("lvrt", "enabled", false)) {
    LvrtConfig cfg;
    cfg.u_threshold = r.number("lvrt", "u_threshold", cfg.u_threshold);
    cfg.kl = r.number("lvrt", "kl", cfg.kl);
    cfg.i_max = r.number("lvrt", "i_max", s.controller.dcvoc.i_max);
    cfg.hysteresis = r.number("lvrt", "hysteresis", cfg.hysteresis);
    cfg.u_floor = r.number("lvrt", "u_floor", cfg.u_floor);
    cfg.t_filter = r.number("lvrt", "t_filter", cfg.t_filter);
    cfg.cap_after_scaling = r.boolean("lvrt", "cap_after_scaling", false);
    const std::string p_min = r.str("lvrt", "p_min", "auto");
    if (p_min == "auto") {
      cfg.p_min = default_lvrt_p_min(s.controller.dcvoc, s.grid);
    } else {
      Entry e{"lvrt", "p_min", p_min, 0, true};
      cfg.p_min = Reader::parse_number(e);
    }
    s.lvrt = cfg;
  } else {
    // Consume optional keys so a disabled section does not trip strictness.
    for (const char* k : {"u_threshold", "kl", "i_max", "hysteresis", "u_floor",
                          "t_filter", "cap_after_scaling", "p_min"}) {
      r.find("lvrt", k);
    }
  }

  s.name = r.str("sim", "name", "scenario");
  s.t_end = r.number("sim", "t_end", s.t_end);
  s.dt = r.number("sim", "dt", s.dt);
  s.capture_stride =
      static_cast<std::size_t>(r.number("sim", "capture_stride", 10.0));
  s.seed = static_cast<std::uint64_t>(r.number("sim", "seed", 1.0));
  s.saturation_enabled = r.boolean("sim", "saturation", true);
  s.track_iref_to_refs = r.boolean("sim", "track_iref", true);
  const std::string initial = r.str("sim", "initial", "equilibrium");
  if (initial == "equilibrium") {
    s.initial_from_equilibrium = true;
  } else if (initial == "custom") {
    s.initial_from_equilibrium = false;
    const Entry* e = r.find("sim", "initial_state");
    if (!e) throw ParseError("initial = custom requires initial_state", 0);
    std::istringstream fields(e->value);
    if (!(fields >> s.initial_state[0] >> s.initial_state[1] >> s.initial_state[2] >>
          s.initial_state[3])) {
      throw ParseError("initial_state expects four numbers", e->line);
    }
  } else {
    throw ParseError("initial must be 'equilibrium' or 'custom'", 0);
  }

  r.check_all_used();
  s.validate();
  s.config_fingerprint = serialize_scenario(s);
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  os << v;
  return os.str();
}

}  // namespace

std::string serialize_scenario(const Scenario& s) {
  std::ostringstream os;
  os << "[controller]\n";
  os << "kind = " << to_string(s.controller.kind) << "\n";
  switch (s.controller.kind) {
    case ControllerKind::dcvoc: {
      const auto& p = s.controller.dcvoc;
      os << "kp = " << fmt(p.kp) << "\nkplli = " << fmt(p.kplli)
         << "\nphi = " << fmt(p.phi) << "\np_ref = " << fmt(p.p_ref)
         << "\nq_ref = " << fmt(p.q_ref) << "\ni_ref = " << fmt(p.i_ref)
         << "\ni_max = " << fmt(p.i_max) << "\nomega0_hz = " << fmt(p.omega0 / kTwoPi)
         << "\n";
      break;
    }
    case ControllerKind::gfl: {
      const auto& p = s.controller.gfl;
      os << "kpllp = " << fmt(p.kpllp) << "\nkplli = " << fmt(p.kplli)
         << "\nkpp = " << fmt(p.kpp) << "\nkpi = " << fmt(p.kpi)
         << "\np_ref = " << fmt(p.p_ref) << "\ni_max = " << fmt(p.i_max)
         << "\nomega0_hz = " << fmt(p.omega0 / kTwoPi) << "\n";
      break;
    }
    case ControllerKind::dvoc: {
      const auto& p = s.controller.dvoc;
      os << "kp = " << fmt(p.kp) << "\nkv = " << fmt(p.kv) << "\nphi = " << fmt(p.phi)
         << "\np_ref = " << fmt(p.p_ref) << "\nq_ref = " << fmt(p.q_ref)
         << "\nu_ref = " << fmt(p.u_ref) << "\nomega0_hz = " << fmt(p.omega0 / kTwoPi)
         << "\n";
      break;
    }
    case ControllerKind::droop: {
      const auto& p = s.controller.droop;
      os << "kp = " << fmt(p.kp) << "\nkv = " << fmt(p.kv)
         << "\np_ref = " << fmt(p.p_ref) << "\nq_ref = " << fmt(p.q_ref)
         << "\nu_ref = " << fmt(p.u_ref) << "\nomega0_hz = " << fmt(p.omega0 / kTwoPi)
         << "\n";
      break;
    }
  }

  os << "\n[grid]\n";
  os << "ug = " << fmt(s.grid.ug_nominal) << "\nrg = " << fmt(s.grid.rg)
     << "\nlg = " << fmt(s.grid.lg)
     << "\nomega_g_hz = " << fmt(s.grid.omega_g / kTwoPi) << "\n";

  if (!s.grid.events.empty()) {
    os << "\n[events]\n";
    for (const auto& e : s.grid.events) {
      os << "event = " << fmt(e.t_start) << ' ' << fmt(e.t_end) << ' '
         << fmt(e.ug_during) << "\n";
    }
  }

  if (s.lvrt) {
    os << "\n[lvrt]\nenabled = true\n";
    os << "u_threshold = " << fmt(s.lvrt->u_threshold) << "\nkl = " << fmt(s.lvrt->kl)
       << "\np_min = " << fmt(s.lvrt->p_min) << "\ni_max = " << fmt(s.lvrt->i_max)
       << "\nhysteresis = " << fmt(s.lvrt->hysteresis)
       << "\nu_floor = " << fmt(s.lvrt->u_floor)
       << "\nt_filter = " << fmt(s.lvrt->t_filter) << "\ncap_after_scaling = "
       << (s.lvrt->cap_after_scaling ? "true" : "false") << "\n";
  }

  os << "\n[sim]\n";
  os << "name = " << s.name << "\nt_end = " << fmt(s.t_end) << "\ndt = " << fmt(s.dt)
     << "\ncapture_stride = " << s.capture_stride << "\nseed = " << s.seed
     << "\nsaturation = " << (s.saturation_enabled ? "true" : "false")
     << "\ntrack_iref = " << (s.track_iref_to_refs ? "true" : "false")
     << "\nuse_time_base = ";
  double active_base = kDefaultOmegaBase;
  switch (s.controller.kind) {
    case ControllerKind::dcvoc: active_base = s.controller.dcvoc.omega_base; break;
    case ControllerKind::gfl: active_base = s.controller.gfl.omega_base; break;
    case ControllerKind::dvoc: active_base = s.controller.dvoc.omega_base; break;
    case ControllerKind::droop: active_base = s.controller.droop.omega_base; break;
  }
  os << (active_base != 1.0 ? "true" : "false") << "\n";
  if (!s.initial_from_equilibrium) {
    os << "initial = custom\ninitial_state = " << fmt(s.initial_state[0]) << ' '
       << fmt(s.initial_state[1]) << ' ' << fmt(s.initial_state[2]) << ' '
       << fmt(s.initial_state[3]) << "\n";
  }
  return os.str();
}

namespace {

std::string grid_block(int grid_case) {
  // Case 1: weak high-voltage line (SCR ~ 1.5); Case 2: strong low-voltage line.
  return grid_case == 1 ? "[grid]\nug = 1.0\nrg = 0.05\nlg = 0.65\n"
                        : "[grid]\nug = 1.0\nrg = 0.2\nlg = 0.25\n";
}

std::string sag_block(double sag) {
  std::ostringstream os;
  os << "[events]\nevent = 1.0 2.0 " << sag << "\n";
  return os.str();
}

std::string make_case(const std::string& name, const std::string& kind, int grid_case,
                      double sag) {
  std::ostringstream os;
  os << "[controller]\n";
  if (kind == "dcvoc") {
    os << "kind = dcvoc\nkp = 20\nkplli = 20\nphi = pi/2\np_ref = 1.0\n"
          "q_ref = 0.0\ni_ref = 1.0\ni_max = 1.2\n";
  } else {
    os << "kind = gfl\nkpllp = 1.0\nkplli = 10\nkpp = 0.5\nkpi = 20\n"
          "p_ref = 1.0\ni_max = 1.2\n";
  }
  os << "\n" << grid_block(grid_case) << "\n" << sag_block(sag) << "\n";
  if (kind == "dcvoc") {
    os << "[lvrt]\nenabled = true\nkl = 2.0\ni_max = 1.2\n";
    // The weak-grid nominal terminal voltage sits near 0.87 pu, so the ride-
    // through threshold moves below it to keep nominal operation out of LVRT.
    // The deep-sag fault state on this grid also needs a substantial active
    // share to settle, hence the raised p_min.
    if (grid_case == 1) {
      os << "u_threshold = 0.78\np_min = 1.0\n";
    } else {
      os << "p_min = auto\n";
    }
    os << "\n";
  }
  os << "[sim]\nname = " << name << "\nt_end = 3.0\ndt = 1e-4\ncapture_stride = 10\n";
  return os.str();
}

std::string make_dvoc_demo() {
  return "[controller]\nkind = dvoc\nkp = 20\nkv = 10\nphi = pi/2\n"
         "p_ref = 1.0\nq_ref = 0.0\nu_ref = 1.0\n\n" +
         grid_block(1) + "\n" + sag_block(0.8) +
         "\n[sim]\nname = dvoc_demo\nt_end = 3.0\ndt = 1e-4\ncapture_stride = 10\n";
}

}  // namespace

const std::vector<BundledScenario>& bundled_scenarios() {
  static const std::vector<BundledScenario> cases = [] {
    std::vector<BundledScenario> v;
    v.push_back({"case11_dcvoc", make_case("case11_dcvoc", "dcvoc", 1, 0.8)});
    v.push_back({"case12_dcvoc", make_case("case12_dcvoc", "dcvoc", 1, 0.2)});
    v.push_back({"case21_dcvoc", make_case("case21_dcvoc", "dcvoc", 2, 0.8)});
    v.push_back({"case22_dcvoc", make_case("case22_dcvoc", "dcvoc", 2, 0.2)});
    v.push_back({"case11_gfl", make_case("case11_gfl", "gfl", 1, 0.8)});
    v.push_back({"case12_gfl", make_case("case12_gfl", "gfl", 1, 0.2)});
    v.push_back({"case21_gfl", make_case("case21_gfl", "gfl", 2, 0.8)});
    v.push_back({"case22_gfl", make_case("case22_gfl", "gfl", 2, 0.2)});
    v.push_back({"dvoc_demo", make_dvoc_demo()});
    return v;
  }();
  return cases;
}

}  // namespace dcvoc
