#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "dcvoc/config.hpp"

namespace fs = std::filesystem;
using namespace dcvoc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitCertificateFailed = 2;

struct LvrtCompliance {
  bool evaluated{false};
  double t{0.0};
  double q_measured{0.0};
  double q_target{0.0};
  double rel_error{0.0};
};

/// Steady fault-state reactive support: measured q against the scheduled
/// q_ref after the u^2 scaling of the steady-power relation.
LvrtCompliance lvrt_compliance(const TimeSeries& series) {
  LvrtCompliance c;
  for (const Sample& s : series.samples) {
    if (!s.in_lvrt || s.q_ref_active == 0.0) continue;
    c.evaluated = true;
    c.t = s.t;
    c.q_measured = s.q;
    c.q_target = s.u.squaredNorm() * s.q_ref_active;
    c.rel_error = std::abs(c.q_measured - c.q_target) / std::abs(c.q_target);
  }
  return c;
}

std::string stability_block(const DcvocParams& params, const GridModel& grid) {
  const StabilityReport r = check_stability_condition(params, grid);
  std::ostringstream os;
  os << std::setprecision(12);
  os << "eq11_lhs = " << r.eq11_lhs << "\n";
  os << "eq11_rhs = " << r.eq11_rhs << "\n";
  os << "eq11_margin = " << r.eq11_margin << "\n";
  os << "eq14_margin = " << r.eq14_margin << "\n";
  os << "epsilon = " << r.epsilon << "\n";
  os << "equilibrium_exists = " << (r.equilibrium_exists ? "true" : "false") << "\n";
  os << "condition_holds = " << (r.condition_holds ? "true" : "false") << "\n";
  return os.str();
}

void write_report(std::ostream& os, const Scenario& scenario,
                  const RunOutcome& outcome) {
  os << std::setprecision(12);
  os << "scenario = " << scenario.name << "\n";
  os << "controller = " << to_string(scenario.controller.kind) << "\n";
  os << "classification = " << to_string(outcome.classification) << "\n";
  os << "settle_time = " << outcome.settle_time << "\n";
  if (scenario.controller.kind == ControllerKind::dcvoc) {
    os << stability_block(scenario.controller.dcvoc, scenario.grid);
    try {
      const EquilibriumResult eq = solve_equilibrium(
          scenario.controller.dcvoc, scenario.grid, scenario.grid.ug_nominal);
      os << "i_s = " << eq.i_s.x() << " " << eq.i_s.y() << "\n";
      os << "u_s = " << eq.u_s.x() << " " << eq.u_s.y() << "\n";
      os << "p_s = " << eq.p_s << "\n";
      os << "q_s = " << eq.q_s << "\n";
      os << "i_mag_s = " << eq.i_mag_s << "\n";
    } catch (const NoEquilibriumError&) {
      os << "equilibrium = none\n";
    }
    const LvrtCompliance c = lvrt_compliance(outcome.series);
    if (c.evaluated) {
      os << "lvrt_q_measured = " << c.q_measured << "\n";
      os << "lvrt_q_target = " << c.q_target << "\n";
      os << "lvrt_q_rel_error = " << c.rel_error << "\n";
    }
  }
}

void write_plotdata(std::ostream& os, const TimeSeries& series) {
  const std::size_t target_rows = 300;
  const std::size_t stride = std::max<std::size_t>(1, series.samples.size() / target_rows);
  os << std::setprecision(9);
  os << "t p q u_mag\n";
  for (std::size_t k = 0; k < series.samples.size(); k += stride) {
    const Sample& s = series.samples[k];
    os << s.t << ' ' << s.p << ' ' << s.q << ' ' << s.u.norm() << '\n';
  }
}

void write_outputs(const fs::path& out_dir, const Scenario& scenario,
                   const RunOutcome& outcome) {
  fs::create_directories(out_dir);
  {
    std::ofstream csv(out_dir / (scenario.name + ".csv"));
    if (!csv) throw std::runtime_error("cannot write to " + out_dir.string());
    outcome.series.write_csv(csv, scenario);
  }
  {
    std::ofstream report(out_dir / (scenario.name + ".report.txt"));
    write_report(report, scenario, outcome);
  }
  {
    std::ofstream plot(out_dir / (scenario.name + ".plotdata"));
    write_plotdata(plot, outcome.series);
  }
}

int cmd_run(const std::string& config_path, const std::string& out_dir) {
  const Scenario scenario = load_scenario(config_path);
  const RunOutcome outcome = simulate(scenario);
  write_outputs(out_dir, scenario, outcome);
  std::cout << scenario.name << ": " << to_string(outcome.classification) << "\n";
  return kExitOk;
}

int cmd_certify(const std::string& config_path) {
  const Scenario scenario = load_scenario(config_path);
  if (scenario.controller.kind != ControllerKind::dcvoc) {
    std::cerr << "certify: only dcvoc configs carry the certificate\n";
    return kExitError;
  }
  std::cout << stability_block(scenario.controller.dcvoc, scenario.grid);
  const StabilityReport r =
      check_stability_condition(scenario.controller.dcvoc, scenario.grid);
  return r.condition_holds ? kExitOk : kExitCertificateFailed;
}

int cmd_campaign(const std::string& out_dir) {
  std::vector<Scenario> scenarios;
  for (const BundledScenario& b : bundled_scenarios()) {
    scenarios.push_back(parse_scenario(b.config_text));
  }
  for (const Scenario& s : scenarios) {
    if (s.controller.kind != ControllerKind::dcvoc) continue;
    const StabilityReport r = check_stability_condition(s.controller.dcvoc, s.grid);
    if (!r.condition_holds) {
      std::cerr << "campaign: bundled scenario " << s.name
                << " fails its own stability certificate\n";
      return kExitError;
    }
  }

  std::vector<RunOutcome> outcomes(scenarios.size());
  std::atomic<std::size_t> next{0};
  std::mutex io_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= scenarios.size()) return;
      try {
        outcomes[k] = simulate(scenarios[k]);
        write_outputs(out_dir, scenarios[k], outcomes[k]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(io_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned n_workers =
      std::min<unsigned>(worker_count(), static_cast<unsigned>(scenarios.size()));
  for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  fs::create_directories(out_dir);
  std::ofstream csv(fs::path(out_dir) / "campaign_summary.csv");
  std::ofstream txt(fs::path(out_dir) / "campaign_summary.txt");
  csv << "scenario,controller,classification,settle_time\n";
  txt << std::left << std::setw(16) << "scenario" << std::setw(12) << "controller"
      << std::setw(18) << "classification" << "settle_time\n";
  for (std::size_t k = 0; k < scenarios.size(); ++k) {
    csv << scenarios[k].name << ',' << to_string(scenarios[k].controller.kind) << ','
        << to_string(outcomes[k].classification) << ','
        << outcomes[k].settle_time << '\n';
    txt << std::left << std::setw(16) << scenarios[k].name << std::setw(12)
        << to_string(scenarios[k].controller.kind) << std::setw(18)
        << to_string(outcomes[k].classification) << outcomes[k].settle_time << '\n';
    std::cout << scenarios[k].name << ": "
              << to_string(outcomes[k].classification) << '\n';
  }
  return kExitOk;
}

int cmd_roa(const std::string& config_path, std::size_t n, double radius,
            std::uint64_t seed, const std::string& out_dir) {
  const Scenario scenario = load_scenario(config_path);
  if (scenario.controller.kind != ControllerKind::dcvoc) {
    std::cerr << "roa: only dcvoc configs are supported\n";
    return kExitError;
  }
  const RoaResult result =
      roa_sample(scenario.controller.dcvoc, scenario.grid, n, radius, seed);

  fs::create_directories(out_dir);
  std::ofstream csv(fs::path(out_dir) / (scenario.name + ".roa.csv"));
  csv << std::setprecision(17);
  csv << "index,i_alpha0,i_beta0,omega_delta0,converged,t_converged\n";
  for (const RoaSampleOutcome& o : result.outcomes) {
    csv << o.index << ',' << o.i0.x() << ',' << o.i0.y() << ',' << o.omega_delta0
        << ',' << (o.converged ? 1 : 0) << ',' << o.t_converged << '\n';
  }

  std::cout << std::setprecision(4);
  std::cout << "fraction_converged = " << result.fraction_converged << "\n";
  std::cout << "n_converged = " << result.n_converged << " / " << n << "\n";
  std::cout << "worst_index = " << result.worst_index << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dCVOC grid-following converter simulation and stability toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  std::size_t roa_n = 200;
  double roa_radius = 2.0;
  std::uint64_t roa_seed = 1;

  CLI::App* run = app.add_subcommand("run", "Simulate one scenario config");
  run->add_option("config", config_path, "Scenario config file")->required();
  run->add_option("-o,--out", out_dir, "Output directory");

  CLI::App* certify =
      app.add_subcommand("certify", "Evaluate the stability certificate");
  certify->add_option("config", config_path, "Scenario config file")->required();

  CLI::App* campaign =
      app.add_subcommand("campaign", "Run the bundled fault-ride-through campaign");
  campaign->add_option("-o,--out", out_dir, "Output directory");

  CLI::App* roa = app.add_subcommand("roa", "Sample the region of attraction");
  roa->add_option("config", config_path, "Scenario config file")->required();
  roa->add_option("-n,--samples", roa_n, "Number of initial conditions")
      ->check(CLI::PositiveNumber);
  roa->add_option("-r,--radius", roa_radius, "Sampling radius (pu)")
      ->check(CLI::PositiveNumber);
  roa->add_option("--seed", roa_seed, "RNG seed");
  roa->add_option("-o,--out", out_dir, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, out_dir);
    if (certify->parsed()) return cmd_certify(config_path);
    if (campaign->parsed()) return cmd_campaign(out_dir);
    if (roa->parsed()) return cmd_roa(config_path, roa_n, roa_radius, roa_seed, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
