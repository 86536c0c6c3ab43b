#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tankmpc/config.hpp"
#include "tankmpc/harness.hpp"
#include "tankmpc/param_id.hpp"
#include "tankmpc/qp.hpp"

namespace fs = std::filesystem;
using namespace tankmpc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitCheck = 3;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config, "INI config file");
  app->add_option("-s,--set", c.overrides, "override, section.key=value (repeatable)");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  apply_overrides(cfg, c.overrides);
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
  return f;
}

std::vector<ControllerKind> parse_controllers(const std::vector<std::string>& names) {
  std::vector<ControllerKind> out;
  for (const auto& n : names) out.push_back(parse_controller(n));
  return out;
}

void print_metrics(const std::string& label, const RunMetrics& m) {
  std::cout.precision(5);
  std::cout << label << ": final-day cost $" << m.cost << ", " << m.electrical_kwh << " kWh electric, "
            << m.cost_per_kwh << " $/kWh, " << m.cost_per_kwh_drawn << " $/kWh drawn, draw p10/p90 "
            << units::kelvin_to_fahrenheit(m.draw_temp_p10) << "/" << units::kelvin_to_fahrenheit(m.draw_temp_p90)
            << " F";
  if (m.solver.calls > 0)
    std::cout << ", " << m.solver.calls << " solves (" << m.solver.non_optimal << " non-optimal, median "
              << m.solver.median_time << " s)";
  std::cout << '\n';
}

int run_simulate(const Common& common, const std::string& controller, const std::string& out_dir, bool check) {
  RunConfig cfg = resolve(common);
  if (!controller.empty()) cfg.controller = parse_controller(controller);
  const RunResult r = run_closed_loop(cfg);
  const fs::path dir(out_dir);
  if (!r.trajectory.empty()) {
    auto f = open_out(dir / "trajectory.csv");
    write_trajectory_csv(r.trajectory, f);
  }
  {
    auto f = open_out(dir / "metrics.csv");
    write_metrics_csv_header(f);
    write_metrics_csv_row(to_string(cfg.controller), r.metrics, f);
  }
  {
    auto f = open_out(dir / "diagnostics.json");
    write_diagnostics_json(r, f);
  }
  print_metrics(to_string(cfg.controller), r.metrics);
  if (!check) return kExitOk;
  bool ok = true;
  if (r.audit.closure_error() > 0.01) {
    std::cerr << "check failed: energy balance closes to " << r.audit.closure_error() << " (> 1%)\n";
    ok = false;
  }
  if (r.metrics.solver.non_optimal > 0) {
    std::cerr << "check failed: " << r.metrics.solver.non_optimal << " non-optimal QP solves\n";
    ok = false;
  }
  if (r.metrics.solver.calls > 0 && r.metrics.solver.median_time > 1.0) {
    std::cerr << "check failed: median solve time " << r.metrics.solver.median_time << " s (> 1 s)\n";
    ok = false;
  }
  return ok ? kExitOk : kExitCheck;
}

int run_identify(const Common& common, const std::string& model, const std::string& log, const std::string& collect,
                 double dt_bar, const std::string& out_dir, bool check) {
  const RunConfig cfg = resolve(common);
  const bool three = model == "three-node";
  if (!three && model != "one-node") throw ConfigError("--model must be one-node or three-node");
  IdDataset raw;
  if (!log.empty()) {
    std::ifstream f(log);
    if (!f) throw ConfigError("cannot open log '" + log + "'");
    raw = segment_log(read_trajectory_csv(f, cfg.ambient.t_ambient));
  } else {
    IdProtocol proto;
    proto.cold_temp = cfg.ambient.t_inlet;
    proto.both_elements = three;
    if (collect == "stratified") proto.initial = IdInitialCondition::stratified;
    else if (collect != "well-mixed") throw ConfigError("--collect must be well-mixed or stratified");
    raw = collect_id_data(cfg.tank, cfg.ambient, cfg.sim.params(cfg.tank), proto);
  }
  const IdDataset data = resample(raw, dt_bar);
  const RegressionSystem sys = three ? build_regression_three_node(data, dt_bar, cfg.tank.total_volume)
                                     : build_regression_one_node(data, dt_bar);
  OlsResult r = ols_solve(sys);
  check_plausibility(r, cfg.tank.total_volume);
  const fs::path dir(out_dir);
  {
    auto f = open_out(dir / "params.ini");
    if (three) write_params_section(to_three_node_params(r, cfg.tank.total_volume), f);
    else write_params_section(to_one_node_params(r), f);
  }
  {
    auto f = open_out(dir / "identify.json");
    write_id_report_json(r, model, f);
  }
  std::cout.precision(6);
  for (std::size_t i = 0; i < r.theta.size(); ++i) std::cout << r.labels[i] << " = " << r.theta[i] << '\n';
  std::cout << "condition number " << r.condition_number << ", " << r.pairs << " sample pairs\n";
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  return check && !r.warnings.empty() ? kExitCheck : kExitOk;
}

int run_sweep(const Common& common, const std::string& axis, std::vector<double> values,
              const std::vector<std::string>& controllers, unsigned workers, const std::string& out, bool check) {
  const RunConfig cfg = resolve(common);
  SweepSpec spec;
  spec.axis = parse_axis(axis);
  if (values.empty()) {
    if (spec.axis == SweepAxis::daily_volume) values = default_volume_points();
    else if (spec.axis == SweepAxis::alpha) values = default_alpha_points();
    else throw ConfigError("--values is required for the lambda axis");
  }
  spec.values = values;
  spec.controllers = parse_controllers(controllers);
  spec.workers = workers;
  const auto rows = sweep(cfg, spec);
  {
    auto f = open_out(out);
    write_sweep_csv(rows, f);
  }
  int failed = 0;
  for (const auto& r : rows) {
    if (!r.ok) {
      ++failed;
      std::cerr << to_string(r.controller) << " at " << r.value << ": " << r.error << '\n';
      continue;
    }
    std::ostringstream label;
    label << to_string(r.controller) << " @ " << to_string(r.axis) << '=' << r.value;
    print_metrics(label.str(), r.metrics);
  }
  if (failed > 0) return check ? kExitCheck : kExitRuntime;
  return kExitOk;
}

int run_calibrate(const Common& common, const CalibrationTarget& target, bool check) {
  const RunConfig cfg = resolve(common);
  const CalibrationResult r = calibrate_sim(cfg.tank, cfg.ambient, cfg.sim, target);
  std::cout.precision(8);
  std::cout << "[sim]\ntotal_ua_w_per_k = " << r.total_ua << "\nk_axial_w_per_k = " << r.k_axial << '\n';
  std::cerr << "spread ratio " << r.achieved_ratio << " after " << target.after / 3600.0 << " h, " << r.iterations
            << " bisection steps\n";
  if (check && std::abs(r.k_axial - SimParams::kDefaultKAxial) > 1e-3 * std::max(r.k_axial, 1e-9)) {
    std::cerr << "check failed: calibrated k_axial differs from the built-in default " << SimParams::kDefaultKAxial
              << '\n';
    return kExitCheck;
  }
  return kExitOk;
}

int run_dump_qp(const Common& common, const std::string& controller, double time_h, double temp_f,
                const std::string& out, bool solve) {
  const RunConfig cfg = resolve(common);
  const ControllerKind kind = parse_controller(controller);
  const double t0 = units::hours_to_seconds(time_h);
  const double temp = units::fahrenheit_to_kelvin(temp_f);
  MpcInputs inputs{make_forecast(cfg.profile(), cfg.forecast, t0, cfg.mpc.n_intervals, cfg.mpc.dt),
                   cfg.prices.price_vector(t0, cfg.mpc.n_intervals, cfg.mpc.dt), cfg.ambient};
  MpcQp mq = [&] {
    if (kind == ControllerKind::one_node_mpc)
      return build_one_node_qp(OneNodeModel(cfg.one_node, cfg.mpc.dt_bar()), temp,
                               cfg.tank.p_bar_lower * cfg.one_node_power_scale, inputs, cfg.mpc);
    if (kind == ControllerKind::three_node_mpc)
      return build_three_node_qp(ThreeNodeModel(cfg.three_node, cfg.mpc.dt_bar()), {temp, temp, temp},
                                 cfg.tank.p_bar_lower, cfg.tank.p_bar_upper, inputs, cfg.mpc);
    throw ConfigError("dump-qp needs an MPC controller (one-node or three-node)");
  }();
  if (out == "-") {
    write_qp(mq.qp, std::cout);
  } else {
    auto f = open_out(out);
    write_qp(mq.qp, f);
  }
  const auto& qp = mq.qp;
  std::cerr << qp.num_vars() << " variables, " << qp.a_eq.rows() << " equalities, " << qp.g_in.rows()
            << " inequalities\n";
  if (solve) {
    const QpSolution s = solve_qp(qp, cfg.mpc.solver);
    std::cerr << "status " << to_string(s.status) << ", objective " << s.objective << ", " << s.iterations
              << " iterations, " << s.solve_time << " s\n";
    if (s.status != QpStatus::optimal) return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stratified water heater MPC testbed"};
  app.require_subcommand(1);

  Common common;
  bool check = false;
  std::string controller, out_dir = ".";
  auto* sim = app.add_subcommand("simulate", "run one closed-loop simulation");
  add_common(sim, common);
  sim->add_option("--controller", controller, "thermostat, one-node or three-node (overrides run.controller)");
  sim->add_option("-o,--out-dir", out_dir, "directory for trajectory.csv, metrics.csv, diagnostics.json");
  sim->add_flag("--check", check, "exit 3 unless energy closes, every solve is optimal and solves are fast");

  std::string model = "one-node", log, collect = "well-mixed";
  double dt_bar = 300.0;
  auto* ident = app.add_subcommand("identify", "least-squares parameter identification");
  add_common(ident, common);
  ident->add_option("--model", model, "one-node or three-node")->check(CLI::IsMember({"one-node", "three-node"}));
  auto* log_opt = ident->add_option("--log", log, "trajectory.csv logged at the simulator step");
  ident->add_option("--collect", collect, "simulate the two-regime protocol instead: well-mixed or stratified")
      ->excludes(log_opt);
  ident->add_option("--dt-bar", dt_bar, "sample spacing of the regression, s");
  ident->add_option("-o,--out-dir", out_dir, "directory for params.ini and identify.json");
  ident->add_flag("--check", check, "exit 3 when the estimates fail the plausibility gate");

  std::string axis = "daily-volume", sweep_out = "sweep.csv";
  std::vector<double> values;
  std::vector<std::string> controllers = {"thermostat", "one-node", "three-node"};
  unsigned workers = 0;
  auto* sw = app.add_subcommand("sweep", "run a grid of closed-loop simulations");
  add_common(sw, common);
  sw->add_option("--axis", axis, "daily-volume, alpha or lambda");
  sw->add_option("--values", values, "points on the axis (defaults per axis)");
  sw->add_option("--controllers", controllers, "controllers to run")->expected(0, -1);
  sw->add_option("-j,--workers", workers, "parallel runs (0 = hardware threads)");
  sw->add_option("-o,--out", sweep_out, "output CSV");
  sw->add_flag("--check", check, "exit 3 if any run failed");

  CalibrationTarget target;
  double hot_f = units::kelvin_to_fahrenheit(target.hot_temp), hours = target.after / 3600.0;
  auto* cal = app.add_subcommand("calibrate-sim", "fit the simulator's axial conduction to a destratification target");
  add_common(cal, common);
  cal->add_option("--ua", target.total_ua, "whole-tank jacket conductance, W/K");
  cal->add_option("--ratio", target.spread_ratio, "sensor 6 - sensor 1 spread remaining after the rest period");
  cal->add_option("--hours", hours, "rest period, h");
  cal->add_option("--hot-f", hot_f, "initial temperature of the hot upper half, F");
  cal->add_flag("--check", check, "exit 3 unless the result matches the built-in default");

  std::string qp_controller = "three-node", qp_out = "-";
  double time_h = 12.0, temp_f = 120.0;
  bool solve = false;
  auto* dump = app.add_subcommand("dump-qp", "write one MPC problem in the plain-text QP format");
  add_common(dump, common);
  dump->add_option("--controller", qp_controller, "one-node or three-node");
  dump->add_option("--time-h", time_h, "time of day of the solve, h");
  dump->add_option("--temp-f", temp_f, "uniform initial model temperature, F");
  dump->add_option("-o,--out", qp_out, "output file, - for stdout");
  dump->add_flag("--solve", solve, "also solve it and report the status");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (sim->parsed()) return run_simulate(common, controller, out_dir, check);
    if (ident->parsed()) return run_identify(common, model, log, collect, dt_bar, out_dir, check);
    if (sw->parsed()) return run_sweep(common, axis, values, controllers, workers, sweep_out, check);
    if (cal->parsed()) {
      target.hot_temp = units::fahrenheit_to_kelvin(hot_f);
      target.after = units::hours_to_seconds(hours);
      return run_calibrate(common, target, check);
    }
    if (dump->parsed()) return run_dump_qp(common, qp_controller, time_h, temp_f, qp_out, solve);
  } catch (const InputError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
