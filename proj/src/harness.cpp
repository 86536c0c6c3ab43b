#include "tankmpc/harness.hpp"

#include <algorithm>
#include <limits>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include <json.hpp>

namespace tankmpc {

std::string to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::thermostat:
      return "thermostat";
    case ControllerKind::one_node_mpc:
      return "one-node";
    case ControllerKind::three_node_mpc:
      return "three-node";
  }
  return "unknown";
}

ControllerKind parse_controller(const std::string& name) {
  if (name == "thermostat") return ControllerKind::thermostat;
  if (name == "one-node" || name == "one_node" || name == "1node") return ControllerKind::one_node_mpc;
  if (name == "three-node" || name == "three_node" || name == "3node") return ControllerKind::three_node_mpc;
  throw InputError("unknown controller '" + name + "' (thermostat, one-node, three-node)");
}

void RunConfig::validate() const {
  tank.validate();
  ambient.validate();
  one_node.validate();
  three_node.validate();
  mpc.validate();
  forecast.validate();
  if (days < 1) throw InputError("run duration must be at least one day");
  if (!(one_node_power_scale > 0.0)) throw InputError("one-node power scale must be positive");
  if (!(thermostat_period > 0.0)) throw InputError("thermostat period must be positive");
  if (log_interval < 0.0) throw InputError("log interval must be non-negative");
  const SimParams sp = sim.params(tank);
  auto multiple_of_dt = [&](double period) {
    const double r = period / sp.sim_dt;
    return std::abs(r - std::round(r)) < 1e-9 && r >= 1.0;
  };
  if (!multiple_of_dt(mpc.dt)) throw InputError("MPC interval must be a multiple of sim_dt");
  if (!multiple_of_dt(thermostat_period)) throw InputError("thermostat period must be a multiple of sim_dt");
  if (log_interval > 0.0 && !multiple_of_dt(log_interval)) throw InputError("log interval must be a multiple of sim_dt");
}

double EnergyAudit::closure_error() const {
  const double imbalance = electrical + inlet_enthalpy - outlet_enthalpy - ambient_loss - internal_change;
  return std::abs(imbalance) / std::max(electrical, 1.0);
}

double compute_embodied_energy(std::span<const DrawSample> draws, double t_inlet) {
  double joules = 0.0;
  for (const auto& d : draws) joules += PhysicalConstants::volumetric_heat_capacity * d.volume * (d.outlet_temp - t_inlet);
  return units::joules_to_kwh(joules);
}

double weighted_percentile(std::span<const DrawSample> draws, double q) {
  std::vector<DrawSample> sorted;
  sorted.reserve(draws.size());
  for (const auto& d : draws) {
    if (d.volume > 0.0) sorted.push_back(d);
  }
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(sorted.begin(), sorted.end(),
            [](const DrawSample& a, const DrawSample& b) { return a.outlet_temp < b.outlet_temp; });
  const double total = std::accumulate(sorted.begin(), sorted.end(), 0.0,
                                       [](double acc, const DrawSample& d) { return acc + d.volume; });
  double cum = 0.0;
  for (const auto& d : sorted) {
    cum += d.volume;
    if (cum >= q * total) return d.outlet_temp;
  }
  return sorted.back().outlet_temp;
}

std::unique_ptr<Controller> make_controller(const RunConfig& cfg) {
  switch (cfg.controller) {
    case ControllerKind::thermostat: {
      ThermostatState st;
      st.t_low = cfg.mpc.t_low;
      st.t_high = cfg.mpc.t_high;
      st.update_period = cfg.thermostat_period;
      return std::make_unique<ThermostatController>(st, cfg.tank.p_bar_lower, cfg.tank.p_bar_upper);
    }
    case ControllerKind::one_node_mpc:
      return std::make_unique<OneNodeMpcController>(cfg.mpc, cfg.one_node, cfg.ambient,
                                                    cfg.tank.p_bar_lower * cfg.one_node_power_scale,
                                                    cfg.tank.p_bar_upper, cfg.one_node_sensing);
    case ControllerKind::three_node_mpc:
      return std::make_unique<ThreeNodeMpcController>(cfg.mpc, cfg.three_node, cfg.ambient, cfg.tank.p_bar_lower,
                                                      cfg.tank.p_bar_upper);
  }
  throw InputError("unknown controller");
}

namespace {

SolveStats solve_stats(const std::vector<MpcDiagnostics>& diag) {
  SolveStats s;
  s.calls = static_cast<int>(diag.size());
  if (diag.empty()) return s;
  std::vector<double> times;
  double iters = 0.0;
  for (const auto& d : diag) {
    times.push_back(d.solve_time);
    iters += d.iterations;
    if (d.status != QpStatus::optimal) ++s.non_optimal;
    if (d.fallback) ++s.fallbacks;
    s.max_primal_residual = std::max(s.max_primal_residual, d.primal_residual);
    s.max_dual_residual = std::max(s.max_dual_residual, d.dual_residual);
    s.max_complementarity = std::max(s.max_complementarity, d.complementarity);
  }
  std::sort(times.begin(), times.end());
  const std::size_t n = times.size();
  s.median_time = n % 2 == 1 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
  s.mean_time = std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(n);
  s.max_time = times.back();
  s.mean_iterations = iters / static_cast<double>(n);
  return s;
}

}  // namespace

RunResult run_closed_loop(const RunConfig& cfg) {
  const auto wall0 = std::chrono::steady_clock::now();
  cfg.validate();
  const SimParams sp = cfg.sim.params(cfg.tank);
  const DrawProfile profile = cfg.profile();
  std::unique_ptr<Controller> ctrl = make_controller(cfg);

  const double dt = sp.sim_dt;
  const long steps_total = std::lround(units::days_to_seconds(cfg.days) / dt);
  const long period_steps = std::lround(ctrl->update_period() / dt);
  const long metrics_start = std::lround(units::days_to_seconds(cfg.days - 1) / dt);
  const long log_steps = cfg.log_interval > 0.0 ? std::lround(cfg.log_interval / dt) : 0;
  const double p_bar_lower =
      cfg.controller == ControllerKind::one_node_mpc ? cfg.tank.p_bar_lower * cfg.one_node_power_scale : cfg.tank.p_bar_lower;
  const double p_bar_upper = cfg.tank.p_bar_upper;

  TankSimState state = initial_state_above_lower_element(cfg.init_temp, cfg.ambient.t_inlet, sp);
  const double initial_energy = thermal_energy(state, sp);

  RunResult result;
  EnergyAudit& audit = result.audit;
  RunMetrics& m = result.metrics;
  std::vector<DrawSample> draws;
  double cumulative_volume = 0.0, cumulative_cost = 0.0;

  ControlCommand cmd;
  OnOffSchedule sched_lower, sched_upper;
  bool pulsed = false;
  long period_start = 0;
  ControllerInput in;

  for (long k = 0; k < steps_total; ++k) {
    const double t = static_cast<double>(k) * dt;
    if (k % period_steps == 0) {
      in.time = t;
      in.sensors = read_sensors(state, cfg.tank);
      if (ctrl->uses_forecast()) {
        in.flow_forecast = make_forecast(profile, cfg.forecast, t, cfg.mpc.n_intervals, cfg.mpc.dt);
        in.prices = cfg.prices.price_vector(t, cfg.mpc.n_intervals, cfg.mpc.dt);
      }
      cmd = ctrl->step(in);
      period_start = k;
      pulsed = cmd.mode == ActuationMode::continuous && cfg.actuation == ActuationMode::on_off;
      if (pulsed) {
        const double period = ctrl->update_period();
        sched_lower = to_on_off(std::min(cmd.p_lower, p_bar_lower), p_bar_lower, period, dt);
        sched_upper = to_on_off(std::min(cmd.p_upper, p_bar_upper), p_bar_upper, period, dt);
      }
    }
    double p_lower = cmd.p_lower, p_upper = cmd.p_upper;
    if (pulsed) {
      p_lower = sched_lower.power_at(k - period_start);
      p_upper = sched_upper.power_at(k - period_start);
    }
    const double flow = profile.mean_flow(t, t + dt);
    StepResult r = sim_step_audited(state, p_lower, p_upper, flow, cfg.ambient, sp);

    audit.electrical += r.audit.electrical;
    audit.inlet_enthalpy += r.audit.inlet_enthalpy;
    audit.outlet_enthalpy += r.audit.outlet_enthalpy;
    audit.ambient_loss += r.audit.ambient_loss;

    const double price = cfg.prices.price_at(t);
    const double step_kwh = units::joules_to_kwh(r.audit.electrical);
    cumulative_volume += r.audit.drawn_volume;
    cumulative_cost += price * step_kwh;
    if (k >= metrics_start) {
      m.electrical_kwh += step_kwh;
      m.cost += price * step_kwh;
      (cfg.prices.is_peak(t) ? m.peak_kwh : m.offpeak_kwh) += step_kwh;
      if (r.audit.drawn_volume > 0.0) draws.push_back({r.audit.drawn_volume, r.audit.outlet_temp});
    }
    state = std::move(r.state);

    if (log_steps > 0 && (k + 1) % log_steps == 0) {
      TrajectoryRow row;
      row.time = state.time;
      row.node_temps = state.node_temps;
      row.sensors = read_sensors(state, cfg.tank);
      row.p_lower = p_lower;
      row.p_upper = p_upper;
      row.flow = flow;
      row.cumulative_volume = cumulative_volume;
      row.cumulative_cost = cumulative_cost;
      result.trajectory.push_back(std::move(row));
    }
  }

  audit.internal_change = thermal_energy(state, sp) - initial_energy;
  m.embodied_kwh = compute_embodied_energy(draws, cfg.ambient.t_inlet);
  m.cost_per_kwh = m.electrical_kwh > 0.0 ? m.cost / m.electrical_kwh : 0.0;
  m.cost_per_kwh_drawn = m.embodied_kwh > 0.0 ? m.cost / m.embodied_kwh : 0.0;
  for (const auto& d : draws) {
    m.drawn_volume += d.volume;
    m.draw_temp_mean += d.volume * d.outlet_temp;
  }
  if (m.drawn_volume > 0.0) m.draw_temp_mean /= m.drawn_volume;
  m.draw_temp_p10 = weighted_percentile(draws, 0.1);
  m.draw_temp_p90 = weighted_percentile(draws, 0.9);
  result.diagnostics = ctrl->diagnostics();
  m.solver = solve_stats(result.diagnostics);
  result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return result;
}

void write_trajectory_csv(const std::vector<TrajectoryRow>& rows, std::ostream& os) {
  os.precision(10);
  os << "time_s";
  const std::size_t nodes = rows.empty() ? 0 : rows.front().node_temps.size();
  for (std::size_t k = 0; k < nodes; ++k) os << ",node" << k << "_k";
  for (std::size_t s = 1; s <= TankSpec::kSensorCount; ++s) os << ",sensor" << s << "_k";
  os << ",p_lower_w,p_upper_w,flow_m3_per_s,cumulative_volume_m3,cumulative_cost_usd\n";
  for (const auto& r : rows) {
    os << r.time;
    for (double t : r.node_temps) os << ',' << t;
    for (double t : r.sensors) os << ',' << t;
    os << ',' << r.p_lower << ',' << r.p_upper << ',' << r.flow << ',' << r.cumulative_volume << ','
       << r.cumulative_cost << '\n';
  }
}

void write_metrics_csv_header(std::ostream& os) {
  os << "label,electrical_kwh,embodied_kwh,cost_usd,cost_per_kwh,cost_per_kwh_drawn,draw_temp_mean_f,"
        "draw_temp_p10_f,draw_temp_p90_f,peak_kwh,offpeak_kwh,drawn_volume_gal,mpc_calls,non_optimal,"
        "fallbacks,median_solve_s,max_solve_s,max_primal_residual,max_dual_residual,max_complementarity\n";
}

void write_metrics_csv_row(const std::string& label, const RunMetrics& m, std::ostream& os) {
  os.precision(10);
  os << label << ',' << m.electrical_kwh << ',' << m.embodied_kwh << ',' << m.cost << ',' << m.cost_per_kwh << ','
     << m.cost_per_kwh_drawn << ',' << units::kelvin_to_fahrenheit(m.draw_temp_mean) << ','
     << units::kelvin_to_fahrenheit(m.draw_temp_p10) << ',' << units::kelvin_to_fahrenheit(m.draw_temp_p90) << ','
     << m.peak_kwh << ',' << m.offpeak_kwh << ',' << units::cubic_metres_to_gallons(m.drawn_volume) << ','
     << m.solver.calls << ',' << m.solver.non_optimal << ',' << m.solver.fallbacks << ',' << m.solver.median_time
     << ',' << m.solver.max_time << ',' << m.solver.max_primal_residual << ',' << m.solver.max_dual_residual << ','
     << m.solver.max_complementarity << '\n';
}

void write_diagnostics_json(const RunResult& result, std::ostream& os) {
  using nlohmann::json;
  json calls = json::array();
  for (const auto& d : result.diagnostics) {
    calls.push_back({{"time_s", d.time},
                     {"status", to_string(d.status)},
                     {"iterations", d.iterations},
                     {"solve_time_s", d.solve_time},
                     {"objective", d.objective},
                     {"primal_residual", d.primal_residual},
                     {"dual_residual", d.dual_residual},
                     {"complementarity", d.complementarity},
                     {"fallback", d.fallback},
                     {"initial_adjusted", d.initial_adjusted},
                     {"p_lower_w", d.p_lower},
                     {"p_upper_w", d.p_upper},
                     {"measured_k", d.measured},
                     {"predicted_next_k", d.predicted_next},
                     {"realized_next_k", d.realized_next}});
  }
  const auto& a = result.audit;
  json out = {{"energy_audit_j",
               {{"electrical", a.electrical},
                {"inlet_enthalpy", a.inlet_enthalpy},
                {"outlet_enthalpy", a.outlet_enthalpy},
                {"ambient_loss", a.ambient_loss},
                {"internal_change", a.internal_change},
                {"closure_error", a.closure_error()}}},
              {"wall_time_s", result.wall_time},
              {"mpc_calls", calls}};
  os << out.dump(2) << '\n';
}

std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::daily_volume:
      return "daily-volume";
    case SweepAxis::alpha:
      return "alpha";
    case SweepAxis::lambda:
      return "lambda";
  }
  return "unknown";
}

SweepAxis parse_axis(const std::string& name) {
  if (name == "daily-volume" || name == "volume") return SweepAxis::daily_volume;
  if (name == "alpha") return SweepAxis::alpha;
  if (name == "lambda") return SweepAxis::lambda;
  throw InputError("unknown sweep axis '" + name + "' (daily-volume, alpha, lambda)");
}

std::vector<double> default_volume_points() {
  std::vector<double> v;
  for (int k = 0; k < 8; ++k) v.push_back(28.8 + (72.0 - 28.8) * k / 7.0);
  return v;
}

std::vector<double> default_alpha_points() { return {0.3, 0.5, 0.7, 1.0, 1.3, 1.5, 1.7}; }

std::vector<SweepRow> sweep(const RunConfig& base, const SweepSpec& spec) {
  struct Task {
    double value;
    ControllerKind controller;
    std::vector<std::size_t> rows;  // output rows this run fills
  };
  std::vector<SweepRow> rows;
  std::vector<Task> tasks;
  for (ControllerKind c : spec.controllers) {
    const bool replicate = spec.axis == SweepAxis::alpha && c == ControllerKind::thermostat;
    std::optional<std::size_t> shared;
    for (double v : spec.values) {
      rows.push_back({spec.axis, v, c, false, {}, {}});
      if (replicate && shared) {
        tasks[*shared].rows.push_back(rows.size() - 1);
        continue;
      }
      tasks.push_back({v, c, {rows.size() - 1}});
      if (replicate) shared = tasks.size() - 1;
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  auto worker = [&]() {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const Task& task = tasks[i];
      RunConfig cfg = base;
      cfg.controller = task.controller;
      cfg.log_interval = 0.0;
      switch (spec.axis) {
        case SweepAxis::daily_volume:
          cfg.daily_volume = units::gallons_to_cubic_metres(task.value);
          break;
        case SweepAxis::alpha:
          cfg.forecast.alpha = task.value;
          break;
        case SweepAxis::lambda:
          cfg.mpc.lambda = task.value;
          break;
      }
      SweepRow filled{spec.axis, task.value, task.controller, false, {}, {}};
      try {
        filled.metrics = run_closed_loop(cfg).metrics;
        filled.ok = true;
      } catch (const std::exception& e) {
        filled.error = e.what();
      }
      std::lock_guard lock(mu);
      for (std::size_t r : task.rows) {
        const double value = rows[r].value;
        rows[r] = filled;
        rows[r].value = value;
      }
    }
  };
  unsigned n_workers = spec.workers != 0 ? spec.workers : std::max(1u, std::thread::hardware_concurrency());
  n_workers = std::min<unsigned>(n_workers, static_cast<unsigned>(std::max<std::size_t>(tasks.size(), 1)));
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& os) {
  os.precision(10);
  os << "axis,value,controller,ok,error,electrical_kwh,embodied_kwh,cost_usd,cost_per_kwh,cost_per_kwh_drawn,"
        "draw_temp_mean_f,draw_temp_p10_f,draw_temp_p90_f,peak_kwh,offpeak_kwh,mpc_calls,non_optimal,median_solve_s\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    os << to_string(r.axis) << ',' << r.value << ',' << to_string(r.controller) << ',' << (r.ok ? 1 : 0) << ','
       << err << ',' << m.electrical_kwh << ',' << m.embodied_kwh << ',' << m.cost << ',' << m.cost_per_kwh << ','
       << m.cost_per_kwh_drawn << ',' << units::kelvin_to_fahrenheit(m.draw_temp_mean) << ','
       << units::kelvin_to_fahrenheit(m.draw_temp_p10) << ',' << units::kelvin_to_fahrenheit(m.draw_temp_p90) << ','
       << m.peak_kwh << ',' << m.offpeak_kwh << ',' << m.solver.calls << ',' << m.solver.non_optimal << ','
       << m.solver.median_time << '\n';
  }
}

double destratification_ratio(const TankSpec& tank, const AmbientConditions& ambient, const SimParams& params,
                              double hot_temp, double after) {
  TankSimState s = uniform_state(ambient.t_inlet, params.n_nodes);
  for (std::size_t k = params.n_nodes / 2; k < params.n_nodes; ++k) s.node_temps[k] = hot_temp;
  auto spread = [&](const TankSimState& st) {
    const auto sensors = read_sensors(st, tank);
    return sensors[sensor_index(6)] - sensors[sensor_index(1)];
  };
  const double initial = spread(s);
  const long steps = std::lround(after / params.sim_dt);
  for (long k = 0; k < steps; ++k) s = sim_step(s, 0.0, 0.0, 0.0, ambient, params);
  return spread(s) / initial;
}

CalibrationResult calibrate_sim(const TankSpec& tank, const AmbientConditions& ambient, const SimSettings& sim,
                                const CalibrationTarget& target) {
  if (!(target.spread_ratio > 0.0 && target.spread_ratio < 1.0)) throw InputError("spread ratio must lie in (0, 1)");
  SimSettings trial = sim;
  trial.total_ua = target.total_ua;
  auto ratio_for = [&](double k) {
    trial.k_axial = k;
    return destratification_ratio(tank, ambient, trial.params(tank), target.hot_temp, target.after);
  };
  double lo = 0.0, hi = 1.0;
  if (ratio_for(lo) < target.spread_ratio) throw InputError("target unreachable: losses alone destratify too fast");
  while (ratio_for(hi) > target.spread_ratio) {
    hi *= 2.0;
    if (hi > 1e4) throw InputError("target unreachable within k_axial <= 1e4 W/K");
  }
  CalibrationResult res;
  res.total_ua = target.total_ua;
  for (res.iterations = 0; res.iterations < 60 && hi - lo > 1e-6 * hi; ++res.iterations) {
    const double mid = 0.5 * (lo + hi);
    (ratio_for(mid) > target.spread_ratio ? lo : hi) = mid;
  }
  res.k_axial = 0.5 * (lo + hi);
  res.achieved_ratio = ratio_for(res.k_axial);
  return res;
}

}  // namespace tankmpc
