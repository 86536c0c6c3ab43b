#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tankmpc/control_models.hpp"
#include "tankmpc/controllers.hpp"
#include "tankmpc/mpc_problem.hpp"
#include "tankmpc/scenario.hpp"
#include "tankmpc/tank_sim.hpp"
#include "tankmpc/units.hpp"

namespace tankmpc {

enum class ControllerKind { thermostat, one_node_mpc, three_node_mpc };
std::string to_string(ControllerKind k);
ControllerKind parse_controller(const std::string& name);

/// Tunables of the plant that are not part of the tank geometry.
struct SimSettings {
  std::size_t n_nodes = 20;
  double sim_dt = 1.0;
  double total_ua = SimParams::kDefaultTotalUa;
  double k_axial = SimParams::kDefaultKAxial;

  SimParams params(const TankSpec& tank) const {
    return SimParams::for_tank(tank, n_nodes, total_ua, k_axial, sim_dt);
  }
};

/// Two-level time-of-use tariff parameters; RunConfig::prices is built from these.
struct TouParams {
  double peak_price = 0.47;     // $/kWh
  double offpeak_price = 0.21;  // $/kWh
  double peak_start_h = 17.0;
  double peak_end_h = 20.0;
};

struct RunConfig {
  ControllerKind controller = ControllerKind::thermostat;
  TankSpec tank;
  AmbientConditions ambient;
  SimSettings sim;
  OneNodeParams one_node;
  ThreeNodeParams three_node;
  MpcConfig mpc;
  OneNodeSensing one_node_sensing = OneNodeSensing::lower_element_sensor;
  double one_node_power_scale = 1.0;  // multiplies the lower-element rating seen by the one-node MPC
  double thermostat_period = 30.0;    // s

  DrawProfile base_profile = DrawProfile::base();
  double daily_volume = units::gallons_to_cubic_metres(54.0);  // m^3
  TouParams tou;
  PriceSchedule prices = PriceSchedule::time_of_use();
  ForecastSpec forecast;

  int days = 3;
  double init_temp = units::fahrenheit_to_kelvin(120.0);  // K, nodes at and above the lower element
  double log_interval = 0.0;                              // s, 0 disables the trajectory log
  ActuationMode actuation = ActuationMode::on_off;

  void validate() const;
  /// Zero daily volume means no draws at all.
  DrawProfile profile() const {
    return daily_volume == 0.0 ? DrawProfile(std::vector<DrawEvent>{}) : scale_profile(base_profile, daily_volume);
  }
};

struct TrajectoryRow {
  double time = 0.0;
  std::vector<double> node_temps;
  std::vector<double> sensors;
  double p_lower = 0.0;
  double p_upper = 0.0;
  double flow = 0.0;
  double cumulative_volume = 0.0;  // m^3
  double cumulative_cost = 0.0;    // $
};

/// Whole-run energy audit, joules.
struct EnergyAudit {
  double electrical = 0.0;
  double inlet_enthalpy = 0.0;
  double outlet_enthalpy = 0.0;
  double ambient_loss = 0.0;
  double internal_change = 0.0;

  /// |in - out - change| relative to the electrical input.
  double closure_error() const;
};

struct SolveStats {
  int calls = 0;
  int non_optimal = 0;
  int fallbacks = 0;
  double median_time = 0.0;
  double mean_time = 0.0;
  double max_time = 0.0;
  double max_primal_residual = 0.0;
  double max_dual_residual = 0.0;
  double max_complementarity = 0.0;
  double mean_iterations = 0.0;
};

/// Final-day metrics. Temperatures in K, energies in kWh.
struct RunMetrics {
  double electrical_kwh = 0.0;
  double embodied_kwh = 0.0;
  double cost = 0.0;
  double cost_per_kwh = 0.0;
  double cost_per_kwh_drawn = 0.0;
  double draw_temp_mean = 0.0;
  double draw_temp_p10 = 0.0;
  double draw_temp_p90 = 0.0;
  double peak_kwh = 0.0;
  double offpeak_kwh = 0.0;
  double drawn_volume = 0.0;  // m^3
  SolveStats solver;          // over the whole run
};

struct RunResult {
  RunMetrics metrics;
  std::vector<TrajectoryRow> trajectory;
  std::vector<MpcDiagnostics> diagnostics;
  EnergyAudit audit;
  double wall_time = 0.0;
};

/// One draw sample: volume drawn over a step and the outlet temperature.
struct DrawSample {
  double volume = 0.0;  // m^3
  double outlet_temp = 0.0;  // K
};

/// Energy embodied in the drawn water relative to the inlet, kWh.
double compute_embodied_energy(std::span<const DrawSample> draws, double t_inlet);

/// Volume-weighted percentile (q in [0, 1]) of the outlet temperature.
double weighted_percentile(std::span<const DrawSample> draws, double q);

std::unique_ptr<Controller> make_controller(const RunConfig& cfg);

/// Measure, forecast, solve, actuate the first action, repeat. The plant is
/// stepped at sim_dt; metrics cover the final day only.
RunResult run_closed_loop(const RunConfig& cfg);

void write_trajectory_csv(const std::vector<TrajectoryRow>& rows, std::ostream& os);
void write_metrics_csv_header(std::ostream& os);
void write_metrics_csv_row(const std::string& label, const RunMetrics& m, std::ostream& os);
void write_diagnostics_json(const RunResult& result, std::ostream& os);

// --- sweeps -----------------------------------------------------------------

enum class SweepAxis { daily_volume, alpha, lambda };
std::string to_string(SweepAxis a);
SweepAxis parse_axis(const std::string& name);

struct SweepSpec {
  SweepAxis axis = SweepAxis::daily_volume;
  std::vector<double> values;  // gal/day, alpha, or $/K^2
  std::vector<ControllerKind> controllers;
  unsigned workers = 0;  // 0 = hardware concurrency
};

/// Eight daily volumes from 28.8 to 72 gal/day.
std::vector<double> default_volume_points();
std::vector<double> default_alpha_points();

struct SweepRow {
  SweepAxis axis = SweepAxis::daily_volume;
  double value = 0.0;
  ControllerKind controller = ControllerKind::thermostat;
  bool ok = false;
  std::string error;
  RunMetrics metrics;
};

/// One run per (point, controller). Controllers that ignore forecasts run once
/// on the alpha axis and the row is replicated. Failures are recorded per row.
std::vector<SweepRow> sweep(const RunConfig& base, const SweepSpec& spec);
void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& os);

// --- plant calibration --------------------------------------------------------

struct CalibrationTarget {
  double total_ua = SimParams::kDefaultTotalUa;  // W/K
  double hot_temp = units::fahrenheit_to_kelvin(140.0);
  double spread_ratio = 0.5;                      // sensor 6 - sensor 1 spread remaining ...
  double after = units::hours_to_seconds(72.0);   // ... after this long with no flow or power
};

struct CalibrationResult {
  double total_ua = 0.0;
  double k_axial = 0.0;
  double achieved_ratio = 0.0;
  int iterations = 0;
};

/// Bisection on k_axial so a half-hot/half-cold tank destratifies at the
/// target rate; the jacket conductance is split uniformly over the nodes.
CalibrationResult calibrate_sim(const TankSpec& tank, const AmbientConditions& ambient, const SimSettings& sim,
                                const CalibrationTarget& target = {});

/// Spread between top and bottom side sensors after `after` seconds of rest
/// from the half-hot initial state, relative to the initial spread.
double destratification_ratio(const TankSpec& tank, const AmbientConditions& ambient, const SimParams& params,
                              double hot_temp, double after);

}  // namespace tankmpc
