#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tankmpc/control_models.hpp"
#include "tankmpc/mpc_problem.hpp"
#include "tankmpc/units.hpp"

namespace tankmpc {

enum class ActuationMode { continuous, on_off };

/// Element powers for the next update period. In on-off mode the powers are
/// averages that the harness turns into full-power pulses with to_on_off.
struct ControlCommand {
  double p_lower = 0.0;  // W
  double p_upper = 0.0;  // W
  ActuationMode mode = ActuationMode::continuous;
};

/// Front-loaded pulse train over one control interval.
struct OnOffSchedule {
  long on_steps = 0;
  long total_steps = 0;
  double p_bar = 0.0;

  double power_at(long step) const { return step < on_steps ? p_bar : 0.0; }
  double delivered_energy(double sim_dt) const { return static_cast<double>(on_steps) * p_bar * sim_dt; }
};

OnOffSchedule to_on_off(double avg_power, double p_bar, double dt, double sim_dt);

// --- thermostat -----------------------------------------------------------

struct ThermostatState {
  bool lower_heating = false;
  bool upper_heating = false;
  double t_low = units::fahrenheit_to_kelvin(115.0);
  double t_high = units::fahrenheit_to_kelvin(125.0);
  double update_period = 30.0;  // s
};

/// Per-element hysteresis, upper element has priority; never both on.
std::pair<ControlCommand, ThermostatState> thermostat_step(const ThermostatState& state, double sensor_upper,
                                                           double sensor_lower, double p_bar_lower,
                                                           double p_bar_upper);

// --- MPC ------------------------------------------------------------------

struct MpcDiagnostics {
  double time = 0.0;
  QpStatus status = QpStatus::optimal;
  int iterations = 0;
  double solve_time = 0.0;
  double objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double complementarity = 0.0;
  bool fallback = false;
  bool initial_adjusted = false;
  double p_lower = 0.0;
  double p_upper = 0.0;
  std::vector<double> measured;       // model state at the call
  std::vector<double> predicted_next;  // model state predicted one interval ahead
  std::vector<double> realized_next;   // measured at the next call (empty for the last)
};

struct MpcStepResult {
  ControlCommand command;
  MpcDiagnostics diagnostics;
  QpSolution solution;
};

/// Receding-horizon step of the one-node formulation; only the lower element
/// is commanded. Returns the solver status without any fallback.
MpcStepResult mpc_step_one_node(double sensor_temp, const MpcInputs& inputs, const MpcConfig& cfg,
                                const OneNodeModel& model, double p_bar,
                                const QpWarmStart* warm = nullptr);

/// Three-node step. Sensors (T_l, T_m, T_u) are projected onto the ordered set
/// before solving when noise makes them inverted.
MpcStepResult mpc_step_three_node(const ThreeNodeState& sensors, const MpcInputs& inputs,
                                  const MpcConfig& cfg, const ThreeNodeModel& model, double p_bar_middle,
                                  double p_bar_upper, const QpWarmStart* warm = nullptr);

/// Isotonic (equal-weight) projection onto T_l <= T_m <= T_u.
ThreeNodeState adjust_initial_ordering(const ThreeNodeState& s);

/// Previous solution advanced by one interval, for warm starts.
QpWarmStart shift_solution(const QpSolution& sol, const MpcLayout& layout);

// --- controller objects used by the closed loop ------------------------------

struct ControllerInput {
  double time = 0.0;
  std::vector<double> sensors;        // 8 readings, sensor 1 first
  std::vector<double> flow_forecast;  // per MPC interval
  std::vector<double> prices;         // per MPC interval
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  virtual double update_period() const = 0;
  virtual bool uses_forecast() const = 0;
  virtual ControlCommand step(const ControllerInput& in) = 0;
  virtual const std::vector<MpcDiagnostics>& diagnostics() const;

 protected:
  std::vector<MpcDiagnostics> no_diagnostics_;
};

class ThermostatController : public Controller {
 public:
  ThermostatController(ThermostatState state, double p_bar_lower, double p_bar_upper);
  std::string name() const override { return "thermostat"; }
  double update_period() const override { return state_.update_period; }
  bool uses_forecast() const override { return false; }
  ControlCommand step(const ControllerInput& in) override;

 private:
  ThermostatState state_;
  double p_bar_lower_, p_bar_upper_;
};

enum class OneNodeSensing { lower_element_sensor, average_sensors_2_to_6 };

/// Shared bookkeeping for the MPC controllers: warm starts, thermostat
/// fallback on non-optimal solves, predicted-vs-realized audit trail.
class MpcControllerBase : public Controller {
 public:
  MpcControllerBase(MpcConfig cfg, AmbientConditions ambient, double p_bar_lower, double p_bar_upper);
  double update_period() const override { return cfg_.dt; }
  bool uses_forecast() const override { return true; }
  const std::vector<MpcDiagnostics>& diagnostics() const override { return diag_; }
  ControlCommand step(const ControllerInput& in) override;

 protected:
  virtual std::vector<double> model_state(const std::vector<double>& sensors) const = 0;
  virtual MpcStepResult solve(const std::vector<double>& sensors, const MpcInputs& inputs,
                              const QpWarmStart* warm) = 0;

  MpcConfig cfg_;
  AmbientConditions ambient_;
  double p_bar_lower_, p_bar_upper_;

 private:
  std::vector<MpcDiagnostics> diag_;
  std::optional<QpWarmStart> warm_;
  ThermostatState fallback_;
};

class OneNodeMpcController : public MpcControllerBase {
 public:
  OneNodeMpcController(MpcConfig cfg, OneNodeParams params, AmbientConditions ambient, double p_bar_lower,
                       double p_bar_upper, OneNodeSensing sensing = OneNodeSensing::lower_element_sensor);
  std::string name() const override { return "one-node"; }

 protected:
  std::vector<double> model_state(const std::vector<double>& sensors) const override;
  MpcStepResult solve(const std::vector<double>& sensors, const MpcInputs& inputs,
                      const QpWarmStart* warm) override;

 private:
  OneNodeModel model_;
  OneNodeSensing sensing_;
};

class ThreeNodeMpcController : public MpcControllerBase {
 public:
  ThreeNodeMpcController(MpcConfig cfg, ThreeNodeParams params, AmbientConditions ambient,
                         double p_bar_lower, double p_bar_upper);
  std::string name() const override { return "three-node"; }

 protected:
  std::vector<double> model_state(const std::vector<double>& sensors) const override;
  MpcStepResult solve(const std::vector<double>& sensors, const MpcInputs& inputs,
                      const QpWarmStart* warm) override;

 private:
  ThreeNodeModel model_;
};

}  // namespace tankmpc
