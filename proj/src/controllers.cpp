#include "tankmpc/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tankmpc/tank_sim.hpp"

namespace tankmpc {

OnOffSchedule to_on_off(double avg_power, double p_bar, double dt, double sim_dt) {
  if (!(p_bar > 0.0) || !(dt > 0.0) || !(sim_dt > 0.0)) throw InputError("to_on_off: non-positive argument");
  if (avg_power < 0.0 || avg_power > p_bar * (1.0 + 1e-9)) throw InputError("to_on_off: average power outside [0, p_bar]");
  OnOffSchedule s;
  s.p_bar = p_bar;
  s.total_steps = std::lround(dt / sim_dt);
  s.on_steps = std::clamp<long>(std::lround(avg_power / p_bar * dt / sim_dt), 0, s.total_steps);
  return s;
}

std::pair<ControlCommand, ThermostatState> thermostat_step(const ThermostatState& state, double sensor_upper,
                                                           double sensor_lower, double p_bar_lower,
                                                           double p_bar_upper) {
  ThermostatState next = state;
  auto latch = [&](bool heating, double temp) {
    if (temp < state.t_low) return true;
    if (temp > state.t_high) return false;
    return heating;
  };
  next.upper_heating = latch(state.upper_heating, sensor_upper);
  next.lower_heating = latch(state.lower_heating, sensor_lower);

  ControlCommand cmd;
  cmd.mode = ActuationMode::on_off;
  if (next.upper_heating) {
    cmd.p_upper = p_bar_upper;
  } else if (next.lower_heating) {
    cmd.p_lower = p_bar_lower;
  }
  return {cmd, next};
}

ThreeNodeState adjust_initial_ordering(const ThreeNodeState& s) {
  double v[3] = {s.lower, s.middle, s.upper};
  resolve_inversions(std::span<double>(v, 3));
  return {v[0], v[1], v[2]};
}

namespace {

void fill_from_solution(MpcStepResult& r, const MpcQp& mq, double time) {
  auto& d = r.diagnostics;
  const auto& sol = r.solution;
  d.time = time;
  d.status = sol.status;
  d.iterations = sol.iterations;
  d.solve_time = sol.solve_time;
  d.objective = sol.objective;
  d.primal_residual = sol.primal_residual;
  d.dual_residual = sol.dual_residual;
  d.complementarity = sol.complementarity;
  if (sol.x.size() == mq.layout.total()) {
    for (int k = 0; k < mq.layout.n_states; ++k) d.predicted_next.push_back(mq.temperature(sol.x, 1, k));
  }
}

double first_power(const MpcQp& mq, const QpSolution& sol, int k) {
  if (sol.x.size() != mq.layout.total()) return 0.0;
  return std::clamp(mq.power(sol.x, 0, k), 0.0, mq.p_bar[static_cast<std::size_t>(k)]);
}

}  // namespace

MpcStepResult mpc_step_one_node(double sensor_temp, const MpcInputs& inputs, const MpcConfig& cfg,
                                const OneNodeModel& model, double p_bar, const QpWarmStart* warm) {
  MpcQp mq = build_one_node_qp(model, sensor_temp, p_bar, inputs, cfg);
  MpcStepResult r;
  r.solution = solve_qp(mq.qp, cfg.solver, warm);
  fill_from_solution(r, mq, 0.0);
  r.diagnostics.measured = {sensor_temp};
  r.command.p_lower = first_power(mq, r.solution, 0);
  r.command.p_upper = 0.0;
  r.diagnostics.p_lower = r.command.p_lower;
  return r;
}

MpcStepResult mpc_step_three_node(const ThreeNodeState& sensors, const MpcInputs& inputs,
                                  const MpcConfig& cfg, const ThreeNodeModel& model, double p_bar_middle,
                                  double p_bar_upper, const QpWarmStart* warm) {
  const ThreeNodeState init = adjust_initial_ordering(sensors);
  MpcQp mq = build_three_node_qp(model, init, p_bar_middle, p_bar_upper, inputs, cfg);
  MpcStepResult r;
  r.solution = solve_qp(mq.qp, cfg.solver, warm);
  fill_from_solution(r, mq, 0.0);
  r.diagnostics.measured = {sensors.lower, sensors.middle, sensors.upper};
  r.diagnostics.initial_adjusted =
      init.lower != sensors.lower || init.middle != sensors.middle || init.upper != sensors.upper;
  r.command.p_lower = first_power(mq, r.solution, 0);
  r.command.p_upper = first_power(mq, r.solution, 1);
  r.diagnostics.p_lower = r.command.p_lower;
  r.diagnostics.p_upper = r.command.p_upper;
  return r;
}

QpWarmStart shift_solution(const QpSolution& sol, const MpcLayout& lay) {
  QpWarmStart w;
  if (sol.x.size() != lay.total()) return w;
  w.x = sol.x;
  const int blk = lay.block();
  for (int j = 0; j + 1 < lay.horizon; ++j) {
    w.x.segment(static_cast<Eigen::Index>(j) * blk, blk) = sol.x.segment(static_cast<Eigen::Index>(j + 1) * blk, blk);
  }
  // Last interval keeps its previous block; terminal state repeats.
  w.y = sol.y;
  w.z = sol.z;
  return w;
}

const std::vector<MpcDiagnostics>& Controller::diagnostics() const { return no_diagnostics_; }

ThermostatController::ThermostatController(ThermostatState state, double p_bar_lower, double p_bar_upper)
    : state_(state), p_bar_lower_(p_bar_lower), p_bar_upper_(p_bar_upper) {
  if (!(state_.update_period > 0.0)) throw InputError("thermostat update period must be positive");
  if (!(state_.t_low < state_.t_high)) throw InputError("thermostat deadband must satisfy T_low < T_high");
}

ControlCommand ThermostatController::step(const ControllerInput& in) {
  auto [cmd, next] = thermostat_step(state_, in.sensors.at(sensor_index(8)), in.sensors.at(sensor_index(7)),
                                     p_bar_lower_, p_bar_upper_);
  state_ = next;
  return cmd;
}

MpcControllerBase::MpcControllerBase(MpcConfig cfg, AmbientConditions ambient, double p_bar_lower,
                                     double p_bar_upper)
    : cfg_(cfg), ambient_(ambient), p_bar_lower_(p_bar_lower), p_bar_upper_(p_bar_upper) {
  cfg_.validate();
  ambient_.validate();
  fallback_.t_low = cfg_.t_low;
  fallback_.t_high = cfg_.t_high;
  fallback_.update_period = cfg_.dt;
}

ControlCommand MpcControllerBase::step(const ControllerInput& in) {
  const std::vector<double> state = model_state(in.sensors);
  if (!diag_.empty()) diag_.back().realized_next = state;

  MpcInputs inputs{in.flow_forecast, in.prices, ambient_};
  MpcStepResult r = solve(in.sensors, inputs, warm_ ? &*warm_ : nullptr);
  r.diagnostics.time = in.time;

  ControlCommand cmd = r.command;
  if (r.solution.status == QpStatus::optimal) {
    if (cfg_.warm_start) warm_ = shift_solution(r.solution, MpcLayout{static_cast<int>(state.size()),
                                                                     state.size() == 1 ? 1 : 2, cfg_.n_intervals});
  } else {
    // One interval of thermostat logic. The one-node formulation never uses the upper element.
    const bool upper_allowed = state.size() == 3;
    const double upper = upper_allowed ? in.sensors.at(sensor_index(8)) : std::numeric_limits<double>::infinity();
    auto [fb, next] = thermostat_step(fallback_, upper, in.sensors.at(sensor_index(7)), p_bar_lower_, p_bar_upper_);
    fallback_ = next;
    cmd = fb;
    r.diagnostics.fallback = true;
    r.diagnostics.p_lower = cmd.p_lower;
    r.diagnostics.p_upper = cmd.p_upper;
    warm_.reset();
  }
  cmd.mode = ActuationMode::continuous;
  diag_.push_back(std::move(r.diagnostics));
  return cmd;
}

OneNodeMpcController::OneNodeMpcController(MpcConfig cfg, OneNodeParams params, AmbientConditions ambient,
                                           double p_bar_lower, double p_bar_upper, OneNodeSensing sensing)
    : MpcControllerBase(cfg, ambient, p_bar_lower, p_bar_upper), model_(params, cfg.dt_bar()), sensing_(sensing) {}

std::vector<double> OneNodeMpcController::model_state(const std::vector<double>& sensors) const {
  if (sensing_ == OneNodeSensing::average_sensors_2_to_6) {
    double sum = 0.0;
    for (int s = 2; s <= 6; ++s) sum += sensors.at(sensor_index(s));
    return {sum / 5.0};
  }
  return {sensors.at(sensor_index(7))};
}

MpcStepResult OneNodeMpcController::solve(const std::vector<double>& sensors, const MpcInputs& inputs,
                                          const QpWarmStart* warm) {
  return mpc_step_one_node(model_state(sensors).front(), inputs, cfg_, model_, p_bar_lower_, warm);
}

ThreeNodeMpcController::ThreeNodeMpcController(MpcConfig cfg, ThreeNodeParams params, AmbientConditions ambient,
                                               double p_bar_lower, double p_bar_upper)
    : MpcControllerBase(cfg, ambient, p_bar_lower, p_bar_upper), model_(params, cfg.dt_bar()) {}

std::vector<double> ThreeNodeMpcController::model_state(const std::vector<double>& sensors) const {
  return {sensors.at(sensor_index(1)), sensors.at(sensor_index(7)), sensors.at(sensor_index(8))};
}

MpcStepResult ThreeNodeMpcController::solve(const std::vector<double>& sensors, const MpcInputs& inputs,
                                            const QpWarmStart* warm) {
  const auto s = model_state(sensors);
  return mpc_step_three_node({s[0], s[1], s[2]}, inputs, cfg_, model_, p_bar_lower_, p_bar_upper_, warm);
}

}  // namespace tankmpc
