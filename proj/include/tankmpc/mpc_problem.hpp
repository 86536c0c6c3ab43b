#pragma once

#include <vector>

#include "tankmpc/control_models.hpp"
#include "tankmpc/qp.hpp"
#include "tankmpc/units.hpp"

namespace tankmpc {

/// Receding-horizon settings shared by both MPC formulations.
struct MpcConfig {
  double dt = 600.0;                              // s, control interval
  int substeps = 2;                                // Euler steps per interval
  double horizon = units::hours_to_seconds(18.0);  // s
  int n_intervals = 108;
  double t_low = units::fahrenheit_to_kelvin(115.0);
  double t_high = units::fahrenheit_to_kelvin(125.0);
  double lambda = 0.01;  // $/K^2 per interval
  double beta = 1.0;
  QpSettings solver{};
  bool warm_start = true;

  double dt_bar() const { return dt / substeps; }
  void validate() const;
};

/// Decision-vector layout: per interval j < N the block [x_j, u_j, s_lo_j, s_hi_j],
/// followed by the terminal state x_N. Temperatures are stored as
/// (T - offset) / scale, powers as p / p_bar, slacks as K / scale.
struct MpcLayout {
  int n_states = 1;
  int n_controls = 1;
  int horizon = 0;
  static constexpr int kSlacks = 2;

  int block() const { return n_states + n_controls + kSlacks; }
  Eigen::Index state(int j, int k) const { return static_cast<Eigen::Index>(j) * block() + k; }
  Eigen::Index control(int j, int k) const { return static_cast<Eigen::Index>(j) * block() + n_states + k; }
  Eigen::Index slack_lo(int j) const { return static_cast<Eigen::Index>(j) * block() + n_states + n_controls; }
  Eigen::Index slack_hi(int j) const { return slack_lo(j) + 1; }
  Eigen::Index total() const { return static_cast<Eigen::Index>(horizon) * block() + n_states; }
};

inline constexpr double kTemperatureScale = 10.0;  // K per scaled unit

struct MpcQp {
  QpProblem qp;
  MpcLayout layout;
  double temp_offset = 0.0;   // K
  std::vector<double> p_bar;  // W, per control
  int penalized_state = 0;

  double temperature(const Eigen::VectorXd& x, int j, int k) const {
    return temp_offset + kTemperatureScale * x(layout.state(j, k));
  }
  double power(const Eigen::VectorXd& x, int j, int k) const { return p_bar[k] * x(layout.control(j, k)); }
};

/// Inputs shared by both builders. Vectors have one entry per control interval.
struct MpcInputs {
  std::vector<double> flow_forecast;  // m^3/s
  std::vector<double> prices;         // $/kWh
  AmbientConditions ambient;
};

/// One-node problem: state T, control p (lower element), deadband penalty on T.
MpcQp build_one_node_qp(const OneNodeModel& model, double initial_temp, double p_bar,
                        const MpcInputs& inputs, const MpcConfig& cfg);

/// Three-node problem: states (T_l, T_m, T_u), controls (p_m, p_u), penalty on
/// T_u, ordering T_l <= T_m <= T_u at every interval boundary. The initial
/// state must already satisfy the ordering.
MpcQp build_three_node_qp(const ThreeNodeModel& model, const ThreeNodeState& initial,
                          double p_bar_middle, double p_bar_upper, const MpcInputs& inputs,
                          const MpcConfig& cfg);

/// sum_j lambda([T_low - T_j]+^2 + beta [T_j - T_high]+^2) over a temperature trajectory.
double deadband_penalty(const std::vector<double>& temps, const MpcConfig& cfg);

/// Electricity cost in $ of a constant power held over dt at the given price.
double interval_cost(double power, double price, double dt);

}  // namespace tankmpc
