#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tankmpc/control_models.hpp"
#include "tankmpc/tank_sim.hpp"
#include "tankmpc/units.hpp"

namespace tankmpc {

enum class Regime { heating_cycle, at_rest };
std::string to_string(Regime r);

/// One logged instant. Power and flow are averages over the interval that
/// starts at t and ends at the next sample.
struct IdSample {
  double t = 0.0;                // s
  std::vector<double> sensors;   // K, sensor 1 first
  double p_lower = 0.0;          // W
  double p_upper = 0.0;          // W
  double flow = 0.0;             // m^3/s
  double t_ambient = 0.0;        // K
};

struct IdSegment {
  Regime regime = Regime::at_rest;
  std::vector<IdSample> samples;
};

struct IdDataset {
  std::vector<IdSegment> segments;

  std::size_t sample_count() const;
  void validate() const;
};

/// Endpoint sampling of the temperatures every dt_bar; power and flow become
/// the energy-exact means over each resampled interval.
IdDataset resample(const IdDataset& data, double dt_bar);

struct RegressionSystem {
  Eigen::MatrixXd w;                    // rows of w_j (one-node) or stacked W_j blocks (three-node)
  Eigen::VectorXd z;                    // J
  std::vector<std::string> labels;      // one per column of w
  std::vector<std::string> equations;   // one per row within a block
  std::size_t pairs = 0;

  std::size_t rows_per_pair() const { return equations.size(); }
};

/// Sensor used for the one-node temperature.
inline constexpr std::size_t kOneNodeSensor = 7;
/// Sensors used for (T_l, T_m, T_u).
inline constexpr std::size_t kThreeNodeSensors[3] = {1, 7, 8};

/// Pairs are consecutive samples of one segment spaced by dt_bar with no flow.
RegressionSystem build_regression_one_node(const IdDataset& data, double dt_bar);
RegressionSystem build_regression_three_node(const IdDataset& data, double dt_bar, double v_total);

/// Thrown when the design matrix has lost column rank.
class RankDeficientError : public std::runtime_error {
 public:
  RankDeficientError(const std::string& what, std::vector<std::vector<double>> directions)
      : std::runtime_error(what), directions_(std::move(directions)) {}
  /// Unit vectors in parameter space spanning the unidentifiable subspace.
  const std::vector<std::vector<double>>& directions() const { return directions_; }

 private:
  std::vector<std::vector<double>> directions_;
};

struct OlsResult {
  std::vector<double> theta;
  std::vector<std::string> labels;
  std::vector<std::string> equations;
  std::vector<double> rms_residual;  // J, per equation
  double condition_number = 0.0;     // of the column-equilibrated design
  std::size_t pairs = 0;
  std::vector<std::string> warnings;
};

inline constexpr double kRankTolerance = 1e-10;

OlsResult ols_solve(const RegressionSystem& system);

/// Plausibility gate: every estimate positive and the identified volumes no
/// larger than the tank. Appends to result.warnings, never alters theta.
void check_plausibility(OlsResult& result, double v_total);

OneNodeParams to_one_node_params(const OlsResult& r);
ThreeNodeParams to_three_node_params(const OlsResult& r, double v_total);

void write_params_section(const OneNodeParams& p, std::ostream& os);
void write_params_section(const ThreeNodeParams& p, std::ostream& os);
void write_id_report_json(const OlsResult& r, const std::string& model, std::ostream& os);

// --- data ----------------------------------------------------------------

/// Reads the simulator trajectory log; ambient temperature is not logged so it
/// is supplied. Rows with flow are kept so segmentation can drop them.
std::vector<IdSample> read_trajectory_csv(std::istream& is, double t_ambient);

/// Splits a log into maximal flow-free runs with consistent regime: any
/// element power makes a heating-cycle segment, none an at-rest segment.
IdDataset segment_log(const std::vector<IdSample>& samples);

enum class IdInitialCondition { well_mixed, stratified };

/// Two-regime collection run on the simulator: heat from a starting profile
/// with no flow, then rest with no power.
struct IdProtocol {
  IdInitialCondition initial = IdInitialCondition::well_mixed;
  double mixed_temp = units::fahrenheit_to_kelvin(120.0);  // uniform well-mixed start
  double cold_temp = units::fahrenheit_to_kelvin(68.0);    // bottom of the stratified start
  double hot_temp = units::fahrenheit_to_kelvin(125.0);    // top of the stratified start
  double stratified_fraction = 0.5;                      // hot fraction of the stratified start
  bool both_elements = false;
  double heating_duration = units::hours_to_seconds(3.0);
  double max_temp = units::fahrenheit_to_kelvin(140.0);  // heating stops at this sensor reading
  double rest_duration = units::hours_to_seconds(24.0);
  double log_dt = 1.0;
};

IdDataset collect_id_data(const TankSpec& tank, const AmbientConditions& ambient, const SimParams& sim,
                          const IdProtocol& protocol);

}  // namespace tankmpc
