#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tankmpc/units.hpp"

namespace tankmpc {

/// Node temperatures of the stratified plant, index 0 at the bottom.
struct TankSimState {
  std::vector<double> node_temps;  // K
  double time = 0.0;               // s

  void validate() const;
  double mean_temp() const;
};

enum class BuoyancyMode { instant_mix };

struct SimParams {
  std::size_t n_nodes = 20;
  double sim_dt = 1.0;                // s
  double node_volume = 0.0;           // m^3, total volume / n_nodes
  std::vector<double> ua_per_node;    // W/K, ambient loss
  double k_axial = 0.0;               // W/K between adjacent nodes
  std::size_t element_node_lower = 0;
  std::size_t element_node_upper = 0;
  BuoyancyMode buoyancy_mode = BuoyancyMode::instant_mix;

  // Defaults produced by `tankmpc calibrate-sim` for the default tank geometry.
  static constexpr double kDefaultTotalUa = 1.27;    // W/K
  static constexpr double kDefaultKAxial = 3.01293;  // W/K between adjacent nodes

  /// Uniform ambient-loss distribution with the elements placed at the nodes
  /// containing their height fractions.
  static SimParams for_tank(const TankSpec& spec, std::size_t n_nodes = 20,
                            double total_ua = kDefaultTotalUa, double k_axial = kDefaultKAxial,
                            double sim_dt = 1.0);

  double total_ua() const;
  void validate() const;
};

/// Node containing a height fraction (nearest-node mapping, clamped to the top node).
std::size_t node_at_height(double height_frac, std::size_t n_nodes);

/// Energy bookkeeping for one step, all in joules. Enthalpies are absolute
/// (referenced to 0 K) so the balance closes exactly.
struct StepAudit {
  double electrical = 0.0;
  double ambient_loss = 0.0;     // heat leaving through the jacket
  double inlet_enthalpy = 0.0;
  double outlet_enthalpy = 0.0;
  double drawn_volume = 0.0;     // m^3
  double outlet_temp = 0.0;      // K, top node before advection
};

struct StepResult {
  TankSimState state;
  StepAudit audit;
};

/// Advances the plant by params.sim_dt: advection, axial conduction, ambient
/// loss, element injection, then buoyancy resolution. Throws InputError when
/// more than one node volume would be advected or a power is out of range.
StepResult sim_step_audited(const TankSimState& state, double p_lower, double p_upper, double flow,
                            const AmbientConditions& ambient, const SimParams& params);

TankSimState sim_step(const TankSimState& state, double p_lower, double p_upper, double flow,
                      const AmbientConditions& ambient, const SimParams& params);

/// Merges every inverted run (a value above its upper neighbour) into its
/// weighted mean until the sequence is non-decreasing. Mean-preserving.
void resolve_inversions(std::span<double> temps, std::span<const double> weights);
void resolve_inversions(std::span<double> temps);

/// The eight sensor readings (sensor 1 at index 0).
std::vector<double> read_sensors(const TankSimState& state, const TankSpec& spec);

double thermal_energy(const TankSimState& state, const SimParams& params);  // J, referenced to 0 K

/// Uniform profile, or the harness initialization: element node and above at
/// `hot`, nodes below at `cold`.
TankSimState uniform_state(double temp, std::size_t n_nodes);
TankSimState initial_state_above_lower_element(double hot, double cold, const SimParams& params);

}  // namespace tankmpc
