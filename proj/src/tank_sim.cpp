#include "tankmpc/tank_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tankmpc {

void TankSimState::validate() const {
  for (double t : node_temps) {
    if (!std::isfinite(t) || t < units::kKelvinOffset || t >= units::kKelvinOffset + 100.0) {
      throw InputError("node temperature non-finite or outside [273.15, 373.15) K");
    }
  }
}

double TankSimState::mean_temp() const {
  return std::accumulate(node_temps.begin(), node_temps.end(), 0.0) /
         static_cast<double>(node_temps.size());
}

std::size_t node_at_height(double height_frac, std::size_t n_nodes) {
  auto idx = static_cast<std::size_t>(std::floor(height_frac * static_cast<double>(n_nodes)));
  return std::min(idx, n_nodes - 1);
}

SimParams SimParams::for_tank(const TankSpec& spec, std::size_t n_nodes, double total_ua,
                              double k_axial, double sim_dt) {
  SimParams p;
  p.n_nodes = n_nodes;
  p.sim_dt = sim_dt;
  p.node_volume = spec.total_volume / static_cast<double>(n_nodes);
  p.ua_per_node.assign(n_nodes, total_ua / static_cast<double>(n_nodes));
  p.k_axial = k_axial;
  p.element_node_lower = node_at_height(spec.lower_element_height_frac, n_nodes);
  p.element_node_upper = node_at_height(spec.upper_element_height_frac, n_nodes);
  p.validate();
  return p;
}

double SimParams::total_ua() const {
  return std::accumulate(ua_per_node.begin(), ua_per_node.end(), 0.0);
}

void SimParams::validate() const {
  if (n_nodes < 10) throw InputError("the plant needs at least 10 nodes");
  if (!(sim_dt > 0.0)) throw InputError("sim_dt must be positive");
  if (!(node_volume > 0.0)) throw InputError("node volume must be positive");
  if (ua_per_node.size() != n_nodes) throw InputError("ua_per_node length must equal n_nodes");
  for (double ua : ua_per_node) {
    if (!(ua >= 0.0)) throw InputError("ambient conductances must be non-negative");
  }
  if (!(k_axial >= 0.0)) throw InputError("k_axial must be non-negative");
  if (element_node_upper >= n_nodes || element_node_lower >= element_node_upper) {
    throw InputError("element node indices invalid (need lower < upper < n_nodes)");
  }
  const double cap = PhysicalConstants::volumetric_heat_capacity * node_volume;
  const double rate = (2.0 * k_axial + *std::max_element(ua_per_node.begin(), ua_per_node.end())) *
                      sim_dt / cap;
  if (rate >= 1.0) throw InputError("sim_dt too large for explicit conduction/loss update");
}

void resolve_inversions(std::span<double> temps, std::span<const double> weights) {
  // Pool-adjacent-violators: blocks of merged nodes, each holding its mean.
  struct Block {
    double mean;
    double weight;
    std::size_t count;
  };
  std::vector<Block> blocks;
  blocks.reserve(temps.size());
  for (std::size_t i = 0; i < temps.size(); ++i) {
    blocks.push_back({temps[i], weights[i], 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean > blocks.back().mean) {
      Block top = blocks.back();
      blocks.pop_back();
      Block& below = blocks.back();
      const double w = below.weight + top.weight;
      below.mean = (below.mean * below.weight + top.mean * top.weight) / w;
      below.weight = w;
      below.count += top.count;
    }
  }
  std::size_t i = 0;
  for (const Block& b : blocks) {
    for (std::size_t k = 0; k < b.count; ++k) temps[i++] = b.mean;
  }
}

void resolve_inversions(std::span<double> temps) {
  std::vector<double> w(temps.size(), 1.0);
  resolve_inversions(temps, w);
}

StepResult sim_step_audited(const TankSimState& state, double p_lower, double p_upper, double flow,
                            const AmbientConditions& ambient, const SimParams& params) {
  const std::size_t n = params.n_nodes;
  if (state.node_temps.size() != n) throw InputError("state length does not match n_nodes");
  if (!(flow >= 0.0)) throw InputError("flow must be non-negative");
  if (!(p_lower >= 0.0) || !(p_upper >= 0.0)) throw InputError("element power must be non-negative");
  const double advected = flow * params.sim_dt;
  if (advected > params.node_volume) {
    throw InputError("flow advects more than one node volume per step (reduce sim_dt)");
  }

  const double node_cap = PhysicalConstants::volumetric_heat_capacity * params.node_volume;
  const double dt = params.sim_dt;
  StepResult out;
  StepAudit& audit = out.audit;
  std::vector<double> t = state.node_temps;

  // (1) plug-flow advection from the bottom.
  audit.outlet_temp = t[n - 1];
  audit.drawn_volume = advected;
  audit.inlet_enthalpy = PhysicalConstants::volumetric_heat_capacity * advected * ambient.t_inlet;
  audit.outlet_enthalpy = PhysicalConstants::volumetric_heat_capacity * advected * t[n - 1];
  if (advected > 0.0) {
    const double frac = advected / params.node_volume;
    for (std::size_t k = n; k-- > 0;) {
      const double below = k == 0 ? ambient.t_inlet : t[k - 1];
      t[k] += frac * (below - t[k]);
    }
  }

  // (2) axial conduction, fluxes from the post-advection profile.
  if (params.k_axial > 0.0) {
    std::vector<double> flux(n - 1);
    for (std::size_t k = 0; k + 1 < n; ++k) flux[k] = params.k_axial * (t[k] - t[k + 1]) * dt;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      t[k] -= flux[k] / node_cap;
      t[k + 1] += flux[k] / node_cap;
    }
  }

  // (3) ambient loss.
  for (std::size_t k = 0; k < n; ++k) {
    const double q = params.ua_per_node[k] * (t[k] - ambient.t_ambient) * dt;
    audit.ambient_loss += q;
    t[k] -= q / node_cap;
  }

  // (4) element injection.
  t[params.element_node_lower] += p_lower * dt / node_cap;
  t[params.element_node_upper] += p_upper * dt / node_cap;
  audit.electrical = (p_lower + p_upper) * dt;

  // (5) buoyancy.
  resolve_inversions(t);

  out.state.node_temps = std::move(t);
  out.state.time = state.time + dt;
  return out;
}

TankSimState sim_step(const TankSimState& state, double p_lower, double p_upper, double flow,
                      const AmbientConditions& ambient, const SimParams& params) {
  return sim_step_audited(state, p_lower, p_upper, flow, ambient, params).state;
}

std::vector<double> read_sensors(const TankSimState& state, const TankSpec& spec) {
  std::vector<double> out;
  out.reserve(spec.sensor_height_fracs.size());
  for (double h : spec.sensor_height_fracs) {
    out.push_back(state.node_temps[node_at_height(h, state.node_temps.size())]);
  }
  return out;
}

double thermal_energy(const TankSimState& state, const SimParams& params) {
  return PhysicalConstants::volumetric_heat_capacity * params.node_volume *
         std::accumulate(state.node_temps.begin(), state.node_temps.end(), 0.0);
}

TankSimState uniform_state(double temp, std::size_t n_nodes) {
  return TankSimState{std::vector<double>(n_nodes, temp), 0.0};
}

TankSimState initial_state_above_lower_element(double hot, double cold, const SimParams& params) {
  TankSimState s = uniform_state(hot, params.n_nodes);
  for (std::size_t k = 0; k < params.element_node_lower; ++k) s.node_temps[k] = cold;
  return s;
}

}  // namespace tankmpc
