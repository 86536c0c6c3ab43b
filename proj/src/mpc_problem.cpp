#include "tankmpc/mpc_problem.hpp"

#include <cmath>

namespace tankmpc {

void MpcConfig::validate() const {
  if (!(dt > 0.0)) throw InputError("MPC interval must be positive");
  if (substeps < 1) throw InputError("MPC needs at least one Euler sub-step");
  if (n_intervals < 1) throw InputError("MPC horizon needs at least one interval");
  if (std::abs(n_intervals * dt - horizon) > 1e-9 * horizon) {
    throw InputError("MPC horizon must equal n_intervals * dt");
  }
  if (!(t_low < t_high)) throw InputError("MPC deadband must satisfy T_low < T_high");
  if (!(lambda > 0.0) || !(beta > 0.0)) throw InputError("MPC weights lambda and beta must be positive");
}

double interval_cost(double power, double price, double dt) {
  return price * units::joules_to_kwh(power * dt);
}

double deadband_penalty(const std::vector<double>& temps, const MpcConfig& cfg) {
  double total = 0.0;
  for (double t : temps) {
    const double lo = std::max(0.0, cfg.t_low - t);
    const double hi = std::max(0.0, t - cfg.t_high);
    total += cfg.lambda * (lo * lo + cfg.beta * hi * hi);
  }
  return total;
}

namespace {

void require_inputs(const MpcInputs& in, const MpcConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(cfg.n_intervals);
  if (in.flow_forecast.size() != n || in.prices.size() != n) {
    throw InputError("MPC forecast and price vectors must have one entry per interval");
  }
}

// Shared pieces: scaled dynamics rows, penalty slacks, control bounds, costs.
template <int NX, int NU>
void assemble(QpBuilder& b, const MpcLayout& lay, const std::vector<AffineStep<NX, NU>>& steps,
              const Eigen::Matrix<double, NX, 1>& x0, const std::vector<double>& p_bar, int penalized,
              const MpcInputs& in, const MpcConfig& cfg) {
  const double off = cfg.t_low;
  const double sc = kTemperatureScale;
  const int n = cfg.n_intervals;

  // Initial condition.
  for (int k = 0; k < NX; ++k) b.add_equality({{lay.state(0, k), 1.0}}, (x0(k) - off) / sc);

  // Dynamics:  xh' = A xh + (B diag(p_bar)/sc) uh + (c + (A - I) off 1) / sc.
  for (int j = 0; j < n; ++j) {
    const auto& st = steps[static_cast<std::size_t>(j)];
    const Eigen::Matrix<double, NX, 1> shift =
        (st.c + (st.a - Eigen::Matrix<double, NX, NX>::Identity()) * Eigen::Matrix<double, NX, 1>::Constant(off)) / sc;
    for (int r = 0; r < NX; ++r) {
      std::vector<std::pair<Eigen::Index, double>> row;
      row.emplace_back(lay.state(j + 1, r), 1.0);
      for (int k = 0; k < NX; ++k) {
        if (st.a(r, k) != 0.0) row.emplace_back(lay.state(j, k), -st.a(r, k));
      }
      for (int k = 0; k < NU; ++k) {
        if (st.b(r, k) != 0.0) row.emplace_back(lay.control(j, k), -st.b(r, k) * p_bar[k] / sc);
      }
      b.add_equality(row, shift(r));
    }
  }

  const double band = (cfg.t_high - cfg.t_low) / sc;
  const double w = cfg.lambda * sc * sc;  // $ per scaled-unit^2
  for (int j = 0; j < n; ++j) {
    const auto t = lay.state(j, penalized);
    b.add_inequality({{t, -1.0}, {lay.slack_lo(j), -1.0}}, 0.0);
    b.add_inequality({{t, 1.0}, {lay.slack_hi(j), -1.0}}, band);
    b.add_inequality({{lay.slack_lo(j), -1.0}}, 0.0);
    b.add_inequality({{lay.slack_hi(j), -1.0}}, 0.0);
    b.set_quadratic(lay.slack_lo(j), 2.0 * w);
    b.set_quadratic(lay.slack_hi(j), 2.0 * w * cfg.beta);
    for (int k = 0; k < NU; ++k) {
      const auto u = lay.control(j, k);
      b.add_inequality({{u, -1.0}}, 0.0);
      b.add_inequality({{u, 1.0}}, 1.0);
      b.set_linear(u, interval_cost(p_bar[k], in.prices[static_cast<std::size_t>(j)], cfg.dt));
    }
  }
}

}  // namespace

MpcQp build_one_node_qp(const OneNodeModel& model, double initial_temp, double p_bar,
                        const MpcInputs& inputs, const MpcConfig& cfg) {
  require_inputs(inputs, cfg);
  if (!(p_bar > 0.0)) throw InputError("element rating must be positive");
  MpcQp out;
  out.layout = MpcLayout{1, 1, cfg.n_intervals};
  out.temp_offset = cfg.t_low;
  out.p_bar = {p_bar};
  out.penalized_state = 0;

  std::vector<OneNodeAffine> steps;
  steps.reserve(inputs.flow_forecast.size());
  for (double f : inputs.flow_forecast) steps.push_back(model.interval_affine(f, inputs.ambient, cfg.substeps));

  QpBuilder b(out.layout.total());
  Eigen::Matrix<double, 1, 1> x0;
  x0 << initial_temp;
  assemble(b, out.layout, steps, x0, out.p_bar, 0, inputs, cfg);
  out.qp = b.build();
  return out;
}

MpcQp build_three_node_qp(const ThreeNodeModel& model, const ThreeNodeState& initial,
                          double p_bar_middle, double p_bar_upper, const MpcInputs& inputs,
                          const MpcConfig& cfg) {
  require_inputs(inputs, cfg);
  if (!(p_bar_middle > 0.0) || !(p_bar_upper > 0.0)) throw InputError("element ratings must be positive");
  if (initial.lower > initial.middle || initial.middle > initial.upper) {
    throw InputError("three-node initial state violates T_l <= T_m <= T_u; adjust before building");
  }
  MpcQp out;
  out.layout = MpcLayout{3, 2, cfg.n_intervals};
  out.temp_offset = cfg.t_low;
  out.p_bar = {p_bar_middle, p_bar_upper};
  out.penalized_state = 2;

  std::vector<ThreeNodeAffine> steps;
  steps.reserve(inputs.flow_forecast.size());
  for (double f : inputs.flow_forecast) steps.push_back(model.interval_affine(f, inputs.ambient, cfg.substeps));

  QpBuilder b(out.layout.total());
  assemble(b, out.layout, steps, initial.vector(), out.p_bar, 2, inputs, cfg);
  // Ordering at every boundary j = 0..N.
  for (int j = 0; j <= cfg.n_intervals; ++j) {
    b.add_inequality({{out.layout.state(j, 0), 1.0}, {out.layout.state(j, 1), -1.0}}, 0.0);
    b.add_inequality({{out.layout.state(j, 1), 1.0}, {out.layout.state(j, 2), -1.0}}, 0.0);
  }
  out.qp = b.build();
  return out;
}

}  // namespace tankmpc
