#include "tankmpc/control_models.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>

namespace tankmpc {

namespace {
constexpr double kRhoCp = PhysicalConstants::volumetric_heat_capacity;

void require_step_args(double dt_bar, double flow) {
  if (!(dt_bar > 0.0)) throw InputError("Euler step must be positive");
  if (!(flow >= 0.0)) throw InputError("flow must be non-negative");
}
}  // namespace

void OneNodeParams::validate() const {
  if (!(volume > 0.0) || !(ua > 0.0)) throw InputError("one-node V and U must be positive");
}

void ThreeNodeParams::validate() const {
  if (!(u_lower > 0.0 && u_middle > 0.0 && u_upper > 0.0 && k_ml > 0.0 && k_um > 0.0)) {
    throw InputError("three-node conductances must be positive");
  }
  if (!(v_middle > 0.0 && v_upper > 0.0)) throw InputError("three-node volumes must be positive");
  if (!(v_lower() > 0.0)) throw InputError("derived lower volume V_total - V_m - V_u must be positive");
}

template <int NX, int NU>
double AffineStep<NX, NU>::spectral_radius() const {
  Eigen::EigenSolver<Eigen::Matrix<double, NX, NX>> es(a, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

OneNodeState one_node_step(OneNodeState state, double p, double flow, const AmbientConditions& ambient,
                           const OneNodeParams& params, double dt_bar) {
  require_step_args(dt_bar, flow);
  const double cap = kRhoCp * params.volume;
  const double dTdt = p / cap + params.ua / cap * (ambient.t_ambient - state.temp) -
                      flow / params.volume * (state.temp - ambient.t_inlet);
  return {state.temp + dt_bar * dTdt};
}

ThreeNodeState three_node_step(const ThreeNodeState& s, double p_m, double p_u, double flow,
                               const AmbientConditions& ambient, const ThreeNodeParams& params,
                               double dt_bar) {
  require_step_args(dt_bar, flow);
  const double c_u = kRhoCp * params.v_upper;
  const double c_m = kRhoCp * params.v_middle;
  const double c_l = kRhoCp * params.v_lower();
  const double ta = ambient.t_ambient;

  const double du = params.u_upper / c_u * (ta - s.upper) - flow / params.v_upper * (s.upper - s.middle) +
                    p_u / c_u + params.k_um / c_u * (s.middle - s.upper);
  const double dm = params.u_middle / c_m * (ta - s.middle) -
                    flow / params.v_middle * (s.middle - s.lower) + p_m / c_m +
                    params.k_ml / c_m * (s.lower - s.middle) + params.k_um / c_m * (s.upper - s.middle);
  const double dl = params.u_lower / c_l * (ta - s.lower) -
                    flow / params.v_lower() * (s.lower - ambient.t_inlet) +
                    params.k_ml / c_l * (s.middle - s.lower);
  return {s.lower + dt_bar * dl, s.middle + dt_bar * dm, s.upper + dt_bar * du};
}

OneNodeState one_node_interval(OneNodeState state, double p, double flow,
                               const AmbientConditions& ambient, const OneNodeParams& params,
                               double dt, int m) {
  if (m < 1) throw InputError("need at least one Euler sub-step");
  for (int k = 0; k < m; ++k) state = one_node_step(state, p, flow, ambient, params, dt / m);
  return state;
}

ThreeNodeState three_node_interval(ThreeNodeState state, double p_m, double p_u, double flow,
                                   const AmbientConditions& ambient, const ThreeNodeParams& params,
                                   double dt, int m) {
  if (m < 1) throw InputError("need at least one Euler sub-step");
  for (int k = 0; k < m; ++k) state = three_node_step(state, p_m, p_u, flow, ambient, params, dt / m);
  return state;
}

OneNodeAffine one_node_affine(const OneNodeParams& params, double flow, const AmbientConditions& ambient,
                              double dt_bar) {
  require_step_args(dt_bar, flow);
  const double cap = kRhoCp * params.volume;
  const double g = params.ua / cap + flow / params.volume;
  OneNodeAffine s;
  s.a(0, 0) = 1.0 - dt_bar * g;
  s.b(0, 0) = dt_bar / cap;
  s.c(0) = dt_bar * (params.ua / cap * ambient.t_ambient + flow / params.volume * ambient.t_inlet);
  return s;
}

ThreeNodeAffine three_node_affine(const ThreeNodeParams& params, double flow,
                                  const AmbientConditions& ambient, double dt_bar) {
  require_step_args(dt_bar, flow);
  const double c_u = kRhoCp * params.v_upper;
  const double c_m = kRhoCp * params.v_middle;
  const double c_l = kRhoCp * params.v_lower();
  const double ta = ambient.t_ambient;

  // Continuous-time rates, state order (lower, middle, upper).
  Eigen::Matrix3d rate = Eigen::Matrix3d::Zero();
  rate(0, 0) = -params.u_lower / c_l - flow / params.v_lower() - params.k_ml / c_l;
  rate(0, 1) = params.k_ml / c_l;
  rate(1, 0) = flow / params.v_middle + params.k_ml / c_m;
  rate(1, 1) = -params.u_middle / c_m - flow / params.v_middle - params.k_ml / c_m - params.k_um / c_m;
  rate(1, 2) = params.k_um / c_m;
  rate(2, 1) = flow / params.v_upper + params.k_um / c_u;
  rate(2, 2) = -params.u_upper / c_u - flow / params.v_upper - params.k_um / c_u;

  ThreeNodeAffine s;
  s.a = Eigen::Matrix3d::Identity() + dt_bar * rate;
  s.b.setZero();
  s.b(1, 0) = dt_bar / c_m;
  s.b(2, 1) = dt_bar / c_u;
  s.c << dt_bar * (params.u_lower / c_l * ta + flow / params.v_lower() * ambient.t_inlet),
      dt_bar * params.u_middle / c_m * ta, dt_bar * params.u_upper / c_u * ta;
  return s;
}

template <int NX, int NU>
AffineStep<NX, NU> compose(const AffineStep<NX, NU>& step, int m) {
  if (m < 1) throw InputError("need at least one Euler sub-step");
  AffineStep<NX, NU> out = step;
  for (int k = 1; k < m; ++k) {
    // x'' = A(A x + B u + c) + B u + c
    out.b = step.a * out.b + step.b;
    out.c = step.a * out.c + step.c;
    out.a = step.a * out.a;
  }
  return out;
}

template <int NX, int NU>
void require_stable(const AffineStep<NX, NU>& step, const char* what) {
  const double r = step.spectral_radius();
  if (r > 1.0) {
    throw InputError(std::string(what) + ": forward-Euler step is unstable (spectral radius " +
                     std::to_string(r) + " > 1)");
  }
}

template struct AffineStep<1, 1>;
template struct AffineStep<3, 2>;
template OneNodeAffine compose(const OneNodeAffine&, int);
template ThreeNodeAffine compose(const ThreeNodeAffine&, int);
template void require_stable(const OneNodeAffine&, const char*);
template void require_stable(const ThreeNodeAffine&, const char*);

OneNodeModel::OneNodeModel(OneNodeParams params, double dt_bar) : params_(params), dt_bar_(dt_bar) {
  params_.validate();
  require_stable(one_node_affine(params_, 0.0, AmbientConditions{}, dt_bar_), "one-node model");
}

OneNodeAffine OneNodeModel::interval_affine(double flow, const AmbientConditions& ambient, int m) const {
  auto step = one_node_affine(params_, flow, ambient, dt_bar_);
  require_stable(step, "one-node model");
  return compose(step, m);
}

ThreeNodeModel::ThreeNodeModel(ThreeNodeParams params, double dt_bar)
    : params_(params), dt_bar_(dt_bar) {
  params_.validate();
  require_stable(three_node_affine(params_, 0.0, AmbientConditions{}, dt_bar_), "three-node model");
}

ThreeNodeAffine ThreeNodeModel::interval_affine(double flow, const AmbientConditions& ambient,
                                                int m) const {
  auto step = three_node_affine(params_, flow, ambient, dt_bar_);
  require_stable(step, "three-node model");
  return compose(step, m);
}

}  // namespace tankmpc
