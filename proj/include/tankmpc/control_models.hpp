#pragma once

#include <Eigen/Dense>

#include "tankmpc/units.hpp"

namespace tankmpc {

/// Fully mixed tank: volume V [m^3] and jacket conductance U [W/K].
struct OneNodeParams {
  double volume = 0.156;
  double ua = 1.27;

  void validate() const;
};

/// Lower/middle/upper nodes split at the two elements. The lower volume is
/// derived so the three volumes always add up to the tank volume.
struct ThreeNodeParams {
  double u_lower = 1.15;    // W/K
  double u_middle = 0.092;  // W/K
  double u_upper = 0.662;   // W/K
  double k_ml = 3.59;       // W/K, middle <-> lower
  double k_um = 0.703;      // W/K, upper <-> middle
  double v_middle = 0.0932;  // m^3
  double v_upper = 0.0546;   // m^3
  double v_total = 0.0546 + 0.0932 + 0.0415;  // m^3

  double v_lower() const { return v_total - v_middle - v_upper; }
  void validate() const;
};

struct OneNodeState {
  double temp = 0.0;  // K
};

struct ThreeNodeState {
  double lower = 0.0;   // K
  double middle = 0.0;  // K
  double upper = 0.0;   // K

  Eigen::Vector3d vector() const { return {lower, middle, upper}; }
  static ThreeNodeState from_vector(const Eigen::Vector3d& v) { return {v(0), v(1), v(2)}; }
};

/// x' = A x + B u + c for one Euler step (or a composed control interval).
/// Controls are element powers in W: one-node u = [p], three-node u = [p_m, p_u].
template <int NX, int NU>
struct AffineStep {
  Eigen::Matrix<double, NX, NX> a;
  Eigen::Matrix<double, NX, NU> b;
  Eigen::Matrix<double, NX, 1> c;

  Eigen::Matrix<double, NX, 1> apply(const Eigen::Matrix<double, NX, 1>& x,
                                     const Eigen::Matrix<double, NU, 1>& u) const {
    return a * x + b * u + c;
  }
  double spectral_radius() const;
};

using OneNodeAffine = AffineStep<1, 1>;
using ThreeNodeAffine = AffineStep<3, 2>;

OneNodeState one_node_step(OneNodeState state, double p, double flow, const AmbientConditions& ambient,
                           const OneNodeParams& params, double dt_bar);

/// Simultaneous forward-Euler update: every right-hand side uses the values at
/// the start of the step.
ThreeNodeState three_node_step(const ThreeNodeState& state, double p_m, double p_u, double flow,
                               const AmbientConditions& ambient, const ThreeNodeParams& params,
                               double dt_bar);

/// m Euler sub-steps of dt/m with controls and flow held constant.
OneNodeState one_node_interval(OneNodeState state, double p, double flow,
                               const AmbientConditions& ambient, const OneNodeParams& params,
                               double dt, int m);
ThreeNodeState three_node_interval(ThreeNodeState state, double p_m, double p_u, double flow,
                                   const AmbientConditions& ambient, const ThreeNodeParams& params,
                                   double dt, int m);

OneNodeAffine one_node_affine(const OneNodeParams& params, double flow, const AmbientConditions& ambient,
                              double dt_bar);
ThreeNodeAffine three_node_affine(const ThreeNodeParams& params, double flow,
                                  const AmbientConditions& ambient, double dt_bar);

/// Composition of m identical steps.
template <int NX, int NU>
AffineStep<NX, NU> compose(const AffineStep<NX, NU>& step, int m);

/// Throws InputError when an Euler step would amplify (spectral radius > 1).
template <int NX, int NU>
void require_stable(const AffineStep<NX, NU>& step, const char* what);

/// Parameters bound to an Euler step length, checked for stability at zero
/// flow on construction.
class OneNodeModel {
 public:
  OneNodeModel(OneNodeParams params, double dt_bar);
  const OneNodeParams& params() const { return params_; }
  double dt_bar() const { return dt_bar_; }
  OneNodeAffine interval_affine(double flow, const AmbientConditions& ambient, int m) const;

 private:
  OneNodeParams params_;
  double dt_bar_;
};

class ThreeNodeModel {
 public:
  ThreeNodeModel(ThreeNodeParams params, double dt_bar);
  const ThreeNodeParams& params() const { return params_; }
  double dt_bar() const { return dt_bar_; }
  ThreeNodeAffine interval_affine(double flow, const AmbientConditions& ambient, int m) const;

 private:
  ThreeNodeParams params_;
  double dt_bar_;
};

}  // namespace tankmpc
