#include "tankmpc/param_id.hpp"

#include <algorithm>
#include <array>
#include <tuple>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace tankmpc {

std::string to_string(Regime r) { return r == Regime::heating_cycle ? "heating-cycle" : "at-rest"; }

std::size_t IdDataset::sample_count() const {
  std::size_t n = 0;
  for (const auto& s : segments) n += s.samples.size();
  return n;
}

// The last sample of a segment only closes the final interval, so its power
// and flow are not checked.
void IdDataset::validate() const {
  for (std::size_t si = 0; si < segments.size(); ++si) {
    const auto& seg = segments[si];
    const std::string where = "segment " + std::to_string(si) + " (" + to_string(seg.regime) + ")";
    bool any_power = false;
    for (std::size_t k = 0; k < seg.samples.size(); ++k) {
      const auto& s = seg.samples[k];
      if (s.sensors.size() != TankSpec::kSensorCount) throw InputError(where + ": expected 8 sensor readings");
      if (k > 0 && !(s.t > seg.samples[k - 1].t)) throw InputError(where + ": timestamps must strictly increase");
      if (k + 1 == seg.samples.size()) break;
      if (s.flow != 0.0) throw InputError(where + ": identification samples must have zero flow");
      if (s.p_lower < 0.0 || s.p_upper < 0.0) throw InputError(where + ": negative element power");
      const bool powered = s.p_lower > 0.0 || s.p_upper > 0.0;
      if (seg.regime == Regime::at_rest && powered) throw InputError(where + ": at-rest sample with element power");
      any_power = any_power || powered;
    }
    if (seg.regime == Regime::heating_cycle && seg.samples.size() > 1 && !any_power)
      throw InputError(where + ": heating cycle without element power");
  }
}

IdDataset resample(const IdDataset& data, double dt_bar) {
  if (!(dt_bar > 0.0)) throw InputError("dt_bar must be positive");
  IdDataset out;
  for (const auto& seg : data.segments) {
    IdSegment rs{seg.regime, {}};
    const auto& s = seg.samples;
    if (s.empty()) continue;
    const double tol = 1e-6 * dt_bar;
    std::size_t k = 0;
    for (double target = s.front().t;; target += dt_bar) {
      while (k < s.size() && s[k].t < target - tol) ++k;
      if (k == s.size()) break;
      if (std::abs(s[k].t - target) > tol)
        throw InputError("log spacing does not divide dt_bar = " + std::to_string(dt_bar) + " s");
      IdSample sample = s[k];
      // energy-exact means over [target, target + dt_bar)
      double e_lower = 0.0, e_upper = 0.0, v = 0.0, span = 0.0;
      for (std::size_t j = k; j + 1 < s.size() && s[j].t < target + dt_bar - tol; ++j) {
        const double h = s[j + 1].t - s[j].t;
        e_lower += s[j].p_lower * h;
        e_upper += s[j].p_upper * h;
        v += s[j].flow * h;
        span += h;
      }
      if (span > 0.0) {
        sample.p_lower = e_lower / span;
        sample.p_upper = e_upper / span;
        sample.flow = v / span;
      }
      rs.samples.push_back(std::move(sample));
    }
    out.segments.push_back(std::move(rs));
  }
  return out;
}

namespace {

template <typename Fn>
std::size_t for_each_pair(const IdDataset& data, double dt_bar, Fn&& fn) {
  if (!(dt_bar > 0.0)) throw InputError("dt_bar must be positive");
  data.validate();
  std::size_t pairs = 0;
  for (const auto& seg : data.segments) {
    for (std::size_t k = 0; k + 1 < seg.samples.size(); ++k) {
      const auto& a = seg.samples[k];
      const auto& b = seg.samples[k + 1];
      if (std::abs((b.t - a.t) - dt_bar) > 1e-6 * dt_bar) continue;
      if (a.flow != 0.0) continue;
      fn(a, b);
      ++pairs;
    }
  }
  return pairs;
}

double sensor(const IdSample& s, std::size_t n) { return s.sensors.at(sensor_index(n)); }

}  // namespace

RegressionSystem build_regression_one_node(const IdDataset& data, double dt_bar) {
  const double rc = PhysicalConstants::volumetric_heat_capacity;
  std::vector<std::array<double, 2>> rows;
  std::vector<double> z;
  const std::size_t pairs = for_each_pair(data, dt_bar, [&](const IdSample& a, const IdSample& b) {
    const double t0 = sensor(a, kOneNodeSensor), t1 = sensor(b, kOneNodeSensor);
    rows.push_back({rc * (t1 - t0), dt_bar * (t0 - a.t_ambient)});
    z.push_back(dt_bar * (a.p_lower + a.p_upper));
  });
  if (pairs < 2) throw InputError("one-node regression needs at least 2 usable sample pairs, found " +
                                  std::to_string(pairs));
  RegressionSystem sys;
  sys.w.resize(static_cast<Eigen::Index>(pairs), 2);
  sys.z.resize(static_cast<Eigen::Index>(pairs));
  for (std::size_t r = 0; r < pairs; ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    sys.w(i, 0) = rows[r][0];
    sys.w(i, 1) = rows[r][1];
    sys.z(i) = z[r];
  }
  sys.labels = {"V", "U"};
  sys.equations = {"tank"};
  sys.pairs = pairs;
  return sys;
}

RegressionSystem build_regression_three_node(const IdDataset& data, double dt_bar, double v_total) {
  if (!(v_total > 0.0)) throw InputError("total tank volume must be positive");
  const double rc = PhysicalConstants::volumetric_heat_capacity;
  std::vector<Eigen::Matrix<double, 3, 7>> blocks;
  std::vector<Eigen::Vector3d> targets;
  const auto [s_l, s_m, s_u] = std::tuple{kThreeNodeSensors[0], kThreeNodeSensors[1], kThreeNodeSensors[2]};
  const std::size_t pairs = for_each_pair(data, dt_bar, [&](const IdSample& a, const IdSample& b) {
    const double tl = sensor(a, s_l), tm = sensor(a, s_m), tu = sensor(a, s_u);
    const double tl1 = sensor(b, s_l), tm1 = sensor(b, s_m), tu1 = sensor(b, s_u);
    const double ta = a.t_ambient;
    // theta = [U_l, U_m, U_u, K_ml, K_um, V_m, V_u]
    Eigen::Matrix<double, 3, 7> w = Eigen::Matrix<double, 3, 7>::Zero();
    w(0, 2) = dt_bar * (tu - ta);
    w(0, 4) = dt_bar * (tu - tm);
    w(0, 6) = rc * (tu1 - tu);
    w(1, 1) = dt_bar * (tm - ta);
    w(1, 3) = dt_bar * (tm - tl);
    w(1, 4) = dt_bar * (tm - tu);
    w(1, 5) = rc * (tm1 - tm);
    w(2, 0) = dt_bar * (tl - ta);
    w(2, 3) = dt_bar * (tl - tm);
    w(2, 5) = -rc * (tl1 - tl);
    w(2, 6) = -rc * (tl1 - tl);
    blocks.push_back(w);
    targets.emplace_back(dt_bar * a.p_upper, dt_bar * a.p_lower, v_total * rc * (tl - tl1));
  });
  if (pairs < 3) throw InputError("three-node regression needs at least 3 usable sample pairs, found " +
                                  std::to_string(pairs));
  RegressionSystem sys;
  const auto n = static_cast<Eigen::Index>(pairs);
  sys.w.resize(3 * n, 7);
  sys.z.resize(3 * n);
  for (Eigen::Index j = 0; j < n; ++j) {
    sys.w.block<3, 7>(3 * j, 0) = blocks[static_cast<std::size_t>(j)];
    sys.z.segment<3>(3 * j) = targets[static_cast<std::size_t>(j)];
  }
  sys.labels = {"U_l", "U_m", "U_u", "K_ml", "K_um", "V_m", "V_u"};
  sys.equations = {"upper", "middle", "lower"};
  sys.pairs = pairs;
  return sys;
}

OlsResult ols_solve(const RegressionSystem& system) {
  const Eigen::Index n = system.w.cols();
  if (system.w.rows() < n) throw InputError("regression is underdetermined");
  if (system.z.size() != system.w.rows()) throw InputError("target length does not match the design matrix");

  Eigen::VectorXd scale = system.w.colwise().norm().transpose();
  std::vector<std::vector<double>> null_dirs;
  for (Eigen::Index c = 0; c < n; ++c) {
    if (scale(c) == 0.0) {
      std::vector<double> e(static_cast<std::size_t>(n), 0.0);
      e[static_cast<std::size_t>(c)] = 1.0;
      null_dirs.push_back(std::move(e));
      scale(c) = 1.0;
    }
  }
  const Eigen::MatrixXd ws = system.w * scale.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(ws, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sigma = svd.singularValues();
  const double smax = sigma(0);
  if (null_dirs.empty()) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (sigma(i) <= kRankTolerance * smax) {
        Eigen::VectorXd d = scale.cwiseInverse().asDiagonal() * svd.matrixV().col(i);
        d.normalize();
        null_dirs.emplace_back(d.data(), d.data() + d.size());
      }
    }
  }
  if (!null_dirs.empty() || smax == 0.0) {
    std::ostringstream msg;
    msg.precision(4);
    msg << "design matrix is rank deficient; unidentifiable directions:";
    for (const auto& d : null_dirs) {
      msg << " [";
      for (std::size_t c = 0; c < d.size(); ++c) msg << (c ? ", " : "") << system.labels[c] << '=' << d[c];
      msg << ']';
    }
    throw RankDeficientError(msg.str(), null_dirs);
  }

  const Eigen::VectorXd theta = scale.cwiseInverse().asDiagonal() * svd.solve(system.z);
  OlsResult r;
  r.theta.assign(theta.data(), theta.data() + theta.size());
  r.labels = system.labels;
  r.equations = system.equations;
  r.condition_number = smax / sigma(n - 1);
  r.pairs = system.pairs;

  const Eigen::VectorXd resid = system.z - system.w * theta;
  const std::size_t m = std::max<std::size_t>(system.rows_per_pair(), 1);
  std::vector<double> ss(m, 0.0);
  std::vector<std::size_t> count(m, 0);
  for (Eigen::Index i = 0; i < resid.size(); ++i) {
    const auto e = static_cast<std::size_t>(i) % m;
    ss[e] += resid(i) * resid(i);
    ++count[e];
  }
  for (std::size_t e = 0; e < m; ++e) r.rms_residual.push_back(count[e] ? std::sqrt(ss[e] / count[e]) : 0.0);
  return r;
}

void check_plausibility(OlsResult& result, double v_total) {
  std::ostringstream fmt;
  fmt.precision(6);
  for (std::size_t i = 0; i < result.theta.size(); ++i) {
    if (!(result.theta[i] > 0.0)) {
      fmt.str("");
      fmt << result.labels[i] << " estimate " << result.theta[i] << " is not positive";
      result.warnings.push_back(fmt.str());
    }
  }
  double volume = 0.0;
  for (std::size_t i = 0; i < result.theta.size(); ++i) {
    if (!result.labels[i].empty() && result.labels[i][0] == 'V') volume += result.theta[i];
  }
  if (result.theta.size() == 2 && volume > v_total) {
    fmt.str("");
    fmt << "V estimate " << volume << " m^3 exceeds the tank volume " << v_total << " m^3";
    result.warnings.push_back(fmt.str());
  }
  if (result.theta.size() == 7 && volume >= v_total) {
    fmt.str("");
    fmt << "V_m + V_u = " << volume << " m^3 leaves no lower volume in a " << v_total << " m^3 tank";
    result.warnings.push_back(fmt.str());
  }
}

OneNodeParams to_one_node_params(const OlsResult& r) {
  if (r.theta.size() != 2) throw InputError("not a one-node estimate");
  return {r.theta[0], r.theta[1]};
}

ThreeNodeParams to_three_node_params(const OlsResult& r, double v_total) {
  if (r.theta.size() != 7) throw InputError("not a three-node estimate");
  ThreeNodeParams p;
  p.u_lower = r.theta[0];
  p.u_middle = r.theta[1];
  p.u_upper = r.theta[2];
  p.k_ml = r.theta[3];
  p.k_um = r.theta[4];
  p.v_middle = r.theta[5];
  p.v_upper = r.theta[6];
  p.v_total = v_total;
  return p;
}

void write_params_section(const OneNodeParams& p, std::ostream& os) {
  os.precision(10);
  os << "[one_node]\nvolume_m3 = " << p.volume << "\nua_w_per_k = " << p.ua << '\n';
}

void write_params_section(const ThreeNodeParams& p, std::ostream& os) {
  os.precision(10);
  os << "[three_node]\n"
     << "u_lower_w_per_k = " << p.u_lower << '\n'
     << "u_middle_w_per_k = " << p.u_middle << '\n'
     << "u_upper_w_per_k = " << p.u_upper << '\n'
     << "k_ml_w_per_k = " << p.k_ml << '\n'
     << "k_um_w_per_k = " << p.k_um << '\n'
     << "v_middle_m3 = " << p.v_middle << '\n'
     << "v_upper_m3 = " << p.v_upper << '\n'
     << "v_total_m3 = " << p.v_total << '\n';
}

void write_id_report_json(const OlsResult& r, const std::string& model, std::ostream& os) {
  nlohmann::json theta = nlohmann::json::object();
  for (std::size_t i = 0; i < r.theta.size(); ++i) theta[r.labels[i]] = r.theta[i];
  nlohmann::json rms = nlohmann::json::object();
  for (std::size_t e = 0; e < r.rms_residual.size() && e < r.equations.size(); ++e)
    rms[r.equations[e]] = r.rms_residual[e];
  nlohmann::json out = {{"model", model},
                        {"theta", theta},
                        {"rms_residual_j", rms},
                        {"condition_number", r.condition_number},
                        {"sample_pairs", r.pairs},
                        {"warnings", r.warnings}};
  os << out.dump(2) << '\n';
}

std::vector<IdSample> read_trajectory_csv(std::istream& is, double t_ambient) {
  std::string line;
  if (!std::getline(is, line)) throw InputError("empty trajectory log");
  std::map<std::string, std::size_t> col;
  {
    std::stringstream ss(line);
    std::string name;
    for (std::size_t i = 0; std::getline(ss, name, ','); ++i) {
      if (!name.empty() && name.back() == '\r') name.pop_back();
      col[name] = i;
    }
  }
  auto need = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw InputError("trajectory log lacks column '" + name + "'");
    return it->second;
  };
  const std::size_t c_t = need("time_s"), c_pl = need("p_lower_w"), c_pu = need("p_upper_w"),
                    c_f = need("flow_m3_per_s");
  std::vector<std::size_t> c_s;
  for (std::size_t s = 1; s <= TankSpec::kSensorCount; ++s) c_s.push_back(need("sensor" + std::to_string(s) + "_k"));

  struct Row {
    double t;
    std::vector<double> sensors;
    double p_lower, p_upper, flow;
  };
  std::vector<Row> rows;
  std::vector<double> v;
  for (std::size_t lineno = 2; std::getline(is, line); ++lineno) {
    if (line.empty() || line == "\r") continue;
    v.clear();
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw InputError("trajectory log line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (v.size() < col.size()) throw InputError("trajectory log line " + std::to_string(lineno) + ": too few columns");
    Row r{v[c_t], {}, v[c_pl], v[c_pu], v[c_f]};
    for (std::size_t c : c_s) r.sensors.push_back(v[c]);
    rows.push_back(std::move(r));
  }
  // A logged row holds the state after a step and the inputs applied during
  // it, so each sample takes its inputs from the following row.
  std::vector<IdSample> out;
  for (std::size_t k = 0; k + 1 < rows.size(); ++k) {
    out.push_back({rows[k].t, rows[k].sensors, rows[k + 1].p_lower, rows[k + 1].p_upper, rows[k + 1].flow, t_ambient});
  }
  if (!rows.empty()) out.push_back({rows.back().t, rows.back().sensors, 0.0, 0.0, 0.0, t_ambient});
  return out;
}

IdDataset segment_log(const std::vector<IdSample>& samples) {
  enum class Kind { flow, heating, rest };
  auto kind_of = [](const IdSample& s) {
    if (s.flow != 0.0) return Kind::flow;
    return s.p_lower > 0.0 || s.p_upper > 0.0 ? Kind::heating : Kind::rest;
  };
  auto terminal = [](IdSample s) {
    s.p_lower = s.p_upper = s.flow = 0.0;
    return s;
  };
  IdDataset data;
  IdSegment current;
  std::optional<Kind> kind;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const bool last = k + 1 == samples.size();
    const Kind kk = last ? Kind::flow : kind_of(samples[k]);
    if (kind && (last || kk != *kind)) {
      // the first sample of the next run closes the current one
      if (*kind != Kind::flow) {
        current.samples.push_back(terminal(samples[k]));
        if (current.samples.size() > 1) data.segments.push_back(std::move(current));
      }
      current = {};
    }
    if (last) break;
    if (!kind || kk != *kind) {
      kind = kk;
      current.regime = kk == Kind::heating ? Regime::heating_cycle : Regime::at_rest;
    }
    if (kk != Kind::flow) current.samples.push_back(samples[k]);
  }
  return data;
}

IdDataset collect_id_data(const TankSpec& tank, const AmbientConditions& ambient, const SimParams& sim,
                          const IdProtocol& protocol) {
  if (!(protocol.log_dt > 0.0)) throw InputError("log interval must be positive");
  const long sub = std::lround(protocol.log_dt / sim.sim_dt);
  if (sub < 1 || std::abs(sub * sim.sim_dt - protocol.log_dt) > 1e-9) throw InputError("log_dt must be a multiple of sim_dt");

  const bool stratified = protocol.initial == IdInitialCondition::stratified;
  TankSimState state = uniform_state(stratified ? protocol.cold_temp : protocol.mixed_temp, sim.n_nodes);
  if (stratified) {
    const auto hot_from = static_cast<std::size_t>(
        std::lround((1.0 - protocol.stratified_fraction) * static_cast<double>(sim.n_nodes)));
    for (std::size_t k = hot_from; k < sim.n_nodes; ++k) state.node_temps[k] = protocol.hot_temp;
  }
  const double p_lower = tank.p_bar_lower;
  const double p_upper = protocol.both_elements ? tank.p_bar_upper : 0.0;

  auto sample = [&](double pl, double pu) {
    return IdSample{state.time, read_sensors(state, tank), pl, pu, 0.0, ambient.t_ambient};
  };
  auto advance = [&](double pl, double pu) {
    for (long i = 0; i < sub; ++i) state = sim_step(state, pl, pu, 0.0, ambient, sim);
  };

  IdDataset data;
  IdSegment heat{Regime::heating_cycle, {}};
  const double heat_end = state.time + protocol.heating_duration;
  while (state.time < heat_end - 1e-9) {
    const auto s = read_sensors(state, tank);
    if (*std::max_element(s.begin(), s.end()) >= protocol.max_temp) break;
    heat.samples.push_back(sample(p_lower, p_upper));
    advance(p_lower, p_upper);
  }
  heat.samples.push_back(sample(0.0, 0.0));
  if (heat.samples.size() > 1) data.segments.push_back(std::move(heat));

  IdSegment rest{Regime::at_rest, {}};
  const double rest_end = state.time + protocol.rest_duration;
  while (state.time < rest_end - 1e-9) {
    rest.samples.push_back(sample(0.0, 0.0));
    advance(0.0, 0.0);
  }
  rest.samples.push_back(sample(0.0, 0.0));
  if (rest.samples.size() > 1) data.segments.push_back(std::move(rest));
  return data;
}

}  // namespace tankmpc
