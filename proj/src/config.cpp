#include "tankmpc/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace tankmpc {

namespace {

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  while (used < v.size() && std::isspace(static_cast<unsigned char>(v[used]))) ++used;
  if (used == 0 || used != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

int to_int(const std::string& key, const std::string& v) {
  const double x = to_double(key, v);
  if (x != std::floor(x)) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return static_cast<int>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Key {
  Setter set;
  Getter get;
};

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(12);
  os << x;
  return os.str();
}

Key number(std::function<double&(RunConfig&)> field, double scale = 1.0, double offset = 0.0) {
  // stored = value * scale + offset
  return {[=](RunConfig& c, const std::string& k, const std::string& v) { field(c) = to_double(k, v) * scale + offset; },
          [=](const RunConfig& c) { return fmt((field(const_cast<RunConfig&>(c)) - offset) / scale); }};
}

Key fahrenheit(std::function<double&(RunConfig&)> field) {
  return {[=](RunConfig& c, const std::string& k, const std::string& v) {
            field(c) = units::fahrenheit_to_kelvin(to_double(k, v));
          },
          [=](const RunConfig& c) { return fmt(units::kelvin_to_fahrenheit(field(const_cast<RunConfig&>(c)))); }};
}

std::map<std::string, Key> build_keys() {
  const double gal = units::kCubicMetresPerGallon;
  std::map<std::string, Key> k;
  k["tank.volume_gal"] = number([](RunConfig& c) -> double& { return c.tank.total_volume; }, gal);
  k["tank.height_m"] = number([](RunConfig& c) -> double& { return c.tank.height; });
  k["tank.lower_element_frac"] = number([](RunConfig& c) -> double& { return c.tank.lower_element_height_frac; });
  k["tank.upper_element_frac"] = number([](RunConfig& c) -> double& { return c.tank.upper_element_height_frac; });
  k["tank.p_lower_w"] = number([](RunConfig& c) -> double& { return c.tank.p_bar_lower; });
  k["tank.p_upper_w"] = number([](RunConfig& c) -> double& { return c.tank.p_bar_upper; });

  k["ambient.t_ambient_f"] = fahrenheit([](RunConfig& c) -> double& { return c.ambient.t_ambient; });
  k["ambient.t_inlet_f"] = fahrenheit([](RunConfig& c) -> double& { return c.ambient.t_inlet; });

  k["sim.n_nodes"] = {[](RunConfig& c, const std::string& key, const std::string& v) {
                        const int n = to_int(key, v);
                        if (n < 1) throw ConfigError(key + ": must be positive");
                        c.sim.n_nodes = static_cast<std::size_t>(n);
                      },
                      [](const RunConfig& c) { return std::to_string(c.sim.n_nodes); }};
  k["sim.dt_s"] = number([](RunConfig& c) -> double& { return c.sim.sim_dt; });
  k["sim.total_ua_w_per_k"] = number([](RunConfig& c) -> double& { return c.sim.total_ua; });
  k["sim.k_axial_w_per_k"] = number([](RunConfig& c) -> double& { return c.sim.k_axial; });

  k["one_node.volume_m3"] = number([](RunConfig& c) -> double& { return c.one_node.volume; });
  k["one_node.ua_w_per_k"] = number([](RunConfig& c) -> double& { return c.one_node.ua; });
  k["one_node.power_scale"] = number([](RunConfig& c) -> double& { return c.one_node_power_scale; });
  k["one_node.sensing"] = {[](RunConfig& c, const std::string& key, const std::string& v) {
                             if (v == "lower") c.one_node_sensing = OneNodeSensing::lower_element_sensor;
                             else if (v == "average") c.one_node_sensing = OneNodeSensing::average_sensors_2_to_6;
                             else throw ConfigError(key + ": expected lower or average, got '" + v + "'");
                           },
                           [](const RunConfig& c) {
                             return std::string(c.one_node_sensing == OneNodeSensing::lower_element_sensor ? "lower"
                                                                                                            : "average");
                           }};

  k["three_node.u_lower_w_per_k"] = number([](RunConfig& c) -> double& { return c.three_node.u_lower; });
  k["three_node.u_middle_w_per_k"] = number([](RunConfig& c) -> double& { return c.three_node.u_middle; });
  k["three_node.u_upper_w_per_k"] = number([](RunConfig& c) -> double& { return c.three_node.u_upper; });
  k["three_node.k_ml_w_per_k"] = number([](RunConfig& c) -> double& { return c.three_node.k_ml; });
  k["three_node.k_um_w_per_k"] = number([](RunConfig& c) -> double& { return c.three_node.k_um; });
  k["three_node.v_middle_m3"] = number([](RunConfig& c) -> double& { return c.three_node.v_middle; });
  k["three_node.v_upper_m3"] = number([](RunConfig& c) -> double& { return c.three_node.v_upper; });
  k["three_node.v_total_m3"] = number([](RunConfig& c) -> double& { return c.three_node.v_total; });

  k["mpc.dt_s"] = {[](RunConfig& c, const std::string& key, const std::string& v) {
                     const double hours = c.mpc.horizon / 3600.0;
                     c.mpc.dt = to_double(key, v);
                     if (!(c.mpc.dt > 0.0)) throw ConfigError(key + ": must be positive");
                     c.mpc.n_intervals = static_cast<int>(std::lround(hours * 3600.0 / c.mpc.dt));
                   },
                   [](const RunConfig& c) { return fmt(c.mpc.dt); }};
  k["mpc.horizon_h"] = {[](RunConfig& c, const std::string& key, const std::string& v) {
                          c.mpc.horizon = units::hours_to_seconds(to_double(key, v));
                          c.mpc.n_intervals = static_cast<int>(std::lround(c.mpc.horizon / c.mpc.dt));
                        },
                        [](const RunConfig& c) { return fmt(c.mpc.horizon / 3600.0); }};
  k["mpc.substeps"] = {[](RunConfig& c, const std::string& key, const std::string& v) { c.mpc.substeps = to_int(key, v); },
                       [](const RunConfig& c) { return std::to_string(c.mpc.substeps); }};
  k["mpc.t_low_f"] = fahrenheit([](RunConfig& c) -> double& { return c.mpc.t_low; });
  k["mpc.t_high_f"] = fahrenheit([](RunConfig& c) -> double& { return c.mpc.t_high; });
  k["mpc.lambda"] = number([](RunConfig& c) -> double& { return c.mpc.lambda; });
  k["mpc.beta"] = number([](RunConfig& c) -> double& { return c.mpc.beta; });
  k["mpc.tol"] = number([](RunConfig& c) -> double& { return c.mpc.solver.tol; });
  k["mpc.max_iter"] = {[](RunConfig& c, const std::string& key, const std::string& v) {
                         c.mpc.solver.max_iter = to_int(key, v);
                       },
                       [](const RunConfig& c) { return std::to_string(c.mpc.solver.max_iter); }};
  k["mpc.warm_start"] = {[](RunConfig& c, const std::string& key, const std::string& v) {
                           c.mpc.warm_start = to_bool(key, v);
                         },
                         [](const RunConfig& c) { return std::string(c.mpc.warm_start ? "true" : "false"); }};

  k["scenario.daily_volume_gal"] = number([](RunConfig& c) -> double& { return c.daily_volume; }, gal);
  k["scenario.alpha"] = number([](RunConfig& c) -> double& { return c.forecast.alpha; });
  k["scenario.profile_csv"] = {[](RunConfig& c, const std::string& key, const std::string& v) {
                                 std::ifstream f(v);
                                 if (!f) throw ConfigError(key + ": cannot open '" + v + "'");
                                 c.base_profile = read_profile_csv(f);
                               },
                               {}};
  // Prices are kept as the TOU parameters and rebuilt on every change.
  auto tou = [](std::function<void(RunConfig&, double)> set_field) -> Setter {
    return [=](RunConfig& c, const std::string& key, const std::string& v) {
      set_field(c, to_double(key, v));
      c.prices = PriceSchedule::time_of_use(c.tou.peak_price, c.tou.offpeak_price,
                                            units::hours_to_seconds(c.tou.peak_start_h),
                                            units::hours_to_seconds(c.tou.peak_end_h));
    };
  };
  k["scenario.peak_price_usd_per_kwh"] = {tou([](RunConfig& c, double x) { c.tou.peak_price = x; }),
                                          [](const RunConfig& c) { return fmt(c.tou.peak_price); }};
  k["scenario.offpeak_price_usd_per_kwh"] = {tou([](RunConfig& c, double x) { c.tou.offpeak_price = x; }),
                                             [](const RunConfig& c) { return fmt(c.tou.offpeak_price); }};
  k["scenario.peak_start_h"] = {tou([](RunConfig& c, double x) { c.tou.peak_start_h = x; }),
                                [](const RunConfig& c) { return fmt(c.tou.peak_start_h); }};
  k["scenario.peak_end_h"] = {tou([](RunConfig& c, double x) { c.tou.peak_end_h = x; }),
                              [](const RunConfig& c) { return fmt(c.tou.peak_end_h); }};

  k["run.controller"] = {[](RunConfig& c, const std::string&, const std::string& v) {
                           try {
                             c.controller = parse_controller(v);
                           } catch (const InputError& e) {
                             throw ConfigError(std::string("run.controller: ") + e.what());
                           }
                         },
                         [](const RunConfig& c) { return to_string(c.controller); }};
  k["run.days"] = {[](RunConfig& c, const std::string& key, const std::string& v) { c.days = to_int(key, v); },
                   [](const RunConfig& c) { return std::to_string(c.days); }};
  k["run.init_temp_f"] = fahrenheit([](RunConfig& c) -> double& { return c.init_temp; });
  k["run.log_interval_s"] = number([](RunConfig& c) -> double& { return c.log_interval; });
  k["run.thermostat_period_s"] = number([](RunConfig& c) -> double& { return c.thermostat_period; });
  k["run.actuation"] = {[](RunConfig& c, const std::string& key, const std::string& v) {
                          if (v == "on_off" || v == "on-off") c.actuation = ActuationMode::on_off;
                          else if (v == "continuous") c.actuation = ActuationMode::continuous;
                          else throw ConfigError(key + ": expected on_off or continuous, got '" + v + "'");
                        },
                        [](const RunConfig& c) {
                          return std::string(c.actuation == ActuationMode::on_off ? "on_off" : "continuous");
                        }};
  return k;
}

const std::map<std::string, Key>& keys() {
  static const std::map<std::string, Key> k = build_keys();
  return k;
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  auto it = keys().find(key);
  if (it == keys().end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(cfg, key, value);
}

}  // namespace

RunConfig parse_config(std::istream& is, const RunConfig& base) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  RunConfig cfg = base;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("key '" + section + "' outside of a section");
    for (const auto& [name, value] : body) set_key(cfg, section + "." + name, value.data());
  }
  return cfg;
}

RunConfig load_config(const std::string& path, const RunConfig& base) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(f, base);
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not section.key=value");
    set_key(cfg, o.substr(0, eq), o.substr(eq + 1));
  }
}

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& [name, _] : keys()) out.push_back(name);
  return out;
}

void write_config(const RunConfig& cfg, std::ostream& os) {
  std::string current;
  for (const auto& [name, key] : keys()) {
    if (!key.get) continue;
    const auto dot = name.find('.');
    const std::string section = name.substr(0, dot);
    if (section != current) {
      os << (current.empty() ? "" : "\n") << '[' << section << "]\n";
      current = section;
    }
    os << name.substr(dot + 1) << " = " << key.get(cfg) << '\n';
  }
}

}  // namespace tankmpc
