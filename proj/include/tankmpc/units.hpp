#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tankmpc {

/// Raised for any caller-supplied value outside an operation's domain.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Properties of water. Fixed, not configurable.
struct PhysicalConstants {
  static constexpr double rho = 1000.0;  // kg/m^3
  static constexpr double cp = 4181.3;   // J/(kg K)
  static constexpr double volumetric_heat_capacity = rho * cp;  // J/(m^3 K)
};

namespace units {

inline constexpr double kKelvinOffset = 273.15;
inline constexpr double kCubicMetresPerGallon = 0.0037854118;
inline constexpr double kJoulesPerKwh = 3.6e6;
inline constexpr double kSecondsPerHour = 3600.0;
inline constexpr double kSecondsPerMinute = 60.0;
inline constexpr double kSecondsPerDay = 86400.0;

enum class Unit { kelvin, fahrenheit, cubic_metre, gallon, joule, kilowatt_hour, second, hour };

/// Converts between the supported pairs (F<->K, gal<->m^3, J<->kWh, h<->s).
/// Identity conversions are allowed; any other pair throws InputError.
double convert(double value, Unit from, Unit to);

Unit parse_unit(std::string_view name);
std::string_view unit_name(Unit u);

constexpr double fahrenheit_to_kelvin(double f) { return (f - 32.0) * 5.0 / 9.0 + kKelvinOffset; }
constexpr double kelvin_to_fahrenheit(double k) { return (k - kKelvinOffset) * 9.0 / 5.0 + 32.0; }
// Temperature differences (no offset).
constexpr double fahrenheit_delta_to_kelvin(double df) { return df * 5.0 / 9.0; }
constexpr double kelvin_delta_to_fahrenheit(double dk) { return dk * 9.0 / 5.0; }
constexpr double gallons_to_cubic_metres(double g) { return g * kCubicMetresPerGallon; }
constexpr double cubic_metres_to_gallons(double m3) { return m3 / kCubicMetresPerGallon; }
constexpr double joules_to_kwh(double j) { return j / kJoulesPerKwh; }
constexpr double kwh_to_joules(double kwh) { return kwh * kJoulesPerKwh; }
constexpr double hours_to_seconds(double h) { return h * kSecondsPerHour; }
constexpr double seconds_to_hours(double s) { return s / kSecondsPerHour; }
constexpr double minutes_to_seconds(double m) { return m * kSecondsPerMinute; }
constexpr double days_to_seconds(double d) { return d * kSecondsPerDay; }
// Flow rates.
constexpr double gpm_to_cubic_metres_per_second(double gpm) {
  return gallons_to_cubic_metres(gpm) / kSecondsPerMinute;
}

}  // namespace units

// Semantic scalars. Stored in SI; named constructors do the boundary conversions.

class Temperature {
 public:
  constexpr Temperature() = default;
  static constexpr Temperature kelvin(double k) { return Temperature(k); }
  static constexpr Temperature fahrenheit(double f) { return Temperature(units::fahrenheit_to_kelvin(f)); }
  constexpr double kelvin() const { return k_; }
  constexpr double fahrenheit() const { return units::kelvin_to_fahrenheit(k_); }
  friend constexpr auto operator<=>(const Temperature&, const Temperature&) = default;

 private:
  constexpr explicit Temperature(double k) : k_(k) {}
  double k_ = 0.0;
};

class Volume {
 public:
  constexpr Volume() = default;
  static constexpr Volume cubic_metres(double v) { return Volume(v); }
  static constexpr Volume gallons(double g) { return Volume(units::gallons_to_cubic_metres(g)); }
  constexpr double cubic_metres() const { return m3_; }
  constexpr double gallons() const { return units::cubic_metres_to_gallons(m3_); }
  friend constexpr auto operator<=>(const Volume&, const Volume&) = default;

 private:
  constexpr explicit Volume(double v) : m3_(v) {}
  double m3_ = 0.0;
};

class Power {
 public:
  constexpr Power() = default;
  static constexpr Power watts(double w) { return Power(w); }
  static constexpr Power kilowatts(double kw) { return Power(kw * 1000.0); }
  constexpr double watts() const { return w_; }
  friend constexpr auto operator<=>(const Power&, const Power&) = default;

 private:
  constexpr explicit Power(double w) : w_(w) {}
  double w_ = 0.0;
};

class Duration {
 public:
  constexpr Duration() = default;
  static constexpr Duration seconds(double s) { return Duration(s); }
  static constexpr Duration hours(double h) { return Duration(units::hours_to_seconds(h)); }
  static constexpr Duration minutes(double m) { return Duration(units::minutes_to_seconds(m)); }
  constexpr double seconds() const { return s_; }
  constexpr double hours() const { return units::seconds_to_hours(s_); }
  friend constexpr auto operator<=>(const Duration&, const Duration&) = default;

 private:
  constexpr explicit Duration(double s) : s_(s) {}
  double s_ = 0.0;
};

struct AmbientConditions {
  double t_ambient = units::fahrenheit_to_kelvin(70.0);  // K
  double t_inlet = units::fahrenheit_to_kelvin(68.0);    // K

  void validate() const;
};

/// Geometry and element ratings of a two-element tank. Sensor heights are
/// fractions of tank height, index 0 holding sensor 1.
struct TankSpec {
  double total_volume = units::gallons_to_cubic_metres(50.0);  // m^3
  double height = 1.22;                                       // m
  double lower_element_height_frac = 0.2;
  double upper_element_height_frac = 0.7;
  double p_bar_lower = 1130.0;  // W
  double p_bar_upper = 1130.0;  // W
  std::vector<double> sensor_height_fracs = default_sensor_fracs();

  static constexpr std::size_t kSensorCount = 8;
  static std::vector<double> default_sensor_fracs();

  void validate() const;
};

// 1-based sensor numbering used throughout (sensor 7 above the lower element,
// sensor 8 above the upper element, sensor 6 nearest the outlet).
inline constexpr std::size_t sensor_index(int sensor_number) {
  return static_cast<std::size_t>(sensor_number - 1);
}

}  // namespace tankmpc
