#include "tankmpc/units.hpp"

#include <array>
#include <cmath>
#include <utility>

namespace tankmpc {
namespace units {

namespace {

struct UnitName {
  Unit unit;
  std::string_view name;
};

constexpr std::array<UnitName, 8> kUnitNames{{
    {Unit::kelvin, "K"},
    {Unit::fahrenheit, "F"},
    {Unit::cubic_metre, "m3"},
    {Unit::gallon, "gal"},
    {Unit::joule, "J"},
    {Unit::kilowatt_hour, "kWh"},
    {Unit::second, "s"},
    {Unit::hour, "h"},
}};

}  // namespace

double convert(double value, Unit from, Unit to) {
  if (from == to) return value;
  switch (from) {
    case Unit::fahrenheit:
      if (to == Unit::kelvin) return fahrenheit_to_kelvin(value);
      break;
    case Unit::kelvin:
      if (to == Unit::fahrenheit) return kelvin_to_fahrenheit(value);
      break;
    case Unit::gallon:
      if (to == Unit::cubic_metre) return gallons_to_cubic_metres(value);
      break;
    case Unit::cubic_metre:
      if (to == Unit::gallon) return cubic_metres_to_gallons(value);
      break;
    case Unit::joule:
      if (to == Unit::kilowatt_hour) return joules_to_kwh(value);
      break;
    case Unit::kilowatt_hour:
      if (to == Unit::joule) return kwh_to_joules(value);
      break;
    case Unit::hour:
      if (to == Unit::second) return hours_to_seconds(value);
      break;
    case Unit::second:
      if (to == Unit::hour) return seconds_to_hours(value);
      break;
  }
  throw InputError("unsupported unit conversion: " + std::string(unit_name(from)) + " -> " +
                   std::string(unit_name(to)));
}

Unit parse_unit(std::string_view name) {
  for (const auto& [unit, n] : kUnitNames) {
    if (n == name) return unit;
  }
  throw InputError("unknown unit '" + std::string(name) + "'");
}

std::string_view unit_name(Unit u) {
  for (const auto& [unit, n] : kUnitNames) {
    if (unit == u) return n;
  }
  return "?";
}

}  // namespace units

void AmbientConditions::validate() const {
  constexpr double lo = units::kKelvinOffset;
  constexpr double hi = units::kKelvinOffset + 100.0;
  if (!(t_ambient >= lo && t_ambient < hi) || !(t_inlet >= lo && t_inlet < hi)) {
    throw InputError("ambient/inlet temperature outside [273.15, 373.15) K");
  }
  if (t_inlet > t_ambient + 50.0) {
    throw InputError("inlet temperature more than 50 K above ambient");
  }
}

std::vector<double> TankSpec::default_sensor_fracs() {
  // Sensors 1-6 equally spaced on the side; 7 and 8 at the element heights.
  std::vector<double> fracs;
  for (int k = 0; k < 6; ++k) fracs.push_back((k + 0.5) / 6.0);
  fracs.push_back(0.2);
  fracs.push_back(0.7);
  return fracs;
}

void TankSpec::validate() const {
  if (!(total_volume > 0.0)) throw InputError("tank volume must be positive");
  if (!(height > 0.0)) throw InputError("tank height must be positive");
  auto in_unit = [](double f) { return f > 0.0 && f < 1.0; };
  if (!in_unit(lower_element_height_frac) || !in_unit(upper_element_height_frac)) {
    throw InputError("element height fractions must lie in (0, 1)");
  }
  if (!(lower_element_height_frac < upper_element_height_frac)) {
    throw InputError("lower element must sit below the upper element");
  }
  if (!(p_bar_lower > 0.0) || !(p_bar_upper > 0.0)) {
    throw InputError("element powers must be positive");
  }
  if (sensor_height_fracs.size() != kSensorCount) {
    throw InputError("tank spec needs exactly 8 sensor heights");
  }
  for (double f : sensor_height_fracs) {
    if (!(f >= 0.0 && f <= 1.0)) throw InputError("sensor height fraction outside [0, 1]");
  }
}

}  // namespace tankmpc
