#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tankmpc/units.hpp"

namespace tankmpc {

/// One constant-rate draw, repeated every day.
struct DrawEvent {
  double start = 0.0;     // s from midnight
  double duration = 0.0;  // s
  double rate = 0.0;      // m^3/s

  double end() const { return start + duration; }
  double volume() const { return duration * rate; }
};

class DrawProfile {
 public:
  DrawProfile() = default;
  explicit DrawProfile(std::vector<DrawEvent> events);

  /// The shipped 36 gal/day base profile (version 1): a morning cluster,
  /// a few midday sink draws and an evening cluster that straddles the
  /// 5-8 pm window. 30 s granularity, rates of 1 or 1.5 gal/min.
  static DrawProfile base();
  static constexpr int kBaseVersion = 1;

  const std::vector<DrawEvent>& events() const { return events_; }
  double daily_volume() const;  // m^3

  /// Volume drawn over [t0, t1), t in seconds of simulation time. The profile
  /// repeats every 24 h.
  double volume_between(double t0, double t1) const;
  double mean_flow(double t0, double t1) const { return volume_between(t0, t1) / (t1 - t0); }

  void validate() const;

 private:
  std::vector<DrawEvent> events_;
};

/// Base profile with each duration scaled to reach `daily_volume` (m^3);
/// start times and rates are unchanged. Accepts 0.5x to 2x the base volume.
DrawProfile synth_profile(double daily_volume);
DrawProfile scale_profile(const DrawProfile& base, double daily_volume);

/// Event table CSV with header `start_h,duration_min,rate_gpm`.
DrawProfile read_profile_csv(std::istream& is);
void write_profile_csv(const DrawProfile& profile, std::ostream& os);

/// Piecewise-constant daily tariff.
class PriceSchedule {
 public:
  struct Segment {
    double start = 0.0;  // s from midnight
    double price = 0.0;  // $/kWh
  };

  explicit PriceSchedule(std::vector<Segment> segments);

  /// $0.47/kWh from 17:00 to 20:00, $0.21/kWh otherwise.
  static PriceSchedule time_of_use(double peak_price = 0.47, double offpeak_price = 0.21,
                                   double peak_start = units::hours_to_seconds(17.0),
                                   double peak_end = units::hours_to_seconds(20.0));
  static PriceSchedule flat(double price);

  double price_at(double t) const;
  /// Price at the start of each of n intervals of length dt from `start`.
  std::vector<double> price_vector(double start, int n, double dt) const;
  bool is_peak(double t) const;  // price above the daily minimum

  const std::vector<Segment>& segments() const { return segments_; }

 private:
  std::vector<Segment> segments_;
  double min_price_ = 0.0;
};

struct ForecastSpec {
  double alpha = 1.0;  // multiplicative error; 1 is perfect foresight

  void validate() const;
};

/// Hourly-average flow of the true profile, resampled to dt intervals and
/// scaled by alpha. dt must divide an hour or be a multiple of one.
std::vector<double> make_forecast(const DrawProfile& profile, const ForecastSpec& spec, double start,
                                  int n, double dt);

void write_forecast_csv(const std::vector<double>& forecast, double start, double dt, std::ostream& os);

}  // namespace tankmpc
