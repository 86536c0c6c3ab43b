#include "tankmpc/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace tankmpc {

namespace {

struct BaseRow {
  int hour;
  int minute;
  double duration_min;
  double rate_gpm;
};

// Version 1 base table, 36.0 gal/day.
constexpr BaseRow kBaseProfileV1[] = {
    // wake-up cluster
    {6, 30, 4.5, 1.5},  // shower, 6.75 gal
    {7, 0, 1.0, 1.0},
    {7, 20, 2.5, 1.5},  // short shower
    {7, 45, 1.0, 1.0},
    // midday sink draws
    {12, 0, 1.0, 1.0},
    {14, 30, 1.5, 1.0},
    {15, 0, 1.0, 1.5},
    // evening cluster, 11.5 gal inside the 17:00-20:00 window
    {17, 30, 2.0, 1.5},
    {18, 0, 2.0, 1.5},
    {18, 30, 1.5, 1.5},
    {19, 0, 1.5, 1.5},
    {19, 30, 1.0, 1.0},
    {20, 15, 2.0, 1.5},
    {20, 45, 2.5, 1.0},
    {21, 15, 2.5, 1.0},
};

constexpr double kDay = units::kSecondsPerDay;

}  // namespace

DrawProfile::DrawProfile(std::vector<DrawEvent> events) : events_(std::move(events)) {
  std::sort(events_.begin(), events_.end(),
            [](const DrawEvent& a, const DrawEvent& b) { return a.start < b.start; });
  validate();
}

DrawProfile DrawProfile::base() {
  std::vector<DrawEvent> ev;
  for (const auto& r : kBaseProfileV1) {
    ev.push_back({units::hours_to_seconds(r.hour) + units::minutes_to_seconds(r.minute),
                  units::minutes_to_seconds(r.duration_min), units::gpm_to_cubic_metres_per_second(r.rate_gpm)});
  }
  return DrawProfile(std::move(ev));
}

double DrawProfile::daily_volume() const {
  double v = 0.0;
  for (const auto& e : events_) v += e.volume();
  return v;
}

void DrawProfile::validate() const {
  for (std::size_t i = 0; i < events_.size(); ++i) {
    const auto& e = events_[i];
    if (!(e.rate >= 0.0) || !(e.duration >= 0.0)) throw InputError("draw rates and durations must be non-negative");
    if (e.start < 0.0 || e.end() > kDay) throw InputError("draw events must lie within one day");
    if (i > 0 && events_[i - 1].end() > e.start) {
      std::ostringstream msg;
      msg << "draw events overlap: event ending at " << units::seconds_to_hours(events_[i - 1].end())
          << " h runs past the start of the next at " << units::seconds_to_hours(e.start) << " h";
      throw InputError(msg.str());
    }
  }
}

double DrawProfile::volume_between(double t0, double t1) const {
  if (t1 <= t0) return 0.0;
  double vol = 0.0;
  const auto first_day = static_cast<long>(std::floor(t0 / kDay));
  const auto last_day = static_cast<long>(std::floor(t1 / kDay));
  for (long d = first_day; d <= last_day; ++d) {
    const double base = static_cast<double>(d) * kDay;
    for (const auto& e : events_) {
      const double lo = std::max(t0, base + e.start);
      const double hi = std::min(t1, base + e.end());
      if (hi > lo) vol += (hi - lo) * e.rate;
    }
  }
  return vol;
}

DrawProfile scale_profile(const DrawProfile& base, double daily_volume) {
  const double base_volume = base.daily_volume();
  if (!(base_volume > 0.0)) throw InputError("base profile has no volume to scale");
  const double factor = daily_volume / base_volume;
  if (!(factor >= 0.5 * (1.0 - 1e-9) && factor <= 2.0 * (1.0 + 1e-9))) {
    throw InputError("daily volume must lie within 0.5x to 2x of the base profile volume");
  }
  std::vector<DrawEvent> ev = base.events();
  for (auto& e : ev) e.duration *= factor;
  return DrawProfile(std::move(ev));
}

DrawProfile synth_profile(double daily_volume) { return scale_profile(DrawProfile::base(), daily_volume); }

DrawProfile read_profile_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("start_h,duration_min,rate_gpm", 0) != 0) {
    throw InputError("profile CSV must start with header start_h,duration_min,rate_gpm");
  }
  std::vector<DrawEvent> ev;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double start_h = 0, dur_min = 0, gpm = 0;
    if (!(ls >> start_h >> dur_min >> gpm)) throw InputError("malformed profile CSV row: " + line);
    ev.push_back({units::hours_to_seconds(start_h), units::minutes_to_seconds(dur_min),
                  units::gpm_to_cubic_metres_per_second(gpm)});
  }
  return DrawProfile(std::move(ev));
}

void write_profile_csv(const DrawProfile& profile, std::ostream& os) {
  os.precision(12);
  os << "start_h,duration_min,rate_gpm\n";
  const double one_gpm = units::gpm_to_cubic_metres_per_second(1.0);
  for (const auto& e : profile.events()) {
    os << units::seconds_to_hours(e.start) << ',' << e.duration / units::kSecondsPerMinute << ','
       << e.rate / one_gpm << '\n';
  }
}

PriceSchedule::PriceSchedule(std::vector<Segment> segments) : segments_(std::move(segments)) {
  if (segments_.empty()) throw InputError("price schedule needs at least one segment");
  std::sort(segments_.begin(), segments_.end(), [](const Segment& a, const Segment& b) { return a.start < b.start; });
  if (segments_.front().start != 0.0) throw InputError("price schedule must start at midnight");
  min_price_ = segments_.front().price;
  for (const auto& s : segments_) {
    if (!(s.price > 0.0)) throw InputError("prices must be positive");
    if (s.start < 0.0 || s.start >= kDay) throw InputError("price segment start outside the day");
    min_price_ = std::min(min_price_, s.price);
  }
}

PriceSchedule PriceSchedule::time_of_use(double peak_price, double offpeak_price, double peak_start,
                                         double peak_end) {
  if (!(0.0 < peak_start && peak_start < peak_end && peak_end < kDay)) {
    throw InputError("peak window must lie strictly inside the day");
  }
  return PriceSchedule({{0.0, offpeak_price}, {peak_start, peak_price}, {peak_end, offpeak_price}});
}

PriceSchedule PriceSchedule::flat(double price) { return PriceSchedule({{0.0, price}}); }

double PriceSchedule::price_at(double t) const {
  double tod = std::fmod(t, kDay);
  if (tod < 0.0) tod += kDay;
  double price = segments_.front().price;
  for (const auto& s : segments_) {
    if (s.start <= tod) price = s.price;
    else break;
  }
  return price;
}

std::vector<double> PriceSchedule::price_vector(double start, int n, double dt) const {
  std::vector<double> out(static_cast<std::size_t>(std::max(n, 0)));
  for (int k = 0; k < n; ++k) out[static_cast<std::size_t>(k)] = price_at(start + k * dt);
  return out;
}

bool PriceSchedule::is_peak(double t) const { return price_at(t) > min_price_; }

void ForecastSpec::validate() const {
  if (!(alpha > 0.0)) throw InputError("forecast scale factor alpha must be positive");
}

std::vector<double> make_forecast(const DrawProfile& profile, const ForecastSpec& spec, double start,
                                  int n, double dt) {
  spec.validate();
  constexpr double hour = units::kSecondsPerHour;
  const bool sub_hourly = std::fmod(hour, dt) == 0.0;
  const bool multi_hourly = std::fmod(dt, hour) == 0.0;
  if (!(dt > 0.0) || (!sub_hourly && !multi_hourly)) {
    throw InputError("forecast interval must divide one hour or be a multiple of it");
  }
  std::vector<double> out(static_cast<std::size_t>(std::max(n, 0)));
  for (int k = 0; k < n; ++k) {
    const double t = start + k * dt;
    double mean = 0.0;
    if (sub_hourly) {
      const double h0 = std::floor(t / hour) * hour;
      mean = profile.mean_flow(h0, h0 + hour);
    } else {
      mean = profile.mean_flow(t, t + dt);
    }
    out[static_cast<std::size_t>(k)] = spec.alpha * mean;
  }
  return out;
}

void write_forecast_csv(const std::vector<double>& forecast, double start, double dt, std::ostream& os) {
  os.precision(12);
  os << "t_s,flow_m3_per_s\n";
  for (std::size_t k = 0; k < forecast.size(); ++k) os << start + static_cast<double>(k) * dt << ',' << forecast[k] << '\n';
}

}  // namespace tankmpc
