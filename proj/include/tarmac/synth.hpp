#pragma once

// Seeded synthetic airport day generator. Produces the three source files in
// the canonical ingest formats plus a ground-truth sidecar. Departure delay is
// planted as
//
//   delay = base + beta_atc * runway_occupancy + beta_wx * adverse_weather
//         + carryover * max(0, inbound_delay - carryover_absorb) + N(0, sigma)
//
// where runway_occupancy counts distinct aircraft with a runway sample in
// [predicting_time - window, predicting_time] and adverse_weather looks at the
// latest hourly observation at or before predicting_time.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "tarmac/error.hpp"
#include "tarmac/geo.hpp"
#include "tarmac/ingest.hpp"
#include "tarmac/random.hpp"
#include "tarmac/time.hpp"
#include "tarmac/trajectory.hpp"

namespace tarmac {

struct ScenarioSpec {
  int n_days = 7;
  int flights_per_day = 200;  // schedule rows per day: departures plus their inbound legs
  double inbound_share = 0.6;  // fraction of departures whose airframe arrives earlier that day
  double beta_atc = 2.0;       // minutes per aircraft on the runway during the window
  double beta_wx = 8.0;        // minutes when the weather is adverse
  double carryover = 1.0;      // share of inbound delay beyond the absorb buffer that propagates
  double carryover_absorb_min = 20.0;
  double base_delay_min = -8.0;
  double noise_sigma = 3.0;
  double unscheduled_per_hour = 8.0;  // runway operations not in the schedule, daytime mean
  double congestion_spread = 0.75;    // per-(day, hour) traffic multiplier is uniform in [1 - s, 1 + s]
  int ground_vehicles = 6;
  double corrupt_fraction = 0.004;  // extra bad points for the cleaner to remove
  double gap_min = 240.0;
  double window_min = 60.0;
  Date start_date = parse_date("2016-07-01");
  TimeZone zone{std::chrono::minutes{-7 * 60}};
  std::string airport = "LAX";
  std::uint64_t seed = 0;

  void validate() const {
    if (n_days < 1) throw ConfigError("synth: days must be >= 1");
    if (flights_per_day < 2) throw ConfigError("synth: flights_per_day must be >= 2");
    if (!(inbound_share >= 0.0 && inbound_share <= 1.0)) throw ConfigError("synth: inbound_share must be in [0, 1]");
    if (!(beta_atc >= 0.0)) throw ConfigError("synth: beta_atc must be >= 0");
    if (!(beta_wx >= 0.0)) throw ConfigError("synth: beta_wx must be >= 0");
    if (!(noise_sigma >= 0.0)) throw ConfigError("synth: noise_sigma must be >= 0");
    if (!(carryover >= 0.0)) throw ConfigError("synth: carryover must be >= 0");
    if (!(unscheduled_per_hour >= 0.0)) throw ConfigError("synth: unscheduled_per_hour must be >= 0");
    if (!(congestion_spread >= 0.0 && congestion_spread <= 1.0)) {
      throw ConfigError("synth: congestion_spread must be in [0, 1]");
    }
    if (ground_vehicles < 0) throw ConfigError("synth: ground_vehicles must be >= 0");
    if (!(corrupt_fraction >= 0.0 && corrupt_fraction < 1.0)) throw ConfigError("synth: corrupt_fraction must be in [0, 1)");
    if (!(gap_min > 0.0) || !(window_min > 0.0)) throw ConfigError("synth: gap and window must be > 0");
    if (gap_min < 60.0) throw ConfigError("synth: gap must be at least 60 minutes");
  }
};

// ---------------------------------------------------------------------------
// Layout: a stylized airfield in local metres (x east, y north) around a
// reference point. Gates sit in a parking strip, the apron lies north of it,
// then a taxiway corridor (no tarmac zone) and the runway.

struct ScenarioLayout {
  LatLon origin{33.9425, -118.4081};
  double x_min = 0.0, x_max = 1200.0;  // gate row extent
  double parking_y0 = 0.0, parking_y1 = 60.0;
  double apron_y1 = 150.0;
  double taxiway_y1 = 190.0;
  double runway_y1 = 230.0;
  double runway_x0 = -400.0, runway_x1 = 1600.0;
  ZoneMap zones;
  std::vector<std::vector<LatLon>> corridors;  // closed rings outside the tarmac zones

  LatLon at(double x, double y) const {
    const double rad = 180.0 / std::numbers::pi / kEarthRadiusM;
    return {origin.lat + y * rad, origin.lon + x * rad / std::cos(deg_to_rad(origin.lat))};
  }

  std::vector<LatLon> rect(double x0, double y0, double x1, double y1) const {
    return {at(x0, y0), at(x1, y0), at(x1, y1), at(x0, y1), at(x0, y0)};
  }

  double gate_y() const { return 0.5 * (parking_y0 + parking_y1); }
  double runway_y() const { return 0.5 * (taxiway_y1 + runway_y1); }
  double taxiway_y() const { return 0.5 * (apron_y1 + taxiway_y1); }

  bool inside_surface(LatLon p) const {
    if (zones.classify(p) != Zone::other) return true;
    return std::any_of(corridors.begin(), corridors.end(), [&](const auto& ring) { return point_in_ring(p, ring); });
  }
};

inline ScenarioLayout default_layout() {
  ScenarioLayout l;
  l.zones = ZoneMap({
      {Zone::parking, l.rect(l.x_min - 50, l.parking_y0, l.x_max + 50, l.parking_y1)},
      {Zone::apron, l.rect(l.x_min - 50, l.parking_y1, l.x_max + 50, l.apron_y1)},
      {Zone::runway, l.rect(l.runway_x0, l.taxiway_y1, l.runway_x1, l.runway_y1)},
  });
  l.corridors.push_back(l.rect(l.runway_x0, l.apron_y1, l.runway_x1, l.taxiway_y1));
  return l;
}

// ---------------------------------------------------------------------------

struct PlantedFlight {
  std::string flight_id;
  std::string tail_number;
  TimePoint sched_gate_out{};
  TimePoint predicting_time{};
  double runway_occupancy = 0.0;
  double adverse_weather = 0.0;
  double inbound_delay_min = 0.0;  // 0 when there is no inbound leg
  bool has_inbound = false;
  double carryover_min = 0.0;
  double noise_min = 0.0;
  double planted_delay_min = 0.0;
};

struct Scenario {
  ScenarioSpec spec;
  std::vector<FlightRecord> schedule;
  std::vector<WeatherObservation> weather;
  std::vector<GpsPoint> points;
  std::vector<PlantedFlight> planted;
  std::size_t corrupt_points = 0;
  ZoneMap zones;

  nlohmann::json ground_truth() const;
};

namespace detail {

inline constexpr std::array<const char*, 6> kConditions = {"Clear", "Cloudy", "Overcast", "Haze", "Rain", "Fog"};
inline constexpr std::array<double, 6> kConditionWeights = {0.30, 0.22, 0.14, 0.12, 0.11, 0.11};
inline constexpr std::array<const char*, 16> kCompass = {"N", "NNE", "NE", "ENE", "E", "ESE", "SE", "SSE",
                                                         "S", "SSW", "SW", "WSW", "W", "WNW", "NW", "NNW"};
inline constexpr std::array<const char*, 12> kOutstations = {"SFO", "SEA", "DEN", "ORD", "DFW", "JFK",
                                                             "ATL", "PHX", "LAS", "BOS", "SLC", "MSP"};
inline constexpr std::array<const char*, 4> kCarriers = {"AA", "DL", "UA", "WN"};

// departures per local hour (0-23); early morning and evening banks
inline constexpr std::array<double, 24> kDepartureProfile = {0, 0, 0, 0, 0, 0.6, 1.4, 1.6, 1.4, 1.1, 1.0, 1.0,
                                                             1.1, 1.2, 1.2, 1.3, 1.5, 1.6, 1.4, 1.1, 0.9, 0.7, 0.5, 0};
inline constexpr std::array<double, 24> kNightScale = {0.2, 0.15, 0.1, 0.1, 0.15, 0.4, 0.9, 1, 1, 1, 1, 1,
                                                       1, 1, 1, 1, 1, 1, 1, 1, 0.9, 0.8, 0.6, 0.35};

inline std::size_t pick_weighted(Rng& rng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return weights.size() - 1;
}

inline bool adverse(const WeatherObservation& w) { return w.values[4] < 3.0 || w.values[5] > 2.0; }

inline double round_ms(double minutes) { return static_cast<double>(std::llround(minutes * 60000.0)) / 60000.0; }

struct Movement {
  std::string vehicle_id;
  std::optional<std::string> call_sign;
  VehicleClass vehicle_class = VehicleClass::aircraft;
  std::vector<GpsPoint> points;
};

inline int leg_steps(const std::array<double, 2>& a, const std::array<double, 2>& b, double speed) {
  return std::max(1, static_cast<int>(std::ceil(std::hypot(b[0] - a[0], b[1] - a[1]) / speed)));
}

/// Samples a polyline at 1 Hz moving at `speed` m/s, starting at `start`.
/// The endpoint is always emitted. Returns the time after the last sample.
inline TimePoint walk(Movement& m, const ScenarioLayout& layout, const std::vector<std::array<double, 2>>& path,
                      double speed, TimePoint start, Rng& rng) {
  TimePoint t = start;
  auto emit = [&](double x, double y) {
    const LatLon p = layout.at(x, y);
    m.points.push_back({m.vehicle_id, m.call_sign, t, p.lat, p.lon, 38.0 + rng.normal(0.0, 0.3), m.vehicle_class});
    t += std::chrono::seconds{1};
  };
  emit(path[0][0], path[0][1]);
  for (std::size_t s = 1; s < path.size(); ++s) {
    const double dx = path[s][0] - path[s - 1][0];
    const double dy = path[s][1] - path[s - 1][1];
    const int steps = leg_steps(path[s - 1], path[s], speed);
    for (int k = 1; k <= steps; ++k) {
      const double f = static_cast<double>(k) / steps;
      emit(path[s - 1][0] + f * dx, path[s - 1][1] + f * dy);
    }
  }
  return t;
}

/// Seconds needed to traverse `path`, i.e. the time of its last sample relative to the first.
inline int path_seconds(const std::vector<std::array<double, 2>>& path, double speed) {
  int total = 0;
  for (std::size_t s = 1; s < path.size(); ++s) total += leg_steps(path[s - 1], path[s], speed);
  return total;
}

}  // namespace detail

/// Deterministic in (spec, layout).
inline Scenario generate(const ScenarioSpec& spec, const ScenarioLayout& layout = default_layout()) {
  spec.validate();
  for (Zone z : kTarmacZones) {
    if (!layout.zones.has(z)) {
      throw ConfigError("synth: zone map lacks required zone '" + std::string(to_string(z)) + "'");
    }
  }
  using namespace std::chrono;
  using detail::Movement;
  Scenario sc;
  sc.spec = spec;
  sc.zones = layout.zones;
  const auto offset = spec.zone.offset();
  auto local = [&](Date d, double minutes_of_day) { return TimePoint{d} - offset + from_minutes(minutes_of_day); };
  const Date first_day = spec.start_date;
  const Date end_day = first_day + days{spec.n_days};

  // --- weather: hourly, from the day before the first day through the last day
  {
    Rng rng(spec.seed, {1});
    std::size_t cond = 0;
    std::size_t dir = rng.below(16);
    double pressure = 1013.0;
    double day_temp = 0.0;
    for (Date d = first_day - days{1}; d < end_day; d += days{1}) {
      day_temp = rng.normal(0.0, 1.5);
      for (int h = 0; h < 24; ++h) {
        if (!rng.bernoulli(0.65)) cond = detail::pick_weighted(rng, detail::kConditionWeights);
        if (rng.bernoulli(0.3)) dir = (dir + (rng.bernoulli(0.5) ? 1 : 15)) % 16;
        pressure += rng.normal(0.0, 0.3);
        static constexpr std::array<double, 6> vis_mean = {16, 14, 11, 6, 4, 1.2};
        static constexpr std::array<double, 6> vis_sd = {2, 2, 3, 2, 2.5, 0.8};
        WeatherObservation w;
        w.time = local(d, h * 60.0);
        const double temp = 18.0 + 6.0 * std::sin(2.0 * std::numbers::pi * (h - 9) / 24.0) + day_temp + rng.normal(0, 0.5);
        double humidity = 60.0 - 1.5 * (temp - 18.0) + rng.normal(0.0, 4.0);
        if (cond == 4) humidity += 20.0;
        if (cond == 5) humidity += 25.0;
        const double precip = cond == 4 ? rng.exponential(2.5) : 0.0;
        w.values = {std::round(temp * 10) / 10,
                    std::round(std::clamp(humidity, 5.0, 100.0) * 10) / 10,
                    std::round(pressure * 10) / 10,
                    std::round((std::abs(rng.normal(4.0, 2.0)) + (cond == 4 ? 3.0 : 0.0)) * 10) / 10,
                    std::round(std::clamp(rng.normal(vis_mean[cond], vis_sd[cond]), 0.2, 16.0) * 10) / 10,
                    std::round(precip * 10) / 10};
        w.condition = detail::kConditions[cond];
        w.wind_direction = detail::kCompass[dir];
        sc.weather.push_back(std::move(w));
      }
    }
  }
  auto weather_at = [&](TimePoint t) -> const WeatherObservation& {
    auto it = std::upper_bound(sc.weather.begin(), sc.weather.end(), t,
                               [](TimePoint v, const WeatherObservation& w) { return v < w.time; });
    return *std::prev(it);
  };

  // --- daily timetable, reused every day
  struct Slot {
    std::string flight_id;
    std::string inbound_id;
    double sched_out_min = 0.0;  // local minutes of day
    double turnaround_min = 0.0;
    double block_min = 0.0;
    double inbound_block_min = 0.0;
    bool has_inbound = false;
    double gate_x = 0.0;
    std::string destination;
    std::string inbound_origin;
  };
  std::vector<Slot> timetable;
  {
    Rng rng(spec.seed, {2});
    const int departures =
        std::max(1, static_cast<int>(std::lround(spec.flights_per_day / (1.0 + spec.inbound_share))));
    const int with_inbound = static_cast<int>(std::lround(departures * spec.inbound_share));
    for (int i = 0; i < departures; ++i) {
      Slot s;
      const std::string carrier = detail::kCarriers[static_cast<std::size_t>(i) % detail::kCarriers.size()];
      s.flight_id = carrier + std::to_string(100 + i);
      s.inbound_id = carrier + std::to_string(1100 + i);
      const auto hour = detail::pick_weighted(rng, detail::kDepartureProfile);
      s.sched_out_min = static_cast<double>(hour) * 60.0 + 5.0 * static_cast<double>(rng.below(12));
      s.turnaround_min = 300.0 + 5.0 * static_cast<double>(rng.below(37));  // 5 h to 8 h
      s.block_min = 60.0 + 5.0 * static_cast<double>(rng.below(55));
      s.inbound_block_min = 60.0 + 5.0 * static_cast<double>(rng.below(55));
      s.has_inbound = i < with_inbound;
      s.gate_x = layout.x_min + rng.uniform() * (layout.x_max - layout.x_min);
      s.destination = detail::kOutstations[rng.below(detail::kOutstations.size())];
      s.inbound_origin = detail::kOutstations[rng.below(detail::kOutstations.size())];
      timetable.push_back(std::move(s));
    }
    std::stable_sort(timetable.begin(), timetable.end(),
                     [](const Slot& a, const Slot& b) { return a.sched_out_min < b.sched_out_min; });
  }

  std::vector<Movement> movements;
  // runway samples of every aircraft, (time, aircraft id) with ids unique per airframe
  std::vector<std::pair<TimePoint, std::string>> runway_events;
  auto record_runway = [&](const Movement& m) {
    for (const auto& p : m.points) {
      if (layout.zones.classify({p.lat, p.lon}) == Zone::runway) runway_events.emplace_back(p.time, m.vehicle_id);
    }
  };
  const double taxi_speed = 14.5;
  auto runway_roll = [&](double gate_x, Rng& rng) {
    const int seconds = 3 + static_cast<int>(rng.below(10));
    const double dir = gate_x < 0.5 * (layout.runway_x0 + layout.runway_x1) ? 1.0 : -1.0;
    return std::pair{dir, seconds * taxi_speed};
  };

  // --- inbound arrivals
  struct Inbound {
    double delay_min = 0.0;
  };
  std::map<std::pair<int, std::size_t>, Inbound> inbound;  // (day index, slot)
  {
    Rng rng(spec.seed, {3});
    for (int di = 0; di < spec.n_days; ++di) {
      const Date d = first_day + days{di};
      for (std::size_t si = 0; si < timetable.size(); ++si) {
        const Slot& s = timetable[si];
        if (!s.has_inbound) continue;
        const std::string tail = "N" + std::to_string(10000 + di * 1000 + static_cast<int>(si)) ;
        const TimePoint sched_out = local(d, s.sched_out_min);
        const TimePoint sched_in = sched_out - from_minutes(s.turnaround_min);
        double delay = rng.bernoulli(0.5) ? rng.normal(-2.0, 5.0) : std::min(55.0, rng.exponential(25.0));
        delay = detail::round_ms(std::clamp(delay, -20.0, 55.0));
        inbound[{di, si}] = {delay};
        FlightRecord r;
        r.flight_id = s.inbound_id;
        r.tail_number = tail;
        r.date = local_date(sched_in - from_minutes(s.inbound_block_min), spec.zone);
        r.sched_gate_in = sched_in;
        r.actual_gate_in = sched_in + from_minutes(delay);
        r.sched_gate_out = sched_in - from_minutes(s.inbound_block_min);
        const double out_delay = detail::round_ms(delay + rng.normal(0.0, 4.0));
        r.actual_gate_out = r.sched_gate_out + from_minutes(out_delay);
        r.dep_delay_min = minutes_between(r.sched_gate_out, *r.actual_gate_out);
        if (out_delay >= 15.0) r.delay_cause = rng.bernoulli(0.5) ? DelayCause::late_aircraft : DelayCause::carrier;
        r.origin = s.inbound_origin;
        r.destination = spec.airport;
        sc.schedule.push_back(std::move(r));

        Movement m{tail, s.inbound_id, VehicleClass::aircraft, {}};
        const auto [dir, roll] = runway_roll(s.gate_x, rng);
        const double ry = layout.runway_y();
        const std::vector<std::array<double, 2>> path = {
            {s.gate_x - dir * roll, ry}, {s.gate_x, ry}, {s.gate_x, layout.gate_y()}};
        const TimePoint start =
            *sc.schedule.back().actual_gate_in - seconds{detail::path_seconds(path, taxi_speed)};
        detail::walk(m, layout, path, taxi_speed, start, rng);
        record_runway(m);
        movements.push_back(std::move(m));
      }
    }
  }

  // --- unscheduled runway operations with a per-(day, hour) traffic multiplier
  {
    Rng rng(spec.seed, {4});
    int counter = 0;
    for (Date d = first_day; d < end_day; d += days{1}) {
      for (int h = 0; h < 24; ++h) {
        const double multiplier = rng.uniform(1.0 - spec.congestion_spread, 1.0 + spec.congestion_spread);
        const int n = rng.poisson(spec.unscheduled_per_hour * detail::kNightScale[static_cast<std::size_t>(h)] * multiplier);
        for (int k = 0; k < n; ++k) {
          const TimePoint start = local(d, h * 60.0) + seconds{static_cast<long>(rng.below(3600))};
          char id[16];
          std::snprintf(id, sizeof id, "OPS%05d", counter++);
          Movement m{id, std::nullopt, VehicleClass::aircraft, {}};
          const double x = layout.runway_x0 + 200.0 + rng.uniform() * (layout.runway_x1 - layout.runway_x0 - 400.0);
          const auto [dir, roll] = runway_roll(x, rng);
          detail::walk(m, layout, {{x, layout.taxiway_y()}, {x, layout.runway_y()}, {x + dir * roll, layout.runway_y()}},
                       taxi_speed, start, rng);
          record_runway(m);
          movements.push_back(std::move(m));
        }
      }
    }
  }

  // --- ground vehicles shuttling on the apron and parking strips
  {
    Rng rng(spec.seed, {5});
    for (int v = 0; v < spec.ground_vehicles; ++v) {
      char id[16];
      std::snprintf(id, sizeof id, "GSE%02d", v + 1);
      for (Date d = first_day; d < end_day; d += days{1}) {
        for (int h = 5; h < 24; ++h) {
          if (!rng.bernoulli(0.5)) continue;
          Movement m{id, std::nullopt, VehicleClass::ground_vehicle, {}};
          const TimePoint start = local(d, h * 60.0) + seconds{static_cast<long>(rng.below(3500))};
          const double x0 = layout.x_min + rng.uniform() * (layout.x_max - layout.x_min);
          const double y0 = layout.parking_y0 + 5.0 + rng.uniform() * (layout.apron_y1 - layout.parking_y0 - 10.0);
          const double x1 = std::clamp(x0 + rng.uniform(-60.0, 60.0), layout.x_min, layout.x_max);
          const double y1 = layout.parking_y0 + 5.0 + rng.uniform() * (layout.apron_y1 - layout.parking_y0 - 10.0);
          detail::walk(m, layout, {{x0, y0}, {x1, y1}}, 8.0, start, rng);
          movements.push_back(std::move(m));
        }
      }
    }
  }

  std::sort(runway_events.begin(), runway_events.end());
  std::vector<std::pair<TimePoint, std::string>> departure_runway;
  auto occupancy = [&](TimePoint pt) {
    const TimePoint from = pt - from_minutes(spec.window_min);
    std::set<std::string> ids;
    auto lo = std::lower_bound(runway_events.begin(), runway_events.end(), std::pair{from, std::string()});
    for (auto it = lo; it != runway_events.end() && it->first <= pt; ++it) ids.insert(it->second);
    for (const auto& [t, id] : departure_runway) {
      if (t >= from && t <= pt) ids.insert(id);
    }
    return static_cast<double>(ids.size());
  };

  // --- departures in scheduled order; earlier departures shape later occupancy
  {
    Rng rng(spec.seed, {6});
    struct Pending {
      int day;
      std::size_t slot;
      TimePoint sched_out;
    };
    std::vector<Pending> order;
    for (int di = 0; di < spec.n_days; ++di) {
      for (std::size_t si = 0; si < timetable.size(); ++si) {
        order.push_back({di, si, local(first_day + days{di}, timetable[si].sched_out_min)});
      }
    }
    std::stable_sort(order.begin(), order.end(), [](const Pending& a, const Pending& b) { return a.sched_out < b.sched_out; });
    for (const auto& job : order) {
      const Slot& s = timetable[job.slot];
      PlantedFlight pf;
      pf.flight_id = s.flight_id;
      pf.tail_number = "N" + std::to_string(10000 + job.day * 1000 + static_cast<int>(job.slot));
      pf.sched_gate_out = job.sched_out;
      pf.predicting_time = job.sched_out - from_minutes(spec.gap_min);
      pf.runway_occupancy = occupancy(pf.predicting_time);
      pf.adverse_weather = detail::adverse(weather_at(pf.predicting_time)) ? 1.0 : 0.0;
      if (auto it = inbound.find({job.day, job.slot}); it != inbound.end()) {
        pf.has_inbound = true;
        pf.inbound_delay_min = it->second.delay_min;
        pf.carryover_min = spec.carryover * std::max(0.0, pf.inbound_delay_min - spec.carryover_absorb_min);
      }
      pf.noise_min = spec.noise_sigma * rng.normal();
      pf.planted_delay_min = spec.base_delay_min + spec.beta_atc * pf.runway_occupancy +
                             spec.beta_wx * pf.adverse_weather + pf.carryover_min + pf.noise_min;

      FlightRecord r;
      r.flight_id = s.flight_id;
      r.tail_number = pf.tail_number;
      r.date = local_date(job.sched_out, spec.zone);
      r.sched_gate_out = job.sched_out;
      r.actual_gate_out = job.sched_out + from_minutes(pf.planted_delay_min);
      r.sched_gate_in = job.sched_out + from_minutes(s.block_min);
      r.actual_gate_in = *r.actual_gate_out + from_minutes(detail::round_ms(s.block_min + rng.uniform(-10.0, 10.0)));
      r.dep_delay_min = minutes_between(r.sched_gate_out, *r.actual_gate_out);
      r.origin = spec.airport;
      r.destination = s.destination;
      if (pf.planted_delay_min >= 15.0) {
        const std::array<double, 4> parts = {pf.noise_min, spec.beta_wx * pf.adverse_weather,
                                             spec.beta_atc * pf.runway_occupancy, pf.carryover_min};
        static constexpr std::array<DelayCause, 4> causes = {DelayCause::carrier, DelayCause::weather, DelayCause::nas,
                                                             DelayCause::late_aircraft};
        r.delay_cause = causes[static_cast<std::size_t>(std::max_element(parts.begin(), parts.end()) - parts.begin())];
      }

      Movement m{pf.tail_number, s.flight_id, VehicleClass::aircraft, {}};
      const TimePoint pushback = *r.actual_gate_out;
      const int hold_s = 2;
      for (int k = 0; k < hold_s; ++k) {
        detail::walk(m, layout, {{s.gate_x, layout.gate_y()}}, 1.0, pushback + seconds{k}, rng);
      }
      const auto [dir, roll] = runway_roll(s.gate_x, rng);
      const double ry = layout.runway_y();
      detail::walk(m, layout, {{s.gate_x, layout.gate_y()}, {s.gate_x, ry}, {s.gate_x + dir * roll, ry}}, taxi_speed,
                   pushback + seconds{hold_s}, rng);
      for (const auto& p : m.points) {
        if (layout.zones.classify({p.lat, p.lon}) == Zone::runway) departure_runway.emplace_back(p.time, m.vehicle_id);
      }
      movements.push_back(std::move(m));
      sc.schedule.push_back(std::move(r));
      sc.planted.push_back(std::move(pf));
    }
  }

  // Every departure has been placed; its planted occupancy must agree with
  // the complete set of runway samples.
  runway_events.insert(runway_events.end(), departure_runway.begin(), departure_runway.end());
  std::sort(runway_events.begin(), runway_events.end());
  departure_runway.clear();
  for (const auto& pf : sc.planted) {
    if (occupancy(pf.predicting_time) != pf.runway_occupancy) {
      throw Error("synth: occupancy of " + pf.flight_id + " changed after later departures were placed");
    }
  }

  // --- assemble the point stream, inject removable noise
  {
    Rng rng(spec.seed, {7});
    for (auto& m : movements) {
      for (auto& p : m.points) sc.points.push_back(std::move(p));
    }
    std::stable_sort(sc.points.begin(), sc.points.end(), [](const GpsPoint& a, const GpsPoint& b) {
      return std::tie(a.time, a.vehicle_id) < std::tie(b.time, b.vehicle_id);
    });
    if (spec.corrupt_fraction > 0.0) {
      std::vector<GpsPoint> noisy;
      noisy.reserve(sc.points.size() + sc.points.size() / 100);
      for (const auto& p : sc.points) {
        noisy.push_back(p);
        if (!rng.bernoulli(spec.corrupt_fraction)) continue;
        GpsPoint bad = p;
        switch (rng.below(3)) {
          case 0: break;  // exact duplicate
          case 1:
            bad.time += milliseconds{500};
            bad.altitude_m.reset();
            break;
          default:
            bad.time += milliseconds{500};
            bad.lat += 0.05;  // ~5.5 km jump
            break;
        }
        noisy.push_back(std::move(bad));
        ++sc.corrupt_points;
      }
      sc.points = std::move(noisy);
    }
  }

  std::stable_sort(sc.schedule.begin(), sc.schedule.end(), [](const FlightRecord& a, const FlightRecord& b) {
    return std::tie(a.sched_gate_out, a.flight_id) < std::tie(b.sched_gate_out, b.flight_id);
  });
  return sc;
}

inline nlohmann::json Scenario::ground_truth() const {
  nlohmann::json flights = nlohmann::json::array();
  for (const auto& f : planted) {
    flights.push_back({{"flight_id", f.flight_id},
                       {"tail_number", f.tail_number},
                       {"sched_gate_out", format_timestamp(f.sched_gate_out)},
                       {"predicting_time", format_timestamp(f.predicting_time)},
                       {"runway_occupancy", f.runway_occupancy},
                       {"adverse_weather", f.adverse_weather},
                       {"has_inbound", f.has_inbound},
                       {"inbound_delay_min", f.inbound_delay_min},
                       {"carryover_min", f.carryover_min},
                       {"noise_min", f.noise_min},
                       {"planted_delay_min", f.planted_delay_min}});
  }
  return {{"model",
           "delay = base_delay_min + beta_atc * runway_occupancy + beta_wx * adverse_weather"
           " + carryover * max(0, inbound_delay_min - carryover_absorb_min) + noise"},
          {"runway_occupancy", "distinct aircraft with a runway sample in [predicting_time - window_min, predicting_time]"},
          {"adverse_weather", "latest observation at or before predicting_time has visibility_km < 3 or precipitation_mm > 2"},
          {"coefficients",
           {{"base_delay_min", spec.base_delay_min},
            {"beta_atc", spec.beta_atc},
            {"beta_wx", spec.beta_wx},
            {"carryover", spec.carryover},
            {"carryover_absorb_min", spec.carryover_absorb_min},
            {"noise_sigma", spec.noise_sigma}}},
          {"scenario",
           {{"n_days", spec.n_days},
            {"flights_per_day", spec.flights_per_day},
            {"start_date", format_date(spec.start_date)},
            {"timezone", spec.zone.name()},
            {"airport", spec.airport},
            {"gap_min", spec.gap_min},
            {"window_min", spec.window_min},
            {"seed", spec.seed}}},
          {"counts",
           {{"schedule_rows", schedule.size()},
            {"weather_rows", weather.size()},
            {"gps_points", points.size()},
            {"corrupt_points", corrupt_points}}},
          {"flights", flights}};
}

struct ScenarioFiles {
  std::filesystem::path schedule, weather, trajectories, ground_truth, zones;
};

inline ScenarioFiles scenario_files(const std::filesystem::path& dir) {
  return {dir / "schedule.csv", dir / "weather.csv", dir / "trajectories.csv", dir / "ground_truth.json",
          dir / "zones.json"};
}

inline ScenarioFiles write_scenario(const Scenario& sc, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const ScenarioFiles files = scenario_files(dir);
  auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write '" + p.string() + "'");
    return out;
  };
  {
    auto out = open(files.schedule);
    write_schedule(out, sc.schedule);
  }
  {
    auto out = open(files.weather);
    write_weather(out, sc.weather);
  }
  {
    auto out = open(files.trajectories);
    write_trajectory_stream(out, sc.points);
  }
  {
    auto out = open(files.ground_truth);
    out << sc.ground_truth().dump(1) << '\n';
  }
  {
    auto out = open(files.zones);
    out << sc.zones.to_json().dump(1) << '\n';
  }
  return files;
}

}  // namespace tarmac
