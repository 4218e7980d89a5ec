#pragma once

// Surface trajectory processing: noise removal, segmentation into movements
// keyed by (vehicle, call sign, date), speeds from distance/time deltas, and
// tarmac zone labels.

#include <algorithm>
#include <array>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "tarmac/csv.hpp"
#include "tarmac/error.hpp"
#include "tarmac/geo.hpp"
#include "tarmac/ingest.hpp"
#include "tarmac/time.hpp"

namespace tarmac {

enum class Zone { parking, apron, runway, other };

inline constexpr std::array<Zone, 3> kTarmacZones = {Zone::parking, Zone::apron, Zone::runway};

inline std::string_view to_string(Zone z) {
  switch (z) {
    case Zone::parking: return "parking";
    case Zone::apron: return "apron";
    case Zone::runway: return "runway";
    case Zone::other: return "other";
  }
  return "other";
}

inline std::optional<Zone> zone_from_string(std::string_view text) {
  for (Zone z : {Zone::parking, Zone::apron, Zone::runway, Zone::other}) {
    if (to_string(z) == text) return z;
  }
  return std::nullopt;
}

struct ZonePolygon {
  Zone zone = Zone::other;
  std::vector<LatLon> ring;  // closed: front() == back()
};

/// Immutable set of tarmac polygons. Overlaps resolve runway > apron > parking.
class ZoneMap {
 public:
  ZoneMap() = default;

  explicit ZoneMap(std::vector<ZonePolygon> polygons) : polygons_(std::move(polygons)) {
    for (std::size_t i = 0; i < polygons_.size(); ++i) {
      const auto& p = polygons_[i];
      if (p.zone == Zone::other) throw ConfigError("zone map: polygon " + std::to_string(i) + " has no tarmac zone");
      if (p.ring.size() < 4) {
        throw ConfigError("zone map: " + std::string(to_string(p.zone)) + " ring needs at least 4 vertices including closure");
      }
      if (!(p.ring.front() == p.ring.back())) {
        throw ConfigError("zone map: " + std::string(to_string(p.zone)) + " ring is not closed");
      }
      Box box{p.ring.front(), p.ring.front()};
      for (const auto& v : p.ring) {
        box.lo.lat = std::min(box.lo.lat, v.lat);
        box.lo.lon = std::min(box.lo.lon, v.lon);
        box.hi.lat = std::max(box.hi.lat, v.lat);
        box.hi.lon = std::max(box.hi.lon, v.lon);
      }
      boxes_.push_back(box);
    }
  }

  static ZoneMap from_json(const nlohmann::json& j) {
    if (!j.contains("zones") || !j["zones"].is_array()) throw ConfigError("zone map: missing \"zones\" array");
    std::vector<ZonePolygon> polygons;
    for (const auto& z : j["zones"]) {
      const std::string name = z.value("name", "");
      auto zone = zone_from_string(name);
      if (!zone || *zone == Zone::other) throw ConfigError("zone map: unknown zone name '" + name + "'");
      if (!z.contains("ring") || !z["ring"].is_array()) throw ConfigError("zone map: zone '" + name + "' has no ring");
      ZonePolygon poly{*zone, {}};
      for (const auto& v : z["ring"]) {
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
          throw ConfigError("zone map: ring vertices must be [lat, lon] pairs");
        }
        poly.ring.push_back({v[0].get<double>(), v[1].get<double>()});
      }
      polygons.push_back(std::move(poly));
    }
    return ZoneMap(std::move(polygons));
  }

  static ZoneMap load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open zone map '" + path + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("zone map '" + path + "': " + e.what());
    }
    return from_json(j);
  }

  nlohmann::json to_json() const {
    nlohmann::json zones = nlohmann::json::array();
    for (const auto& p : polygons_) {
      nlohmann::json ring = nlohmann::json::array();
      for (const auto& v : p.ring) ring.push_back({v.lat, v.lon});
      zones.push_back({{"name", std::string(to_string(p.zone))}, {"ring", ring}});
    }
    return {{"zones", zones}};
  }

  bool has(Zone z) const {
    return std::any_of(polygons_.begin(), polygons_.end(), [z](const ZonePolygon& p) { return p.zone == z; });
  }

  Zone classify(LatLon p) const {
    for (Zone z : {Zone::runway, Zone::apron, Zone::parking}) {
      for (std::size_t i = 0; i < polygons_.size(); ++i) {
        if (polygons_[i].zone != z) continue;
        const Box& b = boxes_[i];
        if (p.lat < b.lo.lat || p.lat > b.hi.lat || p.lon < b.lo.lon || p.lon > b.hi.lon) continue;
        if (point_in_ring(p, polygons_[i].ring)) return z;
      }
    }
    return Zone::other;
  }

  const std::vector<ZonePolygon>& polygons() const { return polygons_; }

 private:
  struct Box {
    LatLon lo;
    LatLon hi;
  };
  std::vector<ZonePolygon> polygons_;
  std::vector<Box> boxes_;
};

// ---------------------------------------------------------------------------
// Cleaning

inline constexpr double kDefaultMaxGroundSpeedMps = 150.0;
inline constexpr double kDefaultGapThresholdS = 900.0;

struct CleanStats {
  std::size_t input = 0;
  std::size_t kept = 0;
  std::size_t missing_altitude = 0;
  std::size_t discontinuity = 0;        // implied speed from previous kept point too high
  std::size_t duplicate_timestamp = 0;  // same vehicle, same instant, same position

  std::size_t dropped() const { return missing_altitude + discontinuity + duplicate_timestamp; }
};

struct CleanResult {
  std::vector<GpsPoint> points;  // grouped per vehicle (first-seen order), time-sorted
  CleanStats stats;
};

inline CleanResult clean_points(std::vector<GpsPoint> points, double max_ground_speed_mps = kDefaultMaxGroundSpeedMps) {
  CleanResult result;
  result.stats.input = points.size();

  std::unordered_map<std::string, std::size_t> group_of;
  std::vector<std::vector<GpsPoint>> groups;
  for (auto& p : points) {
    auto [it, inserted] = group_of.try_emplace(p.vehicle_id, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(std::move(p));
  }

  result.points.reserve(points.size());
  for (auto& group : groups) {
    std::stable_sort(group.begin(), group.end(), [](const GpsPoint& a, const GpsPoint& b) { return a.time < b.time; });
    const GpsPoint* last = nullptr;
    for (auto& p : group) {
      if (!p.altitude_m) {
        ++result.stats.missing_altitude;
        continue;
      }
      if (last != nullptr) {
        const double dt = seconds_between(last->time, p.time);
        const double dist = haversine_m({last->lat, last->lon}, {p.lat, p.lon});
        if (dt == 0.0) {
          if (dist == 0.0) {
            ++result.stats.duplicate_timestamp;
          } else {
            ++result.stats.discontinuity;
          }
          continue;
        }
        if (dist / dt > max_ground_speed_mps) {
          ++result.stats.discontinuity;
          continue;
        }
      }
      result.points.push_back(std::move(p));
      last = &result.points.back();
    }
  }
  result.stats.kept = result.points.size();
  return result;
}

// ---------------------------------------------------------------------------
// Segmentation and per-trajectory processing

struct TrajectoryPoint {
  GpsPoint point;
  std::optional<double> speed_mps;  // undefined for the first point
  Zone zone = Zone::other;

  bool operator==(const TrajectoryPoint&) const = default;
};

struct Trajectory {
  std::string vehicle_id;
  std::optional<std::string> call_sign;
  Date date{};
  std::size_t sequence = 0;  // n-th movement for the same (vehicle, call sign, date)
  VehicleClass vehicle_class = VehicleClass::unknown;
  std::vector<TrajectoryPoint> points;

  std::string id() const {
    return vehicle_id + "/" + call_sign.value_or("-") + "/" + format_date(date) + "/" + std::to_string(sequence);
  }

  bool operator==(const Trajectory&) const = default;
};

struct SegmentOptions {
  double gap_threshold_s = kDefaultGapThresholdS;
  TimeZone day_zone;  // which calendar day a point belongs to
};

/// Partitions points by (vehicle_id, call_sign, date); inside a key a silence
/// longer than the gap threshold starts a new trajectory.
inline std::vector<Trajectory> segment(const std::vector<GpsPoint>& points, const SegmentOptions& options = {}) {
  using Key = std::tuple<std::string, std::string, bool, Date>;
  std::map<Key, std::vector<const GpsPoint*>> keyed;
  for (const auto& p : points) {
    keyed[{p.vehicle_id, p.call_sign.value_or(""), p.call_sign.has_value(), local_date(p.time, options.day_zone)}]
        .push_back(&p);
  }

  std::vector<Trajectory> out;
  for (auto& [key, members] : keyed) {
    std::stable_sort(members.begin(), members.end(),
                     [](const GpsPoint* a, const GpsPoint* b) { return a->time < b->time; });
    std::size_t sequence = 0;
    Trajectory* current = nullptr;
    const GpsPoint* previous = nullptr;
    for (const GpsPoint* p : members) {
      if (current == nullptr || seconds_between(previous->time, p->time) > options.gap_threshold_s) {
        Trajectory t;
        t.vehicle_id = p->vehicle_id;
        t.call_sign = p->call_sign;
        t.date = std::get<3>(key);
        t.sequence = sequence++;
        t.vehicle_class = p->vehicle_class;
        out.push_back(std::move(t));
        current = &out.back();
      }
      current->points.push_back({*p, std::nullopt, Zone::other});
      previous = p;
    }
  }
  return out;
}

/// speed_i = haversine(p_{i-1}, p_i) / (t_i - t_{i-1}).
inline Trajectory compute_kinematics(Trajectory t) {
  for (std::size_t i = 0; i < t.points.size(); ++i) {
    if (i == 0) {
      t.points[i].speed_mps.reset();
      continue;
    }
    const auto& prev = t.points[i - 1].point;
    const auto& cur = t.points[i].point;
    const double dt = seconds_between(prev.time, cur.time);
    if (dt == 0.0) throw ContractViolation("zero time delta at index " + std::to_string(i));
    if (dt < 0.0) throw ContractViolation("timestamp decreases at index " + std::to_string(i));
    t.points[i].speed_mps = haversine_m({prev.lat, prev.lon}, {cur.lat, cur.lon}) / dt;
  }
  return t;
}

inline Trajectory label_zones(Trajectory t, const ZoneMap& zones) {
  for (auto& p : t.points) p.zone = zones.classify({p.point.lat, p.point.lon});
  return t;
}

// ---------------------------------------------------------------------------
// Labeled trajectory files (output of the clean stage)

inline void write_labeled_trajectories(std::ostream& out, const std::vector<Trajectory>& trajectories) {
  out << "trajectory_id,vehicle_id,call_sign,date,sequence,timestamp,lat,lon,altitude_m,vehicle_class,speed_mps,zone\n";
  for (const auto& t : trajectories) {
    const std::string id = csv::quote(t.id());
    const std::string head = id + ',' + csv::quote(t.vehicle_id) + ',' + csv::quote(t.call_sign.value_or("")) + ',' +
                             format_date(t.date) + ',' + std::to_string(t.sequence) + ',';
    for (const auto& tp : t.points) {
      const auto& p = tp.point;
      out << head << format_timestamp(p.time) << ',' << csv::format_double(p.lat) << ',' << csv::format_double(p.lon)
          << ',' << (p.altitude_m ? csv::format_double(*p.altitude_m) : "") << ',' << to_string(p.vehicle_class) << ','
          << (tp.speed_mps ? csv::format_double(*tp.speed_mps) : "") << ',' << to_string(tp.zone) << '\n';
    }
  }
}

inline std::vector<Trajectory> read_labeled_trajectories(std::istream& in) {
  csv::LineReader reader(in);
  std::string line;
  if (!reader.next_nonblank(line)) throw SchemaError("labeled trajectories: missing header row");
  const csv::Header header(csv::split(line));
  const std::size_t c_id = header.require("trajectory_id");
  const std::size_t c_vehicle = header.require("vehicle_id");
  const std::size_t c_call = header.require("call_sign");
  const std::size_t c_date = header.require("date");
  const std::size_t c_seq = header.require("sequence");
  const std::size_t c_time = header.require("timestamp");
  const std::size_t c_lat = header.require("lat");
  const std::size_t c_lon = header.require("lon");
  const std::size_t c_alt = header.require("altitude_m");
  const std::size_t c_class = header.require("vehicle_class");
  const std::size_t c_speed = header.require("speed_mps");
  const std::size_t c_zone = header.require("zone");

  std::vector<Trajectory> out;
  std::string current_id;
  while (reader.next(line)) {
    if (csv::trim(line).empty()) continue;
    try {
      const auto f = csv::split(line);
      if (f.size() != header.size()) throw ParseError("wrong field count");
      if (out.empty() || f[c_id] != current_id) {
        Trajectory t;
        t.vehicle_id = f[c_vehicle];
        if (!f[c_call].empty()) t.call_sign = f[c_call];
        t.date = parse_date(f[c_date]);
        t.sequence = static_cast<std::size_t>(csv::parse_int(f[c_seq], "sequence"));
        t.vehicle_class = vehicle_class_from_string(f[c_class]);
        out.push_back(std::move(t));
        current_id = f[c_id];
      }
      TrajectoryPoint tp;
      tp.point.vehicle_id = f[c_vehicle];
      tp.point.call_sign = out.back().call_sign;
      tp.point.time = parse_timestamp(f[c_time]);
      tp.point.lat = csv::parse_double(f[c_lat], "lat");
      tp.point.lon = csv::parse_double(f[c_lon], "lon");
      if (!f[c_alt].empty()) tp.point.altitude_m = csv::parse_double(f[c_alt], "altitude_m");
      tp.point.vehicle_class = vehicle_class_from_string(f[c_class]);
      if (!f[c_speed].empty()) tp.speed_mps = csv::parse_double(f[c_speed], "speed_mps");
      auto zone = zone_from_string(f[c_zone]);
      if (!zone) throw ParseError("unknown zone '" + f[c_zone] + "'");
      tp.zone = *zone;
      out.back().points.push_back(std::move(tp));
    } catch (const ParseError& e) {
      // This file is produced by the clean stage; damage here is not row noise.
      throw SchemaError("labeled trajectories line " + std::to_string(reader.line_number()) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace tarmac
