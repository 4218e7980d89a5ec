#pragma once

// Parsers for the three raw sources: schedule table, hourly weather, surface
// GPS stream. Malformed rows become RowDiagnostics; nothing is dropped silently,
// so for every parser records + diagnostics == non-blank data rows.

#include <algorithm>
#include <array>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tarmac/csv.hpp"
#include "tarmac/error.hpp"
#include "tarmac/time.hpp"

namespace tarmac {

struct RowDiagnostic {
  std::string source;
  std::size_t line = 0;  // physical line in the input, header is line 1
  std::string reason;

  bool operator==(const RowDiagnostic&) const = default;
};

template <typename Record>
struct ParseResult {
  std::vector<Record> records;
  std::vector<RowDiagnostic> diagnostics;
  std::size_t rows = 0;  // non-blank data rows seen
};

inline void write_diagnostics(std::ostream& out, const std::vector<RowDiagnostic>& diagnostics) {
  out << "source,line,reason\n";
  for (const auto& d : diagnostics) {
    out << csv::quote(d.source) << ',' << d.line << ',' << csv::quote(d.reason) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Schedule

enum class DelayCause { carrier, weather, nas, security, late_aircraft };

inline constexpr std::array<DelayCause, 5> kDelayCauses = {
    DelayCause::carrier, DelayCause::weather, DelayCause::nas, DelayCause::security, DelayCause::late_aircraft};

inline std::string_view to_string(DelayCause cause) {
  switch (cause) {
    case DelayCause::carrier: return "carrier";
    case DelayCause::weather: return "weather";
    case DelayCause::nas: return "nas";
    case DelayCause::security: return "security";
    case DelayCause::late_aircraft: return "late_aircraft";
  }
  return "";
}

inline std::optional<DelayCause> delay_cause_from_string(std::string_view text) {
  for (DelayCause c : kDelayCauses) {
    if (to_string(c) == text) return c;
  }
  return std::nullopt;
}

struct FlightRecord {
  std::string flight_id;    // call sign, reused across dates
  std::string tail_number;  // airframe, links consecutive legs
  Date date{};              // day of sched_gate_out in the airport zone
  TimePoint sched_gate_out{};
  std::optional<TimePoint> actual_gate_out;
  TimePoint sched_gate_in{};
  std::optional<TimePoint> actual_gate_in;
  std::string origin;
  std::string destination;
  std::optional<double> dep_delay_min;  // actual - scheduled gate-out, may be negative
  std::optional<DelayCause> delay_cause;

  bool operator==(const FlightRecord&) const = default;

  std::optional<double> arr_delay_min() const {
    if (!actual_gate_in) return std::nullopt;
    return minutes_between(sched_gate_in, *actual_gate_in);
  }
};

/// Maps logical schedule fields to column names in the file.
struct ScheduleSchema {
  std::string flight_id = "flight_id";
  std::string tail_number = "tail_number";
  std::string date = "date";  // optional column, validated when present
  std::string sched_gate_out = "sched_gate_out";
  std::string actual_gate_out = "actual_gate_out";
  std::string sched_gate_in = "sched_gate_in";
  std::string actual_gate_in = "actual_gate_in";
  std::string origin = "origin";
  std::string destination = "destination";
  std::string delay_cause = "delay_cause";
};

struct ParseOptions {
  char delimiter = ',';
  /// Zone for timestamps without a designator; also defines the "date" of a flight.
  std::optional<TimeZone> airport_zone;
};

namespace detail {

inline std::string field_count_reason(std::size_t expected, std::size_t got) {
  return "expected " + std::to_string(expected) + " fields, got " + std::to_string(got);
}

inline std::optional<TimePoint> optional_time(const std::string& text, const std::optional<TimeZone>& zone) {
  if (text.empty()) return std::nullopt;
  return parse_timestamp(text, zone);
}

}  // namespace detail

inline ParseResult<FlightRecord> parse_schedule(std::istream& in, const ScheduleSchema& schema = {},
                                                const ParseOptions& options = {}) {
  ParseResult<FlightRecord> result;
  csv::LineReader reader(in);
  std::string line;
  if (!reader.next_nonblank(line)) throw SchemaError("schedule: missing header row");
  const csv::Header header(csv::split(line, options.delimiter));
  const std::size_t c_flight = header.require(schema.flight_id);
  const std::size_t c_tail = header.require(schema.tail_number);
  const std::size_t c_sched_out = header.require(schema.sched_gate_out);
  const std::size_t c_sched_in = header.require(schema.sched_gate_in);
  const std::size_t c_origin = header.require(schema.origin);
  const std::size_t c_dest = header.require(schema.destination);
  const auto c_actual_out = header.find(schema.actual_gate_out);
  const auto c_actual_in = header.find(schema.actual_gate_in);
  const auto c_date = header.find(schema.date);
  const auto c_cause = header.find(schema.delay_cause);
  const TimeZone day_zone = options.airport_zone.value_or(TimeZone::utc());

  while (reader.next(line)) {
    if (csv::trim(line).empty()) continue;
    ++result.rows;
    const std::size_t line_no = reader.line_number();
    try {
      const auto fields = csv::split(line, options.delimiter);
      if (fields.size() != header.size()) throw ParseError(detail::field_count_reason(header.size(), fields.size()));
      auto get = [&](std::optional<std::size_t> c) -> const std::string& {
        static const std::string empty;
        return c ? fields[*c] : empty;
      };
      FlightRecord r;
      r.flight_id = fields[c_flight];
      if (r.flight_id.empty()) throw ParseError("missing flight_id");
      r.tail_number = fields[c_tail];
      if (r.tail_number.empty()) throw ParseError("missing tail_number");
      r.origin = fields[c_origin];
      if (r.origin.empty()) throw ParseError("missing origin");
      r.destination = fields[c_dest];
      if (r.destination.empty()) throw ParseError("missing destination");
      if (fields[c_sched_out].empty()) throw ParseError("missing sched_gate_out");
      if (fields[c_sched_in].empty()) throw ParseError("missing sched_gate_in");
      r.sched_gate_out = parse_timestamp(fields[c_sched_out], options.airport_zone);
      r.sched_gate_in = parse_timestamp(fields[c_sched_in], options.airport_zone);
      if (r.sched_gate_in < r.sched_gate_out) throw ParseError("sched_gate_in precedes sched_gate_out");
      r.actual_gate_out = detail::optional_time(get(c_actual_out), options.airport_zone);
      r.actual_gate_in = detail::optional_time(get(c_actual_in), options.airport_zone);
      r.date = local_date(r.sched_gate_out, day_zone);
      if (c_date && !fields[*c_date].empty() && parse_date(fields[*c_date]) != r.date) {
        throw ParseError("date does not match sched_gate_out");
      }
      if (const std::string& cause = get(c_cause); !cause.empty()) {
        r.delay_cause = delay_cause_from_string(cause);
        if (!r.delay_cause) throw ParseError("unknown delay_cause '" + cause + "'");
      }
      if (r.actual_gate_out) r.dep_delay_min = minutes_between(r.sched_gate_out, *r.actual_gate_out);
      result.records.push_back(std::move(r));
    } catch (const ParseError& e) {
      result.diagnostics.push_back({"schedule", line_no, e.what()});
    }
  }
  return result;
}

inline void write_schedule(std::ostream& out, const std::vector<FlightRecord>& records, char delimiter = ',') {
  const char d = delimiter;
  out << "flight_id" << d << "tail_number" << d << "date" << d << "sched_gate_out" << d << "actual_gate_out" << d
      << "sched_gate_in" << d << "actual_gate_in" << d << "origin" << d << "destination" << d << "dep_delay_min" << d
      << "delay_cause\n";
  auto opt_time = [](const std::optional<TimePoint>& t) { return t ? format_timestamp(*t) : std::string(); };
  for (const auto& r : records) {
    out << csv::quote(r.flight_id, d) << d << csv::quote(r.tail_number, d) << d << format_date(r.date) << d
        << format_timestamp(r.sched_gate_out) << d << opt_time(r.actual_gate_out) << d
        << format_timestamp(r.sched_gate_in) << d << opt_time(r.actual_gate_in) << d << csv::quote(r.origin, d) << d
        << csv::quote(r.destination, d) << d << (r.dep_delay_min ? csv::format_double(*r.dep_delay_min) : "") << d
        << (r.delay_cause ? to_string(*r.delay_cause) : "") << '\n';
  }
}

// ---------------------------------------------------------------------------
// Weather

/// Numeric weather fields, in file column order. Units are part of the names.
inline constexpr std::array<std::string_view, 6> kWeatherNumericFields = {
    "temperature_c", "humidity_pct", "pressure_hpa", "wind_speed_mps", "visibility_km", "precipitation_mm"};

struct WeatherObservation {
  TimePoint time{};
  std::array<double, kWeatherNumericFields.size()> values{};
  std::string condition;       // categorical, e.g. "Clear", "Fog"
  std::string wind_direction;  // categorical, 16-point compass

  double temperature_c() const { return values[0]; }
  double visibility_km() const { return values[4]; }

  bool operator==(const WeatherObservation&) const = default;
};

/// Returns observations sorted by time. Duplicate timestamps keep the first
/// occurrence in file order and report the rest.
inline ParseResult<WeatherObservation> parse_weather(std::istream& in, const ParseOptions& options = {}) {
  ParseResult<WeatherObservation> result;
  csv::LineReader reader(in);
  std::string line;
  if (!reader.next_nonblank(line)) throw SchemaError("weather: missing header row");
  const csv::Header header(csv::split(line, options.delimiter));
  const std::size_t c_time = header.require("timestamp");
  std::array<std::size_t, kWeatherNumericFields.size()> c_values{};
  for (std::size_t i = 0; i < kWeatherNumericFields.size(); ++i) {
    c_values[i] = header.require(std::string(kWeatherNumericFields[i]));
  }
  const std::size_t c_condition = header.require("condition");
  const std::size_t c_wind_dir = header.require("wind_direction");

  std::vector<std::pair<WeatherObservation, std::size_t>> rows;
  while (reader.next(line)) {
    if (csv::trim(line).empty()) continue;
    ++result.rows;
    const std::size_t line_no = reader.line_number();
    try {
      const auto fields = csv::split(line, options.delimiter);
      if (fields.size() != header.size()) throw ParseError(detail::field_count_reason(header.size(), fields.size()));
      WeatherObservation obs;
      obs.time = parse_timestamp(fields[c_time], options.airport_zone);
      for (std::size_t i = 0; i < c_values.size(); ++i) {
        obs.values[i] = csv::parse_double(fields[c_values[i]], kWeatherNumericFields[i]);
      }
      obs.condition = fields[c_condition];
      obs.wind_direction = fields[c_wind_dir];
      rows.emplace_back(std::move(obs), line_no);
    } catch (const ParseError& e) {
      result.diagnostics.push_back({"weather", line_no, e.what()});
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first.time < b.first.time; });
  for (auto& [obs, line_no] : rows) {
    if (!result.records.empty() && result.records.back().time == obs.time) {
      result.diagnostics.push_back({"weather", line_no, "duplicate timestamp " + format_timestamp(obs.time)});
      continue;
    }
    result.records.push_back(std::move(obs));
  }
  std::sort(result.diagnostics.begin(), result.diagnostics.end(),
            [](const RowDiagnostic& a, const RowDiagnostic& b) { return a.line < b.line; });
  return result;
}

inline void write_weather(std::ostream& out, const std::vector<WeatherObservation>& records, char delimiter = ',') {
  out << "timestamp";
  for (auto name : kWeatherNumericFields) out << delimiter << name;
  out << delimiter << "condition" << delimiter << "wind_direction\n";
  for (const auto& r : records) {
    out << format_timestamp(r.time);
    for (double v : r.values) out << delimiter << csv::format_double(v);
    out << delimiter << csv::quote(r.condition, delimiter) << delimiter << csv::quote(r.wind_direction, delimiter)
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Surface GPS stream

enum class VehicleClass { aircraft, ground_vehicle, unknown };

inline std::string_view to_string(VehicleClass c) {
  switch (c) {
    case VehicleClass::aircraft: return "aircraft";
    case VehicleClass::ground_vehicle: return "ground_vehicle";
    case VehicleClass::unknown: return "unknown";
  }
  return "unknown";
}

inline VehicleClass vehicle_class_from_string(std::string_view text) {
  if (text == "aircraft") return VehicleClass::aircraft;
  if (text == "ground_vehicle") return VehicleClass::ground_vehicle;
  if (text == "unknown" || text.empty()) return VehicleClass::unknown;
  throw ParseError("unknown vehicle_class '" + std::string(text) + "'");
}

struct GpsPoint {
  std::string vehicle_id;
  std::optional<std::string> call_sign;
  TimePoint time{};
  double lat = 0.0;
  double lon = 0.0;
  std::optional<double> altitude_m;  // absent in raw input is common; cleaned downstream
  VehicleClass vehicle_class = VehicleClass::unknown;

  bool operator==(const GpsPoint&) const = default;
};

namespace detail {

inline void validate_point(const GpsPoint& p) {
  if (p.vehicle_id.empty()) throw ParseError("missing vehicle_id");
  if (!(p.lat >= -90.0 && p.lat <= 90.0)) throw ParseError("lat out of range");
  if (!(p.lon >= -180.0 && p.lon <= 180.0)) throw ParseError("lon out of range");
}

inline GpsPoint point_from_json(const std::string& line, const std::optional<TimeZone>& zone) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw ParseError("truncated or malformed JSON line");
  }
  if (!j.is_object()) throw ParseError("JSON line is not an object");
  auto required = [&](const char* key) -> const nlohmann::json& {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) throw ParseError(std::string("missing ") + key);
    return *it;
  };
  auto number = [](const nlohmann::json& v, const char* key) {
    if (!v.is_number()) throw ParseError(std::string("non-numeric ") + key);
    return v.get<double>();
  };
  GpsPoint p;
  const auto& id = required("vehicle_id");
  if (!id.is_string()) throw ParseError("vehicle_id is not a string");
  p.vehicle_id = id.get<std::string>();
  if (auto it = j.find("call_sign"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ParseError("call_sign is not a string");
    if (!it->get<std::string>().empty()) p.call_sign = it->get<std::string>();
  }
  const auto& ts = required("timestamp");
  if (ts.is_string()) {
    p.time = parse_timestamp(ts.get<std::string>(), zone);
  } else {
    p.time = from_epoch_seconds(number(ts, "timestamp"));
  }
  p.lat = number(required("lat"), "lat");
  p.lon = number(required("lon"), "lon");
  if (auto it = j.find("altitude_m"); it != j.end() && !it->is_null()) p.altitude_m = number(*it, "altitude_m");
  if (auto it = j.find("vehicle_class"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ParseError("vehicle_class is not a string");
    p.vehicle_class = vehicle_class_from_string(it->get<std::string>());
  }
  return p;
}

inline TimePoint trajectory_time(const std::string& text, const std::optional<TimeZone>& zone) {
  // ISO text, or epoch seconds for feeds that emit numeric time
  if (text.size() >= 10 && text[4] == '-') return parse_timestamp(text, zone);
  return from_epoch_seconds(csv::parse_double(text, "timestamp"));
}

}  // namespace detail

/// Delimited text with header, or JSON-lines when the first non-blank byte is '{'.
inline ParseResult<GpsPoint> parse_trajectory_stream(std::istream& in, const ParseOptions& options = {}) {
  ParseResult<GpsPoint> result;
  csv::LineReader reader(in);
  std::string line;
  if (!reader.next_nonblank(line)) return result;

  if (csv::trim(line).front() == '{') {
    do {
      if (csv::trim(line).empty()) continue;
      ++result.rows;
      try {
        GpsPoint p = detail::point_from_json(line, options.airport_zone);
        detail::validate_point(p);
        result.records.push_back(std::move(p));
      } catch (const ParseError& e) {
        result.diagnostics.push_back({"trajectory", reader.line_number(), e.what()});
      }
    } while (reader.next(line));
    return result;
  }

  const csv::Header header(csv::split(line, options.delimiter));
  const std::size_t c_id = header.require("vehicle_id");
  const std::size_t c_time = header.require("timestamp");
  const std::size_t c_lat = header.require("lat");
  const std::size_t c_lon = header.require("lon");
  const auto c_call = header.find("call_sign");
  const auto c_alt = header.find("altitude_m");
  const auto c_class = header.find("vehicle_class");
  while (reader.next(line)) {
    if (csv::trim(line).empty()) continue;
    ++result.rows;
    try {
      const auto fields = csv::split(line, options.delimiter);
      if (fields.size() != header.size()) {
        throw ParseError("truncated line: " + detail::field_count_reason(header.size(), fields.size()));
      }
      GpsPoint p;
      p.vehicle_id = fields[c_id];
      if (c_call && !fields[*c_call].empty()) p.call_sign = fields[*c_call];
      if (fields[c_time].empty()) throw ParseError("missing timestamp");
      p.time = detail::trajectory_time(fields[c_time], options.airport_zone);
      p.lat = csv::parse_double(fields[c_lat], "lat");
      p.lon = csv::parse_double(fields[c_lon], "lon");
      if (c_alt && !fields[*c_alt].empty()) p.altitude_m = csv::parse_double(fields[*c_alt], "altitude_m");
      if (c_class) p.vehicle_class = vehicle_class_from_string(fields[*c_class]);
      detail::validate_point(p);
      result.records.push_back(std::move(p));
    } catch (const ParseError& e) {
      result.diagnostics.push_back({"trajectory", reader.line_number(), e.what()});
    }
  }
  return result;
}

inline void write_trajectory_stream(std::ostream& out, const std::vector<GpsPoint>& points, char delimiter = ',') {
  const char d = delimiter;
  out << "vehicle_id" << d << "call_sign" << d << "timestamp" << d << "lat" << d << "lon" << d << "altitude_m" << d
      << "vehicle_class\n";
  for (const auto& p : points) {
    out << csv::quote(p.vehicle_id, d) << d << csv::quote(p.call_sign.value_or(""), d) << d
        << format_timestamp(p.time) << d << csv::format_double(p.lat) << d << csv::format_double(p.lon) << d
        << (p.altitude_m ? csv::format_double(*p.altitude_m) : "") << d << to_string(p.vehicle_class) << '\n';
  }
}

inline void write_trajectory_jsonl(std::ostream& out, const std::vector<GpsPoint>& points) {
  for (const auto& p : points) {
    nlohmann::json j;
    j["vehicle_id"] = p.vehicle_id;
    if (p.call_sign) j["call_sign"] = *p.call_sign;
    j["timestamp"] = format_timestamp(p.time);
    j["lat"] = p.lat;
    j["lon"] = p.lon;
    if (p.altitude_m) j["altitude_m"] = *p.altitude_m;
    j["vehicle_class"] = std::string(to_string(p.vehicle_class));
    out << j.dump() << '\n';
  }
}

}  // namespace tarmac
