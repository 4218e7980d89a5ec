#pragma once

// Builders and hand-rolled generators shared by the test suites.

#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "tarmac/tarmac.hpp"

namespace support {

namespace fs = std::filesystem;

struct Gen {
  explicit Gen(std::uint64_t seed) : eng(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng); }
  bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }
  double normal(double mean = 0.0, double sd = 1.0) { return std::normal_distribution<double>(mean, sd)(eng); }
  std::mt19937_64 eng;
};

inline tarmac::TimePoint at(const std::string& iso) { return tarmac::parse_timestamp(iso); }

inline tarmac::FlightRecord flight(std::string id, std::string tail, const std::string& sched_out,
                                   const std::string& sched_in, std::string origin = "LAX",
                                   std::string destination = "SFO") {
  tarmac::FlightRecord f;
  f.flight_id = std::move(id);
  f.tail_number = std::move(tail);
  f.sched_gate_out = at(sched_out);
  f.sched_gate_in = at(sched_in);
  f.date = tarmac::local_date(f.sched_gate_out);
  f.origin = std::move(origin);
  f.destination = std::move(destination);
  return f;
}

inline void set_actual_out(tarmac::FlightRecord& f, const std::string& iso) {
  f.actual_gate_out = at(iso);
  f.dep_delay_min = tarmac::minutes_between(f.sched_gate_out, *f.actual_gate_out);
}

inline tarmac::GpsPoint point(std::string vehicle, std::optional<std::string> call, tarmac::TimePoint t, double lat,
                              double lon, std::optional<double> altitude = 38.0,
                              tarmac::VehicleClass cls = tarmac::VehicleClass::aircraft) {
  tarmac::GpsPoint p;
  p.vehicle_id = std::move(vehicle);
  p.call_sign = std::move(call);
  p.time = t;
  p.lat = lat;
  p.lon = lon;
  p.altitude_m = altitude;
  p.vehicle_class = cls;
  return p;
}

// Fresh empty directory under the system temp dir, unique per process.
inline fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("tarmac_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline fs::path fixture(const std::string& name) { return fs::path(TARMAC_FIXTURES) / name; }

// Small scenario that still exercises every stage; generated once per binary.
inline const tarmac::Scenario& small_scenario() {
  static const tarmac::Scenario sc = [] {
    tarmac::ScenarioSpec spec;
    spec.n_days = 3;
    spec.flights_per_day = 80;
    spec.seed = 11;
    return tarmac::generate(spec);
  }();
  return sc;
}

}  // namespace support
