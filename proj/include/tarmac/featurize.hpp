#pragma once

// Per-flight feature vectors at predicting time.
//
// Timeline for one departure:
//   window_start = predicting_time - window      (observation window)
//   predicting_time = sched_gate_out - gap       (delay-predicting gap)
// Nothing observed after predicting_time is read. Schedule rows themselves are
// published in advance, so scheduled times are always visible; actual gate
// times, GPS points and weather observations are events and are only visible
// once they have happened.

#include <algorithm>
#include <array>
#include <cmath>
#include <cctype>
#include <cstdint>
#include <limits>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tarmac/csv.hpp"
#include "tarmac/error.hpp"
#include "tarmac/ingest.hpp"
#include "tarmac/pca.hpp"
#include "tarmac/time.hpp"
#include "tarmac/trajectory.hpp"

namespace tarmac {

// ---------------------------------------------------------------------------
// Source groups

enum class SourceGroup : std::uint8_t { hist = 0, wx = 1, atc = 2 };

inline constexpr std::array<SourceGroup, 3> kSourceGroups = {SourceGroup::hist, SourceGroup::wx, SourceGroup::atc};

inline std::string_view to_string(SourceGroup g) {
  switch (g) {
    case SourceGroup::hist: return "HIST";
    case SourceGroup::wx: return "WX";
    case SourceGroup::atc: return "ATC";
  }
  return "";
}

inline SourceGroup source_group_from_string(std::string_view text) {
  for (SourceGroup g : kSourceGroups) {
    if (to_string(g) == text) return g;
  }
  throw ConfigError("unknown source group '" + std::string(text) + "' (expected HIST, WX or ATC)");
}

/// Set of source groups with set semantics; renders in canonical HIST+WX+ATC order.
class GroupSet {
 public:
  GroupSet() = default;
  GroupSet(std::initializer_list<SourceGroup> groups) {
    for (SourceGroup g : groups) insert(g);
  }

  static GroupSet all() { return {SourceGroup::hist, SourceGroup::wx, SourceGroup::atc}; }

  /// "HIST+ATC", "ATC,HIST", "hist+wx" ...
  static GroupSet parse(std::string_view text) {
    GroupSet set;
    std::string token;
    auto flush = [&] {
      std::string upper;
      for (char c : csv::trim(token)) upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
      if (!upper.empty()) set.insert(source_group_from_string(upper));
      token.clear();
    };
    for (char c : text) {
      if (c == '+' || c == ',' || c == '|') {
        flush();
      } else {
        token.push_back(c);
      }
    }
    flush();
    if (set.empty()) throw ConfigError("empty source group combination");
    return set;
  }

  void insert(SourceGroup g) { bits_ |= static_cast<std::uint8_t>(1U << static_cast<unsigned>(g)); }
  bool contains(SourceGroup g) const { return (bits_ >> static_cast<unsigned>(g)) & 1U; }
  bool empty() const { return bits_ == 0; }

  std::string to_string() const {
    std::string out;
    for (SourceGroup g : kSourceGroups) {
      if (!contains(g)) continue;
      if (!out.empty()) out.push_back('+');
      out.append(tarmac::to_string(g));
    }
    return out;
  }

  bool operator==(const GroupSet&) const = default;

 private:
  std::uint8_t bits_ = 0;
};

// ---------------------------------------------------------------------------
// Configuration and prediction context

struct FeatureConfig {
  double gap_min = 240.0;
  double window_min = 60.0;
  double moving_threshold_mps = 2.0;
  double weather_staleness_h = 6.0;
  int pca_components = kDefaultPcaComponents;
  bool pca_standardize = true;
  std::string airport = "LAX";
  TimeZone zone;  // calendar features and day boundaries
};

class PredictionContext {
 public:
  PredictionContext(const FlightRecord& flight, double gap_min, double window_min)
      : flight_(&flight), gap_min_(gap_min), window_min_(window_min) {
    if (!(gap_min > 0.0)) throw ConfigError("delay-predicting gap must be > 0 minutes");
    if (!(window_min > 0.0)) throw ConfigError("observation window must be > 0 minutes");
  }

  PredictionContext(const FlightRecord& flight, const FeatureConfig& config)
      : PredictionContext(flight, config.gap_min, config.window_min) {}

  const FlightRecord& flight() const { return *flight_; }
  double gap_min() const { return gap_min_; }
  double window_min() const { return window_min_; }
  TimePoint predicting_time() const { return flight_->sched_gate_out - from_minutes(gap_min_); }
  TimePoint window_start() const { return predicting_time() - from_minutes(window_min_); }
  TimePoint window_end() const { return predicting_time(); }

 private:
  const FlightRecord* flight_;
  double gap_min_;
  double window_min_;
};

// ---------------------------------------------------------------------------
// One-hot encoding

/// Vocabulary fixed at fit time, sorted lexicographically. Encodes to
/// |vocabulary| indicators plus a trailing "unknown" indicator.
class OneHotEncoder {
 public:
  OneHotEncoder() = default;
  explicit OneHotEncoder(std::vector<std::string> vocabulary) : vocabulary_(std::move(vocabulary)) {
    std::sort(vocabulary_.begin(), vocabulary_.end());
    vocabulary_.erase(std::unique(vocabulary_.begin(), vocabulary_.end()), vocabulary_.end());
  }

  static OneHotEncoder fit(std::span<const std::string> values) {
    return OneHotEncoder(std::vector<std::string>(values.begin(), values.end()));
  }

  std::size_t width() const { return vocabulary_.size() + 1; }

  void encode_into(std::string_view value, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    auto it = std::lower_bound(vocabulary_.begin(), vocabulary_.end(), value);
    if (it != vocabulary_.end() && *it == value) {
      out[static_cast<std::size_t>(it - vocabulary_.begin())] = 1.0;
    } else {
      out[vocabulary_.size()] = 1.0;
    }
  }

  std::vector<double> encode(std::string_view value) const {
    std::vector<double> out(width());
    encode_into(value, out);
    return out;
  }

  std::vector<std::string> column_names(std::string_view prefix) const {
    std::vector<std::string> names;
    for (const auto& v : vocabulary_) names.push_back(std::string(prefix) + "=" + v);
    names.push_back(std::string(prefix) + "=<unknown>");
    return names;
  }

  const std::vector<std::string>& vocabulary() const { return vocabulary_; }

 private:
  std::vector<std::string> vocabulary_;
};

inline std::vector<double> one_hot(std::string_view value, const std::vector<std::string>& vocabulary) {
  return OneHotEncoder(vocabulary).encode(value);
}

// ---------------------------------------------------------------------------
// Indexed sources

/// Schedule lookups: scheduled departure/arrival times at the airport and
/// per-tail arrival history ordered by actual gate-in.
class ScheduleIndex {
 public:
  ScheduleIndex() = default;
  ScheduleIndex(const std::vector<FlightRecord>& schedule, const std::string& airport) {
    for (const auto& r : schedule) {
      if (airport.empty() || r.origin == airport) departures_.push_back(r.sched_gate_out);
      if (airport.empty() || r.destination == airport) arrivals_.push_back(r.sched_gate_in);
      if (r.actual_gate_in) by_tail_[r.tail_number].push_back(&r);
    }
    std::sort(departures_.begin(), departures_.end());
    std::sort(arrivals_.begin(), arrivals_.end());
    for (auto& [tail, legs] : by_tail_) {
      std::stable_sort(legs.begin(), legs.end(), [](const FlightRecord* a, const FlightRecord* b) {
        return *a->actual_gate_in < *b->actual_gate_in;
      });
    }
  }

  /// Scheduled events with time in (from, to].
  static std::size_t count_in(const std::vector<TimePoint>& sorted, TimePoint from, TimePoint to) {
    auto lo = std::upper_bound(sorted.begin(), sorted.end(), from);
    auto hi = std::upper_bound(sorted.begin(), sorted.end(), to);
    return static_cast<std::size_t>(hi - lo);
  }

  std::size_t departures_in(TimePoint from, TimePoint to) const { return count_in(departures_, from, to); }
  std::size_t arrivals_in(TimePoint from, TimePoint to) const { return count_in(arrivals_, from, to); }

  /// Latest leg of `tail` whose actual gate-in is at or before `cutoff`.
  const FlightRecord* last_arrival(const std::string& tail, TimePoint cutoff, const FlightRecord* exclude) const {
    auto it = by_tail_.find(tail);
    if (it == by_tail_.end()) return nullptr;
    const auto& legs = it->second;
    auto pos = std::upper_bound(legs.begin(), legs.end(), cutoff,
                                [](TimePoint t, const FlightRecord* r) { return t < *r->actual_gate_in; });
    while (pos != legs.begin()) {
      --pos;
      if (*pos != exclude) return *pos;
    }
    return nullptr;
  }

 private:
  std::vector<TimePoint> departures_;
  std::vector<TimePoint> arrivals_;
  std::unordered_map<std::string, std::vector<const FlightRecord*>> by_tail_;
};

/// Flattened, time-sorted labeled surface points.
class AtcIndex {
 public:
  struct Entry {
    TimePoint time;
    std::uint32_t vehicle = 0;
    Zone zone = Zone::other;
    bool aircraft = false;
    double speed_mps = -1.0;  // negative when undefined
  };

  AtcIndex() = default;
  explicit AtcIndex(const std::vector<Trajectory>& trajectories) {
    std::unordered_map<std::string, std::uint32_t> ids;
    std::vector<std::string> names;
    for (const auto& t : trajectories) {
      auto [it, inserted] = ids.try_emplace(t.vehicle_id, static_cast<std::uint32_t>(names.size()));
      if (inserted) names.push_back(t.vehicle_id);
      for (const auto& p : t.points) {
        entries_.push_back({p.point.time, it->second, p.zone, p.point.vehicle_class == VehicleClass::aircraft,
                            p.speed_mps.value_or(-1.0)});
      }
    }
    std::stable_sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) { return a.time < b.time; });
  }

  /// Entries with from <= time <= to.
  std::span<const Entry> between(TimePoint from, TimePoint to) const {
    auto lo = std::lower_bound(entries_.begin(), entries_.end(), from,
                               [](const Entry& e, TimePoint t) { return e.time < t; });
    auto hi = std::upper_bound(lo, entries_.end(), to, [](TimePoint t, const Entry& e) { return t < e.time; });
    return {lo, hi};
  }

  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<Entry> entries_;
};

// ---------------------------------------------------------------------------
// ATC features

struct AtcFeatures {
  // indexed by kTarmacZones order: parking, apron, runway
  std::array<double, 3> aircraft{};  // distinct aircraft with a point in the zone
  std::array<double, 3> density{};   // aircraft points in the zone per window minute
  std::array<double, 3> moving{};    // distinct aircraft moving faster than the threshold
  std::array<double, 3> vehicles{};  // distinct ground vehicles (class != aircraft)
  double potential_takeoffs = 0.0;   // scheduled departures in (predicting_time, +gap]
  double potential_landings = 0.0;   // scheduled arrivals in (predicting_time, +gap]

  static std::vector<std::string> column_names() {
    std::vector<std::string> names;
    for (std::string_view kind : {"aircraft", "density", "moving", "vehicles"}) {
      for (Zone z : kTarmacZones) names.push_back("atc_" + std::string(to_string(z)) + "_" + std::string(kind));
    }
    names.push_back("atc_potential_takeoffs");
    names.push_back("atc_potential_landings");
    return names;
  }

  std::vector<double> values() const {
    std::vector<double> v;
    for (const auto* group : {&aircraft, &density, &moving, &vehicles}) v.insert(v.end(), group->begin(), group->end());
    v.push_back(potential_takeoffs);
    v.push_back(potential_landings);
    return v;
  }
};

inline AtcFeatures atc_features(const PredictionContext& ctx, const AtcIndex& surface, const ScheduleIndex& schedule,
                                double moving_threshold_mps = 2.0) {
  AtcFeatures f;
  std::array<std::vector<std::uint32_t>, 3> aircraft, moving, vehicles;
  std::array<std::size_t, 3> points{};
  for (const auto& e : surface.between(ctx.window_start(), ctx.window_end())) {
    if (e.zone == Zone::other) continue;
    const auto z = static_cast<std::size_t>(e.zone);
    if (e.aircraft) {
      aircraft[z].push_back(e.vehicle);
      ++points[z];
      if (e.speed_mps > moving_threshold_mps) moving[z].push_back(e.vehicle);
    } else {
      vehicles[z].push_back(e.vehicle);
    }
  }
  auto distinct = [](std::vector<std::uint32_t>& v) {
    std::sort(v.begin(), v.end());
    return static_cast<double>(std::unique(v.begin(), v.end()) - v.begin());
  };
  for (std::size_t z = 0; z < 3; ++z) {
    f.aircraft[z] = distinct(aircraft[z]);
    f.moving[z] = distinct(moving[z]);
    f.vehicles[z] = distinct(vehicles[z]);
    f.density[z] = static_cast<double>(points[z]) / ctx.window_min();
  }
  const TimePoint pt = ctx.predicting_time();
  const TimePoint horizon = pt + from_minutes(ctx.gap_min());
  f.potential_takeoffs = static_cast<double>(schedule.departures_in(pt, horizon));
  f.potential_landings = static_cast<double>(schedule.arrivals_in(pt, horizon));
  return f;
}

/// Convenience overload that indexes the raw sources first.
inline AtcFeatures atc_features(const PredictionContext& ctx, const std::vector<Trajectory>& trajectories,
                                const std::vector<FlightRecord>& schedule, const std::string& airport = "LAX",
                                double moving_threshold_mps = 2.0) {
  return atc_features(ctx, AtcIndex(trajectories), ScheduleIndex(schedule, airport), moving_threshold_mps);
}

// ---------------------------------------------------------------------------
// Previous leg (delay propagation)

struct PreviousLeg {
  double inbound_delay_min = 0.0;
  double turnaround_sched_min = 0.0;
  bool has_previous = false;
  std::optional<DelayCause> cause;
};

inline PreviousLeg previous_leg(const PredictionContext& ctx, const ScheduleIndex& schedule) {
  PreviousLeg leg;
  const FlightRecord& flight = ctx.flight();
  const FlightRecord* prev = schedule.last_arrival(flight.tail_number, ctx.predicting_time(), &flight);
  if (prev == nullptr) return leg;
  leg.has_previous = true;
  leg.inbound_delay_min = *prev->arr_delay_min();
  leg.turnaround_sched_min = minutes_between(prev->sched_gate_in, flight.sched_gate_out);
  leg.cause = prev->delay_cause;
  return leg;
}

inline PreviousLeg previous_leg(const PredictionContext& ctx, const std::vector<FlightRecord>& schedule) {
  return previous_leg(ctx, ScheduleIndex(schedule, ""));
}

// ---------------------------------------------------------------------------
// Sources and the fitted featurizer

/// Immutable, indexed view of all three sources.
class SourceIndex {
 public:
  SourceIndex(std::vector<FlightRecord> schedule, std::vector<WeatherObservation> weather,
              const std::vector<Trajectory>& trajectories, const FeatureConfig& config)
      : schedule_(std::move(schedule)), weather_(std::move(weather)), config_(config) {
    std::stable_sort(weather_.begin(), weather_.end(),
                     [](const WeatherObservation& a, const WeatherObservation& b) { return a.time < b.time; });
    schedule_index_ = ScheduleIndex(schedule_, config_.airport);
    surface_ = AtcIndex(trajectories);
  }

  SourceIndex(const SourceIndex&) = delete;
  SourceIndex& operator=(const SourceIndex&) = delete;

  const std::vector<FlightRecord>& schedule() const { return schedule_; }
  const std::vector<WeatherObservation>& weather() const { return weather_; }
  const ScheduleIndex& schedule_index() const { return schedule_index_; }
  const AtcIndex& surface() const { return surface_; }
  const FeatureConfig& config() const { return config_; }

  /// Departures from the configured airport, in schedule order.
  std::vector<const FlightRecord*> departures() const {
    std::vector<const FlightRecord*> out;
    for (const auto& r : schedule_) {
      if (config_.airport.empty() || r.origin == config_.airport) out.push_back(&r);
    }
    return out;
  }

  /// Most recent observation at or before `t`, if it is no older than the staleness cap.
  const WeatherObservation* weather_at(TimePoint t) const {
    auto it = std::upper_bound(weather_.begin(), weather_.end(), t,
                               [](TimePoint x, const WeatherObservation& w) { return x < w.time; });
    if (it == weather_.begin()) return nullptr;
    --it;
    if (minutes_between(it->time, t) > config_.weather_staleness_h * 60.0) return nullptr;
    return &*it;
  }

 private:
  std::vector<FlightRecord> schedule_;
  std::vector<WeatherObservation> weather_;
  FeatureConfig config_;
  ScheduleIndex schedule_index_;
  AtcIndex surface_;
};

/// Training-time state: categorical vocabularies and the weather PCA.
struct Featurizer {
  FeatureConfig config;
  OneHotEncoder condition;
  OneHotEncoder wind_direction;
  PcaModel pca;

  std::size_t raw_weather_width() const {
    return kWeatherNumericFields.size() + condition.width() + wind_direction.width();
  }

  std::vector<std::string> raw_weather_columns() const {
    std::vector<std::string> names;
    for (auto f : kWeatherNumericFields) names.emplace_back(f);
    for (auto& n : condition.column_names("condition")) names.push_back(n);
    for (auto& n : wind_direction.column_names("wind_direction")) names.push_back(n);
    return names;
  }

  void raw_weather_into(const WeatherObservation& obs, std::span<double> out) const {
    std::size_t k = 0;
    for (double v : obs.values) out[k++] = v;
    condition.encode_into(obs.condition, out.subspan(k, condition.width()));
    k += condition.width();
    wind_direction.encode_into(obs.wind_direction, out.subspan(k, wind_direction.width()));
  }

  std::vector<std::string> columns() const;
  std::vector<SourceGroup> column_groups() const;
};

inline std::vector<std::string> hist_column_names() {
  std::vector<std::string> names = {"hist_prev_inbound_delay_min", "hist_prev_turnaround_sched_min",
                                    "hist_prev_has_previous"};
  for (DelayCause c : kDelayCauses) names.push_back("hist_prev_cause_" + std::string(to_string(c)));
  for (const char* n : {"hist_cal_dow", "hist_cal_hour", "hist_cal_hour_sin", "hist_cal_hour_cos",
                        "hist_sched_block_min"}) {
    names.emplace_back(n);
  }
  return names;
}

inline std::vector<std::string> Featurizer::columns() const {
  std::vector<std::string> names = hist_column_names();
  for (Eigen::Index c = 0; c < pca.components(); ++c) {
    std::string n = std::to_string(c + 1);
    names.push_back("wx_pc" + std::string(n.size() < 2 ? "0" : "") + n);
  }
  for (auto& n : AtcFeatures::column_names()) names.push_back(n);
  return names;
}

inline std::vector<SourceGroup> Featurizer::column_groups() const {
  std::vector<SourceGroup> groups(hist_column_names().size(), SourceGroup::hist);
  groups.insert(groups.end(), static_cast<std::size_t>(pca.components()), SourceGroup::wx);
  groups.insert(groups.end(), AtcFeatures::column_names().size(), SourceGroup::atc);
  return groups;
}

/// Fits vocabularies and PCA on the distinct weather observations that the
/// given (training) flights would read.
inline Featurizer fit_featurizer(const SourceIndex& sources, std::span<const FlightRecord* const> train_flights) {
  const FeatureConfig& config = sources.config();
  std::vector<const WeatherObservation*> used;
  for (const FlightRecord* f : train_flights) {
    const PredictionContext ctx(*f, config);
    if (const WeatherObservation* w = sources.weather_at(ctx.predicting_time())) used.push_back(w);
  }
  std::sort(used.begin(), used.end(),
            [](const WeatherObservation* a, const WeatherObservation* b) { return a->time < b->time; });
  used.erase(std::unique(used.begin(), used.end()), used.end());
  if (used.size() < 2) throw Error("featurize: fewer than 2 weather observations available for training rows");

  Featurizer fz;
  fz.config = config;
  std::vector<std::string> conditions, winds;
  for (const auto* w : used) {
    conditions.push_back(w->condition);
    winds.push_back(w->wind_direction);
  }
  fz.condition = OneHotEncoder::fit(conditions);
  fz.wind_direction = OneHotEncoder::fit(winds);

  const auto width = static_cast<Eigen::Index>(fz.raw_weather_width());
  Eigen::MatrixXd raw(static_cast<Eigen::Index>(used.size()), width);
  std::vector<double> buffer(static_cast<std::size_t>(width));
  for (std::size_t i = 0; i < used.size(); ++i) {
    fz.raw_weather_into(*used[i], buffer);
    raw.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(buffer.data(), width);
  }
  const Eigen::Index k = std::min<Eigen::Index>(config.pca_components, width);
  fz.pca = fit_pca(raw, k, config.pca_standardize);
  return fz;
}

enum class RowStatus { ok, stale_weather };

/// Full feature row (all groups, Featurizer::columns() order) for one flight.
inline RowStatus compute_row(const SourceIndex& sources, const Featurizer& fz, const FlightRecord& flight,
                             std::vector<double>& out) {
  const FeatureConfig& config = fz.config;
  const PredictionContext ctx(flight, config);
  const TimePoint pt = ctx.predicting_time();
  const WeatherObservation* obs = sources.weather_at(pt);
  if (obs == nullptr) return RowStatus::stale_weather;

  out.clear();
  // HIST
  const PreviousLeg leg = previous_leg(ctx, sources.schedule_index());
  out.push_back(leg.inbound_delay_min);
  out.push_back(leg.turnaround_sched_min);
  out.push_back(leg.has_previous ? 1.0 : 0.0);
  for (DelayCause c : kDelayCauses) out.push_back(leg.cause == c ? 1.0 : 0.0);
  const TimePoint local = flight.sched_gate_out + config.zone.offset();
  const Date day = std::chrono::floor<std::chrono::days>(local);
  const double hour = std::chrono::duration<double, std::ratio<3600>>(local - TimePoint{day}).count();
  out.push_back(static_cast<double>(std::chrono::weekday{day}.c_encoding()));
  out.push_back(hour);
  out.push_back(std::sin(2.0 * std::numbers::pi * hour / 24.0));
  out.push_back(std::cos(2.0 * std::numbers::pi * hour / 24.0));
  out.push_back(minutes_between(flight.sched_gate_out, flight.sched_gate_in));

  // WX
  const auto width = static_cast<Eigen::Index>(fz.raw_weather_width());
  Eigen::MatrixXd raw(1, width);
  fz.raw_weather_into(*obs, std::span<double>(raw.data(), static_cast<std::size_t>(width)));
  const Eigen::MatrixXd scores = project(fz.pca, raw);
  for (Eigen::Index c = 0; c < scores.cols(); ++c) out.push_back(scores(0, c));

  // ATC
  const AtcFeatures atc = atc_features(ctx, sources.surface(), sources.schedule_index(), config.moving_threshold_mps);
  for (double v : atc.values()) out.push_back(v);
  return RowStatus::ok;
}

// ---------------------------------------------------------------------------
// Feature matrix

struct RowKey {
  std::string flight_id;
  std::string tail_number;
  TimePoint sched_gate_out{};
  TimePoint predicting_time{};
  Date day{};  // calendar day of predicting_time in the airport zone

  bool operator==(const RowKey&) const = default;
};

struct FeatureMatrix {
  std::vector<std::string> columns;
  std::vector<SourceGroup> groups;  // parallel to columns
  Eigen::MatrixXd values;           // rows x columns
  Eigen::VectorXd target;           // dep_delay_min, NaN when unknown
  std::vector<RowKey> rows;

  Eigen::Index n_rows() const { return values.rows(); }

  FeatureMatrix select(const GroupSet& wanted) const {
    std::vector<Eigen::Index> keep;
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (wanted.contains(groups[c])) keep.push_back(static_cast<Eigen::Index>(c));
    }
    FeatureMatrix out;
    out.values.resize(values.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
      out.columns.push_back(columns[static_cast<std::size_t>(keep[j])]);
      out.groups.push_back(groups[static_cast<std::size_t>(keep[j])]);
      out.values.col(static_cast<Eigen::Index>(j)) = values.col(keep[j]);
    }
    out.target = target;
    out.rows = rows;
    return out;
  }

  FeatureMatrix subset_rows(std::span<const std::size_t> indices) const {
    FeatureMatrix out;
    out.columns = columns;
    out.groups = groups;
    out.values.resize(static_cast<Eigen::Index>(indices.size()), values.cols());
    out.target.resize(static_cast<Eigen::Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const auto src = static_cast<Eigen::Index>(indices[i]);
      out.values.row(static_cast<Eigen::Index>(i)) = values.row(src);
      out.target(static_cast<Eigen::Index>(i)) = target(src);
      out.rows.push_back(rows[indices[i]]);
    }
    return out;
  }

  std::vector<std::size_t> columns_in(SourceGroup g) const {
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < groups.size(); ++c) {
      if (groups[c] == g) out.push_back(c);
    }
    return out;
  }
};

struct AssemblyReport {
  std::size_t departures = 0;
  std::size_t rows = 0;
  std::size_t excluded_stale_weather = 0;  // no observation within the staleness cap
  std::size_t excluded_no_target = 0;      // training rows need actual gate-out
};

/// One row per departure; only rows with a known target when `require_target`.
inline FeatureMatrix assemble(const SourceIndex& sources, const Featurizer& fz,
                              std::span<const FlightRecord* const> flights, const GroupSet& groups,
                              bool require_target = true, AssemblyReport* report = nullptr) {
  FeatureMatrix full;
  full.columns = fz.columns();
  full.groups = fz.column_groups();
  AssemblyReport local_report;
  std::vector<std::vector<double>> rows;
  std::vector<double> targets;
  std::vector<double> buffer;
  for (const FlightRecord* f : flights) {
    ++local_report.departures;
    if (require_target && !f->dep_delay_min) {
      ++local_report.excluded_no_target;
      continue;
    }
    if (compute_row(sources, fz, *f, buffer) == RowStatus::stale_weather) {
      ++local_report.excluded_stale_weather;
      continue;
    }
    rows.push_back(buffer);
    targets.push_back(f->dep_delay_min.value_or(std::numeric_limits<double>::quiet_NaN()));
    const PredictionContext ctx(*f, fz.config);
    full.rows.push_back({f->flight_id, f->tail_number, f->sched_gate_out, ctx.predicting_time(),
                         local_date(ctx.predicting_time(), fz.config.zone)});
  }
  full.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(full.columns.size()));
  full.target.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      full.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    }
    full.target(static_cast<Eigen::Index>(i)) = targets[i];
  }
  local_report.rows = rows.size();
  if (report != nullptr) *report = local_report;
  return groups == GroupSet::all() ? full : full.select(groups);
}

// ---------------------------------------------------------------------------
// Persistence: delimited matrix + JSON sidecar

inline nlohmann::json to_json(const Featurizer& fz) {
  return {{"gap_min", fz.config.gap_min},
          {"window_min", fz.config.window_min},
          {"moving_threshold_mps", fz.config.moving_threshold_mps},
          {"weather_staleness_h", fz.config.weather_staleness_h},
          {"pca_components", fz.config.pca_components},
          {"pca_standardize", fz.config.pca_standardize},
          {"airport", fz.config.airport},
          {"timezone", fz.config.zone.name()},
          {"condition_vocabulary", fz.condition.vocabulary()},
          {"wind_direction_vocabulary", fz.wind_direction.vocabulary()},
          {"raw_weather_columns", fz.raw_weather_columns()},
          {"pca", to_json(fz.pca)}};
}

inline Featurizer featurizer_from_json(const nlohmann::json& j) {
  Featurizer fz;
  fz.config.gap_min = j.at("gap_min").get<double>();
  fz.config.window_min = j.at("window_min").get<double>();
  fz.config.moving_threshold_mps = j.at("moving_threshold_mps").get<double>();
  fz.config.weather_staleness_h = j.at("weather_staleness_h").get<double>();
  fz.config.pca_components = j.at("pca_components").get<int>();
  fz.config.pca_standardize = j.at("pca_standardize").get<bool>();
  fz.config.airport = j.at("airport").get<std::string>();
  fz.config.zone = TimeZone::parse(j.at("timezone").get<std::string>());
  fz.condition = OneHotEncoder(j.at("condition_vocabulary").get<std::vector<std::string>>());
  fz.wind_direction = OneHotEncoder(j.at("wind_direction_vocabulary").get<std::vector<std::string>>());
  fz.pca = pca_from_json(j.at("pca"));
  return fz;
}

inline nlohmann::json matrix_columns_json(const FeatureMatrix& m) {
  nlohmann::json cols = nlohmann::json::array();
  for (std::size_t c = 0; c < m.columns.size(); ++c) {
    cols.push_back({{"name", m.columns[c]}, {"group", std::string(to_string(m.groups[c]))}});
  }
  return cols;
}

inline void write_feature_matrix(std::ostream& out, const FeatureMatrix& m) {
  out << "flight_id,tail_number,sched_gate_out,predicting_time";
  for (const auto& c : m.columns) out << ',' << csv::quote(c);
  out << ",dep_delay_min\n";
  for (Eigen::Index i = 0; i < m.n_rows(); ++i) {
    const RowKey& k = m.rows[static_cast<std::size_t>(i)];
    out << csv::quote(k.flight_id) << ',' << csv::quote(k.tail_number) << ',' << format_timestamp(k.sched_gate_out)
        << ',' << format_timestamp(k.predicting_time);
    for (Eigen::Index c = 0; c < m.values.cols(); ++c) out << ',' << csv::format_double(m.values(i, c));
    out << ',' << (std::isnan(m.target(i)) ? std::string() : csv::format_double(m.target(i))) << '\n';
  }
}

/// Reads a matrix written by write_feature_matrix; `columns` is the sidecar's
/// column list (names + groups).
inline FeatureMatrix read_feature_matrix(std::istream& in, const nlohmann::json& columns, const TimeZone& zone = {}) {
  FeatureMatrix m;
  for (const auto& c : columns) {
    m.columns.push_back(c.at("name").get<std::string>());
    m.groups.push_back(source_group_from_string(c.at("group").get<std::string>()));
  }
  csv::LineReader reader(in);
  std::string line;
  if (!reader.next_nonblank(line)) throw SchemaError("feature matrix: missing header row");
  const auto header = csv::split(line);
  if (header.size() != m.columns.size() + 5) throw SchemaError("feature matrix: header does not match sidecar");
  for (std::size_t c = 0; c < m.columns.size(); ++c) {
    if (header[c + 4] != m.columns[c]) throw SchemaError("feature matrix: column '" + header[c + 4] + "' not in sidecar");
  }
  std::vector<std::vector<double>> rows;
  std::vector<double> targets;
  while (reader.next(line)) {
    if (csv::trim(line).empty()) continue;
    try {
      const auto f = csv::split(line);
      if (f.size() != header.size()) throw ParseError("wrong field count");
      RowKey k{f[0], f[1], parse_timestamp(f[2]), parse_timestamp(f[3]), {}};
      k.day = local_date(k.predicting_time, zone);
      m.rows.push_back(std::move(k));
      std::vector<double> v;
      for (std::size_t c = 0; c < m.columns.size(); ++c) v.push_back(csv::parse_double(f[c + 4], m.columns[c]));
      rows.push_back(std::move(v));
      targets.push_back(f.back().empty() ? std::numeric_limits<double>::quiet_NaN() : csv::parse_double(f.back()));
    } catch (const ParseError& e) {
      throw SchemaError("feature matrix line " + std::to_string(reader.line_number()) + ": " + e.what());
    }
  }
  m.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.columns.size()));
  m.target.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < m.columns.size(); ++c) {
      m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    }
    m.target(static_cast<Eigen::Index>(i)) = targets[i];
  }
  return m;
}

}  // namespace tarmac
