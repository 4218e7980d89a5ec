#pragma once

// Pipeline configuration: a TOML subset (sections, key = value, strings,
// numbers, booleans, arrays of strings, # comments), environment overrides
// TARMAC_<SECTION>_<KEY>, and a canonical serializer.

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include "tarmac/csv.hpp"
#include "tarmac/error.hpp"
#include "tarmac/evaluate.hpp"
#include "tarmac/featurize.hpp"
#include "tarmac/model.hpp"
#include "tarmac/synth.hpp"
#include "tarmac/time.hpp"
#include "tarmac/trajectory.hpp"

namespace tarmac {

// ---------------------------------------------------------------------------
// TOML subset

using TomlValue = std::variant<std::string, std::int64_t, double, bool, std::vector<std::string>>;

struct TomlEntry {
  std::string section;  // "" for top level, "model.gbdt" for dotted tables
  std::string key;
  TomlValue value;
  std::size_t line = 0;
};

namespace detail {

inline std::string parse_toml_string(std::string_view text, std::size_t& pos, std::size_t line) {
  // pos at the opening quote
  std::string out;
  ++pos;
  while (pos < text.size() && text[pos] != '"') {
    char c = text[pos++];
    if (c == '\\') {
      if (pos >= text.size()) break;
      const char e = text[pos++];
      switch (e) {
        case 'n': c = '\n'; break;
        case 't': c = '\t'; break;
        case '"': c = '"'; break;
        case '\\': c = '\\'; break;
        default: throw ConfigError("config line " + std::to_string(line) + ": unsupported escape \\" + std::string(1, e));
      }
    }
    out.push_back(c);
  }
  if (pos >= text.size()) throw ConfigError("config line " + std::to_string(line) + ": unterminated string");
  ++pos;
  return out;
}

inline void skip_space(std::string_view text, std::size_t& pos) {
  while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
}

inline void expect_end(std::string_view text, std::size_t pos, std::size_t line) {
  skip_space(text, pos);
  if (pos < text.size() && text[pos] != '#') {
    throw ConfigError("config line " + std::to_string(line) + ": unexpected text '" + std::string(text.substr(pos)) + "'");
  }
}

inline TomlValue parse_toml_scalar(std::string_view raw, std::size_t line) {
  const std::string_view v = csv::trim(raw);
  if (v == "true") return true;
  if (v == "false") return false;
  const bool integral = !v.empty() && v.find_first_of(".eE") == std::string_view::npos &&
                        v.find_first_not_of("+-0123456789_") == std::string_view::npos;
  std::string cleaned(v);
  std::erase(cleaned, '_');
  try {
    if (integral) return static_cast<std::int64_t>(csv::parse_int(cleaned, "value"));
    return csv::parse_double(cleaned, "value");
  } catch (const ParseError&) {
    throw ConfigError("config line " + std::to_string(line) + ": cannot parse value '" + std::string(v) + "'");
  }
}

}  // namespace detail

inline std::vector<TomlEntry> parse_toml(std::istream& in) {
  std::vector<TomlEntry> entries;
  std::string section;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    std::string_view text = raw;
    std::size_t pos = 0;
    detail::skip_space(text, pos);
    if (pos == text.size() || text[pos] == '#') continue;
    if (text[pos] == '[') {
      const auto close = text.find(']', pos);
      if (close == std::string_view::npos) throw ConfigError("config line " + std::to_string(line_no) + ": missing ']'");
      section = std::string(csv::trim(text.substr(pos + 1, close - pos - 1)));
      if (section.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty section name");
      detail::expect_end(text, close + 1, line_no);
      continue;
    }
    const auto eq = text.find('=', pos);
    if (eq == std::string_view::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    TomlEntry e;
    e.section = section;
    e.key = std::string(csv::trim(text.substr(pos, eq - pos)));
    e.line = line_no;
    if (e.key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    pos = eq + 1;
    detail::skip_space(text, pos);
    if (pos == text.size()) throw ConfigError("config line " + std::to_string(line_no) + ": missing value");
    if (text[pos] == '"') {
      e.value = detail::parse_toml_string(text, pos, line_no);
      detail::expect_end(text, pos, line_no);
    } else if (text[pos] == '[') {
      std::vector<std::string> items;
      ++pos;
      for (;;) {
        detail::skip_space(text, pos);
        if (pos >= text.size()) throw ConfigError("config line " + std::to_string(line_no) + ": unterminated array");
        if (text[pos] == ']') {
          ++pos;
          break;
        }
        if (text[pos] != '"') {
          throw ConfigError("config line " + std::to_string(line_no) + ": arrays hold quoted strings only");
        }
        items.push_back(detail::parse_toml_string(text, pos, line_no));
        detail::skip_space(text, pos);
        if (pos < text.size() && text[pos] == ',') ++pos;
      }
      detail::expect_end(text, pos, line_no);
      e.value = std::move(items);
    } else {
      auto end = text.find('#', pos);
      e.value = detail::parse_toml_scalar(text.substr(pos, end == std::string_view::npos ? end : end - pos), line_no);
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

// ---------------------------------------------------------------------------
// Pipeline configuration

struct PipelineConfig {
  std::uint64_t seed = 7;
  std::string out = "out";
  int threads = 0;  // 0: machine parallelism

  struct Data {
    std::string schedule;
    std::string weather;
    std::string trajectories;
    std::string zones;
    std::string airport = "LAX";
    std::string timezone = "-07:00";
    std::string delimiter = ",";
  } data;

  struct Synth {
    bool enabled = false;
    int days = 7;
    int flights_per_day = 200;
    double beta_atc = ScenarioSpec{}.beta_atc;
    double beta_wx = ScenarioSpec{}.beta_wx;
    double noise_sigma = ScenarioSpec{}.noise_sigma;
    double carryover = ScenarioSpec{}.carryover;
    double carryover_absorb_min = ScenarioSpec{}.carryover_absorb_min;
    double base_delay_min = ScenarioSpec{}.base_delay_min;
    double inbound_share = ScenarioSpec{}.inbound_share;
    double unscheduled_per_hour = ScenarioSpec{}.unscheduled_per_hour;
    double congestion_spread = ScenarioSpec{}.congestion_spread;
    int ground_vehicles = ScenarioSpec{}.ground_vehicles;
    double corrupt_fraction = ScenarioSpec{}.corrupt_fraction;
    std::string start_date = "2016-07-01";
  } synth;

  struct Trajectory {
    double max_speed_mps = kDefaultMaxGroundSpeedMps;
    double gap_threshold_s = kDefaultGapThresholdS;
  } trajectory;

  struct Featurize {
    double gap_min = 240.0;
    double window_min = 60.0;
    double moving_threshold_mps = 2.0;
    int pca_components = kDefaultPcaComponents;
    bool pca_standardize = true;
    double weather_staleness_h = 6.0;
  } featurize;

  struct Evaluate {
    double train_fraction = 0.8;
    std::vector<std::string> combos = {"HIST", "HIST+WX", "HIST+ATC", "HIST+WX+ATC"};
    std::vector<std::string> models = {"linear", "svr_linear", "mlp", "gbdt"};
    int importance_repeats = 20;
    std::string importance_model = "gbdt";
    std::string importance_combo = "HIST+WX+ATC";
    bool record_wall_time = false;
  } evaluate;

  LinearSpec linear;
  SvrSpec svr;
  MlpSpec mlp;
  GbdtSpec gbdt;

  unsigned effective_threads() const {
    if (threads > 0) return static_cast<unsigned>(threads);
    return std::max(1u, std::thread::hardware_concurrency());
  }

  TimeZone zone() const { return TimeZone::parse(data.timezone); }

  char delimiter() const {
    if (data.delimiter == "\\t" || data.delimiter == "tab") return '\t';
    return data.delimiter.front();
  }

  FeatureConfig feature_config() const {
    FeatureConfig f;
    f.gap_min = featurize.gap_min;
    f.window_min = featurize.window_min;
    f.moving_threshold_mps = featurize.moving_threshold_mps;
    f.pca_components = featurize.pca_components;
    f.pca_standardize = featurize.pca_standardize;
    f.weather_staleness_h = featurize.weather_staleness_h;
    f.airport = data.airport;
    f.zone = zone();
    return f;
  }

  ModelSpec model_spec(ModelFamily family) const {
    ModelSpec s;
    s.family = family;
    s.linear = linear;
    s.svr = svr;
    s.mlp = mlp;
    s.gbdt = gbdt;
    s.seed = seed;
    return s;
  }

  std::vector<ModelSpec> model_specs() const {
    std::vector<ModelSpec> out;
    for (const auto& m : evaluate.models) out.push_back(model_spec(model_family_from_string(m)));
    return out;
  }

  std::vector<GroupSet> combo_sets() const {
    std::vector<GroupSet> out;
    for (const auto& c : evaluate.combos) out.push_back(GroupSet::parse(c));
    return out;
  }

  ScenarioSpec scenario_spec() const {
    ScenarioSpec s;
    s.n_days = synth.days;
    s.flights_per_day = synth.flights_per_day;
    s.beta_atc = synth.beta_atc;
    s.beta_wx = synth.beta_wx;
    s.noise_sigma = synth.noise_sigma;
    s.carryover = synth.carryover;
    s.carryover_absorb_min = synth.carryover_absorb_min;
    s.base_delay_min = synth.base_delay_min;
    s.inbound_share = synth.inbound_share;
    s.unscheduled_per_hour = synth.unscheduled_per_hour;
    s.congestion_spread = synth.congestion_spread;
    s.ground_vehicles = synth.ground_vehicles;
    s.corrupt_fraction = synth.corrupt_fraction;
    s.start_date = parse_date(synth.start_date);
    s.zone = zone();
    s.airport = data.airport;
    s.gap_min = featurize.gap_min;
    s.window_min = featurize.window_min;
    s.seed = seed;
    return s;
  }

  /// Range checks that do not touch the filesystem.
  void validate() const {
    if (threads < 0) throw ConfigError("threads must be >= 0");
    if (out.empty()) throw ConfigError("out must not be empty");
    (void)zone();
    if (data.delimiter.empty()) throw ConfigError("data.delimiter must not be empty");
    if (!(trajectory.max_speed_mps > 0.0)) throw ConfigError("trajectory.max_speed_mps must be > 0");
    if (!(trajectory.gap_threshold_s > 0.0)) throw ConfigError("trajectory.gap_threshold_s must be > 0");
    if (!(featurize.gap_min > 0.0)) throw ConfigError("featurize.gap_min must be > 0");
    if (!(featurize.window_min > 0.0)) throw ConfigError("featurize.window_min must be > 0");
    if (featurize.pca_components < 1) throw ConfigError("featurize.pca_components must be >= 1");
    if (!(featurize.weather_staleness_h > 0.0)) throw ConfigError("featurize.weather_staleness_h must be > 0");
    if (!(evaluate.train_fraction > 0.0 && evaluate.train_fraction < 1.0)) {
      throw ConfigError("evaluate.train_fraction must be in (0, 1)");
    }
    if (evaluate.importance_repeats < 1) throw ConfigError("evaluate.importance_repeats must be >= 1");
    (void)combo_sets();
    for (const auto& spec : model_specs()) spec.validate();
    model_spec(model_family_from_string(evaluate.importance_model)).validate();
    (void)GroupSet::parse(evaluate.importance_combo);
    if (synth.enabled) scenario_spec().validate();
  }
};

namespace detail {

enum class FieldKind { text, integer, unsigned_integer, real, boolean, text_list };

struct ConfigField {
  const char* section;
  const char* key;
  FieldKind kind;
  std::function<void*(PipelineConfig&)> slot;
};

inline const std::vector<ConfigField>& config_fields() {
  using K = FieldKind;
  using C = PipelineConfig;
  static const std::vector<ConfigField> fields = {
      {"", "seed", K::unsigned_integer, [](C& c) -> void* { return &c.seed; }},
      {"", "out", K::text, [](C& c) -> void* { return &c.out; }},
      {"", "threads", K::integer, [](C& c) -> void* { return &c.threads; }},
      {"data", "schedule", K::text, [](C& c) -> void* { return &c.data.schedule; }},
      {"data", "weather", K::text, [](C& c) -> void* { return &c.data.weather; }},
      {"data", "trajectories", K::text, [](C& c) -> void* { return &c.data.trajectories; }},
      {"data", "zones", K::text, [](C& c) -> void* { return &c.data.zones; }},
      {"data", "airport", K::text, [](C& c) -> void* { return &c.data.airport; }},
      {"data", "timezone", K::text, [](C& c) -> void* { return &c.data.timezone; }},
      {"data", "delimiter", K::text, [](C& c) -> void* { return &c.data.delimiter; }},
      {"synth", "enabled", K::boolean, [](C& c) -> void* { return &c.synth.enabled; }},
      {"synth", "days", K::integer, [](C& c) -> void* { return &c.synth.days; }},
      {"synth", "flights_per_day", K::integer, [](C& c) -> void* { return &c.synth.flights_per_day; }},
      {"synth", "beta_atc", K::real, [](C& c) -> void* { return &c.synth.beta_atc; }},
      {"synth", "beta_wx", K::real, [](C& c) -> void* { return &c.synth.beta_wx; }},
      {"synth", "noise_sigma", K::real, [](C& c) -> void* { return &c.synth.noise_sigma; }},
      {"synth", "carryover", K::real, [](C& c) -> void* { return &c.synth.carryover; }},
      {"synth", "carryover_absorb_min", K::real, [](C& c) -> void* { return &c.synth.carryover_absorb_min; }},
      {"synth", "base_delay_min", K::real, [](C& c) -> void* { return &c.synth.base_delay_min; }},
      {"synth", "inbound_share", K::real, [](C& c) -> void* { return &c.synth.inbound_share; }},
      {"synth", "unscheduled_per_hour", K::real, [](C& c) -> void* { return &c.synth.unscheduled_per_hour; }},
      {"synth", "congestion_spread", K::real, [](C& c) -> void* { return &c.synth.congestion_spread; }},
      {"synth", "ground_vehicles", K::integer, [](C& c) -> void* { return &c.synth.ground_vehicles; }},
      {"synth", "corrupt_fraction", K::real, [](C& c) -> void* { return &c.synth.corrupt_fraction; }},
      {"synth", "start_date", K::text, [](C& c) -> void* { return &c.synth.start_date; }},
      {"trajectory", "max_speed_mps", K::real, [](C& c) -> void* { return &c.trajectory.max_speed_mps; }},
      {"trajectory", "gap_threshold_s", K::real, [](C& c) -> void* { return &c.trajectory.gap_threshold_s; }},
      {"featurize", "gap_min", K::real, [](C& c) -> void* { return &c.featurize.gap_min; }},
      {"featurize", "window_min", K::real, [](C& c) -> void* { return &c.featurize.window_min; }},
      {"featurize", "moving_threshold_mps", K::real, [](C& c) -> void* { return &c.featurize.moving_threshold_mps; }},
      {"featurize", "pca_components", K::integer, [](C& c) -> void* { return &c.featurize.pca_components; }},
      {"featurize", "pca_standardize", K::boolean, [](C& c) -> void* { return &c.featurize.pca_standardize; }},
      {"featurize", "weather_staleness_h", K::real, [](C& c) -> void* { return &c.featurize.weather_staleness_h; }},
      {"evaluate", "train_fraction", K::real, [](C& c) -> void* { return &c.evaluate.train_fraction; }},
      {"evaluate", "combos", K::text_list, [](C& c) -> void* { return &c.evaluate.combos; }},
      {"evaluate", "models", K::text_list, [](C& c) -> void* { return &c.evaluate.models; }},
      {"evaluate", "importance_repeats", K::integer, [](C& c) -> void* { return &c.evaluate.importance_repeats; }},
      {"evaluate", "importance_model", K::text, [](C& c) -> void* { return &c.evaluate.importance_model; }},
      {"evaluate", "importance_combo", K::text, [](C& c) -> void* { return &c.evaluate.importance_combo; }},
      {"evaluate", "record_wall_time", K::boolean, [](C& c) -> void* { return &c.evaluate.record_wall_time; }},
      {"model.linear", "lambda", K::real, [](C& c) -> void* { return &c.linear.lambda; }},
      {"model.svr_linear", "epsilon", K::real, [](C& c) -> void* { return &c.svr.epsilon; }},
      {"model.svr_linear", "c", K::real, [](C& c) -> void* { return &c.svr.c; }},
      {"model.svr_linear", "epochs", K::integer, [](C& c) -> void* { return &c.svr.epochs; }},
      {"model.svr_linear", "learning_rate", K::real, [](C& c) -> void* { return &c.svr.learning_rate; }},
      {"model.mlp", "hidden", K::integer, [](C& c) -> void* { return &c.mlp.hidden; }},
      {"model.mlp", "learning_rate", K::real, [](C& c) -> void* { return &c.mlp.learning_rate; }},
      {"model.mlp", "epochs", K::integer, [](C& c) -> void* { return &c.mlp.epochs; }},
      {"model.mlp", "init_scale", K::real, [](C& c) -> void* { return &c.mlp.init_scale; }},
      {"model.gbdt", "n_trees", K::integer, [](C& c) -> void* { return &c.gbdt.n_trees; }},
      {"model.gbdt", "max_depth", K::integer, [](C& c) -> void* { return &c.gbdt.max_depth; }},
      {"model.gbdt", "learning_rate", K::real, [](C& c) -> void* { return &c.gbdt.learning_rate; }},
      {"model.gbdt", "min_leaf", K::integer, [](C& c) -> void* { return &c.gbdt.min_leaf; }},
      {"model.gbdt", "n_bins", K::integer, [](C& c) -> void* { return &c.gbdt.n_bins; }},
  };
  return fields;
}

inline std::string field_name(const ConfigField& f) {
  return f.section[0] == '\0' ? std::string(f.key) : std::string(f.section) + "." + f.key;
}

inline void assign(PipelineConfig& config, const ConfigField& f, const TomlValue& value) {
  void* slot = f.slot(config);
  const std::string name = field_name(f);
  auto mismatch = [&](const char* want) { return ConfigError("config key '" + name + "' expects " + want); };
  switch (f.kind) {
    case FieldKind::text:
      if (!std::holds_alternative<std::string>(value)) throw mismatch("a string");
      *static_cast<std::string*>(slot) = std::get<std::string>(value);
      break;
    case FieldKind::integer:
      if (!std::holds_alternative<std::int64_t>(value)) throw mismatch("an integer");
      *static_cast<int*>(slot) = static_cast<int>(std::get<std::int64_t>(value));
      break;
    case FieldKind::unsigned_integer:
      if (!std::holds_alternative<std::int64_t>(value) || std::get<std::int64_t>(value) < 0) {
        throw mismatch("a non-negative integer");
      }
      *static_cast<std::uint64_t*>(slot) = static_cast<std::uint64_t>(std::get<std::int64_t>(value));
      break;
    case FieldKind::real:
      if (std::holds_alternative<double>(value)) {
        *static_cast<double*>(slot) = std::get<double>(value);
      } else if (std::holds_alternative<std::int64_t>(value)) {
        *static_cast<double*>(slot) = static_cast<double>(std::get<std::int64_t>(value));
      } else {
        throw mismatch("a number");
      }
      break;
    case FieldKind::boolean:
      if (!std::holds_alternative<bool>(value)) throw mismatch("true or false");
      *static_cast<bool*>(slot) = std::get<bool>(value);
      break;
    case FieldKind::text_list:
      if (!std::holds_alternative<std::vector<std::string>>(value)) throw mismatch("an array of strings");
      *static_cast<std::vector<std::string>*>(slot) = std::get<std::vector<std::string>>(value);
      break;
  }
}

inline std::string quote_toml(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out.push_back(c);
    }
  }
  return out + "\"";
}

inline std::string render(PipelineConfig& config, const ConfigField& f) {
  void* slot = f.slot(config);
  switch (f.kind) {
    case FieldKind::text: return quote_toml(*static_cast<std::string*>(slot));
    case FieldKind::integer: return std::to_string(*static_cast<int*>(slot));
    case FieldKind::unsigned_integer: return std::to_string(*static_cast<std::uint64_t*>(slot));
    case FieldKind::real: {
      std::string s = csv::format_double(*static_cast<double*>(slot));
      if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
      return s;
    }
    case FieldKind::boolean: return *static_cast<bool*>(slot) ? "true" : "false";
    case FieldKind::text_list: {
      std::string s = "[";
      const auto& items = *static_cast<std::vector<std::string>*>(slot);
      for (std::size_t i = 0; i < items.size(); ++i) s += (i ? ", " : "") + quote_toml(items[i]);
      return s + "]";
    }
  }
  return {};
}

/// Environment values are bare text; interpret them per the field's kind.
inline TomlValue env_value(const ConfigField& f, const std::string& raw) {
  switch (f.kind) {
    case FieldKind::text: return raw;
    case FieldKind::text_list: {
      if (!raw.empty() && raw.front() == '[') {
        std::istringstream in("v = " + raw);
        return parse_toml(in).front().value;
      }
      std::vector<std::string> items;
      for (const auto& part : csv::split(raw, ',')) {
        const auto t = csv::trim(part);
        if (!t.empty()) items.emplace_back(t);
      }
      return items;
    }
    case FieldKind::boolean:
      if (raw == "1" || raw == "true") return true;
      if (raw == "0" || raw == "false") return false;
      throw ConfigError("environment override for '" + field_name(f) + "' expects true or false");
    default: return parse_toml_scalar(raw, 0);
  }
}

}  // namespace detail

inline std::string env_var_name(std::string_view section, std::string_view key) {
  std::string name = "TARMAC_";
  for (char c : section) name.push_back(c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (!section.empty()) name.push_back('_');
  for (char c : key) name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return name;
}

inline PipelineConfig config_from_toml(std::istream& in) {
  PipelineConfig config;
  const auto& fields = detail::config_fields();
  std::map<std::string, std::size_t> seen;
  for (const auto& e : parse_toml(in)) {
    const std::string name = e.section.empty() ? e.key : e.section + "." + e.key;
    auto it = std::find_if(fields.begin(), fields.end(),
                           [&](const detail::ConfigField& f) { return e.section == f.section && e.key == f.key; });
    if (it == fields.end()) {
      throw ConfigError("config line " + std::to_string(e.line) + ": unknown key '" + name + "'");
    }
    if (auto [pos, inserted] = seen.emplace(name, e.line); !inserted) {
      throw ConfigError("config line " + std::to_string(e.line) + ": duplicate key '" + name + "'");
    }
    detail::assign(config, *it, e.value);
  }
  return config;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return config_from_toml(in);
}

inline std::string to_toml(const PipelineConfig& config) {
  PipelineConfig copy = config;
  std::ostringstream out;
  std::string section = "\x01";
  for (const auto& f : detail::config_fields()) {
    if (section != f.section) {
      section = f.section;
      if (!section.empty()) out << "\n[" << section << "]\n";
    }
    out << f.key << " = " << detail::render(copy, f) << '\n';
  }
  return out.str();
}

/// Applies TARMAC_<SECTION>_<KEY> variables; `getenv` is injectable for tests.
inline void apply_env_overrides(PipelineConfig& config,
                                const std::function<const char*(const char*)>& getenv = [](const char* n) {
                                  return std::getenv(n);
                                }) {
  for (const auto& f : detail::config_fields()) {
    const std::string name = env_var_name(f.section, f.key);
    if (const char* raw = getenv(name.c_str())) detail::assign(config, f, detail::env_value(f, raw));
  }
}

}  // namespace tarmac
