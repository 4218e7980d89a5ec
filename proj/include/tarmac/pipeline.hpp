#pragma once

// File-level pipeline stages: synth -> clean -> featurize -> train -> evaluate
// -> importance. Each stage reads its inputs from the configured data paths or
// from earlier stage artifacts under the output directory, and never writes
// outside that directory.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "tarmac/config.hpp"
#include "tarmac/error.hpp"
#include "tarmac/evaluate.hpp"
#include "tarmac/featurize.hpp"
#include "tarmac/ingest.hpp"
#include "tarmac/model.hpp"
#include "tarmac/synth.hpp"
#include "tarmac/trajectory.hpp"

namespace tarmac {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// In-memory building blocks

struct SurfaceResult {
  std::vector<Trajectory> trajectories;
  CleanStats stats;
};

/// clean -> segment -> kinematics -> zone labels.
inline SurfaceResult prepare_surface(std::vector<GpsPoint> points, const ZoneMap& zones, double max_speed_mps,
                                     double gap_threshold_s, const TimeZone& day_zone) {
  SurfaceResult out;
  CleanResult cleaned = clean_points(std::move(points), max_speed_mps);
  out.stats = cleaned.stats;
  SegmentOptions seg;
  seg.gap_threshold_s = gap_threshold_s;
  seg.day_zone = day_zone;
  for (auto& t : segment(cleaned.points, seg)) out.trajectories.push_back(label_zones(compute_kinematics(std::move(t)), zones));
  return out;
}

struct Dataset {
  Featurizer featurizer;
  FeatureMatrix matrix;  // all groups
  DaySplit days;
  RowSplit split;
  AssemblyReport report;
};

/// Splits departures by predicting-time day, fits the featurizer on the
/// training days only, then assembles every labeled departure.
inline Dataset build_dataset(std::vector<FlightRecord> schedule, std::vector<WeatherObservation> weather,
                             const std::vector<Trajectory>& trajectories, const FeatureConfig& config,
                             double train_fraction) {
  const SourceIndex sources(std::move(schedule), std::move(weather), trajectories, config);
  std::vector<const FlightRecord*> labeled;
  std::vector<Date> days;
  for (const FlightRecord* f : sources.departures()) {
    if (!f->dep_delay_min) continue;
    labeled.push_back(f);
    days.push_back(local_date(PredictionContext(*f, config).predicting_time(), config.zone));
  }
  Dataset d;
  d.days = split_days(days, train_fraction);
  std::vector<const FlightRecord*> train;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    if (d.days.is_train(days[i])) train.push_back(labeled[i]);
  }
  d.featurizer = fit_featurizer(sources, train);
  d.matrix = assemble(sources, d.featurizer, sources.departures(), GroupSet::all(), true, &d.report);
  d.split = apply_split(d.matrix.rows, d.days);
  return d;
}

// ---------------------------------------------------------------------------
// Hashing and manifest

inline std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

/// Lists every regular file under `dir` (except the manifest) with size and SHA-256.
inline nlohmann::json write_manifest(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  nlohmann::json list = nlohmann::json::array();
  for (const auto& f : files) {
    list.push_back({{"path", fs::relative(f, dir).generic_string()},
                    {"bytes", fs::file_size(f)},
                    {"sha256", sha256_file(f)}});
  }
  nlohmann::json manifest{{"files", list}};
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << manifest.dump(1) << '\n';
  return manifest;
}

// ---------------------------------------------------------------------------
// Artifact layout

struct ArtifactPaths {
  fs::path root;

  fs::path data_dir() const { return root / "data"; }
  fs::path effective_config() const { return root / "config.effective.toml"; }
  fs::path diagnostics(const std::string& stage) const { return root / ("diagnostics_" + stage + ".csv"); }
  fs::path trajectories() const { return root / "trajectories_clean.csv"; }
  fs::path clean_stats() const { return root / "clean_stats.json"; }
  fs::path features() const { return root / "features.csv"; }
  fs::path features_meta() const { return root / "features.json"; }
  fs::path models_dir() const { return root / "models"; }
  fs::path timings() const { return root / "timings.csv"; }
  fs::path results() const { return root / "results.csv"; }
  fs::path report() const { return root / "report.txt"; }
  fs::path report_svg() const { return root / "report.svg"; }
  fs::path importance() const { return root / "importance.csv"; }
  fs::path learning_curve() const { return root / "learning_curve.csv"; }

  fs::path model(ModelFamily f, const GroupSet& combo) const {
    return models_dir() / (std::string(to_string(f)) + "__" + combo.to_string() + ".json");
  }
};

namespace detail {

inline std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  return out;
}

inline std::ifstream open_in(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw ContractViolation("missing " + what + " '" + p.string() + "'");
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read '" + p.string() + "'");
  return in;
}

inline nlohmann::json read_json(const fs::path& p, const std::string& what) {
  auto in = open_in(p, what);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(what + " '" + p.string() + "': " + e.what());
  }
}

inline void require_file(const std::string& path, const std::string& key) {
  if (path.empty()) throw ConfigError("data." + key + " is not set");
  if (!fs::is_regular_file(path)) throw ConfigError("data." + key + " file '" + path + "' does not exist");
}

inline nlohmann::json stats_json(const CleanStats& s) {
  return {{"input", s.input},
          {"kept", s.kept},
          {"dropped", s.dropped()},
          {"missing_altitude", s.missing_altitude},
          {"discontinuity", s.discontinuity},
          {"duplicate_timestamp", s.duplicate_timestamp}};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages

class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::ostream& log) : config_(std::move(config)), log_(log), paths_{config_.out} {}

  const PipelineConfig& config() const { return config_; }
  const ArtifactPaths& paths() const { return paths_; }

  /// Writes the effective configuration next to the artifacts.
  void begin() {
    config_.validate();
    fs::create_directories(paths_.root);
    auto out = detail::open_out(paths_.effective_config());
    out << to_toml(config_);
  }

  void finish() { write_manifest(paths_.root); }

  void synth() {
    const ScenarioSpec spec = config_.scenario_spec();
    const Scenario sc = generate(spec);
    const ScenarioFiles files = write_scenario(sc, paths_.data_dir());
    config_.data.schedule = files.schedule.string();
    config_.data.weather = files.weather.string();
    config_.data.trajectories = files.trajectories.string();
    config_.data.zones = files.zones.string();
    config_.data.delimiter = ",";
    log_ << "synth: " << sc.schedule.size() << " schedule rows, " << sc.weather.size() << " weather rows, "
         << sc.points.size() << " GPS points -> " << paths_.data_dir().string() << '\n';
  }

  /// Uses generated data when synth is enabled or no data paths are configured.
  bool wants_synth() const {
    return config_.synth.enabled || (config_.data.schedule.empty() && config_.data.weather.empty() &&
                                     config_.data.trajectories.empty());
  }

  /// Points the data paths at a previous `synth` run in the output directory
  /// when none are configured.
  void adopt_generated_data() {
    const ScenarioFiles files = scenario_files(paths_.data_dir());
    auto adopt = [](std::string& slot, const fs::path& p) {
      if (slot.empty() && fs::exists(p)) slot = p.string();
    };
    adopt(config_.data.schedule, files.schedule);
    adopt(config_.data.weather, files.weather);
    adopt(config_.data.trajectories, files.trajectories);
    adopt(config_.data.zones, files.zones);
  }

  void clean() {
    set_stage("clean");
    detail::require_file(config_.data.trajectories, "trajectories");
    detail::require_file(config_.data.zones, "zones");
    const ZoneMap zones = ZoneMap::load(config_.data.zones);
    for (Zone z : kTarmacZones) {
      if (!zones.has(z)) {
        throw ConfigError("zone map '" + config_.data.zones + "' lacks required zone '" + std::string(to_string(z)) + "'");
      }
    }
    ParseOptions opts;
    opts.delimiter = config_.delimiter();
    opts.airport_zone = config_.zone();
    auto in = detail::open_in(config_.data.trajectories, "trajectory file");
    ParseResult<GpsPoint> parsed = parse_trajectory_stream(in, opts);
    append_diagnostics(parsed.diagnostics, config_.data.trajectories);
    const std::size_t n_parsed = parsed.records.size();
    SurfaceResult surface = prepare_surface(std::move(parsed.records), zones, config_.trajectory.max_speed_mps,
                                            config_.trajectory.gap_threshold_s, config_.zone());
    {
      auto out = detail::open_out(paths_.trajectories());
      write_labeled_trajectories(out, surface.trajectories);
    }
    nlohmann::json stats = detail::stats_json(surface.stats);
    stats["rows"] = parsed.rows;
    stats["parsed"] = n_parsed;
    stats["diagnostics"] = parsed.diagnostics.size();
    stats["trajectories"] = surface.trajectories.size();
    {
      auto out = detail::open_out(paths_.clean_stats());
      out << stats.dump(1) << '\n';
    }
    log_ << "clean: " << parsed.rows << " rows, " << parsed.diagnostics.size() << " diagnostics, "
         << surface.stats.kept << " kept, " << surface.stats.dropped() << " dropped, "
         << surface.trajectories.size() << " trajectories\n";
  }

  void featurize() {
    set_stage("featurize");
    detail::require_file(config_.data.schedule, "schedule");
    detail::require_file(config_.data.weather, "weather");
    ParseOptions opts;
    opts.delimiter = config_.delimiter();
    opts.airport_zone = config_.zone();
    auto sched_in = detail::open_in(config_.data.schedule, "schedule file");
    ParseResult<FlightRecord> schedule = parse_schedule(sched_in, {}, opts);
    auto wx_in = detail::open_in(config_.data.weather, "weather file");
    ParseResult<WeatherObservation> weather = parse_weather(wx_in, opts);
    append_diagnostics(schedule.diagnostics, config_.data.schedule);
    append_diagnostics(weather.diagnostics, config_.data.weather);
    auto traj_in = detail::open_in(paths_.trajectories(), "cleaned trajectories (run clean first)");
    const std::vector<Trajectory> trajectories = read_labeled_trajectories(traj_in);

    Dataset d = build_dataset(std::move(schedule.records), std::move(weather.records), trajectories,
                              config_.feature_config(), config_.evaluate.train_fraction);
    {
      auto out = detail::open_out(paths_.features());
      write_feature_matrix(out, d.matrix);
    }
    nlohmann::json train_days = nlohmann::json::array(), test_days = nlohmann::json::array();
    for (Date day : d.days.train_days) train_days.push_back(format_date(day));
    for (Date day : d.days.test_days) test_days.push_back(format_date(day));
    const nlohmann::json meta{
        {"columns", matrix_columns_json(d.matrix)},
        {"featurizer", to_json(d.featurizer)},
        {"split", {{"train_fraction", config_.evaluate.train_fraction}, {"train_days", train_days}, {"test_days", test_days}}},
        {"report",
         {{"departures", d.report.departures},
          {"rows", d.report.rows},
          {"excluded_stale_weather", d.report.excluded_stale_weather},
          {"excluded_no_target", d.report.excluded_no_target},
          {"train_rows", d.split.train.size()},
          {"test_rows", d.split.test.size()}}}};
    {
      auto out = detail::open_out(paths_.features_meta());
      out << meta.dump(1) << '\n';
    }
    log_ << "featurize: " << d.report.rows << " rows x " << d.matrix.columns.size() << " columns ("
         << d.split.train.size() << " train, " << d.split.test.size() << " test, "
         << d.report.excluded_stale_weather << " excluded for stale weather)\n";
  }

  struct LoadedFeatures {
    FeatureMatrix matrix;
    DaySplit days;
    RowSplit split;
  };

  LoadedFeatures load_features() const {
    const nlohmann::json meta = detail::read_json(paths_.features_meta(), "feature sidecar (run featurize first)");
    auto in = detail::open_in(paths_.features(), "feature matrix (run featurize first)");
    LoadedFeatures f;
    const TimeZone zone = TimeZone::parse(meta.at("featurizer").at("timezone").get<std::string>());
    f.matrix = read_feature_matrix(in, meta.at("columns"), zone);
    for (const auto& s : meta.at("split").at("train_days")) f.days.train_days.push_back(parse_date(s.get<std::string>()));
    for (const auto& s : meta.at("split").at("test_days")) f.days.test_days.push_back(parse_date(s.get<std::string>()));
    f.split = apply_split(f.matrix.rows, f.days);
    return f;
  }

  void train() {
    set_stage("train");
    const LoadedFeatures f = load_features();
    const auto specs = config_.model_specs();
    const auto combos = config_.combo_sets();
    GridOptions options;
    options.seed = config_.seed;
    options.threads = config_.effective_threads();
    const auto results = run_grid(f.matrix, f.split, specs, combos, options);
    fs::create_directories(paths_.models_dir());
    auto timings = detail::open_out(paths_.timings());
    timings << "model,combo,fit_ms\n";
    std::size_t failed = 0;
    for (const auto& r : results) {
      timings << to_string(r.family) << ',' << r.combo.to_string() << ',' << csv::format_double(r.wall_ms) << '\n';
      const fs::path path = paths_.model(r.family, r.combo);
      if (!r.ok()) {
        ++failed;
        fs::remove(path);
        log_ << "train: " << to_string(r.family) << ' ' << r.combo.to_string() << " failed: " << r.status << '\n';
        continue;
      }
      auto out = detail::open_out(path);
      out << to_json(*r.model).dump() << '\n';
    }
    log_ << "train: " << results.size() - failed << " of " << results.size() << " models written to "
         << paths_.models_dir().string() << '\n';
  }

  ModelArtifact load_model(ModelFamily family, const GroupSet& combo) const {
    const fs::path path = paths_.model(family, combo);
    if (!fs::exists(path)) {
      throw ContractViolation("missing model artifact '" + path.string() + "' (run train first)");
    }
    return model_from_json(detail::read_json(path, "model artifact"));
  }

  std::vector<ExperimentResult> evaluate() {
    set_stage("evaluate");
    const LoadedFeatures f = load_features();
    std::map<std::string, double> fit_ms;
    if (fs::exists(paths_.timings())) {
      std::ifstream in(paths_.timings());
      csv::LineReader reader(in);
      std::string line;
      reader.next_nonblank(line);
      while (reader.next_nonblank(line)) {
        const auto fields = csv::split(line);
        if (fields.size() == 3) fit_ms[fields[0] + "__" + fields[1]] = csv::parse_double(fields[2], "fit_ms");
      }
    }
    std::vector<ExperimentResult> results;
    bool any = false;
    for (const auto& spec : config_.model_specs()) {
      for (const auto& combo : config_.combo_sets()) {
        ExperimentResult r;
        r.family = spec.family;
        r.combo = combo;
        r.seed = config_.seed;
        r.n_train = f.split.train.size();
        r.n_test = f.split.test.size();
        if (!fs::exists(paths_.model(spec.family, combo))) {
          r.status = "missing model artifact";
          results.push_back(std::move(r));
          continue;
        }
        any = true;
        try {
          const ModelArtifact m = load_model(spec.family, combo);
          const FeatureMatrix sel = f.matrix.select(combo);
          const FeatureMatrix train = sel.subset_rows(f.split.train);
          const FeatureMatrix test = sel.subset_rows(f.split.test);
          r.rmse_train = rmse(train.target, predict(m, train.values, train.columns));
          r.rmse_test = rmse(test.target, predict(m, test.values, test.columns));
          r.wall_ms = fit_ms[std::string(to_string(spec.family)) + "__" + combo.to_string()];
        } catch (const std::exception& e) {
          r.status = e.what();
        }
        results.push_back(std::move(r));
      }
    }
    if (!any) throw ContractViolation("missing model artifact: no trained models under '" + paths_.models_dir().string() + "'");
    {
      auto out = detail::open_out(paths_.results());
      write_results(out, results, config_.evaluate.record_wall_time);
    }
    {
      auto out = detail::open_out(paths_.report());
      out << render_report(results);
    }
    {
      auto out = detail::open_out(paths_.report_svg());
      out << render_svg(results);
    }
    log_ << render_report(results);
    return results;
  }

  ImportanceReport importance() {
    set_stage("importance");
    const LoadedFeatures f = load_features();
    const ModelFamily family = model_family_from_string(config_.evaluate.importance_model);
    const GroupSet combo = GroupSet::parse(config_.evaluate.importance_combo);
    const ModelArtifact m = load_model(family, combo);
    const FeatureMatrix test = f.matrix.select(combo).subset_rows(f.split.test);
    const ImportanceReport report = permutation_importance(m, test, config_.evaluate.importance_repeats, config_.seed);
    {
      auto out = detail::open_out(paths_.importance());
      write_importance(out, report);
    }
    log_ << "importance (" << to_string(family) << ", " << combo.to_string() << ", baseline RMSE "
         << csv::format_double(report.baseline_rmse) << "):";
    for (const auto& [g, v] : report.groups) log_ << ' ' << to_string(g) << '=' << csv::format_double(v);
    log_ << '\n';
    return report;
  }

  void learning_curve() {
    set_stage("learning_curve");
    const LoadedFeatures f = load_features();
    const ModelFamily family = model_family_from_string(config_.evaluate.importance_model);
    const GroupSet combo = GroupSet::parse(config_.evaluate.importance_combo);
    const auto points = tarmac::learning_curve(f.matrix.select(combo), f.days, config_.model_spec(family));
    auto out = detail::open_out(paths_.learning_curve());
    out << "model,combo,train_days,n_train,rmse_test\n";
    for (const auto& p : points) {
      out << to_string(family) << ',' << combo.to_string() << ',' << p.train_days << ',' << p.n_train << ','
          << csv::format_double(p.rmse_test) << '\n';
      log_ << "learning-curve: " << p.train_days << " day(s), " << p.n_train << " rows -> test RMSE "
           << csv::format_double(p.rmse_test) << '\n';
    }
  }

  /// Names the stage whose diagnostics file receives subsequent rows.
  void set_stage(std::string stage) {
    stage_ = std::move(stage);
    diagnostics_.clear();
  }

  /// Records a fatal validation problem in the current stage's diagnostics file.
  void record_failure(const std::string& message) {
    diagnostics_.push_back({"pipeline", 0, message});
    flush_diagnostics();
  }

 private:
  void append_diagnostics(const std::vector<RowDiagnostic>& rows, const std::string& source) {
    for (auto d : rows) {
      d.source = source;
      diagnostics_.push_back(std::move(d));
    }
    flush_diagnostics();
  }

  void flush_diagnostics() {
    fs::create_directories(paths_.root);
    auto out = detail::open_out(paths_.diagnostics(stage_));
    write_diagnostics(out, diagnostics_);
  }

  PipelineConfig config_;
  std::ostream& log_;
  ArtifactPaths paths_;
  std::string stage_ = "pipeline";
  std::vector<RowDiagnostic> diagnostics_;
};

}  // namespace tarmac
