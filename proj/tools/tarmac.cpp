// tarmac: command-line front end for the delay-prediction pipeline.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "tarmac/config.hpp"
#include "tarmac/pipeline.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
  std::optional<int> days;
  std::optional<int> flights_per_day;
  std::optional<double> max_speed;
  std::optional<double> gap_threshold;
  std::optional<std::string> zones;
  std::optional<double> gap_min;
  std::optional<double> window_min;
};

void add_common_flags(CLI::App& cmd, Overrides& o) {
  cmd.add_option("--config", o.config_path, "Pipeline config file (TOML)");
  cmd.add_option("--seed", o.seed, "Seed for every random choice");
  cmd.add_option("--out", o.out, "Output directory for artifacts");
  cmd.add_option("--threads", o.threads, "Worker cap (0 = machine parallelism)");
  cmd.add_option("--days", o.days, "Synthetic scenario length in days");
  cmd.add_option("--flights-per-day", o.flights_per_day, "Synthetic schedule rows per day");
  cmd.add_option("--max-speed", o.max_speed, "Cleaning speed cap in m/s");
  cmd.add_option("--gap-threshold", o.gap_threshold, "Trajectory split gap in seconds");
  cmd.add_option("--zones", o.zones, "Zone map JSON");
  cmd.add_option("--gap-min", o.gap_min, "Delay-predicting gap in minutes");
  cmd.add_option("--window-min", o.window_min, "Observation window in minutes");
}

tarmac::PipelineConfig effective_config(const Overrides& o) {
  tarmac::PipelineConfig c = o.config_path.empty() ? tarmac::PipelineConfig{} : tarmac::load_config(o.config_path);
  tarmac::apply_env_overrides(c);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.threads) c.threads = *o.threads;
  if (o.days) c.synth.days = *o.days;
  if (o.flights_per_day) c.synth.flights_per_day = *o.flights_per_day;
  if (o.max_speed) c.trajectory.max_speed_mps = *o.max_speed;
  if (o.gap_threshold) c.trajectory.gap_threshold_s = *o.gap_threshold;
  if (o.zones) c.data.zones = *o.zones;
  if (o.gap_min) c.featurize.gap_min = *o.gap_min;
  if (o.window_min) c.featurize.window_min = *o.window_min;
  return c;
}

int run(const std::string& command, const Overrides& o) {
  std::optional<tarmac::Pipeline> pipeline;
  try {
    pipeline.emplace(effective_config(o), std::cout);
    tarmac::Pipeline& p = *pipeline;
    p.begin();
    if (command == "synth") {
      p.synth();
    } else if (command == "all") {
      if (p.wants_synth()) p.synth();
      p.clean();
      p.featurize();
      p.train();
      p.evaluate();
      p.importance();
    } else {
      p.adopt_generated_data();
      if (command == "clean") p.clean();
      if (command == "featurize") p.featurize();
      if (command == "train") p.train();
      if (command == "evaluate") p.evaluate();
      if (command == "importance") p.importance();
      if (command == "learning-curve") p.learning_curve();
    }
    p.finish();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "tarmac " << command << ": " << e.what() << '\n';
    if (pipeline) {
      try {
        pipeline->record_failure(e.what());
      } catch (const std::exception&) {
      }
    }
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tarmac-aware departure delay prediction pipeline"};
  app.require_subcommand(1, 1);
  Overrides overrides;
  const std::pair<const char*, const char*> commands[] = {
      {"synth", "Generate a synthetic airport scenario"},
      {"clean", "Parse, clean, segment and zone-label trajectories"},
      {"featurize", "Build the feature matrix and fit the weather PCA"},
      {"train", "Fit every model family on every source combination"},
      {"evaluate", "Score trained models and write the results table and report"},
      {"importance", "Permutation feature importance on the test days"},
      {"learning-curve", "Test RMSE as the number of training days grows"},
      {"all", "Run synth (when needed) through importance"},
  };
  for (const auto& [name, help] : commands) add_common_flags(*app.add_subcommand(name, help), overrides);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* shown = &app;
    for (const auto* sub : app.get_subcommands()) shown = sub;
    std::cerr << shown->help();
    return 2;
  }
  return run(app.get_subcommands().front()->get_name(), overrides);
}
