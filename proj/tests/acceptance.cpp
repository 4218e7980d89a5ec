// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fails.
// End-to-end criteria drive the real CLI on configs/desk.toml.

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "leakage.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace tarmac;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kAtcGainMin = 0.15;          // gbdt HIST+ATC at least 15% below HIST
constexpr double kRuntimeBudgetS = 300.0;     // single-threaded `all` on the desk scenario
constexpr int kImportanceRepeats = 20;
constexpr std::array<std::uint64_t, 3> kImportanceSeeds = {7, 8, 9};
constexpr double kOrthonormalTol = 1e-9;
constexpr double kReconstructionTol = 1e-8;
constexpr double kJacobiTol = 1e-8;
constexpr int kPcaComponents = 18;
constexpr double kHaversineTolM = 1.0;
constexpr int kHaversinePairs = 1000;
constexpr int kZonePoints = 10'000;
constexpr double kLinearRecoveryTol = 1e-8;
constexpr double kGradientRelTol = 1e-4;
constexpr double kStumpTol = 1e-9;
constexpr int kGbdtRounds = 200;
constexpr std::size_t kLeakageFlights = 500;

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

int run_cli(const std::string& args) {
  const std::string cmd = "'" + std::string(TARMAC_CLI) + "' " + args + " >/dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::string desk_run(const fs::path& out, std::uint64_t seed) {
  return "all --config " + q(fs::path(TARMAC_SOURCE_DIR) / "configs" / "desk.toml") + " --seed " +
         std::to_string(seed) + " --threads 1 --out " + q(out);
}

std::vector<ExperimentResult> results_of(const fs::path& run) {
  std::ifstream in(run / "results.csv");
  return read_results(in);
}

double test_rmse(const std::vector<ExperimentResult>& rs, ModelFamily f, const std::string& combo) {
  for (const auto& r : rs) {
    if (r.family == f && r.combo == GroupSet::parse(combo)) return r.rmse_test;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

std::map<std::string, double> group_importance(const fs::path& run) {
  std::map<std::string, double> out;
  std::ifstream in(run / "importance.csv");
  std::string line;
  while (std::getline(in, line)) {
    const auto f = csv::split(line, ',');
    if (f.size() >= 4 && f[0] == "group") out[f[1]] = csv::parse_double(f[3], "delta_rmse");
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

// --- 1 ----------------------------------------------------------------------

Verdict criterion_1(const fs::path& run, double seconds, int status) {
  Verdict v;
  v.require(status == 0, "desk run exited " + std::to_string(status));
  if (status != 0) return v;
  const auto rs = results_of(run);
  const double hist = test_rmse(rs, ModelFamily::gbdt, "HIST");
  const double hist_atc = test_rmse(rs, ModelFamily::gbdt, "HIST+ATC");
  const double gain = 1.0 - hist_atc / hist;
  v.require(gain >= kAtcGainMin, "ATC gain " + fmt(gain));
  const double best = test_rmse(rs, ModelFamily::gbdt, "HIST+WX+ATC");
  for (ModelFamily f : kModelFamilies) {
    const double other = test_rmse(rs, f, "HIST+WX+ATC");
    v.require(best <= other, "gbdt " + fmt(best) + " > " + std::string(to_string(f)) + " " + fmt(other));
  }
  v.require(seconds < kRuntimeBudgetS, "runtime " + fmt(seconds) + " s");
  v.detail = "gbdt HIST " + fmt(hist) + " -> HIST+ATC " + fmt(hist_atc) + " (" + fmt(100 * gain) +
             "% lower); HIST+WX+ATC gbdt " + fmt(best) + "; runtime " + fmt(seconds) + " s" +
             (v.detail.empty() ? "" : "; " + v.detail);
  return v;
}

// --- 2 ----------------------------------------------------------------------

Verdict criterion_2(const fs::path& scratch, const fs::path& seed7_run) {
  Verdict v;
  std::string summary;
  for (std::uint64_t seed : kImportanceSeeds) {
    fs::path run = seed7_run;
    if (seed != 7) {
      run = scratch / ("importance_seed" + std::to_string(seed));
      if (run_cli(desk_run(run, seed)) != 0) {
        v.require(false, "seed " + std::to_string(seed) + " run failed");
        continue;
      }
    }
    const auto config = load_config((run / "config.effective.toml").string());
    v.require(config.evaluate.importance_repeats == kImportanceRepeats, "repeats != 20");
    const auto g = group_importance(run);
    const double atc = g.count("ATC") ? g.at("ATC") : 0.0, wx = g.count("WX") ? g.at("WX") : 0.0;
    v.require(atc > wx, "seed " + std::to_string(seed) + ": ATC " + fmt(atc) + " <= WX " + fmt(wx));
    summary += (summary.empty() ? "" : ", ") + ("seed " + std::to_string(seed) + " ATC " + fmt(atc) + " vs WX " + fmt(wx));
  }
  v.detail = summary + (v.detail.empty() ? "" : "; " + v.detail);
  return v;
}

// --- 3 ----------------------------------------------------------------------

Verdict criterion_3(const fs::path& desk) {
  Verdict v;
  support::Gen g(3);
  double worst_orth = 0, worst_rec = 0, worst_jacobi = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const bool toy = trial < 100;
    const int p = toy ? 3 : g.integer(2, 8), n = toy ? 5 : g.integer(p + 1, 60);
    Eigen::MatrixXd x(n, p);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < p; ++j) x(i, j) = g.normal(g.uniform(-3, 3), g.uniform(0.2, 4));
    }
    const bool scaled = g.coin();
    const PcaModel m = fit_pca(x, p, scaled);
    worst_orth = std::max(worst_orth, (m.loadings.transpose() * m.loadings - Eigen::MatrixXd::Identity(p, p)).cwiseAbs().maxCoeff());
    for (int c = 1; c < p; ++c) v.require(m.explained_variance(c) <= m.explained_variance(c - 1), "variance increases");
    worst_rec = std::max(worst_rec, (reconstruct(m, project(m, x)) - standardize(m, x)).cwiseAbs().maxCoeff());
    if (toy) {
      const auto [values, vectors] = oracle::jacobi_eigen(oracle::covariance(x, scaled));
      worst_jacobi = std::max(worst_jacobi, (m.explained_variance - values).cwiseAbs().maxCoeff());
    }
  }
  v.require(worst_orth <= kOrthonormalTol, "orthonormality " + fmt(worst_orth));
  v.require(worst_rec < kReconstructionTol, "reconstruction " + fmt(worst_rec));
  v.require(worst_jacobi <= kJacobiTol, "jacobi " + fmt(worst_jacobi));
  int k = -1;
  try {
    const auto meta = nlohmann::json::parse(support::slurp(desk / "features.json"));
    k = static_cast<int>(pca_from_json(meta.at("featurizer").at("pca")).components());
  } catch (const std::exception& e) {
    v.require(false, e.what());
  }
  v.require(k == kPcaComponents, "desk PCA keeps " + std::to_string(k) + " components");
  v.detail = "max |L'L-I| " + fmt(worst_orth) + ", reconstruction " + fmt(worst_rec) + ", Jacobi " + fmt(worst_jacobi) +
             ", desk k=" + std::to_string(k) + (v.detail.empty() ? "" : "; " + v.detail);
  return v;
}

// --- 4 ----------------------------------------------------------------------

Verdict criterion_4() {
  Verdict v;
  support::Gen g(4);
  double worst = 0;
  for (int i = 0; i < kHaversinePairs; ++i) {
    const LatLon a{g.uniform(-89, 89), g.uniform(-180, 180)};
    // mix of airport-scale and continental distances
    const double spread = i % 2 ? 0.05 : 60.0;
    const LatLon b{std::clamp(a.lat + g.uniform(-spread, spread), -89.0, 89.0), a.lon + g.uniform(-spread, spread)};
    worst = std::max(worst, std::abs(haversine_m(a, b) - oracle::spherical_law_m(a.lat, a.lon, b.lat, b.lon)));
  }
  v.require(worst <= kHaversineTolM, "haversine deviation " + fmt(worst) + " m");

  const ScenarioLayout layout = default_layout();
  std::vector<std::pair<Zone, std::vector<std::pair<double, double>>>> rings;
  for (Zone z : {Zone::runway, Zone::apron, Zone::parking}) {
    for (const auto& poly : layout.zones.polygons()) {
      if (poly.zone != z) continue;
      std::vector<std::pair<double, double>> ring;
      for (std::size_t i = 0; i + 1 < poly.ring.size(); ++i) ring.emplace_back(poly.ring[i].lat, poly.ring[i].lon);
      rings.emplace_back(z, ring);
    }
  }
  const LatLon lo = layout.at(layout.runway_x0 - 200, -100), hi = layout.at(layout.runway_x1 + 200, layout.runway_y1 + 100);
  int disagreements = 0;
  for (int i = 0; i < kZonePoints; ++i) {
    const LatLon p{g.uniform(lo.lat, hi.lat), g.uniform(lo.lon, hi.lon)};
    Zone expected = Zone::other;
    for (const auto& [z, ring] : rings) {
      if (oracle::inside_convex(p.lat, p.lon, ring)) {
        expected = z;
        break;
      }
    }
    disagreements += layout.zones.classify(p) != expected;
  }
  v.require(disagreements == 0, std::to_string(disagreements) + " zone disagreements");
  v.detail = "max haversine deviation " + fmt(worst) + " m over " + std::to_string(kHaversinePairs) + " pairs; " +
             std::to_string(disagreements) + " zone disagreements over " + std::to_string(kZonePoints) + " points" +
             (v.detail.empty() ? "" : "; " + v.detail);
  return v;
}

// --- 5 ----------------------------------------------------------------------

Verdict criterion_5() {
  Verdict v;
  support::Gen g(5);
  double worst_linear = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int p = g.integer(1, 6), n = g.integer(p + 5, 100);
    Eigen::MatrixXd x(n, p);
    Eigen::VectorXd w(p);
    for (int j = 0; j < p; ++j) w(j) = g.uniform(-5, 5);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < p; ++j) x(i, j) = g.normal(0, 2);
    }
    const double b = g.uniform(-10, 10);
    const Eigen::VectorXd y = (x * w).array() + b;
    const ModelArtifact m = fit_linear(x, y, 0.0);
    const auto& lp = std::get<LinearParams>(m.params);
    worst_linear = std::max({worst_linear, (lp.weights - w).cwiseAbs().maxCoeff(), std::abs(lp.intercept - b)});
  }
  v.require(worst_linear < kLinearRecoveryTol, "linear recovery " + fmt(worst_linear));

  double worst_grad = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = g.integer(3, 30), d = g.integer(1, 5), h = g.integer(1, 8);
    MlpParams p;
    p.w1 = Eigen::MatrixXd(h, d);
    p.b1 = Eigen::VectorXd(h);
    p.w2 = Eigen::VectorXd(h);
    for (Eigen::Index i = 0; i < p.w1.size(); ++i) p.w1.data()[i] = g.uniform(-1, 1);
    for (int i = 0; i < h; ++i) {
      p.b1(i) = g.uniform(-1, 1);
      p.w2(i) = g.uniform(-1, 1);
    }
    p.b2 = g.uniform(-1, 1);
    Eigen::MatrixXd xs(n, d);
    Eigen::VectorXd ys(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) xs(i, j) = g.normal();
      ys(i) = g.normal();
    }
    auto flat = [](const Eigen::MatrixXd& w1, const Eigen::VectorXd& b1, const Eigen::VectorXd& w2, double b2) {
      std::vector<double> v(w1.data(), w1.data() + w1.size());
      v.insert(v.end(), b1.data(), b1.data() + b1.size());
      v.insert(v.end(), w2.data(), w2.data() + w2.size());
      v.push_back(b2);
      return v;
    };
    auto loss_at = [&](const std::vector<double>& theta) {
      MlpParams q = p;
      std::size_t k = 0;
      for (Eigen::Index i = 0; i < q.w1.size(); ++i) q.w1.data()[i] = theta[k++];
      for (Eigen::Index i = 0; i < q.b1.size(); ++i) q.b1(i) = theta[k++];
      for (Eigen::Index i = 0; i < q.w2.size(); ++i) q.w2(i) = theta[k++];
      q.b2 = theta[k];
      return detail::mlp_loss_gradient(q, xs, ys).loss;
    };
    const auto grad = detail::mlp_loss_gradient(p, xs, ys);
    const auto analytic = flat(grad.w1, grad.b1, grad.w2, grad.b2);
    const auto numeric = oracle::fd_gradient(loss_at, flat(p.w1, p.b1, p.w2, p.b2));
    double diff = 0, norm = 0;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
      diff += (analytic[k] - numeric[k]) * (analytic[k] - numeric[k]);
      norm += numeric[k] * numeric[k];
    }
    worst_grad = std::max(worst_grad, std::sqrt(diff) / std::max(1e-12, std::sqrt(norm)));
  }
  v.require(worst_grad < kGradientRelTol, "MLP gradient rel error " + fmt(worst_grad));

  double worst_stump = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = g.integer(4, 80);
    const double cut = g.uniform(-1, 1), left = g.uniform(-10, 10), right = g.uniform(-10, 10);
    Eigen::MatrixXd x(n, 1);
    Eigen::VectorXd y(n);
    std::vector<double> xv, yv;
    for (int i = 0; i < n; ++i) {
      x(i, 0) = g.uniform(-2, 2);
      y(i) = x(i, 0) <= cut ? left : right;
      xv.push_back(x(i, 0));
      yv.push_back(y(i));
    }
    const ModelArtifact m = fit_gbdt(x, y, GbdtSpec{1, 1, 1.0, 1, 65535});
    const auto stump = oracle::best_stump(xv, yv);
    const Eigen::VectorXd pred = predict(m, x);
    for (int i = 0; i < n; ++i) {
      worst_stump = std::max({worst_stump, std::abs(pred(i) - y(i)),
                              std::abs(pred(i) - (xv[i] <= stump.threshold ? stump.left : stump.right))});
    }
  }
  v.require(worst_stump <= kStumpTol, "step fit error " + fmt(worst_stump));

  bool monotone = true;
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd x(400, 4);
    Eigen::VectorXd y(400);
    for (int i = 0; i < 400; ++i) {
      for (int j = 0; j < 4; ++j) x(i, j) = g.normal();
      y(i) = 3 * std::sin(x(i, 0)) + (x(i, 1) > 0.5 ? 4.0 : 0.0) + g.normal(0, 1);
    }
    const ModelArtifact m = fit_gbdt(x, y, GbdtSpec{kGbdtRounds, 6, 0.1, 20, 64});
    const auto& curve = std::get<GbdtParams>(m.params).train_rmse_by_round;
    monotone = monotone && curve.size() == static_cast<std::size_t>(kGbdtRounds + 1);
    for (std::size_t r = 1; r < curve.size(); ++r) monotone = monotone && curve[r] <= curve[r - 1];
  }
  v.require(monotone, "GBDT training RMSE increased");
  v.detail = "linear " + fmt(worst_linear) + ", MLP gradient rel " + fmt(worst_grad) + ", stump " + fmt(worst_stump) +
             ", GBDT RMSE monotone over " + std::to_string(kGbdtRounds) + " rounds: " + (monotone ? "yes" : "no") +
             (v.detail.empty() ? "" : "; " + v.detail);
  return v;
}

// --- 6 ----------------------------------------------------------------------

Verdict criterion_6() {
  Verdict v;
  const Scenario sc = generate(ScenarioSpec{});
  const leakage::Outcome o = leakage::check(sc, kLeakageFlights);
  v.require(o.flights == kLeakageFlights, "only " + std::to_string(o.flights) + " flights available");
  v.require(o.changed_values == 0, std::to_string(o.changed_values) + " changed values");
  v.detail = std::to_string(o.flights) + " flights, " + std::to_string(o.rows_compared) + " rows compared, " +
             std::to_string(o.changed_values) + " changed values" + (v.detail.empty() ? "" : "; " + v.detail);
  return v;
}

// --- 7 ----------------------------------------------------------------------

Verdict criterion_7(const fs::path& a, const fs::path& b, int status_b) {
  Verdict v;
  v.require(status_b == 0, "second run exited " + std::to_string(status_b));
  std::size_t compared = 0, differing = 0;
  auto same = [&](const fs::path& rel) {
    ++compared;
    if (!fs::exists(a / rel) || support::slurp(a / rel) != support::slurp(b / rel)) {
      ++differing;
      v.require(false, rel.string() + " differs");
    }
  };
  same("results.csv");
  if (fs::exists(a / "models")) {
    for (const auto& e : fs::directory_iterator(a / "models")) same(fs::relative(e.path(), a));
  }
  v.require(compared == 17, std::to_string(compared) + " files compared");
  v.detail = std::to_string(compared) + " files (results table + model artifacts), " + std::to_string(differing) +
             " differ" + (v.detail.empty() ? "" : "; " + v.detail);
  return v;
}

// --- 8 ----------------------------------------------------------------------

Verdict criterion_8(const fs::path& desk) {
  Verdict v;
  std::string summary;
  auto account = [&](const std::string& name, std::size_t rows, std::size_t parsed, std::size_t diags) {
    v.require(parsed + diags == rows, name + ": " + std::to_string(parsed) + " + " + std::to_string(diags) +
                                          " != " + std::to_string(rows));
  };
  auto cleaned = [&](const std::string& name, const std::vector<GpsPoint>& points) {
    const CleanStats s = clean_points(points).stats;
    v.require(s.input == points.size() && s.kept + s.dropped() == s.input, name + ": clean does not conserve points");
  };
  ParseOptions opts;
  opts.airport_zone = TimeZone::parse("-07:00");
  // fixtures
  for (const char* name : {"schedule_malformed.csv", "schedule_local_bom_crlf.csv"}) {
    std::ifstream in(support::fixture(name));
    const auto r = parse_schedule(in, {}, opts);
    account(name, r.rows, r.records.size(), r.diagnostics.size());
  }
  {
    std::ifstream in(support::fixture("weather_malformed.csv"));
    const auto r = parse_weather(in, opts);
    account("weather_malformed.csv", r.rows, r.records.size(), r.diagnostics.size());
  }
  for (const char* name : {"trajectories_malformed.csv", "trajectories_malformed.jsonl"}) {
    std::ifstream in(support::fixture(name));
    const auto r = parse_trajectory_stream(in, opts);
    account(name, r.rows, r.records.size(), r.diagnostics.size());
    cleaned(name, r.records);
  }
  // synthetic: the desk run's own accounting, and the generated files re-read here
  try {
    const auto stats = nlohmann::json::parse(support::slurp(desk / "clean_stats.json"));
    account("desk clean stage", stats.at("rows"), stats.at("parsed"), stats.at("diagnostics"));
    v.require(stats.at("kept").get<std::size_t>() + stats.at("dropped").get<std::size_t>() ==
                  stats.at("input").get<std::size_t>(),
              "desk clean stage: kept + dropped != input");
    summary = "desk: " + std::to_string(stats.at("rows").get<std::size_t>()) + " rows, " +
              std::to_string(stats.at("kept").get<std::size_t>()) + " kept + " +
              std::to_string(stats.at("dropped").get<std::size_t>()) + " dropped";
    const ScenarioFiles files = scenario_files(desk / "data");
    std::ifstream s(files.schedule), w(files.weather), t(files.trajectories);
    const auto rs = parse_schedule(s, {}, opts);
    const auto rw = parse_weather(w, opts);
    const auto rt = parse_trajectory_stream(t, opts);
    account("desk schedule", rs.rows, rs.records.size(), rs.diagnostics.size());
    account("desk weather", rw.rows, rw.records.size(), rw.diagnostics.size());
    account("desk trajectories", rt.rows, rt.records.size(), rt.diagnostics.size());
    cleaned("desk trajectories", rt.records);
  } catch (const std::exception& e) {
    v.require(false, e.what());
  }
  // synthetic with heavier corruption than the desk default
  ScenarioSpec noisy;
  noisy.n_days = 2;
  noisy.flights_per_day = 80;
  noisy.corrupt_fraction = 0.05;
  noisy.seed = 8;
  const Scenario sc = generate(noisy);
  cleaned("corrupted synthetic", sc.points);
  v.detail = summary + "; 5 malformed fixtures and a 5% corrupted scenario checked" + (v.detail.empty() ? "" : "; " + v.detail);
  return v;
}

}  // namespace

int main() {
  const fs::path scratch = support::temp_dir("acceptance");
  const fs::path run_a = scratch / "desk_a", run_b = scratch / "desk_b";

  const auto start = std::chrono::steady_clock::now();
  const int status_a = run_cli(desk_run(run_a, 7));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const int status_b = run_cli(desk_run(run_b, 7));

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"1 ATC gain and gbdt best on desk scenario", [&] { return criterion_1(run_a, seconds, status_a); }},
      {"2 ATC importance exceeds WX (3 seeds)", [&] { return criterion_2(scratch, run_a); }},
      {"3 PCA invariants and Jacobi oracle", [&] { return criterion_3(run_a); }},
      {"4 haversine and zone oracles", [] { return criterion_4(); }},
      {"5 model correctness", [] { return criterion_5(); }},
      {"6 no leakage past predicting time", [] { return criterion_6(); }},
      {"7 byte-identical reruns", [&] { return criterion_7(run_a, run_b, status_b); }},
      {"8 ingest and clean conservation", [&] { return criterion_8(run_a); }},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  criterion " << name << "  [" << v.detail << "]\n";
  }
  fs::remove_all(scratch);
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << '\n';
  return failed == 0 ? 0 : 1;
}
