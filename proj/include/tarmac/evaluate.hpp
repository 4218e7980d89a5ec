#pragma once

// RMSE, chronological day split, the model x source-combination grid, and
// permutation importance.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "tarmac/csv.hpp"
#include "tarmac/error.hpp"
#include "tarmac/featurize.hpp"
#include "tarmac/model.hpp"
#include "tarmac/random.hpp"

namespace tarmac {

inline double rmse(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) {
    throw ContractViolation("rmse: length mismatch (" + std::to_string(y_true.size()) + " vs " +
                            std::to_string(y_pred.size()) + ")");
  }
  if (y_true.empty()) throw ContractViolation("rmse: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double d = y_true[i] - y_pred[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(y_true.size()));
}

inline double rmse(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
  return rmse(std::span<const double>(y_true.data(), static_cast<std::size_t>(y_true.size())),
              std::span<const double>(y_pred.data(), static_cast<std::size_t>(y_pred.size())));
}

// ---------------------------------------------------------------------------
// Chronological split

struct DaySplit {
  std::vector<Date> train_days;
  std::vector<Date> test_days;

  bool is_train(Date d) const { return std::binary_search(train_days.begin(), train_days.end(), d); }
  bool is_test(Date d) const { return std::binary_search(test_days.begin(), test_days.end(), d); }
};

/// Distinct days in ascending order; the first ceil(fraction * n) go to training.
inline DaySplit split_days(std::span<const Date> days, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must be in (0, 1)");
  }
  std::set<Date> distinct(days.begin(), days.end());
  if (distinct.size() < 2) {
    throw ContractViolation("time split needs at least 2 distinct days, got " + std::to_string(distinct.size()));
  }
  const auto n = distinct.size();
  auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(n) - 1e-9));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  DaySplit split;
  for (Date d : distinct) (split.train_days.size() < n_train ? split.train_days : split.test_days).push_back(d);
  return split;
}

struct RowSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline RowSplit apply_split(std::span<const RowKey> rows, const DaySplit& days) {
  RowSplit out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (days.is_train(rows[i].day)) {
      out.train.push_back(i);
    } else if (days.is_test(rows[i].day)) {
      out.test.push_back(i);
    }
  }
  return out;
}

inline RowSplit time_split(std::span<const RowKey> rows, double train_fraction) {
  std::vector<Date> days;
  for (const auto& r : rows) days.push_back(r.day);
  return apply_split(rows, split_days(days, train_fraction));
}

// ---------------------------------------------------------------------------
// Experiment grid

inline const std::vector<GroupSet>& default_combos() {
  static const std::vector<GroupSet> combos = {
      GroupSet{SourceGroup::hist},
      GroupSet{SourceGroup::hist, SourceGroup::wx},
      GroupSet{SourceGroup::hist, SourceGroup::atc},
      GroupSet{SourceGroup::hist, SourceGroup::wx, SourceGroup::atc},
  };
  return combos;
}

struct ExperimentResult {
  ModelFamily family = ModelFamily::linear;
  GroupSet combo;
  double rmse_train = std::numeric_limits<double>::quiet_NaN();
  double rmse_test = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::uint64_t seed = 0;
  double wall_ms = 0.0;
  std::string status = "ok";  // otherwise the error message of a failed cell
  std::optional<ModelArtifact> model;

  bool ok() const { return status == "ok"; }
};

struct GridOptions {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool keep_models = true;
};

/// Fits one model on the training rows of `full` restricted to `combo` and
/// scores it on the test rows. Never throws; failures land in `status`.
inline ExperimentResult run_cell(const FeatureMatrix& full, const RowSplit& split, ModelSpec spec,
                                 const GroupSet& combo, std::uint64_t seed, bool keep_model = true) {
  ExperimentResult r;
  r.family = spec.family;
  r.combo = combo;
  r.seed = seed;
  r.n_train = split.train.size();
  r.n_test = split.test.size();
  const auto start = std::chrono::steady_clock::now();
  try {
    spec.seed = seed;
    const FeatureMatrix m = full.select(combo);
    const FeatureMatrix train = m.subset_rows(split.train);
    const FeatureMatrix test = m.subset_rows(split.test);
    if (train.n_rows() == 0) throw ContractViolation("no training rows");
    if (test.n_rows() == 0) throw ContractViolation("no test rows");
    ModelArtifact model = fit(spec, train.values, train.target, train.columns);
    r.rmse_train = rmse(train.target, predict(model, train.values, train.columns));
    r.rmse_test = rmse(test.target, predict(model, test.values, test.columns));
    if (keep_model) r.model = std::move(model);
  } catch (const std::exception& e) {
    r.status = e.what();
    r.rmse_train = r.rmse_test = std::numeric_limits<double>::quiet_NaN();
  }
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

/// One result per (model, combo), model-major. Cells share nothing but the
/// read-only matrix, so thread count never changes the numbers.
inline std::vector<ExperimentResult> run_grid(const FeatureMatrix& full, const RowSplit& split,
                                              std::span<const ModelSpec> models, std::span<const GroupSet> combos,
                                              const GridOptions& options = {}) {
  struct Cell {
    const ModelSpec* spec;
    const GroupSet* combo;
  };
  std::vector<Cell> cells;
  for (const auto& m : models) {
    for (const auto& c : combos) cells.push_back({&m, &c});
  }
  std::vector<ExperimentResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      results[i] = run_cell(full, split, *cells[i].spec, *cells[i].combo, options.seed, options.keep_models);
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(cells.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  return results;
}

/// `wall_ms` is wall-clock noise; it is written only when asked so that the
/// table is byte-stable across runs by default.
inline void write_results(std::ostream& out, std::span<const ExperimentResult> results, bool include_wall_time = false) {
  out << "model,combo,rmse_train,rmse_test,n_train,n_test,seed,wall_ms,status\n";
  for (const auto& r : results) {
    auto num = [](double v) { return std::isfinite(v) ? csv::format_double(v) : std::string(); };
    out << to_string(r.family) << ',' << r.combo.to_string() << ',' << num(r.rmse_train) << ','
        << num(r.rmse_test) << ',' << r.n_train << ',' << r.n_test << ',' << r.seed << ','
        << (include_wall_time ? csv::format_double(std::round(r.wall_ms * 1000.0) / 1000.0) : std::string("0"))
        << ',' << csv::quote(r.status) << '\n';
  }
}

inline std::vector<ExperimentResult> read_results(std::istream& in) {
  csv::LineReader reader(in);
  std::string line;
  if (!reader.next_nonblank(line)) throw SchemaError("results table: empty");
  const csv::Header header(csv::split(line, ','));
  const std::size_t c_model = header.require("model"), c_combo = header.require("combo"),
                    c_train = header.require("rmse_train"), c_test = header.require("rmse_test"),
                    c_ntrain = header.require("n_train"), c_ntest = header.require("n_test"),
                    c_seed = header.require("seed"), c_wall = header.require("wall_ms");
  const auto c_status = header.find("status");
  std::vector<ExperimentResult> out;
  while (reader.next_nonblank(line)) {
    const auto f = csv::split(line, ',');
    if (f.size() != header.size()) throw SchemaError("results table: bad field count on line " +
                                                     std::to_string(reader.line_number()));
    ExperimentResult r;
    r.family = model_family_from_string(f[c_model]);
    r.combo = GroupSet::parse(f[c_combo]);
    if (!f[c_train].empty()) r.rmse_train = csv::parse_double(f[c_train], "rmse_train");
    if (!f[c_test].empty()) r.rmse_test = csv::parse_double(f[c_test], "rmse_test");
    r.n_train = static_cast<std::size_t>(csv::parse_int(f[c_ntrain], "n_train"));
    r.n_test = static_cast<std::size_t>(csv::parse_int(f[c_ntest], "n_test"));
    r.seed = static_cast<std::uint64_t>(csv::parse_int(f[c_seed], "seed"));
    r.wall_ms = csv::parse_double(f[c_wall], "wall_ms");
    if (c_status) r.status = f[*c_status];
    out.push_back(std::move(r));
  }
  return out;
}

/// Plain-text table: one row per combo, one column per model family (test RMSE).
inline std::string render_report(std::span<const ExperimentResult> results) {
  std::vector<ModelFamily> families;
  std::vector<GroupSet> combos;
  for (const auto& r : results) {
    if (std::find(families.begin(), families.end(), r.family) == families.end()) families.push_back(r.family);
    if (std::find(combos.begin(), combos.end(), r.combo) == combos.end()) combos.push_back(r.combo);
  }
  auto find = [&](ModelFamily f, const GroupSet& c) -> const ExperimentResult* {
    for (const auto& r : results) {
      if (r.family == f && r.combo == c) return &r;
    }
    return nullptr;
  };
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.insert(0, w - s.size(), ' ');
    return s;
  };
  auto fixed = [](double v) {
    if (!std::isfinite(v)) return std::string("failed");
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << v;
    return os.str();
  };
  std::ostringstream out;
  out << "Test RMSE (minutes) by data sources and model\n\n";
  out << pad("sources", 14);
  for (auto f : families) out << pad(std::string(to_string(f)), 12);
  out << '\n';
  for (const auto& c : combos) {
    out << pad(c.to_string(), 14);
    for (auto f : families) {
      const auto* r = find(f, c);
      out << pad(r ? fixed(r->rmse_test) : "-", 12);
    }
    out << '\n';
  }
  out << "\nTrain RMSE (minutes)\n\n";
  out << pad("sources", 14);
  for (auto f : families) out << pad(std::string(to_string(f)), 12);
  out << '\n';
  for (const auto& c : combos) {
    out << pad(c.to_string(), 14);
    for (auto f : families) {
      const auto* r = find(f, c);
      out << pad(r ? fixed(r->rmse_train) : "-", 12);
    }
    out << '\n';
  }
  if (!results.empty()) {
    out << "\nrows: train " << results.front().n_train << ", test " << results.front().n_test << ", seed "
        << results.front().seed << '\n';
  }
  for (const auto& r : results) {
    if (!r.ok()) out << "failed: " << to_string(r.family) << ' ' << r.combo.to_string() << ": " << r.status << '\n';
  }
  return out.str();
}

/// Grouped bar chart: one group per model family, one bar per combo.
inline std::string render_svg(std::span<const ExperimentResult> results) {
  std::vector<ModelFamily> families;
  std::vector<GroupSet> combos;
  double max_rmse = 0.0;
  for (const auto& r : results) {
    if (std::find(families.begin(), families.end(), r.family) == families.end()) families.push_back(r.family);
    if (std::find(combos.begin(), combos.end(), r.combo) == combos.end()) combos.push_back(r.combo);
    if (std::isfinite(r.rmse_test)) max_rmse = std::max(max_rmse, r.rmse_test);
  }
  if (max_rmse <= 0.0) max_rmse = 1.0;
  static constexpr const char* kColors[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759",
                                            "#76b7b2", "#edc948", "#b07aa1", "#9c755f"};
  const double bar_w = 18.0, gap = 30.0, left = 60.0, top = 30.0, plot_h = 240.0;
  const double group_w = bar_w * static_cast<double>(combos.size()) + gap;
  const double width = left + group_w * static_cast<double>(families.size()) + 160.0;
  const double height = top + plot_h + 60.0;
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(1);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<text x=\"" << left << "\" y=\"18\">Test RMSE (minutes)</text>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << width - 150.0 << "\" y2=\""
    << top + plot_h << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = max_rmse * t / 4.0;
    const double y = top + plot_h - plot_h * t / 4.0;
    s << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << v << "</text>\n";
  }
  for (std::size_t fi = 0; fi < families.size(); ++fi) {
    const double x0 = left + gap / 2 + group_w * static_cast<double>(fi);
    for (std::size_t ci = 0; ci < combos.size(); ++ci) {
      for (const auto& r : results) {
        if (r.family != families[fi] || !(r.combo == combos[ci]) || !std::isfinite(r.rmse_test)) continue;
        const double h = plot_h * r.rmse_test / max_rmse;
        s << "<rect x=\"" << x0 + bar_w * static_cast<double>(ci) << "\" y=\"" << top + plot_h - h
          << "\" width=\"" << bar_w - 2 << "\" height=\"" << h << "\" fill=\"" << kColors[ci % 8] << "\"/>\n";
      }
    }
    s << "<text x=\"" << x0 + bar_w * static_cast<double>(combos.size()) / 2 << "\" y=\"" << top + plot_h + 16
      << "\" text-anchor=\"middle\">" << to_string(families[fi]) << "</text>\n";
  }
  for (std::size_t ci = 0; ci < combos.size(); ++ci) {
    const double y = top + 14.0 * static_cast<double>(ci);
    s << "<rect x=\"" << width - 140 << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\"" << kColors[ci % 8]
      << "\"/><text x=\"" << width - 125 << "\" y=\"" << y + 9 << "\">" << combos[ci].to_string() << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

// ---------------------------------------------------------------------------
// Permutation importance

struct ColumnImportance {
  std::string column;
  SourceGroup group = SourceGroup::hist;
  double delta_rmse = 0.0;  // mean over repeats
  double delta_sd = 0.0;
};

struct ImportanceReport {
  double baseline_rmse = 0.0;
  int repeats = 0;
  std::uint64_t seed = 0;
  std::vector<ColumnImportance> columns;  // in matrix column order
  std::map<SourceGroup, double> groups;   // sum of member means

  double group(SourceGroup g) const {
    auto it = groups.find(g);
    return it == groups.end() ? 0.0 : it->second;
  }

  /// Column indices sorted by decreasing importance (stable on ties).
  std::vector<std::size_t> ranking() const {
    std::vector<std::size_t> order(columns.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return columns[a].delta_rmse > columns[b].delta_rmse; });
    return order;
  }
};

/// importance(col) = mean over repeats of rmse(col shuffled) - baseline rmse.
/// The permutation for (col, repeat) depends only on (seed, col, repeat).
inline std::vector<std::pair<double, double>> permutation_importance(const ModelArtifact& m, const Eigen::MatrixXd& x,
                                                                     const Eigen::VectorXd& y, int repeats,
                                                                     std::uint64_t seed) {
  if (repeats < 1) throw ConfigError("importance: repeats must be >= 1");
  const Eigen::VectorXd base_pred = predict(m, x);
  const double baseline = rmse(y, base_pred);
  std::vector<std::pair<double, double>> out;
  Eigen::MatrixXd work = x;
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    std::vector<double> deltas;
    for (int r = 0; r < repeats; ++r) {
      std::iota(perm.begin(), perm.end(), Eigen::Index{0});
      Rng rng(seed, {static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(r)});
      rng.shuffle(std::span<Eigen::Index>(perm));
      for (Eigen::Index i = 0; i < x.rows(); ++i) work(i, c) = x(perm[static_cast<std::size_t>(i)], c);
      deltas.push_back(rmse(y, predict(m, work)) - baseline);
    }
    work.col(c) = x.col(c);
    double mean = 0.0;
    for (double d : deltas) mean += d;
    mean /= static_cast<double>(deltas.size());
    double var = 0.0;
    for (double d : deltas) var += (d - mean) * (d - mean);
    const double sd = deltas.size() > 1 ? std::sqrt(var / static_cast<double>(deltas.size() - 1)) : 0.0;
    out.emplace_back(mean, sd);
  }
  return out;
}

inline ImportanceReport permutation_importance(const ModelArtifact& m, const FeatureMatrix& test, int repeats,
                                               std::uint64_t seed) {
  // align by name first so shuffled column c is the matrix's column c
  Eigen::MatrixXd aligned(test.n_rows(), static_cast<Eigen::Index>(m.columns.size()));
  std::vector<SourceGroup> groups;
  for (std::size_t j = 0; j < m.columns.size(); ++j) {
    auto it = std::find(test.columns.begin(), test.columns.end(), m.columns[j]);
    if (it == test.columns.end()) throw ContractViolation("importance: matrix lacks column '" + m.columns[j] + "'");
    const auto src = static_cast<std::size_t>(it - test.columns.begin());
    aligned.col(static_cast<Eigen::Index>(j)) = test.values.col(static_cast<Eigen::Index>(src));
    groups.push_back(test.groups[src]);
  }
  if (test.columns.size() != m.columns.size()) throw ContractViolation("importance: matrix has extra columns");
  ImportanceReport report;
  report.repeats = repeats;
  report.seed = seed;
  report.baseline_rmse = rmse(test.target, predict(m, aligned));
  const auto per_column = permutation_importance(m, aligned, test.target, repeats, seed);
  for (std::size_t j = 0; j < per_column.size(); ++j) {
    report.columns.push_back({m.columns[j], groups[j], per_column[j].first, per_column[j].second});
    report.groups[groups[j]] += per_column[j].first;
  }
  return report;
}

inline void write_importance(std::ostream& out, const ImportanceReport& report) {
  out << "kind,name,group,delta_rmse,sd\n";
  for (const auto& c : report.columns) {
    out << "column," << c.column << ',' << to_string(c.group) << ',' << csv::format_double(c.delta_rmse) << ','
        << csv::format_double(c.delta_sd) << '\n';
  }
  for (const auto& [g, v] : report.groups) {
    out << "group," << to_string(g) << ',' << to_string(g) << ',' << csv::format_double(v) << ",\n";
  }
}

// ---------------------------------------------------------------------------
// Learning curve: train on the most recent k training days, score on the test days.

struct LearningCurvePoint {
  std::size_t train_days = 0;
  std::size_t n_train = 0;
  double rmse_test = 0.0;
};

inline std::vector<LearningCurvePoint> learning_curve(const FeatureMatrix& m, const DaySplit& days,
                                                      const ModelSpec& spec) {
  std::vector<LearningCurvePoint> out;
  const RowSplit full = apply_split(m.rows, days);
  const FeatureMatrix test = m.subset_rows(full.test);
  for (std::size_t k = 1; k <= days.train_days.size(); ++k) {
    const Date first = days.train_days[days.train_days.size() - k];
    std::vector<std::size_t> rows;
    for (std::size_t i : full.train) {
      if (m.rows[i].day >= first) rows.push_back(i);
    }
    const FeatureMatrix train = m.subset_rows(rows);
    if (train.n_rows() == 0 || test.n_rows() == 0) continue;
    const ModelArtifact model = fit(spec, train.values, train.target, train.columns);
    out.push_back({k, rows.size(), rmse(test.target, predict(model, test.values, test.columns))});
  }
  return out;
}

}  // namespace tarmac
