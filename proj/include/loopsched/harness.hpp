#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "calibration.hpp"
#include "errors.hpp"
#include "kernels.hpp"
#include "native.hpp"
#include "platform.hpp"
#include "simulator.hpp"
#include "stats.hpp"
#include "technique.hpp"
#include "text_format.hpp"

namespace loopsched {

/// Processor-seconds spent in the parallel region.
inline double parallel_cost(double wall_time, count_t threads) {
  if (!(wall_time >= 0.0)) throw std::invalid_argument("wall time must be non-negative");
  return wall_time * static_cast<double>(threads);
}

/// (1 - t_sim / t_ref) * 100. Positive means the simulation underestimates.
inline double percent_error(double t_sim, double t_ref) {
  if (t_ref == 0.0) throw std::invalid_argument("reference time must be non-zero");
  return (1.0 - t_sim / t_ref) * 100.0;
}

enum class ExperimentMode { simulate_rp3, simulate_knl, native };

inline std::string_view to_string(ExperimentMode m) noexcept {
  switch (m) {
    case ExperimentMode::simulate_rp3: return "simulate-rp3";
    case ExperimentMode::simulate_knl: return "simulate-knl";
    case ExperimentMode::native: return "native";
  }
  return "?";
}

inline ExperimentMode parse_mode(std::string_view s) {
  for (auto m : {ExperimentMode::simulate_rp3, ExperimentMode::simulate_knl, ExperimentMode::native})
    if (s == to_string(m)) return m;
  throw std::invalid_argument("unknown mode '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Results and reference CSV
// ---------------------------------------------------------------------------

inline constexpr std::string_view results_header =
    "kernel,technique,threads,mode,mean_time_s,ci_half_width_s,reps,parallel_cost_ps";
inline constexpr std::string_view reference_header = "kernel,technique,threads,parallel_cost_ps,source";

struct ResultRow {
  KernelKind kernel{KernelKind::MM};
  Technique technique{Technique::STATIC};
  count_t threads{1};
  std::string mode;
  double mean_time_s{0.0};
  double ci_half_width_s{0.0};
  std::size_t reps{1};
  double parallel_cost_ps{0.0};
  std::vector<double> samples;  // not part of the results CSV
};

struct ReferenceRow {
  KernelKind kernel{KernelKind::MM};
  Technique technique{Technique::STATIC};
  count_t threads{1};
  double parallel_cost_ps{0.0};
  std::string source;
};

using ReferenceSeries = std::vector<ReferenceRow>;

inline void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << results_header << '\n';
  for (const auto& r : rows) {
    out << to_string(r.kernel) << ',' << to_string(r.technique) << ',' << r.threads << ','
        << r.mode << ',' << format_number(r.mean_time_s) << ',' << format_number(r.ci_half_width_s)
        << ',' << r.reps << ',' << format_number(r.parallel_cost_ps) << '\n';
  }
}

namespace detail {

template <typename Fn>
void read_csv(std::istream& in, std::string_view header, std::size_t columns, Fn&& on_row) {
  std::string raw;
  std::size_t line = 0;
  bool saw_header = false;
  while (std::getline(in, raw)) {
    ++line;
    const auto body = trim(raw);
    if (body.empty() || body.front() == '#') continue;
    if (!saw_header) {
      if (body != header) throw ParseError("expected header '" + std::string(header) + "'", line);
      saw_header = true;
      continue;
    }
    auto cols = split(body, ',');
    if (cols.size() != columns) {
      throw ParseError("expected " + std::to_string(columns) + " fields, got " +
                           std::to_string(cols.size()), line);
    }
    try {
      on_row(cols, line);
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), line);
    }
  }
  if (!saw_header) throw ParseError("missing header '" + std::string(header) + "'");
}

}  // namespace detail

inline std::vector<ResultRow> read_results_csv(std::istream& in) {
  std::vector<ResultRow> rows;
  detail::read_csv(in, results_header, 8, [&](const auto& c, std::size_t line) {
    ResultRow r;
    r.kernel = parse_kernel(c[0]);
    r.technique = parse_technique(c[1]);
    r.threads = parse_count(c[2], "threads", line);
    r.mode = c[3];
    r.mean_time_s = parse_double(c[4], "mean_time_s", line);
    r.ci_half_width_s = parse_double(c[5], "ci_half_width_s", line);
    r.reps = parse_count(c[6], "reps", line);
    r.parallel_cost_ps = parse_double(c[7], "parallel_cost_ps", line);
    rows.push_back(std::move(r));
  });
  return rows;
}

inline ReferenceSeries load_reference(std::istream& in) {
  ReferenceSeries rows;
  std::set<std::tuple<KernelKind, Technique, count_t, std::string>> keys;
  detail::read_csv(in, reference_header, 5, [&](const auto& c, std::size_t line) {
    ReferenceRow r{parse_kernel(c[0]), parse_technique(c[1]), parse_count(c[2], "threads", line),
                   parse_double(c[3], "parallel_cost_ps", line), c[4]};
    if (!keys.emplace(r.kernel, r.technique, r.threads, r.source).second) {
      throw ParseError("duplicate reference key", line);
    }
    rows.push_back(std::move(r));
  });
  return rows;
}

inline ReferenceSeries load_reference(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open reference '" + path + "'");
  return load_reference(in);
}

inline std::vector<ResultRow> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open results '" + path + "'");
  return read_results_csv(in);
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

struct CompareCell {
  KernelKind kernel{KernelKind::MM};
  Technique technique{Technique::STATIC};
  count_t threads{1};
  std::string mode;
  std::string source;
  double result_cost{0.0};
  double reference_cost{0.0};
  double percent_error{0.0};
};

struct CompareReport {
  std::vector<CompareCell> cells;
  std::vector<std::string> skipped;
  double min_abs{0.0};
  double max_abs{0.0};
  double mean_abs{0.0};
};

// Matches result and reference rows on (kernel, technique, threads). Each
// matched pair is one cell; unmatched rows on either side are reported as
// skipped. Parallel cost is time x threads on both sides, so %E on cost
// equals %E on time.
inline CompareReport compare(const std::vector<ResultRow>& results, const ReferenceSeries& reference) {
  CompareReport report;
  std::vector<bool> reference_used(reference.size(), false);
  for (const auto& r : results) {
    bool matched = false;
    for (std::size_t i = 0; i < reference.size(); ++i) {
      const auto& ref = reference[i];
      if (ref.kernel != r.kernel || ref.technique != r.technique || ref.threads != r.threads) continue;
      matched = true;
      reference_used[i] = true;
      report.cells.push_back({r.kernel, r.technique, r.threads, r.mode, ref.source,
                              r.parallel_cost_ps, ref.parallel_cost_ps,
                              percent_error(r.parallel_cost_ps, ref.parallel_cost_ps)});
    }
    if (!matched) {
      report.skipped.push_back("result " + std::string(to_string(r.kernel)) + "," +
                               std::string(to_string(r.technique)) + "," + std::to_string(r.threads) +
                               "," + r.mode + ": no reference");
    }
  }
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (reference_used[i]) continue;
    const auto& ref = reference[i];
    report.skipped.push_back("reference " + std::string(to_string(ref.kernel)) + "," +
                             std::string(to_string(ref.technique)) + "," +
                             std::to_string(ref.threads) + "," + ref.source + ": no result");
  }
  if (!report.cells.empty()) {
    report.min_abs = std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (const auto& c : report.cells) {
      const double a = std::abs(c.percent_error);
      report.min_abs = std::min(report.min_abs, a);
      report.max_abs = std::max(report.max_abs, a);
      sum += a;
    }
    report.mean_abs = sum / static_cast<double>(report.cells.size());
  }
  return report;
}

// ---------------------------------------------------------------------------
// Experiment matrix
// ---------------------------------------------------------------------------

struct KernelSize {
  KernelKind kind{KernelKind::MM};
  count_t matrix_order{0};
};

struct ExperimentMatrix {
  ExperimentMode mode{ExperimentMode::simulate_rp3};
  std::vector<KernelSize> kernels;
  std::vector<Technique> techniques{all_techniques.begin(), all_techniques.end()};
  std::vector<count_t> thread_counts;
  std::optional<PlatformSpec> platform;   // defaults per mode when unset
  std::optional<CalibrationProfile> profile;
  double g1{35.0};
  double g2{60.0};
  std::uint64_t seed{42};
  RepetitionPolicy policy{};
  Pinning pinning{Pinning::none};

  void validate() const {
    if (kernels.empty()) throw std::invalid_argument("experiment matrix has no kernels");
    if (techniques.empty()) throw std::invalid_argument("experiment matrix has no techniques");
    if (thread_counts.empty()) throw std::invalid_argument("experiment matrix has no thread counts");
    for (std::size_t i = 0; i < thread_counts.size(); ++i) {
      if (thread_counts[i] == 0) throw std::invalid_argument("thread counts must be positive");
      if (i && thread_counts[i] <= thread_counts[i - 1])
        throw std::invalid_argument("thread counts must be strictly increasing");
    }
    if (mode == ExperimentMode::simulate_knl && !profile)
      throw std::invalid_argument("simulate-knl mode requires a calibration profile");
  }
};

// Sweep config: the platform-file dialect plus comma-separated lists.
// Required: mode, kernels (KIND:n,...), threads. Optional: techniques,
// platform, profile, g1, g2, seed, min_reps, max_reps, ci_target, ci_level, pin.
// Relative paths resolve against `base_dir`.
inline ExperimentMatrix parse_sweep_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
  const auto kv = KeyValueFile::parse(in);
  static const std::set<std::string> known{"mode", "kernels", "techniques", "threads", "platform",
                                           "profile", "g1", "g2", "seed", "min_reps", "max_reps",
                                           "ci_target", "ci_level", "pin"};
  for (const auto& [key, e] : kv.entries())
    if (!known.count(key)) throw ParseError("unknown sweep key '" + key + "'", e.line);

  auto wrap = [&](const std::string& key, auto&& fn) {
    try {
      return fn();
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), kv.get(key).line);
    }
  };

  ExperimentMatrix m;
  m.mode = wrap("mode", [&] { return parse_mode(kv.get("mode").value); });
  for (const auto& item : kv.list("kernels")) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ParseError("kernel entry '" + item + "' needs KIND:n", kv.get("kernels").line);
    KernelSize ks;
    ks.kind = wrap("kernels", [&] { return parse_kernel(item.substr(0, colon)); });
    ks.matrix_order = parse_count(item.substr(colon + 1), "kernels", kv.get("kernels").line);
    if (ks.matrix_order == 0) throw ParseError("matrix order must be positive", kv.get("kernels").line);
    m.kernels.push_back(ks);
  }
  if (kv.has("techniques")) {
    m.techniques.clear();
    for (const auto& t : kv.list("techniques"))
      m.techniques.push_back(wrap("techniques", [&] { return parse_technique(t); }));
  }
  const auto& threads = kv.get("threads");
  if (!trim(threads.value).empty()) {
    for (const auto& t : kv.list("threads")) m.thread_counts.push_back(parse_count(t, "threads", threads.line));
  }
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path{p};
    return path.is_absolute() || base_dir.empty() ? path.string() : (base_dir / path).string();
  };
  if (kv.has("platform")) m.platform = load_platform(resolve(kv.get("platform").value));
  if (kv.has("profile")) m.profile = read_profile(resolve(kv.get("profile").value));
  if (kv.has("g1")) m.g1 = kv.number("g1");
  if (kv.has("g2")) m.g2 = kv.number("g2");
  if (kv.has("seed")) m.seed = parse_count(kv.get("seed").value, "seed", kv.get("seed").line);
  if (kv.has("min_reps")) m.policy.min_reps = parse_count(kv.get("min_reps").value, "min_reps", kv.get("min_reps").line);
  if (kv.has("max_reps")) m.policy.max_reps = parse_count(kv.get("max_reps").value, "max_reps", kv.get("max_reps").line);
  if (kv.has("ci_target")) m.policy.target = kv.number("ci_target");
  if (kv.has("ci_level")) m.policy.level = kv.number("ci_level");
  if (kv.has("pin")) {
    const auto& v = kv.get("pin");
    if (v.value == "scatter") m.pinning = Pinning::scatter;
    else if (v.value == "none") m.pinning = Pinning::none;
    else throw ParseError("pin must be scatter or none", v.line);
  }
  wrap("threads", [&] { m.validate(); return 0; });
  return m;
}

inline ExperimentMatrix load_sweep_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open sweep config '" + path + "'");
  return parse_sweep_config(in, std::filesystem::path(path).parent_path());
}

inline PlatformSpec default_platform(ExperimentMode mode) {
  return mode == ExperimentMode::simulate_knl ? knl_platform() : rp3_platform();
}

// Simulator inputs for one cell. RP3 mode: analytic cost model, networked,
// RP3 overhead constants unless a profile is supplied. KNL mode: calibrated
// task times when the profile has a table for this kernel size, zero-byte
// shared-memory transfers, profile overheads.
inline SimResult simulate_cell(ExperimentMode mode, KernelSize kernel, Technique technique,
                               count_t threads, const PlatformSpec& platform,
                               const CalibrationProfile* profile, double g1 = 35.0,
                               double g2 = 60.0) {
  const KernelCostModel model{kernel.kind, kernel.matrix_order, g1, g2};
  const auto comm = mode == ExperimentMode::simulate_knl ? CommMode::shared_memory : CommMode::networked;
  auto cfg = make_sim_config(model, technique, threads, comm);
  OverheadModel overheads = OverheadModel::rp3();
  if (profile) {
    overheads = profile->overhead_model();
    if (mode == ExperimentMode::simulate_knl) {
      if (const auto* table = profile->find_tasks(kernel.kind, kernel.matrix_order))
        cfg.iteration_flop = table->flop_table();
    }
  }
  return simulate(cfg, platform, overheads);
}

struct CellFailure {
  KernelSize kernel;
  Technique technique{Technique::STATIC};
  count_t threads{0};
  std::string reason;
};

struct MatrixReport {
  std::vector<ResultRow> rows;
  std::vector<CellFailure> failures;
};

using NativeProgress = std::function<void(const ResultRow&)>;

// Rows ordered kernel, technique, threads as listed in the matrix.
// A failing cell is recorded and the sweep continues.
inline MatrixReport run_matrix(const ExperimentMatrix& matrix, const NativeProgress& progress = {}) {
  matrix.validate();
  MatrixReport report;
  const auto platform = matrix.platform.value_or(default_platform(matrix.mode));
  const CalibrationProfile* profile = matrix.profile ? &*matrix.profile : nullptr;

  for (const auto& kernel : matrix.kernels) {
    std::optional<KernelProblem> problem;
    if (matrix.mode == ExperimentMode::native) problem = make_problem(kernel.kind, kernel.matrix_order, matrix.seed);
    for (auto technique : matrix.techniques) {
      for (count_t p : matrix.thread_counts) {
        ResultRow row;
        row.kernel = kernel.kind;
        row.technique = technique;
        row.threads = p;
        row.mode = std::string(to_string(matrix.mode));
        try {
          if (matrix.mode == ExperimentMode::native) {
            NativeRunConfig cfg{technique, p, matrix.pinning, TimingCapture::off, false};
            auto stats = repeat_until_ci([&] { return run_parallel(*problem, cfg).wall_time; }, matrix.policy);
            row.mean_time_s = stats.mean_time;
            row.ci_half_width_s = stats.ci_half_width;
            row.reps = stats.repetitions;
            row.samples = std::move(stats.samples);
          } else {
            const auto sim = simulate_cell(matrix.mode, kernel, technique, p, platform, profile,
                                           matrix.g1, matrix.g2);
            row.mean_time_s = sim.makespan();
            row.ci_half_width_s = 0.0;
            row.reps = 1;
            row.samples = {row.mean_time_s};
          }
          row.parallel_cost_ps = parallel_cost(row.mean_time_s, p);
          if (progress) progress(row);
          report.rows.push_back(std::move(row));
        } catch (const std::exception& e) {
          report.failures.push_back({kernel, technique, p, e.what()});
        }
      }
    }
  }
  return report;
}

// Raw per-repetition samples so every aggregate can be recomputed.
inline void write_samples_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << "kernel,technique,threads,mode,rep,time_s\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
      out << to_string(r.kernel) << ',' << to_string(r.technique) << ',' << r.threads << ','
          << r.mode << ',' << i << ',' << format_number(r.samples[i]) << '\n';
    }
  }
}

// One whitespace-separated table per (kernel, mode): threads, then parallel
// cost per technique. Missing cells are written as "nan". Returns written paths.
inline std::vector<std::string> write_plot_data(const std::filesystem::path& dir,
                                                const std::vector<ResultRow>& rows) {
  std::filesystem::create_directories(dir);
  std::map<std::pair<std::string, std::string>, std::map<count_t, std::map<Technique, double>>> grouped;
  std::map<std::pair<std::string, std::string>, std::set<Technique>> columns;
  for (const auto& r : rows) {
    const auto key = std::make_pair(std::string(to_string(r.kernel)), r.mode);
    grouped[key][r.threads][r.technique] = r.parallel_cost_ps;
    columns[key].insert(r.technique);
  }
  std::vector<std::string> written;
  for (const auto& [key, by_threads] : grouped) {
    const auto path = dir / ("plot_" + key.first + "_" + key.second + ".dat");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write plot data '" + path.string() + "'");
    out << "# threads";
    for (auto t : columns[key]) out << ' ' << to_string(t);
    out << '\n';
    for (const auto& [threads, cells] : by_threads) {
      out << threads;
      for (auto t : columns[key]) {
        auto it = cells.find(t);
        out << ' ' << (it == cells.end() ? std::string("nan") : format_number(it->second));
      }
      out << '\n';
    }
    written.push_back(path.string());
  }
  return written;
}

}  // namespace loopsched
