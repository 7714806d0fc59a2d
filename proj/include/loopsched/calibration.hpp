#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "kernels.hpp"
#include "native.hpp"
#include "simulator.hpp"
#include "stats.hpp"
#include "technique.hpp"
#include "text_format.hpp"

namespace loopsched {

// A measured duration and its FLOP equivalent at the profile's nominal speed.
struct MeasuredCost {
  double seconds{0.0};
  double flop{0.0};

  bool operator==(const MeasuredCost&) const = default;
};

inline double seconds_to_flop(double seconds, double nominal_speed) noexcept {
  return seconds * nominal_speed;
}

// Median per-iteration time over [first, last).
struct TaskBucket {
  count_t first{0};
  count_t last{0};
  MeasuredCost cost;

  bool operator==(const TaskBucket&) const = default;
};

struct TaskTable {
  KernelKind kernel{KernelKind::MM};
  count_t matrix_order{0};
  std::vector<TaskBucket> buckets;

  count_t iterations() const noexcept { return matrix_order * matrix_order; }

  // Piecewise-linear between bucket centres, flat beyond the outer centres.
  double flop_at(count_t iteration) const {
    if (buckets.empty()) throw std::invalid_argument("empty task table");
    const double x = static_cast<double>(iteration);
    auto centre = [](const TaskBucket& b) {
      return 0.5 * (static_cast<double>(b.first) + static_cast<double>(b.last - 1));
    };
    if (x <= centre(buckets.front())) return buckets.front().cost.flop;
    for (std::size_t i = 1; i < buckets.size(); ++i) {
      const double c1 = centre(buckets[i]);
      if (x <= c1) {
        const double c0 = centre(buckets[i - 1]);
        const double w = (x - c0) / (c1 - c0);
        return buckets[i - 1].cost.flop + w * (buckets[i].cost.flop - buckets[i - 1].cost.flop);
      }
    }
    return buckets.back().cost.flop;
  }

  std::vector<double> flop_table() const {
    std::vector<double> out(iterations());
    for (count_t i = 0; i < out.size(); ++i) out[i] = flop_at(i);
    return out;
  }

  bool operator==(const TaskTable&) const = default;
};

struct CalibrationProfile {
  double nominal_core_speed{41600e6};
  double timer_overhead_s{0.0};
  bool partial{false};
  std::map<count_t, MeasuredCost> thread_creation;
  std::array<MeasuredCost, 4> scheduling_overhead{};
  std::vector<TaskTable> tasks;

  const TaskTable* find_tasks(KernelKind kernel, count_t matrix_order) const {
    for (const auto& t : tasks)
      if (t.kernel == kernel && t.matrix_order == matrix_order) return &t;
    return nullptr;
  }

  OverheadModel overhead_model() const {
    OverheadModel m;
    m.source = OverheadModel::Source::calibration_profile;
    for (auto t : all_techniques) m.scheduling_flop[index_of(t)] = scheduling_overhead[index_of(t)].flop;
    for (const auto& [p, c] : thread_creation) m.thread_creation_flop[p] = c.flop;
    return m;
  }

  bool operator==(const CalibrationProfile&) const = default;
};

// ---------------------------------------------------------------------------
// Profile file, schema v1
// ---------------------------------------------------------------------------

inline void write_profile(std::ostream& out, const CalibrationProfile& p) {
  out << "# loopsched calibration profile, schema v1\n"
         "# [meta] key = value; [thread_creation] threads,seconds,flop;\n"
         "# [overhead] technique,seconds,flop (one row per technique);\n"
         "# [tasks:<kernel>] matrix_order = n, then first,last,seconds,flop per bucket\n";
  out << "[meta]\n"
      << "schema = v1\n"
      << "nominal_core_speed = " << format_number(p.nominal_core_speed) << "\n"
      << "timer_overhead_s = " << format_number(p.timer_overhead_s) << "\n"
      << "partial = " << (p.partial ? "true" : "false") << "\n";
  out << "[thread_creation]\nthreads,seconds,flop\n";
  for (const auto& [threads, c] : p.thread_creation)
    out << threads << ',' << format_number(c.seconds) << ',' << format_number(c.flop) << '\n';
  out << "[overhead]\ntechnique,seconds,flop\n";
  for (auto t : all_techniques) {
    const auto& c = p.scheduling_overhead[index_of(t)];
    out << to_string(t) << ',' << format_number(c.seconds) << ',' << format_number(c.flop) << '\n';
  }
  for (const auto& table : p.tasks) {
    out << "[tasks:" << to_string(table.kernel) << "]\n"
        << "matrix_order = " << table.matrix_order << "\n"
        << "first,last,seconds,flop\n";
    for (const auto& b : table.buckets) {
      out << b.first << ',' << b.last << ',' << format_number(b.cost.seconds) << ','
          << format_number(b.cost.flop) << '\n';
    }
  }
}

inline void write_profile(const std::string& path, const CalibrationProfile& p) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write profile '" + path + "'");
  write_profile(out, p);
}

inline CalibrationProfile read_profile(std::istream& in) {
  CalibrationProfile p;
  std::string section;
  std::string raw;
  std::size_t line = 0;
  bool have_schema = false, have_speed = false, have_overhead_section = false;
  std::array<bool, 4> seen_technique{};
  TaskTable* table = nullptr;

  auto fields = [&](std::string_view body, std::size_t expected) {
    auto cols = split(body, ',');
    if (cols.size() != expected) {
      throw ParseError("expected " + std::to_string(expected) + " comma-separated fields in [" +
                           section + "]", line);
    }
    return cols;
  };

  while (std::getline(in, raw)) {
    ++line;
    const auto body = trim(strip_comment(raw));
    if (body.empty()) continue;

    if (body.front() == '[') {
      if (body.back() != ']') throw ParseError("unterminated section header", line);
      section = std::string(body.substr(1, body.size() - 2));
      table = nullptr;
      if (section.rfind("tasks:", 0) == 0) {
        KernelKind kind;
        try {
          kind = parse_kernel(section.substr(6));
        } catch (const std::invalid_argument& e) {
          throw ParseError(e.what(), line);
        }
        p.tasks.push_back({kind, 0, {}});
        table = &p.tasks.back();
      } else if (section == "overhead") {
        have_overhead_section = true;
      } else if (section != "meta" && section != "thread_creation") {
        throw ParseError("unknown section [" + section + "]", line);
      }
      continue;
    }

    if (section.empty()) throw ParseError("content before first section", line);

    if (section == "meta" || (table && body.find('=') != std::string_view::npos)) {
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line);
      const auto key = trim(body.substr(0, eq));
      const auto value = trim(body.substr(eq + 1));
      if (table) {
        if (key != "matrix_order") throw ParseError("unknown key '" + std::string(key) + "'", line);
        table->matrix_order = parse_count(value, key, line);
      } else if (key == "schema") {
        if (value != "v1") throw ParseError("unsupported schema '" + std::string(value) + "'", line);
        have_schema = true;
      } else if (key == "nominal_core_speed") {
        p.nominal_core_speed = parse_double(value, key, line);
        if (!(p.nominal_core_speed > 0.0)) throw ParseError("nominal_core_speed must be positive", line);
        have_speed = true;
      } else if (key == "timer_overhead_s") {
        p.timer_overhead_s = parse_double(value, key, line);
      } else if (key == "partial") {
        if (value != "true" && value != "false") throw ParseError("partial must be true or false", line);
        p.partial = value == "true";
      } else {
        throw ParseError("unknown key '" + std::string(key) + "'", line);
      }
      continue;
    }

    auto non_negative = [&](double v, const char* what) {
      if (!(v >= 0.0)) throw ParseError(std::string(what) + " must be non-negative", line);
      return v;
    };

    if (section == "thread_creation") {
      if (body == "threads,seconds,flop") continue;
      auto c = fields(body, 3);
      const auto threads = parse_count(c[0], "threads", line);
      if (p.thread_creation.count(threads)) throw ParseError("duplicate thread count", line);
      p.thread_creation[threads] = {non_negative(parse_double(c[1], "seconds", line), "seconds"),
                                    non_negative(parse_double(c[2], "flop", line), "flop")};
    } else if (section == "overhead") {
      if (body == "technique,seconds,flop") continue;
      auto c = fields(body, 3);
      Technique t;
      try {
        t = parse_technique(c[0]);
      } catch (const std::invalid_argument& e) {
        throw ParseError(e.what(), line);
      }
      if (seen_technique[index_of(t)]) throw ParseError("duplicate technique row", line);
      seen_technique[index_of(t)] = true;
      p.scheduling_overhead[index_of(t)] = {
          non_negative(parse_double(c[1], "seconds", line), "seconds"),
          non_negative(parse_double(c[2], "flop", line), "flop")};
    } else if (table) {
      if (body == "first,last,seconds,flop") continue;
      auto c = fields(body, 4);
      TaskBucket b{parse_count(c[0], "first", line), parse_count(c[1], "last", line),
                   {non_negative(parse_double(c[2], "seconds", line), "seconds"),
                    non_negative(parse_double(c[3], "flop", line), "flop")}};
      const count_t expected_first = table->buckets.empty() ? 0 : table->buckets.back().last;
      if (b.first != expected_first || b.last <= b.first) {
        throw ParseError("task buckets must be contiguous, non-empty and start at 0", line);
      }
      table->buckets.push_back(b);
    }
  }

  if (!have_schema) throw ParseError("missing schema = v1 in [meta]");
  if (!have_speed) throw ParseError("missing nominal_core_speed in [meta]");
  if (!have_overhead_section) throw ParseError("missing [overhead] section");
  for (auto t : all_techniques) {
    if (!seen_technique[index_of(t)]) {
      throw ParseError("missing [overhead] row for technique " + std::string(to_string(t)));
    }
  }
  for (const auto& t : p.tasks) {
    if (t.matrix_order == 0) throw ParseError("tasks section without matrix_order");
    if (t.buckets.empty() || t.buckets.back().last != t.iterations()) {
      throw ParseError("task buckets for " + std::string(to_string(t.kernel)) +
                       " do not cover the iteration space");
    }
  }
  return p;
}

inline CalibrationProfile read_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open profile '" + path + "'");
  return read_profile(in);
}

// ---------------------------------------------------------------------------
// Measurement
// ---------------------------------------------------------------------------

// Median cost of one steady_clock::now() call.
inline double measure_timer_overhead(std::size_t samples = 2001) {
  std::vector<double> d;
  d.reserve(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const auto a = steady_clock::now();
    const auto b = steady_clock::now();
    d.push_back(seconds_between(a, b));
  }
  return median(std::move(d));
}

// Removes the timer cost from sub-microsecond samples where it exceeds 5% of the sample.
inline double correct_for_timer(double sample, double timer_overhead) noexcept {
  if (sample < 1e-6 && timer_overhead > 0.05 * sample) return std::max(0.0, sample - timer_overhead);
  return sample;
}

// Spawn and join num_threads - 1 empty workers.
inline double measure_thread_creation(count_t num_threads) {
  const auto begin = steady_clock::now();
  {
    std::vector<std::jthread> workers;
    for (count_t t = 1; t < num_threads; ++t) workers.emplace_back([] {});
  }
  return seconds_between(begin, steady_clock::now());
}

struct CalibrationKernel {
  KernelKind kind{KernelKind::MM};
  count_t matrix_order{0};
};

struct CalibrationConfig {
  std::vector<CalibrationKernel> kernels;
  std::vector<count_t> thread_counts;
  std::size_t reps{1};
  double nominal_core_speed{41600e6};
  Pinning pinning{Pinning::none};
  std::uint64_t seed{42};
  std::size_t buckets{64};
  std::size_t min_samples_per_bucket{32};
  // MM tables whose bucket medians stay within this ratio collapse to one bucket.
  double homogeneous_ratio{2.0};
};

// Medians of per-iteration samples over equal-width index buckets.
inline TaskTable bucket_iteration_times(KernelKind kind, count_t matrix_order,
                                        std::span<const IterationSample> samples,
                                        std::size_t bucket_count, std::size_t min_per_bucket,
                                        double nominal_speed, bool& partial) {
  const count_t total = matrix_order * matrix_order;
  bucket_count = std::max<std::size_t>(1, std::min<std::size_t>(bucket_count, total));
  std::vector<std::vector<double>> per(bucket_count);
  auto bucket_of = [&](count_t i) {
    return static_cast<std::size_t>(i * bucket_count / total);
  };
  std::vector<double> all;
  all.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.iteration >= total) continue;
    per[bucket_of(s.iteration)].push_back(s.seconds);
    all.push_back(s.seconds);
  }
  TaskTable table{kind, matrix_order, {}};
  for (std::size_t b = 0; b < bucket_count; ++b) {
    const count_t first = (b * total + bucket_count - 1) / bucket_count;
    const count_t last = ((b + 1) * total + bucket_count - 1) / bucket_count;
    if (per[b].size() < min_per_bucket) partial = true;
    const double sec = per[b].empty() ? 0.0 : median(per[b]);
    table.buckets.push_back({first, last, {sec, seconds_to_flop(sec, nominal_speed)}});
  }
  return table;
}

inline CalibrationProfile calibrate(const CalibrationConfig& cfg) {
  if (cfg.thread_counts.empty()) throw std::invalid_argument("calibration needs thread counts");
  if (cfg.reps == 0) throw std::invalid_argument("calibration needs at least one repetition");

  CalibrationProfile profile;
  profile.nominal_core_speed = cfg.nominal_core_speed;
  profile.timer_overhead_s = measure_timer_overhead();
  const double timer = profile.timer_overhead_s;
  auto to_cost = [&](double sec) { return MeasuredCost{sec, seconds_to_flop(sec, cfg.nominal_core_speed)}; };

  for (count_t p : cfg.thread_counts) {
    std::vector<double> d;
    for (std::size_t r = 0; r < std::max<std::size_t>(cfg.reps, 5); ++r) d.push_back(measure_thread_creation(p));
    profile.thread_creation[p] = to_cost(median(std::move(d)));
  }

  std::array<std::vector<double>, 4> overheads;
  for (const auto& kernel : cfg.kernels) {
    auto problem = make_problem(kernel.kind, kernel.matrix_order, cfg.seed);
    std::vector<IterationSample> samples;
    for (auto t : all_techniques) {
      for (count_t p : cfg.thread_counts) {
        for (std::size_t r = 0; r < cfg.reps; ++r) {
          NativeRunConfig run{t, p, cfg.pinning, TimingCapture::calibration, false};
          auto res = run_parallel(problem, run);
          for (double o : res.overhead_samples) overheads[index_of(t)].push_back(correct_for_timer(o, timer));
          for (auto s : res.iteration_samples) {
            s.seconds = correct_for_timer(s.seconds, timer);
            samples.push_back(s);
          }
        }
      }
    }
    auto table = bucket_iteration_times(kernel.kind, kernel.matrix_order, samples, cfg.buckets,
                                        cfg.min_samples_per_bucket, cfg.nominal_core_speed,
                                        profile.partial);
    if (kernel.kind == KernelKind::MM && !table.buckets.empty()) {
      const auto [lo, hi] = std::minmax_element(
          table.buckets.begin(), table.buckets.end(),
          [](const auto& a, const auto& b) { return a.cost.seconds < b.cost.seconds; });
      if (lo->cost.seconds > 0.0 && hi->cost.seconds / lo->cost.seconds <= cfg.homogeneous_ratio) {
        std::vector<double> all;
        for (const auto& s : samples) all.push_back(s.seconds);
        table.buckets = {{0, table.iterations(), to_cost(median(std::move(all)))}};
      }
    }
    profile.tasks.push_back(std::move(table));
  }

  for (auto t : all_techniques) {
    auto& o = overheads[index_of(t)];
    if (o.empty()) {
      profile.partial = true;
      continue;
    }
    profile.scheduling_overhead[index_of(t)] = to_cost(median(std::move(o)));
  }
  return profile;
}

}  // namespace loopsched
