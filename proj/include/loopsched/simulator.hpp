#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "chunk_plan.hpp"
#include "kernels.hpp"
#include "platform.hpp"
#include "technique.hpp"

namespace loopsched {

// Simulated time in integer picoseconds.
using picoseconds = std::int64_t;

inline picoseconds to_picoseconds(double seconds) {
  return static_cast<picoseconds>(std::llround(seconds * 1e12));
}

constexpr double to_seconds(picoseconds ps) noexcept { return static_cast<double>(ps) * 1e-12; }

struct OverheadModel {
  enum class Source { constants, calibration_profile };

  std::array<double, 4> scheduling_flop{};           // per claim, indexed by Technique
  std::map<count_t, double> thread_creation_flop;    // keyed by thread count
  Source source{Source::constants};

  double scheduling(Technique t) const noexcept { return scheduling_flop[index_of(t)]; }

  // Exact entry when present, otherwise linear interpolation between the
  // neighbouring thread counts, clamped at the ends. Empty table means 0.
  double thread_creation(count_t threads) const {
    if (thread_creation_flop.empty()) return 0.0;
    auto hi = thread_creation_flop.lower_bound(threads);
    if (hi != thread_creation_flop.end() && hi->first == threads) return hi->second;
    if (hi == thread_creation_flop.begin()) return hi->second;
    if (hi == thread_creation_flop.end()) return std::prev(hi)->second;
    auto lo = std::prev(hi);
    const double w = static_cast<double>(threads - lo->first) /
                     static_cast<double>(hi->first - lo->first);
    return lo->second + w * (hi->second - lo->second);
  }

  void validate() const {
    for (double v : scheduling_flop)
      if (!(v >= 0.0)) throw std::invalid_argument("scheduling overhead must be non-negative");
    for (const auto& [p, v] : thread_creation_flop)
      if (!(v >= 0.0)) throw std::invalid_argument("thread creation overhead must be non-negative");
  }

  static OverheadModel zero() { return {}; }

  // Empirical RP3 values: 75, 400, 750 and 750 FLOP for STATIC, SS, GSS and FAC.
  // Thread creation is not quantified for RP3 and stays 0.
  static OverheadModel rp3() { return {{75.0, 400.0, 750.0, 750.0}, {}, Source::constants}; }
};

enum class CommMode { networked, shared_memory };

struct SimConfig {
  Technique technique{Technique::STATIC};
  count_t threads{1};
  count_t iterations{0};
  std::vector<double> iteration_flop;  // at least `iterations` entries
  count_t row_length{0};               // elements per transferred column
  CommMode comm_mode{CommMode::networked};
  bool per_iteration_events{false};
  bool record_trace{false};
};

inline SimConfig make_sim_config(const KernelCostModel& model, Technique technique,
                                 count_t threads, CommMode mode = CommMode::networked) {
  SimConfig cfg;
  cfg.technique = technique;
  cfg.threads = threads;
  cfg.iterations = model.iterations();
  cfg.iteration_flop = iteration_flop_table(model);
  cfg.row_length = model.row_length();
  cfg.comm_mode = mode;
  return cfg;
}

struct SimChunkRecord {
  count_t step{0};
  count_t host{0};
  count_t start_iteration{0};
  count_t chunk_size{0};
  picoseconds start_time{0};  // claim instant
  picoseconds end_time{0};    // completion of the chunk's last iteration

  bool operator==(const SimChunkRecord&) const = default;
};

// One simulated task, in the order tasks were created. Each task depends on
// the previous task on the same claim chain (thread creation precedes all claims).
struct SimTask {
  enum class Kind { compute, communication };
  Kind kind{Kind::compute};
  double cost{0.0};  // FLOP or bytes
  count_t host{0};   // compute host, or destination of a transfer
  count_t source{0}; // transfer source host
  picoseconds start{0};
  picoseconds end{0};

  bool operator==(const SimTask&) const = default;
};

struct SimResult {
  count_t threads{0};
  picoseconds makespan_ps{0};
  std::vector<picoseconds> busy_ps;  // compute occupancy per host
  std::vector<picoseconds> comm_ps;  // inbound transfer time per host
  std::vector<SimChunkRecord> chunk_log;
  std::vector<SimTask> trace;

  double makespan() const noexcept { return to_seconds(makespan_ps); }
  double parallel_cost() const noexcept { return makespan() * static_cast<double>(threads); }
  std::vector<double> per_host_busy_time() const {
    std::vector<double> out;
    for (auto b : busy_ps) out.push_back(to_seconds(b));
    return out;
  }
};

namespace detail {

inline picoseconds compute_ps(double flop, double speed) { return to_picoseconds(flop / speed); }

inline picoseconds comm_ps(double bytes, const PlatformSpec& platform, CommMode mode,
                           count_t src, count_t dst) {
  if (mode == CommMode::shared_memory || src == dst) return 0;
  return to_picoseconds(platform.link_latency + bytes * 8.0 / platform.link_bandwidth);
}

}  // namespace detail

// Event-driven execution of the decentralized self-scheduling loop:
// host 0 first pays thread creation; afterwards every idle host claims the
// next scheduling step and runs overhead -> transfer from host 0 -> chunk.
// Hosts idle at the same instant claim in ascending index order.
inline SimResult simulate(const SimConfig& cfg, const PlatformSpec& platform,
                          const OverheadModel& overheads) {
  platform.validate();
  overheads.validate();
  if (cfg.threads == 0) throw std::invalid_argument("thread count must be at least 1");
  if (cfg.threads > platform.host_count) {
    throw std::invalid_argument("requested " + std::to_string(cfg.threads) +
                                " threads but platform has only " +
                                std::to_string(platform.host_count) + " hosts");
  }
  if (cfg.iteration_flop.size() < cfg.iterations) {
    throw std::invalid_argument("cost table has " + std::to_string(cfg.iteration_flop.size()) +
                                " entries for " + std::to_string(cfg.iterations) + " iterations");
  }

  const count_t hosts = cfg.threads;
  const auto plan = build_chunk_plan(cfg.technique, cfg.iterations, hosts);

  std::vector<picoseconds> iter_ps(cfg.iterations);
  std::vector<picoseconds> prefix(cfg.iterations + 1, 0);
  for (count_t i = 0; i < cfg.iterations; ++i) {
    if (!(cfg.iteration_flop[i] >= 0.0)) throw std::invalid_argument("negative iteration cost");
    iter_ps[i] = detail::compute_ps(cfg.iteration_flop[i], platform.host_speed);
    prefix[i + 1] = prefix[i] + iter_ps[i];
  }

  SimResult res;
  res.threads = hosts;
  res.busy_ps.assign(hosts, 0);
  res.comm_ps.assign(hosts, 0);
  res.chunk_log.reserve(plan.steps());

  const double creation_flop = overheads.thread_creation(hosts);
  const picoseconds creation = detail::compute_ps(creation_flop, platform.host_speed);
  res.busy_ps[0] += creation;
  if (cfg.record_trace) res.trace.push_back({SimTask::Kind::compute, creation_flop, 0, 0, 0, creation});

  const double overhead_flop = overheads.scheduling(cfg.technique);
  const picoseconds overhead = detail::compute_ps(overhead_flop, platform.host_speed);

  // (time, host, last-task-of-claim). Non-final events only exist in
  // per-iteration mode and advance the clock without freeing the host.
  using Event = std::tuple<picoseconds, count_t, bool>;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events;
  for (count_t h = 0; h < hosts; ++h) events.emplace(creation, h, true);

  std::size_t step = 0;
  count_t scheduled = 0;
  picoseconds makespan = creation;
  std::vector<count_t> idle;

  while (!events.empty()) {
    const picoseconds now = std::get<0>(events.top());
    idle.clear();
    while (!events.empty() && std::get<0>(events.top()) == now) {
      auto [t, h, final_task] = events.top();
      events.pop();
      if (final_task) idle.push_back(h);
    }
    makespan = std::max(makespan, now);
    std::sort(idle.begin(), idle.end());

    for (count_t h : idle) {
      if (scheduled >= cfg.iterations) break;
      const count_t size = plan.at(step);
      const count_t first = scheduled;

      const picoseconds overhead_end = now + overhead;
      const double bytes = cfg.comm_mode == CommMode::shared_memory
                               ? 0.0
                               : chunk_comm_bytes(cfg.row_length, size);
      const picoseconds transfer = detail::comm_ps(bytes, platform, cfg.comm_mode, 0, h);
      const picoseconds transfer_end = overhead_end + transfer;
      const picoseconds work = prefix[first + size] - prefix[first];
      const picoseconds done = transfer_end + work;

      res.busy_ps[h] += overhead + work;
      res.comm_ps[h] += transfer;
      res.chunk_log.push_back({static_cast<count_t>(step), h, first, size, now, done});

      if (cfg.record_trace) {
        res.trace.push_back({SimTask::Kind::compute, overhead_flop, h, h, now, overhead_end});
        res.trace.push_back({SimTask::Kind::communication, bytes, h, 0, overhead_end, transfer_end});
      }
      if (cfg.per_iteration_events || cfg.record_trace) {
        picoseconds t = transfer_end;
        for (count_t i = first; i < first + size; ++i) {
          const picoseconds end = t + iter_ps[i];
          if (cfg.record_trace) {
            res.trace.push_back({SimTask::Kind::compute, cfg.iteration_flop[i], h, h, t, end});
          }
          if (cfg.per_iteration_events) events.emplace(end, h, i + 1 == first + size);
          t = end;
        }
        if (size == 0 && cfg.per_iteration_events) events.emplace(done, h, true);
      }
      if (!cfg.per_iteration_events) events.emplace(done, h, true);

      scheduled += size;
      ++step;
    }
  }

  res.makespan_ps = makespan;
  return res;
}

}  // namespace loopsched
