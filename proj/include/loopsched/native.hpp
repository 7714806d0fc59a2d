#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#if defined(__linux__)
#include <pthread.h>
#include <sched.h>
#endif

#include "chunk_plan.hpp"
#include "kernels.hpp"
#include "technique.hpp"

namespace loopsched {

using steady_clock = std::chrono::steady_clock;

inline double seconds_between(steady_clock::time_point a, steady_clock::time_point b) noexcept {
  return std::chrono::duration<double>(b - a).count();
}

// Shared scheduling state. Both counters are only ever touched through a
// single atomic read-modify-write each; nothing here takes a lock.
struct WorkState {
  std::atomic<count_t> scheduling_step{0};
  std::atomic<count_t> current_index{0};
  count_t num_tasks{0};
  ChunkPlan plan;

  explicit WorkState(ChunkPlan p) : num_tasks{p.total_iterations}, plan{std::move(p)} {}
};

struct ClaimedChunk {
  count_t step{0};
  count_t start{0};
  count_t size{0};

  bool operator==(const ClaimedChunk&) const = default;
};

// Claims step s, then the next `plan[s]` indices. Returns nothing once the
// iteration space is exhausted or the plan has no chunk for s (all remaining
// indices are then already owned by workers that claimed earlier steps).
// Counters are never rolled back.
inline std::optional<ClaimedChunk> obtain_work(WorkState& state) noexcept {
  const count_t step = state.scheduling_step.fetch_add(1, std::memory_order_seq_cst);
  count_t size = state.plan.at(step);
  const count_t start = state.current_index.fetch_add(size, std::memory_order_seq_cst);
  if (start >= state.num_tasks || size == 0) return std::nullopt;
  if (start + size >= state.num_tasks) size = state.num_tasks - start;
  return ClaimedChunk{step, start, size};
}

enum class Pinning { none, scatter };
enum class TimingCapture { off, per_chunk, calibration };

struct NativeRunConfig {
  Technique technique{Technique::STATIC};
  count_t num_threads{1};
  Pinning pinning{Pinning::none};
  TimingCapture timing{TimingCapture::off};
  bool validate{false};
};

struct NativeChunkRecord {
  count_t step{0};
  count_t thread{0};
  count_t start{0};
  count_t size{0};
};

struct IterationSample {
  count_t iteration{0};
  double seconds{0.0};
};

struct ChunkSample {
  count_t start{0};
  count_t size{0};
  double seconds{0.0};
};

struct NativeRunResult {
  count_t num_threads{0};
  double wall_time{0.0};  // thread creation to join
  std::vector<NativeChunkRecord> chunk_log;  // sorted by step
  std::vector<double> overhead_samples;      // seconds per successful obtain_work
  std::vector<ChunkSample> chunk_samples;    // per-chunk mode
  std::vector<IterationSample> iteration_samples;  // calibration mode
  std::optional<bool> validated;
  double max_relative_error{0.0};
  std::vector<std::string> warnings;

  double parallel_cost() const noexcept { return wall_time * static_cast<double>(num_threads); }
};

// Logical CPUs ordered so that consecutive threads land on different physical
// cores, alternating sockets, before any hyperthread sibling is reused.
inline std::vector<int> scatter_cpu_order() {
  std::vector<int> cpus;
#if defined(__linux__)
  cpu_set_t set;
  CPU_ZERO(&set);
  if (sched_getaffinity(0, sizeof set, &set) == 0) {
    for (int c = 0; c < CPU_SETSIZE; ++c)
      if (CPU_ISSET(c, &set)) cpus.push_back(c);
  }
  auto read_id = [](int cpu, const char* field) {
    std::ifstream in("/sys/devices/system/cpu/cpu" + std::to_string(cpu) + "/topology/" + field);
    int v = 0;
    return (in >> v) ? v : 0;
  };
  // rank within its physical core, socket, core id
  std::map<std::pair<int, int>, int> seen;
  std::vector<std::tuple<int, int, int, int>> keyed;
  for (int c : cpus) {
    const int pkg = read_id(c, "physical_package_id");
    const int core = read_id(c, "core_id");
    const int sibling = seen[{pkg, core}]++;
    keyed.emplace_back(sibling, core, pkg, c);
  }
  std::sort(keyed.begin(), keyed.end());
  cpus.clear();
  for (auto& k : keyed) cpus.push_back(std::get<3>(k));
#endif
  if (cpus.empty()) {
    for (unsigned c = 0; c < std::max(1u, std::thread::hardware_concurrency()); ++c)
      cpus.push_back(static_cast<int>(c));
  }
  return cpus;
}

namespace detail {

inline bool pin_current_thread(int cpu) noexcept {
#if defined(__linux__)
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(cpu, &set);
  return pthread_setaffinity_np(pthread_self(), sizeof set, &set) == 0;
#else
  (void)cpu;
  return false;
#endif
}

struct WorkerLog {
  std::vector<NativeChunkRecord> chunks;
  std::vector<double> overheads;
  std::vector<ChunkSample> chunk_samples;
  std::vector<IterationSample> iterations;
  bool pin_failed{false};
};

inline void worker_loop(WorkState& state, const KernelProblem& problem, std::span<double> out,
                        count_t thread, TimingCapture timing, WorkerLog& log) {
  while (true) {
    if (timing == TimingCapture::off) {
      auto claim = obtain_work(state);
      if (!claim) break;
      execute_chunk(problem, out, claim->start, claim->size);
      log.chunks.push_back({claim->step, thread, claim->start, claim->size});
      continue;
    }
    const auto t0 = steady_clock::now();
    auto claim = obtain_work(state);
    const auto t1 = steady_clock::now();
    if (!claim) break;
    log.overheads.push_back(seconds_between(t0, t1));
    if (timing == TimingCapture::per_chunk) {
      execute_chunk(problem, out, claim->start, claim->size);
      log.chunk_samples.push_back({claim->start, claim->size, seconds_between(t1, steady_clock::now())});
    } else {
      auto prev = t1;
      for (count_t k = claim->start; k < claim->start + claim->size; ++k) {
        execute_chunk(problem, out, k, 1);
        const auto now = steady_clock::now();
        log.iterations.push_back({k, seconds_between(prev, now)});
        prev = now;
      }
    }
    log.chunks.push_back({claim->step, thread, claim->start, claim->size});
  }
}

}  // namespace detail

// Thread 0 is the calling thread; it spawns num_threads - 1 workers and all
// of them claim and execute chunks until the iteration space is exhausted.
// Kernel output lands in problem.c.
inline NativeRunResult run_parallel(KernelProblem& problem, const NativeRunConfig& config) {
  if (config.num_threads == 0) throw std::invalid_argument("thread count must be at least 1");
  detail::check_problem(problem);

  NativeRunResult res;
  res.num_threads = config.num_threads;
  const auto cores = std::thread::hardware_concurrency();
  if (cores != 0 && config.num_threads > cores) {
    res.warnings.push_back(std::to_string(config.num_threads) + " threads exceed " +
                           std::to_string(cores) + " available cores");
  }

  WorkState state{build_chunk_plan(config.technique, problem.iterations(), config.num_threads)};
  std::fill(problem.c.begin(), problem.c.end(), 0.0);
  const std::span<double> out{problem.c};
  std::vector<detail::WorkerLog> logs(config.num_threads);

  std::vector<int> cpus;
  if (config.pinning == Pinning::scatter) cpus = scatter_cpu_order();
  auto cpu_for = [&](count_t t) { return cpus[t % cpus.size()]; };

#if defined(__linux__)
  cpu_set_t saved;
  const bool have_saved = config.pinning == Pinning::scatter &&
                          pthread_getaffinity_np(pthread_self(), sizeof saved, &saved) == 0;
#endif

  const auto begin = steady_clock::now();
  {
    std::vector<std::jthread> workers;
    workers.reserve(config.num_threads - 1);
    for (count_t t = 1; t < config.num_threads; ++t) {
      workers.emplace_back([&, t] {
        if (config.pinning == Pinning::scatter && !detail::pin_current_thread(cpu_for(t)))
          logs[t].pin_failed = true;
        detail::worker_loop(state, problem, out, t, config.timing, logs[t]);
      });
    }
    if (config.pinning == Pinning::scatter && !detail::pin_current_thread(cpu_for(0)))
      logs[0].pin_failed = true;
    detail::worker_loop(state, problem, out, 0, config.timing, logs[0]);
  }
  res.wall_time = seconds_between(begin, steady_clock::now());

#if defined(__linux__)
  if (have_saved) pthread_setaffinity_np(pthread_self(), sizeof saved, &saved);
#endif

  bool pin_failed = false;
  for (auto& log : logs) {
    pin_failed |= log.pin_failed;
    res.chunk_log.insert(res.chunk_log.end(), log.chunks.begin(), log.chunks.end());
    res.overhead_samples.insert(res.overhead_samples.end(), log.overheads.begin(), log.overheads.end());
    res.chunk_samples.insert(res.chunk_samples.end(), log.chunk_samples.begin(), log.chunk_samples.end());
    res.iteration_samples.insert(res.iteration_samples.end(), log.iterations.begin(), log.iterations.end());
  }
  if (pin_failed) res.warnings.push_back("thread pinning failed; continued unpinned");
  std::sort(res.chunk_log.begin(), res.chunk_log.end(),
            [](const auto& a, const auto& b) { return a.step < b.step; });

  if (config.validate) {
    const auto reference = serial_reference(problem);
    res.max_relative_error = max_relative_error(problem.c, reference);
    res.validated = res.max_relative_error <= 1e-9;
  }
  return res;
}

// True when the logged ranges cover [0, total) exactly once.
inline bool partitions_exactly(std::span<const NativeChunkRecord> log, count_t total) {
  std::vector<std::pair<count_t, count_t>> ranges;
  for (const auto& r : log) ranges.emplace_back(r.start, r.size);
  std::sort(ranges.begin(), ranges.end());
  count_t next = 0;
  for (auto [start, size] : ranges) {
    if (start != next || size == 0) return false;
    next += size;
  }
  return next == total;
}

}  // namespace loopsched
