#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "technique.hpp"

namespace loopsched {

using count_t = std::uint64_t;

constexpr count_t ceil_div(count_t a, count_t b) noexcept { return a / b + (a % b != 0); }

// Step-by-step chunk producer for one technique over N iterations and P workers.
// Both build_chunk_plan and chunk_at_step are driven by this so the two
// cannot disagree.
class ChunkSequence {
 public:
  ChunkSequence(Technique technique, count_t total, count_t workers)
      : _technique{technique}, _workers{workers}, _remaining{total} {
    if (workers == 0) throw std::invalid_argument("worker count must be at least 1");
    if (technique == Technique::STATIC) _batch_chunk = ceil_div(total, workers);
  }

  bool done() const noexcept { return _remaining == 0; }
  count_t remaining() const noexcept { return _remaining; }

  // Size of the next chunk, 0 once the iteration space is exhausted.
  count_t next() noexcept {
    if (_remaining == 0) return 0;
    count_t size = 1;
    switch (_technique) {
      case Technique::STATIC:
        size = _batch_chunk;
        break;
      case Technique::SS:
        size = 1;
        break;
      case Technique::GSS:
        size = ceil_div(_remaining, _workers);
        break;
      case Technique::FAC:
        // A new batch of P equal chunks starts every P steps and covers half
        // of what remained when the batch opened.
        if (_in_batch == 0) _batch_chunk = ceil_div(_remaining, 2 * _workers);
        size = _batch_chunk;
        _in_batch = (_in_batch + 1) % _workers;
        break;
    }
    size = std::min(size, _remaining);
    _remaining -= size;
    return size;
  }

 private:
  Technique _technique;
  count_t _workers;
  count_t _remaining;
  count_t _batch_chunk{0};
  count_t _in_batch{0};
};

struct ChunkPlan {
  Technique technique{Technique::STATIC};
  count_t total_iterations{0};
  count_t workers{1};
  std::vector<count_t> chunk_sizes;

  std::size_t steps() const noexcept { return chunk_sizes.size(); }

  count_t at(std::size_t step) const noexcept {
    return step < chunk_sizes.size() ? chunk_sizes[step] : 0;
  }

  // Iteration index at which chunk `step` begins when chunks are taken in step order.
  std::vector<count_t> offsets() const {
    std::vector<count_t> out(chunk_sizes.size());
    std::exclusive_scan(chunk_sizes.begin(), chunk_sizes.end(), out.begin(), count_t{0});
    return out;
  }

  bool operator==(const ChunkPlan&) const = default;
};

inline ChunkPlan build_chunk_plan(Technique technique, count_t total, count_t workers) {
  ChunkSequence seq{technique, total, workers};
  ChunkPlan plan{technique, total, workers, {}};
  while (!seq.done()) plan.chunk_sizes.push_back(seq.next());
  return plan;
}

// O(step). Hot paths should index a prebuilt ChunkPlan instead.
inline count_t chunk_at_step(Technique technique, count_t total, count_t workers, count_t step) {
  ChunkSequence seq{technique, total, workers};
  for (count_t s = 0; s < step && !seq.done(); ++s) seq.next();
  return seq.next();
}

}  // namespace loopsched
