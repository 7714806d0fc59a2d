#pragma once

// Reference implementations used only by the tests. They are written
// directly from the textbook definitions and share no code with the library.

#include <algorithm>
#include <cstdint>
#include <vector>

namespace oracle {

using u64 = std::uint64_t;

inline u64 ceil_div(u64 a, u64 b) { return (a + b - 1) / b; }

// "static": P chunks of ceil(N/P), last one cut to fit.
inline std::vector<u64> static_chunks(u64 n, u64 p) {
  std::vector<u64> out;
  if (n == 0) return out;
  const u64 c = ceil_div(n, p);
  for (u64 done = 0; done < n; done += c) out.push_back(std::min(c, n - done));
  return out;
}

inline std::vector<u64> ss_chunks(u64 n) { return std::vector<u64>(n, 1); }

// chunk = ceil(R / P), R -= chunk.
inline std::vector<u64> gss_chunks(u64 n, u64 p) {
  std::vector<u64> out;
  for (u64 r = n; r > 0;) {
    const u64 c = ceil_div(r, p);
    out.push_back(c);
    r -= c;
  }
  return out;
}

// Batches of P chunks, each ceil(R_batch / 2P), the final batch cut to fit.
inline std::vector<u64> fac_chunks(u64 n, u64 p) {
  std::vector<u64> out;
  u64 r = n;
  while (r > 0) {
    const u64 c = ceil_div(r, 2 * p);
    for (u64 k = 0; k < p && r > 0; ++k) {
      const u64 take = std::min(c, r);
      out.push_back(take);
      r -= take;
    }
  }
  return out;
}

// Greedy list scheduling of a fixed chunk sequence: each chunk goes to the
// host that becomes free first (lowest index on ties). `chunk_cost[s]` is
// the full occupancy of step s (overhead + transfer + work) in integer units.
// `start` is when every host becomes available.
inline std::int64_t list_schedule_makespan(const std::vector<std::int64_t>& chunk_cost, u64 hosts,
                                           std::int64_t start = 0) {
  std::vector<std::int64_t> free_at(hosts, start);
  for (auto cost : chunk_cost) {
    u64 best = 0;
    for (u64 h = 1; h < hosts; ++h)
      if (free_at[h] < free_at[best]) best = h;
    free_at[best] += cost;
  }
  return *std::max_element(free_at.begin(), free_at.end());
}

// Same, returning the host chosen for each step.
inline std::vector<u64> list_schedule_hosts(const std::vector<std::int64_t>& chunk_cost, u64 hosts) {
  std::vector<std::int64_t> free_at(hosts, 0);
  std::vector<u64> picks;
  for (auto cost : chunk_cost) {
    u64 best = 0;
    for (u64 h = 1; h < hosts; ++h)
      if (free_at[h] < free_at[best]) best = h;
    free_at[best] += cost;
    picks.push_back(best);
  }
  return picks;
}

// Serial triple loop, row-major n x n.
inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, u64 n) {
  std::vector<double> c(n * n, 0.0);
  for (u64 i = 0; i < n; ++i)
    for (u64 j = 0; j < n; ++j) {
      double s = 0.0;
      for (u64 l = 0; l < n; ++l) s += a[i * n + l] * b[l * n + j];
      c[i * n + j] = s;
    }
  return c;
}

// C[k] = sum_{l=k}^{M-1} const * A[l] * B[l-k].
inline std::vector<double> adjoint_convolution(const std::vector<double>& a, const std::vector<double>& b,
                                               double constant) {
  const u64 m = a.size();
  std::vector<double> c(m, 0.0);
  for (u64 k = 0; k < m; ++k) {
    double s = 0.0;
    for (u64 l = k; l < m; ++l) s += constant * a[l] * b[l - k];
    c[k] = s;
  }
  return c;
}

}  // namespace oracle
