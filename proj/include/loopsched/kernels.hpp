#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "chunk_plan.hpp"

namespace loopsched {

// MM: C = A x B, one iteration per output element.
// ACD: adjoint convolution with decreasing task sizes over the flattened n*n space.
enum class KernelKind { MM, ACD };

constexpr std::string_view to_string(KernelKind k) noexcept {
  return k == KernelKind::MM ? "MM" : "ACD";
}

// Accepts "MM", "ACD" and "AC-d" in any case.
inline KernelKind parse_kernel(std::string_view text) {
  std::string up;
  for (char c : text) {
    if (c != '-') up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  if (up == "MM") return KernelKind::MM;
  if (up == "ACD") return KernelKind::ACD;
  throw std::invalid_argument("unknown kernel '" + std::string(text) + "'");
}

inline constexpr double element_bytes = 8.0;

// Analytic per-iteration work used by the simulator. g1 and g2 absorb the
// unknown machine effects of the modeled platform; 35 and 60 reproduce RP3.
struct KernelCostModel {
  KernelKind kind{KernelKind::MM};
  count_t matrix_order{1};
  double g1{35.0};
  double g2{60.0};

  KernelCostModel() = default;
  KernelCostModel(KernelKind k, count_t n, double g1_ = 35.0, double g2_ = 60.0)
      : kind{k}, matrix_order{n}, g1{g1_}, g2{g2_} {
    if (n == 0) throw std::invalid_argument("matrix order must be at least 1");
    if (!(g1 > 0.0) || !(g2 > 0.0)) throw std::invalid_argument("g1 and g2 must be positive");
  }

  count_t row_length() const noexcept { return matrix_order; }
  count_t iterations() const noexcept { return matrix_order * matrix_order; }
};

// FLOP of 0-based iteration `id`. MM is g1*(5 + 2*rowLength) for every id;
// ACD is g2*3*(n*n - id), so the last iteration costs g2*3.
inline double iteration_flop(const KernelCostModel& model, count_t id) {
  if (id >= model.iterations()) {
    throw std::invalid_argument("iteration id " + std::to_string(id) + " out of range [0, " +
                                std::to_string(model.iterations()) + ")");
  }
  if (model.kind == KernelKind::MM) {
    return model.g1 * (5.0 + 2.0 * static_cast<double>(model.row_length()));
  }
  return model.g2 * 3.0 * static_cast<double>(model.iterations() - id);
}

inline std::vector<double> iteration_flop_table(const KernelCostModel& model) {
  std::vector<double> out(model.iterations());
  for (count_t i = 0; i < out.size(); ++i) out[i] = iteration_flop(model, i);
  return out;
}

// One matrix column of 8-byte elements per assigned iteration.
inline double chunk_comm_bytes(count_t row_length, count_t chunk_size) noexcept {
  return static_cast<double>(chunk_size) * static_cast<double>(row_length) * element_bytes;
}

inline double chunk_comm_bytes(const KernelCostModel& model, count_t chunk_size) noexcept {
  return chunk_comm_bytes(model.row_length(), chunk_size);
}

// Row-major n x n inputs. For ACD the matrices are used as flat vectors of length n*n.
struct KernelProblem {
  KernelKind kind{KernelKind::MM};
  count_t n{0};
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> c;
  double constant{1.0};

  count_t iterations() const noexcept { return n * n; }
};

inline KernelProblem make_problem(KernelKind kind, count_t n, std::uint64_t seed,
                                  double constant = 1.0) {
  if (n == 0) throw std::invalid_argument("matrix order must be at least 1");
  KernelProblem p{kind, n, {}, {}, {}, constant};
  const auto size = n * n;
  p.a.resize(size);
  p.b.resize(size);
  p.c.assign(size, 0.0);
  std::mt19937_64 rng{seed};
  std::uniform_real_distribution<double> dist{-1.0, 1.0};
  for (auto& v : p.a) v = dist(rng);
  for (auto& v : p.b) v = dist(rng);
  return p;
}

namespace detail {

inline void check_problem(const KernelProblem& p) {
  const auto size = p.iterations();
  if (p.a.size() != size || p.b.size() != size || p.c.size() != size) {
    throw std::invalid_argument("kernel problem buffers do not match matrix order");
  }
}

inline void mm_iteration(const KernelProblem& p, std::span<double> out, count_t k) noexcept {
  const count_t n = p.n;
  const count_t i = k / n;
  const count_t j = k % n;
  const double* row = p.a.data() + i * n;
  double acc = 0.0;
  for (count_t l = 0; l < n; ++l) acc += row[l] * p.b[l * n + j];
  out[k] = acc;
}

inline void acd_iteration(const KernelProblem& p, std::span<double> out, count_t k) noexcept {
  const count_t m = p.iterations();
  double acc = 0.0;
  for (count_t l = k; l < m; ++l) acc += p.constant * p.a[l] * p.b[l - k];
  out[k] = acc;
}

}  // namespace detail

// Computes iterations [start, start + size) into `out`. Workers may call this
// concurrently on disjoint ranges of the same output buffer.
inline void execute_chunk(const KernelProblem& problem, std::span<double> out, count_t start,
                          count_t size) {
  const auto total = problem.iterations();
  if (start > total || size > total - start || out.size() != total) {
    throw std::invalid_argument("chunk [" + std::to_string(start) + ", +" + std::to_string(size) +
                                ") outside iteration space of " + std::to_string(total));
  }
  if (problem.kind == KernelKind::MM) {
    for (count_t k = start; k < start + size; ++k) detail::mm_iteration(problem, out, k);
  } else {
    for (count_t k = start; k < start + size; ++k) detail::acd_iteration(problem, out, k);
  }
}

inline void execute_chunk(KernelProblem& problem, count_t start, count_t size) {
  execute_chunk(problem, std::span<double>{problem.c}, start, size);
}

inline std::vector<double> serial_reference(const KernelProblem& problem) {
  detail::check_problem(problem);
  std::vector<double> out(problem.iterations(), 0.0);
  execute_chunk(problem, std::span<double>{out}, 0, problem.iterations());
  return out;
}

// Largest per-element relative error |x - y| / max(|y|, 1e-300) between two outputs;
// returns +inf on size mismatch.
inline double max_relative_error(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = std::abs(x[i] - y[i]);
    if (diff == 0.0) continue;
    worst = std::max(worst, diff / std::max(std::abs(y[i]), 1e-300));
  }
  return worst;
}

}  // namespace loopsched
