#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>
#include <random>

#include "loopsched/chunk_plan.hpp"
#include "loopsched/kernels.hpp"
#include "oracles.hpp"

using namespace loopsched;
using Catch::Matchers::WithinRel;

TEST_CASE("iteration_flop follows the cost table", "[kernels]") {
  const KernelCostModel mm{KernelKind::MM, 300, 35.0, 60.0};
  CHECK(iteration_flop(mm, 0) == 21175.0);
  CHECK(iteration_flop(mm, 89999) == 21175.0);

  const KernelCostModel acd{KernelKind::ACD, 75, 35.0, 60.0};
  CHECK(iteration_flop(acd, 0) == 1012500.0);
  CHECK(iteration_flop(acd, 5624) == 180.0);
  for (count_t i = 1; i < acd.iterations(); ++i) REQUIRE(iteration_flop(acd, i) < iteration_flop(acd, i - 1));

  CHECK_THROWS_AS(iteration_flop(acd, 5625), std::invalid_argument);
  CHECK_THROWS_AS(iteration_flop(mm, 90000), std::invalid_argument);
}

TEST_CASE("AC-d total work matches the closed form", "[kernels]") {
  for (count_t n : {1, 2, 5, 75}) {
    const KernelCostModel acd{KernelKind::ACD, n, 35.0, 60.0};
    const auto table = iteration_flop_table(acd);
    const double sum = std::accumulate(table.begin(), table.end(), 0.0);
    const double m = static_cast<double>(n * n);
    CHECK(sum == 60.0 * 3.0 * (m * (m + 1.0) / 2.0));
  }
}

TEST_CASE("cost model rejects invalid parameters", "[kernels]") {
  CHECK_THROWS_AS(KernelCostModel(KernelKind::MM, 0), std::invalid_argument);
  CHECK_THROWS_AS(KernelCostModel(KernelKind::MM, 4, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(KernelCostModel(KernelKind::ACD, 4, 1.0, -2.0), std::invalid_argument);
}

TEST_CASE("chunk_comm_bytes is one 8-byte column per iteration", "[kernels]") {
  CHECK(chunk_comm_bytes(KernelCostModel{KernelKind::MM, 300}, 25) == 60000.0);
  CHECK(chunk_comm_bytes(KernelCostModel{KernelKind::MM, 300}, 0) == 0.0);
  CHECK(chunk_comm_bytes(KernelCostModel{KernelKind::ACD, 75}, 1) == 600.0);
}

TEST_CASE("MM of identities is the identity", "[kernels]") {
  KernelProblem p{KernelKind::MM, 4, std::vector<double>(16, 0.0), std::vector<double>(16, 0.0),
                  std::vector<double>(16, -1.0), 1.0};
  for (int i = 0; i < 4; ++i) p.a[i * 5] = p.b[i * 5] = 1.0;
  execute_chunk(p, 0, 16);
  CHECK(p.c == p.a);
  CHECK(serial_reference(p) == p.a);
}

TEST_CASE("AC-d of all-ones", "[kernels]") {
  KernelProblem p{KernelKind::ACD, 2, std::vector<double>(4, 1.0), std::vector<double>(4, 1.0),
                  std::vector<double>(4, 0.0), 1.0};
  execute_chunk(p, 0, 4);
  CHECK(p.c == std::vector<double>{4, 3, 2, 1});
  CHECK(serial_reference(p) == std::vector<double>{4, 3, 2, 1});
}

TEST_CASE("serial reference matches textbook loops", "[kernels]") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto mm = make_problem(KernelKind::MM, 7, seed);
    const auto want = oracle::matmul(mm.a, mm.b, 7);
    const auto got = serial_reference(mm);
    for (std::size_t i = 0; i < want.size(); ++i) REQUIRE_THAT(got[i], WithinRel(want[i], 1e-12));

    auto acd = make_problem(KernelKind::ACD, 5, seed, 0.5);
    const auto want2 = oracle::adjoint_convolution(acd.a, acd.b, 0.5);
    const auto got2 = serial_reference(acd);
    for (std::size_t i = 0; i < want2.size(); ++i) REQUIRE_THAT(got2[i], WithinRel(want2[i], 1e-12));
  }
}

TEST_CASE("any partition in any order reproduces the serial result", "[kernels][property]") {
  std::mt19937_64 rng{99};
  for (auto kind : {KernelKind::MM, KernelKind::ACD}) {
    for (count_t n : {3, 8, 13}) {
      auto p = make_problem(kind, n, n * 17);
      const auto ref = serial_reference(p);
      for (auto t : all_techniques) {
        for (count_t workers : {1, 2, 5}) {
          const auto plan = build_chunk_plan(t, p.iterations(), workers);
          auto offsets = plan.offsets();
          std::vector<std::size_t> order(plan.steps());
          std::iota(order.begin(), order.end(), 0);
          std::shuffle(order.begin(), order.end(), rng);
          std::fill(p.c.begin(), p.c.end(), 0.0);
          for (auto s : order) execute_chunk(p, offsets[s], plan.chunk_sizes[s]);
          REQUIRE(max_relative_error(p.c, ref) <= 1e-9);
        }
      }
    }
  }
}

TEST_CASE("execute_chunk rejects out-of-range chunks", "[kernels]") {
  auto p = make_problem(KernelKind::MM, 3, 1);
  CHECK_THROWS_AS(execute_chunk(p, 8, 2), std::invalid_argument);
  CHECK_THROWS_AS(execute_chunk(p, 10, 0), std::invalid_argument);
  CHECK_NOTHROW(execute_chunk(p, 9, 0));
}

TEST_CASE("make_problem is reproducible for a seed", "[kernels]") {
  const auto a = make_problem(KernelKind::ACD, 6, 5);
  const auto b = make_problem(KernelKind::ACD, 6, 5);
  const auto c = make_problem(KernelKind::ACD, 6, 6);
  CHECK(a.a == b.a);
  CHECK(a.b == b.b);
  CHECK(a.a != c.a);
}

TEST_CASE("kernel names", "[kernels]") {
  CHECK(parse_kernel("mm") == KernelKind::MM);
  CHECK(parse_kernel("AC-d") == KernelKind::ACD);
  CHECK(parse_kernel("acd") == KernelKind::ACD);
  CHECK_THROWS_AS(parse_kernel("gauss"), std::invalid_argument);
}
