#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "loopsched/calibration.hpp"

using namespace loopsched;
using Catch::Approx;

namespace {

CalibrationProfile sample_profile() {
  CalibrationProfile p;
  p.nominal_core_speed = 41600e6;
  p.timer_overhead_s = 2.5e-8;
  p.partial = true;
  p.thread_creation = {{2, {3e-5, 3e-5 * 41600e6}}, {8, {1.1e-4, 1.1e-4 * 41600e6}}};
  for (auto t : all_techniques) {
    const double s = 1e-8 * (1 + index_of(t));
    p.scheduling_overhead[index_of(t)] = {s, s * 41600e6};
  }
  p.tasks.push_back({KernelKind::MM, 4, {{0, 16, {1.25e-6, 52000.0}}}});
  p.tasks.push_back({KernelKind::ACD, 2, {{0, 2, {0.1, 0.2}}, {2, 4, {0.3, 1.0 / 3.0}}}});
  return p;
}

std::string with_line_removed(const std::string& text, const std::string& prefix) {
  std::istringstream in{text};
  std::string line, out;
  while (std::getline(in, line))
    if (line.rfind(prefix, 0) != 0) out += line + "\n";
  return out;
}

}  // namespace

TEST_CASE("seconds to FLOP at the nominal speed", "[calibration]") {
  CHECK(seconds_to_flop(18e-9, 41600e6) == Approx(748.8).epsilon(1e-12));
  CHECK(seconds_to_flop(0.0, 41600e6) == 0.0);
  CHECK(seconds_to_flop(4e-9, 41600e6) == Approx(2.0 * seconds_to_flop(2e-9, 41600e6)).epsilon(1e-15));
}

TEST_CASE("profile round-trips through text", "[calibration]") {
  const auto p = sample_profile();
  std::ostringstream out;
  write_profile(out, p);
  std::istringstream in{out.str()};
  const auto q = read_profile(in);
  CHECK(q == p);

  std::ostringstream again;
  write_profile(again, q);
  CHECK(again.str() == out.str());
}

TEST_CASE("profile errors carry line numbers", "[calibration]") {
  std::ostringstream out;
  write_profile(out, sample_profile());
  const std::string text = out.str();

  {
    std::istringstream in{with_line_removed(text, "GSS,")};
    CHECK_THROWS_WITH(read_profile(in), Catch::Matchers::ContainsSubstring("GSS"));
  }
  {
    std::string bad = text;
    bad.replace(bad.find("SS,"), 3, "XX,");
    std::istringstream in{bad};
    try {
      read_profile(in);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() > 0);
    }
  }
  {
    std::istringstream in{with_line_removed(text, "schema")};
    CHECK_THROWS_AS(read_profile(in), ParseError);
  }
  {
    std::istringstream in{with_line_removed(text, "2,4,")};
    CHECK_THROWS_WITH(read_profile(in), Catch::Matchers::ContainsSubstring("cover"));
  }
  {
    std::string bad = text;
    bad.replace(bad.find("2,4,"), 4, "3,4,");
    std::istringstream in{bad};
    CHECK_THROWS_AS(read_profile(in), ParseError);
  }
}

TEST_CASE("the shipped constants profile drives the simulator", "[calibration]") {
  const auto p = read_profile(std::string(LOOPSCHED_DATA_DIR "/rp3_constants.profile"));
  const auto model = p.overhead_model();
  CHECK(model.scheduling_flop == OverheadModel::rp3().scheduling_flop);
  CHECK(model.source == OverheadModel::Source::calibration_profile);
  const auto cfg = make_sim_config(KernelCostModel{KernelKind::MM, 20}, Technique::FAC, 4);
  CHECK(simulate(cfg, rp3_platform(), model).makespan_ps ==
        simulate(cfg, rp3_platform(), OverheadModel::rp3()).makespan_ps);
}

TEST_CASE("task table interpolates between bucket centres", "[calibration]") {
  TaskTable t{KernelKind::ACD, 4, {{0, 4, {0, 100.0}}, {4, 8, {0, 60.0}}, {8, 16, {0, 20.0}}}};
  // centres at 1.5, 5.5, 11.5
  CHECK(t.flop_at(0) == 100.0);
  CHECK(t.flop_at(1) == 100.0);
  CHECK(t.flop_at(3) == Approx(100.0 - 40.0 * 1.5 / 4.0));
  CHECK(t.flop_at(7) == Approx(60.0 - 40.0 * 1.5 / 6.0));
  CHECK(t.flop_at(15) == 20.0);
  const auto table = t.flop_table();
  CHECK(table.size() == 16);
  CHECK(std::is_sorted(table.rbegin(), table.rend()));
}

TEST_CASE("iteration samples are bucketed by index", "[calibration]") {
  std::vector<IterationSample> samples;
  for (int rep = 0; rep < 40; ++rep)
    for (count_t i = 0; i < 16; ++i) samples.push_back({i, 1e-6 * (16 - i) + (rep % 3) * 1e-9});
  bool partial = false;
  const auto t = bucket_iteration_times(KernelKind::ACD, 4, samples, 4, 32, 1e9, partial);
  CHECK_FALSE(partial);
  REQUIRE(t.buckets.size() == 4);
  for (std::size_t b = 0; b < 4; ++b) {
    CHECK(t.buckets[b].first == 4 * b);
    CHECK(t.buckets[b].last == 4 * b + 4);
  }
  // bucket 0 holds 16..13 us; median of {16,15,14,13}(+jitter) is 14.5 us + 1 ns
  CHECK(t.buckets[0].cost.seconds == Approx(14.5e-6 + 1e-9));
  CHECK(t.buckets[0].cost.flop == Approx(t.buckets[0].cost.seconds * 1e9));

  bool sparse = false;
  const auto few = std::vector<IterationSample>(samples.begin(), samples.begin() + 16);
  bucket_iteration_times(KernelKind::ACD, 4, few, 4, 32, 1e9, sparse);
  CHECK(sparse);

  bool uneven = false;
  const auto t2 = bucket_iteration_times(KernelKind::ACD, 3, samples, 4, 1, 1e9, uneven);
  REQUIRE(t2.buckets.size() == 4);
  CHECK(t2.buckets.front().first == 0);
  CHECK(t2.buckets.back().last == 9);
  for (std::size_t b = 1; b < 4; ++b) CHECK(t2.buckets[b].first == t2.buckets[b - 1].last);
}

TEST_CASE("timer correction only touches short samples", "[calibration]") {
  CHECK(correct_for_timer(1e-7, 2e-8) == Approx(8e-8));
  CHECK(correct_for_timer(1e-7, 4e-9) == 1e-7);
  CHECK(correct_for_timer(2e-6, 5e-7) == 2e-6);
  CHECK(correct_for_timer(1e-8, 2e-8) == 0.0);
}

TEST_CASE("a small calibration run produces a usable profile", "[calibration]") {
  CalibrationConfig cfg;
  cfg.kernels = {{KernelKind::MM, 16}, {KernelKind::ACD, 8}};
  cfg.thread_counts = {1, 2};
  cfg.reps = 2;
  cfg.buckets = 8;
  cfg.min_samples_per_bucket = 4;
  const auto p = calibrate(cfg);
  CHECK(p.thread_creation.size() == 2);
  for (auto t : all_techniques) CHECK(p.scheduling_overhead[index_of(t)].seconds >= 0.0);
  REQUIRE(p.find_tasks(KernelKind::MM, 16) != nullptr);
  REQUIRE(p.find_tasks(KernelKind::ACD, 8) != nullptr);
  CHECK(p.find_tasks(KernelKind::ACD, 8)->buckets.size() == 8);
  CHECK(p.find_tasks(KernelKind::ACD, 8)->buckets.back().last == 64);
  CHECK(p.find_tasks(KernelKind::MM, 16)->buckets.back().last == 256);
  CHECK(p.timer_overhead_s >= 0.0);

  std::ostringstream out;
  write_profile(out, p);
  std::istringstream in{out.str()};
  CHECK(read_profile(in) == p);

  CalibrationConfig bad = cfg;
  bad.thread_counts.clear();
  CHECK_THROWS_AS(calibrate(bad), std::invalid_argument);
}
