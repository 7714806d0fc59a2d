#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "errors.hpp"

namespace loopsched {

inline double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty sample");
  const auto mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (values.size() % 2) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean of empty sample");
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

// Bessel-corrected; 0 for fewer than two samples.
inline double sample_stddev(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

// Two-sided Student-t critical value for `level` with `dof` degrees of freedom.
inline double t_critical(double level, std::size_t dof) {
  if (dof == 0) throw std::invalid_argument("t critical value needs at least one degree of freedom");
  boost::math::students_t dist(static_cast<double>(dof));
  return boost::math::quantile(dist, 0.5 + level / 2.0);
}

// Half-width of the two-sided Student-t confidence interval on the mean.
inline double ci_half_width(std::span<const double> xs, double level) {
  if (xs.size() < 2) return 0.0;
  return t_critical(level, xs.size() - 1) * sample_stddev(xs) /
         std::sqrt(static_cast<double>(xs.size()));
}

struct RepetitionPolicy {
  std::size_t min_reps{20};
  std::size_t max_reps{100};
  double target{0.05};  // relative CI half-width
  double level{0.95};
};

struct ExperimentStats {
  double mean_time{0.0};
  double ci_half_width{0.0};
  double confidence_level{0.95};
  std::size_t repetitions{0};
  double parallel_cost{0.0};
  bool converged{true};
  std::vector<double> samples;

  double relative_half_width() const noexcept {
    return mean_time > 0.0 ? ci_half_width / mean_time : 0.0;
  }
};

inline ExperimentStats summarize(std::vector<double> samples, double level) {
  ExperimentStats s;
  s.confidence_level = level;
  s.repetitions = samples.size();
  s.mean_time = mean(samples);
  s.ci_half_width = ci_half_width(samples, level);
  s.samples = std::move(samples);
  return s;
}

// Runs at least min_reps times, then keeps going while the relative CI
// half-width exceeds the target, up to max_reps. `converged` is false when
// max_reps is reached without meeting the target.
template <typename Runner>
ExperimentStats repeat_until_ci(Runner&& runner, const RepetitionPolicy& policy = {}) {
  if (policy.min_reps < 2 || policy.max_reps < policy.min_reps) {
    throw std::invalid_argument("repetition bounds must satisfy 2 <= min <= max");
  }
  std::vector<double> samples;
  samples.reserve(policy.max_reps);
  auto measure = [&] {
    const double d = runner();
    if (!(d > 0.0)) throw MeasurementError("non-positive duration " + std::to_string(d));
    samples.push_back(d);
  };
  while (samples.size() < policy.min_reps) measure();
  auto met = [&] { return ci_half_width(samples, policy.level) / mean(samples) <= policy.target; };
  while (!met() && samples.size() < policy.max_reps) measure();
  const bool converged = met();
  auto stats = summarize(std::move(samples), policy.level);
  stats.converged = converged;
  return stats;
}

}  // namespace loopsched
