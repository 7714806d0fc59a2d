// loopsched: plan, simulate, run, calibrate, compare and sweep loop-scheduling experiments.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error, 3 validation failure.
// Data goes to stdout, diagnostics to stderr.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "loopsched/loopsched.hpp"

namespace ls = loopsched;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_usage = 1;
constexpr int exit_runtime = 2;
constexpr int exit_validation = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t seed_from_env() {
  const char* env = std::getenv("LOOPSCHED_SEED");
  if (!env || !*env) return 42;
  try {
    return ls::parse_count(env, "LOOPSCHED_SEED");
  } catch (const ls::ParseError& e) {
    throw UsageError(e.what());
  }
}

template <typename Fn>
auto usage_checked(Fn&& fn) {
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

ls::Pinning parse_pin(const std::string& s) {
  if (s == "scatter") return ls::Pinning::scatter;
  if (s == "none") return ls::Pinning::none;
  throw UsageError("--pin must be scatter or none");
}

std::vector<ls::KernelSize> parse_kernel_list(const std::vector<std::string>& items) {
  std::vector<ls::KernelSize> out;
  for (const auto& item : items) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw UsageError("kernel '" + item + "' must be KIND:n");
    ls::KernelSize k;
    k.kind = usage_checked([&] { return ls::parse_kernel(item.substr(0, colon)); });
    try {
      k.matrix_order = ls::parse_count(item.substr(colon + 1), "kernel size");
    } catch (const ls::ParseError& e) {
      throw UsageError(e.what());
    }
    if (k.matrix_order == 0) throw UsageError("kernel size must be positive");
    out.push_back(k);
  }
  return out;
}

// Writes to `path`, or stdout when path is "-".
template <typename Fn>
void with_output(const std::string& path, Fn&& fn) {
  if (path == "-") {
    fn(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  fn(out);
}

struct PlanArgs {
  std::string technique;
  ls::count_t n{0};
  ls::count_t p{1};
};

int cmd_plan(const PlanArgs& a) {
  const auto t = usage_checked([&] { return ls::parse_technique(a.technique); });
  if (a.p == 0) throw UsageError("--p must be at least 1");
  const auto plan = ls::build_chunk_plan(t, a.n, a.p);
  for (std::size_t i = 0; i < plan.chunk_sizes.size(); ++i) std::cout << (i ? " " : "") << plan.chunk_sizes[i];
  std::cout << '\n';
  return exit_ok;
}

struct SimulateArgs {
  std::string platform;
  std::string kernel;
  ls::count_t size{0};
  std::string technique;
  ls::count_t threads{1};
  std::string profile;
  bool shared_memory{false};
  double g1{35.0};
  double g2{60.0};
  std::string chunk_log;
  bool per_iteration{false};
};

int cmd_simulate(const SimulateArgs& a) {
  const auto kind = usage_checked([&] { return ls::parse_kernel(a.kernel); });
  const auto technique = usage_checked([&] { return ls::parse_technique(a.technique); });
  if (a.size == 0) throw UsageError("--size must be positive");
  if (a.threads == 0) throw UsageError("--threads must be at least 1");
  const auto platform = ls::load_platform(a.platform);
  if (a.threads > platform.host_count) {
    throw UsageError("--threads " + std::to_string(a.threads) + " exceeds the " +
                     std::to_string(platform.host_count) + " hosts of platform " + a.platform);
  }
  const ls::KernelCostModel model = usage_checked([&] { return ls::KernelCostModel{kind, a.size, a.g1, a.g2}; });
  auto cfg = ls::make_sim_config(model, technique, a.threads,
                                 a.shared_memory ? ls::CommMode::shared_memory : ls::CommMode::networked);
  cfg.per_iteration_events = a.per_iteration;
  auto overheads = ls::OverheadModel::rp3();
  if (!a.profile.empty()) {
    const auto profile = ls::read_profile(a.profile);
    if (profile.partial) std::cerr << "warning: profile " << a.profile << " is partial\n";
    overheads = profile.overhead_model();
    if (const auto* table = profile.find_tasks(kind, a.size)) cfg.iteration_flop = table->flop_table();
  }
  const auto res = ls::simulate(cfg, platform, overheads);
  std::cout << "makespan_s,parallel_cost_ps,steps\n"
            << ls::format_number(res.makespan()) << ',' << ls::format_number(res.parallel_cost()) << ','
            << res.chunk_log.size() << '\n';
  if (!a.chunk_log.empty()) {
    with_output(a.chunk_log, [&](std::ostream& out) {
      out << "step,host,start_iteration,chunk_size,start_time_s,end_time_s\n";
      for (const auto& r : res.chunk_log) {
        out << r.step << ',' << r.host << ',' << r.start_iteration << ',' << r.chunk_size << ','
            << ls::format_number(ls::to_seconds(r.start_time)) << ','
            << ls::format_number(ls::to_seconds(r.end_time)) << '\n';
      }
    });
  }
  return exit_ok;
}

struct RunArgs {
  std::string kernel;
  ls::count_t size{0};
  std::string technique;
  ls::count_t threads{1};
  std::string pin{"none"};
  bool validate{false};
  bool ci{false};
  std::string chunk_log;
};

int cmd_run(const RunArgs& a) {
  const auto kind = usage_checked([&] { return ls::parse_kernel(a.kernel); });
  const auto technique = usage_checked([&] { return ls::parse_technique(a.technique); });
  if (a.size == 0) throw UsageError("--size must be positive");
  if (a.threads == 0) throw UsageError("--threads must be at least 1");
  ls::NativeRunConfig cfg{technique, a.threads, parse_pin(a.pin), ls::TimingCapture::off, a.validate};
  auto problem = ls::make_problem(kind, a.size, seed_from_env());

  std::optional<ls::NativeRunResult> last;
  auto once = [&] {
    last = ls::run_parallel(problem, cfg);
    for (const auto& w : last->warnings) std::cerr << "warning: " << w << '\n';
    return last->wall_time;
  };
  ls::ExperimentStats stats;
  if (a.ci) {
    stats = ls::repeat_until_ci(once);
  } else {
    stats = ls::summarize({once()}, 0.95);
  }
  const bool ok = !last->validated || *last->validated;
  std::cout << "wall_time_s,parallel_cost_ps,reps,ci_half_width_s,validated\n"
            << ls::format_number(stats.mean_time) << ','
            << ls::format_number(ls::parallel_cost(stats.mean_time, a.threads)) << ','
            << stats.repetitions << ',' << ls::format_number(stats.ci_half_width) << ','
            << (last->validated ? (ok ? "yes" : "no") : "skipped") << '\n';
  if (!a.chunk_log.empty()) {
    with_output(a.chunk_log, [&](std::ostream& out) {
      out << "step,thread,start,size\n";
      for (const auto& r : last->chunk_log) out << r.step << ',' << r.thread << ',' << r.start << ',' << r.size << '\n';
    });
  }
  if (!ok) {
    std::cerr << "error: output differs from serial reference (max relative error "
              << last->max_relative_error << ")\n";
    return exit_validation;
  }
  return exit_ok;
}

struct CalibrateArgs {
  std::vector<std::string> kernels;
  std::vector<ls::count_t> threads;
  std::size_t reps{1};
  double nominal_mflops{41600.0};
  std::string pin{"none"};
  std::string out{"-"};
};

int cmd_calibrate(const CalibrateArgs& a) {
  ls::CalibrationConfig cfg;
  cfg.kernels.clear();
  for (const auto& k : parse_kernel_list(a.kernels)) cfg.kernels.push_back({k.kind, k.matrix_order});
  cfg.thread_counts = a.threads;
  for (auto t : cfg.thread_counts)
    if (t == 0) throw UsageError("--threads entries must be at least 1");
  cfg.reps = a.reps;
  if (!(a.nominal_mflops > 0.0)) throw UsageError("--nominal-mflops must be positive");
  cfg.nominal_core_speed = a.nominal_mflops * 1e6;
  cfg.pinning = parse_pin(a.pin);
  cfg.seed = seed_from_env();
  const auto profile = usage_checked([&] { return ls::calibrate(cfg); });
  if (profile.partial) std::cerr << "warning: profile is partial (too few samples in some buckets)\n";
  with_output(a.out, [&](std::ostream& out) { ls::write_profile(out, profile); });
  return exit_ok;
}

struct CompareArgs {
  std::string results;
  std::string reference;
};

int cmd_compare(const CompareArgs& a) {
  const auto results = ls::read_results_csv(a.results);
  const auto reference = ls::load_reference(a.reference);
  const auto report = ls::compare(results, reference);
  for (const auto& s : report.skipped) std::cerr << "skipped: " << s << '\n';
  std::cout << "kernel,technique,threads,mode,source,result_cost_ps,reference_cost_ps,percent_error\n";
  for (const auto& c : report.cells) {
    std::cout << ls::to_string(c.kernel) << ',' << ls::to_string(c.technique) << ',' << c.threads << ','
              << c.mode << ',' << c.source << ',' << ls::format_number(c.result_cost) << ','
              << ls::format_number(c.reference_cost) << ',' << ls::format_number(c.percent_error) << '\n';
  }
  std::cout << "# cells " << report.cells.size() << '\n'
            << "# min_abs_percent_error " << ls::format_number(report.min_abs) << '\n'
            << "# max_abs_percent_error " << ls::format_number(report.max_abs) << '\n'
            << "# mean_abs_percent_error " << ls::format_number(report.mean_abs) << '\n';
  return exit_ok;
}

struct SweepArgs {
  std::string config;
  std::string out{"-"};
  std::string samples;
  std::string plot_dir;
};

int cmd_sweep(const SweepArgs& a) {
  auto matrix = [&] {
    try {
      return ls::load_sweep_config(a.config);
    } catch (const ls::ParseError& e) {
      throw UsageError(e.what());
    }
  }();
  if (const char* env = std::getenv("LOOPSCHED_SEED"); env && *env) matrix.seed = seed_from_env();
  const bool native = matrix.mode == ls::ExperimentMode::native;
  const auto report = ls::run_matrix(matrix, [&](const ls::ResultRow& r) {
    if (native) {
      std::cerr << ls::to_string(r.kernel) << ' ' << ls::to_string(r.technique) << " P=" << r.threads
                << " reps=" << r.reps << '\n';
    }
  });
  with_output(a.out, [&](std::ostream& out) { ls::write_results_csv(out, report.rows); });
  if (!a.samples.empty()) with_output(a.samples, [&](std::ostream& out) { ls::write_samples_csv(out, report.rows); });
  if (!a.plot_dir.empty()) ls::write_plot_data(a.plot_dir, report.rows);
  for (const auto& f : report.failures) {
    std::cerr << "failed: " << ls::to_string(f.kernel.kind) << ':' << f.kernel.matrix_order << ','
              << ls::to_string(f.technique) << ",P=" << f.threads << ": " << f.reason << '\n';
  }
  return report.failures.empty() ? exit_ok : exit_runtime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Loop self-scheduling laboratory: chunk plans, discrete-event simulation, native runs"};
  app.require_subcommand(1);

  PlanArgs plan;
  auto* plan_cmd = app.add_subcommand("plan", "Print the chunk-size sequence of a technique");
  plan_cmd->add_option("--technique", plan.technique, "STATIC, SS, GSS or FAC")->required();
  plan_cmd->add_option("--n", plan.n, "Loop iterations")->required();
  plan_cmd->add_option("--p", plan.p, "Workers")->required();

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate one run on a platform; prints makespan and parallel cost");
  sim_cmd->add_option("--platform", sim.platform, "Platform file")->required();
  sim_cmd->add_option("--kernel", sim.kernel, "MM or ACD")->required();
  sim_cmd->add_option("--size", sim.size, "Matrix order n")->required();
  sim_cmd->add_option("--technique", sim.technique, "STATIC, SS, GSS or FAC")->required();
  sim_cmd->add_option("--threads", sim.threads, "Number of threads (hosts used)")->required();
  sim_cmd->add_option("--profile", sim.profile, "Calibration profile for overheads and task times");
  sim_cmd->add_flag("--shared-memory", sim.shared_memory, "Zero-cost transfers");
  sim_cmd->add_option("--g1", sim.g1, "MM cost factor")->capture_default_str();
  sim_cmd->add_option("--g2", sim.g2, "AC-d cost factor")->capture_default_str();
  sim_cmd->add_option("--chunk-log", sim.chunk_log, "Write the chunk log CSV to this file ('-' for stdout)");
  sim_cmd->add_flag("--per-iteration", sim.per_iteration, "One event per iteration task");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Execute natively with decentralized self-scheduling");
  run_cmd->add_option("--kernel", run.kernel, "MM or ACD")->required();
  run_cmd->add_option("--size", run.size, "Matrix order n")->required();
  run_cmd->add_option("--technique", run.technique, "STATIC, SS, GSS or FAC")->required();
  run_cmd->add_option("--threads", run.threads, "Number of threads")->required();
  run_cmd->add_option("--pin", run.pin, "scatter or none")->capture_default_str();
  run_cmd->add_flag("--validate", run.validate, "Check output against the serial reference");
  run_cmd->add_flag("--ci", run.ci, "Repeat 20-100 times until the 95% CI is within 5% of the mean");
  run_cmd->add_option("--chunk-log", run.chunk_log, "Write the chunk log CSV of the last run ('-' for stdout)");

  CalibrateArgs cal;
  auto* cal_cmd = app.add_subcommand("calibrate", "Measure overheads and task times; write a profile");
  cal_cmd->add_option("--kernels", cal.kernels, "KIND:n entries, e.g. MM:512,ACD:128")->delimiter(',')->required();
  cal_cmd->add_option("--threads", cal.threads, "Thread counts, e.g. 2,4,8")->delimiter(',')->required();
  cal_cmd->add_option("--reps", cal.reps, "Runs per technique and thread count")->capture_default_str();
  cal_cmd->add_option("--nominal-mflops", cal.nominal_mflops, "Nominal core speed in MFLOP/s")->capture_default_str();
  cal_cmd->add_option("--pin", cal.pin, "scatter or none")->capture_default_str();
  cal_cmd->add_option("--out", cal.out, "Profile path ('-' for stdout)")->capture_default_str();

  CompareArgs cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "Percent error of results against reference data");
  cmp_cmd->add_option("--results", cmp.results, "Results CSV")->required();
  cmp_cmd->add_option("--reference", cmp.reference, "Reference CSV")->required();

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run an experiment matrix from a config file");
  sweep_cmd->add_option("--config", sweep.config, "Sweep config file")->required();
  sweep_cmd->add_option("--out", sweep.out, "Results CSV ('-' for stdout)")->capture_default_str();
  sweep_cmd->add_option("--samples", sweep.samples, "Raw samples CSV");
  sweep_cmd->add_option("--plot-dir", sweep.plot_dir, "Directory for plot-data files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_usage;
  }

  try {
    if (*plan_cmd) return cmd_plan(plan);
    if (*sim_cmd) return cmd_simulate(sim);
    if (*run_cmd) return cmd_run(run);
    if (*cal_cmd) return cmd_calibrate(cal);
    if (*cmp_cmd) return cmd_compare(cmp);
    if (*sweep_cmd) return cmd_sweep(sweep);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_usage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_runtime;
  }
  return exit_usage;
}
