// Command line front end: run a configured scenario or benchmark and report
// pass/fail plus the key numbers. Exit codes: 0 pass, 1 scenario criteria
// failed, 2 configuration or model errors.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <hidyn/experiment.hpp>

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("config", args.config_path, "scenario config JSON")->required();
  cmd->add_option("--set", args.overrides,
                  "override a config entry, e.g. --set control.dt=0.002");
  cmd->add_option("--output-dir", args.output_dir, "directory for CSV and JSON outputs");
}

hidyn::ExperimentConfig load(const CommonArgs& args) {
  hidyn::ExperimentConfig cfg = hidyn::load_experiment(args.config_path, args.overrides);
  if (!args.output_dir.empty()) cfg.output_dir = args.output_dir;
  return cfg;
}

void print_episode(const hidyn::ScenarioResult& r) {
  const auto& s = r.summary;
  std::printf("cycles            %d\n", s.cycles);
  if (s.failed) std::printf("failure           %s\n", s.failure_reason.c_str());
  std::printf("com error rms/max %.6f / %.6f m\n", s.com_rmse, s.com_error_max);
  std::printf("audit violations  %d cycles\n", s.audit_violation_cycles);
  std::printf("solve time        med %.3f ms  p99 %.3f ms  max %.3f ms\n",
              1e3 * s.solve_seconds_median, 1e3 * s.solve_seconds_p99,
              1e3 * s.solve_seconds_max);
  for (const auto& [key, value] : r.metrics.items()) {
    std::printf("%-18s%s\n", key.c_str(), value.dump().c_str());
  }
  std::printf("%s\n", r.pass ? "PASS" : "FAIL");
}

int run_scenario(const CommonArgs& args,
                 hidyn::ScenarioResult (*runner)(const hidyn::ExperimentConfig&)) {
  const hidyn::ScenarioResult r = runner(load(args));
  print_episode(r);
  return r.pass ? 0 : 1;
}

int run_bench(const CommonArgs& args) {
  const hidyn::BenchResult b = hidyn::run_reduction_bench(load(args));
  std::printf("cycles            %d\n", b.cycles);
  std::printf("full formulation  dim %d, %d top equalities\n", b.full_dimension,
              b.full_equalities);
  std::printf("reduced           dim %d, %d top equalities\n", b.reduced_dimension,
              b.reduced_equalities);
  std::printf("full solve        min %.3f  med %.3f  p99 %.3f  max %.3f ms\n",
              1e3 * b.full_min, 1e3 * b.full_median, 1e3 * b.full_p99, 1e3 * b.full_max);
  std::printf("reduced solve     min %.3f  med %.3f  p99 %.3f  max %.3f ms\n",
              1e3 * b.reduced_min, 1e3 * b.reduced_median, 1e3 * b.reduced_p99,
              1e3 * b.reduced_max);
  std::printf("worst-case ratio  %.3f\n", b.full_max > 0 ? b.reduced_max / b.full_max : 0.0);
  std::printf("torque mismatch   %.3e\n", b.torque_mismatch_max);
  const bool pass = b.reduced_max <= 0.75 * b.full_max && b.torque_mismatch_max <= 1e-6;
  std::printf("%s\n", pass ? "PASS" : "FAIL");
  return pass ? 0 : 1;
}

int run_audit(const CommonArgs& args) {
  hidyn::ExperimentConfig cfg = load(args);
  cfg.episode.audit_cycles = true;
  const hidyn::ScenarioResult r = hidyn::run_scenario(cfg);
  std::printf("cycles            %d\n", r.summary.cycles);
  for (const auto& [name, worst] : r.summary.audit_worst) {
    std::printf("%-22s worst %.3e\n", name.c_str(), worst);
  }
  std::printf("violation cycles  %d\n", r.summary.audit_violation_cycles);
  const bool pass = !r.summary.failed && r.summary.audit_violation_cycles == 0;
  std::printf("%s\n", pass ? "PASS" : "FAIL");
  return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical inverse dynamics balance control experiments"};
  app.require_subcommand(1);

  CommonArgs balance_args, tracking_args, single_args, bench_args, audit_args;
  CLI::App* balance = app.add_subcommand("run-balance", "standing balance with disturbances");
  add_common(balance, balance_args);
  CLI::App* tracking = app.add_subcommand("run-tracking", "sinusoidal com tracking");
  add_common(tracking, tracking_args);
  CLI::App* single =
      app.add_subcommand("run-single-support", "weight shift and foot lift sequence");
  add_common(single, single_args);
  CLI::App* bench =
      app.add_subcommand("bench-reduction", "time full vs reduced formulations");
  add_common(bench, bench_args);
  CLI::App* audit = app.add_subcommand("audit", "run the configured scenario and report "
                                                "per-cycle physics audits");
  add_common(audit, audit_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (balance->parsed()) return run_scenario(balance_args, hidyn::run_balance_scenario);
    if (tracking->parsed()) return run_scenario(tracking_args, hidyn::run_tracking_scenario);
    if (single->parsed())
      return run_scenario(single_args, hidyn::run_single_support_scenario);
    if (bench->parsed()) return run_bench(bench_args);
    if (audit->parsed()) return run_audit(audit_args);
  } catch (const hidyn::ExperimentError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const hidyn::ModelError& e) {
    std::fprintf(stderr, "model error: %s\n", e.what());
    return 2;
  }
  return 2;
}
