#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hidyn/controllers.hpp"
#include "hidyn/model_io.hpp"
#include "hidyn/sim.hpp"

namespace hidyn {

struct ExperimentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A full scenario description: model, controller, closed-loop options and
// disturbances, read from JSON with dotted-path overrides.
struct ExperimentConfig {
  std::string model_file;
  std::string controller = "balance";  // balance | tracking | single_support
  double duration = 5.0;
  std::string output_dir;              // empty writes nothing
  int bench_cycles = 12000;
  std::map<std::string, double> initial_posture;  // joint name -> angle
  ControllerConfig control;
  SimConfig sim;
  EpisodeOptions episode;
  std::vector<Disturbance> disturbances;
  nlohmann::json raw;                  // the merged document
};

namespace detail {

inline void read_vec(const nlohmann::json& j, const char* key, Vec3& out) {
  if (!j.contains(key)) return;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) {
    throw ExperimentError(std::string(key) + " must be an array of 3 numbers");
  }
  for (int i = 0; i < 3; ++i) out[i] = a[i].get<double>();
}

inline void read_vec(const nlohmann::json& j, const char* key, Vec6& out) {
  if (!j.contains(key)) return;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 6) {
    throw ExperimentError(std::string(key) + " must be an array of 6 numbers");
  }
  for (int i = 0; i < 6; ++i) out[i] = a[i].get<double>();
}

template <typename T>
inline void read_num(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void read_gains(const nlohmann::json& j, ControllerGains& g) {
  read_vec(j, "momentum_p", g.momentum_p);
  read_vec(j, "momentum_d", g.momentum_d);
  read_vec(j, "com_p", g.com_p);
  read_vec(j, "com_d", g.com_d);
  read_num(j, "posture_joint_p", g.posture.joint_p);
  read_num(j, "posture_joint_d", g.posture.joint_d);
  read_num(j, "posture_base_linear_p", g.posture.base_linear_p);
  read_num(j, "posture_base_linear_d", g.posture.base_linear_d);
  read_num(j, "posture_base_angular_p", g.posture.base_angular_p);
  read_num(j, "posture_base_angular_d", g.posture.base_angular_d);
  read_num(j, "swing_p", g.swing_p);
  read_num(j, "swing_d", g.swing_d);
}

inline void read_weights(const nlohmann::json& j, ControllerWeights& w) {
  read_num(j, "momentum", w.momentum);
  read_num(j, "com", w.com);
  read_num(j, "posture", w.posture);
  read_num(j, "regularizer", w.regularizer);
  read_num(j, "swing", w.swing);
}

inline void read_control(const nlohmann::json& j, ControllerConfig& c) {
  read_num(j, "dt", c.dt);
  read_vec(j, "gravity", c.gravity);
  read_num(j, "cop_margin", c.cop_margin);
  if (j.contains("formulation")) {
    const std::string f = j.at("formulation").get<std::string>();
    if (f == "reduced") {
      c.formulation = Formulation::reduced;
    } else if (f == "full") {
      c.formulation = Formulation::full;
    } else {
      throw ExperimentError("formulation must be 'reduced' or 'full'");
    }
  }
  read_num(j, "limit_horizon_cycles", c.limits.horizon_cycles);
  read_num(j, "limit_accel_cap", c.limits.accel_cap);
  if (j.contains("gains")) read_gains(j.at("gains"), c.gains);
  if (j.contains("weights")) read_weights(j.at("weights"), c.weights);
  read_num(j, "swing_end_effector", c.swing_end_effector);
  read_num(j, "com_shift_duration", c.com_shift_duration);
  read_num(j, "com_settle_duration", c.com_settle_duration);
  read_num(j, "unload_duration", c.unload_duration);
  read_num(j, "unload_force_threshold", c.unload_force_threshold);
  read_num(j, "unload_hold_cycles", c.unload_hold_cycles);
  read_num(j, "unload_timeout", c.unload_timeout);
  read_num(j, "swing_height", c.swing_height);
  read_num(j, "swing_duration", c.swing_duration);
  read_num(j, "tracking_frequency", c.tracking_frequency);
  read_num(j, "tracking_amp_forward", c.tracking_amp_forward);
  read_num(j, "tracking_amp_vertical", c.tracking_amp_vertical);
  read_num(j, "tracking_ramp", c.tracking_ramp);
  c.limits.dt = c.dt;
}

inline Disturbance read_disturbance(const nlohmann::json& j) {
  Disturbance d;
  const std::string kind = j.value("kind", "impulse");
  if (kind == "impulse") {
    d.kind = Disturbance::Kind::impulse;
  } else if (kind == "constant") {
    d.kind = Disturbance::Kind::constant;
  } else if (kind == "platform_tilt") {
    d.kind = Disturbance::Kind::platform_tilt;
  } else {
    throw ExperimentError("unknown disturbance kind '" + kind + "'");
  }
  d.link = j.value("link", std::string());
  read_vec(j, "wrench", d.wrench);
  read_num(j, "start", d.start);
  read_num(j, "duration", d.duration);
  read_num(j, "tilt_amplitude", d.tilt_amplitude);
  read_num(j, "tilt_frequency", d.tilt_frequency);
  read_num(j, "tilt_axis", d.tilt_axis);
  return d;
}

// Sets json[dotted.path] = parsed value, creating objects along the way.
inline void apply_override(nlohmann::json& doc, const std::string& key,
                           const std::string& value) {
  nlohmann::json* node = &doc;
  std::size_t pos = 0;
  while (true) {
    const std::size_t dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot - pos);
    if (part.empty()) throw ExperimentError("bad override key '" + key + "'");
    if (dot == std::string::npos) {
      nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
      (*node)[part] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
      return;
    }
    node = &(*node)[part];
    pos = dot + 1;
  }
}

}  // namespace detail

inline ExperimentConfig experiment_from_json(nlohmann::json j,
                                             const std::vector<std::string>& overrides = {}) {
  for (const std::string& item : overrides) {
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos) {
      throw ExperimentError("override must look like key.path=value: '" + item + "'");
    }
    detail::apply_override(j, item.substr(0, eq), item.substr(eq + 1));
  }

  ExperimentConfig cfg;
  cfg.raw = j;
  if (!j.contains("model")) throw ExperimentError("config needs a 'model' path");
  cfg.model_file = j.at("model").get<std::string>();
  detail::read_num(j, "controller", cfg.controller);
  detail::read_num(j, "duration", cfg.duration);
  detail::read_num(j, "output_dir", cfg.output_dir);
  detail::read_num(j, "bench_cycles", cfg.bench_cycles);
  if (j.contains("control")) detail::read_control(j.at("control"), cfg.control);
  if (j.contains("sim")) {
    const auto& s = j.at("sim");
    detail::read_num(s, "dt", cfg.sim.dt);
    detail::read_vec(s, "gravity", cfg.sim.gravity);
    detail::read_num(s, "ground_height", cfg.sim.ground_height);
    detail::read_num(s, "baumgarte_frequency", cfg.sim.baumgarte_frequency);
  }
  cfg.episode.duration = cfg.duration;
  if (j.contains("cascade")) {
    const auto& c = j.at("cascade");
    detail::read_num(c, "overlap_nullspace", cfg.episode.cascade.overlap_nullspace);
    detail::read_num(c, "top_slack_tolerance", cfg.episode.cascade.top_slack_tolerance);
  }
  if (j.contains("audit")) {
    const auto& a = j.at("audit");
    detail::read_num(a, "enabled", cfg.episode.audit_cycles);
    detail::read_num(a, "dynamics_residual", cfg.episode.audit.dynamics_residual);
    detail::read_num(a, "box_violation", cfg.episode.audit.box_violation);
    detail::read_num(a, "force_violation", cfg.episode.audit.force_violation);
  }
  if (j.contains("initial_posture")) {
    for (const auto& [joint, angle] : j.at("initial_posture").items()) {
      cfg.initial_posture[joint] = angle.get<double>();
    }
  }
  if (j.contains("disturbances")) {
    for (const auto& item : j.at("disturbances")) {
      cfg.disturbances.push_back(detail::read_disturbance(item));
    }
  }
  // The environment can redirect outputs, e.g. in tests.
  if (const char* env = std::getenv("HIDYN_OUTPUT_DIR")) cfg.output_dir = env;
  return cfg;
}

inline ExperimentConfig load_experiment(const std::string& path,
                                        const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in.good()) throw ExperimentError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ExperimentError(path + ": " + e.what());
  }
  // Relative model paths resolve against the config file's directory.
  ExperimentConfig cfg = experiment_from_json(j, overrides);
  const std::filesystem::path model(cfg.model_file);
  if (model.is_relative()) {
    cfg.model_file = (std::filesystem::path(path).parent_path() / model).string();
  }
  return cfg;
}

struct ScenarioResult {
  EpisodeSummary summary;
  EpisodeLog log;
  nlohmann::json metrics;   // scenario-specific numbers
  bool pass = false;
};

// Neutral pose with the configured joint angles applied, rested on the
// ground.
inline RobotState initial_state(const RobotModel& model, const ExperimentConfig& cfg) {
  RobotState state = RobotState::neutral(model);
  for (const auto& [joint, angle] : cfg.initial_posture) {
    int index = -1;
    for (int i = 0; i < model.joint_count(); ++i) {
      if (model.joints[i].name == joint) index = i;
    }
    if (index < 0) throw ExperimentError("initial_posture names unknown joint '" + joint + "'");
    state.q[index] = angle;
  }
  return settle_on_ground(model, state, cfg.sim.ground_height);
}

namespace detail {

inline int cycle_at(const EpisodeLog& log, double time) {
  for (int k = 0; k < static_cast<int>(log.records.size()); ++k) {
    if (log.records[k].time >= time - 1e-12) return k;
  }
  return static_cast<int>(log.records.size()) - 1;
}

inline void write_outputs(const ExperimentConfig& cfg, const ScenarioResult& result,
                          const std::string& stem) {
  if (cfg.output_dir.empty()) return;
  std::filesystem::create_directories(cfg.output_dir);
  result.log.write_csv(cfg.output_dir + "/" + stem + ".csv");
  nlohmann::json j;
  j["pass"] = result.pass;
  j["metrics"] = result.metrics;
  j["failed"] = result.summary.failed;
  j["failure_reason"] = result.summary.failure_reason;
  j["cycles"] = result.summary.cycles;
  j["com_rmse"] = result.summary.com_rmse;
  j["com_error_max"] = result.summary.com_error_max;
  j["audit_violation_cycles"] = result.summary.audit_violation_cycles;
  j["solve_seconds"] = {{"min", result.summary.solve_seconds_min},
                        {"median", result.summary.solve_seconds_median},
                        {"p99", result.summary.solve_seconds_p99},
                        {"max", result.summary.solve_seconds_max}};
  std::ofstream out(cfg.output_dir + "/" + stem + ".json");
  out << j.dump(2) << "\n";
}

}  // namespace detail

// Standing balance under the configured disturbances. Pass requires a clean
// run and, when a push is configured, recovery: com back within 2 cm of its
// target and angular momentum below 10% of its peak within 3 s of push end.
inline ScenarioResult run_balance_scenario(const ExperimentConfig& cfg) {
  const RobotModel model = load_model(cfg.model_file);
  const RobotState initial = initial_state(model, cfg);
  BalanceController controller(model, initial, cfg.control);

  ScenarioResult result;
  result.log = run_episode(model, initial, controller, cfg.sim, cfg.episode,
                           cfg.disturbances, &result.summary);
  result.pass = !result.summary.failed && result.summary.audit_violation_cycles == 0;

  result.metrics["com_target"] = {controller.com_target().x(), controller.com_target().y(),
                                  controller.com_target().z()};
  double push_end = -1.0;
  for (const auto& d : cfg.disturbances) {
    if (d.kind != Disturbance::Kind::platform_tilt) {
      push_end = std::max(push_end, d.start + d.duration);
    }
  }
  if (push_end >= 0.0 && !result.log.records.empty()) {
    const int n_rec = static_cast<int>(result.log.records.size());
    const int settle = detail::cycle_at(result.log, push_end + 3.0);
    double peak_ang = 0.0;
    for (const auto& r : result.log.records) {
      peak_ang = std::max(peak_ang, r.momentum.tail<3>().norm());
    }
    // Worst values from 3 s after the push to the end of the episode.
    double com_err_settled = std::numeric_limits<double>::infinity();
    double ang_settled = std::numeric_limits<double>::infinity();
    if (result.log.records[n_rec - 1].time >= push_end + 3.0 - 1e-9) {
      com_err_settled = 0.0;
      ang_settled = 0.0;
      for (int k = settle; k < n_rec; ++k) {
        const auto& r = result.log.records[k];
        com_err_settled = std::max(com_err_settled, (r.com - r.com_reference).norm());
        ang_settled = std::max(ang_settled, r.momentum.tail<3>().norm());
      }
    }
    result.metrics["push_end"] = push_end;
    result.metrics["com_error_after_3s"] = com_err_settled;
    result.metrics["angular_momentum_peak"] = peak_ang;
    result.metrics["angular_momentum_after_3s"] = ang_settled;
    const bool recovered = com_err_settled <= 0.02 &&
                           (peak_ang <= 1e-9 || ang_settled <= 0.10 * peak_ang);
    result.metrics["recovered"] = recovered;
    result.pass = result.pass && recovered;
  }
  detail::write_outputs(cfg, result, "balance");
  return result;
}

// Sinusoidal com tracking; pass bound is 5 mm RMSE after the ramp.
inline ScenarioResult run_tracking_scenario(const ExperimentConfig& cfg) {
  const RobotModel model = load_model(cfg.model_file);
  const RobotState initial = initial_state(model, cfg);
  TrackingController controller(model, initial, cfg.control);

  ScenarioResult result;
  result.log = run_episode(model, initial, controller, cfg.sim, cfg.episode,
                           cfg.disturbances, &result.summary);

  // RMSE over the steady part, once the reference envelope is fully open.
  double sq = 0.0;
  int count = 0;
  for (const auto& r : result.log.records) {
    if (r.time < cfg.control.tracking_ramp) continue;
    const double err = (r.com - r.com_reference).norm();
    sq += err * err;
    ++count;
  }
  const double rmse = count ? std::sqrt(sq / count) : std::numeric_limits<double>::infinity();
  result.metrics["tracking_rmse"] = rmse;
  result.metrics["steady_cycles"] = count;
  result.pass = !result.summary.failed && result.summary.audit_violation_cycles == 0 &&
                rmse <= 0.005;
  detail::write_outputs(cfg, result, "tracking");
  return result;
}

// Weight shift, unload, single support. Pass requires the phase sequence to
// complete, a gentle handoff (commanded swing normal at removal <= 1 N,
// torque steps across transitions <= 1 N m) and survival to the end.
inline ScenarioResult run_single_support_scenario(const ExperimentConfig& cfg) {
  const RobotModel model = load_model(cfg.model_file);
  const RobotState initial = initial_state(model, cfg);
  SingleSupportController controller(model, initial, cfg.control);
  const int swing = controller.swing_end_effector();

  ScenarioResult result;
  result.log = run_episode(model, initial, controller, cfg.sim, cfg.episode,
                           cfg.disturbances, &result.summary);

  int unload_cycle = -1, lift_cycle = -1, separation_cycle = -1;
  double swing_normal_at_lift = std::numeric_limits<double>::infinity();
  double max_torque_jump = 0.0;
  bool swing_touched = false;
  const auto& recs = result.log.records;
  for (int k = 0; k < static_cast<int>(recs.size()); ++k) {
    if (unload_cycle < 0 && recs[k].phase == "unloading") unload_cycle = k;
    if (lift_cycle < 0 && recs[k].phase == "single_support") {
      lift_cycle = k;
      // Last commanded normal force before the constraint is removed.
      if (k > 0) {
        const Vec6& w = recs[k - 1].commanded_wrench[swing];
        swing_normal_at_lift = w.head<3>().z();
      }
    }
    if (lift_cycle >= 0 && separation_cycle < 0 && !recs[k].contact_active[swing]) {
      separation_cycle = k;
    }
    if (separation_cycle >= 0 && recs[k].contact_active[swing]) swing_touched = true;
  }
  for (const int edge : {unload_cycle, lift_cycle}) {
    if (edge <= 0 || edge >= static_cast<int>(recs.size())) continue;
    const VecX jump = recs[edge].tau - recs[edge - 1].tau;
    max_torque_jump = std::max(max_torque_jump, jump.cwiseAbs().maxCoeff());
  }

  result.metrics["unload_cycle"] = unload_cycle;
  result.metrics["lift_cycle"] = lift_cycle;
  result.metrics["separation_cycle"] = separation_cycle;
  result.metrics["swing_normal_at_lift"] = swing_normal_at_lift;
  result.metrics["max_transition_torque_jump"] = max_torque_jump;
  result.metrics["swing_touched_after_lift"] = swing_touched;
  result.pass = !result.summary.failed && unload_cycle > 0 && lift_cycle > unload_cycle &&
                separation_cycle >= 0 && swing_normal_at_lift <= 1.0 &&
                max_torque_jump <= 1.0 && !swing_touched;
  detail::write_outputs(cfg, result, "single_support");
  return result;
}

inline ScenarioResult run_scenario(const ExperimentConfig& cfg) {
  if (cfg.controller == "balance") return run_balance_scenario(cfg);
  if (cfg.controller == "tracking") return run_tracking_scenario(cfg);
  if (cfg.controller == "single_support") return run_single_support_scenario(cfg);
  throw ExperimentError("unknown controller '" + cfg.controller + "'");
}

// Timing comparison of the full and reduced formulations over randomized
// stepping states of one model.
struct BenchResult {
  int cycles = 0;
  int full_dimension = 0;
  int reduced_dimension = 0;
  int full_equalities = 0;
  int reduced_equalities = 0;
  double full_min = 0.0, full_median = 0.0, full_p99 = 0.0, full_max = 0.0;
  double reduced_min = 0.0, reduced_median = 0.0, reduced_p99 = 0.0, reduced_max = 0.0;
  double torque_mismatch_max = 0.0;
  nlohmann::json to_json() const {
    nlohmann::json j;
    j["cycles"] = cycles;
    j["full"] = {{"dimension", full_dimension}, {"top_equalities", full_equalities},
                 {"min", full_min}, {"median", full_median}, {"p99", full_p99},
                 {"max", full_max}};
    j["reduced"] = {{"dimension", reduced_dimension}, {"top_equalities", reduced_equalities},
                    {"min", reduced_min}, {"median", reduced_median}, {"p99", reduced_p99},
                    {"max", reduced_max}};
    j["torque_mismatch_max"] = torque_mismatch_max;
    j["worst_case_ratio"] = full_max > 0 ? reduced_max / full_max : 0.0;
    return j;
  }
};

namespace detail {

struct TimingStats {
  double min, median, p99, max;
};

inline TimingStats stats_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  TimingStats s{};
  s.min = v.front();
  s.max = v.back();
  s.median = v[v.size() / 2];
  s.p99 = v[static_cast<std::size_t>(0.99 * (v.size() - 1))];
  return s;
}

}  // namespace detail

inline BenchResult run_reduction_bench(const ExperimentConfig& cfg) {
  const RobotModel model = load_model(cfg.model_file);
  const RobotState rest = initial_state(model, cfg);
  std::mt19937 rng(2024);
  std::normal_distribution<double> unit(0.0, 1.0);

  BenchResult out;
  out.cycles = cfg.bench_cycles;
  std::vector<double> t_full, t_reduced;
  t_full.reserve(cfg.bench_cycles);
  t_reduced.reserve(cfg.bench_cycles);

  for (int k = 0; k < cfg.bench_cycles; ++k) {
    RobotState s = rest;
    for (int j = 0; j < model.joint_count(); ++j) s.q[j] += 0.05 * unit(rng);
    for (int i = 0; i < s.v.size(); ++i) s.v[i] = 0.1 * unit(rng);
    const ContactSet contacts = ContactSet::all_active(model);
    const auto [full, reduced] = stepping_hierarchies(model, s, contacts, cfg.control);
    if (k == 0) {
      out.full_dimension = full.layout.dimension();
      out.reduced_dimension = reduced.layout.dimension();
      out.full_equalities = full.levels[0].equality_count();
      out.reduced_equalities = reduced.levels[0].equality_count();
    }

    auto t0 = std::chrono::steady_clock::now();
    const CascadeSolution sf = solve_hierarchy(full, cfg.episode.cascade);
    t_full.push_back(detail::seconds_since(t0));

    t0 = std::chrono::steady_clock::now();
    const CascadeSolution sr = solve_hierarchy(reduced, cfg.episode.cascade);
    t_reduced.push_back(detail::seconds_since(t0));

    const VecX tau_f = recover_torques(sf, full.context->torque_map);
    const VecX tau_r = recover_torques(sr, reduced.context->torque_map);
    const double scale = 1.0 + tau_f.cwiseAbs().maxCoeff();
    out.torque_mismatch_max = std::max(
        out.torque_mismatch_max, (tau_f - tau_r).cwiseAbs().maxCoeff() / scale);
  }

  const auto sf = detail::stats_of(t_full);
  const auto sr = detail::stats_of(t_reduced);
  out.full_min = sf.min;
  out.full_median = sf.median;
  out.full_p99 = sf.p99;
  out.full_max = sf.max;
  out.reduced_min = sr.min;
  out.reduced_median = sr.median;
  out.reduced_p99 = sr.p99;
  out.reduced_max = sr.max;

  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    std::ofstream js(cfg.output_dir + "/bench_reduction.json");
    js << out.to_json().dump(2) << "\n";
    std::ofstream csv(cfg.output_dir + "/bench_reduction.csv");
    csv << "cycle,full_seconds,reduced_seconds\n";
    csv.precision(17);
    for (int k = 0; k < cfg.bench_cycles; ++k) {
      csv << k << ',' << t_full[k] << ',' << t_reduced[k] << '\n';
    }
  }
  return out;
}

}  // namespace hidyn
