#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hidyn/controllers.hpp"
#include "hidyn/dynamics.hpp"

namespace hidyn {

struct SimConfig {
  double dt = 1e-3;
  Vec3 gravity = Vec3(0, 0, -9.81);
  double ground_height = 0.0;
  double activation_depth = 1e-6;      // penetration that (re)engages a contact
  double release_force = 1e-6;         // normal force below which a contact lets go
  double baumgarte_frequency = 5.0;    // Hz, constraint stabilization
};

struct Disturbance {
  enum class Kind { impulse, constant, platform_tilt };
  Kind kind = Kind::impulse;
  std::string link;                    // empty targets the base link
  Vec6 wrench = Vec6::Zero();          // impulse: total [N s]; constant: [N]
  double start = 0.0;
  double duration = 0.05;
  double tilt_amplitude = 0.0;         // rad, platform_tilt only
  double tilt_frequency = 0.5;         // Hz
  int tilt_axis = 0;                   // 0 = x, 1 = y
};

struct SimContact {
  int end_effector = -1;
  bool active = false;
  Transform anchor = Transform::Identity();
};

// Rigid-body simulation with hard contact constraints solved at the
// acceleration level, unilateral release, and impulse-based activation.
class Simulator {
 public:
  Simulator(const RobotModel& model, const SimConfig& cfg, const RobotState& initial)
      : model_(model), cfg_(cfg), state_(initial) {
    for (int ee = 0; ee < static_cast<int>(model_.end_effectors.size()); ++ee) {
      contacts_.push_back({ee, false, Transform::Identity()});
    }
    const Kinematics kin = forward_kinematics(model_, state_);
    for (auto& c : contacts_) {
      const Transform pose = end_effector_pose(model_, kin, c.end_effector);
      if (lowest_corner(pose, c.end_effector) <= cfg_.ground_height + 1e-6) {
        engage(c, pose);
      }
    }
  }

  struct StepOutput {
    std::vector<Vec6> wrench;   // per end effector, world at frame origin
    bool ok = true;
  };

  const RobotState& state() const { return state_; }
  const RobotModel& model() const { return model_; }
  const std::vector<SimContact>& contacts() const { return contacts_; }

  ContactSet contact_set() const {
    ContactSet set;
    for (const auto& c : contacts_) set.contacts.push_back({c.end_effector, c.active});
    return set;
  }

  bool contact_active(int ee) const { return contacts_[ee].active; }

  StepOutput step(const VecX& joint_torques, double time,
                  const std::vector<Disturbance>& disturbances) {
    StepOutput out;
    out.wrench.assign(model_.end_effectors.size(), Vec6::Zero());

    const Vec3 gravity = effective_gravity(time, disturbances);
    const MatX m = mass_matrix(model_, state_);
    const VecX bias = nonlinear_effects(model_, state_, gravity);
    const Kinematics kin = forward_kinematics(model_, state_);

    VecX applied = VecX::Zero(model_.velocity_dim());
    applied.head(model_.joint_count()) = joint_torques;
    for (const auto& dist : disturbances) {
      if (dist.kind == Disturbance::Kind::platform_tilt) continue;
      // Fractional overlap of this step with the window keeps the delivered
      // impulse exact even when the window is not grid aligned.
      const double overlap = std::min(time + cfg_.dt, dist.start + dist.duration) -
                             std::max(time, dist.start);
      if (overlap <= 0.0) continue;
      const double scale = overlap / cfg_.dt;
      const Vec6 w = dist.kind == Disturbance::Kind::impulse
                         ? Vec6(scale * dist.wrench / std::max(dist.duration, 1e-9))
                         : Vec6(scale * dist.wrench);
      const int link = dist.link.empty() ? 0 : model_.link_index(dist.link);
      const MatX jac = point_frame_jacobian(model_, kin, link,
                                            kin.link_pose[link].translation());
      applied += jac.transpose() * w;
    }

    const Eigen::LDLT<MatX> mass_ldlt(m);
    const VecX free_acc = mass_ldlt.solve(applied - bias);

    // Constraint solve with unilateral release of the most negative normal.
    std::vector<int> active = active_indices();
    std::vector<char> just_released(contacts_.size(), 0);
    VecX accel = free_acc;
    VecX lambda;
    const double w_stab = 2.0 * M_PI * cfg_.baumgarte_frequency;
    for (int round = 0; round <= static_cast<int>(active.size()); ++round) {
      if (active.empty()) {
        accel = free_acc;
        lambda.resize(0);
        break;
      }
      ContactSet set = active_contact_set(active);
      const MatX jc = contact_jacobian(model_, kin, set);
      const VecX drift = contact_drift(model_, state_, set);
      VecX rhs = -drift;
      for (int slot = 0; slot < static_cast<int>(active.size()); ++slot) {
        const SimContact& c = contacts_[active[slot]];
        const Transform pose = end_effector_pose(model_, kin, c.end_effector);
        Vec6 err;
        err.head<3>() = pose.translation() - c.anchor.translation();
        err.tail<3>() = rotation_log(pose.linear() * c.anchor.linear().transpose());
        rhs.segment<6>(6 * slot) -= w_stab * w_stab * err;
      }
      rhs -= 2.0 * w_stab * (jc * state_.v);

      const MatX minv_jt = mass_ldlt.solve(jc.transpose());
      MatX schur = jc * minv_jt;
      schur.diagonal().array() += 1e-9 * std::max(schur.trace() / schur.rows(), 1.0);
      lambda = schur.ldlt().solve(rhs - jc * free_acc);

      int release = -1;
      double most_negative = -cfg_.release_force;
      for (int slot = 0; slot < static_cast<int>(active.size()); ++slot) {
        const Transform pose = end_effector_pose(model_, kin, contacts_[active[slot]].end_effector);
        const double fz = pose.linear().col(2).dot(lambda.segment<3>(6 * slot));
        if (fz < most_negative) {
          most_negative = fz;
          release = slot;
        }
      }
      if (release < 0) {
        accel = free_acc + minv_jt * lambda;
        for (int slot = 0; slot < static_cast<int>(active.size()); ++slot) {
          out.wrench[contacts_[active[slot]].end_effector] = lambda.segment<6>(6 * slot);
        }
        break;
      }
      contacts_[active[release]].active = false;
      just_released[active[release]] = 1;
      active.erase(active.begin() + release);
    }

    state_.v += cfg_.dt * accel;
    state_ = integrate_state(model_, state_, state_.v, cfg_.dt);

    // Touchdown: engage, then cancel the constraint-frame velocities with an
    // impulse that is consistent with the mass matrix.
    const Kinematics kin_next = forward_kinematics(model_, state_);
    bool touched = false;
    for (auto& c : contacts_) {
      if (c.active) continue;
      // A contact dropped this step sits within the weld's stabilization
      // error of the ground; give it one step to separate before the
      // penetration test applies again.
      if (just_released[c.end_effector]) continue;
      const Transform pose = end_effector_pose(model_, kin_next, c.end_effector);
      if (lowest_corner(pose, c.end_effector) < cfg_.ground_height - cfg_.activation_depth) {
        engage(c, pose);
        touched = true;
      }
    }
    if (touched) {
      ContactSet set = active_contact_set(active_indices());
      const MatX jc = contact_jacobian(model_, kin_next, set);
      const MatX m_next = mass_matrix(model_, state_);
      const Eigen::LDLT<MatX> ldlt_next(m_next);
      const MatX minv_jt = ldlt_next.solve(jc.transpose());
      MatX schur = jc * minv_jt;
      schur.diagonal().array() += 1e-9 * std::max(schur.trace() / schur.rows(), 1.0);
      state_.v -= minv_jt * schur.ldlt().solve(jc * state_.v);
    }

    out.ok = state_.v.allFinite() && state_.q.allFinite();
    return out;
  }

 private:
  std::vector<int> active_indices() const {
    std::vector<int> idx;
    for (const auto& c : contacts_) {
      if (c.active) idx.push_back(c.end_effector);
    }
    return idx;
  }

  ContactSet active_contact_set(const std::vector<int>& idx) const {
    ContactSet set;
    for (const auto& c : contacts_) set.contacts.push_back({c.end_effector, false});
    for (int ee : idx) set.set_active(ee, true);
    return set;
  }

  double lowest_corner(const Transform& pose, int ee) const {
    const SupportPatch& p = model_.end_effectors[ee].patch;
    double z = std::numeric_limits<double>::max();
    for (const double x : {p.x_plus, -p.x_minus}) {
      for (const double y : {p.y_plus, -p.y_minus}) {
        z = std::min(z, (pose * Vec3(x, y, 0.0)).z());
      }
    }
    return z;
  }

  // Anchor at ground level with roll and pitch removed.
  void engage(SimContact& c, const Transform& pose) {
    c.active = true;
    const double yaw = std::atan2(pose.linear()(1, 0), pose.linear()(0, 0));
    c.anchor = Transform::Identity();
    c.anchor.linear() = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
    c.anchor.translation() = pose.translation();
    c.anchor.translation().z() = cfg_.ground_height;
  }

  Vec3 effective_gravity(double time, const std::vector<Disturbance>& disturbances) const {
    Vec3 g = cfg_.gravity;
    for (const auto& dist : disturbances) {
      if (dist.kind != Disturbance::Kind::platform_tilt) continue;
      if (time < dist.start || time >= dist.start + dist.duration) continue;
      // Ground tilt shows up as a rotated gravity vector; the ground plane
      // itself stays put, which is accurate to first order in the tilt.
      const double angle =
          dist.tilt_amplitude * std::sin(2.0 * M_PI * dist.tilt_frequency * (time - dist.start));
      const Vec3 axis = dist.tilt_axis == 0 ? Vec3::UnitX() : Vec3::UnitY();
      g = Eigen::AngleAxisd(angle, axis) * g;
    }
    return g;
  }

  RobotModel model_;
  SimConfig cfg_;
  RobotState state_;
  std::vector<SimContact> contacts_;
};

// Raises the base so the lowest support-patch corner rests exactly on the
// ground.
inline RobotState settle_on_ground(const RobotModel& model, RobotState state,
                                   double ground_height = 0.0) {
  const Kinematics kin = forward_kinematics(model, state);
  double lowest = std::numeric_limits<double>::max();
  for (int ee = 0; ee < static_cast<int>(model.end_effectors.size()); ++ee) {
    const Transform pose = end_effector_pose(model, kin, ee);
    const SupportPatch& p = model.end_effectors[ee].patch;
    for (const double x : {p.x_plus, -p.x_minus}) {
      for (const double y : {p.y_plus, -p.y_minus}) {
        lowest = std::min(lowest, (pose * Vec3(x, y, 0.0)).z());
      }
    }
  }
  state.base_position.z() += ground_height - lowest;
  return state;
}

struct CycleRecord {
  double time = 0.0;
  std::string phase;
  VecX q;
  Vec3 base_position = Vec3::Zero();
  Quat base_orientation = Quat::Identity();
  VecX v;
  VecX accel_cmd;
  VecX tau;
  std::vector<Vec6> contact_wrench;      // simulated, per end effector
  std::vector<Vec6> commanded_wrench;    // from the solved decision vector
  std::vector<char> contact_active;      // simulated
  std::vector<char> controller_active;   // what the controller assumed
  Vec3 com = Vec3::Zero();
  Vec3 com_reference = Vec3::Zero();
  Vec6 momentum = Vec6::Zero();
  double top_slack = 0.0;
  double solve_seconds = 0.0;
  bool solver_feasible = true;
  int audit_violations = 0;
  std::map<std::string, double> audit_worst;
};

struct EpisodeOptions {
  double duration = 5.0;
  CascadeOptions cascade;
  AuditOptions audit;
  bool audit_cycles = true;
  double fall_com_fraction = 0.5;   // failure when the com drops this low
  double fall_tilt = 1.0;           // rad
};

struct EpisodeSummary {
  bool failed = false;
  int first_failure_cycle = -1;
  std::string failure_reason;
  int cycles = 0;
  double com_rmse = 0.0;
  double com_error_max = 0.0;
  int audit_violation_cycles = 0;
  std::map<std::string, double> audit_worst;
  double solve_seconds_min = 0.0;
  double solve_seconds_median = 0.0;
  double solve_seconds_p99 = 0.0;
  double solve_seconds_max = 0.0;
};

struct EpisodeLog {
  std::vector<CycleRecord> records;
  int joint_count = 0;
  int end_effector_count = 0;

  EpisodeSummary summarize() const {
    EpisodeSummary s;
    s.cycles = static_cast<int>(records.size());
    double sq = 0.0;
    std::vector<double> times;
    times.reserve(records.size());
    for (const auto& r : records) {
      const double err = (r.com - r.com_reference).norm();
      sq += err * err;
      s.com_error_max = std::max(s.com_error_max, err);
      if (r.audit_violations > 0) ++s.audit_violation_cycles;
      for (const auto& [name, worst] : r.audit_worst) {
        auto it = s.audit_worst.find(name);
        if (it == s.audit_worst.end() || worst > it->second) s.audit_worst[name] = worst;
      }
      times.push_back(r.solve_seconds);
    }
    if (!records.empty()) {
      s.com_rmse = std::sqrt(sq / records.size());
      std::sort(times.begin(), times.end());
      s.solve_seconds_min = times.front();
      s.solve_seconds_max = times.back();
      s.solve_seconds_median = times[times.size() / 2];
      s.solve_seconds_p99 = times[static_cast<size_t>(0.99 * (times.size() - 1))];
    }
    return s;
  }

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    out << "time,phase";
    for (int j = 0; j < joint_count; ++j) out << ",q" << j;
    out << ",base_x,base_y,base_z,quat_w,quat_x,quat_y,quat_z";
    for (int j = 0; j < joint_count + 6; ++j) out << ",v" << j;
    for (int j = 0; j < joint_count + 6; ++j) out << ",acc_cmd" << j;
    for (int j = 0; j < joint_count; ++j) out << ",tau" << j;
    for (int e = 0; e < end_effector_count; ++e) {
      out << ",ee" << e << "_active,ee" << e << "_ctrl_active";
      for (const char* c : {"fx", "fy", "fz", "tx", "ty", "tz"}) out << ",ee" << e << "_" << c;
      for (const char* c : {"fx", "fy", "fz", "tx", "ty", "tz"})
        out << ",ee" << e << "_cmd_" << c;
    }
    out << ",com_x,com_y,com_z,com_ref_x,com_ref_y,com_ref_z";
    out << ",h_lin_x,h_lin_y,h_lin_z,h_ang_x,h_ang_y,h_ang_z";
    out << ",top_slack,solve_seconds,solver_feasible,audit_violations\n";
    out.precision(17);
    for (const auto& r : records) {
      out << r.time << ',' << r.phase;
      for (int j = 0; j < joint_count; ++j) out << ',' << r.q[j];
      out << ',' << r.base_position.x() << ',' << r.base_position.y() << ',' << r.base_position.z();
      out << ',' << r.base_orientation.w() << ',' << r.base_orientation.x() << ','
          << r.base_orientation.y() << ',' << r.base_orientation.z();
      for (int j = 0; j < joint_count + 6; ++j) out << ',' << r.v[j];
      for (int j = 0; j < joint_count + 6; ++j) out << ',' << r.accel_cmd[j];
      for (int j = 0; j < joint_count; ++j) out << ',' << r.tau[j];
      for (int e = 0; e < end_effector_count; ++e) {
        out << ',' << int(r.contact_active[e]) << ',' << int(r.controller_active[e]);
        for (int k = 0; k < 6; ++k) out << ',' << r.contact_wrench[e][k];
        for (int k = 0; k < 6; ++k) out << ',' << r.commanded_wrench[e][k];
      }
      for (int k = 0; k < 3; ++k) out << ',' << r.com[k];
      for (int k = 0; k < 3; ++k) out << ',' << r.com_reference[k];
      for (int k = 0; k < 6; ++k) out << ',' << r.momentum[k];
      out << ',' << r.top_slack << ',' << r.solve_seconds << ',' << int(r.solver_feasible)
          << ',' << r.audit_violations << '\n';
    }
  }
};

// Closed loop: controller decision, cascade solve, torque recovery, audit,
// simulation step, repeat at the control rate.
inline EpisodeLog run_episode(const RobotModel& model, const RobotState& initial,
                              Controller& controller, const SimConfig& sim_cfg,
                              const EpisodeOptions& opts,
                              const std::vector<Disturbance>& disturbances,
                              EpisodeSummary* summary_out = nullptr) {
  EpisodeLog log;
  log.joint_count = model.joint_count();
  log.end_effector_count = static_cast<int>(model.end_effectors.size());

  Simulator sim(model, sim_cfg, initial);
  const int cycles = static_cast<int>(opts.duration / sim_cfg.dt + 0.5);
  const double com_z0 = center_of_mass(model, forward_kinematics(model, initial)).position.z();

  CascadeSolution previous;
  bool have_previous = false;
  bool failed = false;
  int failure_cycle = -1;
  std::string failure_reason;

  for (int k = 0; k < cycles; ++k) {
    const double t = k * sim_cfg.dt;
    ControlDecision decision =
        controller.decide(model, sim.state(), t, have_previous ? &previous : nullptr);
    const auto t0 = std::chrono::steady_clock::now();
    CascadeSolution solution = solve_hierarchy(decision.hierarchy, opts.cascade);
    const double solve_seconds = detail::seconds_since(t0);
    const VecX tau = recover_torques(solution, decision.hierarchy.context->torque_map);

    CycleRecord rec;
    rec.time = t;
    rec.phase = decision.phase;
    rec.q = sim.state().q;
    rec.base_position = sim.state().base_position;
    rec.base_orientation = sim.state().base_orientation;
    rec.v = sim.state().v;
    rec.accel_cmd = solution.y.head(model.velocity_dim());
    rec.tau = tau;
    rec.com = decision.com_measured;
    rec.com_reference = decision.com_reference;
    rec.momentum = decision.momentum_measured;
    rec.solve_seconds = solve_seconds;
    rec.solver_feasible = solution.feasible;
    if (!solution.levels.empty()) {
      const auto& top = solution.levels.front();
      if (top.eq_slack.size()) rec.top_slack = top.eq_slack.lpNorm<Eigen::Infinity>();
      if (top.ineq_slack.size()) {
        rec.top_slack = std::max(rec.top_slack, top.ineq_slack.lpNorm<Eigen::Infinity>());
      }
    }
    if (opts.audit_cycles) {
      const AuditReport report = audit_solution(decision.hierarchy, solution, opts.audit);
      for (const auto& c : report.checks) {
        rec.audit_worst[c.name] = c.worst;
        if (!c.pass) ++rec.audit_violations;
      }
    }
    rec.controller_active.assign(log.end_effector_count, 0);
    for (const auto& c : decision.contacts.contacts) {
      rec.controller_active[c.end_effector] = c.active ? 1 : 0;
    }
    rec.commanded_wrench.assign(log.end_effector_count, Vec6::Zero());
    if (decision.hierarchy.context) {
      const CycleContext& ctx = *decision.hierarchy.context;
      for (int slot = 0; slot < static_cast<int>(ctx.data.active.size()); ++slot) {
        rec.commanded_wrench[ctx.data.active[slot]] =
            solution.y.segment<6>(ctx.layout.force_offset() + 6 * slot);
      }
    }

    Simulator::StepOutput step = sim.step(tau, t, disturbances);
    rec.contact_wrench = step.wrench;
    rec.contact_active.assign(log.end_effector_count, 0);
    for (int e = 0; e < log.end_effector_count; ++e) {
      rec.contact_active[e] = sim.contact_active(e) ? 1 : 0;
    }
    log.records.push_back(std::move(rec));

    previous = std::move(solution);
    have_previous = true;

    if (!step.ok) {
      failed = true;
      failure_reason = "simulation produced non-finite state";
    } else {
      const Vec3 com = center_of_mass(model, forward_kinematics(model, sim.state())).position;
      const double tilt = std::abs(Eigen::AngleAxisd(sim.state().base_orientation).angle());
      if (com.z() < opts.fall_com_fraction * com_z0) {
        failed = true;
        failure_reason = "center of mass dropped";
      } else if (tilt > opts.fall_tilt) {
        failed = true;
        failure_reason = "base tilted past limit";
      }
    }
    if (failed) {
      failure_cycle = k;
      break;
    }
  }

  if (summary_out) {
    *summary_out = log.summarize();
    summary_out->failed = failed;
    summary_out->first_failure_cycle = failure_cycle;
    summary_out->failure_reason = failure_reason;
  }
  return log;
}

}  // namespace hidyn
