#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hidyn/cascade.hpp"
#include "hidyn/tasks.hpp"

namespace hidyn {

struct ControllerGains {
  Vec6 momentum_p = (Vec6() << 25, 25, 25, 0, 0, 0).finished();
  Vec6 momentum_d = (Vec6() << 10, 10, 10, 8, 8, 8).finished();
  Vec3 com_p = Vec3(40, 40, 40);
  Vec3 com_d = Vec3(12.6, 12.6, 12.6);
  PostureGains posture;
  double swing_p = 100.0;
  double swing_d = 20.0;
};

struct ControllerWeights {
  double momentum = 1.0;
  double com = 1.0;
  double posture = 0.1;
  double regularizer = 1e-3;
  // Swing tracking must dominate momentum and posture within its level, or
  // those tasks recruit the freed leg the instant the stance weld drops and
  // the torques step. Large enough that the foot follows its profile almost
  // exactly; small enough to stay well conditioned against weight 1 rows.
  double swing = 200.0;
};

struct ControllerConfig {
  double dt = 1e-3;
  Vec3 gravity = Vec3(0, 0, -9.81);
  double cop_margin = 0.01;
  Formulation formulation = Formulation::reduced;
  LimitOptions limits;
  ControllerGains gains;
  ControllerWeights weights;

  // Support-transfer phases.
  std::string swing_end_effector = "left_sole";
  double com_shift_duration = 1.2;
  double com_settle_duration = 0.4;
  double unload_duration = 0.4;
  double unload_force_threshold = 1.0;  // N on the swing foot
  int unload_hold_cycles = 50;
  double unload_timeout = 1.0;
  double swing_height = 0.10;
  double swing_duration = 0.8;

  // Tracked com excursion.
  double tracking_frequency = 0.3;
  double tracking_amp_forward = 0.02;
  double tracking_amp_vertical = 0.03;
  double tracking_ramp = 2.0;
};

// One control cycle's output: the hierarchy to solve, the contact set it
// assumes, and bookkeeping for logs.
struct ControlDecision {
  Hierarchy hierarchy;
  ContactSet contacts;
  std::string phase = "balance";
  Vec3 com_reference = Vec3::Zero();
  Vec3 com_measured = Vec3::Zero();
  Vec6 momentum_measured = Vec6::Zero();
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual ControlDecision decide(const RobotModel& model, const RobotState& state,
                                 double time, const CascadeSolution* previous) = 0;
};

struct ComReference {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();
};

namespace detail {

inline AffineTaskSet level_union(std::initializer_list<AffineTaskSet> parts) {
  AffineTaskSet out = *parts.begin();
  bool first = true;
  for (const auto& p : parts) {
    if (first) {
      first = false;
      continue;
    }
    out.append(p);
  }
  return out;
}

}  // namespace detail

// Two-level standing hierarchy: hard physics and feasibility rows above,
// momentum control with posture and wrench regularization below.
inline Hierarchy balance_hierarchy(const RobotModel& model, const RobotState& state,
                                   const ContactSet& contacts, const ControllerConfig& cfg,
                                   const Vec3& com_des, const Vec6& h_des, const Vec6& hdot_des,
                                   const PostureReference& posture,
                                   Formulation mode = Formulation::reduced) {
  const VariableLayout layout =
      mode == Formulation::reduced
          ? VariableLayout::reduced(model.joint_count(), contacts.active_count())
          : VariableLayout::full(model.joint_count(), contacts.active_count());
  DynamicsData data = DynamicsData::compute(model, state, contacts, cfg.gravity);
  auto ctx = CycleContext::make(model, state, data, layout, cfg.cop_margin, cfg.limits);
  const DynamicsData& d = ctx->data;

  Hierarchy h;
  h.layout = layout;
  h.context = ctx;

  AffineTaskSet top = build_dynamics_constraint(d, layout);
  top.append(build_contact_equality_rows(d, layout));
  top.append(build_limit_rows(model, state, ctx->torque_map, layout, cfg.limits));
  top.append(build_contact_force_rows(model, d, layout, cfg.cop_margin));
  h.levels.push_back(top);

  const Vec6 hdot_ref = momentum_pd_reference(d.centroidal.mass, d.centroidal.com, com_des,
                                              d.centroidal.momentum, h_des, hdot_des,
                                              cfg.gains.momentum_p, cfg.gains.momentum_d);
  AffineTaskSet low = build_momentum_task(d, hdot_ref, layout, MomentumForm::kinematic,
                                          false, cfg.weights.momentum);
  low.append(build_posture_task(model, state, posture, cfg.gains.posture, layout, true,
                                cfg.weights.posture));
  low.append(build_force_regularizer(d, layout, default_force_targets(d),
                                     cfg.weights.regularizer));
  h.levels.push_back(low);
  return h;
}

// Five-level tracking hierarchy; the com task uses the contact-force form of
// the momentum rate and sits strictly above posture.
inline Hierarchy tracking_hierarchy(const RobotModel& model, const RobotState& state,
                                    const ContactSet& contacts, const ControllerConfig& cfg,
                                    const ComReference& com_ref, const PostureReference& posture) {
  const VariableLayout layout =
      VariableLayout::reduced(model.joint_count(), contacts.active_count());
  DynamicsData data = DynamicsData::compute(model, state, contacts, cfg.gravity);
  auto ctx = CycleContext::make(model, state, data, layout, cfg.cop_margin, cfg.limits);
  const DynamicsData& d = ctx->data;

  Hierarchy h;
  h.layout = layout;
  h.context = ctx;

  LimitOptions torque_only = cfg.limits;
  torque_only.accel_rows = false;
  LimitOptions accel_only = cfg.limits;
  accel_only.torque_rows = false;

  AffineTaskSet l1 = build_dynamics_constraint(d, layout);
  l1.append(build_limit_rows(model, state, ctx->torque_map, layout, torque_only));
  h.levels.push_back(l1);

  AffineTaskSet l2 = build_contact_equality_rows(d, layout);
  l2.append(build_contact_force_rows(model, d, layout, cfg.cop_margin));
  l2.append(build_limit_rows(model, state, ctx->torque_map, layout, accel_only));
  h.levels.push_back(l2);

  const Vec3 com_vel = d.centroidal.momentum.head<3>() / d.centroidal.mass;
  const Vec3 acc_cmd = cfg.gains.com_p.cwiseProduct(com_ref.position - d.centroidal.com) +
                       cfg.gains.com_d.cwiseProduct(com_ref.velocity - com_vel) +
                       com_ref.acceleration;
  Vec6 hdot_ref = Vec6::Zero();
  hdot_ref.head<3>() = d.centroidal.mass * acc_cmd;
  h.levels.push_back(build_momentum_task(d, hdot_ref, layout, MomentumForm::force,
                                         true, cfg.weights.com));

  h.levels.push_back(build_posture_task(model, state, posture, cfg.gains.posture, layout,
                                        true, cfg.weights.posture));
  h.levels.push_back(build_force_regularizer(d, layout, default_force_targets(d),
                                             cfg.weights.regularizer));
  return h;
}

class BalanceController : public Controller {
 public:
  BalanceController(const RobotModel& model, const RobotState& initial,
                    const ControllerConfig& cfg)
      : cfg_(cfg) {
    const Kinematics kin = forward_kinematics(model, initial);
    com_des_ = center_of_mass(model, kin).position;
    posture_.q = initial.q;
    posture_.base_position = initial.base_position;
    posture_.base_orientation = initial.base_orientation;
  }

  ControlDecision decide(const RobotModel& model, const RobotState& state, double,
                         const CascadeSolution*) override {
    ControlDecision out;
    out.contacts = ContactSet::all_active(model);
    out.hierarchy = balance_hierarchy(model, state, out.contacts, cfg_, com_des_,
                                      Vec6::Zero(), Vec6::Zero(), posture_,
                                      cfg_.formulation);
    out.phase = "balance";
    out.com_reference = com_des_;
    out.com_measured = out.hierarchy.context->data.centroidal.com;
    out.momentum_measured = out.hierarchy.context->data.centroidal.momentum;
    return out;
  }

  const Vec3& com_target() const { return com_des_; }

 private:
  ControllerConfig cfg_;
  Vec3 com_des_ = Vec3::Zero();
  PostureReference posture_;
};

class TrackingController : public Controller {
 public:
  TrackingController(const RobotModel& model, const RobotState& initial,
                     const ControllerConfig& cfg)
      : cfg_(cfg) {
    const Kinematics kin = forward_kinematics(model, initial);
    com0_ = center_of_mass(model, kin).position;
    posture_.q = initial.q;
    posture_.base_position = initial.base_position;
    posture_.base_orientation = initial.base_orientation;
  }

  // Ramped two-axis sine around the initial com.
  ComReference reference(double time) const {
    const double w = 2.0 * M_PI * cfg_.tracking_frequency;
    const QuinticProfile env = quintic(time, cfg_.tracking_ramp);
    ComReference ref;
    const Vec3 amp(cfg_.tracking_amp_forward, 0.0, cfg_.tracking_amp_vertical);
    const Vec3 s = amp * std::sin(w * time);
    const Vec3 sd = amp * w * std::cos(w * time);
    const Vec3 sdd = -amp * w * w * std::sin(w * time);
    ref.position = com0_ + env.s * s;
    ref.velocity = env.sd * s + env.s * sd;
    ref.acceleration = env.sdd * s + 2.0 * env.sd * sd + env.s * sdd;
    return ref;
  }

  ControlDecision decide(const RobotModel& model, const RobotState& state, double time,
                         const CascadeSolution*) override {
    ControlDecision out;
    out.contacts = ContactSet::all_active(model);
    const ComReference ref = reference(time);
    out.hierarchy = tracking_hierarchy(model, state, out.contacts, cfg_, ref, posture_);
    out.phase = "tracking";
    out.com_reference = ref.position;
    out.com_measured = out.hierarchy.context->data.centroidal.com;
    out.momentum_measured = out.hierarchy.context->data.centroidal.momentum;
    return out;
  }

 private:
  ControllerConfig cfg_;
  Vec3 com0_ = Vec3::Zero();
  PostureReference posture_;
};

enum class SupportPhase { double_support, unloading, single_support };

inline const char* to_string(SupportPhase p) {
  switch (p) {
    case SupportPhase::double_support: return "double_support";
    case SupportPhase::unloading: return "unloading";
    case SupportPhase::single_support: return "single_support";
  }
  return "unknown";
}

struct PhaseState {
  SupportPhase phase = SupportPhase::double_support;
  double entered_at = 0.0;
  int hold_count = 0;
};

// Weight transfer onto one foot followed by lifting the other. The contact
// constraint on the swing foot is only dropped once its commanded normal
// force has stayed under a threshold, so force control and constraint
// switching stay consistent.
class SingleSupportController : public Controller {
 public:
  SingleSupportController(const RobotModel& model, const RobotState& initial,
                          const ControllerConfig& cfg)
      : cfg_(cfg) {
    swing_ee_ = model.end_effector_index(cfg.swing_end_effector);
    for (int i = 0; i < static_cast<int>(model.end_effectors.size()); ++i) {
      if (i != swing_ee_) stance_ee_ = i;
    }
    const Kinematics kin = forward_kinematics(model, initial);
    com_start_ = center_of_mass(model, kin).position;
    const Transform stance = end_effector_pose(model, kin, stance_ee_);
    com_target_ = com_start_;
    com_target_.head<2>() = stance.translation().head<2>();
    swing_start_ = end_effector_pose(model, kin, swing_ee_);
    posture_.q = initial.q;
    posture_.base_position = initial.base_position;
    posture_.base_orientation = initial.base_orientation;
  }

  const PhaseState& phase_state() const { return phase_; }
  int swing_end_effector() const { return swing_ee_; }

  ComReference com_reference(double time) const {
    ComReference ref;
    if (phase_.phase == SupportPhase::double_support) {
      const QuinticProfile p = quintic(time - phase_.entered_at, cfg_.com_shift_duration);
      const Vec3 delta = com_target_ - com_start_;
      ref.position = com_start_ + p.s * delta;
      ref.velocity = p.sd * delta;
      ref.acceleration = p.sdd * delta;
    } else {
      ref.position = com_target_;
    }
    return ref;
  }

  ControlDecision decide(const RobotModel& model, const RobotState& state, double time,
                         const CascadeSolution* previous) override {
    const SupportPhase before = phase_.phase;
    advance_phase(model, time, previous);
    if (before != SupportPhase::single_support &&
        phase_.phase == SupportPhase::single_support) {
      // Lift starts from wherever the foot actually is, not the initial pose.
      swing_start_ = end_effector_pose(model, forward_kinematics(model, state), swing_ee_);
      // While welded, the swing leg cannot follow its posture targets, so by
      // lift time they disagree with the actual joint angles. Re-basing them
      // on the current angles keeps the posture pull zero across the flip;
      // otherwise the torques jump the instant the weld rows disappear.
      for (int link = model.end_effectors[swing_ee_].link; link > 0;) {
        for (int j = 0; j < model.joint_count(); ++j) {
          if (model.joints[j].child_link == link) {
            posture_.q[j] = state.q[j];
            link = model.joints[j].parent_link;
            break;
          }
        }
      }
    }

    ControlDecision out;
    out.contacts = ContactSet::all_active(model);
    if (phase_.phase == SupportPhase::single_support) {
      out.contacts.set_active(swing_ee_, false);
    }
    out.phase = to_string(phase_.phase);

    const VariableLayout layout =
        VariableLayout::reduced(model.joint_count(), out.contacts.active_count());
    DynamicsData data = DynamicsData::compute(model, state, out.contacts, cfg_.gravity);
    auto ctx = CycleContext::make(model, state, data, layout, cfg_.cop_margin, cfg_.limits);
    const DynamicsData& d = ctx->data;

    Hierarchy h;
    h.layout = layout;
    h.context = ctx;

    LimitOptions torque_only = cfg_.limits;
    torque_only.accel_rows = false;
    LimitOptions accel_only = cfg_.limits;
    accel_only.torque_rows = false;

    AffineTaskSet l1 = build_dynamics_constraint(d, layout);
    l1.append(build_limit_rows(model, state, ctx->torque_map, layout, torque_only));
    h.levels.push_back(l1);

    // Feet stay welded to the ground in the commanded motion. These rows must
    // be hard: left soft they absorb least-squares residual, and the torques
    // then imply foot accelerations a rigid contact cannot perform, so the
    // realized forces drift away from the commanded ones.
    AffineTaskSet l2 = build_contact_equality_rows(d, layout);
    l2.append(build_contact_force_rows(model, d, layout, cfg_.cop_margin));
    l2.append(build_limit_rows(model, state, ctx->torque_map, layout, accel_only));
    h.levels.push_back(l2);

    const ComReference ref = com_reference(time);
    Vec6 h_des = Vec6::Zero();
    h_des.head<3>() = d.centroidal.mass * ref.velocity;
    Vec6 hdot_des = Vec6::Zero();
    hdot_des.head<3>() = d.centroidal.mass * ref.acceleration;
    const Vec6 hdot_ref = momentum_pd_reference(d.centroidal.mass, d.centroidal.com,
                                                ref.position, d.centroidal.momentum, h_des,
                                                hdot_des, cfg_.gains.momentum_p,
                                                cfg_.gains.momentum_d);
    AffineTaskSet l3 = build_momentum_task(d, hdot_ref, layout, MomentumForm::kinematic,
                                           false, cfg_.weights.momentum);
    if (phase_.phase == SupportPhase::single_support) {
      l3.append(swing_task(model, state, d, layout, time));
    }
    l3.append(build_posture_task(model, state, posture_, cfg_.gains.posture, layout,
                                 false, cfg_.weights.posture));
    h.levels.push_back(l3);

    AffineTaskSet reg = build_force_regularizer(d, layout, force_targets(d, ref.position, time),
                                                cfg_.weights.regularizer);
    if (phase_.phase == SupportPhase::unloading) {
      // The swing target (zero wrench) must win over the stance target, so
      // any force the momentum level still demands lands on the stance foot.
      // Raised gradually to keep the redistribution, and the torques that
      // realize it, continuous.
      const double s = clamp((time - phase_.entered_at) / cfg_.unload_duration, 0.0, 1.0);
      const double boost = 1.0 + 99.0 * s * s * (3.0 - 2.0 * s);
      for (int slot = 0; slot < static_cast<int>(d.active.size()); ++slot) {
        if (d.active[slot] == swing_ee_) reg.eq_weight.segment<6>(6 * slot) *= boost;
      }
    }
    h.levels.push_back(reg);
    out.hierarchy = std::move(h);
    out.com_reference = ref.position;
    out.com_measured = ctx->data.centroidal.com;
    out.momentum_measured = ctx->data.centroidal.momentum;
    last_context_ = ctx;
    return out;
  }

 private:
  void advance_phase(const RobotModel& model, double time, const CascadeSolution* previous) {
    if (!started_) {
      started_ = true;
      phase_.entered_at = time;
    }
    const double elapsed = time - phase_.entered_at;
    switch (phase_.phase) {
      case SupportPhase::double_support:
        if (elapsed >= cfg_.com_shift_duration + cfg_.com_settle_duration) {
          enter(SupportPhase::unloading, time);
        }
        break;
      case SupportPhase::unloading: {
        double predicted = std::numeric_limits<double>::max();
        if (previous && previous->y.size()) {
          predicted = swing_normal_force(model, *previous);
        }
        if (predicted <= cfg_.unload_force_threshold) {
          ++phase_.hold_count;
        } else {
          phase_.hold_count = 0;
        }
        if (phase_.hold_count >= cfg_.unload_hold_cycles || elapsed >= cfg_.unload_timeout) {
          enter(SupportPhase::single_support, time);
        }
        break;
      }
      case SupportPhase::single_support:
        break;
    }
  }

  void enter(SupportPhase next, double time) {
    phase_.phase = next;
    phase_.entered_at = time;
    phase_.hold_count = 0;
  }

  // Commanded swing-foot normal force of the previous cycle, in the foot
  // frame. The previous cycle had both contacts active.
  double swing_normal_force(const RobotModel&, const CascadeSolution& previous) const {
    if (!last_context_) return std::numeric_limits<double>::max();
    const CycleContext& ctx = *last_context_;
    for (int slot = 0; slot < static_cast<int>(ctx.data.active.size()); ++slot) {
      if (ctx.data.active[slot] != swing_ee_) continue;
      const Vec6 wrench = previous.y.segment<6>(ctx.layout.force_offset() + 6 * slot);
      return ctx.data.contact_pose[slot].linear().col(2).dot(wrench.head<3>());
    }
    return std::numeric_limits<double>::max();
  }

  // Lever-rule vertical force split between the feet, ramped to zero on the
  // swing side while unloading. Each foot's torque target points its center
  // of pressure at the measured com, so any split carries zero net moment
  // and the last level can reach the swing target exactly.
  VecX force_targets(const DynamicsData& d, const Vec3&, double time) const {
    VecX targets = default_force_targets(d);
    if (static_cast<int>(d.active.size()) != 2) return targets;
    int swing_slot = -1, stance_slot = -1;
    for (int slot = 0; slot < 2; ++slot) {
      (d.active[slot] == swing_ee_ ? swing_slot : stance_slot) = slot;
    }
    const Vec3 com = d.centroidal.com;
    const double y_swing = d.contact_pose[swing_slot].translation().y();
    const double y_stance = d.contact_pose[stance_slot].translation().y();
    const double denom = y_stance - y_swing;
    double swing_share = 0.5;
    if (std::abs(denom) > 1e-6) {
      swing_share = clamp(1.0 - (com.y() - y_swing) / denom, 0.0, 1.0);
    }
    if (phase_.phase == SupportPhase::unloading) {
      const double ramp = clamp(1.0 - (time - phase_.entered_at) / cfg_.unload_duration, 0.0, 1.0);
      swing_share *= ramp;
    }
    const double total = -d.centroidal.mass * d.gravity.z();
    targets.setZero();
    const double share[2] = {swing_share, 1.0 - swing_share};
    const int slot_of[2] = {swing_slot, stance_slot};
    for (int k = 0; k < 2; ++k) {
      const int slot = slot_of[k];
      const Vec3 p = d.contact_pose[slot].translation();
      const double fz = share[k] * total;
      targets[6 * slot + 2] = fz;
      targets[6 * slot + 3] = fz * (com.y() - p.y());
      targets[6 * slot + 4] = -fz * (com.x() - p.x());
    }
    return targets;
  }

  AffineTaskSet swing_task(const RobotModel& model, const RobotState& state,
                           const DynamicsData& d, const VariableLayout& layout,
                           double time) const {
    const QuinticProfile p = quintic(time - phase_.entered_at, cfg_.swing_duration);
    Transform target = swing_start_;
    target.translation().z() += p.s * cfg_.swing_height;
    const Vec3 vel_ref(0, 0, p.sd * cfg_.swing_height);
    const Vec3 acc_ref(0, 0, p.sdd * cfg_.swing_height);

    const Transform pose = end_effector_pose(model, d.kin, swing_ee_);
    const MatX jac = end_effector_jacobian(model, d.kin, swing_ee_);
    const Vec6 twist = jac * state.v;
    const double kp = cfg_.gains.swing_p;
    const double kd = cfg_.gains.swing_d;
    Vec6 accel;
    accel.head<3>() = kp * (target.translation() - pose.translation()) +
                      kd * (vel_ref - twist.head<3>()) + acc_ref;
    accel.tail<3>() = kp * orientation_error(target.linear(), pose.linear()) -
                      kd * twist.tail<3>();
    return build_motion_task(jac, end_effector_drift(model, state, swing_ee_), accel,
                             layout, cfg_.weights.swing);
  }

  ControllerConfig cfg_;
  int swing_ee_ = 0;
  int stance_ee_ = 0;
  bool started_ = false;
  PhaseState phase_;
  Vec3 com_start_ = Vec3::Zero();
  Vec3 com_target_ = Vec3::Zero();
  Transform swing_start_ = Transform::Identity();
  PostureReference posture_;
  std::shared_ptr<const CycleContext> last_context_;
};

// Five-level stepping hierarchy in both formulations from one state, for
// measuring what the variable reduction buys.
inline std::pair<Hierarchy, Hierarchy> stepping_hierarchies(
    const RobotModel& model, const RobotState& state, const ContactSet& contacts,
    const ControllerConfig& cfg) {
  const Kinematics kin = forward_kinematics(model, state);

  std::pair<Hierarchy, Hierarchy> out;
  for (int pass = 0; pass < 2; ++pass) {
    const VariableLayout layout =
        pass == 0 ? VariableLayout::full(model.joint_count(), contacts.active_count())
                  : VariableLayout::reduced(model.joint_count(), contacts.active_count());
    DynamicsData data = DynamicsData::compute(model, state, contacts, cfg.gravity);
    auto ctx = CycleContext::make(model, state, data, layout, cfg.cop_margin, cfg.limits);
    const DynamicsData& d = ctx->data;

    Hierarchy h;
    h.layout = layout;
    h.context = ctx;

    LimitOptions torque_only = cfg.limits;
    torque_only.accel_rows = false;
    LimitOptions accel_only = cfg.limits;
    accel_only.torque_rows = false;

    AffineTaskSet l1 = build_dynamics_constraint(d, layout);
    l1.append(build_limit_rows(model, state, ctx->torque_map, layout, torque_only));
    h.levels.push_back(l1);

    AffineTaskSet l2 = build_contact_equality_rows(d, layout);
    l2.append(build_contact_force_rows(model, d, layout, cfg.cop_margin));
    l2.append(build_limit_rows(model, state, ctx->torque_map, layout, accel_only));
    h.levels.push_back(l2);

    // Hold the com: zero linear momentum rate.
    AffineTaskSet l3 = build_momentum_task(d, Vec6::Zero(), layout, MomentumForm::force,
                                           true, cfg.weights.com);
    for (int ee = 0; ee < static_cast<int>(model.end_effectors.size()); ++ee) {
      if (contacts.is_active(ee)) continue;
      const MatX jac = end_effector_jacobian(model, kin, ee);
      const Vec6 twist = jac * state.v;
      Vec6 accel = -cfg.gains.swing_d * twist;  // hold the free foot still
      l3.append(build_motion_task(jac, end_effector_drift(model, state, ee), accel, layout,
                                  cfg.weights.swing));
    }
    h.levels.push_back(l3);

    PostureReference posture;
    posture.q = state.q;
    posture.base_position = state.base_position;
    posture.base_orientation = state.base_orientation;
    h.levels.push_back(build_posture_task(model, state, posture, cfg.gains.posture, layout,
                                          true, cfg.weights.posture));
    h.levels.push_back(build_force_regularizer(d, layout, default_force_targets(d),
                                               cfg.weights.regularizer));
    (pass == 0 ? out.first : out.second) = std::move(h);
  }
  return out;
}

}  // namespace hidyn
