#pragma once

#include <memory>
#include <vector>

#include "hidyn/dynamics.hpp"
#include "hidyn/model.hpp"

namespace hidyn {

enum class Formulation { full, reduced };

// Decision vector layout. Reduced: y = [accel; contact wrenches]. Full:
// y = [accel; contact wrenches; joint torques] with the torque recovery rows
// kept as explicit constraints instead.
struct VariableLayout {
  int joints = 0;
  int contact_count = 0;
  Formulation mode = Formulation::reduced;

  static VariableLayout reduced(int joints, int contacts) {
    return {joints, contacts, Formulation::reduced};
  }
  static VariableLayout full(int joints, int contacts) {
    return {joints, contacts, Formulation::full};
  }

  int accel_dim() const { return joints + 6; }
  int force_dim() const { return 6 * contact_count; }
  int accel_offset() const { return 0; }
  int force_offset() const { return joints + 6; }
  int torque_offset() const { return joints + 6 + force_dim(); }
  int dimension() const {
    return accel_dim() + force_dim() + (mode == Formulation::full ? joints : 0);
  }
};

// Stacked affine rows over a decision vector y:
//   equalities   eq_matrix y + eq_vector = 0 (relaxed by a weighted slack)
//   inequalities ineq_matrix y + ineq_vector <= 0 (relaxed likewise)
// Weights are per-row diagonal entries, all positive.
struct AffineTaskSet {
  int dimension = 0;
  MatX eq_matrix;
  VecX eq_vector;
  VecX eq_weight;
  MatX ineq_matrix;
  VecX ineq_vector;
  VecX ineq_weight;

  static AffineTaskSet empty(int dim) {
    AffineTaskSet t;
    t.dimension = dim;
    t.eq_matrix.resize(0, dim);
    t.eq_vector.resize(0);
    t.eq_weight.resize(0);
    t.ineq_matrix.resize(0, dim);
    t.ineq_vector.resize(0);
    t.ineq_weight.resize(0);
    return t;
  }

  int equality_count() const { return static_cast<int>(eq_matrix.rows()); }
  int inequality_count() const { return static_cast<int>(ineq_matrix.rows()); }

  void add_equalities(const MatX& rows, const VecX& vec, double weight = 1.0) {
    const int old = equality_count();
    const int add = static_cast<int>(rows.rows());
    eq_matrix.conservativeResize(old + add, dimension);
    eq_vector.conservativeResize(old + add);
    eq_weight.conservativeResize(old + add);
    eq_matrix.bottomRows(add) = rows;
    eq_vector.tail(add) = vec;
    eq_weight.tail(add).setConstant(weight);
  }

  void add_inequalities(const MatX& rows, const VecX& vec, double weight = 1.0) {
    const int old = inequality_count();
    const int add = static_cast<int>(rows.rows());
    ineq_matrix.conservativeResize(old + add, dimension);
    ineq_vector.conservativeResize(old + add);
    ineq_weight.conservativeResize(old + add);
    ineq_matrix.bottomRows(add) = rows;
    ineq_vector.tail(add) = vec;
    ineq_weight.tail(add).setConstant(weight);
  }

  void append(const AffineTaskSet& other) {
    if (other.equality_count()) {
      add_equalities(other.eq_matrix, other.eq_vector);
      eq_weight.tail(other.equality_count()) = other.eq_weight;
    }
    if (other.inequality_count()) {
      add_inequalities(other.ineq_matrix, other.ineq_vector);
      ineq_weight.tail(other.inequality_count()) = other.ineq_weight;
    }
  }
};

// tau = matrix y + offset, an n-row affine readout of the decision vector.
struct TorqueMap {
  MatX matrix;
  VecX offset;

  VecX evaluate(const VecX& y) const { return matrix * y + offset; }
};

// Everything the row builders consume, computed once per control cycle.
struct DynamicsData {
  MatX mass;             // (n+6) x (n+6)
  VecX bias;             // n+6, Coriolis/centrifugal/gravity
  MatX contact_jac;      // 6c x (n+6), active contacts in order
  VecX contact_drift;    // 6c
  CentroidalData centroidal;
  Vec6 centroidal_bias = Vec6::Zero();  // Hdot v
  Kinematics kin;
  Vec3 gravity = Vec3(0, 0, -9.81);
  std::vector<int> active;               // active end-effector indices
  std::vector<Transform> contact_pose;   // world poses of active contact frames

  static DynamicsData compute(const RobotModel& model, const RobotState& state,
                              const ContactSet& contacts,
                              const Vec3& gravity = Vec3(0, 0, -9.81)) {
    DynamicsData d;
    d.gravity = gravity;
    d.kin = forward_kinematics(model, state);
    d.mass = mass_matrix(model, state);
    d.bias = nonlinear_effects(model, state, gravity);
    d.contact_jac = contact_jacobian(model, d.kin, contacts);
    d.contact_drift = hidyn::contact_drift(model, state, contacts);
    d.centroidal = centroidal_momentum(model, state);
    d.centroidal_bias = centroidal_drift(model, state);
    d.active = contacts.active_end_effectors();
    for (int ee : d.active) d.contact_pose.push_back(end_effector_pose(model, d.kin, ee));
    return d;
  }
};

// Equations of motion as equality rows. Reduced mode keeps only the six
// unactuated rows (Newton-Euler of the whole system); the actuated rows are
// recovered through the torque map. Full mode emits all n+6 rows with the
// torque variables on the right-hand side.
inline AffineTaskSet build_dynamics_constraint(const DynamicsData& d,
                                               const VariableLayout& layout,
                                               double weight = 1.0) {
  const int n = layout.joints;
  const int c6 = layout.force_dim();
  AffineTaskSet t = AffineTaskSet::empty(layout.dimension());
  if (layout.mode == Formulation::reduced) {
    MatX rows = MatX::Zero(6, layout.dimension());
    rows.leftCols(n + 6) = d.mass.bottomRows(6);
    rows.middleCols(layout.force_offset(), c6) =
        -d.contact_jac.rightCols(6).transpose();
    t.add_equalities(rows, d.bias.tail(6), weight);
  } else {
    MatX rows = MatX::Zero(n + 6, layout.dimension());
    rows.leftCols(n + 6) = d.mass;
    rows.middleCols(layout.force_offset(), c6) = -d.contact_jac.transpose();
    rows.block(0, layout.torque_offset(), n, n) = -MatX::Identity(n, n);
    t.add_equalities(rows, d.bias, weight);
  }
  return t;
}

// Actuated-row torque recovery tau = M_u qdd + N_u - Jc_u' lambda for the
// reduced layout; a plain selector in full mode.
inline TorqueMap build_torque_map(const DynamicsData& d, const VariableLayout& layout) {
  const int n = layout.joints;
  TorqueMap map;
  map.matrix = MatX::Zero(n, layout.dimension());
  if (layout.mode == Formulation::reduced) {
    map.matrix.leftCols(n + 6) = d.mass.topRows(n);
    map.matrix.middleCols(layout.force_offset(), layout.force_dim()) =
        -d.contact_jac.leftCols(n).transpose();
    map.offset = d.bias.head(n);
  } else {
    map.matrix.block(0, layout.torque_offset(), n, n).setIdentity();
    map.offset = VecX::Zero(n);
  }
  return map;
}

// Rigid-contact rows Jc qdd + Jcdot v = 0.
inline AffineTaskSet build_contact_equality_rows(const DynamicsData& d,
                                                 const VariableLayout& layout,
                                                 double weight = 1.0) {
  AffineTaskSet t = AffineTaskSet::empty(layout.dimension());
  const int rows_n = static_cast<int>(d.contact_jac.rows());
  if (rows_n == 0) return t;
  MatX rows = MatX::Zero(rows_n, layout.dimension());
  rows.leftCols(layout.accel_dim()) = d.contact_jac;
  t.add_equalities(rows, d.contact_drift, weight);
  return t;
}

namespace detail {

// One contact's force rows in the local frame of its support patch. The
// wrench variables are world [force; torque] at the frame origin; local
// components are picked out with rows of R'.
inline void contact_force_rows(const RobotModel& model, const DynamicsData& d,
                               const VariableLayout& layout, int slot,
                               double margin, bool unilateral,
                               MatX& rows, VecX& vec, int& r) {
  const EndEffector& ee = model.end_effectors[d.active[slot]];
  const Mat3 rot = d.contact_pose[slot].linear();
  const int fcol = layout.force_offset() + 6 * slot;
  const auto fx = rot.col(0), fy = rot.col(1), fz = rot.col(2);

  const auto set_row = [&](const Vec3& force_coef, const Vec3& torque_coef) {
    rows.row(r).setZero();
    rows.block<1, 3>(r, fcol) = force_coef.transpose();
    rows.block<1, 3>(r, fcol + 3) = torque_coef.transpose();
    vec[r] = 0.0;
    ++r;
  };

  // Center of pressure inside the margin-shrunk patch:
  //   -x_minus + margin <= -tau_y/f_z <= x_plus - margin, same for y.
  const SupportPatch& p = ee.patch;
  set_row(-(p.x_plus - margin) * fz, -fy);
  set_row(-(p.x_minus - margin) * fz, fy);
  set_row(-(p.y_plus - margin) * fz, fx);
  set_row(-(p.y_minus - margin) * fz, -fx);

  // Friction pyramid inscribed in the cone: |f_x|,|f_y| <= mu/sqrt(2) f_z.
  const double mu = ee.friction / std::sqrt(2.0);
  set_row(fx - mu * fz, Vec3::Zero());
  set_row(-fx - mu * fz, Vec3::Zero());
  set_row(fy - mu * fz, Vec3::Zero());
  set_row(-fy - mu * fz, Vec3::Zero());

  if (unilateral) set_row(-fz, Vec3::Zero());
}

}  // namespace detail

// Center-of-pressure and friction rows for every active contact. The normal
// force positivity row is implied by the friction rows and off by default.
inline AffineTaskSet build_contact_force_rows(const RobotModel& model,
                                              const DynamicsData& d,
                                              const VariableLayout& layout,
                                              double cop_margin,
                                              bool unilateral = false,
                                              double weight = 1.0) {
  AffineTaskSet t = AffineTaskSet::empty(layout.dimension());
  const int per = unilateral ? 9 : 8;
  const int total = per * static_cast<int>(d.active.size());
  if (total == 0) return t;
  MatX rows = MatX::Zero(total, layout.dimension());
  VecX vec = VecX::Zero(total);
  int r = 0;
  for (int slot = 0; slot < static_cast<int>(d.active.size()); ++slot) {
    detail::contact_force_rows(model, d, layout, slot, cop_margin, unilateral, rows, vec, r);
  }
  t.add_inequalities(rows, vec, weight);
  return t;
}

// Kinematic contact equalities plus force-feasibility rows.
inline AffineTaskSet build_contact_rows(const RobotModel& model, const DynamicsData& d,
                                        const VariableLayout& layout, double cop_margin,
                                        bool unilateral = true, double weight = 1.0) {
  AffineTaskSet t = build_contact_equality_rows(d, layout, weight);
  t.append(build_contact_force_rows(model, d, layout, cop_margin, unilateral, weight));
  return t;
}

struct LimitOptions {
  double dt = 1e-3;
  double horizon_cycles = 10.0;    // braking horizon h = horizon_cycles * dt
  double accel_cap = 500.0;        // rad/s^2 (or m/s^2) hard ceiling
  bool torque_rows = true;
  bool accel_rows = true;
};

// Joint acceleration bounds that keep the position limit reachable with a
// stop over the braking horizon: qdd_max = clamp(2 (q_max - q - qd h)/h^2,
// 0, cap) and symmetrically for the lower limit. Unbounded joints emit no row.
inline void joint_accel_bounds(const RobotModel& model, const RobotState& state,
                               const LimitOptions& opts, VecX& lower, VecX& upper) {
  const int n = model.joint_count();
  const double h = opts.horizon_cycles * opts.dt;
  lower = VecX::Constant(n, -kUnbounded);
  upper = VecX::Constant(n, kUnbounded);
  for (int j = 0; j < n; ++j) {
    const JointLimits& lim = model.joints[j].limits;
    if (std::isfinite(lim.position_max)) {
      const double head = lim.position_max - state.q[j] - state.v[j] * h;
      upper[j] = clamp(2.0 * head / (h * h), 0.0, opts.accel_cap);
    }
    if (std::isfinite(lim.position_min)) {
      const double head = lim.position_min - state.q[j] - state.v[j] * h;
      lower[j] = clamp(2.0 * head / (h * h), -opts.accel_cap, 0.0);
    }
  }
}

// Torque box (through the torque map) and joint acceleration box.
inline AffineTaskSet build_limit_rows(const RobotModel& model, const RobotState& state,
                                      const TorqueMap& map, const VariableLayout& layout,
                                      const LimitOptions& opts = {}, double weight = 1.0) {
  const int n = layout.joints;
  AffineTaskSet t = AffineTaskSet::empty(layout.dimension());

  if (opts.torque_rows) {
    int count = 0;
    for (int j = 0; j < n; ++j) {
      count += std::isfinite(model.joints[j].limits.torque_max) ? 1 : 0;
      count += std::isfinite(model.joints[j].limits.torque_min) ? 1 : 0;
    }
    if (count) {
      MatX rows(count, layout.dimension());
      VecX vec(count);
      int r = 0;
      for (int j = 0; j < n; ++j) {
        const JointLimits& lim = model.joints[j].limits;
        if (std::isfinite(lim.torque_max)) {
          rows.row(r) = map.matrix.row(j);
          vec[r] = map.offset[j] - lim.torque_max;
          ++r;
        }
        if (std::isfinite(lim.torque_min)) {
          rows.row(r) = -map.matrix.row(j);
          vec[r] = lim.torque_min - map.offset[j];
          ++r;
        }
      }
      t.add_inequalities(rows, vec, weight);
    }
  }

  if (opts.accel_rows) {
    VecX lower, upper;
    joint_accel_bounds(model, state, opts, lower, upper);
    int count = 0;
    for (int j = 0; j < n; ++j) {
      count += std::isfinite(upper[j]) ? 1 : 0;
      count += std::isfinite(lower[j]) ? 1 : 0;
    }
    if (count) {
      MatX rows = MatX::Zero(count, layout.dimension());
      VecX vec(count);
      int r = 0;
      for (int j = 0; j < n; ++j) {
        if (std::isfinite(upper[j])) {
          rows.row(r).setZero();
          rows(r, j) = 1.0;
          vec[r] = -upper[j];
          ++r;
        }
        if (std::isfinite(lower[j])) {
          rows.row(r).setZero();
          rows(r, j) = -1.0;
          vec[r] = lower[j];
          ++r;
        }
      }
      t.add_inequalities(rows, vec, weight);
    }
  }
  return t;
}

// Cartesian acceleration objective J qdd + Jdot v = accel_ref.
inline AffineTaskSet build_motion_task(const MatX& jac, const VecX& drift,
                                       const VecX& accel_ref, const VariableLayout& layout,
                                       double weight = 1.0) {
  AffineTaskSet t = AffineTaskSet::empty(layout.dimension());
  MatX rows = MatX::Zero(jac.rows(), layout.dimension());
  rows.leftCols(layout.accel_dim()) = jac;
  t.add_equalities(rows, drift - accel_ref, weight);
  return t;
}

enum class MomentumForm { kinematic, force };

// Rate-of-momentum objective. Kinematic form uses the momentum matrix,
// force form balances the contact wrenches against gravity. linear_only
// keeps the first three rows.
inline AffineTaskSet build_momentum_task(const DynamicsData& d, const Vec6& hdot_ref,
                                         const VariableLayout& layout, MomentumForm form,
                                         bool linear_only = false, double weight = 1.0) {
  AffineTaskSet t = AffineTaskSet::empty(layout.dimension());
  const int rows_n = linear_only ? 3 : 6;
  MatX rows = MatX::Zero(rows_n, layout.dimension());
  VecX vec(rows_n);
  if (form == MomentumForm::kinematic) {
    rows.leftCols(layout.accel_dim()) = d.centroidal.matrix.topRows(rows_n);
    vec = (d.centroidal_bias - hdot_ref).head(rows_n);
  } else {
    for (int slot = 0; slot < static_cast<int>(d.active.size()); ++slot) {
      const int fcol = layout.force_offset() + 6 * slot;
      rows.block(0, fcol, 3, 3).setIdentity();
      if (!linear_only) {
        rows.block(3, fcol, 3, 3) = skew(d.contact_pose[slot].translation() - d.centroidal.com);
        rows.block(3, fcol + 3, 3, 3).setIdentity();
      }
    }
    Vec6 bias = spatial(d.centroidal.mass * d.gravity, Vec3::Zero()) - hdot_ref;
    vec = bias.head(rows_n);
  }
  t.add_equalities(rows, vec, weight);
  return t;
}

// hdot_ref = P [m (com_des - com); 0] + D (h_des - h) + hdot_des.
inline Vec6 momentum_pd_reference(double mass, const Vec3& com, const Vec3& com_des,
                                  const Vec6& h, const Vec6& h_des, const Vec6& hdot_des,
                                  const Vec6& p_gain, const Vec6& d_gain) {
  const Vec6 pos_err = spatial(mass * (com_des - com), Vec3::Zero());
  return p_gain.cwiseProduct(pos_err) + d_gain.cwiseProduct(h_des - h) + hdot_des;
}

struct PostureGains {
  double joint_p = 50.0;
  double joint_d = 14.0;
  double base_linear_p = 20.0;
  double base_linear_d = 9.0;
  double base_angular_p = 30.0;
  double base_angular_d = 11.0;
};

struct PostureReference {
  VecX q;                   // joint targets
  Vec3 base_position = Vec3::Zero();
  Quat base_orientation = Quat::Identity();
  VecX qd;                  // joint velocity targets, may be empty for zero
};

// PD acceleration targets on the joints and optionally the floating base.
inline AffineTaskSet build_posture_task(const RobotModel& model, const RobotState& state,
                                        const PostureReference& ref, const PostureGains& gains,
                                        const VariableLayout& layout, bool include_base,
                                        double weight = 1.0) {
  const int n = layout.joints;
  const int rows_n = include_base ? n + 6 : n;
  MatX rows = MatX::Zero(rows_n, layout.dimension());
  VecX vec(rows_n);
  for (int j = 0; j < n; ++j) {
    rows(j, j) = 1.0;
    const double qd_des = ref.qd.size() ? ref.qd[j] : 0.0;
    vec[j] = -(gains.joint_p * (ref.q[j] - state.q[j]) + gains.joint_d * (qd_des - state.v[j]));
  }
  if (include_base) {
    rows.block(n, n, 6, 6).setIdentity();
    const Vec3 lin_acc = gains.base_linear_p * (ref.base_position - state.base_position) -
                         gains.base_linear_d * state.v.segment<3>(n);
    const Vec3 ang_err = orientation_error(ref.base_orientation.toRotationMatrix(),
                                           state.base_orientation.toRotationMatrix());
    const Vec3 ang_acc = gains.base_angular_p * ang_err - gains.base_angular_d * state.v.tail<3>();
    vec.segment<3>(n) = -lin_acc;
    vec.tail<3>() = -ang_acc;
  }
  AffineTaskSet t = AffineTaskSet::empty(layout.dimension());
  t.add_equalities(rows, vec, weight);
  return t;
}

// Even split of the weight over the active contacts, flat-ground wrench
// targets [0, 0, m g / c, 0, 0, 0] in world axes.
inline VecX default_force_targets(const DynamicsData& d) {
  const int c = static_cast<int>(d.active.size());
  VecX targets = VecX::Zero(6 * c);
  if (c == 0) return targets;
  const double fz = -d.centroidal.mass * d.gravity.z() / c;
  for (int slot = 0; slot < c; ++slot) targets[6 * slot + 2] = fz;
  return targets;
}

// Wrench regularizer lambda = target.
inline AffineTaskSet build_force_regularizer(const DynamicsData& d, const VariableLayout& layout,
                                             const VecX& targets, double weight = 1.0) {
  AffineTaskSet t = AffineTaskSet::empty(layout.dimension());
  const int c6 = layout.force_dim();
  if (c6 == 0) return t;
  MatX rows = MatX::Zero(c6, layout.dimension());
  rows.middleCols(layout.force_offset(), c6).setIdentity();
  t.add_equalities(rows, -targets, weight);
  return t;
}

// Snapshot used by the post-solve audit and torque recovery.
struct CycleContext {
  VariableLayout layout;
  TorqueMap torque_map;
  MatX newton_euler_rows;   // 6 x dim, rows + rhs = 0 at a physical solution
  VecX newton_euler_rhs;
  DynamicsData data;
  std::vector<SupportPatch> patch;      // per active contact
  std::vector<double> friction;
  VecX torque_lower, torque_upper;      // size n, +-inf when absent
  VecX accel_lower, accel_upper;
  double cop_margin = 0.0;

  static std::shared_ptr<CycleContext> make(const RobotModel& model, const RobotState& state,
                                            DynamicsData data, const VariableLayout& layout,
                                            double cop_margin, const LimitOptions& lim) {
    auto ctx = std::make_shared<CycleContext>();
    ctx->layout = layout;
    ctx->torque_map = build_torque_map(data, layout);
    AffineTaskSet ne = build_dynamics_constraint(data, layout);
    if (layout.mode == Formulation::full) {
      ctx->newton_euler_rows = ne.eq_matrix.bottomRows(6);
      ctx->newton_euler_rhs = ne.eq_vector.tail(6);
    } else {
      ctx->newton_euler_rows = ne.eq_matrix;
      ctx->newton_euler_rhs = ne.eq_vector;
    }
    const int n = layout.joints;
    ctx->torque_lower.resize(n);
    ctx->torque_upper.resize(n);
    for (int j = 0; j < n; ++j) {
      ctx->torque_lower[j] = model.joints[j].limits.torque_min;
      ctx->torque_upper[j] = model.joints[j].limits.torque_max;
    }
    joint_accel_bounds(model, state, lim, ctx->accel_lower, ctx->accel_upper);
    for (int ee : data.active) {
      ctx->patch.push_back(model.end_effectors[ee].patch);
      ctx->friction.push_back(model.end_effectors[ee].friction);
    }
    ctx->cop_margin = cop_margin;
    ctx->data = std::move(data);
    return ctx;
  }
};

}  // namespace hidyn
