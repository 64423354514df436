#pragma once

#include <vector>

#include "hidyn/model.hpp"

namespace hidyn {

// All spatial quantities below use world axes with the current base origin as
// the common reference point. Twists of every link share that frame, so the
// recursions need no per-joint transforms and the base motion subspace is the
// identity.

struct Kinematics {
  std::vector<Transform> link_pose;  // world pose of link frames
  std::vector<Vec3> link_com;        // world com positions
  std::vector<Mat3> link_inertia;    // world-axes rotational inertia about link com
  std::vector<Vec3> joint_axis;      // world joint axes
  std::vector<Vec3> joint_origin;    // world joint anchor points
  Vec3 base_origin = Vec3::Zero();
};

inline Kinematics forward_kinematics(const RobotModel& model, const RobotState& state) {
  const int nl = static_cast<int>(model.links.size());
  const int n = model.joint_count();
  Kinematics k;
  k.link_pose.resize(nl);
  k.link_com.resize(nl);
  k.link_inertia.resize(nl);
  k.joint_axis.resize(n);
  k.joint_origin.resize(n);
  k.base_origin = state.base_position;

  Transform base = Transform::Identity();
  base.linear() = state.base_orientation.toRotationMatrix();
  base.translation() = state.base_position;
  k.link_pose[0] = base;

  for (int j = 0; j < n; ++j) {
    const Joint& joint = model.joints[j];
    const Transform joint_frame = k.link_pose[joint.parent_link] * joint.origin;
    Transform motion = Transform::Identity();
    if (joint.type == JointType::revolute) {
      motion.linear() = Eigen::AngleAxisd(state.q[j], joint.axis).toRotationMatrix();
    } else {
      motion.translation() = state.q[j] * joint.axis;
    }
    k.link_pose[joint.child_link] = joint_frame * motion;
    k.joint_axis[j] = joint_frame.linear() * joint.axis;
    k.joint_origin[j] = joint_frame.translation();
  }
  for (int i = 0; i < nl; ++i) {
    const Link& link = model.links[i];
    k.link_com[i] = k.link_pose[i] * link.com;
    const Mat3 r = k.link_pose[i].linear();
    k.link_inertia[i] = r * link.inertia * r.transpose();
  }
  return k;
}

// Motion subspace of joint j, world axes referenced at the base origin.
inline Vec6 joint_subspace(const RobotModel& model, const Kinematics& kin, int j) {
  const Vec3& axis = kin.joint_axis[j];
  if (model.joints[j].type == JointType::prismatic) {
    return spatial(axis, Vec3::Zero());
  }
  return spatial(axis.cross(kin.base_origin - kin.joint_origin[j]), axis);
}

namespace detail {

// Per-link spatial inertias at the base origin; accumulated[i] additionally
// folds every descendant into link i.
inline void link_inertias(const RobotModel& model, const Kinematics& kin,
                          std::vector<Mat6>& out, bool accumulated) {
  const int nl = static_cast<int>(model.links.size());
  out.resize(nl);
  for (int i = 0; i < nl; ++i) {
    out[i] = spatial_inertia(model.links[i].mass, kin.link_inertia[i],
                             kin.link_com[i] - kin.base_origin);
  }
  if (!accumulated) return;
  for (int i = nl - 1; i >= 1; --i) {
    const int parent = model.joints[model.links[i].parent_joint].parent_link;
    out[parent] += out[i];
  }
}

}  // namespace detail

inline MatX mass_matrix(const RobotModel& model, const RobotState& state) {
  const int n = model.joint_count();
  const Kinematics kin = forward_kinematics(model, state);
  std::vector<Mat6> composite;
  detail::link_inertias(model, kin, composite, true);

  MatX m = MatX::Zero(n + 6, n + 6);
  m.bottomRightCorner<6, 6>() = composite[0];
  for (int j = 0; j < n; ++j) {
    const Vec6 s = joint_subspace(model, kin, j);
    const Vec6 f = composite[model.joints[j].child_link] * s;
    m(j, j) = s.dot(f);
    m.block<6, 1>(n, j) = f;
    m.block<1, 6>(j, n) = f.transpose();
    int link = model.joints[j].parent_link;
    while (link != 0) {
      const int l = model.links[link].parent_joint;
      const double v = joint_subspace(model, kin, l).dot(f);
      m(j, l) = v;
      m(l, j) = v;
      link = model.joints[l].parent_link;
    }
  }
  return m;
}

// Generalized force [joint torques; base wrench] for acceleration a:
// returns M a + N(q, v) with gravity folded into N.
inline VecX inverse_dynamics(const RobotModel& model, const RobotState& state,
                             const VecX& a, const Vec3& gravity) {
  const int n = model.joint_count();
  const int nl = static_cast<int>(model.links.size());
  const Kinematics kin = forward_kinematics(model, state);
  std::vector<Mat6> inertia;
  detail::link_inertias(model, kin, inertia, false);

  std::vector<Vec6> vel(nl), acc(nl), force(nl);
  vel[0] = state.v.tail<6>();
  // Fictitious upward base acceleration stands in for gravity on every link.
  acc[0] = spatial(-gravity, Vec3::Zero()) + a.tail<6>() -
           spatial(vel[0].tail<3>().cross(vel[0].head<3>()), Vec3::Zero());
  for (int j = 0; j < n; ++j) {
    const Joint& joint = model.joints[j];
    const Vec6 s = joint_subspace(model, kin, j);
    const Vec6 sv = s * state.v[j];
    vel[joint.child_link] = vel[joint.parent_link] + sv;
    acc[joint.child_link] = acc[joint.parent_link] + s * a[j] +
                            motion_cross_motion(vel[joint.child_link], sv);
  }
  for (int i = 0; i < nl; ++i) {
    force[i] = inertia[i] * acc[i] + motion_cross_force(vel[i], inertia[i] * vel[i]);
  }
  VecX out(n + 6);
  for (int i = nl - 1; i >= 1; --i) {
    const int j = model.links[i].parent_joint;
    out[j] = joint_subspace(model, kin, j).dot(force[i]);
    force[model.joints[j].parent_link] += force[i];
  }
  out.tail<6>() = force[0];
  return out;
}

// Coriolis, centrifugal and gravity terms.
inline VecX nonlinear_effects(const RobotModel& model, const RobotState& state,
                              const Vec3& gravity) {
  return inverse_dynamics(model, state, VecX::Zero(model.velocity_dim()), gravity);
}

// 6-row Jacobian of the frame at `point` on `link`: [linear; angular] rows
// mapping generalized velocity to the world twist at that point.
inline MatX point_frame_jacobian(const RobotModel& model, const Kinematics& kin,
                                 int link, const Vec3& point) {
  const int n = model.joint_count();
  MatX jac = MatX::Zero(6, n + 6);
  jac.block<3, 3>(0, n) = Mat3::Identity();
  jac.block<3, 3>(0, n + 3) = -skew(point - kin.base_origin);
  jac.block<3, 3>(3, n + 3) = Mat3::Identity();
  int l = link;
  while (l != 0) {
    const int j = model.links[l].parent_joint;
    const Vec3& axis = kin.joint_axis[j];
    if (model.joints[j].type == JointType::revolute) {
      jac.block<3, 1>(0, j) = axis.cross(point - kin.joint_origin[j]);
      jac.block<3, 1>(3, j) = axis;
    } else {
      jac.block<3, 1>(0, j) = axis;
    }
    l = model.joints[j].parent_link;
  }
  return jac;
}

inline Transform end_effector_pose(const RobotModel& model, const Kinematics& kin, int ee) {
  return kin.link_pose[model.end_effectors[ee].link] * model.end_effectors[ee].offset;
}

inline MatX end_effector_jacobian(const RobotModel& model, const Kinematics& kin, int ee) {
  return point_frame_jacobian(model, kin, model.end_effectors[ee].link,
                              end_effector_pose(model, kin, ee).translation());
}

// Stacked 6c-row Jacobian over the active contacts, in activation order.
inline MatX contact_jacobian(const RobotModel& model, const Kinematics& kin,
                             const ContactSet& contacts) {
  const std::vector<int> active = contacts.active_end_effectors();
  MatX jac(6 * static_cast<int>(active.size()), model.velocity_dim());
  for (int i = 0; i < static_cast<int>(active.size()); ++i) {
    jac.middleRows<6>(6 * i) = end_effector_jacobian(model, kin, active[i]);
  }
  return jac;
}

// Pose integration q + v dt on the configuration manifold; velocity is
// copied unchanged.
inline RobotState integrate_state(const RobotModel& model, const RobotState& state,
                                  const VecX& v, double dt) {
  const int n = model.joint_count();
  RobotState next = state;
  next.q += v.head(n) * dt;
  next.base_position += v.segment<3>(n) * dt;
  next.base_orientation = integrate_quaternion(state.base_orientation, v.tail<3>(), dt);
  return next;
}

namespace detail {

constexpr double kDriftStep = 1e-6;

template <typename MatrixFn>
MatX matrix_time_derivative(const RobotModel& model, const RobotState& state,
                            MatrixFn&& fn) {
  const RobotState plus = integrate_state(model, state, state.v, kDriftStep);
  const RobotState minus = integrate_state(model, state, state.v, -kDriftStep);
  return (fn(plus) - fn(minus)) / (2.0 * kDriftStep);
}

}  // namespace detail

// Velocity-product acceleration Jdot v of the active contact frames.
inline VecX contact_drift(const RobotModel& model, const RobotState& state,
                          const ContactSet& contacts) {
  const MatX jdot = detail::matrix_time_derivative(
      model, state, [&](const RobotState& s) {
        return contact_jacobian(model, forward_kinematics(model, s), contacts);
      });
  return jdot * state.v;
}

inline VecX end_effector_drift(const RobotModel& model, const RobotState& state, int ee) {
  const MatX jdot = detail::matrix_time_derivative(
      model, state, [&](const RobotState& s) {
        return end_effector_jacobian(model, forward_kinematics(model, s), ee);
      });
  return jdot * state.v;
}

struct ComState {
  Vec3 position = Vec3::Zero();
  double mass = 0.0;
};

inline ComState center_of_mass(const RobotModel& model, const Kinematics& kin) {
  ComState c;
  for (int i = 0; i < static_cast<int>(model.links.size()); ++i) {
    c.position += model.links[i].mass * kin.link_com[i];
    c.mass += model.links[i].mass;
  }
  c.position /= c.mass;
  return c;
}

struct CentroidalData {
  MatX matrix;              // 6 x (n + 6), momentum about the com: h = matrix * v
  Vec6 momentum = Vec6::Zero();
  Vec3 com = Vec3::Zero();
  double mass = 0.0;
};

inline CentroidalData centroidal_momentum(const RobotModel& model, const RobotState& state) {
  const int n = model.joint_count();
  const Kinematics kin = forward_kinematics(model, state);
  std::vector<Mat6> composite;
  detail::link_inertias(model, kin, composite, true);

  CentroidalData data;
  const ComState com = center_of_mass(model, kin);
  data.com = com.position;
  data.mass = com.mass;
  data.matrix.resize(6, n + 6);
  data.matrix.rightCols<6>() = composite[0];
  for (int j = 0; j < n; ++j) {
    data.matrix.col(j) = composite[model.joints[j].child_link] * joint_subspace(model, kin, j);
  }
  // Re-reference the momentum rows from the base origin to the com.
  const Mat3 shift = -skew(com.position - kin.base_origin);
  data.matrix.bottomRows<3>() += shift * data.matrix.topRows<3>();
  data.momentum = data.matrix * state.v;
  return data;
}

// Velocity-product rate Hdot v: with h referenced at the moving com this is
// the full bias, the com-velocity transport term cancels against m*vcom.
inline Vec6 centroidal_drift(const RobotModel& model, const RobotState& state) {
  const MatX hdot = detail::matrix_time_derivative(
      model, state, [&](const RobotState& s) {
        return centroidal_momentum(model, s).matrix;
      });
  return hdot * state.v;
}

}  // namespace hidyn
