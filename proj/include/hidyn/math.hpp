#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace hidyn {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using VecX = Eigen::VectorXd;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using MatX = Eigen::MatrixXd;
using Quat = Eigen::Quaterniond;
using Transform = Eigen::Isometry3d;

// Spatial vectors are ordered [linear; angular] throughout.

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return s;
}

inline Vec6 spatial(const Vec3& linear, const Vec3& angular) {
  Vec6 out;
  out << linear, angular;
  return out;
}

// q_next = exp(omega * dt) * q with omega expressed in the world frame.
inline Quat integrate_quaternion(const Quat& q, const Vec3& omega, double dt) {
  const Vec3 delta = omega * dt;
  const double angle = delta.norm();
  Quat dq;
  if (angle < 1e-12) {
    dq = Quat(1.0, 0.5 * delta.x(), 0.5 * delta.y(), 0.5 * delta.z());
  } else {
    dq = Quat(Eigen::AngleAxisd(angle, delta / angle));
  }
  Quat out = dq * q;
  out.normalize();
  return out;
}

// Rotation vector of R, magnitude in [0, pi].
inline Vec3 rotation_log(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

// Orientation error as a world-frame rotation vector taking current to desired.
inline Vec3 orientation_error(const Mat3& desired, const Mat3& current) {
  return rotation_log(desired * current.transpose());
}

// Twist rereferenced from point a to point b: v_b = v_a + w x (b - a).
inline Vec6 shift_twist(const Vec6& twist_at_a, const Vec3& b_minus_a) {
  return spatial(twist_at_a.head<3>() + twist_at_a.tail<3>().cross(b_minus_a),
                 twist_at_a.tail<3>());
}

// Wrench rereferenced from point a to point b: tau_b = tau_a + (a - b) x f.
inline Vec6 shift_wrench(const Vec6& wrench_at_a, const Vec3& b_minus_a) {
  return spatial(wrench_at_a.head<3>(),
                 wrench_at_a.tail<3>() - b_minus_a.cross(wrench_at_a.head<3>()));
}

inline Vec6 motion_cross_motion(const Vec6& v, const Vec6& m) {
  const Vec3 vl = v.head<3>(), va = v.tail<3>();
  const Vec3 ml = m.head<3>(), ma = m.tail<3>();
  return spatial(va.cross(ml) + vl.cross(ma), va.cross(ma));
}

inline Vec6 motion_cross_force(const Vec6& v, const Vec6& f) {
  const Vec3 vl = v.head<3>(), va = v.tail<3>();
  const Vec3 fl = f.head<3>(), fa = f.tail<3>();
  return spatial(va.cross(fl), va.cross(fa) + vl.cross(fl));
}

// Spatial inertia of a body about reference point o, world axes.
// r = com - o, inertia_com expressed in world axes about the com.
inline Mat6 spatial_inertia(double mass, const Mat3& inertia_com, const Vec3& r) {
  const Mat3 rx = skew(r);
  Mat6 out;
  out.topLeftCorner<3, 3>() = mass * Mat3::Identity();
  out.topRightCorner<3, 3>() = -mass * rx;
  out.bottomLeftCorner<3, 3>() = mass * rx;
  out.bottomRightCorner<3, 3>() = inertia_com - mass * rx * rx;
  return out;
}

inline double clamp(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

// Smoothstep position/velocity/acceleration profile on [0, duration].
struct QuinticProfile {
  double s = 0.0, sd = 0.0, sdd = 0.0;
};

inline QuinticProfile quintic(double t, double duration) {
  QuinticProfile p;
  if (duration <= 0.0 || t >= duration) {
    p.s = 1.0;
    return p;
  }
  if (t <= 0.0) return p;
  const double x = t / duration;
  const double x2 = x * x, x3 = x2 * x;
  p.s = x3 * (10.0 - 15.0 * x + 6.0 * x2);
  p.sd = 30.0 * x2 * (1.0 - 2.0 * x + x2) / duration;
  p.sdd = 60.0 * x * (1.0 - 3.0 * x + 2.0 * x2) / (duration * duration);
  return p;
}

}  // namespace hidyn
