#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "hidyn/math.hpp"

namespace hidyn {

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class JointType { revolute, prismatic };

constexpr double kUnbounded = std::numeric_limits<double>::infinity();

struct JointLimits {
  double position_min = -kUnbounded;
  double position_max = kUnbounded;
  double torque_min = -kUnbounded;
  double torque_max = kUnbounded;
};

struct Joint {
  std::string name;
  JointType type = JointType::revolute;
  int parent_link = -1;
  int child_link = -1;
  Transform origin = Transform::Identity();  // child frame in parent frame at q = 0
  Vec3 axis = Vec3::UnitZ();                 // in child frame
  JointLimits limits;
};

struct Link {
  std::string name;
  double mass = 0.0;
  Vec3 com = Vec3::Zero();   // in link frame
  Mat3 inertia = Mat3::Zero();  // about com, link frame
  int parent_joint = -1;     // -1 for the root
};

// Rectangular support patch in the end-effector frame, z up, extents from the
// frame origin along +x/-x/+y/-y.
struct SupportPatch {
  double x_plus = 0.0;
  double x_minus = 0.0;
  double y_plus = 0.0;
  double y_minus = 0.0;
};

struct EndEffector {
  std::string name;
  int link = -1;
  Transform offset = Transform::Identity();  // frame in link coordinates
  SupportPatch patch;
  double friction = 0.8;
};

// Floating-base kinematic tree. Link 0 is the base. Joint i drives joint
// coordinate i; generalized velocity is [qd_joints; v_base; w_base] with the
// base twist expressed in world axes at the base origin.
class RobotModel {
 public:
  std::vector<Link> links;
  std::vector<Joint> joints;
  std::vector<EndEffector> end_effectors;
  std::string name;

  int joint_count() const { return static_cast<int>(joints.size()); }
  int velocity_dim() const { return joint_count() + 6; }

  double total_mass() const {
    double m = 0.0;
    for (const auto& l : links) m += l.mass;
    return m;
  }

  int end_effector_index(const std::string& ee_name) const {
    for (int i = 0; i < static_cast<int>(end_effectors.size()); ++i) {
      if (end_effectors[i].name == ee_name) return i;
    }
    throw ModelError("unknown end effector: " + ee_name);
  }

  int link_index(const std::string& link_name) const {
    for (int i = 0; i < static_cast<int>(links.size()); ++i) {
      if (links[i].name == link_name) return i;
    }
    throw ModelError("unknown link: " + link_name);
  }

  // Checks tree structure and physical plausibility; throws ModelError.
  void validate() const {
    if (links.empty()) throw ModelError("model has no links");
    if (links[0].parent_joint != -1) throw ModelError("link 0 must be the root");
    if (static_cast<int>(links.size()) != joint_count() + 1) {
      throw ModelError("expected one non-root link per joint");
    }
    for (int j = 0; j < joint_count(); ++j) {
      const Joint& joint = joints[j];
      if (joint.parent_link < 0 || joint.parent_link >= static_cast<int>(links.size())) {
        throw ModelError("joint " + joint.name + " has invalid parent link");
      }
      if (joint.child_link <= 0 || joint.child_link >= static_cast<int>(links.size())) {
        throw ModelError("joint " + joint.name + " has invalid child link");
      }
      if (links[joint.child_link].parent_joint != j) {
        throw ModelError("joint " + joint.name + " child link mismatch");
      }
      if (std::abs(joint.axis.norm() - 1.0) > 1e-9) {
        throw ModelError("joint " + joint.name + " axis is not unit length");
      }
      if (joint.limits.position_min > joint.limits.position_max) {
        throw ModelError("joint " + joint.name + " has inverted position limits");
      }
      // Parents must precede children so single passes can run in index order.
      if (joint.parent_link >= joint.child_link) {
        throw ModelError("links are not topologically ordered");
      }
    }
    for (const Link& link : links) {
      if (link.mass <= 0.0) throw ModelError("link " + link.name + " has non-positive mass");
      if ((link.inertia - link.inertia.transpose()).norm() > 1e-9) {
        throw ModelError("link " + link.name + " inertia is not symmetric");
      }
      Eigen::SelfAdjointEigenSolver<Mat3> es(link.inertia);
      if (es.eigenvalues().minCoeff() <= 0.0) {
        throw ModelError("link " + link.name + " inertia is not positive definite");
      }
    }
    for (const EndEffector& ee : end_effectors) {
      if (ee.link < 0 || ee.link >= static_cast<int>(links.size())) {
        throw ModelError("end effector " + ee.name + " references invalid link");
      }
      if (ee.friction <= 0.0) throw ModelError("end effector " + ee.name + " friction must be positive");
      if (ee.patch.x_plus < 0 || ee.patch.x_minus < 0 || ee.patch.y_plus < 0 || ee.patch.y_minus < 0) {
        throw ModelError("end effector " + ee.name + " patch extents must be non-negative");
      }
    }
  }
};

struct RobotState {
  VecX q;        // joint positions, size n
  Vec3 base_position = Vec3::Zero();
  Quat base_orientation = Quat::Identity();
  VecX v;        // [qd; v_base; w_base], size n + 6, world axes at base origin

  static RobotState neutral(const RobotModel& model) {
    RobotState s;
    s.q = VecX::Zero(model.joint_count());
    s.v = VecX::Zero(model.velocity_dim());
    return s;
  }

  Vec6 base_twist() const { return v.tail<6>(); }

  void check(const RobotModel& model) const {
    if (q.size() != model.joint_count()) throw ModelError("state q size mismatch");
    if (v.size() != model.velocity_dim()) throw ModelError("state v size mismatch");
    if (std::abs(base_orientation.norm() - 1.0) > 1e-9) {
      throw ModelError("base orientation is not unit");
    }
  }
};

struct ContactSpec {
  int end_effector = -1;
  bool active = true;
};

// Which end effectors are currently constrained to the environment.
struct ContactSet {
  std::vector<ContactSpec> contacts;

  static ContactSet all_active(const RobotModel& model) {
    ContactSet set;
    for (int i = 0; i < static_cast<int>(model.end_effectors.size()); ++i) {
      set.contacts.push_back({i, true});
    }
    return set;
  }

  int active_count() const {
    int c = 0;
    for (const auto& contact : contacts) c += contact.active ? 1 : 0;
    return c;
  }

  std::vector<int> active_end_effectors() const {
    std::vector<int> out;
    for (const auto& contact : contacts) {
      if (contact.active) out.push_back(contact.end_effector);
    }
    return out;
  }

  bool is_active(int end_effector) const {
    for (const auto& contact : contacts) {
      if (contact.end_effector == end_effector) return contact.active;
    }
    return false;
  }

  void set_active(int end_effector, bool active) {
    for (auto& contact : contacts) {
      if (contact.end_effector == end_effector) {
        contact.active = active;
        return;
      }
    }
    contacts.push_back({end_effector, active});
  }
};

}  // namespace hidyn
