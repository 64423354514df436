#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "hidyn/model.hpp"

namespace hidyn {

namespace detail {

using nlohmann::json;

inline Vec3 parse_vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) {
    throw ModelError(where + ": expected an array of 3 numbers");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

// Diagonal [ixx, iyy, izz], symmetric [ixx, iyy, izz, ixy, ixz, iyz], or a
// full row-major 3x3.
inline Mat3 parse_inertia(const json& j, const std::string& where) {
  if (!j.is_array()) throw ModelError(where + ": inertia must be an array");
  Mat3 m = Mat3::Zero();
  if (j.size() == 3) {
    m.diagonal() << j[0].get<double>(), j[1].get<double>(), j[2].get<double>();
  } else if (j.size() == 6) {
    m(0, 0) = j[0].get<double>();
    m(1, 1) = j[1].get<double>();
    m(2, 2) = j[2].get<double>();
    m(0, 1) = m(1, 0) = j[3].get<double>();
    m(0, 2) = m(2, 0) = j[4].get<double>();
    m(1, 2) = m(2, 1) = j[5].get<double>();
  } else if (j.size() == 9) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m(r, c) = j[3 * r + c].get<double>();
    }
  } else {
    throw ModelError(where + ": inertia must have 3, 6 or 9 entries");
  }
  return m;
}

// {"xyz": [...], "rpy": [...]}; both optional. rpy applies roll about x,
// then pitch about y, then yaw about z.
inline Transform parse_transform(const json& j, const std::string& where) {
  Transform t = Transform::Identity();
  if (j.contains("xyz")) t.translation() = parse_vec3(j["xyz"], where + ".xyz");
  if (j.contains("rpy")) {
    const Vec3 rpy = parse_vec3(j["rpy"], where + ".rpy");
    t.linear() = (Eigen::AngleAxisd(rpy.z(), Vec3::UnitZ()) *
                  Eigen::AngleAxisd(rpy.y(), Vec3::UnitY()) *
                  Eigen::AngleAxisd(rpy.x(), Vec3::UnitX()))
                     .toRotationMatrix();
  }
  return t;
}

}  // namespace detail

// Builds a model from its JSON form. Links must be listed root first with
// every parent before its children; joints in the order that defines the
// joint coordinates.
inline RobotModel model_from_json(const nlohmann::json& j) {
  using detail::parse_inertia;
  using detail::parse_transform;
  using detail::parse_vec3;

  RobotModel model;
  model.name = j.value("name", "unnamed");
  if (!j.contains("links") || !j["links"].is_array() || j["links"].empty()) {
    throw ModelError("model has no links array");
  }
  if (!j.contains("joints") || !j["joints"].is_array()) {
    throw ModelError("model has no joints array");
  }

  for (const auto& lj : j["links"]) {
    Link link;
    link.name = lj.at("name").get<std::string>();
    link.mass = lj.at("mass").get<double>();
    if (lj.contains("com")) link.com = parse_vec3(lj["com"], "link " + link.name + ".com");
    link.inertia = parse_inertia(lj.at("inertia"), "link " + link.name);
    model.links.push_back(link);
  }

  int joint_index = 0;
  for (const auto& jj : j["joints"]) {
    Joint joint;
    joint.name = jj.at("name").get<std::string>();
    const std::string type = jj.value("type", "revolute");
    if (type == "revolute") {
      joint.type = JointType::revolute;
    } else if (type == "prismatic") {
      joint.type = JointType::prismatic;
    } else {
      throw ModelError("joint " + joint.name + ": unknown type '" + type + "'");
    }
    const std::string parent = jj.at("parent").get<std::string>();
    const std::string child = jj.at("child").get<std::string>();
    joint.parent_link = model.link_index(parent);
    joint.child_link = model.link_index(child);
    if (jj.contains("origin")) {
      joint.origin = parse_transform(jj["origin"], "joint " + joint.name + ".origin");
    }
    joint.axis = parse_vec3(jj.at("axis"), "joint " + joint.name + ".axis");
    if (jj.contains("limits")) {
      const auto& lim = jj["limits"];
      if (lim.contains("position")) {
        joint.limits.position_min = lim["position"][0].get<double>();
        joint.limits.position_max = lim["position"][1].get<double>();
      }
      if (lim.contains("torque")) {
        joint.limits.torque_min = lim["torque"][0].get<double>();
        joint.limits.torque_max = lim["torque"][1].get<double>();
      }
    }
    if (model.links[joint.child_link].parent_joint != -1) {
      throw ModelError("link " + child + " has two parent joints");
    }
    model.links[joint.child_link].parent_joint = joint_index;
    model.joints.push_back(joint);
    ++joint_index;
  }

  if (j.contains("end_effectors")) {
    for (const auto& ej : j["end_effectors"]) {
      EndEffector ee;
      ee.name = ej.at("name").get<std::string>();
      ee.link = model.link_index(ej.at("link").get<std::string>());
      if (ej.contains("offset")) {
        ee.offset = parse_transform(ej["offset"], "end effector " + ee.name + ".offset");
      }
      if (ej.contains("patch")) {
        const auto& p = ej["patch"];
        ee.patch.x_plus = p.at("x_plus").get<double>();
        ee.patch.x_minus = p.at("x_minus").get<double>();
        ee.patch.y_plus = p.at("y_plus").get<double>();
        ee.patch.y_minus = p.at("y_minus").get<double>();
      }
      ee.friction = ej.value("friction", 0.8);
      model.end_effectors.push_back(ee);
    }
  }

  model.validate();
  return model;
}

// Loads and validates a model file. Parse errors carry the line and column
// from the JSON reader; structural errors name the offending element.
inline RobotModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open model file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ModelError(path + ": " + e.what());
  }
  try {
    return model_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(path + ": " + e.what());
  }
}

}  // namespace hidyn
