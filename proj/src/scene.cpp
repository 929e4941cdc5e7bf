#include "lang2manip/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "lang2manip/errors.hpp"
#include "xml.hpp"

namespace lang2manip {

namespace fs = std::filesystem;

std::string_view to_string(JointKind kind) {
  switch (kind) {
    case JointKind::revolute: return "revolute";
    case JointKind::prismatic: return "prismatic";
    case JointKind::fixed: return "fixed";
  }
  return "?";
}

double Joint::default_value() const {
  if (!movable()) return 0.0;
  return std::clamp(0.0, limits.lower, limits.upper);
}

std::size_t RobotModel::dof() const {
  return static_cast<std::size_t>(
      std::count_if(joints.begin(), joints.end(), [](const Joint& j) { return j.movable(); }));
}

std::size_t RobotModel::link_index(std::string_view link) const {
  for (std::size_t i = 0; i < links.size(); ++i) {
    if (links[i].name == link) return i;
  }
  throw Error(Errc::invalid_chain, "unknown link '" + std::string(link) + "'");
}

std::vector<std::size_t> RobotModel::movable_joints() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < joints.size(); ++i) {
    if (joints[i].movable()) out.push_back(i);
  }
  return out;
}

const Joint& RobotModel::movable_joint(std::size_t dof_index) const {
  std::size_t k = 0;
  for (const Joint& j : joints) {
    if (!j.movable()) continue;
    if (k++ == dof_index) return j;
  }
  throw Error(Errc::invalid_value, "DOF index out of range");
}

double RobotModel::reach_radius() const {
  double reach = ee_offset.position.norm();
  const std::size_t ee = ee_index();
  for (std::size_t i = 0; i < ee && i < joints.size(); ++i) {
    reach += joints[i].origin.position.norm();
    if (joints[i].kind == JointKind::prismatic) {
      reach += std::max(std::abs(joints[i].limits.lower), std::abs(joints[i].limits.upper));
    }
  }
  return reach;
}

JointConfig RobotModel::default_config() const {
  JointConfig q(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dof())));
  std::size_t k = 0;
  for (const Joint& j : joints) {
    if (j.movable()) q[k++] = j.default_value();
  }
  return q;
}

bool RobotModel::within_limits(const JointConfig& q, double tol) const {
  if (q.size() != dof()) return false;
  std::size_t k = 0;
  for (const Joint& j : joints) {
    if (!j.movable()) continue;
    const double v = q[k++];
    if (!std::isfinite(v) || v < j.limits.lower - tol || v > j.limits.upper + tol) return false;
  }
  return true;
}

const Obstacle* Workspace::find_obstacle(std::string_view obstacle_name) const {
  for (const Obstacle& o : obstacles) {
    if (o.name == obstacle_name) return &o;
  }
  return nullptr;
}

const Obstacle& Workspace::obstacle(std::string_view obstacle_name) const {
  if (const Obstacle* o = find_obstacle(obstacle_name)) return *o;
  throw Error(Errc::unknown_object, "unknown object '" + std::string(obstacle_name) + "'");
}

Obstacle& Workspace::obstacle(std::string_view obstacle_name) {
  return const_cast<Obstacle&>(std::as_const(*this).obstacle(obstacle_name));
}

const Obstacle* Workspace::attached_obstacle() const {
  for (const Obstacle& o : obstacles) {
    if (o.attached) return &o;
  }
  return nullptr;
}

JointConfig Workspace::expand_controlled(const std::vector<double>& values,
                                         const JointConfig& base) const {
  if (values.size() != controlled.size()) {
    throw Error(Errc::arity_mismatch, "expected " + std::to_string(controlled.size()) +
                                          " controlled joint values, got " +
                                          std::to_string(values.size()));
  }
  JointConfig q = base;
  for (std::size_t i = 0; i < controlled.size(); ++i) q[controlled[i]] = values[i];
  return q;
}

std::vector<double> Workspace::controlled_values(const JointConfig& q) const {
  std::vector<double> out;
  for (std::size_t i : controlled) out.push_back(q[i]);
  return out;
}

std::vector<bool> Workspace::locked_mask() const {
  std::vector<bool> locked(robot.dof(), true);
  for (std::size_t i : controlled) locked[i] = false;
  return locked;
}

// ---------------------------------------------------------------------------------------------
// validation

void validate(const RobotModel& robot) {
  std::set<std::string> link_names;
  for (const Link& l : robot.links) {
    if (l.name.empty()) throw Error(Errc::invalid_value, "empty link name");
    if (!link_names.insert(l.name).second) {
      throw Error(Errc::duplicate_name, "duplicate link name '" + l.name + "'");
    }
    if (l.shape && !l.shape->valid()) {
      throw Error(Errc::invalid_value, "nonpositive shape dimension", l.name);
    }
  }
  if (robot.links.empty()) throw Error(Errc::invalid_chain, "model has no links");
  if (robot.joints.size() + 1 != robot.links.size()) {
    throw Error(Errc::invalid_chain, "joints do not form a single serial chain");
  }
  for (std::size_t i = 0; i < robot.joints.size(); ++i) {
    const Joint& j = robot.joints[i];
    if (j.parent_link != robot.links[i].name || j.child_link != robot.links[i + 1].name) {
      throw Error(Errc::invalid_chain, "joint order does not follow the link chain", j.name);
    }
    if (j.movable()) {
      if (!(j.limits.lower <= j.limits.upper)) {
        throw Error(Errc::invalid_value, "lower limit exceeds upper", j.name);
      }
      if (!(j.limits.max_velocity > 0.0)) {
        throw Error(Errc::invalid_value, "velocity limit must be > 0", j.name);
      }
      if (std::abs(j.axis.norm() - 1.0) > 1e-9) {
        throw Error(Errc::invalid_value, "axis is not unit length", j.name);
      }
    }
  }
  robot.link_index(robot.ee_link);
}

void validate(const Workspace& ws) {
  validate(ws.robot);
  if (ws.robot.dof() < 1) throw Error(Errc::invalid_chain, "robot has no movable joints");
  if (ws.current_config.size() != ws.robot.dof()) {
    throw Error(Errc::arity_mismatch, "current configuration dimension differs from DOF");
  }
  if (!ws.robot.within_limits(ws.current_config)) {
    throw Error(Errc::limits_violated, "current configuration violates joint limits");
  }
  std::set<std::string> names;
  int attached = 0;
  for (const Obstacle& o : ws.obstacles) {
    if (o.name.empty()) throw Error(Errc::invalid_value, "empty obstacle name");
    if (!names.insert(o.name).second) {
      throw Error(Errc::duplicate_name, "duplicate obstacle name '" + o.name + "'");
    }
    if (!o.shape.valid()) throw Error(Errc::invalid_value, "nonpositive shape dimension", o.name);
    if (o.attached) {
      if (!o.graspable) throw Error(Errc::not_graspable, "attached object not graspable", o.name);
      ++attached;
    }
  }
  if (attached > 1) throw Error(Errc::already_attached, "more than one object attached");
  std::set<std::size_t> controlled(ws.controlled.begin(), ws.controlled.end());
  if (controlled.size() != ws.controlled.size()) {
    throw Error(Errc::duplicate_name, "duplicate controlled joint");
  }
  for (std::size_t i : ws.controlled) {
    if (i >= ws.robot.dof()) throw Error(Errc::invalid_value, "controlled index out of range");
  }
  if (!(ws.bounds.min.array() < ws.bounds.max.array()).all()) {
    throw Error(Errc::invalid_value, "empty workspace bounds");
  }
  ws.active_planner.validate();
}

bool equivalent(const Workspace& a, const Workspace& b, double tol) {
  auto same_shape = [](const std::optional<ShapePrimitive>& x,
                       const std::optional<ShapePrimitive>& y) {
    return x.has_value() == y.has_value() && (!x || *x == *y);
  };
  if (a.name != b.name || a.robot.name != b.robot.name || a.robot.ee_link != b.robot.ee_link) {
    return false;
  }
  if (!approx_equal(a.robot_base, b.robot_base, tol) ||
      !approx_equal(a.robot.ee_offset, b.robot.ee_offset, tol)) {
    return false;
  }
  if (a.robot.links.size() != b.robot.links.size() ||
      a.robot.joints.size() != b.robot.joints.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.robot.links.size(); ++i) {
    const Link &x = a.robot.links[i], &y = b.robot.links[i];
    if (x.name != y.name || !same_shape(x.shape, y.shape) ||
        !approx_equal(x.shape_offset, y.shape_offset, tol)) {
      return false;
    }
  }
  for (std::size_t i = 0; i < a.robot.joints.size(); ++i) {
    const Joint &x = a.robot.joints[i], &y = b.robot.joints[i];
    if (x.name != y.name || x.kind != y.kind || x.parent_link != y.parent_link ||
        x.child_link != y.child_link || !approx_equal(x.origin, y.origin, tol) ||
        (x.axis - y.axis).cwiseAbs().maxCoeff() > tol || x.limits.lower != y.limits.lower ||
        x.limits.upper != y.limits.upper || x.limits.max_velocity != y.limits.max_velocity) {
      return false;
    }
  }
  if (a.robot.gripper.has_value() != b.robot.gripper.has_value()) return false;
  if (a.robot.gripper && (a.robot.gripper->max_opening != b.robot.gripper->max_opening ||
                          a.robot.gripper->finger_reach != b.robot.gripper->finger_reach)) {
    return false;
  }
  if (a.obstacles.size() != b.obstacles.size()) return false;
  for (std::size_t i = 0; i < a.obstacles.size(); ++i) {
    const Obstacle &x = a.obstacles[i], &y = b.obstacles[i];
    if (x.name != y.name || !(x.shape == y.shape) || x.graspable != y.graspable ||
        !approx_equal(x.pose, y.pose, tol) || x.attached.has_value() != y.attached.has_value() ||
        (x.attached && !approx_equal(*x.attached, *y.attached, tol))) {
      return false;
    }
  }
  if ((a.bounds.min - b.bounds.min).cwiseAbs().maxCoeff() > tol ||
      (a.bounds.max - b.bounds.max).cwiseAbs().maxCoeff() > tol) {
    return false;
  }
  if (!(a.current_config == b.current_config) || !(a.active_planner == b.active_planner) ||
      a.controlled != b.controlled || a.query.has_value() != b.query.has_value()) {
    return false;
  }
  if (a.query && !(a.query->start == b.query->start && a.query->goal == b.query->goal)) {
    return false;
  }
  return true;
}

// ---------------------------------------------------------------------------------------------
// model files

namespace {

ShapePrimitive parse_shape(const xml::Element& e) {
  const std::string kind = e.required("kind");
  ShapePrimitive shape;
  if (kind == "box") {
    e.only_attributes({"kind", "half_x", "half_y", "half_z"});
    shape = ShapePrimitive::box(e.number("half_x"), e.number("half_y"), e.number("half_z"));
  } else if (kind == "sphere") {
    e.only_attributes({"kind", "radius"});
    shape = ShapePrimitive::sphere(e.number("radius"));
  } else if (kind == "cylinder" || kind == "capsule") {
    e.only_attributes({"kind", "radius", "half_length"});
    shape = kind == "cylinder" ? ShapePrimitive::cylinder(e.number("radius"), e.number("half_length"))
                               : ShapePrimitive::capsule(e.number("radius"), e.number("half_length"));
  } else {
    e.fail(Errc::invalid_value, "unknown shape kind '" + kind + "'");
  }
  if (!shape.valid()) e.fail(Errc::invalid_value, "nonpositive dimension");
  return shape;
}

void check_pose_attributes(const xml::Element& e) {
  e.only_attributes({"x", "y", "z", "qx", "qy", "qz", "qw", "roll", "pitch", "yaw"});
  e.children({});
}

Link parse_link(const xml::Element& e, std::vector<std::string>& warnings) {
  e.only_attributes({"name"});
  Link link;
  link.name = e.required("name");
  if (link.name.empty()) e.fail(Errc::invalid_value, "empty link name");
  bool saw_offset = false;
  for (const auto& [tag, child] : e.children({"Shape", "Offset"})) {
    if (tag == "Shape") {
      if (link.shape) child.fail(Errc::invalid_element, "more than one <Shape>");
      child.children({});
      link.shape = parse_shape(child);
    } else {
      if (saw_offset) child.fail(Errc::invalid_element, "more than one <Offset>");
      saw_offset = true;
      check_pose_attributes(child);
      link.shape_offset = child.pose(&warnings);
    }
  }
  return link;
}

Joint parse_joint(const xml::Element& e, std::vector<std::string>& warnings) {
  e.only_attributes({"name", "kind", "parent", "child"});
  Joint joint;
  joint.name = e.required("name");
  if (joint.name.empty()) e.fail(Errc::invalid_value, "empty joint name");
  const std::string kind = e.required("kind");
  if (kind == "revolute") {
    joint.kind = JointKind::revolute;
  } else if (kind == "prismatic") {
    joint.kind = JointKind::prismatic;
  } else if (kind == "fixed") {
    joint.kind = JointKind::fixed;
  } else {
    e.fail(Errc::invalid_value, "unknown joint kind '" + kind + "'");
  }
  joint.parent_link = e.required("parent");
  joint.child_link = e.required("child");
  bool saw_axis = false, saw_limits = false, saw_origin = false;
  for (const auto& [tag, child] : e.children({"Origin", "Axis", "Limits"})) {
    if (tag == "Origin") {
      if (saw_origin) child.fail(Errc::invalid_element, "more than one <Origin>");
      saw_origin = true;
      check_pose_attributes(child);
      joint.origin = child.pose(&warnings);
    } else if (tag == "Axis") {
      if (saw_axis) child.fail(Errc::invalid_element, "more than one <Axis>");
      saw_axis = true;
      child.only_attributes({"x", "y", "z"});
      child.children({});
      const Vec3 axis(child.number("x"), child.number("y"), child.number("z"));
      if (axis.norm() < 1e-9) child.fail(Errc::invalid_value, "zero-length axis");
      joint.axis = axis.normalized();
    } else {
      if (saw_limits) child.fail(Errc::invalid_element, "more than one <Limits>");
      saw_limits = true;
      child.only_attributes({"lower", "upper", "velocity"});
      child.children({});
      joint.limits.lower = child.number("lower");
      joint.limits.upper = child.number("upper");
      joint.limits.max_velocity = child.number("velocity");
      if (!(joint.limits.lower <= joint.limits.upper)) {
        child.fail(Errc::invalid_value, "lower limit exceeds upper");
      }
      if (!(joint.limits.max_velocity > 0.0)) {
        child.fail(Errc::invalid_value, "velocity must be > 0");
      }
    }
  }
  if (joint.movable()) {
    if (!saw_axis) e.fail(Errc::missing_attribute, "movable joint needs <Axis>");
    if (!saw_limits) e.fail(Errc::missing_attribute, "movable joint needs <Limits>");
  } else {
    joint.limits = {};
    joint.axis = Vec3::UnitZ();
  }
  return joint;
}

struct ModelDocument {
  RobotModel model;
  std::vector<std::string> warnings;
};

/// Parses and orders a model; does not enforce DOF (obstacle models have no joints).
ModelDocument parse_model_document(std::string_view content) {
  auto [root_tag, root_tree] = xml::parse_document(content);
  if (root_tag != "Model") {
    throw Error(Errc::invalid_element, "root element must be <Model>, got <" + root_tag + ">",
                "document");
  }
  const xml::Element root(root_tree, "Model");
  root.only_attributes({"name"});
  ModelDocument doc;
  RobotModel& model = doc.model;
  model.name = root.required("name");
  if (model.name.empty()) root.fail(Errc::invalid_value, "empty model name");

  std::vector<Link> links;
  std::vector<std::pair<Joint, std::string>> joints;  // joint + element path
  std::optional<std::string> ee_link;
  std::string ee_path;
  for (const auto& [tag, child] : root.children({"Link", "Joint", "EndEffector"})) {
    if (tag == "Link") {
      Link link = parse_link(child, doc.warnings);
      for (const Link& other : links) {
        if (other.name == link.name) {
          child.fail(Errc::duplicate_name, "duplicate link name '" + link.name + "'");
        }
      }
      links.push_back(std::move(link));
    } else if (tag == "Joint") {
      Joint joint = parse_joint(child, doc.warnings);
      for (const auto& [other, _] : joints) {
        if (other.name == joint.name) {
          child.fail(Errc::duplicate_name, "duplicate joint name '" + joint.name + "'");
        }
      }
      joints.emplace_back(std::move(joint), child.path());
    } else {
      if (ee_link) child.fail(Errc::invalid_element, "more than one <EndEffector>");
      child.only_attributes({"link", "grip_width", "finger_reach"});
      ee_link = child.required("link");
      ee_path = child.path();
      const auto width = child.optional_number("grip_width");
      const auto reach = child.optional_number("finger_reach");
      if (width.has_value() != reach.has_value()) {
        child.fail(Errc::missing_attribute, "grip_width and finger_reach must be given together");
      }
      if (width) {
        if (!(*width > 0.0) || !(*reach > 0.0)) {
          child.fail(Errc::invalid_value, "gripper dimensions must be > 0");
        }
        model.gripper = Gripper{*width, *reach};
      }
      bool saw_offset = false;
      for (const auto& [sub_tag, sub] : child.children({"Offset"})) {
        if (saw_offset) sub.fail(Errc::invalid_element, "more than one <Offset>");
        saw_offset = true;
        check_pose_attributes(sub);
        model.ee_offset = sub.pose(&doc.warnings);
      }
    }
  }
  if (links.empty()) root.fail(Errc::invalid_chain, "model has no links");

  // Order the chain base-to-tip.
  std::map<std::string, std::size_t> link_by_name;
  for (std::size_t i = 0; i < links.size(); ++i) link_by_name[links[i].name] = i;
  std::map<std::string, std::size_t> joint_by_parent;
  std::set<std::string> children;
  for (std::size_t i = 0; i < joints.size(); ++i) {
    const auto& [j, path] = joints[i];
    if (!link_by_name.count(j.parent_link)) {
      throw Error(Errc::invalid_chain, "unknown parent link '" + j.parent_link + "'", path);
    }
    if (!link_by_name.count(j.child_link)) {
      throw Error(Errc::invalid_chain, "unknown child link '" + j.child_link + "'", path);
    }
    if (!children.insert(j.child_link).second) {
      throw Error(Errc::invalid_chain, "duplicate child link '" + j.child_link + "'", path);
    }
    if (!joint_by_parent.emplace(j.parent_link, i).second) {
      throw Error(Errc::invalid_chain,
                  "link '" + j.parent_link + "' has more than one child joint (not serial)", path);
    }
  }
  std::vector<std::string> roots;
  for (const Link& l : links) {
    if (!children.count(l.name)) roots.push_back(l.name);
  }
  if (roots.size() != 1) {
    root.fail(Errc::invalid_chain, roots.empty() ? "kinematic chain is cyclic"
                                                 : "kinematic chain is disconnected");
  }
  std::string current = roots.front();
  model.links.push_back(links[link_by_name[current]]);
  while (joint_by_parent.count(current)) {
    const Joint& j = joints[joint_by_parent[current]].first;
    model.joints.push_back(j);
    current = j.child_link;
    model.links.push_back(links[link_by_name[current]]);
    if (model.links.size() > links.size()) root.fail(Errc::invalid_chain, "kinematic chain is cyclic");
  }
  if (model.links.size() != links.size()) {
    root.fail(Errc::invalid_chain, "kinematic chain is disconnected");
  }
  model.ee_link = ee_link.value_or(model.links.back().name);
  if (!link_by_name.count(model.ee_link)) {
    throw Error(Errc::invalid_chain, "unknown end-effector link '" + model.ee_link + "'", ee_path);
  }
  return doc;
}

PosedShape object_shape(const ModelDocument& doc, const std::string& where) {
  if (!doc.model.joints.empty() || doc.model.links.size() != 1 || !doc.model.links[0].shape) {
    throw Error(Errc::invalid_value, "obstacle model must be a single link with a shape", where);
  }
  return {*doc.model.links[0].shape, doc.model.links[0].shape_offset};
}

}  // namespace

PosedShape parse_object_model(std::string_view file_content) {
  return object_shape(parse_model_document(file_content), "Model");
}

RobotModel parse_robot_model(std::string_view file_content) {
  ModelDocument doc = parse_model_document(file_content);
  if (doc.model.dof() < 1) {
    throw Error(Errc::invalid_chain, "robot model has no movable joints", "Model");
  }
  validate(doc.model);
  return std::move(doc.model);
}

std::string serialize_robot_model(const RobotModel& robot) {
  std::ostringstream out;
  out << "<Model name=\"" << xml::escape(robot.name) << "\">\n";
  for (const Link& l : robot.links) {
    out << "  <Link name=\"" << xml::escape(l.name) << "\">\n";
    if (l.shape) {
      const ShapePrimitive& s = *l.shape;
      out << "    <Shape kind=\"" << to_string(s.kind) << "\"";
      switch (s.kind) {
        case ShapeKind::box:
          out << " half_x=\"" << xml::format_number(s.half_extents.x()) << "\" half_y=\""
              << xml::format_number(s.half_extents.y()) << "\" half_z=\""
              << xml::format_number(s.half_extents.z()) << "\"";
          break;
        case ShapeKind::sphere:
          out << " radius=\"" << xml::format_number(s.radius) << "\"";
          break;
        case ShapeKind::cylinder:
        case ShapeKind::capsule:
          out << " radius=\"" << xml::format_number(s.radius) << "\" half_length=\""
              << xml::format_number(s.half_length) << "\"";
          break;
      }
      out << "/>\n";
    }
    out << "    <Offset " << xml::pose_attributes(l.shape_offset) << "/>\n";
    out << "  </Link>\n";
  }
  for (const Joint& j : robot.joints) {
    out << "  <Joint name=\"" << xml::escape(j.name) << "\" kind=\"" << to_string(j.kind)
        << "\" parent=\"" << xml::escape(j.parent_link) << "\" child=\""
        << xml::escape(j.child_link) << "\">\n";
    out << "    <Origin " << xml::pose_attributes(j.origin) << "/>\n";
    if (j.movable()) {
      out << "    <Axis x=\"" << xml::format_number(j.axis.x()) << "\" y=\""
          << xml::format_number(j.axis.y()) << "\" z=\"" << xml::format_number(j.axis.z())
          << "\"/>\n";
      out << "    <Limits lower=\"" << xml::format_number(j.limits.lower) << "\" upper=\""
          << xml::format_number(j.limits.upper) << "\" velocity=\""
          << xml::format_number(j.limits.max_velocity) << "\"/>\n";
    }
    out << "  </Joint>\n";
  }
  out << "  <EndEffector link=\"" << xml::escape(robot.ee_link) << "\"";
  if (robot.gripper) {
    out << " grip_width=\"" << xml::format_number(robot.gripper->max_opening)
        << "\" finger_reach=\"" << xml::format_number(robot.gripper->finger_reach) << "\"";
  }
  out << ">\n    <Offset " << xml::pose_attributes(robot.ee_offset) << "/>\n  </EndEffector>\n";
  out << "</Model>\n";
  return out.str();
}

// ---------------------------------------------------------------------------------------------
// problem files

namespace {

bool is_absolute_reference(std::string_view path) {
  if (path.empty()) return false;
  if (path.front() == '/' || path.front() == '\\') return true;
  return path.size() >= 2 && std::isalpha(static_cast<unsigned char>(path[0])) && path[1] == ':';
}

std::string checked_reference(const xml::Element& e, const char* attribute) {
  std::string path = e.required(attribute);
  if (path.empty()) e.fail(Errc::unresolved_path, "empty path");
  if (is_absolute_reference(path)) {
    throw Error(Errc::absolute_path, "absolute path forbidden: '" + path + "'",
                e.path() + "@" + attribute);
  }
  return path;
}

Pose single_pose(const xml::Element& e, std::vector<std::string>& warnings) {
  Pose pose;
  bool seen = false;
  for (const auto& [tag, child] : e.children({"Pose"})) {
    if (seen) child.fail(Errc::invalid_element, "more than one <Pose>");
    seen = true;
    check_pose_attributes(child);
    pose = child.pose(&warnings);
  }
  return pose;
}

}  // namespace

ProblemFile parse_problem_document(std::string_view file_content) {
  auto [root_tag, root_tree] = xml::parse_document(file_content);
  if (root_tag != "Problem") {
    throw Error(Errc::invalid_element, "root element must be <Problem>, got <" + root_tag + ">",
                "document");
  }
  const xml::Element root(root_tree, "Problem");
  root.only_attributes({"name"});
  ProblemFile problem;
  problem.name = root.required("name");
  bool saw_robot = false, saw_planner = false, saw_query = false, saw_bounds = false;
  for (const auto& [tag, child] : root.children({"Robot", "Obstacle", "Bounds", "Planner", "Query"})) {
    if (tag == "Robot") {
      if (saw_robot) child.fail(Errc::invalid_element, "multiple robots are not supported");
      saw_robot = true;
      child.only_attributes({"model", "controls"});
      problem.robot.model = checked_reference(child, "model");
      problem.robot.controls = checked_reference(child, "controls");
      problem.robot.pose = single_pose(child, problem.warnings);
    } else if (tag == "Obstacle") {
      child.only_attributes({"name", "model", "graspable"});
      ProblemFile::ObstacleRef ref;
      ref.name = child.required("name");
      if (ref.name.empty()) child.fail(Errc::invalid_value, "empty obstacle name");
      for (const auto& other : problem.obstacles) {
        if (other.name == ref.name) {
          child.fail(Errc::duplicate_name, "duplicate obstacle name '" + ref.name + "'");
        }
      }
      ref.model = checked_reference(child, "model");
      ref.graspable = child.boolean("graspable");
      ref.pose = single_pose(child, problem.warnings);
      problem.obstacles.push_back(std::move(ref));
    } else if (tag == "Bounds") {
      if (saw_bounds) child.fail(Errc::invalid_element, "more than one <Bounds>");
      saw_bounds = true;
      child.only_attributes({"xmin", "ymin", "zmin", "xmax", "ymax", "zmax"});
      child.children({});
      Aabb box{Vec3(child.number("xmin"), child.number("ymin"), child.number("zmin")),
               Vec3(child.number("xmax"), child.number("ymax"), child.number("zmax"))};
      if (!(box.min.array() < box.max.array()).all()) {
        child.fail(Errc::invalid_value, "bounds minimum must be below maximum");
      }
      problem.bounds = box;
    } else if (tag == "Planner") {
      if (saw_planner) child.fail(Errc::invalid_element, "more than one <Planner>");
      saw_planner = true;
      child.only_attributes({"type"});
      problem.planner_type = child.required("type");
      if (!parse_planner_algorithm(problem.planner_type)) {
        throw Error(Errc::unknown_planner, "unknown planner '" + problem.planner_type + "'",
                    child.path() + "@type");
      }
      for (const auto& [ptag, param] : child.children({"Param"})) {
        param.only_attributes({"name", "value"});
        param.children({});
        std::string name = param.required("name");
        for (const auto& [existing, _] : problem.planner_params) {
          if (existing == name) param.fail(Errc::invalid_parameter, "duplicate parameter '" + name + "'");
        }
        problem.planner_params.emplace_back(std::move(name), param.required("value"));
      }
    } else {
      if (saw_query) child.fail(Errc::invalid_element, "more than one <Query>");
      saw_query = true;
      child.only_attributes({});
      bool saw_init = false, saw_goal = false;
      for (const auto& [qtag, values] : child.children({"Init", "Goal"})) {
        values.only_attributes({});
        values.children({});
        bool& seen = qtag == "Init" ? saw_init : saw_goal;
        if (seen) values.fail(Errc::invalid_element, "duplicate <" + qtag + ">");
        seen = true;
        (qtag == "Init" ? problem.init : problem.goal) =
            xml::parse_numbers(values.text(), values.path());
      }
      if (!saw_init || !saw_goal) child.fail(Errc::missing_attribute, "query needs <Init> and <Goal>");
    }
  }
  if (!saw_robot) root.fail(Errc::missing_attribute, "missing <Robot>");
  if (!saw_planner) root.fail(Errc::missing_attribute, "missing <Planner>");
  if (!saw_query) root.fail(Errc::missing_attribute, "missing <Query>");
  // Planner parameters are checked here so a bad document fails before model resolution.
  std::map<std::string, std::string> params(problem.planner_params.begin(),
                                            problem.planner_params.end());
  try {
    PlannerSpec::from_strings(problem.planner_type, params);
  } catch (const Error& e) {
    throw Error(e.code(), e.what(), "Problem/Planner[0]");
  }
  return problem;
}

std::string serialize_problem(const ProblemFile& problem) {
  std::ostringstream out;
  auto numbers = [](const std::vector<double>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) s += ' ';
      s += xml::format_number(values[i]);
    }
    return s;
  };
  out << "<Problem name=\"" << xml::escape(problem.name) << "\">\n";
  out << "  <Robot model=\"" << xml::escape(problem.robot.model) << "\" controls=\""
      << xml::escape(problem.robot.controls) << "\">\n";
  out << "    <Pose " << xml::pose_attributes(problem.robot.pose) << "/>\n  </Robot>\n";
  for (const auto& o : problem.obstacles) {
    out << "  <Obstacle name=\"" << xml::escape(o.name) << "\" model=\"" << xml::escape(o.model)
        << "\" graspable=\"" << (o.graspable ? "true" : "false") << "\">\n";
    out << "    <Pose " << xml::pose_attributes(o.pose) << "/>\n  </Obstacle>\n";
  }
  if (problem.bounds) {
    const Aabb& b = *problem.bounds;
    out << "  <Bounds xmin=\"" << xml::format_number(b.min.x()) << "\" ymin=\""
        << xml::format_number(b.min.y()) << "\" zmin=\"" << xml::format_number(b.min.z())
        << "\" xmax=\"" << xml::format_number(b.max.x()) << "\" ymax=\""
        << xml::format_number(b.max.y()) << "\" zmax=\"" << xml::format_number(b.max.z())
        << "\"/>\n";
  }
  out << "  <Planner type=\"" << xml::escape(problem.planner_type) << "\">\n";
  for (const auto& [name, value] : problem.planner_params) {
    out << "    <Param name=\"" << xml::escape(name) << "\" value=\"" << xml::escape(value)
        << "\"/>\n";
  }
  out << "  </Planner>\n";
  out << "  <Query>\n    <Init>" << numbers(problem.init) << "</Init>\n    <Goal>"
      << numbers(problem.goal) << "</Goal>\n  </Query>\n";
  out << "</Problem>\n";
  return out.str();
}

namespace {

std::vector<std::string> parse_controls(const std::string& content, const std::string& where) {
  std::vector<std::string> names;
  std::istringstream in(content);
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    std::string name = line.substr(first, last - first + 1);
    if (name.find_first_of(" \t") != std::string::npos) {
      throw Error(Errc::invalid_value, "one joint name per line expected", where);
    }
    names.push_back(std::move(name));
  }
  if (names.empty()) throw Error(Errc::invalid_value, "controls file lists no joints", where);
  return names;
}

Aabb default_bounds(const RobotModel& robot, const Pose& base) {
  const double half = robot.reach_radius() + 0.5;
  return {base.position - Vec3::Constant(half), base.position + Vec3::Constant(half)};
}

}  // namespace

Workspace build_workspace(const ProblemFile& problem, const ModelResolver& resolver) {
  Workspace ws;
  ws.name = problem.name;
  ws.warnings = problem.warnings;
  {
    ModelDocument doc = parse_model_document(resolver(problem.robot.model));
    if (doc.model.dof() < 1) {
      throw Error(Errc::invalid_chain, "robot model has no movable joints", problem.robot.model);
    }
    validate(doc.model);
    ws.robot = std::move(doc.model);
    for (auto& w : doc.warnings) ws.warnings.push_back(problem.robot.model + ": " + w);
  }
  ws.robot_base = problem.robot.pose;

  const std::vector<std::string> control_names =
      parse_controls(resolver(problem.robot.controls), problem.robot.controls);
  const std::vector<std::size_t> movable = ws.robot.movable_joints();
  for (const std::string& name : control_names) {
    std::optional<std::size_t> dof_index;
    for (std::size_t k = 0; k < movable.size(); ++k) {
      if (ws.robot.joints[movable[k]].name == name) dof_index = k;
    }
    if (!dof_index) {
      throw Error(Errc::invalid_value, "controls file names unknown or fixed joint '" + name + "'",
                  problem.robot.controls);
    }
    if (std::find(ws.controlled.begin(), ws.controlled.end(), *dof_index) != ws.controlled.end()) {
      throw Error(Errc::duplicate_name, "joint '" + name + "' listed twice",
                  problem.robot.controls);
    }
    ws.controlled.push_back(*dof_index);
  }

  for (const auto& ref : problem.obstacles) {
    ModelDocument doc = parse_model_document(resolver(ref.model));
    const PosedShape body = object_shape(doc, ref.model);
    for (auto& w : doc.warnings) ws.warnings.push_back(ref.model + ": " + w);
    Obstacle o;
    o.name = ref.name;
    o.shape = body.shape;
    o.pose = ref.pose * body.pose;
    o.graspable = ref.graspable;
    ws.obstacles.push_back(std::move(o));
  }

  ws.bounds = problem.bounds.value_or(default_bounds(ws.robot, ws.robot_base));

  std::map<std::string, std::string> params(problem.planner_params.begin(),
                                            problem.planner_params.end());
  ws.active_planner = PlannerSpec::from_strings(problem.planner_type, params);

  const JointConfig defaults = ws.robot.default_config();
  if (problem.init.size() != ws.controlled.size()) {
    throw Error(Errc::arity_mismatch,
                "init has " + std::to_string(problem.init.size()) + " values for " +
                    std::to_string(ws.controlled.size()) + " controlled joints",
                "Problem/Query[0]/Init[0]");
  }
  if (problem.goal.size() != ws.controlled.size()) {
    throw Error(Errc::arity_mismatch,
                "goal has " + std::to_string(problem.goal.size()) + " values for " +
                    std::to_string(ws.controlled.size()) + " controlled joints",
                "Problem/Query[0]/Goal[0]");
  }
  PlanningQuery query{ws.expand_controlled(problem.init, defaults),
                      ws.expand_controlled(problem.goal, defaults)};
  if (!ws.robot.within_limits(query.start)) {
    throw Error(Errc::limits_violated, "init violates joint limits", "Problem/Query[0]/Init[0]");
  }
  if (!ws.robot.within_limits(query.goal)) {
    throw Error(Errc::limits_violated, "goal violates joint limits", "Problem/Query[0]/Goal[0]");
  }
  ws.current_config = query.start;
  ws.query = std::move(query);
  validate(ws);
  return ws;
}

Workspace parse_problem_file(std::string_view file_content, const ModelResolver& resolver) {
  return build_workspace(parse_problem_document(file_content), resolver);
}

ModelResolver filesystem_resolver(fs::path root) {
  return [root = std::move(root)](const std::string& relative) -> std::string {
    if (is_absolute_reference(relative)) {
      throw Error(Errc::absolute_path, "absolute path forbidden: '" + relative + "'");
    }
    const fs::path full = root / relative;
    std::ifstream in(full, std::ios::binary);
    if (!in || fs::is_directory(full)) {
      throw Error(Errc::unresolved_path, "cannot resolve '" + relative + "'", relative);
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
  };
}

Workspace load_problem_directory(const fs::path& root, const std::string& problem_name) {
  for (const char* sub : {"models", "problems"}) {
    if (!fs::is_directory(root / sub)) {
      throw Error(Errc::missing_directory,
                  "missing '" + std::string(sub) + "/' below " + root.string());
    }
  }
  fs::path problem;
  if (problem_name.empty()) {
    std::vector<fs::path> candidates;
    for (const auto& entry : fs::directory_iterator(root / "problems")) {
      if (entry.is_regular_file() && entry.path().extension() == ".xml") {
        candidates.push_back(entry.path());
      }
    }
    if (candidates.empty()) throw Error(Errc::no_problem_file, "no problem file in problems/");
    if (candidates.size() > 1) {
      throw Error(Errc::ambiguous_problem, "several problem files; name one explicitly");
    }
    problem = candidates.front();
  } else {
    problem = root / "problems" / problem_name;
    if (problem.extension() != ".xml") problem += ".xml";
    if (!fs::is_regular_file(problem)) {
      throw Error(Errc::no_problem_file, "no problem file '" + problem_name + "'");
    }
  }
  std::ifstream in(problem, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_problem_file(buffer.str(), filesystem_resolver(root));
}

fs::path problem_root_for(const fs::path& problem_path) {
  const fs::path parent = fs::absolute(problem_path).parent_path();
  return parent.filename() == "problems" ? parent.parent_path() : parent;
}

Workspace load_problem_path(const fs::path& problem_path) {
  if (!fs::is_regular_file(problem_path)) {
    throw Error(Errc::no_problem_file, "no problem file '" + problem_path.string() + "'");
  }
  std::ifstream in(problem_path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_problem_file(buffer.str(), filesystem_resolver(problem_root_for(problem_path)));
}

Workspace attach_object(const Workspace& ws, std::string_view name, const Pose& grasp_tf) {
  if (!ws.robot.gripper) throw Error(Errc::no_gripper, "robot has no gripper");
  const Obstacle& target = ws.obstacle(name);
  if (!target.graspable) {
    throw Error(Errc::not_graspable, "'" + target.name + "' is not graspable");
  }
  if (target.attached) throw Error(Errc::already_attached, "'" + target.name + "' already attached");
  if (const Obstacle* held = ws.attached_obstacle()) {
    throw Error(Errc::already_attached, "gripper already holds '" + held->name + "'");
  }
  Workspace out = ws;
  out.obstacle(name).attached = grasp_tf;
  return out;
}

Workspace detach_object(const Workspace& ws, std::string_view name, const Pose& rest_pose) {
  const Obstacle& target = ws.obstacle(name);
  if (!target.attached) throw Error(Errc::not_attached, "'" + target.name + "' is not attached");
  Workspace out = ws;
  Obstacle& o = out.obstacle(name);
  o.attached.reset();
  o.pose = rest_pose;
  return out;
}

}  // namespace lang2manip
