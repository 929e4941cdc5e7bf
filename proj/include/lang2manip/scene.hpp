#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lang2manip/geometry.hpp"
#include "lang2manip/joint_config.hpp"
#include "lang2manip/planner_spec.hpp"

namespace lang2manip {

enum class JointKind { revolute, prismatic, fixed };

std::string_view to_string(JointKind kind);

struct JointLimits {
  double lower = 0.0;
  double upper = 0.0;
  double max_velocity = 1.0;
};

struct Joint {
  std::string name;
  JointKind kind = JointKind::fixed;
  std::string parent_link;
  std::string child_link;
  Pose origin;  // parent link frame -> joint frame
  Vec3 axis = Vec3::UnitZ();
  JointLimits limits;

  bool movable() const { return kind != JointKind::fixed; }
  /// Value used for joints the controls file leaves frozen: 0 clamped into the limits.
  double default_value() const;
};

struct Link {
  std::string name;
  std::optional<ShapePrimitive> shape;
  Pose shape_offset;  // link frame -> shape frame
};

struct Gripper {
  double max_opening = 0.0;  // meters between open fingers
  double finger_reach = 0.0;
};

/// Serial kinematic chain. `links` and `joints` are stored base-to-tip: joints[i] connects
/// links[i] to links[i + 1].
struct RobotModel {
  std::string name;
  std::vector<Link> links;
  std::vector<Joint> joints;
  std::string ee_link;
  Pose ee_offset;  // ee_link frame -> tool frame
  std::optional<Gripper> gripper;

  std::size_t dof() const;
  std::size_t link_index(std::string_view link) const;  // throws when absent
  std::size_t ee_index() const { return link_index(ee_link); }
  /// Indices into `joints` of the movable joints, in DOF order.
  std::vector<std::size_t> movable_joints() const;
  const Joint& movable_joint(std::size_t dof_index) const;
  /// Conservative reach radius from the chain root: joint offsets, tool offset and prismatic travel.
  double reach_radius() const;
  JointConfig default_config() const;
  bool within_limits(const JointConfig& q, double tol = 0.0) const;
};

struct Obstacle {
  std::string name;
  ShapePrimitive shape;
  Pose pose;  // world frame; stale while attached
  bool graspable = false;
  std::optional<Pose> attached;  // shape pose relative to the tool frame while held
};

struct PlanningQuery {
  JointConfig start;
  JointConfig goal;
};

/// Robot, obstacles and bounds: the single source of geometric truth for one planning session.
struct Workspace {
  std::string name;
  RobotModel robot;
  Pose robot_base;
  std::vector<Obstacle> obstacles;
  Aabb bounds;
  JointConfig current_config;
  PlannerSpec active_planner;
  /// DOF indices of the controlled joints, in controls-file order.
  std::vector<std::size_t> controlled;
  std::optional<PlanningQuery> query;
  /// Non-fatal parse notes (e.g. quaternions that had to be normalized).
  std::vector<std::string> warnings;

  const Obstacle& obstacle(std::string_view obstacle_name) const;  // throws unknown_object
  Obstacle& obstacle(std::string_view obstacle_name);
  const Obstacle* find_obstacle(std::string_view obstacle_name) const;
  /// The held object, if any.
  const Obstacle* attached_obstacle() const;
  /// World pose of an obstacle, following the tool frame while attached.
  Pose obstacle_pose(const Obstacle& obstacle) const;
  Pose obstacle_pose(const Obstacle& obstacle, const JointConfig& q) const;
  /// Full configuration from values for the controlled joints; others copied from `base`.
  JointConfig expand_controlled(const std::vector<double>& values, const JointConfig& base) const;
  std::vector<double> controlled_values(const JointConfig& q) const;
  /// Joint-lock mask: true for DOF the controls file leaves frozen.
  std::vector<bool> locked_mask() const;
};

/// Throws Error on any type-invariant violation.
void validate(const RobotModel& robot);
void validate(const Workspace& ws);

/// Field-wise equality with poses compared to `tol`.
bool equivalent(const Workspace& a, const Workspace& b, double tol);

/// Parsed problem document prior to model resolution.
struct ProblemFile {
  struct RobotRef {
    std::string model;
    std::string controls;
    Pose pose;
  };
  struct ObstacleRef {
    std::string name;
    std::string model;
    bool graspable = false;
    Pose pose;
  };
  std::string name;
  RobotRef robot;
  std::vector<ObstacleRef> obstacles;
  std::optional<Aabb> bounds;
  std::string planner_type;
  std::vector<std::pair<std::string, std::string>> planner_params;
  std::vector<double> init;
  std::vector<double> goal;
  std::vector<std::string> warnings;
};

using ModelResolver = std::function<std::string(const std::string& relative_path)>;

RobotModel parse_robot_model(std::string_view file_content);
std::string serialize_robot_model(const RobotModel& robot);
/// Obstacle model: one link carrying one shape. The pose is the shape offset in the model frame.
PosedShape parse_object_model(std::string_view file_content);

ProblemFile parse_problem_document(std::string_view file_content);
std::string serialize_problem(const ProblemFile& problem);
Workspace build_workspace(const ProblemFile& problem, const ModelResolver& resolver);
Workspace parse_problem_file(std::string_view file_content, const ModelResolver& resolver);

/// Resolver reading files below `root`; rejects absolute paths.
ModelResolver filesystem_resolver(std::filesystem::path root);
Workspace load_problem_directory(const std::filesystem::path& root,
                                 const std::string& problem_name = {});
/// Loads a problem file by path; the root is the parent of its `problems/` directory.
Workspace load_problem_path(const std::filesystem::path& problem_path);
std::filesystem::path problem_root_for(const std::filesystem::path& problem_path);

Workspace attach_object(const Workspace& ws, std::string_view name, const Pose& grasp_tf);
Workspace detach_object(const Workspace& ws, std::string_view name, const Pose& rest_pose);

}  // namespace lang2manip
