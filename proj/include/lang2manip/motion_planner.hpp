#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lang2manip/collision.hpp"
#include "lang2manip/joint_config.hpp"
#include "lang2manip/planner_spec.hpp"
#include "lang2manip/result.hpp"
#include "lang2manip/scene.hpp"

namespace lang2manip {

struct PlannerStats {
  int iterations = 0;
  std::size_t start_tree_size = 0;
  std::size_t goal_tree_size = 0;  // RRTConnect only
  double wall_time = 0.0;          // seconds; informational, never exported
};

struct Trajectory {
  std::vector<JointConfig> waypoints;
  PlannerStats stats;
};

enum class PlanFailureReason { start_invalid, goal_invalid, timeout };

std::string_view to_string(PlanFailureReason reason);

struct PlanFailure {
  PlanFailureReason reason = PlanFailureReason::timeout;
  std::optional<std::pair<std::string, std::string>> witness;
  std::string message;
  PlannerStats stats;
};

/// Joint-space RRT / RRTConnect over the workspace's controlled joints; frozen joints keep their
/// start values. `options` filters obstacles out of every collision query.
Result<Trajectory, PlanFailure> plan(const Workspace& ws, const PlannerSpec& spec,
                                     const PlanningQuery& query, const CheckOptions& options = {});

/// Sum of joint-space distances between consecutive waypoints.
double path_length(const Trajectory& traj);

/// Random shortcutting. Edges are validated the same way the planner validates them.
Trajectory shortcut(const Workspace& ws, const Trajectory& traj, int passes, std::uint64_t seed,
                    double edge_resolution = PlannerParams{}.edge_resolution,
                    bool certified = true, const CheckOptions& options = {});

/// Edge test used by the planner: sampled, optionally clearance-certified.
bool edge_valid(const Workspace& ws, const JointConfig& from, const JointConfig& to,
                double resolution, bool certified, const CheckOptions& options = {});

struct TimedConfig {
  double time = 0.0;
  JointConfig q;
};

/// Piecewise-linear timing where each segment takes max_j |dq_j| / max_velocity_j.
/// Samples every `dt`, with the final sample exactly at the last waypoint.
std::vector<TimedConfig> interpolate_trajectory(const RobotModel& robot, const Trajectory& traj,
                                                double dt);

}  // namespace lang2manip
