#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lang2manip/collision.hpp"
#include "lang2manip/kinematics.hpp"
#include "lang2manip/motion_planner.hpp"
#include "lang2manip/scene.hpp"
#include "lang2manip/symbolic.hpp"

namespace lang2manip {

struct GroundingConfig {
  double pregrasp_clearance = 0.08;
  double place_clearance = 0.08;  // lift above the place pose before descending
  double push_standoff = 0.05;
  double push_step = 0.01;
  // Finger and palm boxes used to test a grasp with the gripper open.
  double finger_thickness = 0.01;
  double finger_depth = 0.02;
  double palm_height = 0.02;
  int ik_retries = 4;  // extra IK seeds tried when a solution is in collision
  double export_dt = 0.05;
  IkParams ik;
};

struct GraspPose {
  Pose grasp;     // tool frame at the grip point
  Pose pregrasp;  // grasp moved back along the approach
  Vec3 approach = -Vec3::UnitZ();
  double width = 0.0;  // object extent along the grip axis
};

enum class GraspErrorKind { unknown_object, not_graspable, no_gripper, too_wide, grasp_in_collision };

std::string_view to_string(GraspErrorKind kind);

struct GraspError {
  GraspErrorKind kind = GraspErrorKind::unknown_object;
  std::optional<std::pair<std::string, std::string>> witness;
  std::string message;
};

/// Open-gripper finger and palm boxes for a tool frame.
std::vector<PosedShape> gripper_shapes(const Workspace& ws, const Pose& tool,
                                       const GroundingConfig& config = {});

Result<GraspPose, GraspError> compute_grasp(const Workspace& ws, std::string_view object,
                                            Approach approach, const GroundingConfig& config = {});

enum class OutcomeStatus { success, grasp_failed, ik_failed, plan_failed };

std::string_view to_string(OutcomeStatus status);

struct StageTrajectory {
  std::string stage;
  Trajectory trajectory;
  /// Scene and filter the stage was planned against (attachment state included).
  std::shared_ptr<const Workspace> scene;
  CheckOptions options;
};

struct ActionOutcome {
  std::size_t index = 0;
  SymbolicAction action;
  OutcomeStatus status = OutcomeStatus::success;
  std::string stage;  // failing stage
  std::string message;
  std::optional<IkFailure> ik;
  std::optional<GraspErrorKind> grasp_error;
  std::optional<std::pair<std::string, std::string>> witness;
  std::optional<PlannerStats> stats;
  std::vector<StageTrajectory> trajectories;
  int queries_issued = 0;
  int queries_solved = 0;

  bool ok() const { return status == OutcomeStatus::success; }
  /// Failure summary sent back to the language model.
  nlohmann::json to_json() const;
};

struct GroundResult {
  ActionOutcome outcome;
  Workspace workspace;  // pre-action workspace when the action failed
};

GroundResult ground_action(const Workspace& ws, const SymbolicAction& action, std::size_t index,
                           std::uint64_t seed, const GroundingConfig& config = {});

struct ExecutionReport {
  std::vector<Plan> plans;  // first plan, then one per replan
  std::vector<ActionOutcome> outcomes;
  Workspace final_workspace;
  bool success = false;
  bool exhausted_repairs = false;
  std::optional<PlanError> plan_error;  // a replan that never validated
  int replans = 0;
  int queries_issued = 0;
  int queries_solved = 0;
};

/// Grounds actions in order. After a failure the whole task is replanned from the current
/// workspace with the failure attached, at most `max_repairs` times.
ExecutionReport execute_plan(const Workspace& ws, const Plan& plan, LlmClient& client,
                             int max_repairs, std::uint64_t seed,
                             const GroundingConfig& config = {},
                             std::string_view system_prompt = default_system_prompt());

/// Waypoints, timed samples and tool poses of one trajectory.
nlohmann::json trajectory_document(const Workspace& ws, const Trajectory& traj, double dt);
nlohmann::json execution_document(const ExecutionReport& report, double dt);

}  // namespace lang2manip
