#include "lang2manip/grounding.hpp"

#include <cmath>

#include "lang2manip/errors.hpp"
#include "lang2manip/random.hpp"
#include "lang2manip/textualizer.hpp"

namespace lang2manip {

using nlohmann::json;

std::string_view to_string(GraspErrorKind kind) {
  switch (kind) {
    case GraspErrorKind::unknown_object: return "unknown_object";
    case GraspErrorKind::not_graspable: return "not_graspable";
    case GraspErrorKind::no_gripper: return "no_gripper";
    case GraspErrorKind::too_wide: return "too_wide";
    case GraspErrorKind::grasp_in_collision: return "grasp_in_collision";
  }
  return "unknown_object";
}

std::string_view to_string(OutcomeStatus status) {
  switch (status) {
    case OutcomeStatus::success: return "success";
    case OutcomeStatus::grasp_failed: return "grasp_failed";
    case OutcomeStatus::ik_failed: return "ik_failed";
    case OutcomeStatus::plan_failed: return "plan_failed";
  }
  return "success";
}

namespace {

Quat frame_from_axes(const Vec3& y, const Vec3& z) {
  Mat3 r;
  r.col(0) = y.cross(z);
  r.col(1) = y;
  r.col(2) = z;
  return Quat(r).normalized();
}

std::optional<std::pair<std::string, std::string>> shape_vs_world(
    const Workspace& ws, const std::string& label, const PosedShape& shape,
    const std::vector<std::string>& skip) {
  for (const Obstacle& o : ws.obstacles) {
    if (o.attached || std::find(skip.begin(), skip.end(), o.name) != skip.end()) continue;
    if (shapes_collide(shape, {o.shape, o.pose}).colliding) return std::make_pair(label, o.name);
  }
  const Aabb box = bounding_box(shape.shape, shape.pose);
  if ((box.max.array() >= ws.bounds.max.array()).any() ||
      (box.min.array() <= ws.bounds.min.array()).any()) {
    return std::make_pair(label, std::string("bounds"));
  }
  return std::nullopt;
}

}  // namespace

std::vector<PosedShape> gripper_shapes(const Workspace& ws, const Pose& tool,
                                       const GroundingConfig& config) {
  const Gripper g = ws.robot.gripper.value_or(Gripper{});
  const double open = 0.5 * g.max_opening;
  const double t = config.finger_thickness;
  const double reach = std::max(g.finger_reach, 1e-3);
  std::vector<PosedShape> out;
  for (double side : {-1.0, 1.0}) {
    out.push_back({ShapePrimitive::box(0.5 * config.finger_depth, 0.5 * t, 0.5 * reach),
                   tool * Pose::from_translation(Vec3(0.0, side * (open + 0.5 * t), -0.5 * reach))});
  }
  out.push_back(
      {ShapePrimitive::box(0.5 * config.finger_depth, open + t, 0.5 * config.palm_height),
       tool * Pose::from_translation(Vec3(0.0, 0.0, -reach - 0.5 * config.palm_height))});
  return out;
}

Result<GraspPose, GraspError> compute_grasp(const Workspace& ws, std::string_view object,
                                            Approach approach, const GroundingConfig& config) {
  const Obstacle* o = ws.find_obstacle(object);
  if (!o) {
    return GraspError{GraspErrorKind::unknown_object, std::nullopt,
                      "no object named '" + std::string(object) + "'"};
  }
  if (!o->graspable || o->attached) {
    return GraspError{GraspErrorKind::not_graspable, std::nullopt,
                      "'" + o->name + (o->attached ? "' is already held" : "' is not graspable")};
  }
  if (!ws.robot.gripper) {
    return GraspError{GraspErrorKind::no_gripper, std::nullopt, "robot has no gripper"};
  }
  const Gripper& g = *ws.robot.gripper;
  const Aabb box = bounding_box(o->shape, ws.obstacle_pose(*o));
  const Vec3 c = box.center();
  const Vec3 h = 0.5 * box.extents();
  const double reach = g.finger_reach;

  GraspPose out;
  Vec3 grip = c;
  Vec3 axis;
  switch (approach) {
    case Approach::top:
      out.approach = -Vec3::UnitZ();
      grip.z() = box.max.z() - std::min(reach, h.z());
      axis = h.x() <= h.y() ? Vec3::UnitX() : Vec3::UnitY();
      break;
    case Approach::side_x_pos:
    case Approach::side_x_neg: {
      const double s = approach == Approach::side_x_pos ? 1.0 : -1.0;
      out.approach = s * Vec3::UnitX();
      grip.x() = (s > 0 ? box.min.x() : box.max.x()) + s * std::min(reach, h.x());
      axis = Vec3::UnitY();
      break;
    }
    case Approach::side_y_pos:
    case Approach::side_y_neg: {
      const double s = approach == Approach::side_y_pos ? 1.0 : -1.0;
      out.approach = s * Vec3::UnitY();
      grip.y() = (s > 0 ? box.min.y() : box.max.y()) + s * std::min(reach, h.y());
      axis = Vec3::UnitX();
      break;
    }
  }
  out.width = 2.0 * h.dot(axis);
  if (out.width > g.max_opening) {
    return GraspError{GraspErrorKind::too_wide, std::nullopt,
                      "'" + o->name + "' is " + format_fixed(out.width, 3) +
                          " m across the grip axis; gripper opens " +
                          format_fixed(g.max_opening, 3) + " m"};
  }
  const Quat q = frame_from_axes(axis, out.approach);
  out.grasp = Pose{grip, q};
  out.pregrasp = Pose{grip - out.approach * config.pregrasp_clearance, q};
  for (const PosedShape& s : gripper_shapes(ws, out.grasp, config)) {
    if (auto w = shape_vs_world(ws, "gripper", s, {o->name})) {
      return GraspError{GraspErrorKind::grasp_in_collision, w,
                        "open gripper collides with '" + w->second + "'"};
    }
  }
  return out;
}

// ---------------------------------------------------------------------------------------------

namespace {

struct IkStageFailure {
  std::optional<IkFailure> ik;
  std::optional<std::pair<std::string, std::string>> witness;
};

class Grounder {
 public:
  Grounder(const Workspace& ws, const SymbolicAction& action, std::size_t index, std::uint64_t seed,
           const GroundingConfig& config)
      : ws_(ws), seed_(seed), config_(config) {
    out_.index = index;
    out_.action = action;
  }

  GroundResult run(const Workspace& original) {
    bool ok = false;
    switch (out_.action.kind) {
      case ActionKind::pick: ok = pick(); break;
      case ActionKind::place: ok = place(); break;
      case ActionKind::move: ok = move(); break;
      case ActionKind::push: ok = push(); break;
    }
    if (!ok) return {std::move(out_), original};
    out_.status = OutcomeStatus::success;
    out_.stage.clear();
    out_.message.clear();
    return {std::move(out_), std::move(ws_)};
  }

 private:
  std::uint64_t stage_seed() { return derive_seed(seed_, ++stage_counter_); }

  bool fail(OutcomeStatus status, std::string stage, std::string message) {
    out_.status = status;
    out_.stage = std::move(stage);
    out_.message = std::move(message);
    return false;
  }

  Pose tool_pose(const JointConfig& q) const {
    return forward_kinematics(ws_.robot, ws_.robot_base, q).ee;
  }

  Result<JointConfig, IkStageFailure> solve(const Pose& target, const JointConfig& seed_q,
                                            const CheckOptions& options, int retries) {
    const std::uint64_t s = stage_seed();
    const std::vector<bool> locked = ws_.locked_mask();
    IkStageFailure failure;
    for (int k = 0; k <= retries; ++k) {
      JointConfig start = seed_q;
      if (k > 0) {
        Rng rng(derive_seed(s, k));
        for (std::size_t d = 0; d < start.size(); ++d) {
          if (locked[d]) continue;
          const JointLimits& lim = ws_.robot.movable_joint(d).limits;
          start[d] = rng.uniform(lim.lower, lim.upper);
        }
      }
      auto r = solve_ik(ws_.robot, ws_.robot_base, target, start, config_.ik,
                        derive_seed(s, 1000 + static_cast<std::uint64_t>(k)), locked);
      if (!r) {
        failure.ik = r.error();
        if (r.error().reason == IkFailureReason::unreachable) break;
        continue;
      }
      const CollisionReport report = check_config(ws_, r.value(), options);
      if (!report.in_collision) return std::move(r).value();
      failure.witness = report.witness;
    }
    return failure;
  }

  bool ik_failed(const IkStageFailure& f, const std::string& stage) {
    out_.ik = f.ik;
    out_.witness = f.witness;
    std::string message = "no collision-free IK solution for " + stage;
    if (f.witness) message += " (" + f.witness->first + " / " + f.witness->second + ")";
    else if (f.ik) message += " (" + std::string(to_string(f.ik->reason)) + ")";
    return fail(OutcomeStatus::ik_failed, stage, message);
  }

  bool plan_to(const JointConfig& goal, const CheckOptions& options, const std::string& stage) {
    PlannerSpec spec = ws_.active_planner;
    spec.algorithm = out_.action.effective_planner();
    spec.params.seed = stage_seed();
    ++out_.queries_issued;
    auto r = plan(ws_, spec, PlanningQuery{ws_.current_config, goal}, options);
    if (!r) {
      out_.witness = r.error().witness;
      out_.stats = r.error().stats;
      return fail(OutcomeStatus::plan_failed, stage,
                  std::string(to_string(r.error().reason)) + ": " + r.error().message);
    }
    ++out_.queries_solved;
    out_.trajectories.push_back(
        {stage, r.value(), std::make_shared<const Workspace>(ws_), options});
    ws_.current_config = r.value().waypoints.back();
    return true;
  }

  bool pick() {
    const std::string name = *out_.action.object;
    auto grasp = compute_grasp(ws_, name, out_.action.approach.value_or(Approach::top), config_);
    if (!grasp) {
      out_.grasp_error = grasp.error().kind;
      out_.witness = grasp.error().witness;
      return fail(OutcomeStatus::grasp_failed, "grasp",
                  std::string(to_string(grasp.error().kind)) + ": " + grasp.error().message);
    }
    const CheckOptions ignore_object{{name}};
    // The gripper is symmetric, so the grasp rotated half a turn about the approach is equivalent.
    const Quat flip = axis_angle(Vec3::UnitZ(), M_PI);
    std::optional<std::pair<JointConfig, JointConfig>> solution;
    IkStageFailure last;
    std::string last_stage;
    for (const Quat& turn : {Quat::Identity(), flip}) {
      const Pose pre{grasp.value().pregrasp.position, grasp.value().pregrasp.orientation * turn};
      const Pose at{grasp.value().grasp.position, grasp.value().grasp.orientation * turn};
      auto pre_q = solve(pre, ws_.current_config, {}, config_.ik_retries);
      if (!pre_q) {
        last = pre_q.error();
        last_stage = "pregrasp";
        continue;
      }
      auto at_q = solve(at, pre_q.value(), ignore_object, 0);
      if (!at_q) {
        last = at_q.error();
        last_stage = "grasp";
        continue;
      }
      solution = std::make_pair(pre_q.value(), at_q.value());
      break;
    }
    if (!solution) return ik_failed(last, last_stage);
    const auto& [pre_q, at_q] = *solution;
    if (!plan_to(pre_q, {}, "approach")) return false;
    if (!plan_to(at_q, ignore_object, "descend")) return false;
    const Pose object_pose = ws_.obstacle(name).pose;
    ws_ = attach_object(ws_, name, tool_pose(at_q).inverse() * object_pose);
    return plan_to(pre_q, {}, "retreat");
  }

  bool place() {
    const std::string name = *out_.action.object;
    const Obstacle* held = ws_.attached_obstacle();
    if (!held || held->name != name) {
      return fail(OutcomeStatus::grasp_failed, "place", "'" + name + "' is not held");
    }
    const Pose grasp_tf = *held->attached;
    const Pose& p = *out_.action.target_pose;
    const Pose above_object{p.position + Vec3::UnitZ() * config_.place_clearance, p.orientation};
    auto above_q = solve(above_object * grasp_tf.inverse(), ws_.current_config, {},
                         config_.ik_retries);
    if (!above_q) return ik_failed(above_q.error(), "above_place");
    auto place_q = solve(p * grasp_tf.inverse(), above_q.value(), {}, 0);
    if (!place_q) return ik_failed(place_q.error(), "place");
    if (!plan_to(above_q.value(), {}, "transfer")) return false;
    if (!plan_to(place_q.value(), {}, "descend")) return false;
    ws_ = detach_object(ws_, name, tool_pose(place_q.value()) * grasp_tf);
    return plan_to(above_q.value(), CheckOptions{{name}}, "retreat");
  }

  bool move() {
    const Pose target{*out_.action.waypoint, tool_pose(ws_.current_config).orientation};
    auto q = solve(target, ws_.current_config, {}, config_.ik_retries);
    if (!q) return ik_failed(q.error(), "waypoint");
    return plan_to(q.value(), {}, "move");
  }

  bool push() {
    const std::string name = *out_.action.object;
    const Vec3 d = out_.action.direction->normalized();
    const double length = *out_.action.distance;
    const Obstacle& o = ws_.obstacle(name);
    const Aabb box = bounding_box(o.shape, o.pose);
    const Vec3 half = 0.5 * box.extents();
    const Vec3 contact = box.center() - d * d.cwiseAbs().dot(half);
    Vec3 side = Vec3::UnitZ().cross(d);
    if (side.norm() < 1e-6) side = Vec3::UnitY();
    const Quat q = frame_from_axes(side.normalized(), d);
    const CheckOptions ignore_object{{name}};

    const Pose pre{contact - d * config_.push_standoff, q};
    auto pre_q = solve(pre, ws_.current_config, {}, config_.ik_retries);
    if (!pre_q) return ik_failed(pre_q.error(), "precontact");
    if (!plan_to(pre_q.value(), {}, "approach")) return false;

    const double travel = config_.push_standoff + length;
    const int steps = std::max(1, static_cast<int>(std::ceil(travel / config_.push_step)));
    Trajectory stroke;
    stroke.waypoints.push_back(ws_.current_config);
    for (int k = 1; k <= steps; ++k) {
      const Pose target{pre.position + d * (travel * k / steps), q};
      auto step_q = solve(target, stroke.waypoints.back(), ignore_object, 0);
      if (!step_q) return ik_failed(step_q.error(), "push");
      if (!edge_valid(ws_, stroke.waypoints.back(), step_q.value(),
                      ws_.active_planner.params.edge_resolution, false, ignore_object)) {
        return fail(OutcomeStatus::plan_failed, "push", "push stroke collides");
      }
      stroke.waypoints.push_back(step_q.value());
    }
    out_.trajectories.push_back(
        {"push", stroke, std::make_shared<const Workspace>(ws_), ignore_object});
    ws_.current_config = stroke.waypoints.back();

    Obstacle& moved = ws_.obstacle(name);
    moved.pose.position += d * length;
    if (auto w = shape_vs_world(ws_, name, {moved.shape, moved.pose}, {name})) {
      out_.witness = w;
      return fail(OutcomeStatus::plan_failed, "push",
                  "pushed object would collide with '" + w->second + "'");
    }
    const Pose back{tool_pose(ws_.current_config).position - d * config_.push_standoff, q};
    auto back_q = solve(back, ws_.current_config, ignore_object, 0);
    if (!back_q) return ik_failed(back_q.error(), "retreat");
    return plan_to(back_q.value(), ignore_object, "retreat");
  }

  Workspace ws_;
  std::uint64_t seed_;
  GroundingConfig config_;
  ActionOutcome out_;
  std::uint64_t stage_counter_ = 0;
};

}  // namespace

GroundResult ground_action(const Workspace& ws, const SymbolicAction& action, std::size_t index,
                           std::uint64_t seed, const GroundingConfig& config) {
  Grounder grounder(ws, action, index, seed, config);
  return grounder.run(ws);
}

json ActionOutcome::to_json() const {
  json j = {{"index", index},
            {"action", std::string(lang2manip::to_string(action.kind))},
            {"status", std::string(lang2manip::to_string(status))}};
  if (action.object) j["object"] = *action.object;
  if (!stage.empty()) j["stage"] = stage;
  if (!message.empty()) j["message"] = message;
  if (ik) {
    j["ik"] = {{"reason", std::string(lang2manip::to_string(ik->reason))},
               {"pos_error", ik->pos_error},
               {"rot_error", ik->rot_error}};
  }
  if (grasp_error) j["grasp_error"] = std::string(lang2manip::to_string(*grasp_error));
  if (witness) j["witness"] = {witness->first, witness->second};
  if (stats) {
    j["planner_stats"] = {{"iterations", stats->iterations},
                          {"start_tree_size", stats->start_tree_size},
                          {"goal_tree_size", stats->goal_tree_size}};
  }
  return j;
}

ExecutionReport execute_plan(const Workspace& ws, const Plan& plan, LlmClient& client,
                             int max_repairs, std::uint64_t seed, const GroundingConfig& config,
                             std::string_view system_prompt) {
  if (max_repairs < 0) throw Error(Errc::invalid_value, "max_repairs must be >= 0", "execute_plan");
  ExecutionReport report;
  report.final_workspace = ws;
  report.plans.push_back(plan);
  std::size_t global = 0;
  while (true) {
    const Plan& current = report.plans.back();
    std::optional<ActionOutcome> failure;
    for (const SymbolicAction& action : current.actions) {
      GroundResult r = ground_action(report.final_workspace, action, global,
                                     derive_seed(seed, global), config);
      ++global;
      report.queries_issued += r.outcome.queries_issued;
      report.queries_solved += r.outcome.queries_solved;
      report.final_workspace = std::move(r.workspace);
      report.outcomes.push_back(r.outcome);
      if (!r.outcome.ok()) {
        failure = std::move(r.outcome);
        break;
      }
    }
    if (!failure) {
      report.success = true;
      return report;
    }
    if (report.replans >= max_repairs) {
      report.exhausted_repairs = true;
      return report;
    }
    ++report.replans;
    const PromptBundle bundle = compose_prompt(current.task.empty() ? plan.task : current.task,
                                               system_prompt, textualize(report.final_workspace));
    const std::string feedback = "Executing action " + std::to_string(failure->index) +
                                 " failed: " + failure->to_json().dump() +
                                 "\nPropose a new plan for the remaining task from the current state.";
    auto next = request_plan(client, bundle, report.final_workspace, 0, feedback);
    if (!next) {
      report.plan_error = next.error();
      report.exhausted_repairs = true;
      return report;
    }
    report.plans.push_back(std::move(next).value());
  }
}

json trajectory_document(const Workspace& ws, const Trajectory& traj, double dt) {
  json waypoints = json::array(), poses = json::array(), samples = json::array();
  auto values = [](const JointConfig& q) {
    return json(std::vector<double>(q.values.data(), q.values.data() + q.values.size()));
  };
  for (const JointConfig& q : traj.waypoints) {
    waypoints.push_back(values(q));
    const auto c = forward_kinematics(ws.robot, ws.robot_base, q).ee.components();
    poses.push_back(json(std::vector<double>(c.begin(), c.end())));
  }
  for (const TimedConfig& s : interpolate_trajectory(ws.robot, traj, dt)) {
    samples.push_back({{"t", s.time}, {"q", values(s.q)}});
  }
  return {{"waypoints", waypoints},
          {"samples", samples},
          {"ee_poses", poses},
          {"stats",
           {{"iterations", traj.stats.iterations},
            {"start_tree_size", traj.stats.start_tree_size},
            {"goal_tree_size", traj.stats.goal_tree_size}}}};
}

json execution_document(const ExecutionReport& report, double dt) {
  json plans = json::array();
  for (const Plan& p : report.plans) plans.push_back(json::parse(serialize_plan(p)));
  json actions = json::array();
  for (const ActionOutcome& o : report.outcomes) {
    json a = o.to_json();
    json stages = json::array();
    for (const StageTrajectory& s : o.trajectories) {
      stages.push_back({{"stage", s.stage}, {"trajectory", trajectory_document(*s.scene, s.trajectory, dt)}});
    }
    a["stages"] = std::move(stages);
    actions.push_back(std::move(a));
  }
  json objects = json::object();
  for (const Obstacle& o : report.final_workspace.obstacles) {
    const auto c = report.final_workspace.obstacle_pose(o).components();
    objects[o.name] = std::vector<double>(c.begin(), c.end());
  }
  json doc = {{"success", report.success},
              {"exhausted_repairs", report.exhausted_repairs},
              {"replans", report.replans},
              {"plans", plans},
              {"actions", actions},
              {"queries", {{"issued", report.queries_issued}, {"solved", report.queries_solved}}},
              {"final_objects", objects}};
  if (report.plan_error) doc["plan_error"] = json::parse(report.plan_error->to_json());
  return doc;
}

}  // namespace lang2manip
