#include "lang2manip/kinematics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

#include "lang2manip/errors.hpp"
#include "lang2manip/random.hpp"

namespace lang2manip {

namespace {

Pose joint_motion(const Joint& joint, double value) {
  switch (joint.kind) {
    case JointKind::revolute: return Pose{Vec3::Zero(), axis_angle(joint.axis, value)};
    case JointKind::prismatic: return Pose::from_translation(joint.axis * value);
    case JointKind::fixed: break;
  }
  return Pose::identity();
}

void check_dimension(const RobotModel& robot, const JointConfig& q) {
  if (q.size() != robot.dof()) {
    throw Error(Errc::arity_mismatch, "configuration has " + std::to_string(q.size()) +
                                          " values for a " + std::to_string(robot.dof()) +
                                          "-DOF robot");
  }
}

}  // namespace

FkResult forward_kinematics(const RobotModel& robot, const Pose& base, const JointConfig& q) {
  check_dimension(robot, q);
  FkResult out;
  out.links.reserve(robot.links.size());
  out.links.push_back(base);
  std::size_t k = 0;
  for (const Joint& joint : robot.joints) {
    const double value = joint.movable() ? q[k++] : 0.0;
    out.links.push_back(out.links.back() * joint.origin * joint_motion(joint, value));
  }
  out.ee = out.links[robot.ee_index()] * robot.ee_offset;
  return out;
}

Matrix6X jacobian(const RobotModel& robot, const Pose& base, const JointConfig& q) {
  check_dimension(robot, q);
  const std::size_t ee_index = robot.ee_index();
  Matrix6X jac = Matrix6X::Zero(6, static_cast<Eigen::Index>(robot.dof()));

  std::vector<Pose> joint_frames;
  Pose frame = base;
  std::size_t k = 0;
  std::vector<std::size_t> dof_of_joint(robot.joints.size(), SIZE_MAX);
  for (std::size_t i = 0; i < robot.joints.size(); ++i) {
    const Joint& joint = robot.joints[i];
    const Pose joint_frame = frame * joint.origin;
    joint_frames.push_back(joint_frame);
    const double value = joint.movable() ? q[k] : 0.0;
    if (joint.movable()) dof_of_joint[i] = k++;
    frame = joint_frame * joint_motion(joint, value);
  }
  const Vec3 p_ee = forward_kinematics(robot, base, q).ee.position;
  // Joints past the end-effector link do not move the tool frame.
  for (std::size_t i = 0; i < ee_index && i < robot.joints.size(); ++i) {
    const Joint& joint = robot.joints[i];
    if (!joint.movable()) continue;
    const Eigen::Index col = static_cast<Eigen::Index>(dof_of_joint[i]);
    const Vec3 z = joint_frames[i].orientation * joint.axis;
    if (joint.kind == JointKind::revolute) {
      jac.block<3, 1>(0, col) = z.cross(p_ee - joint_frames[i].position);
      jac.block<3, 1>(3, col) = z;
    } else {
      jac.block<3, 1>(0, col) = z;
    }
  }
  return jac;
}

Vector6 pose_error(const Pose& current, const Pose& desired) {
  Vector6 e;
  e.head<3>() = desired.position - current.position;
  e.tail<3>() = rotation_vector(desired.orientation * current.orientation.conjugate());
  return e;
}

bool IkParams::valid() const {
  return pos_tol > 0.0 && rot_tol > 0.0 && max_iters > 0 && damping > 0.0 && max_restarts >= 0 &&
         step_clamp > 0.0;
}

std::string_view to_string(IkFailureReason reason) {
  switch (reason) {
    case IkFailureReason::unreachable: return "unreachable";
    case IkFailureReason::joint_limits: return "joint_limits";
    case IkFailureReason::singular: return "singular";
    case IkFailureReason::max_iters: return "max_iters";
  }
  return "?";
}

namespace {

struct Attempt {
  JointConfig q;
  bool converged = false;
  double pos_error = std::numeric_limits<double>::infinity();
  double rot_error = std::numeric_limits<double>::infinity();
  bool pinned_at_limit = false;
  double min_singular_value = 0.0;
};

Attempt run_attempt(const RobotModel& robot, const Pose& base, const Pose& target,
                    JointConfig q, const IkParams& params, const std::vector<bool>& locked,
                    const std::vector<std::size_t>& movable) {
  Attempt out;
  const Eigen::Index n = static_cast<Eigen::Index>(q.size());
  const double lambda2 = params.damping * params.damping;
  for (int iter = 0; iter <= params.max_iters; ++iter) {
    const Vector6 e = pose_error(forward_kinematics(robot, base, q).ee, target);
    out.q = q;
    out.pos_error = e.head<3>().norm();
    out.rot_error = e.tail<3>().norm();
    if (out.pos_error <= params.pos_tol && out.rot_error <= params.rot_tol) {
      out.converged = true;
      return out;
    }
    Matrix6X jac = jacobian(robot, base, q);
    for (Eigen::Index c = 0; c < n; ++c) {
      if (!locked.empty() && locked[static_cast<std::size_t>(c)]) jac.col(c).setZero();
    }
    if (iter == params.max_iters) {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac);
      out.min_singular_value = svd.singularValues().minCoeff();
      break;
    }
    const Eigen::Matrix<double, 6, 6> jjt =
        jac * jac.transpose() + lambda2 * Eigen::Matrix<double, 6, 6>::Identity();
    Eigen::VectorXd dq = jac.transpose() * jjt.ldlt().solve(e);
    const double largest = dq.cwiseAbs().maxCoeff();
    if (largest > params.step_clamp) dq *= params.step_clamp / largest;

    out.pinned_at_limit = false;
    for (Eigen::Index c = 0; c < n; ++c) {
      const JointLimits& lim = robot.joints[movable[static_cast<std::size_t>(c)]].limits;
      const double raw = q.values[c] + dq[c];
      const double clamped = std::clamp(raw, lim.lower, lim.upper);
      if (clamped != raw) out.pinned_at_limit = true;
      q.values[c] = clamped;
    }
  }
  return out;
}

}  // namespace

Result<JointConfig, IkFailure> solve_ik(const RobotModel& robot, const Pose& base,
                                        const Pose& target, const JointConfig& seed,
                                        const IkParams& params, std::uint64_t rng_seed,
                                        const std::vector<bool>& locked) {
  check_dimension(robot, seed);
  if (!params.valid()) throw Error(Errc::invalid_parameter, "IK parameters must be positive");
  if (!locked.empty() && locked.size() != robot.dof()) {
    throw Error(Errc::arity_mismatch, "lock mask size differs from DOF");
  }
  const double distance_to_root = (target.position - base.position).norm();
  if (distance_to_root > robot.reach_radius()) {
    return IkFailure{IkFailureReason::unreachable, distance_to_root - robot.reach_radius(),
                     0.0};
  }

  const std::vector<std::size_t> movable = robot.movable_joints();
  JointConfig start = seed;
  for (std::size_t c = 0; c < start.size(); ++c) {
    const JointLimits& lim = robot.joints[movable[c]].limits;
    start[c] = std::clamp(start[c], lim.lower, lim.upper);
  }

  Rng rng(rng_seed);
  std::optional<Attempt> best_success;
  double best_success_distance = std::numeric_limits<double>::infinity();
  std::optional<Attempt> best_failure;
  for (int attempt = 0; attempt <= params.max_restarts; ++attempt) {
    JointConfig q0 = start;
    if (attempt > 0) {
      for (std::size_t c = 0; c < q0.size(); ++c) {
        if (!locked.empty() && locked[c]) continue;
        const JointLimits& lim = robot.joints[movable[c]].limits;
        q0[c] = rng.uniform(lim.lower, lim.upper);
      }
    }
    Attempt result = run_attempt(robot, base, target, q0, params, locked, movable);
    if (result.converged) {
      const double d = distance(result.q, seed);
      if (d < best_success_distance) {
        best_success_distance = d;
        best_success = std::move(result);
      }
    } else if (!best_failure || result.pos_error + result.rot_error <
                                    best_failure->pos_error + best_failure->rot_error) {
      best_failure = std::move(result);
    }
  }
  if (best_success) return best_success->q;

  IkFailure failure;
  failure.pos_error = best_failure->pos_error;
  failure.rot_error = best_failure->rot_error;
  if (best_failure->pinned_at_limit) {
    failure.reason = IkFailureReason::joint_limits;
  } else if (best_failure->min_singular_value < 1e-6) {
    failure.reason = IkFailureReason::singular;
  } else {
    failure.reason = IkFailureReason::max_iters;
  }
  return failure;
}

// Workspace helpers that need forward kinematics.

Pose Workspace::obstacle_pose(const Obstacle& o) const { return obstacle_pose(o, current_config); }

Pose Workspace::obstacle_pose(const Obstacle& o, const JointConfig& q) const {
  if (!o.attached) return o.pose;
  return forward_kinematics(robot, robot_base, q).ee * *o.attached;
}

}  // namespace lang2manip
