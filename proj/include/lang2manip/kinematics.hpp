#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string_view>
#include <vector>

#include "lang2manip/geometry.hpp"
#include "lang2manip/joint_config.hpp"
#include "lang2manip/result.hpp"
#include "lang2manip/scene.hpp"

namespace lang2manip {

using Matrix6X = Eigen::Matrix<double, 6, Eigen::Dynamic>;
using Vector6 = Eigen::Matrix<double, 6, 1>;

struct FkResult {
  std::vector<Pose> links;  // world frame of each link, base-to-tip
  Pose ee;                  // tool frame
};

FkResult forward_kinematics(const RobotModel& robot, const Pose& base, const JointConfig& q);

/// Geometric Jacobian of the tool frame (rows: linear velocity, angular velocity; world frame).
Matrix6X jacobian(const RobotModel& robot, const Pose& base, const JointConfig& q);

/// Position error `desired - current` and axis-angle of R_desired * R_current^T.
Vector6 pose_error(const Pose& current, const Pose& desired);

struct IkParams {
  double pos_tol = 1e-4;
  double rot_tol = 1e-3;
  int max_iters = 200;
  double damping = 0.05;
  int max_restarts = 10;
  double step_clamp = 0.2;

  bool valid() const;
};

enum class IkFailureReason { unreachable, joint_limits, singular, max_iters };

std::string_view to_string(IkFailureReason reason);

struct IkFailure {
  IkFailureReason reason = IkFailureReason::max_iters;
  double pos_error = 0.0;
  double rot_error = 0.0;
};

/// Damped least-squares IK with random restarts. Attempt 0 starts at `seed`; later attempts
/// start uniformly within limits. Returns the converged attempt closest to `seed`.
/// `locked` (optional, one flag per DOF) freezes joints at their seed value.
Result<JointConfig, IkFailure> solve_ik(const RobotModel& robot, const Pose& base,
                                        const Pose& target, const JointConfig& seed,
                                        const IkParams& params, std::uint64_t rng_seed,
                                        const std::vector<bool>& locked = {});

}  // namespace lang2manip
