#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fixtures.hpp"

using namespace l2m_test;

namespace {

constexpr double kPi = std::numbers::pi;

Vec3 ee_position(const RobotModel& robot, const JointConfig& q) {
  return forward_kinematics(robot, Pose::identity(), q).ee.position;
}

/// Central differences of FK: position directly, orientation through the relative rotation.
Matrix6X numeric_jacobian(const RobotModel& robot, const Pose& base, const JointConfig& q,
                          double h = 1e-6) {
  Matrix6X out(6, static_cast<Eigen::Index>(q.size()));
  for (std::size_t i = 0; i < q.size(); ++i) {
    JointConfig plus = q, minus = q;
    plus[i] += h;
    minus[i] -= h;
    const Pose a = forward_kinematics(robot, base, plus).ee;
    const Pose b = forward_kinematics(robot, base, minus).ee;
    out.block<3, 1>(0, static_cast<Eigen::Index>(i)) = (a.position - b.position) / (2 * h);
    out.block<3, 1>(3, static_cast<Eigen::Index>(i)) =
        rotation_vector(a.orientation * b.orientation.inverse()) / (2 * h);
  }
  return out;
}

double rotation_distance(const Quat& a, const Quat& b) {
  return rotation_vector(a * b.inverse()).norm();
}

}  // namespace

TEST(ForwardKinematics, PlanarArmHandGeometry) {
  const RobotModel arm = fixture_robot("planar2");
  EXPECT_LE((ee_position(arm, {0, 0}) - Vec3(2, 0, 0)).norm(), 1e-12);
  EXPECT_LE((ee_position(arm, {kPi / 2, 0}) - Vec3(0, 2, 0)).norm(), 1e-12);
  EXPECT_LE((ee_position(arm, {0, kPi / 2}) - Vec3(1, 1, 0)).norm(), 1e-12);
}

TEST(ForwardKinematics, OneFramePerLinkAndBaseApplied) {
  const RobotModel arm = fixture_robot("planar2");
  const Pose base = Pose::from_translation({0.5, -1.0, 0.2});
  const FkResult fk = forward_kinematics(arm, base, {0, 0});
  ASSERT_EQ(fk.links.size(), arm.links.size());
  EXPECT_LE((fk.links[2].position - Vec3(1.5, -1.0, 0.2)).norm(), 1e-12);
  EXPECT_LE((fk.ee.position - Vec3(2.5, -1.0, 0.2)).norm(), 1e-12);
}

TEST(ForwardKinematics, PrismaticSliderTranslates) {
  const RobotModel slider = fixture_robot("slider1");
  EXPECT_LE((ee_position(slider, {0.3}) - Vec3(0.3, 0, 0)).norm(), 1e-12);
}

TEST(Jacobian, PlanarArmAtZero) {
  const Matrix6X j = jacobian(fixture_robot("planar2"), Pose::identity(), {0, 0});
  EXPECT_NEAR(j(0, 0), 0.0, 1e-12);
  EXPECT_NEAR(j(1, 0), 2.0, 1e-12);
  EXPECT_NEAR(j(1, 1), 1.0, 1e-12);
  EXPECT_NEAR(j(5, 0), 1.0, 1e-12);
  EXPECT_NEAR(j(5, 1), 1.0, 1e-12);
}

TEST(Jacobian, PrismaticColumn) {
  const Matrix6X j = jacobian(fixture_robot("slider1"), Pose::identity(), {0.4});
  Vector6 expected;
  expected << 1, 0, 0, 0, 0, 0;
  EXPECT_LE((j.col(0) - expected).norm(), 1e-12);
}

TEST(Jacobian, MatchesFiniteDifferencesOnRandomConfigs) {
  const std::vector<RobotModel> robots = {fixture_robot("planar2"), fixture_robot("arm3"),
                                          fixture_robot("chain7"), panda(), fixture_robot("point2")};
  Rng rng(42);
  const Pose base = Pose{Vec3(0.1, -0.2, 0.3), axis_angle(Vec3(1, 2, 3).normalized(), 0.7)};
  for (int trial = 0; trial < 100; ++trial) {
    const RobotModel& robot = robots[static_cast<std::size_t>(trial) % robots.size()];
    const JointConfig q = random_config(robot, rng);
    const Matrix6X analytic = jacobian(robot, base, q);
    const Matrix6X numeric = numeric_jacobian(robot, base, q);
    EXPECT_LE((analytic - numeric).cwiseAbs().maxCoeff(), 1e-5) << robot.name << " trial " << trial;
  }
}

TEST(PoseError, Examples) {
  const Pose p{Vec3(0.3, 0.1, 0.2), axis_angle(Vec3::UnitX(), 0.4)};
  EXPECT_LE(pose_error(p, p).norm(), 1e-15);
  Pose shifted = p;
  shifted.position.x() += 0.1;
  Vector6 expected;
  expected << 0.1, 0, 0, 0, 0, 0;
  EXPECT_LE((pose_error(p, shifted) - expected).norm(), 1e-12);
  Pose turned = p;
  turned.orientation = axis_angle(Vec3::UnitZ(), kPi / 2) * p.orientation;
  EXPECT_NEAR(pose_error(p, turned).tail<3>().norm(), kPi / 2, 1e-12);
  Pose flipped = p;
  flipped.orientation.coeffs() *= -1.0;
  EXPECT_LE(pose_error(p, flipped).norm(), 1e-12);
}

TEST(InverseKinematics, PlanarArmReachesAnalyticSolution) {
  const RobotModel arm = fixture_robot("planar2");
  // Tool yaw pi/2 at (1, 1) singles out q = (0, pi/2); the other branch has yaw 0.
  const Pose target{Vec3(1, 1, 0), axis_angle(Vec3::UnitZ(), kPi / 2)};
  const auto r = solve_ik(arm, Pose::identity(), target, {0.3, 0.3}, IkParams{}, 1);
  ASSERT_TRUE(r.ok());
  EXPECT_LE((ee_position(arm, r.value()) - Vec3(1, 1, 0)).norm(), 1e-4);
  EXPECT_NEAR(r.value()[0], 0.0, 1e-3);
  EXPECT_NEAR(r.value()[1], kPi / 2, 1e-3);

  const Pose other{Vec3(1, 1, 0), Quat::Identity()};
  const auto r2 = solve_ik(arm, Pose::identity(), other, {1.0, -1.0}, IkParams{}, 1);
  ASSERT_TRUE(r2.ok());
  EXPECT_NEAR(r2.value()[0], kPi / 2, 1e-3);
  EXPECT_NEAR(r2.value()[1], -kPi / 2, 1e-3);
}

TEST(InverseKinematics, OutOfReachIsUnreachable) {
  const RobotModel arm = fixture_robot("planar2");
  const auto r = solve_ik(arm, Pose::identity(), Pose::from_translation({3, 0, 0}), {0, 0},
                          IkParams{}, 1);
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.error().reason, IkFailureReason::unreachable);
  EXPECT_GT(r.error().pos_error, IkParams{}.pos_tol);
}

TEST(InverseKinematics, ReachRadiusIsConservative) {
  Rng rng(9);
  for (const RobotModel& robot : {fixture_robot("planar2"), fixture_robot("chain7"), panda()}) {
    for (int k = 0; k < 200; ++k) {
      EXPECT_LE(ee_position(robot, random_config(robot, rng)).norm(), robot.reach_radius() + 1e-12);
    }
  }
}

TEST(InverseKinematics, SoundOnFkTargetsWithinLimits) {
  for (const RobotModel& robot : {fixture_robot("chain7"), panda()}) {
    Rng rng(2024);
    int successes = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const JointConfig truth = random_config(robot, rng);
      const Pose target = forward_kinematics(robot, Pose::identity(), truth).ee;
      const JointConfig seed = random_config(robot, rng);
      const auto r = solve_ik(robot, Pose::identity(), target, seed, IkParams{}, trial);
      if (!r.ok()) {
        EXPECT_TRUE(r.error().pos_error > 1e-4 || r.error().rot_error > 1e-3);
        continue;
      }
      ++successes;
      const Pose reached = forward_kinematics(robot, Pose::identity(), r.value()).ee;
      EXPECT_LE((reached.position - target.position).norm(), 1e-4);
      EXPECT_LE(rotation_distance(reached.orientation, target.orientation), 1e-3);
      EXPECT_TRUE(robot.within_limits(r.value()));
    }
    EXPECT_GE(successes, 95) << robot.name;
  }
}

TEST(InverseKinematics, Deterministic) {
  const RobotModel robot = fixture_robot("chain7");
  Rng rng(3);
  const Pose target = forward_kinematics(robot, Pose::identity(), random_config(robot, rng)).ee;
  const JointConfig seed = random_config(robot, rng);
  const auto a = solve_ik(robot, Pose::identity(), target, seed, IkParams{}, 77);
  const auto b = solve_ik(robot, Pose::identity(), target, seed, IkParams{}, 77);
  ASSERT_EQ(a.ok(), b.ok());
  if (a.ok()) { EXPECT_EQ(a.value(), b.value()); }
}

TEST(InverseKinematics, LockedJointsStayAtSeed) {
  const RobotModel robot = panda();
  Rng rng(11);
  JointConfig truth = random_config(robot, rng);
  JointConfig seed = random_config(robot, rng);
  seed[6] = truth[6];
  const Pose target = forward_kinematics(robot, Pose::identity(), truth).ee;
  std::vector<bool> locked(7, false);
  locked[6] = true;
  const auto r = solve_ik(robot, Pose::identity(), target, seed, IkParams{}, 5, locked);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.value()[6], seed[6]);
}

TEST(InverseKinematics, SeedAtSolutionReturnsNearSeed) {
  const RobotModel robot = fixture_robot("chain7");
  Rng rng(17);
  const JointConfig truth = random_config(robot, rng);
  const Pose target = forward_kinematics(robot, Pose::identity(), truth).ee;
  const auto r = solve_ik(robot, Pose::identity(), target, truth, IkParams{}, 1);
  ASSERT_TRUE(r.ok());
  EXPECT_LE(distance(r.value(), truth), 1e-6);
}

TEST(IkParams, Validity) {
  EXPECT_TRUE(IkParams{}.valid());
  IkParams bad;
  bad.damping = 0.0;
  EXPECT_FALSE(bad.valid());
}
