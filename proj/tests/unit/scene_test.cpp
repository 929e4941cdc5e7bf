#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "lang2manip/errors.hpp"
#include "lang2manip/kinematics.hpp"

using namespace l2m_test;

namespace {

Errc error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::transport;
}

std::string demo_text() { return read_text(demo_problem()); }

std::string replace_once(std::string text, const std::string& from, const std::string& to) {
  const auto pos = text.find(from);
  EXPECT_NE(pos, std::string::npos) << from;
  return text.replace(pos, from.size(), to);
}

struct TempTree {
  std::filesystem::path root;
  explicit TempTree(const std::string& tag) {
    root = std::filesystem::temp_directory_path() /
           ("l2m_" + tag + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
            "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(root);
    std::filesystem::create_directories(root);
  }
  ~TempTree() { std::filesystem::remove_all(root); }
};

}  // namespace

TEST(RobotModelParse, PlanarArmEchoesStructure) {
  const RobotModel arm = fixture_robot("planar2");
  EXPECT_EQ(arm.dof(), 2u);
  EXPECT_EQ(arm.ee_link, "link2");
  ASSERT_EQ(arm.joints.size(), 2u);
  EXPECT_EQ(arm.joints[0].name, "joint1");
  EXPECT_EQ(arm.joints[1].name, "joint2");
}

TEST(RobotModelParse, SevenJointChainWithFixedFlange) {
  const RobotModel chain = fixture_robot("chain7");
  std::size_t movable = 0;
  for (const Joint& j : chain.joints) movable += j.movable();
  EXPECT_EQ(chain.joints.size(), 8u);
  EXPECT_EQ(chain.dof(), movable);
  EXPECT_EQ(chain.dof(), 7u);
}

TEST(RobotModelParse, JointOrderIsBaseToTipRegardlessOfFileOrder) {
  std::string text = read_text(fixture_root() / "models" / "planar2.xml");
  const auto j1 = text.find("  <Joint name=\"joint1\"");
  const auto j2 = text.find("  <Joint name=\"joint2\"");
  const auto end = text.find("  <EndEffector");
  const std::string first = text.substr(j1, j2 - j1), second = text.substr(j2, end - j2);
  text = text.substr(0, j1) + second + first + text.substr(end);
  const RobotModel arm = parse_robot_model(text);
  EXPECT_EQ(arm.joints[0].name, "joint1");
  EXPECT_EQ(arm.links.front().name, "base");
  EXPECT_EQ(arm.links.back().name, "link2");
}

TEST(RobotModelParse, DuplicateChildLinkRejected) {
  const std::string text = R"(<Model name="m">
  <Link name="a"/><Link name="b"/><Link name="c"/>
  <Joint name="j1" kind="revolute" parent="a" child="b"><Axis x="0" y="0" z="1"/><Limits lower="-1" upper="1" velocity="1"/></Joint>
  <Joint name="j2" kind="revolute" parent="c" child="b"><Axis x="0" y="0" z="1"/><Limits lower="-1" upper="1" velocity="1"/></Joint>
</Model>)";
  try {
    parse_robot_model(text);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_chain);
    EXPECT_NE(std::string(e.what()).find("duplicate child link"), std::string::npos);
    EXPECT_NE(e.where().find("Joint"), std::string::npos);
  }
}

TEST(RobotModelParse, ErrorsCarryElementPath) {
  const std::string text = R"(<Model name="m">
  <Link name="a"/><Link name="b"><Shape kind="sphere" radius="0"/></Link>
  <Joint name="j1" kind="revolute" parent="a" child="b"><Axis x="0" y="0" z="1"/><Limits lower="-1" upper="1" velocity="1"/></Joint>
</Model>)";
  try {
    parse_robot_model(text);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_value);
    EXPECT_EQ(e.where(), "Model/Link[1]/Shape[0]");
  }
}

TEST(RobotModelParse, SerializeRoundTrip) {
  for (const std::string name : {"planar2", "arm3", "chain7", "slider1", "point2"}) {
    const RobotModel a = fixture_robot(name);
    const RobotModel b = parse_robot_model(serialize_robot_model(a));
    ASSERT_EQ(a.joints.size(), b.joints.size()) << name;
    ASSERT_EQ(a.links.size(), b.links.size()) << name;
    for (std::size_t i = 0; i < a.joints.size(); ++i) {
      EXPECT_EQ(a.joints[i].name, b.joints[i].name);
      EXPECT_EQ(a.joints[i].kind, b.joints[i].kind);
      EXPECT_TRUE(approx_equal(a.joints[i].origin, b.joints[i].origin, 1e-12));
      EXPECT_LE((a.joints[i].axis - b.joints[i].axis).norm(), 1e-12);
      EXPECT_EQ(a.joints[i].limits.lower, b.joints[i].limits.lower);
      EXPECT_EQ(a.joints[i].limits.upper, b.joints[i].limits.upper);
    }
    for (std::size_t i = 0; i < a.links.size(); ++i) {
      EXPECT_EQ(a.links[i].shape.has_value(), b.links[i].shape.has_value());
      if (a.links[i].shape) { EXPECT_TRUE(*a.links[i].shape == *b.links[i].shape); }
      EXPECT_TRUE(approx_equal(a.links[i].shape_offset, b.links[i].shape_offset, 1e-12));
    }
    EXPECT_EQ(a.ee_link, b.ee_link);
    EXPECT_TRUE(approx_equal(a.ee_offset, b.ee_offset, 1e-12));
  }
}

TEST(ProblemParse, DemoSceneStructure) {
  const std::string text = replace_once(demo_text(), "type=\"RRTConnect\"", "type=\"RRT\"");
  const Workspace ws = parse_problem_file(text, filesystem_resolver(demo_root()));
  ASSERT_EQ(ws.obstacles.size(), 3u);
  EXPECT_EQ(ws.obstacles[0].name, "marker");
  EXPECT_EQ(ws.obstacles[1].name, "eraser");
  EXPECT_EQ(ws.obstacles[2].name, "holder");
  EXPECT_TRUE(ws.obstacles[0].graspable);
  EXPECT_FALSE(ws.obstacles[2].graspable);
  EXPECT_EQ(ws.active_planner.algorithm, PlannerAlgorithm::rrt);
  EXPECT_EQ(ws.robot.dof(), 7u);
  ASSERT_TRUE(ws.query.has_value());
  EXPECT_EQ(ws.current_config, ws.query->start);
  EXPECT_NEAR(ws.current_config[3], -2.356194, 1e-12);
  EXPECT_NEAR(ws.query->goal[0], 0.6, 1e-12);
  EXPECT_NO_THROW(validate(ws));
}

TEST(ProblemParse, AbsolutePathForbidden) {
  const std::string text =
      replace_once(demo_text(), "model=\"models/panda.xml\"", "model=\"/abs/model.xml\"");
  try {
    parse_problem_file(text, filesystem_resolver(demo_root()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::absolute_path);
    EXPECT_NE(std::string(e.what()).find("absolute path forbidden"), std::string::npos);
  }
}

TEST(ProblemParse, InitArityMismatch) {
  const std::string text = replace_once(demo_text(), "<Init>0 -0.785398 0 -2.356194 0 1.570796 0.785398</Init>",
                                        "<Init>0 -0.785398 0 -2.356194 0 1.570796</Init>");
  EXPECT_EQ(error_of([&] { parse_problem_file(text, filesystem_resolver(demo_root())); }),
            Errc::arity_mismatch);
}

TEST(ProblemParse, UnknownPlanner) {
  const std::string text = replace_once(demo_text(), "type=\"RRTConnect\"", "type=\"PRM\"");
  EXPECT_EQ(error_of([&] { parse_problem_file(text, filesystem_resolver(demo_root())); }),
            Errc::unknown_planner);
}

TEST(ProblemParse, PlannerParametersApplied) {
  const Workspace ws = load_problem_path(fixture_root() / "problems" / "planar2.xml");
  EXPECT_EQ(ws.active_planner.algorithm, PlannerAlgorithm::rrt);
  EXPECT_EQ(ws.active_planner.params.seed, 3u);
  EXPECT_DOUBLE_EQ(ws.active_planner.params.step_size, 0.1);
  EXPECT_EQ(ws.active_planner.params.max_iterations, PlannerParams{}.max_iterations);
}

TEST(ProblemParse, QuaternionNormalizedWithWarning) {
  const std::string text = replace_once(demo_text(), "<Pose x=\"0.45\" y=\"-0.15\" z=\"0.061\"/>",
                                        "<Pose x=\"0.45\" y=\"-0.15\" z=\"0.061\" qx=\"0\" qy=\"0\" qz=\"0\" qw=\"2\"/>");
  const Workspace ws = parse_problem_file(text, filesystem_resolver(demo_root()));
  EXPECT_NEAR(ws.obstacles[0].pose.orientation.norm(), 1.0, 1e-9);
  ASSERT_FALSE(ws.warnings.empty());
  EXPECT_NE(ws.warnings[0].find("normalized"), std::string::npos);
}

TEST(ProblemParse, NearZeroQuaternionRejected) {
  const std::string text = replace_once(demo_text(), "<Pose x=\"0.45\" y=\"-0.15\" z=\"0.061\"/>",
                                        "<Pose x=\"0.45\" qx=\"0\" qy=\"0\" qz=\"0\" qw=\"1e-7\"/>");
  EXPECT_EQ(error_of([&] { parse_problem_file(text, filesystem_resolver(demo_root())); }),
            Errc::invalid_value);
}

TEST(ProblemParse, UncontrolledJointsFrozenAtDefault) {
  TempTree tree("controls");
  std::filesystem::copy(demo_root(), tree.root, std::filesystem::copy_options::recursive);
  {
    std::ofstream ctl(tree.root / "problems" / "controls" / "panda.ctl");
    ctl << "panda_joint1\npanda_joint2\n";
  }
  std::string text = read_text(tree.root / "problems" / "pick_place.xml");
  text = replace_once(text, "<Init>0 -0.785398 0 -2.356194 0 1.570796 0.785398</Init>", "<Init>0.1 -0.5</Init>");
  text = replace_once(text, "<Goal>0.6 -0.3 0 -2.2 0 1.9 0.785398</Goal>", "<Goal>0.2 -0.4</Goal>");
  const Workspace ws = parse_problem_file(text, filesystem_resolver(tree.root));
  EXPECT_EQ(ws.controlled, (std::vector<std::size_t>{0, 1}));
  EXPECT_DOUBLE_EQ(ws.current_config[0], 0.1);
  EXPECT_DOUBLE_EQ(ws.current_config[1], -0.5);
  for (std::size_t d = 2; d < 7; ++d) {
    EXPECT_DOUBLE_EQ(ws.current_config[d], ws.robot.movable_joint(d).default_value());
  }
  EXPECT_EQ(ws.locked_mask(), (std::vector<bool>{false, false, true, true, true, true, true}));
}

TEST(ProblemParse, SerializeRoundTrip) {
  for (const auto& path : {demo_problem(), fixture_root() / "problems" / "planar2.xml"}) {
    const std::string text = read_text(path);
    const auto resolver = filesystem_resolver(problem_root_for(path));
    const Workspace a = parse_problem_file(text, resolver);
    const std::string again = serialize_problem(parse_problem_document(text));
    const Workspace b = parse_problem_file(again, resolver);
    EXPECT_TRUE(equivalent(a, b, 1e-12)) << path;
    EXPECT_EQ(serialize_problem(parse_problem_document(again)), again);
  }
}

TEST(ProblemDirectory, DemoTreeLoads) {
  const Workspace ws = load_problem_directory(demo_root());
  EXPECT_EQ(ws.name, "pick_place");
  const Workspace direct = parse_problem_file(demo_text(), filesystem_resolver(demo_root()));
  EXPECT_TRUE(equivalent(ws, direct, 0.0));
}

TEST(ProblemDirectory, EmptyProblemsDirectory) {
  TempTree tree("empty");
  std::filesystem::create_directories(tree.root / "models");
  std::filesystem::create_directories(tree.root / "problems");
  try {
    load_problem_directory(tree.root);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::no_problem_file);
    EXPECT_NE(std::string(e.what()).find("no problem file"), std::string::npos);
  }
}

TEST(ProblemDirectory, MissingSubdirectory) {
  TempTree tree("nomodels");
  std::filesystem::create_directories(tree.root / "problems");
  EXPECT_EQ(error_of([&] { load_problem_directory(tree.root); }), Errc::missing_directory);
}

TEST(ProblemDirectory, MissingModelNamesRelativePath) {
  TempTree tree("missing");
  std::filesystem::copy(demo_root(), tree.root, std::filesystem::copy_options::recursive);
  std::filesystem::remove(tree.root / "models" / "eraser.xml");
  try {
    load_problem_directory(tree.root);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unresolved_path);
    EXPECT_NE(std::string(e.what()).find("models/eraser.xml"), std::string::npos);
  }
}

TEST(ProblemDirectory, SeveralProblemsNeedAName) {
  TempTree tree("two");
  std::filesystem::copy(demo_root(), tree.root, std::filesystem::copy_options::recursive);
  std::filesystem::copy_file(tree.root / "problems" / "pick_place.xml", tree.root / "problems" / "other.xml");
  EXPECT_EQ(error_of([&] { load_problem_directory(tree.root); }), Errc::ambiguous_problem);
  EXPECT_EQ(load_problem_directory(tree.root, "other.xml").robot.dof(), 7u);
}

TEST(AttachDetach, IdentityGraspFollowsToolFrame) {
  const Workspace ws = demo_workspace();
  const Workspace held = attach_object(ws, "marker", Pose::identity());
  EXPECT_NO_THROW(validate(held));
  Rng rng(5);
  for (int k = 0; k < 5; ++k) {
    const JointConfig q = random_config(held.robot, rng);
    const Pose ee = forward_kinematics(held.robot, held.robot_base, q).ee;
    EXPECT_TRUE(approx_equal(held.obstacle_pose(held.obstacle("marker"), q), ee, 1e-12));
  }
  EXPECT_EQ(held.attached_obstacle()->name, "marker");
}

TEST(AttachDetach, PreconditionErrors) {
  const Workspace ws = demo_workspace();
  EXPECT_EQ(error_of([&] { attach_object(ws, "holder", Pose::identity()); }), Errc::not_graspable);
  EXPECT_EQ(error_of([&] { attach_object(ws, "stapler", Pose::identity()); }), Errc::unknown_object);
  const Workspace held = attach_object(ws, "marker", Pose::identity());
  try {
    attach_object(held, "marker", Pose::identity());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::already_attached);
    EXPECT_NE(std::string(e.what()).find("already attached"), std::string::npos);
  }
  EXPECT_EQ(error_of([&] { detach_object(ws, "eraser", Pose::identity()); }), Errc::not_attached);

  Workspace no_gripper = ws;
  no_gripper.robot.gripper.reset();
  EXPECT_EQ(error_of([&] { attach_object(no_gripper, "marker", Pose::identity()); }), Errc::no_gripper);
}

TEST(AttachDetach, DetachAtPoseClearsAttachment) {
  const Workspace ws = demo_workspace();
  const Pose top = Pose::from_translation({0.45, 0.2, 0.163});
  const Workspace placed = detach_object(attach_object(ws, "marker", Pose::identity()), "marker", top);
  EXPECT_FALSE(placed.obstacle("marker").attached.has_value());
  EXPECT_TRUE(same_bits(placed.obstacle("marker").pose, top));
  EXPECT_EQ(placed.attached_obstacle(), nullptr);
  EXPECT_NO_THROW(validate(placed));
}

TEST(AttachDetach, RoundTripRestoresBitwiseState) {
  const Workspace ws = demo_workspace();
  const Obstacle& before = ws.obstacle("eraser");
  const Pose grasp = Pose::from_translation({0.0, 0.0, 0.01});
  const Workspace back = detach_object(attach_object(ws, "eraser", grasp), "eraser", before.pose);
  const Obstacle& after = back.obstacle("eraser");
  EXPECT_TRUE(same_bits(before.pose, after.pose));
  EXPECT_TRUE(before.shape == after.shape);
  EXPECT_EQ(before.graspable, after.graspable);
  EXPECT_FALSE(after.attached.has_value());
  EXPECT_TRUE(equivalent(ws, back, 0.0));
}

TEST(WorkspaceValidate, RejectsBrokenInvariants) {
  Workspace ws = demo_workspace();
  Workspace dup = ws;
  dup.obstacles[1].name = "marker";
  EXPECT_EQ(error_of([&] { validate(dup); }), Errc::duplicate_name);
  Workspace limits = ws;
  limits.current_config[0] = 10.0;
  EXPECT_EQ(error_of([&] { validate(limits); }), Errc::limits_violated);
  Workspace arity = ws;
  arity.current_config = JointConfig{0.0};
  EXPECT_EQ(error_of([&] { validate(arity); }), Errc::arity_mismatch);
  Workspace held = ws;
  held.obstacles[2].attached = Pose::identity();
  EXPECT_EQ(error_of([&] { validate(held); }), Errc::not_graspable);
}

TEST(Pose, FromComponentsNormalizes) {
  bool normalized = false;
  const Pose p = Pose::from_components(1, 2, 3, 0, 0, 0, 3, &normalized);
  EXPECT_TRUE(normalized);
  EXPECT_NEAR(p.orientation.norm(), 1.0, 1e-9);
  EXPECT_EQ(error_of([] { Pose::from_components(0, 0, 0, 0, 0, 0, 0); }), Errc::invalid_value);
}
