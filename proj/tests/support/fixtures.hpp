#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lang2manip/collision.hpp"
#include "lang2manip/kinematics.hpp"
#include "lang2manip/random.hpp"
#include "lang2manip/scene.hpp"

namespace l2m_test {

using namespace lang2manip;

inline std::filesystem::path fixture_root() { return L2M_FIXTURE_DIR; }
inline std::filesystem::path demo_root() { return L2M_DEMO_DIR; }
inline std::filesystem::path demo_problem() { return demo_root() / "problems" / "pick_place.xml"; }

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline RobotModel fixture_robot(const std::string& name) {
  return parse_robot_model(read_text(fixture_root() / "models" / (name + ".xml")));
}

inline RobotModel panda() {
  return parse_robot_model(read_text(demo_root() / "models" / "panda.xml"));
}

inline Workspace demo_workspace() { return load_problem_path(demo_problem()); }

/// Workspace around `robot` with every joint controlled and the given obstacles.
inline Workspace make_workspace(RobotModel robot, std::vector<Obstacle> obstacles, Aabb bounds) {
  Workspace ws;
  ws.name = robot.name;
  ws.robot = std::move(robot);
  ws.obstacles = std::move(obstacles);
  ws.bounds = bounds;
  ws.current_config = ws.robot.default_config();
  for (std::size_t d = 0; d < ws.robot.dof(); ++d) ws.controlled.push_back(d);
  validate(ws);
  return ws;
}

inline Obstacle box_obstacle(std::string name, Vec3 center, Vec3 half, bool graspable = false) {
  Obstacle o;
  o.name = std::move(name);
  o.shape = ShapePrimitive::box(half.x(), half.y(), half.z());
  o.pose = Pose::from_translation(center);
  o.graspable = graspable;
  return o;
}

inline JointConfig random_config(const RobotModel& robot, Rng& rng) {
  JointConfig q(Eigen::VectorXd(static_cast<Eigen::Index>(robot.dof())));
  for (std::size_t d = 0; d < robot.dof(); ++d) {
    const Joint& j = robot.movable_joint(d);
    q[d] = rng.uniform(j.limits.lower, j.limits.upper);
  }
  return q;
}

/// Point robot (a 2 cm puck on two prismatic joints over [0, 1]^2) facing a wall at x = 0.5.
struct WallGapScene {
  Workspace ws;
  JointConfig start;
  JointConfig goal;
  std::vector<Aabb> walls;  // world boxes making up the wall
  bool open = true;         // authored with a gap wide enough to pass
};

inline WallGapScene wall_gap_scene(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x77616c6c));
  WallGapScene scene;
  const double thickness = rng.uniform(0.02, 0.08);
  const double wall_x = rng.uniform(0.35, 0.65);
  // Every fourth scene is sealed: either no gap or one narrower than the puck.
  scene.open = seed % 4 != 3;
  const double gap = scene.open ? rng.uniform(0.08, 0.2) : (seed % 8 == 3 ? 0.0 : rng.uniform(0.005, 0.03));
  const double gap_center = rng.uniform(0.15, 0.85);
  const double z_half = 0.05;
  auto add_wall = [&](double y0, double y1) {
    if (y1 - y0 <= 1e-9) return;
    Aabb box{{wall_x - thickness / 2, y0, -z_half}, {wall_x + thickness / 2, y1, z_half}};
    scene.walls.push_back(box);
  };
  // Walls run past the joint range so nothing slips around the ends.
  add_wall(-0.1, gap_center - gap / 2);
  add_wall(gap_center + gap / 2, 1.1);

  std::vector<Obstacle> obstacles;
  for (std::size_t i = 0; i < scene.walls.size(); ++i) {
    const Aabb& b = scene.walls[i];
    obstacles.push_back(box_obstacle("wall" + std::to_string(i), b.center(), 0.5 * b.extents()));
  }
  // A few scattered blocks on either side.
  for (int k = 0; k < 2; ++k) {
    const double side = k == 0 ? rng.uniform(0.1, wall_x - 0.15) : rng.uniform(wall_x + 0.15, 0.9);
    const double y = rng.uniform(0.1, 0.9);
    obstacles.push_back(box_obstacle("block" + std::to_string(k), {side, y, 0.0}, {0.03, 0.03, z_half}));
  }
  scene.ws = make_workspace(fixture_robot("point2"), obstacles,
                            Aabb{{-0.1, -0.1, -0.1}, {1.1, 1.1, 0.1}});
  for (const Obstacle& o : scene.ws.obstacles) {
    if (o.name.rfind("block", 0) == 0) scene.walls.push_back(bounding_box(o.shape, o.pose));
  }
  auto free_point = [&](double x_lo, double x_hi) {
    for (;;) {
      JointConfig q{rng.uniform(x_lo, x_hi), rng.uniform(0.05, 0.95)};
      if (!check_config(scene.ws, q).in_collision) return q;
    }
  };
  scene.start = free_point(0.02, wall_x - thickness / 2 - 0.05);
  scene.goal = free_point(wall_x + thickness / 2 + 0.05, 0.98);
  scene.ws.current_config = scene.start;
  return scene;
}

/// Breadth-first search over a grid of puck positions; a cell is free when its centre keeps the
/// puck radius away from every box. Start and goal snap to their cells.
inline bool grid_reachable(const WallGapScene& scene, int n = 200, double radius = 0.02) {
  auto cell_free = [&](int i, int j) {
    const Eigen::Vector2d p((i + 0.5) / n, (j + 0.5) / n);
    for (const Aabb& b : scene.walls) {
      const double dx = std::max({b.min.x() - p.x(), 0.0, p.x() - b.max.x()});
      const double dy = std::max({b.min.y() - p.y(), 0.0, p.y() - b.max.y()});
      if (dx * dx + dy * dy <= radius * radius) return false;
    }
    return true;
  };
  auto cell_of = [&](double v) { return std::min(n - 1, static_cast<int>(v * n)); };
  std::vector<char> seen(static_cast<std::size_t>(n * n), 0);
  std::vector<std::pair<int, int>> frontier{{cell_of(scene.start[0]), cell_of(scene.start[1])}};
  const std::pair<int, int> target{cell_of(scene.goal[0]), cell_of(scene.goal[1])};
  if (!cell_free(frontier[0].first, frontier[0].second) || !cell_free(target.first, target.second)) {
    return false;
  }
  seen[static_cast<std::size_t>(frontier[0].first * n + frontier[0].second)] = 1;
  for (std::size_t head = 0; head < frontier.size(); ++head) {
    const auto [i, j] = frontier[head];
    if (std::pair{i, j} == target) return true;
    const int di[] = {1, -1, 0, 0}, dj[] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const int a = i + di[k], b = j + dj[k];
      if (a < 0 || b < 0 || a >= n || b >= n) continue;
      char& s = seen[static_cast<std::size_t>(a * n + b)];
      if (s || !cell_free(a, b)) continue;
      s = 1;
      frontier.emplace_back(a, b);
    }
  }
  return false;
}

}  // namespace l2m_test
