#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lang2manip/geometry.hpp"
#include "lang2manip/joint_config.hpp"
#include "lang2manip/scene.hpp"

namespace lang2manip {

struct Proximity {
  bool colliding = false;
  double distance = 0.0;  // separation; 0 when colliding
};

/// Pairwise primitive query. Exact for sphere/capsule pairs and sphere-box; other pairs use GJK
/// on the shape cores and report contact within 1e-7 m as collision. Touching counts as colliding.
Proximity shapes_collide(const PosedShape& a, const PosedShape& b);

/// True when `point` lies inside or on the posed shape.
bool contains_point(const PosedShape& shape, const Vec3& point);

struct CollisionReport {
  bool in_collision = false;
  std::optional<std::pair<std::string, std::string>> witness;
  double clearance = 0.0;  // minimum separation when free
};

struct CheckOptions {
  /// Obstacles left out of every query (e.g. the object being grasped).
  std::vector<std::string> ignored;
};

/// Robot links and held objects against obstacles, workspace bounds and non-adjacent links.
CollisionReport check_config(const Workspace& ws, const JointConfig& q,
                             const CheckOptions& options = {});

/// True iff every configuration interpolated at spacing <= resolution (endpoints included) is free.
bool check_edge(const Workspace& ws, const JointConfig& from, const JointConfig& to,
                double resolution, const CheckOptions& options = {});

/// As check_edge, and additionally requires clearance to certify each interval between samples
/// (bisecting where needed), so a finer re-check of an accepted edge cannot find a collision.
bool check_edge_certified(const Workspace& ws, const JointConfig& from, const JointConfig& to,
                          double resolution, const CheckOptions& options = {});

/// Per-DOF bound on how far any robot or held-object point moves per unit joint motion.
Eigen::VectorXd motion_bounds(const Workspace& ws);

}  // namespace lang2manip
