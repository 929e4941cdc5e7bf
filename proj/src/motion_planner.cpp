#include "lang2manip/motion_planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "lang2manip/errors.hpp"
#include "lang2manip/random.hpp"

namespace lang2manip {

std::string_view to_string(PlanFailureReason reason) {
  switch (reason) {
    case PlanFailureReason::start_invalid: return "start_invalid";
    case PlanFailureReason::goal_invalid: return "goal_invalid";
    case PlanFailureReason::timeout: return "timeout";
  }
  return "timeout";
}

bool edge_valid(const Workspace& ws, const JointConfig& from, const JointConfig& to,
                double resolution, bool certified, const CheckOptions& options) {
  return certified ? check_edge_certified(ws, from, to, resolution, options)
                   : check_edge(ws, from, to, resolution, options);
}

namespace {

struct Tree {
  std::vector<JointConfig> nodes;
  std::vector<long> parent;

  std::size_t nearest(const JointConfig& q) const {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const double d = (nodes[i].values - q.values).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }
  std::size_t add(JointConfig q, long from) {
    nodes.push_back(std::move(q));
    parent.push_back(from);
    return nodes.size() - 1;
  }
  /// Root-to-node path.
  std::vector<JointConfig> path_to(std::size_t index) const {
    std::vector<JointConfig> out;
    for (long i = static_cast<long>(index); i >= 0; i = parent[static_cast<std::size_t>(i)]) {
      out.push_back(nodes[static_cast<std::size_t>(i)]);
    }
    std::reverse(out.begin(), out.end());
    return out;
  }
};

JointConfig steer(const JointConfig& from, const JointConfig& to, double step) {
  const Eigen::VectorXd delta = to.values - from.values;
  const double d = delta.norm();
  if (d <= step) return to;
  return JointConfig(Eigen::VectorXd(from.values + delta * (step / d)));
}

class Sampler {
 public:
  Sampler(const Workspace& ws, const JointConfig& start, std::uint64_t seed)
      : rng_(seed), start_(start) {
    std::vector<std::size_t> dofs = ws.controlled;
    if (dofs.empty()) {
      for (std::size_t i = 0; i < ws.robot.dof(); ++i) dofs.push_back(i);
    }
    for (std::size_t d : dofs) {
      const Joint& j = ws.robot.movable_joint(d);
      dims_.push_back({d, j.limits.lower, j.limits.upper});
    }
  }
  JointConfig sample() {
    JointConfig q = start_;
    for (const Dim& d : dims_) q[d.index] = rng_.uniform(d.lower, d.upper);
    return q;
  }
  Rng& rng() { return rng_; }

 private:
  struct Dim {
    std::size_t index;
    double lower, upper;
  };
  Rng rng_;
  JointConfig start_;
  std::vector<Dim> dims_;
};

enum class Extend { trapped, advanced, reached };

}  // namespace

Result<Trajectory, PlanFailure> plan(const Workspace& ws, const PlannerSpec& spec,
                                     const PlanningQuery& query, const CheckOptions& options) {
  spec.validate();
  const auto started = std::chrono::steady_clock::now();
  const PlannerParams& p = spec.params;
  const std::size_t dof = ws.robot.dof();
  if (query.start.size() != dof || query.goal.size() != dof) {
    throw Error(Errc::arity_mismatch, "query dimension does not match robot DOF", "plan");
  }
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  };
  auto endpoint_failure = [&](const JointConfig& q, PlanFailureReason reason,
                              const char* label) -> std::optional<PlanFailure> {
    if (!ws.robot.within_limits(q, 1e-9)) {
      return PlanFailure{reason, std::nullopt, std::string(label) + " violates joint limits", {}};
    }
    const CollisionReport r = check_config(ws, q, options);
    if (r.in_collision) {
      return PlanFailure{reason, r.witness,
                         std::string(label) + " in collision: " + r.witness->first + " / " +
                             r.witness->second,
                         {}};
    }
    return std::nullopt;
  };
  if (auto f = endpoint_failure(query.start, PlanFailureReason::start_invalid, "start")) return *f;
  if (auto f = endpoint_failure(query.goal, PlanFailureReason::goal_invalid, "goal")) return *f;

  // Frozen joints cannot move, so the goal must agree with the start on them.
  if (!ws.controlled.empty()) {
    for (std::size_t d = 0; d < dof; ++d) {
      if (std::find(ws.controlled.begin(), ws.controlled.end(), d) == ws.controlled.end() &&
          query.goal[d] != query.start[d]) {
        return PlanFailure{PlanFailureReason::goal_invalid, std::nullopt,
                           "goal moves uncontrolled joint '" + ws.robot.movable_joint(d).name + "'",
                           {}};
      }
    }
  }

  Trajectory traj;
  if (query.start == query.goal) {
    traj.waypoints = {query.start};
    traj.stats.start_tree_size = 1;
    traj.stats.wall_time = elapsed();
    return traj;
  }

  auto edge = [&](const JointConfig& a, const JointConfig& b) {
    return edge_valid(ws, a, b, p.edge_resolution, p.certified_edges, options);
  };
  Sampler sampler(ws, query.start, derive_seed(p.seed, 0x706c616e));
  PlannerStats stats;
  std::optional<std::vector<JointConfig>> path;

  if (spec.algorithm == PlannerAlgorithm::rrt) {
    Tree tree;
    tree.add(query.start, -1);
    for (int it = 1; it <= p.max_iterations && !path; ++it) {
      stats.iterations = it;
      const JointConfig target =
          sampler.rng().bernoulli(p.goal_bias) ? query.goal : sampler.sample();
      const std::size_t near = tree.nearest(target);
      JointConfig q_new = steer(tree.nodes[near], target, p.step_size);
      if (q_new == tree.nodes[near] || !edge(tree.nodes[near], q_new)) continue;
      const std::size_t added = tree.add(q_new, static_cast<long>(near));
      if (q_new == query.goal) {
        path = tree.path_to(added);
      } else if (distance(q_new, query.goal) <= p.step_size && edge(q_new, query.goal)) {
        path = tree.path_to(tree.add(query.goal, static_cast<long>(added)));
      }
    }
    stats.start_tree_size = tree.nodes.size();
  } else {
    Tree trees[2];
    trees[0].add(query.start, -1);
    trees[1].add(query.goal, -1);
    auto extend = [&](Tree& tree, const JointConfig& target, std::size_t& index) {
      const std::size_t near = tree.nearest(target);
      JointConfig q_new = steer(tree.nodes[near], target, p.step_size);
      if (q_new == tree.nodes[near]) {
        index = near;
        return Extend::reached;
      }
      if (!edge(tree.nodes[near], q_new)) return Extend::trapped;
      const bool reached = q_new == target;
      index = tree.add(std::move(q_new), static_cast<long>(near));
      return reached ? Extend::reached : Extend::advanced;
    };
    int a = 0;
    for (int it = 1; it <= p.max_iterations && !path; ++it) {
      stats.iterations = it;
      const int b = 1 - a;
      const JointConfig target = sampler.sample();
      std::size_t new_index = 0;
      if (extend(trees[a], target, new_index) != Extend::trapped) {
        const JointConfig bridge = trees[a].nodes[new_index];
        std::size_t other_index = 0;
        Extend status;
        do {
          status = extend(trees[b], bridge, other_index);
        } while (status == Extend::advanced);
        if (status == Extend::reached) {
          std::vector<JointConfig> from_start = trees[0].path_to(a == 0 ? new_index : other_index);
          std::vector<JointConfig> from_goal = trees[1].path_to(a == 0 ? other_index : new_index);
          from_goal.pop_back();  // bridge node appears in both halves
          std::reverse(from_goal.begin(), from_goal.end());
          from_start.insert(from_start.end(), from_goal.begin(), from_goal.end());
          path = std::move(from_start);
        }
      }
      a = b;
    }
    stats.start_tree_size = trees[0].nodes.size();
    stats.goal_tree_size = trees[1].nodes.size();
  }

  if (!path) {
    stats.wall_time = elapsed();
    return PlanFailure{PlanFailureReason::timeout, std::nullopt,
                       "no path within " + std::to_string(p.max_iterations) + " iterations", stats};
  }
  traj.waypoints = std::move(*path);
  traj.stats = stats;
  traj = shortcut(ws, traj, p.shortcut_passes, derive_seed(p.seed, 0x73686f7274),
                  p.edge_resolution, p.certified_edges, options);
  traj.stats.wall_time = elapsed();
  return traj;
}

double path_length(const Trajectory& traj) {
  double total = 0.0;
  for (std::size_t i = 1; i < traj.waypoints.size(); ++i) {
    total += distance(traj.waypoints[i - 1], traj.waypoints[i]);
  }
  return total;
}

Trajectory shortcut(const Workspace& ws, const Trajectory& traj, int passes, std::uint64_t seed,
                    double edge_resolution, bool certified, const CheckOptions& options) {
  Trajectory out = traj;
  Rng rng(seed);
  std::vector<JointConfig>& w = out.waypoints;
  for (int pass = 0; pass < passes && w.size() >= 3; ++pass) {
    const std::size_t i = rng.index(w.size() - 2);
    const std::size_t j = i + 2 + rng.index(w.size() - i - 2);
    if (edge_valid(ws, w[i], w[j], edge_resolution, certified, options)) {
      w.erase(w.begin() + static_cast<long>(i) + 1, w.begin() + static_cast<long>(j));
    }
  }
  return out;
}

std::vector<TimedConfig> interpolate_trajectory(const RobotModel& robot, const Trajectory& traj,
                                                double dt) {
  if (!(dt > 0.0)) throw Error(Errc::invalid_value, "dt must be positive", "interpolate_trajectory");
  std::vector<TimedConfig> out;
  const auto& w = traj.waypoints;
  if (w.empty()) return out;
  const std::size_t dof = robot.dof();
  std::vector<double> ends;  // cumulative end time of each segment
  double total = 0.0;
  for (std::size_t k = 1; k < w.size(); ++k) {
    double duration = 0.0;
    for (std::size_t j = 0; j < dof; ++j) {
      duration = std::max(duration, std::abs(w[k][j] - w[k - 1][j]) /
                                        robot.movable_joint(j).limits.max_velocity);
    }
    total += duration;
    ends.push_back(total);
  }
  auto at = [&](double t) {
    std::size_t seg = 0;
    while (seg + 1 < ends.size() && ends[seg] < t) ++seg;
    const double begin = seg == 0 ? 0.0 : ends[seg - 1];
    const double length = ends[seg] - begin;
    const double s = length > 0.0 ? std::clamp((t - begin) / length, 0.0, 1.0) : 1.0;
    return JointConfig(Eigen::VectorXd(w[seg].values + s * (w[seg + 1].values - w[seg].values)));
  };
  out.push_back({0.0, w.front()});
  for (long m = 1;; ++m) {
    const double t = static_cast<double>(m) * dt;
    if (t >= total - 1e-12) break;
    out.push_back({t, at(t)});
  }
  if (total > 0.0) out.push_back({total, w.back()});
  return out;
}

}  // namespace lang2manip
