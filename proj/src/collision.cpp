#include "lang2manip/collision.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "lang2manip/kinematics.hpp"

namespace lang2manip {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kGjkContact = 1e-7;

// ---------------------------------------------------------------------------------------------
// Shape cores: a convex core (point, segment, box, cylinder) plus an inflation radius.

struct Core {
  enum class Kind { point, segment, box, cylinder } kind = Kind::point;
  Mat3 rotation = Mat3::Identity();
  Vec3 center = Vec3::Zero();
  Vec3 half = Vec3::Zero();
  double radius = 0.0;  // cylinder radius
  double half_length = 0.0;
  double inflate = 0.0;
};

Core make_core(const PosedShape& s) {
  Core c;
  c.rotation = s.pose.rotation();
  c.center = s.pose.position;
  switch (s.shape.kind) {
    case ShapeKind::sphere:
      c.kind = Core::Kind::point;
      c.inflate = s.shape.radius;
      break;
    case ShapeKind::capsule:
      c.kind = Core::Kind::segment;
      c.half_length = s.shape.half_length;
      c.inflate = s.shape.radius;
      break;
    case ShapeKind::box:
      c.kind = Core::Kind::box;
      c.half = s.shape.half_extents;
      break;
    case ShapeKind::cylinder:
      c.kind = Core::Kind::cylinder;
      c.radius = s.shape.radius;
      c.half_length = s.shape.half_length;
      break;
  }
  return c;
}

double sign_of(double v) { return v < 0.0 ? -1.0 : 1.0; }

Vec3 support(const Core& c, const Vec3& dir) {
  const Vec3 d = c.rotation.transpose() * dir;
  Vec3 local = Vec3::Zero();
  switch (c.kind) {
    case Core::Kind::point: break;
    case Core::Kind::segment: local.z() = sign_of(d.z()) * c.half_length; break;
    case Core::Kind::box:
      local = Vec3(sign_of(d.x()) * c.half.x(), sign_of(d.y()) * c.half.y(),
                   sign_of(d.z()) * c.half.z());
      break;
    case Core::Kind::cylinder: {
      const double rxy = std::hypot(d.x(), d.y());
      if (rxy > 1e-12) {
        local.x() = c.radius * d.x() / rxy;
        local.y() = c.radius * d.y() / rxy;
      }
      local.z() = sign_of(d.z()) * c.half_length;
      break;
    }
  }
  return c.rotation * local + c.center;
}

Vec3 segment_end(const Core& c, double sign) {
  return c.center + c.rotation.col(2) * (sign * c.half_length);
}

// ---------------------------------------------------------------------------------------------
// Exact kernels

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (a + t * ab - p).norm();
}

// Closest distance between segments p1q1 and p2q2.
double segment_segment_distance(const Vec3& p1, const Vec3& q1, const Vec3& p2, const Vec3& q2) {
  const Vec3 d1 = q1 - p1, d2 = q2 - p2, r = p1 - p2;
  const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
  constexpr double eps = 1e-18;
  double s = 0.0, t = 0.0;
  if (a <= eps && e <= eps) return r.norm();
  if (a <= eps) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= eps) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > eps ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return ((p1 + d1 * s) - (p2 + d2 * t)).norm();
}

double point_box_distance(const Vec3& p, const Core& box) {
  const Vec3 local = box.rotation.transpose() * (p - box.center);
  const Vec3 clamped = local.cwiseMax(-box.half).cwiseMin(box.half);
  return (local - clamped).norm();
}

// ---------------------------------------------------------------------------------------------
// GJK distance between cores. Returns a lower bound on the separation (<= 0 when intersecting).

struct SimplexPoint {
  Vec3 w;
};

Vec3 closest_on_segment(std::array<Vec3, 4>& s, int& n) {
  const Vec3 a = s[0], b = s[1];
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? -a.dot(ab) / len2 : 0.0;
  if (t <= 0.0) {
    n = 1;
    return a;
  }
  if (t >= 1.0) {
    s[0] = b;
    n = 1;
    return b;
  }
  return a + t * ab;
}

Vec3 closest_on_triangle(const Vec3& a, const Vec3& b, const Vec3& c, std::array<Vec3, 4>& out,
                         int& n) {
  const Vec3 ab = b - a, ac = c - a, ap = -a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) {
    out[0] = a;
    n = 1;
    return a;
  }
  const Vec3 bp = -b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) {
    out[0] = b;
    n = 1;
    return b;
  }
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    out[0] = a;
    out[1] = b;
    n = 2;
    return a + v * ab;
  }
  const Vec3 cp = -c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) {
    out[0] = c;
    n = 1;
    return c;
  }
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    out[0] = a;
    out[1] = c;
    n = 2;
    return a + w * ac;
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    out[0] = b;
    out[1] = c;
    n = 2;
    return b + w * (c - b);
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  out[0] = a;
  out[1] = b;
  out[2] = c;
  n = 3;
  return a + ab * v + ac * w;
}

// Returns true when the origin lies inside the tetrahedron.
bool closest_on_tetrahedron(std::array<Vec3, 4>& s, int& n, Vec3& closest) {
  const Vec3 a = s[0], b = s[1], c = s[2], d = s[3];
  const std::array<std::array<Vec3, 4>, 4> faces = {{{a, b, c, d}, {a, c, d, b}, {a, d, b, c},
                                                     {b, d, c, a}}};
  double best = kInf;
  bool any_outside = false;
  std::array<Vec3, 4> best_set{};
  int best_n = 0;
  for (const auto& f : faces) {
    const Vec3 normal = (f[1] - f[0]).cross(f[2] - f[0]);
    const double sign_origin = (-f[0]).dot(normal);
    const double sign_opposite = (f[3] - f[0]).dot(normal);
    const bool degenerate = std::abs(sign_opposite) < 1e-18;
    if (!degenerate && sign_origin * sign_opposite >= 0.0) continue;
    any_outside = true;
    std::array<Vec3, 4> set{};
    int m = 0;
    const Vec3 p = closest_on_triangle(f[0], f[1], f[2], set, m);
    const double dist2 = p.squaredNorm();
    if (dist2 < best) {
      best = dist2;
      closest = p;
      best_set = set;
      best_n = m;
    }
  }
  if (!any_outside) return true;
  s = best_set;
  n = best_n;
  return false;
}

double gjk_lower_bound(const Core& A, const Core& B) {
  Vec3 v = A.center - B.center;
  if (v.squaredNorm() < 1e-24) v = Vec3::UnitX();
  std::array<Vec3, 4> simplex{};
  int n = 0;
  v = support(A, -v) - support(B, v);
  simplex[n++] = v;
  double lower = -kInf;
  for (int iter = 0; iter < 96; ++iter) {
    const double vv = v.squaredNorm();
    if (vv < 1e-24) return 0.0;
    const Vec3 w = support(A, -v) - support(B, v);
    const double vw = v.dot(w);
    lower = std::max(lower, vw / std::sqrt(vv));
    if (vv - vw <= 1e-12 * vv) break;
    bool duplicate = false;
    for (int i = 0; i < n; ++i) {
      if ((simplex[i] - w).squaredNorm() < 1e-24) duplicate = true;
    }
    if (duplicate) break;
    simplex[n++] = w;
    Vec3 next;
    if (n == 2) {
      next = closest_on_segment(simplex, n);
      if (n == 2) {
        // keep both points
      }
    } else if (n == 3) {
      std::array<Vec3, 4> reduced{};
      int m = 0;
      next = closest_on_triangle(simplex[0], simplex[1], simplex[2], reduced, m);
      simplex = reduced;
      n = m;
    } else {
      if (closest_on_tetrahedron(simplex, n, next)) return std::min(lower, 0.0);
    }
    if (next.squaredNorm() >= vv) break;  // no progress
    v = next;
  }
  return lower;
}

// ---------------------------------------------------------------------------------------------

int kind_rank(ShapeKind k) { return static_cast<int>(k); }

bool canonical_less(const PosedShape& a, const PosedShape& b) {
  if (a.shape.kind != b.shape.kind) return kind_rank(a.shape.kind) < kind_rank(b.shape.kind);
  const auto ca = a.pose.components(), cb = b.pose.components();
  if (ca != cb) return ca < cb;
  const std::array<double, 5> da = {a.shape.half_extents.x(), a.shape.half_extents.y(),
                                    a.shape.half_extents.z(), a.shape.radius,
                                    a.shape.half_length};
  const std::array<double, 5> db = {b.shape.half_extents.x(), b.shape.half_extents.y(),
                                    b.shape.half_extents.z(), b.shape.radius,
                                    b.shape.half_length};
  return da < db;
}

Proximity exact_result(double separation) {
  return {separation <= 0.0, std::max(separation, 0.0)};
}

Proximity ordered_query(const PosedShape& a, const PosedShape& b) {
  const Core ca = make_core(a), cb = make_core(b);
  const ShapeKind ka = a.shape.kind, kb = b.shape.kind;
  using K = ShapeKind;
  if (ka == K::sphere && kb == K::sphere) {
    return exact_result((ca.center - cb.center).norm() - ca.inflate - cb.inflate);
  }
  if (ka == K::sphere && kb == K::capsule) {
    return exact_result(point_segment_distance(ca.center, segment_end(cb, -1), segment_end(cb, 1)) -
                        ca.inflate - cb.inflate);
  }
  if (ka == K::capsule && kb == K::capsule) {
    return exact_result(segment_segment_distance(segment_end(ca, -1), segment_end(ca, 1),
                                                  segment_end(cb, -1), segment_end(cb, 1)) -
                        ca.inflate - cb.inflate);
  }
  if (ka == K::box && kb == K::sphere) {
    return exact_result(point_box_distance(cb.center, ca) - cb.inflate);
  }
  const double lower = gjk_lower_bound(ca, cb) - ca.inflate - cb.inflate;
  if (lower <= kGjkContact) return {true, 0.0};
  return {false, lower};
}

}  // namespace

Proximity shapes_collide(const PosedShape& a, const PosedShape& b) {
  return canonical_less(b, a) ? ordered_query(b, a) : ordered_query(a, b);
}

bool contains_point(const PosedShape& s, const Vec3& point) {
  const Vec3 local = s.pose.orientation.conjugate() * (point - s.pose.position);
  switch (s.shape.kind) {
    case ShapeKind::sphere: return local.norm() <= s.shape.radius;
    case ShapeKind::box: return (local.cwiseAbs().array() <= s.shape.half_extents.array()).all();
    case ShapeKind::capsule:
      return point_segment_distance(local, Vec3(0, 0, -s.shape.half_length),
                                    Vec3(0, 0, s.shape.half_length)) <= s.shape.radius;
    case ShapeKind::cylinder:
      return std::abs(local.z()) <= s.shape.half_length &&
             std::hypot(local.x(), local.y()) <= s.shape.radius;
  }
  return false;
}

// ---------------------------------------------------------------------------------------------
// Workspace queries

namespace {

struct Body {
  const std::string* name;
  PosedShape shape;
  Aabb box;
  long link;  // chain index, -1 for a held object
};

struct Evaluation {
  bool colliding = false;
  std::optional<std::pair<std::string, std::string>> witness;
  double env_clearance = kInf;   // obstacles and bounds
  double self_clearance = kInf;  // robot against itself and the held object
};

const std::string kBoundsName = "bounds";

Evaluation evaluate(const Workspace& ws, const JointConfig& q, const CheckOptions& options,
                    bool want_distance) {
  const FkResult fk = forward_kinematics(ws.robot, ws.robot_base, q);
  std::vector<Body> movers;
  for (std::size_t i = 0; i < ws.robot.links.size(); ++i) {
    const Link& link = ws.robot.links[i];
    if (!link.shape) continue;
    PosedShape s{*link.shape, fk.links[i] * link.shape_offset};
    movers.push_back({&link.name, s, bounding_box(s.shape, s.pose), static_cast<long>(i)});
  }
  const long ee = static_cast<long>(ws.robot.ee_index());
  auto ignored = [&](const std::string& name) {
    return std::find(options.ignored.begin(), options.ignored.end(), name) !=
           options.ignored.end();
  };
  std::vector<Body> statics;
  for (const Obstacle& o : ws.obstacles) {
    if (ignored(o.name)) continue;
    if (o.attached) {
      PosedShape s{o.shape, fk.ee * *o.attached};
      movers.push_back({&o.name, s, bounding_box(s.shape, s.pose), -1});
    } else {
      statics.push_back({&o.name, {o.shape, o.pose}, bounding_box(o.shape, o.pose), -2});
    }
  }

  Evaluation out;
  auto report = [&](const std::string& a, const std::string& b) {
    if (!out.colliding) out.witness = std::make_pair(a, b);
    out.colliding = true;
  };
  auto pair_query = [&](const Body& a, const Body& b, double& clearance) {
    if (out.colliding && !want_distance) return;
    if (!want_distance && !a.box.overlaps(b.box)) return;
    if (want_distance && a.box.distance(b.box) >= clearance) return;
    const Proximity p = shapes_collide(a.shape, b.shape);
    if (p.colliding) {
      report(*a.name, *b.name);
      clearance = 0.0;
    } else {
      clearance = std::min(clearance, p.distance);
    }
  };

  for (const Body& m : movers) {
    for (const Body& s : statics) pair_query(m, s, out.env_clearance);
  }
  for (const Body& m : movers) {
    const double gap = std::min((ws.bounds.max - m.box.max).minCoeff(),
                                (m.box.min - ws.bounds.min).minCoeff());
    if (gap <= 0.0) {
      report(*m.name, kBoundsName);
      out.env_clearance = 0.0;
    } else {
      out.env_clearance = std::min(out.env_clearance, gap);
    }
  }
  for (std::size_t i = 0; i < movers.size(); ++i) {
    for (std::size_t j = i + 1; j < movers.size(); ++j) {
      const Body &a = movers[i], &b = movers[j];
      if (a.link >= 0 && b.link >= 0) {
        if (std::abs(a.link - b.link) <= 1) continue;
      } else {
        const long link = a.link >= 0 ? a.link : b.link;
        if (link < 0 || std::abs(link - ee) <= 1) continue;
      }
      pair_query(a, b, out.self_clearance);
    }
  }
  return out;
}

std::vector<JointConfig> edge_samples(const JointConfig& from, const JointConfig& to,
                                      double resolution, std::vector<double>* params = nullptr) {
  const double length = distance(from, to);
  const int n = std::max(1, static_cast<int>(std::ceil(length / resolution)));
  std::vector<JointConfig> out;
  out.reserve(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) {
    const double s = static_cast<double>(k) / n;
    out.emplace_back(k == n ? to.values : Eigen::VectorXd(from.values + s * (to.values - from.values)));
    if (params) params->push_back(s);
  }
  return out;
}

}  // namespace

CollisionReport check_config(const Workspace& ws, const JointConfig& q,
                             const CheckOptions& options) {
  const Evaluation e = evaluate(ws, q, options, true);
  CollisionReport report;
  report.in_collision = e.colliding;
  report.witness = e.witness;
  report.clearance = e.colliding ? 0.0 : std::min(e.env_clearance, e.self_clearance);
  return report;
}

bool check_edge(const Workspace& ws, const JointConfig& from, const JointConfig& to,
                double resolution, const CheckOptions& options) {
  if (!(resolution > 0.0)) return false;
  for (const JointConfig& q : edge_samples(from, to, resolution)) {
    if (evaluate(ws, q, options, false).colliding) return false;
  }
  return true;
}

Eigen::VectorXd motion_bounds(const Workspace& ws) {
  const RobotModel& robot = ws.robot;
  Eigen::VectorXd bounds = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(robot.dof()));
  const std::size_t ee = robot.ee_index();
  double held_radius = 0.0;
  if (const Obstacle* held = ws.attached_obstacle()) {
    held_radius = robot.ee_offset.position.norm() + held->attached->position.norm() +
                  held->shape.bounding_radius();
  }
  std::size_t k = 0;
  for (std::size_t i = 0; i < robot.joints.size(); ++i) {
    const Joint& joint = robot.joints[i];
    if (!joint.movable()) continue;
    double lever = 0.0;
    if (joint.kind == JointKind::prismatic) {
      lever = 1.0;
    } else {
      // links[i + 1] sits on the joint axis; walk outwards accumulating offsets.
      double reach = 0.0;
      for (std::size_t m = i + 1; m < robot.links.size(); ++m) {
        if (m > i + 1) {
          const Joint& between = robot.joints[m - 1];
          reach += between.origin.position.norm();
          if (between.kind == JointKind::prismatic) {
            reach += std::max(std::abs(between.limits.lower), std::abs(between.limits.upper));
          }
        }
        const Link& link = robot.links[m];
        if (link.shape) {
          lever = std::max(lever, reach + link.shape_offset.position.norm() +
                                      link.shape->bounding_radius());
        }
        if (m == ee && held_radius > 0.0) lever = std::max(lever, reach + held_radius);
      }
    }
    bounds[static_cast<Eigen::Index>(k++)] = lever;
  }
  return bounds;
}

bool check_edge_certified(const Workspace& ws, const JointConfig& from, const JointConfig& to,
                          double resolution, const CheckOptions& options) {
  if (!(resolution > 0.0)) return false;
  std::vector<double> params;
  const std::vector<JointConfig> samples = edge_samples(from, to, resolution, &params);
  std::vector<Evaluation> evals;
  evals.reserve(samples.size());
  for (const JointConfig& q : samples) {
    evals.push_back(evaluate(ws, q, options, true));
    if (evals.back().colliding) return false;
  }
  const Eigen::VectorXd delta = to.values - from.values;
  const double sweep = motion_bounds(ws).dot(delta.cwiseAbs());
  if (sweep == 0.0) return true;

  constexpr int kMaxDepth = 24;
  auto certify = [&](auto&& self, double s0, const Evaluation& e0, double s1,
                     const Evaluation& e1, int depth) -> bool {
    const double move = sweep * (s1 - s0);
    if (e0.env_clearance + e1.env_clearance > move &&
        e0.self_clearance + e1.self_clearance > 2.0 * move) {
      return true;
    }
    if (depth >= kMaxDepth) return false;
    const double sm = 0.5 * (s0 + s1);
    const Evaluation em =
        evaluate(ws, JointConfig(Eigen::VectorXd(from.values + sm * delta)), options, true);
    if (em.colliding) return false;
    return self(self, s0, e0, sm, em, depth + 1) && self(self, sm, em, s1, e1, depth + 1);
  };
  for (std::size_t k = 0; k + 1 < samples.size(); ++k) {
    if (!certify(certify, params[k], evals[k], params[k + 1], evals[k + 1], 0)) return false;
  }
  return true;
}

}  // namespace lang2manip
