#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <string_view>

namespace lang2manip {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;
using Mat3 = Eigen::Matrix3d;

/// Rigid transform: position in meters plus a unit quaternion.
struct Pose {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();

  static Pose identity() { return {}; }
  static Pose from_translation(const Vec3& p) { return {p, Quat::Identity()}; }

  /// Builds a pose from raw components. The quaternion is normalized; `normalized`
  /// reports whether the input norm was off by more than 1e-9. Throws Error(invalid_value)
  /// when the quaternion norm is below 1e-6.
  static Pose from_components(double x, double y, double z, double qx, double qy, double qz,
                              double qw, bool* normalized = nullptr);

  Pose operator*(const Pose& rhs) const;
  Pose inverse() const;
  Vec3 transform(const Vec3& p) const { return orientation * p + position; }
  Mat3 rotation() const { return orientation.toRotationMatrix(); }

  /// [x, y, z, qx, qy, qz, qw]
  std::array<double, 7> components() const;
};

bool approx_equal(const Pose& a, const Pose& b, double tol);
/// Exact component equality (used for round-trip identity checks).
bool same_bits(const Pose& a, const Pose& b);

enum class ShapeKind { box, cylinder, sphere, capsule };

std::string_view to_string(ShapeKind kind);

/// Primitive collision shape centred on its own frame. Cylinder and capsule axes are local z.
struct ShapePrimitive {
  ShapeKind kind = ShapeKind::sphere;
  Vec3 half_extents = Vec3::Zero();  // box only
  double radius = 0.0;               // sphere, cylinder, capsule
  double half_length = 0.0;          // cylinder, capsule

  static ShapePrimitive box(double hx, double hy, double hz);
  static ShapePrimitive sphere(double r);
  static ShapePrimitive cylinder(double r, double half_length);
  static ShapePrimitive capsule(double r, double half_length);

  /// Radius of the smallest origin-centred ball containing the shape.
  double bounding_radius() const;
  bool valid() const;
};

bool operator==(const ShapePrimitive& a, const ShapePrimitive& b);

struct PosedShape {
  ShapePrimitive shape;
  Pose pose;
};

/// Axis-aligned box in world coordinates.
struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extents() const { return max - min; }
  bool contains(const Aabb& inner) const {
    return (inner.min.array() >= min.array()).all() && (inner.max.array() <= max.array()).all();
  }
  bool overlaps(const Aabb& other) const {
    return (min.array() <= other.max.array()).all() && (max.array() >= other.min.array()).all();
  }
  /// Separation between two boxes (0 when overlapping).
  double distance(const Aabb& other) const;
};

/// Tight world AABB of a posed primitive.
Aabb bounding_box(const ShapePrimitive& shape, const Pose& pose);

/// Unit quaternion for a rotation about `axis` by `angle` radians.
Quat axis_angle(const Vec3& axis, double angle);

/// Axis-angle vector of the rotation `q` (shortest, angle in [0, pi]).
Vec3 rotation_vector(const Quat& q);

}  // namespace lang2manip
