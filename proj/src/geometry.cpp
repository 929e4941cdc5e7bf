#include "lang2manip/geometry.hpp"

#include <cmath>

#include "lang2manip/errors.hpp"

namespace lang2manip {

Pose Pose::from_components(double x, double y, double z, double qx, double qy, double qz,
                           double qw, bool* normalized) {
  const double norm = std::sqrt(qx * qx + qy * qy + qz * qz + qw * qw);
  if (!(norm >= 1e-6)) {
    throw Error(Errc::invalid_value, "quaternion norm below 1e-6");
  }
  if (normalized) *normalized = std::abs(norm - 1.0) > 1e-9;
  Pose pose;
  pose.position = Vec3(x, y, z);
  pose.orientation = Quat(qw / norm, qx / norm, qy / norm, qz / norm);
  return pose;
}

Pose Pose::operator*(const Pose& rhs) const {
  Pose out;
  out.position = orientation * rhs.position + position;
  out.orientation = (orientation * rhs.orientation).normalized();
  return out;
}

Pose Pose::inverse() const {
  Pose out;
  out.orientation = orientation.conjugate();
  out.position = -(out.orientation * position);
  return out;
}

std::array<double, 7> Pose::components() const {
  return {position.x(),      position.y(),      position.z(),     orientation.x(),
          orientation.y(),   orientation.z(),   orientation.w()};
}

bool approx_equal(const Pose& a, const Pose& b, double tol) {
  if ((a.position - b.position).cwiseAbs().maxCoeff() > tol) return false;
  // q and -q are the same rotation
  const double direct = (a.orientation.coeffs() - b.orientation.coeffs()).cwiseAbs().maxCoeff();
  const double flipped = (a.orientation.coeffs() + b.orientation.coeffs()).cwiseAbs().maxCoeff();
  return std::min(direct, flipped) <= tol;
}

bool same_bits(const Pose& a, const Pose& b) {
  return a.components() == b.components();
}

std::string_view to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::box: return "box";
    case ShapeKind::cylinder: return "cylinder";
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::capsule: return "capsule";
  }
  return "?";
}

ShapePrimitive ShapePrimitive::box(double hx, double hy, double hz) {
  ShapePrimitive s;
  s.kind = ShapeKind::box;
  s.half_extents = Vec3(hx, hy, hz);
  return s;
}

ShapePrimitive ShapePrimitive::sphere(double r) {
  ShapePrimitive s;
  s.kind = ShapeKind::sphere;
  s.radius = r;
  return s;
}

ShapePrimitive ShapePrimitive::cylinder(double r, double half_length) {
  ShapePrimitive s;
  s.kind = ShapeKind::cylinder;
  s.radius = r;
  s.half_length = half_length;
  return s;
}

ShapePrimitive ShapePrimitive::capsule(double r, double half_length) {
  ShapePrimitive s = cylinder(r, half_length);
  s.kind = ShapeKind::capsule;
  return s;
}

double ShapePrimitive::bounding_radius() const {
  switch (kind) {
    case ShapeKind::box: return half_extents.norm();
    case ShapeKind::sphere: return radius;
    case ShapeKind::cylinder: return std::hypot(radius, half_length);
    case ShapeKind::capsule: return radius + half_length;
  }
  return 0.0;
}

bool ShapePrimitive::valid() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  switch (kind) {
    case ShapeKind::box:
      return positive(half_extents.x()) && positive(half_extents.y()) &&
             positive(half_extents.z());
    case ShapeKind::sphere: return positive(radius);
    case ShapeKind::cylinder:
    case ShapeKind::capsule: return positive(radius) && positive(half_length);
  }
  return false;
}

bool operator==(const ShapePrimitive& a, const ShapePrimitive& b) {
  return a.kind == b.kind && a.half_extents == b.half_extents && a.radius == b.radius &&
         a.half_length == b.half_length;
}

double Aabb::distance(const Aabb& other) const {
  const Vec3 gap = (other.min - max).cwiseMax(min - other.max).cwiseMax(Vec3::Zero());
  return gap.norm();
}

Aabb bounding_box(const ShapePrimitive& shape, const Pose& pose) {
  const Mat3 r = pose.rotation();
  Vec3 half = Vec3::Zero();
  switch (shape.kind) {
    case ShapeKind::sphere:
      half.setConstant(shape.radius);
      break;
    case ShapeKind::box:
      half = r.cwiseAbs() * shape.half_extents;
      break;
    case ShapeKind::capsule: {
      const Vec3 axis = r.col(2);
      half = axis.cwiseAbs() * shape.half_length + Vec3::Constant(shape.radius);
      break;
    }
    case ShapeKind::cylinder: {
      const Vec3 axis = r.col(2);
      for (int i = 0; i < 3; ++i) {
        const double a = std::abs(axis[i]);
        half[i] = a * shape.half_length + shape.radius * std::sqrt(std::max(0.0, 1.0 - a * a));
      }
      break;
    }
  }
  return {pose.position - half, pose.position + half};
}

Quat axis_angle(const Vec3& axis, double angle) {
  return Quat(Eigen::AngleAxisd(angle, axis.normalized()));
}

Vec3 rotation_vector(const Quat& q_in) {
  Quat q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < 1e-12) return 2.0 * v;
  const double angle = 2.0 * std::atan2(s, q.w());
  return v * (angle / s);
}

}  // namespace lang2manip
