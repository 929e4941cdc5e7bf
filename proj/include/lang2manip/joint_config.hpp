#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <initializer_list>

namespace lang2manip {

/// One value per non-fixed joint, base-to-tip order (radians or meters).
struct JointConfig {
  Eigen::VectorXd values;

  JointConfig() = default;
  explicit JointConfig(Eigen::VectorXd v) : values(std::move(v)) {}
  JointConfig(std::initializer_list<double> init) : values(static_cast<Eigen::Index>(init.size())) {
    Eigen::Index i = 0;
    for (double v : init) values[i++] = v;
  }

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
  double operator[](std::size_t i) const { return values[static_cast<Eigen::Index>(i)]; }
  double& operator[](std::size_t i) { return values[static_cast<Eigen::Index>(i)]; }

  friend bool operator==(const JointConfig& a, const JointConfig& b) {
    return a.values.size() == b.values.size() && a.values == b.values;
  }
};

/// Joint-space distance: unit-weight Euclidean.
inline double distance(const JointConfig& a, const JointConfig& b) {
  return (a.values - b.values).norm();
}

}  // namespace lang2manip
