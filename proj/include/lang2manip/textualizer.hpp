#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "lang2manip/scene.hpp"

namespace lang2manip {

struct TextualizerConfig {
  int precision = 3;
  double on_tolerance = 0.005;   // |bottom(a) - top(b)| for on(a, b)
  double on_min_overlap = 0.25;  // fraction of a's footprint overlapping b
  double near_distance = 0.15;   // centroid distance for near(a, b)
};

struct Relation {
  std::string predicate;  // "on", "inside" or "near"
  std::string a;
  std::string b;

  std::string render() const { return predicate + "(" + a + ", " + b + ")"; }
  friend bool operator==(const Relation&, const Relation&) = default;
};

/// on / inside / near over current world AABBs, sorted by rendered text. near is emitted once per
/// unordered pair with names in lexicographic order.
std::vector<Relation> spatial_relations(const Workspace& ws, const TextualizerConfig& config = {});

struct StateText {
  std::string header;
  std::string robot_block;
  std::string obstacles_block;
  std::string relations_block;
  std::string rendered;
};

StateText textualize(const Workspace& ws, const TextualizerConfig& config = {});

/// Obstacle and relation entries read back from rendered state text.
struct StateEntry {
  std::string name;
  bool graspable = false;
  bool held = false;
  Vec3 position = Vec3::Zero();
  Vec3 bbox = Vec3::Zero();
  Quat orientation = Quat::Identity();
};

struct ParsedState {
  std::vector<StateEntry> obstacles;
  std::vector<Relation> relations;

  const StateEntry* find(std::string_view name) const;
  bool related(std::string_view predicate, std::string_view a, std::string_view b) const;
};

/// Lenient reader for textualize() output; unrecognised lines are skipped.
ParsedState parse_state_text(std::string_view text);

/// Fixed-point rendering without negative zero.
std::string format_fixed(double value, int precision);

}  // namespace lang2manip
