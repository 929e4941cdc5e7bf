#include "lang2manip/textualizer.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace lang2manip {

std::string format_fixed(double value, int precision) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.*f", precision, value);
  std::string out(buffer);
  if (out[0] == '-' && out.find_first_not_of("-0.") == std::string::npos) out.erase(0, 1);
  return out;
}

namespace {

std::string tuple(std::initializer_list<double> values, int precision) {
  std::string out = "(";
  bool first = true;
  for (double v : values) {
    if (!first) out += ", ";
    out += format_fixed(v, precision);
    first = false;
  }
  return out + ")";
}

struct Placed {
  const Obstacle* obstacle;
  Pose pose;
  Aabb box;
};

std::vector<Placed> place_all(const Workspace& ws) {
  std::vector<Placed> out;
  for (const Obstacle& o : ws.obstacles) {
    const Pose pose = ws.obstacle_pose(o);
    out.push_back({&o, pose, bounding_box(o.shape, pose)});
  }
  return out;
}

double footprint_overlap(const Aabb& a, const Aabb& b) {
  const double dx = std::min(a.max.x(), b.max.x()) - std::max(a.min.x(), b.min.x());
  const double dy = std::min(a.max.y(), b.max.y()) - std::max(a.min.y(), b.min.y());
  if (dx <= 0.0 || dy <= 0.0) return 0.0;
  return dx * dy;
}

bool rests_on(const Aabb& a, const Aabb& b, const TextualizerConfig& c) {
  if (std::abs(a.min.z() - b.max.z()) > c.on_tolerance) return false;
  const Vec3 ea = a.extents();
  const double area = ea.x() * ea.y();
  if (area <= 0.0) return false;
  return footprint_overlap(a, b) >= c.on_min_overlap * area;
}

}  // namespace

std::vector<Relation> spatial_relations(const Workspace& ws, const TextualizerConfig& config) {
  const std::vector<Placed> placed = place_all(ws);
  std::vector<Relation> out;
  const std::size_t n = placed.size();
  std::vector<std::vector<bool>> supported(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const Aabb &a = placed[i].box, &b = placed[j].box;
      if (rests_on(a, b, config)) {
        out.push_back({"on", placed[i].obstacle->name, placed[j].obstacle->name});
        supported[i][j] = true;
      }
      if (b.contains(a)) {
        out.push_back({"inside", placed[i].obstacle->name, placed[j].obstacle->name});
        supported[i][j] = true;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (supported[i][j] || supported[j][i]) continue;
      if ((placed[i].pose.position - placed[j].pose.position).norm() >= config.near_distance) {
        continue;
      }
      std::string a = placed[i].obstacle->name, b = placed[j].obstacle->name;
      if (b < a) std::swap(a, b);
      out.push_back({"near", a, b});
    }
  }
  std::sort(out.begin(), out.end(),
            [](const Relation& x, const Relation& y) { return x.render() < y.render(); });
  return out;
}

StateText textualize(const Workspace& ws, const TextualizerConfig& config) {
  const int p = config.precision;
  StateText text;
  text.header = "# environment state (all lengths in meters, angles in radians)\n";

  std::ostringstream robot;
  const RobotModel& r = ws.robot;
  const Vec3& bp = ws.robot_base.position;
  const Quat& bq = ws.robot_base.orientation;
  robot << "ROBOT\n";
  robot << r.name << " | dof=" << r.dof() << " | base=" << tuple({bp.x(), bp.y(), bp.z()}, p)
        << " | base_orientation=" << tuple({bq.x(), bq.y(), bq.z(), bq.w()}, p) << "\n";
  robot << "links: ";
  for (std::size_t i = 0; i < r.links.size(); ++i) robot << (i ? " -> " : "") << r.links[i].name;
  robot << "\nend_effector: " << r.ee_link;
  if (r.gripper) {
    robot << " | max_opening=" << format_fixed(r.gripper->max_opening, p)
          << " | finger_reach=" << format_fixed(r.gripper->finger_reach, p);
  }
  robot << "\njoints:\n";
  const std::vector<bool> locked = ws.locked_mask();
  for (std::size_t d = 0; d < r.dof(); ++d) {
    const Joint& j = r.movable_joint(d);
    robot << "  " << j.name << " | " << to_string(j.kind)
          << " | value=" << format_fixed(ws.current_config[d], p) << " | limits=["
          << format_fixed(j.limits.lower, p) << ", " << format_fixed(j.limits.upper, p) << "]"
          << " | controlled=" << (locked[d] ? "false" : "true") << "\n";
  }
  text.robot_block = robot.str();

  std::ostringstream obstacles;
  obstacles << "OBSTACLES\n";
  if (ws.obstacles.empty()) obstacles << "none\n";
  for (const Obstacle& o : ws.obstacles) {
    const Pose pose = ws.obstacle_pose(o);
    const Vec3 e = bounding_box(o.shape, pose).extents();
    const Vec3& x = pose.position;
    const Quat& q = pose.orientation;
    obstacles << o.name << " | graspable=" << (o.graspable ? "true" : "false")
              << " | position=" << tuple({x.x(), x.y(), x.z()}, p)
              << " | bbox=" << tuple({e.x(), e.y(), e.z()}, p) << "\n";
    obstacles << "  orientation=" << tuple({q.x(), q.y(), q.z(), q.w()}, p) << "\n";
    if (o.attached) obstacles << "  held=true\n";
  }
  text.obstacles_block = obstacles.str();

  std::ostringstream relations;
  relations << "RELATIONS\n";
  const std::vector<Relation> rel = spatial_relations(ws, config);
  if (rel.empty()) relations << "none\n";
  for (const Relation& x : rel) relations << x.render() << "\n";
  text.relations_block = relations.str();

  text.rendered = text.header + "\n" + text.robot_block + "\n" + text.obstacles_block + "\n" +
                  text.relations_block;
  return text;
}

}  // namespace lang2manip

namespace lang2manip {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// "(a, b, c)" -> numbers; empty on mismatch.
std::vector<double> read_tuple(std::string_view s) {
  std::vector<double> out;
  s = trim(s);
  if (s.size() < 2 || s.front() != '(' || s.back() != ')') return {};
  std::string inner(s.substr(1, s.size() - 2));
  std::istringstream in(inner);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      const std::string t(trim(item));
      out.push_back(std::stod(t, &used));
      if (used != t.size()) return {};
    } catch (const std::exception&) {
      return {};
    }
  }
  return out;
}

std::string_view field_value(std::string_view field, std::string_view key) {
  field = trim(field);
  if (field.substr(0, key.size()) != key || field.size() <= key.size() || field[key.size()] != '=') {
    return {};
  }
  return field.substr(key.size() + 1);
}

}  // namespace

const StateEntry* ParsedState::find(std::string_view name) const {
  for (const StateEntry& e : obstacles) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

bool ParsedState::related(std::string_view predicate, std::string_view a, std::string_view b) const {
  for (const Relation& r : relations) {
    if (r.predicate == predicate && r.a == a && r.b == b) return true;
  }
  return false;
}

ParsedState parse_state_text(std::string_view text) {
  ParsedState state;
  enum class Block { none, obstacles, relations } block = Block::none;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    const std::string_view line = raw;
    const std::string_view t = trim(line);
    if (t == "OBSTACLES") {
      block = Block::obstacles;
      continue;
    }
    if (t == "RELATIONS") {
      block = Block::relations;
      continue;
    }
    if (t == "ROBOT" || t.empty()) {
      if (t == "ROBOT") block = Block::none;
      continue;
    }
    if (block == Block::obstacles) {
      if (line.front() == ' ') {
        if (state.obstacles.empty()) continue;
        StateEntry& e = state.obstacles.back();
        if (auto v = field_value(t, "orientation"); !v.empty()) {
          const auto q = read_tuple(v);
          if (q.size() == 4) {
            Quat quat(q[3], q[0], q[1], q[2]);
            if (quat.norm() > 1e-6) e.orientation = quat.normalized();
          }
        } else if (field_value(t, "held") == "true") {
          e.held = true;
        }
        continue;
      }
      std::vector<std::string_view> fields;
      std::size_t start = 0;
      while (true) {
        const std::size_t bar = t.find('|', start);
        fields.push_back(trim(t.substr(start, bar == std::string_view::npos ? bar : bar - start)));
        if (bar == std::string_view::npos) break;
        start = bar + 1;
      }
      if (fields.size() != 4) continue;
      StateEntry e;
      e.name = std::string(fields[0]);
      e.graspable = field_value(fields[1], "graspable") == "true";
      const auto pos = read_tuple(field_value(fields[2], "position"));
      const auto box = read_tuple(field_value(fields[3], "bbox"));
      if (pos.size() != 3 || box.size() != 3) continue;
      e.position = Vec3(pos[0], pos[1], pos[2]);
      e.bbox = Vec3(box[0], box[1], box[2]);
      state.obstacles.push_back(std::move(e));
    } else if (block == Block::relations) {
      const std::size_t open = t.find('(');
      const std::size_t comma = t.find(',');
      if (open == std::string_view::npos || comma == std::string_view::npos || t.back() != ')') {
        continue;
      }
      state.relations.push_back({std::string(t.substr(0, open)),
                                 std::string(trim(t.substr(open + 1, comma - open - 1))),
                                 std::string(trim(t.substr(comma + 1, t.size() - comma - 2)))});
    }
  }
  return state;
}

}  // namespace lang2manip
