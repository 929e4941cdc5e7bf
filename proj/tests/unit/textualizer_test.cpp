#include <gtest/gtest.h>

#include <cmath>
#include <regex>

#include "fixtures.hpp"
#include "lang2manip/textualizer.hpp"

using namespace l2m_test;

namespace {

Obstacle marker_at(Vec3 p) {
  Obstacle o;
  o.name = "marker";
  o.shape = ShapePrimitive::capsule(0.01, 0.05);
  o.pose = Pose::from_translation(p);
  o.graspable = true;
  return o;
}

Obstacle holder_at(Vec3 p) {
  Obstacle o;
  o.name = "holder";
  o.shape = ShapePrimitive::cylinder(0.04, 0.05);
  o.pose = Pose::from_translation(p);
  return o;
}

Workspace scene(std::vector<Obstacle> obstacles) {
  return make_workspace(panda(), std::move(obstacles), Aabb{{-1, -1, 0}, {1, 1, 1.3}});
}

int count_lines_starting(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  int n = 0;
  for (std::string line; std::getline(in, line);) n += line.rfind(prefix, 0) == 0;
  return n;
}

}  // namespace

TEST(Textualize, ObstacleLineFormat) {
  const StateText t = textualize(scene({marker_at({0.5, 0.0, 0.1})}));
  EXPECT_NE(t.obstacles_block.find(
                "marker | graspable=true | position=(0.500, 0.000, 0.100) | bbox=(0.020, 0.020, 0.120)"),
            std::string::npos)
      << t.obstacles_block;
  EXPECT_NE(t.obstacles_block.find("orientation=(0.000, 0.000, 0.000, 1.000)"), std::string::npos);
}

TEST(Textualize, EmptyObstacleList) {
  const StateText t = textualize(scene({}));
  EXPECT_NE(t.obstacles_block.find("none"), std::string::npos);
  EXPECT_NE(t.relations_block.find("none"), std::string::npos);
}

TEST(Textualize, SectionsAndHeader) {
  const StateText t = textualize(demo_workspace());
  EXPECT_NE(t.header.find("all lengths in meters, angles in radians"), std::string::npos);
  const auto r = t.rendered.find(t.robot_block), o = t.rendered.find(t.obstacles_block),
             rel = t.rendered.find(t.relations_block);
  ASSERT_NE(r, std::string::npos);
  EXPECT_LT(r, o);
  EXPECT_LT(o, rel);
  EXPECT_NE(t.robot_block.find("dof=7"), std::string::npos);
  EXPECT_NE(t.robot_block.find("panda_link0 -> panda_link1"), std::string::npos);
  EXPECT_NE(t.robot_block.find("panda_joint4 | revolute | value=-2.356 | limits=[-3.072, -0.070]"),
            std::string::npos);
}

TEST(Textualize, MarkerOnHolder) {
  // Holder top at z = 0.1; marker bottom 3 mm above it.
  const Workspace ws = scene({holder_at({0.4, 0.2, 0.05}), marker_at({0.4, 0.2, 0.163})});
  const StateText t = textualize(ws);
  EXPECT_NE(t.relations_block.find("on(marker, holder)"), std::string::npos) << t.relations_block;
  EXPECT_EQ(t.relations_block.find("near("), std::string::npos);
}

TEST(Textualize, RelationsMatchPredicateDefinitions) {
  Rng rng(21);
  const TextualizerConfig c;
  for (int k = 0; k < 200; ++k) {
    std::vector<Obstacle> obstacles;
    const int n = 2 + static_cast<int>(rng.index(3));
    for (int i = 0; i < n; ++i) {
      Obstacle o;
      o.name = "obj" + std::to_string(i);
      o.shape = ShapePrimitive::box(rng.uniform(0.01, 0.08), rng.uniform(0.01, 0.08), rng.uniform(0.01, 0.08));
      o.pose = Pose::from_translation({rng.uniform(0.3, 0.5), rng.uniform(-0.1, 0.1), rng.uniform(0.05, 0.3)});
      if (i > 0 && rng.bernoulli(0.4)) {
        // Stack on the previous object, sometimes inside it.
        const Aabb below = bounding_box(obstacles.back().shape, obstacles.back().pose);
        o.pose.position.z() = below.max.z() + o.shape.half_extents.z() + rng.uniform(-0.004, 0.004);
      }
      obstacles.push_back(o);
    }
    const Workspace ws = scene(obstacles);
    std::vector<std::string> expected;
    for (const Obstacle& a : obstacles) {
      for (const Obstacle& b : obstacles) {
        if (&a == &b) continue;
        const Aabb ba = bounding_box(a.shape, a.pose), bb = bounding_box(b.shape, b.pose);
        const double ox = std::min(ba.max.x(), bb.max.x()) - std::max(ba.min.x(), bb.min.x());
        const double oy = std::min(ba.max.y(), bb.max.y()) - std::max(ba.min.y(), bb.min.y());
        const double area = ba.extents().x() * ba.extents().y();
        const bool on = std::abs(ba.min.z() - bb.max.z()) <= c.on_tolerance && ox > 0 && oy > 0 &&
                        ox * oy >= c.on_min_overlap * area;
        const bool in = (ba.min.array() >= bb.min.array()).all() && (ba.max.array() <= bb.max.array()).all();
        if (on) expected.push_back("on(" + a.name + ", " + b.name + ")");
        if (in) expected.push_back("inside(" + a.name + ", " + b.name + ")");
      }
    }
    for (std::size_t i = 0; i < obstacles.size(); ++i) {
      for (std::size_t j = i + 1; j < obstacles.size(); ++j) {
        const Obstacle &a = obstacles[i], &b = obstacles[j];
        const bool linked = std::count_if(expected.begin(), expected.end(), [&](const std::string& r) {
          return r.find("(" + a.name + ", " + b.name + ")") != std::string::npos ||
                 r.find("(" + b.name + ", " + a.name + ")") != std::string::npos;
        }) > 0;
        if (!linked && (a.pose.position - b.pose.position).norm() < c.near_distance) {
          expected.push_back("near(" + a.name + ", " + b.name + ")");
        }
      }
    }
    std::sort(expected.begin(), expected.end());
    std::vector<std::string> got;
    for (const Relation& r : spatial_relations(ws)) got.push_back(r.render());
    EXPECT_EQ(got, expected) << "case " << k;
  }
}

TEST(Textualize, HeldObjectFlagged) {
  Workspace ws = demo_workspace();
  ws = attach_object(ws, "marker", Pose::from_translation({0, 0, 0.02}));
  const StateText t = textualize(ws);
  EXPECT_NE(t.obstacles_block.find("  held=true"), std::string::npos);
  const ParsedState parsed = parse_state_text(t.rendered);
  ASSERT_NE(parsed.find("marker"), nullptr);
  EXPECT_TRUE(parsed.find("marker")->held);
  EXPECT_FALSE(parsed.find("eraser")->held);
}

TEST(Textualize, CompletenessOneEntryPerNameAndJoint) {
  const Workspace ws = demo_workspace();
  const StateText t = textualize(ws);
  for (const Obstacle& o : ws.obstacles) {
    EXPECT_EQ(count_lines_starting(t.obstacles_block, o.name + " | "), 1) << o.name;
  }
  for (const Joint& j : ws.robot.joints) {
    if (!j.movable()) continue;
    EXPECT_EQ(count_lines_starting(t.robot_block, "  " + j.name + " | "), 1) << j.name;
    std::regex word("\\b" + j.name + "\\b");
    EXPECT_EQ(std::distance(std::sregex_iterator(t.rendered.begin(), t.rendered.end(), word),
                            std::sregex_iterator()),
              1);
  }
}

TEST(Textualize, RoundTripAtPrintedPrecision) {
  Rng rng(13);
  for (int k = 0; k < 50; ++k) {
    Workspace ws = demo_workspace();
    for (Obstacle& o : ws.obstacles) {
      o.pose.position += Vec3(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(0, 0.2));
      o.pose.orientation = axis_angle(Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), 1).normalized(),
                                      rng.uniform(-3, 3));
    }
    const ParsedState parsed = parse_state_text(textualize(ws).rendered);
    ASSERT_EQ(parsed.obstacles.size(), ws.obstacles.size());
    for (const Obstacle& o : ws.obstacles) {
      const StateEntry* e = parsed.find(o.name);
      ASSERT_NE(e, nullptr);
      const double half_ulp = 0.5e-3 + 1e-12;
      EXPECT_LE((e->position - o.pose.position).cwiseAbs().maxCoeff(), half_ulp);
      EXPECT_LE((e->bbox - bounding_box(o.shape, o.pose).extents()).cwiseAbs().maxCoeff(), half_ulp);
      // Printed coefficients come back renormalised.
      const Eigen::Vector4d printed = (o.pose.orientation.coeffs() * 1000.0).array().round() / 1000.0;
      EXPECT_LE((e->orientation.coeffs() - printed.normalized()).cwiseAbs().maxCoeff(), 1e-9);
      EXPECT_EQ(e->graspable, o.graspable);
    }
    for (const Relation& r : spatial_relations(ws)) EXPECT_TRUE(parsed.related(r.predicate, r.a, r.b));
  }
}

TEST(Textualize, DeterministicAndPrecisionConfigurable) {
  const Workspace ws = demo_workspace();
  EXPECT_EQ(textualize(ws).rendered, textualize(ws).rendered);
  TextualizerConfig c;
  c.precision = 2;
  EXPECT_NE(textualize(ws, c).obstacles_block.find("position=(0.45, -0.15, 0.06)"), std::string::npos);
}

TEST(BoundingBox, AnalyticExamples) {
  const Aabb sphere = bounding_box(ShapePrimitive::sphere(1.0), Pose::from_translation({3, -2, 1}));
  EXPECT_LE((sphere.extents() - Vec3(2, 2, 2)).norm(), 1e-12);
  EXPECT_LE((sphere.center() - Vec3(3, -2, 1)).norm(), 1e-12);
  const Aabb box = bounding_box(ShapePrimitive::box(0.1, 0.2, 0.3), Pose::identity());
  EXPECT_LE((box.extents() - Vec3(0.2, 0.4, 0.6)).norm(), 1e-12);
  const Aabb turned = bounding_box(ShapePrimitive::box(1, 1, 1),
                                   Pose{Vec3::Zero(), axis_angle(Vec3::UnitZ(), std::numbers::pi / 4)});
  EXPECT_NEAR(turned.extents().x(), 2 * std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(turned.extents().y(), 2 * std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(turned.extents().z(), 2.0, 1e-12);
}

TEST(BoundingBox, TightAgainstSampledSurface) {
  Rng rng(14);
  for (int k = 0; k < 100; ++k) {
    ShapePrimitive s;
    switch (k % 3) {
      case 0: s = ShapePrimitive::box(0.1, 0.2, 0.05); break;
      case 1: s = ShapePrimitive::cylinder(0.1, 0.3); break;
      default: s = ShapePrimitive::capsule(0.05, 0.2); break;
    }
    const Pose p{Vec3(rng.uniform(-1, 1), 0, 0),
                 axis_angle(Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized(),
                            rng.uniform(0, 3))};
    const Aabb box = bounding_box(s, p);
    Vec3 lo = Vec3::Constant(1e9), hi = Vec3::Constant(-1e9);
    for (int i = 0; i < 20000; ++i) {
      Vec3 local;
      const double a = rng.uniform(0, 2 * std::numbers::pi), t = rng.uniform(-1, 1);
      if (s.kind == ShapeKind::box) {
        local = Vec3(rng.bernoulli(0.5) ? 1 : -1, rng.bernoulli(0.5) ? 1 : -1, rng.bernoulli(0.5) ? 1 : -1)
                    .cwiseProduct(s.half_extents);
      } else if (s.kind == ShapeKind::cylinder) {
        local = Vec3(s.radius * std::cos(a), s.radius * std::sin(a), t > 0 ? s.half_length : -s.half_length);
      } else {
        const Vec3 u = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
        local = Vec3(0, 0, t > 0 ? s.half_length : -s.half_length) + s.radius * u;
      }
      const Vec3 w = p.transform(local);
      lo = lo.cwiseMin(w);
      hi = hi.cwiseMax(w);
    }
    EXPECT_TRUE((box.min.array() <= lo.array() + 1e-12).all());
    EXPECT_TRUE((box.max.array() >= hi.array() - 1e-12).all());
    EXPECT_LE((box.extents() - (hi - lo)).cwiseAbs().maxCoeff(), 0.02);
  }
}

TEST(FormatFixed, NoNegativeZero) {
  EXPECT_EQ(format_fixed(-0.0001, 3), "0.000");
  EXPECT_EQ(format_fixed(-0.0, 3), "0.000");
  EXPECT_EQ(format_fixed(-0.0006, 3), "-0.001");
  EXPECT_EQ(format_fixed(1.23456, 2), "1.23");
}
