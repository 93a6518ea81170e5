#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "support.hpp"
#include "uavnet/channel.hpp"
#include "uavnet/scenario.hpp"

using namespace uavnet;
using testing_support::contains;
using testing_support::error_message;

namespace {

GraphSpec square(double side) {
  GraphSpec g;
  g.nodes = {{0, 0}, {side, 0}, {side, side}, {0, side}};
  g.edges = {{0, 1, 15}, {1, 2, 15}, {2, 3, 15}, {3, 0, 15}};
  return g;
}

// Closest point by dense sampling of every edge at 1 mm resolution.
double sampled_distance(const RoadGraph& g, Vec2 p) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < g.edges().size(); ++e) {
    double len = g.edge(e).length;
    auto steps = static_cast<std::size_t>(len / 1e-3);
    for (std::size_t i = 0; i <= steps; ++i) {
      double s = len * static_cast<double>(i) / static_cast<double>(steps);
      best = std::min(best, distance(p, g.point_on(e, s)));
    }
  }
  return best;
}

}  // namespace

TEST(BuildGraph, PerimeterSquareHasUnitEdges) {
  RoadGraph g = build_graph(square(1000));
  ASSERT_EQ(g.edges().size(), 4u);
  for (const auto& e : g.edges()) EXPECT_DOUBLE_EQ(e.length, 1000.0);
}

TEST(BuildGraph, RejectsDanglingNode) {
  GraphSpec g = square(1000);
  g.edges.push_back({1, 7, 15});
  std::string msg = error_message([&] { build_graph(g); });
  EXPECT_TRUE(contains(msg, "dangling node reference")) << msg;
  EXPECT_TRUE(contains(msg, "edge 4")) << msg;
}

TEST(BuildGraph, RejectsDisconnected) {
  GraphSpec g;
  g.nodes = {{0, 0}, {10, 0}, {100, 100}, {200, 100}};
  g.edges = {{0, 1, 15}, {2, 3, 15}};
  std::string msg = error_message([&] { build_graph(g); });
  EXPECT_TRUE(contains(msg, "disconnected graph")) << msg;
}

TEST(BuildGraph, RejectsZeroLengthEdge) {
  GraphSpec g;
  g.nodes = {{0, 0}, {0, 0}};
  g.edges = {{0, 1, 15}};
  EXPECT_TRUE(contains(error_message([&] { build_graph(g); }), "zero-length edge"));
}

TEST(BuildGraph, RejectsEmptySpec) {
  EXPECT_THROW(build_graph(GraphSpec{}), ConfigError);
}

TEST(BuildGraph, AcceptsDefaultAreaGrid) {
  ServiceArea area{3000, 3000};
  RoadGraph g = build_graph(manhattan_grid(area, 4, 15.0));
  EXPECT_EQ(g.nodes().size(), 16u);
  EXPECT_EQ(g.edges().size(), 24u);
  for (const auto& e : g.edges()) {
    EXPECT_DOUBLE_EQ(e.length, 1000.0);
    EXPECT_DOUBLE_EQ(e.speed_limit, 15.0);
  }
}

TEST(SampleTask, SameSeedSameTask) {
  TaskDistribution d;
  d.area = {3000, 3000};
  EXPECT_EQ(sample_task(d, 42), sample_task(d, 42));
  EXPECT_NE(sample_task(d, 42), sample_task(d, 43));
}

TEST(SampleTask, ZeroJitterKeepsNominalChannel) {
  TaskDistribution d;
  d.channel_jitter = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Task t = sample_task(d, seed);
    EXPECT_EQ(t.channel, d.nominal_channel);
  }
}

TEST(SampleTask, UserXIsUniformOverTheArea) {
  TaskDistribution d;
  d.area = {3000, 1000};
  d.users_min = d.users_max = 1;
  const int n = 10000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += sample_task(d, static_cast<std::uint64_t>(i)).users[0].x;
  double mean = sum / n;
  double se = 3000.0 / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
  EXPECT_LT(std::abs(mean - 1500.0), 3.0 * se);
}

TEST(SampleTask, RejectsInvertedRanges) {
  TaskDistribution d;
  d.users_min = 10;
  d.users_max = 5;
  EXPECT_THROW(sample_task(d, 1), ConfigError);
  TaskDistribution r;
  r.r_min_lo_bps = 2e6;
  r.r_min_hi_bps = 1e6;
  EXPECT_THROW(sample_task(r, 1), ConfigError);
}

TEST(SampleTask, PropertyUsersInsideAndProbabilitiesValid) {
  TaskDistribution d;
  d.area = {2500, 1200};
  d.users_min = 1;
  d.users_max = 30;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    Task t = sample_task(d, seed);
    ASSERT_GE(t.users.size(), 1u);
    ASSERT_LE(t.users.size(), 30u);
    for (Vec2 u : t.users) ASSERT_TRUE(d.area.contains(u));
    EXPECT_GE(t.qos.r_min_bps, d.r_min_lo_bps);
    EXPECT_LE(t.qos.r_min_bps, d.r_min_hi_bps);
    for (SCurve c : {t.channel.g2a, t.channel.a2g}) {
      EXPECT_LE(std::abs(c.a / 9.61 - 1.0), 0.2 + 1e-12);
      EXPECT_LE(std::abs(c.b / 0.16 - 1.0), 0.2 + 1e-12);
      for (int deg = 0; deg <= 90; ++deg) {
        double p = p_los(c, deg);
        ASSERT_GE(p, 0.0);
        ASSERT_LE(p, 1.0);
      }
    }
  }
}

TEST(ProjectToGraph, PointOnEdgeIsFixed) {
  RoadGraph g = build_graph(square(1000));
  GraphProjection p = project_to_graph(g, {1000, 250});
  EXPECT_EQ(p.position.edge, 1u);
  EXPECT_DOUBLE_EQ(p.position.s, 250.0);
  EXPECT_EQ(p.distance, 0.0);
}

TEST(ProjectToGraph, TieGoesToLowestEdge) {
  RoadGraph g = build_graph(square(1000));
  // The centre is 500 m from all four edges.
  EXPECT_EQ(project_to_graph(g, {500, 500}).position.edge, 0u);
  // Equidistant from edges 1 (x = 1000) and 2 (y = 1000).
  EXPECT_EQ(project_to_graph(g, {900, 900}).position.edge, 1u);
}

TEST(ProjectToGraph, MatchesDenseSampling) {
  RoadGraph g = build_graph(square(1000));
  GraphProjection p = project_to_graph(g, {500, 10});
  EXPECT_EQ(p.position.edge, 0u);
  EXPECT_DOUBLE_EQ(p.position.s, 500.0);
  EXPECT_DOUBLE_EQ(p.point.x, 500.0);
  EXPECT_DOUBLE_EQ(p.point.y, 0.0);
  EXPECT_NEAR(p.distance, sampled_distance(g, {500, 10}), 1e-6);
}

TEST(ProjectToGraph, PropertyIdempotentAndMinimal) {
  ServiceArea area{3000, 3000};
  RoadGraph g = build_graph(manhattan_grid(area, 4, 15.0));
  Rng rng(7);
  for (int i = 0; i < 300; ++i) {
    Vec2 q{rng.uniform(-200, 3200), rng.uniform(-200, 3200)};
    GraphProjection p = project_to_graph(g, q);
    GraphProjection again = project_to_graph(g, p.point);
    EXPECT_LT(again.distance, 1e-9);
    EXPECT_LT(distance(again.point, p.point), 1e-9);
    for (std::size_t e = 0; e < g.edges().size(); ++e) {
      // No endpoint or midpoint of any edge is closer than the projection.
      for (double t : {0.0, 0.5, 1.0}) {
        Vec2 c = g.point_on(e, t * g.edge(e).length);
        ASSERT_GE(distance(q, c), p.distance - 1e-9);
      }
    }
  }
}

TEST(ProjectToGraph, AgreesWithSamplingOnRandomPoints) {
  GraphSpec spec;
  spec.nodes = {{0, 0}, {300, 40}, {120, 260}, {400, 300}};
  spec.edges = {{0, 1, 10}, {1, 2, 10}, {2, 0, 10}, {1, 3, 10}};
  RoadGraph g = build_graph(spec);
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    Vec2 q{rng.uniform(-50, 450), rng.uniform(-50, 350)};
    EXPECT_NEAR(project_to_graph(g, q).distance, sampled_distance(g, q), 1e-3);
  }
}
