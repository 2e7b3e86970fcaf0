#include "offroad/trajopt.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace offroad;

namespace {

// Cost map over [-20, 20]^2 whose value at node (x, y) is f(x, y).
template <typename F>
CostMap map_from(F f, double cell = 0.25, double half = 20.0) {
  const int n = static_cast<int>(std::lround(2 * half / cell)) + 1;
  GridGeometry g{Vec2(-half, -half), cell, n, n};
  Grid<double> c(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) c(i, j) = f(g.node(i, j).x(), g.node(i, j).y());
  return CostMap::from_cost_grid(g, c);
}

CostMap zero_map() {
  return map_from([](double, double) { return 0.0; });
}

CostMap bumpy_map(std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  const double a = u(g), b = u(g), c = u(g);
  return map_from([=](double x, double y) {
    return 2.0 + std::sin(0.7 * x + a) * std::cos(0.5 * y + b) + 0.5 * std::sin(0.3 * (x + y) + c);
  });
}

ObjectiveContext context(const CostMap& m, Vec2 goal, Vec2 v_s = Vec2::Zero(), double t_e = 6.0) {
  ObjectiveContext c;
  c.map = &m;
  c.goal = goal;
  c.v_s = v_s;
  c.t_e = t_e;
  return c;
}

const PrimitiveLattice kLattice = build_lattice(5, deg2rad(80), 6.0);

}  // namespace

TEST(Objective, ConstantMapAtRest) {
  const CostMap m = map_from([](double, double) { return 3.0; });
  ObjectiveContext c = context(m, Vec2(1, 1), Vec2::Zero(), 4.0);
  c.p_s = Vec2(1, 1);
  const ObjectiveValue v = objective(Vec2(1, 1), Vec2::Zero(), c);
  EXPECT_NEAR(v.value, 3.0 * 21 * 0.2, 1e-12);
}

TEST(Objective, StraightConstantVelocityLine) {
  const CostMap m = zero_map();
  const ObjectiveContext c = context(m, Vec2(2, 0), Vec2(1, 0), 2.0);
  // Independent oracle: the Hermite curve is the constant-velocity line, so
  // each of the N_t + 1 samples contributes |v|^2 dT = 0.1.
  const HermiteTrajectory t{Vec2(0, 0), Vec2(1, 0), Vec2(1, 0), Vec2(2, 0), 2.0};
  double sum = 0;
  for (int n = 0; n <= 20; ++n) {
    const auto s = eval(t, n * 0.1);
    EXPECT_NEAR((s.velocity - Vec2(1, 0)).norm(), 0.0, 1e-12);
    sum += s.velocity.squaredNorm() * 0.1;
  }
  EXPECT_NEAR(objective(Vec2(2, 0), Vec2(1, 0), c).value, sum, 1e-12);
  EXPECT_NEAR(sum, 2.1, 1e-12);
}

TEST(Objective, GradientMatchesCentralDifferences) {
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> u(-1, 1), pe(2, 6);
  for (int n = 0; n < 100; ++n) {
    const CostMap& m = bumpy_map(n % 4 == 0 ? 1 : 2);
    ObjectiveContext c = context(m, Vec2(u(g) * 5, u(g) * 5), Vec2(u(g), u(g)), 2.0 + 4.0 * (u(g) + 1) / 2);
    const Vec2 p(pe(g), u(g) * 3), v(u(g), u(g));
    const ObjectiveValue f = objective(p, v, c);
    Vec4 fd;
    const double h = 1e-6;
    for (int k = 0; k < 4; ++k) {
      Vec4 d = Vec4::Zero();
      d(k) = h;
      const double plus = objective(p + d.head<2>(), v + d.tail<2>(), c).value;
      const double minus = objective(p - d.head<2>(), v - d.tail<2>(), c).value;
      fd(k) = (plus - minus) / (2 * h);
    }
    EXPECT_LE((fd - f.gradient).norm(), 1e-4 * std::max(1.0, fd.norm()));
  }
}

TEST(Objective, StrictPolicyThrowsWithTheOffendingTime) {
  const CostMap m = zero_map();
  ObjectiveContext c = context(m, Vec2(30, 0), Vec2::Zero(), 2.0);
  try {
    objective(Vec2(30, 0), Vec2::Zero(), c);
    FAIL() << "expected an infeasibility error";
  } catch (const InfeasibleError& e) {
    EXPECT_GT(e.time, 0.0);
  }
  c.policy = MarginPolicy::Clamp;
  EXPECT_TRUE(std::isfinite(objective(Vec2(30, 0), Vec2::Zero(), c).value));
}

TEST(Cone, ResidualExamples) {
  const ConeRegion cone = make_cone(Vec2(1, 2), deg2rad(10), deg2rad(40), 8.0);
  const ConeResiduals mid = cone_violation(cone.apex, cone.apex + 4.0 * cone.axis, cone);
  EXPECT_LT(mid.max(), 0.0);
  EXPECT_GT(cone_violation(cone.apex, cone.apex - cone.axis, cone).g1, 0.0);
  const Vec2 edge = cone.apex + 4.0 * unit(cone.theta_max);
  EXPECT_NEAR(cone_violation(cone.apex, edge, cone).g3, 0.0, 1e-12);
  EXPECT_GT(cone_violation(cone.apex, cone.apex + 9.0 * cone.axis, cone).g2, 0.0);
  EXPECT_THROW(make_cone(Vec2::Zero(), 0.0, kPi, 1.0), DomainError);
}

TEST(Cone, ProjectionLandsInsideAndFixesInteriorPoints) {
  const ConeRegion cone = make_cone(Vec2::Zero(), deg2rad(-8), deg2rad(8), 8.0);
  std::mt19937_64 g(2);
  std::uniform_real_distribution<double> u(-12, 12);
  for (int n = 0; n < 2000; ++n) {
    const Vec2 p(u(g), u(g));
    const Vec2 q = project_to_cone(p, cone);
    const ConeResiduals r = cone_violation(cone.apex, q, cone);
    EXPECT_LT(r.g1, 0.0);
    EXPECT_LT(r.g2, 0.0);
    EXPECT_LE(r.g3, 1e-9);
    if (r.max() < -1e-6 && cone_violation(cone.apex, p, cone).max() < -1e-6) {
      EXPECT_EQ(project_to_cone(p, cone), p);
    }
  }
}

TEST(OptimizeAnchor, GoalInsideTheConeMatchesTheUnconstrainedQuadratic) {
  // On a zero map J is a quadratic in (p_e, v_e); when its stationary point
  // lies inside the feasible set it is the solution. The Hessian comes from
  // gradient differences, which are exact for a quadratic up to rounding.
  const CostMap m = zero_map();
  const ConeRegion cone = make_cone(Vec2::Zero(), deg2rad(-8), deg2rad(8), 8.0);
  const ObjectiveContext c = context(m, Vec2(5, 0.3), Vec2(0.8, 0.0));
  const Vec4 g0 = objective(Vec2::Zero(), Vec2::Zero(), c).gradient;
  Eigen::Matrix4d h;
  for (int k = 0; k < 4; ++k) {
    const Vec4 e = Vec4::Unit(k);
    h.col(k) = objective(e.head<2>(), e.tail<2>(), c).gradient - g0;
  }
  const Vec4 x = h.ldlt().solve(-g0);
  ASSERT_LT(cone_violation(cone.apex, x.head<2>(), cone).max(), 0.0);
  ASSERT_LT(x.tail<2>().norm(), 2.0);

  TrajoptConfig cfg;
  cfg.kkt_tolerance = 1e-8;
  const AnchorSolution s = optimize_anchor(c, cone, 2.0, Vec2(6, 0), Vec2(0.8, 0), cfg);
  ASSERT_TRUE(s.feasible);
  EXPECT_LT((s.p_e - x.head<2>()).norm(), 1e-3);
  EXPECT_LT((s.v_e - x.tail<2>()).norm(), 1e-3);
  // The velocity term keeps p_e short of the goal; the grid oracle agrees.
  const auto o = oracle::grid_search(c, cone, 2.0, 100);
  EXPECT_LE(s.cost, o.value + 1e-9);
  EXPECT_LT((s.p_e - o.p_e).norm(), 0.1);
}

TEST(OptimizeAnchor, GoalOutsideTheConeEndsOnTheBoundaryNearestIt) {
  const CostMap m = zero_map();
  const ConeRegion cone = make_cone(Vec2::Zero(), deg2rad(8), deg2rad(24), 8.0);
  const ObjectiveContext c = context(m, Vec2(6, 0));
  const AnchorSolution s = optimize_anchor(c, cone, 2.0, 6.0 * unit(deg2rad(16)), Vec2::Zero());
  ASSERT_TRUE(s.feasible);
  EXPECT_NEAR(cone_violation(cone.apex, s.p_e, cone).g3, 0.0, 1e-6);
  const auto o = oracle::grid_search(c, cone, 2.0, 200);
  EXPECT_LT((s.p_e - o.p_e).norm(), 1e-2 + 8.0 / 200);
  EXPECT_LE(s.cost, o.value * 1.02);
}

TEST(OptimizeAnchor, OutputsSatisfyConeAndSpeedBounds) {
  std::mt19937_64 g(9);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int n = 0; n < 40; ++n) {
    const CostMap& m = bumpy_map(static_cast<std::uint64_t>(n % 3));
    const double c0 = u(g) * 0.6;
    const ConeRegion cone = make_cone(Vec2(u(g), u(g)), c0 - 0.14, c0 + 0.14, 8.0);
    const ObjectiveContext c = context(m, Vec2(8 * u(g), 8 * u(g)), Vec2(u(g), u(g)), 3.0 + 3.0 * (u(g) + 1));
    const AnchorSolution s = optimize_anchor(c, cone, 2.0, cone.apex + 6.0 * cone.axis, Vec2::Zero());
    ASSERT_TRUE(s.feasible);
    EXPECT_LE(cone_violation(cone.apex, s.p_e, cone).max(), 1e-6);
    EXPECT_LE(s.v_e.norm(), 2.0 + 1e-6);
    for (std::size_t k = 1; k < s.history.size(); ++k) EXPECT_LE(s.history[k], s.history[k - 1]);
  }
}

TEST(OptimizeAnchor, WallRaisesTheBlockedAnchorsCost) {
  // Mirror-symmetric outer anchors; a high-cost wall crosses only the left
  // cone.
  const auto lat = build_lattice(3, deg2rad(80), 6.0);
  const CostMap open = zero_map();
  const CostMap walled = map_from([](double x, double y) { return (x > 2 && x < 7 && y > 0.8 && y < 6) ? 30.0 : 0.0; });
  const PlanRequest req{{0, 0, 0}, Vec2::Zero(), Vec2(8, 0), 6.0};
  const LatticePlan a = plan_lattice(req, open, lat, {}, {});
  const LatticePlan b = plan_lattice(req, walled, lat, {}, {});
  ASSERT_TRUE(b.anchors[0].feasible && b.anchors[2].feasible);
  EXPECT_NEAR(a.anchors[0].raw_cost, a.anchors[2].raw_cost, 1e-6);
  EXPECT_GT(b.anchors[2].raw_cost, b.anchors[0].raw_cost + 1.0);
  EXPECT_NEAR(b.anchors[0].raw_cost, a.anchors[0].raw_cost, 1e-6);
}

TEST(PlanLattice, GoalStraightAheadSelectsTheCenterAnchor) {
  const CostMap m = zero_map();
  const LatticePlan p = plan_lattice({{0, 0, 0}, Vec2::Zero(), Vec2(7, 0), 6.0}, m, kLattice, {}, {});
  EXPECT_EQ(p.best, 2);
  EXPECT_EQ(kLattice.angles[2], 0.0);
  // Per-anchor oracle agrees on the ordering.
  double best = std::numeric_limits<double>::infinity();
  int arg = -1;
  for (int i = 0; i < 5; ++i) {
    ObjectiveContext c = context(m, Vec2(7, 0));
    const double v = oracle::grid_search(c, anchor_cone(kLattice, i, Pose2{}, 8.0), 2.0, 60).value;
    if (v < best) {
      best = v;
      arg = i;
    }
  }
  EXPECT_EQ(arg, 2);
}

TEST(PlanLattice, GoalThirtyDegreesLeftSelectsItsCone) {
  const CostMap m = zero_map();
  const Pose2 pose{1.0, -2.0, 0.3};
  const Vec2 goal = pose.to_world(6.0 * unit(deg2rad(30)));
  const LatticePlan p = plan_lattice({pose, Vec2::Zero(), goal, 6.0}, m, kLattice, {}, {});
  EXPECT_EQ(p.best, kLattice.cell_of_bearing(deg2rad(30)));
  EXPECT_EQ(p.best, 4);
  EXPECT_EQ(p.trajectory.p_s, pose.position());
  EXPECT_LT((p.trajectory.p_e - pose.to_world(p.anchors[4].p_e_body)).norm(), 1e-12);
}

TEST(PlanLattice, MirroringTheWorldMirrorsThePlan) {
  auto f = [](double x, double y) { return 1.0 + std::sin(0.8 * x) * std::cos(0.6 * y) + 0.3 * std::cos(1.3 * y); };
  const CostMap m = map_from(f);
  const CostMap mirrored = map_from([&](double x, double y) { return f(x, -y); });
  TrajoptConfig cfg;
  cfg.kkt_tolerance = 1e-9;
  cfg.max_iterations = 2000;
  const LatticePlan a = plan_lattice({{0, 0, 0}, Vec2(0.5, 0.2), Vec2(6, 2.5), 6.0}, m, kLattice, cfg, {});
  const LatticePlan b = plan_lattice({{0, 0, 0}, Vec2(0.5, -0.2), Vec2(6, -2.5), 6.0}, mirrored, kLattice, cfg, {});
  EXPECT_EQ(b.best, 4 - a.best);
  for (int i = 0; i < 5; ++i) {
    const AnchorPlan &x = a.anchors[static_cast<std::size_t>(i)], &y = b.anchors[static_cast<std::size_t>(4 - i)];
    EXPECT_NEAR(x.p_e_body.x(), y.p_e_body.x(), 1e-6);
    EXPECT_NEAR(x.p_e_body.y(), -y.p_e_body.y(), 1e-6);
    EXPECT_NEAR(x.v_e_body.y(), -y.v_e_body.y(), 1e-6);
  }
}

TEST(PlanLattice, AllAnchorsInfeasibleIsAPlannerError) {
  const CostMap m = map_from([](double, double) { return 0.0; }, 0.25, 3.0);
  EXPECT_THROW(plan_lattice({{0, 0, 0}, Vec2::Zero(), Vec2(6, 0), 6.0}, m, kLattice, {}, {}), PlannerError);
}

TEST(PlanLattice, ArgminIsScaleInvariant) {
  const CostMap m = bumpy_map(4);
  const LatticePlan p = plan_lattice({{0, 0, 0.4}, Vec2(1, 0), Vec2(5, 5), 6.0}, m, kLattice, {}, {});
  for (double k : {1e-3, 0.5, 7.0, 1e4}) {
    auto scaled = p.anchors;
    for (auto& a : scaled) a.raw_cost *= k;
    EXPECT_EQ(select_best(scaled), p.best);
  }
}

TEST(Labels, AnchorPointAndInfeasibleAnchors) {
  NormalizationConfig norm;
  LatticePlan p;
  p.anchors.resize(5);
  for (int i = 0; i < 5; ++i) {
    AnchorPlan& a = p.anchors[static_cast<std::size_t>(i)];
    a.index = i;
    a.feasible = i != 3;
    a.p_e_body = kLattice.anchor(i);
    a.v_e_body = Vec2(1, 0);
    a.raw_cost = 2.0 + i;
  }
  const auto labels = make_labels(p, kLattice, norm);
  EXPECT_NEAR(labels[0].y[0], 6.0 / 8.0, 1e-12);
  EXPECT_NEAR(labels[0].y[1], 0.0, 1e-12);
  EXPECT_NEAR(labels[0].y[2], 0.5, 1e-12);
  EXPECT_NEAR(labels[0].y[4], 2.0 / 20.0, 1e-12);
  EXPECT_EQ(labels[3].y[0], 0.0);
  EXPECT_EQ(labels[3].y[4], 1.0);
}

TEST(Labels, BestAnchorHasTheLowestLabelCost) {
  const CostMap m = bumpy_map(5);
  const LatticePlan p = plan_lattice({{0, 0, 0}, Vec2(0.5, 0), Vec2(4, -3), 6.0}, m, kLattice, {}, {});
  const auto labels = make_labels(p, kLattice, {});
  for (const auto& l : labels) EXPECT_GE(l.y[4], labels[static_cast<std::size_t>(p.best)].y[4]);
  for (const AnchorPlan& a : p.anchors)
    if (a.feasible) { EXPECT_LT((decode_end_state(kLattice, a.index, a.offset) - a.p_e_body).norm(), 1e-9); }
}

TEST(PlanJson, RoundTripAndPredictionsWithoutRawCost) {
  const CostMap m = bumpy_map(6);
  const LatticePlan p = plan_lattice({{1, 1, 0.2}, Vec2(0.3, 0), Vec2(6, 3), 6.0}, m, kLattice, {}, {});
  const LatticePlan back = plan_from_json(Json::parse(to_json(p).dump()), kLattice);
  EXPECT_EQ(back.best, p.best);
  for (int i = 0; i < 5; ++i) {
    EXPECT_NEAR(back.anchors[static_cast<std::size_t>(i)].offset.c, p.anchors[static_cast<std::size_t>(i)].offset.c, 1e-12);
    EXPECT_LT((back.anchors[static_cast<std::size_t>(i)].p_e_body - p.anchors[static_cast<std::size_t>(i)].p_e_body).norm(),
              1e-12);
  }

  Json pred{{"pose", {{"x", 0}, {"y", 0}, {"yaw", 0}}}, {"anchors", Json::array()}};
  for (int i = 0; i < 5; ++i)
    pred["anchors"].push_back({{"index", i}, {"p_n", 6.0}, {"p_theta", 0.0}, {"v_e", {1.0, 0.0}}, {"cost", 5.0 - i}});
  const LatticePlan q = plan_from_json(pred, kLattice);
  EXPECT_EQ(q.best, 4);
  EXPECT_FALSE(std::isfinite(q.anchors[0].raw_cost));
  EXPECT_LT((q.anchors[1].p_e_body - kLattice.anchor(1)).norm(), 1e-12);
  const HermiteTrajectory t = trajectory_from_prediction(q, kLattice, Pose2{}, Vec2::Zero(), 3.0);
  EXPECT_LT((t.p_e - kLattice.anchor(4)).norm(), 1e-12);

  Json bad = pred;
  bad["anchors"][2].erase("p_n");
  EXPECT_THROW(plan_from_json(bad, kLattice), IoError);
  bad = pred;
  bad["anchors"].erase(0);
  EXPECT_THROW(plan_from_json(bad, kLattice), IoError);
  bad = pred;
  bad["anchors"][1]["index"] = 0;
  EXPECT_THROW(plan_from_json(bad, kLattice), IoError);
}

TEST(TrajoptConfig, JsonRoundTrip) {
  TrajoptConfig c;
  c.n_t = 30;
  EXPECT_EQ(trajopt_from_json(to_json(c)).n_t, 30);
  EXPECT_THROW(trajopt_from_json(Json{{"n_t", 2}}), ConfigError);
}
