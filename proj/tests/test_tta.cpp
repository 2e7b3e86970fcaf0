#include "offroad/tta.hpp"
#include "offroad/worldgen.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace offroad;

namespace {

// Regular terrain cloud over [0, n*step]^2 with heights z(x, y).
template <typename F>
PointCloud terrain_cloud(int n, double step, F z) {
  PointCloud c;
  c.voxel_size = step;
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i) c.points.emplace_back(i * step, j * step, z(i * step, j * step));
  return c;
}

Dem synthetic_dem(int nx, int ny, double cell) {
  Dem d;
  d.geometry.cell = cell;
  d.geometry.nx = nx;
  d.geometry.ny = ny;
  d.elevation = d.slope = d.roughness = Grid<double>(nx, ny, 0.0);
  d.tree_cells = Grid<std::uint8_t>(nx, ny, 0);
  return d;
}

CostMap random_map(std::uint64_t seed, int n = 12) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(0, 5);
  GridGeometry geo{Vec2(-1.0, 2.0), 0.5, n, n};
  Grid<double> cost(n, n);
  for (auto& v : cost.data()) v = u(g);
  return CostMap::from_cost_grid(geo, cost);
}

}  // namespace

TEST(PlaneFit, DegenerateSetsReportMaximumSlope) {
  const std::vector<Vec3> two = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  EXPECT_TRUE(fit_plane_features(two).degenerate);
  EXPECT_EQ(fit_plane_features(two).slope, kPi / 2);
  const std::vector<Vec3> line = {Vec3(0, 0, 0), Vec3(1, 1, 1), Vec3(2, 2, 2), Vec3(3, 3, 3)};
  EXPECT_TRUE(fit_plane_features(line).degenerate);
}

TEST(Dem, FlatTerrainHasZeroSlopeAndRoughness) {
  const Dem dem = rasterize_dem(terrain_cloud(40, 0.2, [](double, double) { return 1.5; }), {}, TtaConfig{});
  EXPECT_EQ(dem.geometry.nx, 41);
  EXPECT_EQ(dem.geometry.ny, 41);
  for (std::size_t c = 0; c < dem.slope.size(); ++c) {
    EXPECT_NEAR(dem.slope.data()[c], 0.0, 1e-9);
    EXPECT_NEAR(dem.roughness.data()[c], 0.0, 1e-9);
    EXPECT_NEAR(dem.elevation.data()[c], 1.5, 1e-12);
  }
}

TEST(Dem, TenDegreeRampIsRecoveredEverywhere) {
  const double t = std::tan(deg2rad(10));
  const Dem dem = rasterize_dem(terrain_cloud(40, 0.2, [&](double x, double y) { return t * (0.6 * x + 0.8 * y); }), {},
                                TtaConfig{});
  for (std::size_t c = 0; c < dem.slope.size(); ++c) {
    EXPECT_NEAR(dem.slope.data()[c], deg2rad(10), 1e-9);
    // sqrt of an eigenvalue at rounding level.
    EXPECT_NEAR(dem.roughness.data()[c], 0.0, 1e-7);
  }
}

TEST(Dem, UniformNoiseRoughnessIsItsStandardDeviation) {
  const double eps = 0.05;
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> u(-eps, eps);
  const PointCloud c = terrain_cloud(160, 0.05, [&](double, double) { return u(g); });
  const Dem dem = rasterize_dem(c, {}, TtaConfig{});
  double mean = 0;
  int n = 0;
  for (int j = 5; j < dem.geometry.ny - 5; ++j)
    for (int i = 5; i < dem.geometry.nx - 5; ++i, ++n) mean += dem.roughness(i, j);
  mean /= n;
  EXPECT_NEAR(mean, eps / std::sqrt(3.0), 0.05 * eps / std::sqrt(3.0));
}

TEST(Dem, EmptyCellsTakeNearestElevation) {
  PointCloud c;
  c.points = {Vec3(0, 0, 1), Vec3(1, 0, 2), Vec3(0, 1, 3), Vec3(1, 1, 4)};
  TtaConfig cfg;
  cfg.cell = 0.25;
  const Dem dem = rasterize_dem(c, {}, cfg);
  EXPECT_EQ(dem.elevation(1, 0), 1.0);
  EXPECT_EQ(dem.elevation(4, 3), 4.0);
}

TEST(Dem, ObstacleVoxelFootprintsAreMarked) {
  PointCloud obstacles;
  obstacles.voxel_size = 0.2;
  // Footprint [2.0, 2.2]^2 touches four nodes (edges inclusive); a voxel
  // centred on a node covers only that node.
  obstacles.points = {Vec3(2.1, 2.1, 0.1), Vec3(3.0, 1.0, 0.1)};
  const Dem dem = rasterize_dem(terrain_cloud(20, 0.2, [](double, double) { return 0.0; }), obstacles, TtaConfig{});
  int marked = 0;
  for (auto v : dem.tree_cells.data()) marked += v;
  EXPECT_EQ(marked, 5);
  EXPECT_TRUE(dem.tree_cells(10, 10) && dem.tree_cells(11, 11) && dem.tree_cells(10, 11) && dem.tree_cells(11, 10));
  EXPECT_TRUE(dem.tree_cells(15, 5));
  EXPECT_TRUE(obstacle_map(dem, TtaConfig{})(10, 10));
}

TEST(ObstacleMap, ThresholdsAreStrict) {
  TtaConfig cfg;
  Dem dem = synthetic_dem(3, 1, 0.2);
  dem.slope(0, 0) = cfg.slope_max;
  dem.slope(1, 0) = std::nextafter(cfg.slope_max, 1.0);
  dem.roughness(2, 0) = cfg.roughness_max;
  const auto v = obstacle_map(dem, cfg);
  EXPECT_EQ(v(0, 0), 0);
  EXPECT_EQ(v(1, 0), 1);
  EXPECT_EQ(v(2, 0), 0);
  dem.roughness(2, 0) = std::nextafter(cfg.roughness_max, 1.0);
  EXPECT_EQ(obstacle_map(dem, cfg)(2, 0), 1);
}

TEST(DistanceField, DilationAndDistancesOnASingleObstacle) {
  TtaConfig cfg;  // dilate 0.4 on a 0.2 grid: radius of two cells
  Grid<std::uint8_t> v(21, 21, 0);
  v(10, 10) = 1;
  const DistanceField f = distance_field(v, 0.2, cfg);
  for (int j = 0; j < 21; ++j)
    for (int i = 0; i < 21; ++i) {
      const int sq = (i - 10) * (i - 10) + (j - 10) * (j - 10);
      EXPECT_EQ(f.dilated(i, j), sq <= 4 ? 1 : 0);
      if (sq <= 4) { EXPECT_EQ(f.distance(i, j), 0.0); }
    }
  EXPECT_NEAR(f.distance(15, 10), 0.6, 1e-12);
  EXPECT_NEAR(f.distance(10, 3), 1.0, 1e-12);
  EXPECT_NEAR(f.distance(13, 13), 0.2 * 2 * std::sqrt(2.0), 1e-12);  // nearest dilated (11, 11)
}

TEST(DistanceField, DilatedSetIsExactlyTheRadiusNeighbourhood) {
  std::mt19937_64 g(8);
  std::bernoulli_distribution b(0.02);
  Grid<std::uint8_t> v(30, 25, 0);
  for (auto& c : v.data()) c = b(g);
  TtaConfig cfg;
  cfg.dilate_radius = 0.5;
  const DistanceField f = distance_field(v, 0.2, cfg);
  for (int j = 0; j < v.ny(); ++j)
    for (int i = 0; i < v.nx(); ++i) {
      double best = 1e9;
      for (int b2 = 0; b2 < v.ny(); ++b2)
        for (int a = 0; a < v.nx(); ++a)
          if (v(a, b2)) best = std::min(best, 0.2 * std::hypot(i - a, j - b2));
      EXPECT_EQ(f.dilated(i, j), best <= 0.5 + 1e-12 ? 1 : 0);
      if (v(i, j)) { EXPECT_TRUE(f.dilated(i, j)); }
      EXPECT_GE(f.distance(i, j), 0.0);
    }
}

TEST(DistanceField, NoObstaclesGivesTheFreeCap) {
  TtaConfig cfg;
  const DistanceField f = distance_field(Grid<std::uint8_t>(5, 5, 0), 0.2, cfg);
  for (double d : f.distance.data()) EXPECT_EQ(d, cfg.free_distance_cap());
}

TEST(SafetyCost, ReferenceValues) {
  TtaConfig cfg;
  EXPECT_DOUBLE_EQ(safety_cost(cfg.safety_margin, cfg), 1.0);
  EXPECT_NEAR(safety_cost(cfg.safety_margin + cfg.decay, cfg), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(safety_cost(0.0, cfg), std::exp(1.2), 1e-12);
}

TEST(CostMap, FlatOpenTerrainCostIsTheFreeSafetyTerm) {
  TtaConfig cfg;
  const CostMap m = build_cost_map(terrain_cloud(30, 0.2, [](double, double) { return 0.0; }), {}, cfg);
  const double expected = cfg.w_safety * std::exp((cfg.safety_margin - cfg.free_distance_cap()) / cfg.decay);
  EXPECT_NEAR(m.sample(Vec2(3.0, 3.0)).value, expected, 1e-12);
  EXPECT_LT(m.sample(Vec2(2.1, 4.3)).gradient.norm(), 1e-12);
}

TEST(CostMap, BicubicReproducesNodes) {
  const CostMap m = random_map(1);
  const auto& g = m.geometry();
  for (int j = 1; j <= g.ny - 2; ++j)
    for (int i = 1; i <= g.nx - 2; ++i) EXPECT_NEAR(m.sample(g.node(i, j)).value, m.cost()(i, j), 1e-9);
}

TEST(CostMap, BicubicIsC1AcrossCellEdges) {
  const CostMap m = random_map(2);
  const int n = m.geometry().nx;
  for (int i = 1; i < n - 3; ++i)
    for (int j = 1; j <= n - 3; ++j)
      for (double s : {0.0, 0.3, 0.77, 1.0}) {
        const CostSample a = m.eval_patch(i, j, 1.0, s), b = m.eval_patch(i + 1, j, 0.0, s);
        EXPECT_NEAR(a.value, b.value, 1e-9);
        EXPECT_LT((a.gradient - b.gradient).norm(), 1e-9);
        const CostSample c = m.eval_patch(j, i, s, 1.0), d = m.eval_patch(j, i + 1, s, 0.0);
        EXPECT_NEAR(c.value, d.value, 1e-9);
        EXPECT_LT((c.gradient - d.gradient).norm(), 1e-9);
      }
}

TEST(CostMap, GradientMatchesFiniteDifferences) {
  const CostMap m = random_map(3);
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> ux(m.margin_lo().x() + 0.01, m.margin_hi().x() - 0.01);
  std::uniform_real_distribution<double> uy(m.margin_lo().y() + 0.01, m.margin_hi().y() - 0.01);
  const double h = 1e-6;
  for (int n = 0; n < 100; ++n) {
    const Vec2 p(ux(g), uy(g));
    const Vec2 fd((m.sample(p + Vec2(h, 0)).value - m.sample(p - Vec2(h, 0)).value) / (2 * h),
                  (m.sample(p + Vec2(0, h)).value - m.sample(p - Vec2(0, h)).value) / (2 * h));
    EXPECT_LT((fd - m.sample(p).gradient).norm(), 1e-5 * (1 + fd.norm()));
  }
}

TEST(CostMap, QueriesOutsideTheMarginThrow) {
  const CostMap m = random_map(4);
  EXPECT_NO_THROW(m.sample(m.margin_lo()));
  EXPECT_NO_THROW(m.sample(m.margin_hi()));
  EXPECT_THROW(m.sample(m.margin_lo() - Vec2(1e-9, 0)), DomainError);
  EXPECT_THROW(m.sample(m.margin_hi() + Vec2(0, 1e-9)), DomainError);
  EXPECT_EQ(m.clamp_to_margin(Vec2(-100, 100)), Vec2(m.margin_lo().x(), m.margin_hi().y()));
}

TEST(CostMap, WorldPipelineIsNonNegativeAndRoundTrips) {
  TerrainParams p;
  p.seed = 6;
  const World w = generate_world(p, 20, 20);
  const PointCloud terrain = voxelize_terrain_2d(w, voxelizer_config_for(w, 0.2, VoxelMode::Terrain2D));
  const PointCloud obstacles = voxelize_obstacles_3d(w, voxelizer_config_for(w, 0.2, VoxelMode::Obstacle3D));
  TtaConfig cfg;
  const CostMap m = build_cost_map(terrain, obstacles, cfg);
  for (double c : m.cost().data()) EXPECT_GE(c, 0.0);
  int obstacles_marked = 0;
  for (auto v : m.obstacle().data()) obstacles_marked += v;
  EXPECT_GT(obstacles_marked, 0);

  const auto dir = std::filesystem::temp_directory_path() / "offroad_costmap";
  save_cost_map(m, cfg, dir);
  const CostMap back = load_cost_map(dir);
  EXPECT_EQ(back.geometry(), m.geometry());
  for (std::size_t c = 0; c < m.cost().size(); ++c) {
    EXPECT_EQ(back.cost().data()[c], static_cast<double>(static_cast<float>(m.cost().data()[c])));
    if (m.obstacle().data()[c]) { EXPECT_TRUE(back.obstacle().data()[c]); }
  }
  std::filesystem::remove_all(dir);
}

TEST(TtaConfig, JsonRoundTripAndValidation) {
  TtaConfig c;
  c.slope_max = deg2rad(25);
  const TtaConfig back = tta_from_json(to_json(c));
  EXPECT_NEAR(back.slope_max, c.slope_max, 1e-15);
  EXPECT_THROW(tta_from_json(Json{{"decay", 0.0}}), ConfigError);
}
