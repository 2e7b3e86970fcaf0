#pragma once

// Terrain traversability analysis: point clouds -> DEM (elevation, slope,
// roughness) -> obstacle map -> dilation + distance field -> safety cost ->
// weighted cost map with a C1 bicubic continuous view.

#include "offroad/binary_io.hpp"
#include "offroad/common.hpp"
#include "offroad/edt.hpp"
#include "offroad/grid.hpp"
#include "offroad/json_util.hpp"
#include "offroad/parallel.hpp"
#include "offroad/voxelizer.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

namespace offroad {

struct TtaConfig {
  double cell = 0.2;
  double slope_max = deg2rad(20.0);
  double roughness_max = 0.1;
  double dilate_radius = 0.4;
  double safety_margin = 0.6;  // d_0
  double decay = 0.5;          // k
  double w_roughness = 1.0;
  double w_slope = 1.0;
  double w_safety = 2.0;
  double feature_radius = 0.6;
  int workers = 0;

  void validate() const {
    if (!(cell > 0 && slope_max > 0 && roughness_max > 0 && dilate_radius > 0 && safety_margin > 0 && decay > 0 &&
          w_roughness > 0 && w_slope > 0 && w_safety > 0 && feature_radius > 0))
      throw ConfigError("traversability thresholds, radii and weights must be strictly positive");
  }

  // Distance reported everywhere when the map has no obstacle at all.
  double free_distance_cap() const { return 10.0 * safety_margin; }
};

inline Json to_json(const TtaConfig& c) {
  return Json{{"cell", c.cell},
              {"slope_max_deg", rad2deg(c.slope_max)},
              {"roughness_max", c.roughness_max},
              {"dilate_radius", c.dilate_radius},
              {"safety_margin", c.safety_margin},
              {"decay", c.decay},
              {"w_roughness", c.w_roughness},
              {"w_slope", c.w_slope},
              {"w_safety", c.w_safety},
              {"feature_radius", c.feature_radius}};
}

inline TtaConfig tta_from_json(const Json& j) {
  TtaConfig c;
  read_optional(j, "cell", c.cell);
  if (j.is_object() && j.contains("slope_max_deg")) c.slope_max = deg2rad(j.at("slope_max_deg").get<double>());
  read_optional(j, "roughness_max", c.roughness_max);
  read_optional(j, "dilate_radius", c.dilate_radius);
  read_optional(j, "safety_margin", c.safety_margin);
  read_optional(j, "decay", c.decay);
  read_optional(j, "w_roughness", c.w_roughness);
  read_optional(j, "w_slope", c.w_slope);
  read_optional(j, "w_safety", c.w_safety);
  read_optional(j, "feature_radius", c.feature_radius);
  read_optional(j, "workers", c.workers);
  c.validate();
  return c;
}

/// Rasterized terrain. `tree_cells` marks cells covered by the footprint of
/// an obstacle voxel.
struct Dem {
  GridGeometry geometry;
  Grid<double> elevation;
  Grid<double> slope;      // rad, [0, pi/2]
  Grid<double> roughness;  // m
  Grid<std::uint8_t> tree_cells;
};

struct PlaneFeatures {
  double slope = kPi / 2;
  double roughness = 0.0;
  bool degenerate = true;
};

/// Total least-squares plane through the points: slope is the angle between
/// its normal and vertical, roughness the standard deviation of the
/// orthogonal point-to-plane distances. Fewer than 3 points or a collinear
/// set is degenerate and reported with the maximum slope.
inline PlaneFeatures fit_plane_features(std::span<const Vec3> pts) {
  PlaneFeatures out;
  if (pts.size() < 3) return out;
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const Vec3& p : pts) {
    const Vec3 d = p - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(pts.size());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Vec3 ev = eig.eigenvalues();
  const double scale = std::max(ev(2), 1e-300);
  if (ev(1) <= 1e-12 * scale || ev(2) <= 0.0) return out;
  const Vec3 n = eig.eigenvectors().col(0);
  out.slope = std::atan2(std::hypot(n.x(), n.y()), std::abs(n.z()));
  out.roughness = std::sqrt(std::max(ev(0), 0.0));
  out.degenerate = false;
  return out;
}

/// Rasterizes the terrain cloud onto a node-centred grid spanning its
/// bounding box. Elevation is the mean point height per cell (empty cells take
/// their nearest filled neighbour); slope and roughness come from plane fits
/// over all points within the feature radius of the node.
inline Dem rasterize_dem(const PointCloud& terrain, const PointCloud& obstacles, const TtaConfig& cfg) {
  cfg.validate();
  if (terrain.empty()) throw DomainError("terrain point cloud is empty");
  Vec2 lo(std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity());
  Vec2 hi = -lo;
  for (const Vec3& p : terrain.points) {
    lo = lo.cwiseMin(p.head<2>());
    hi = hi.cwiseMax(p.head<2>());
  }
  Dem dem;
  GridGeometry& g = dem.geometry;
  g.origin = lo;
  g.cell = cfg.cell;
  g.nx = static_cast<int>(std::floor((hi.x() - lo.x()) / cfg.cell + 0.5)) + 1;
  g.ny = static_cast<int>(std::floor((hi.y() - lo.y()) / cfg.cell + 0.5)) + 1;

  // Bucket points by nearest node.
  Grid<std::vector<std::uint32_t>> buckets(g.nx, g.ny);
  for (std::size_t k = 0; k < terrain.size(); ++k) {
    const Vec3& p = terrain.points[k];
    const int i = std::clamp(g.nearest_i(p.x()), 0, g.nx - 1);
    const int j = std::clamp(g.nearest_j(p.y()), 0, g.ny - 1);
    buckets(i, j).push_back(static_cast<std::uint32_t>(k));
  }

  dem.elevation = Grid<double>(g.nx, g.ny, 0.0);
  Grid<std::uint8_t> filled(g.nx, g.ny, 0);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const auto& b = buckets(i, j);
      if (b.empty()) continue;
      double s = 0;
      for (auto k : b) s += terrain.points[k].z();
      dem.elevation(i, j) = s / static_cast<double>(b.size());
      filled(i, j) = 1;
    }
  Grid<std::int64_t> nearest;
  (void)squared_edt(filled, &nearest);
  for (std::size_t c = 0; c < filled.size(); ++c)
    if (!filled.data()[c]) dem.elevation.data()[c] = dem.elevation.data()[static_cast<std::size_t>(nearest.data()[c])];

  dem.slope = Grid<double>(g.nx, g.ny, 0.0);
  dem.roughness = Grid<double>(g.nx, g.ny, 0.0);
  const int reach = static_cast<int>(std::ceil(cfg.feature_radius / cfg.cell)) + 1;
  const double r2 = cfg.feature_radius * cfg.feature_radius;
  parallel_chunks(static_cast<std::size_t>(g.ny), resolve_workers(cfg.workers), [&](unsigned, std::size_t jb, std::size_t je) {
    std::vector<Vec3> local;
    for (int j = static_cast<int>(jb); j < static_cast<int>(je); ++j)
      for (int i = 0; i < g.nx; ++i) {
        const Vec2 c = g.node(i, j);
        local.clear();
        for (int bj = std::max(0, j - reach); bj <= std::min(g.ny - 1, j + reach); ++bj)
          for (int bi = std::max(0, i - reach); bi <= std::min(g.nx - 1, i + reach); ++bi)
            for (auto k : buckets(bi, bj)) {
              const Vec3& p = terrain.points[k];
              if ((p.head<2>() - c).squaredNorm() <= r2) local.push_back(p);
            }
        const PlaneFeatures f = fit_plane_features(local);
        dem.slope(i, j) = f.slope;
        dem.roughness(i, j) = f.roughness;
      }
  });

  // Obstacle voxels mark every node inside their square footprint.
  dem.tree_cells = Grid<std::uint8_t>(g.nx, g.ny, 0);
  const double half = 0.5 * (obstacles.voxel_size > 0 ? obstacles.voxel_size : cfg.cell);
  for (const Vec3& p : obstacles.points) {
    const int i0 = std::max(0, static_cast<int>(std::ceil((p.x() - half - g.origin.x()) / g.cell - 1e-9)));
    const int i1 = std::min(g.nx - 1, static_cast<int>(std::floor((p.x() + half - g.origin.x()) / g.cell + 1e-9)));
    const int j0 = std::max(0, static_cast<int>(std::ceil((p.y() - half - g.origin.y()) / g.cell - 1e-9)));
    const int j1 = std::min(g.ny - 1, static_cast<int>(std::floor((p.y() + half - g.origin.y()) / g.cell + 1e-9)));
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i) dem.tree_cells(i, j) = 1;
  }
  return dem;
}

/// V_c = 1 where slope > slope_max or roughness > roughness_max (strict), or
/// where an obstacle voxel projects.
inline Grid<std::uint8_t> obstacle_map(const Dem& dem, const TtaConfig& cfg) {
  cfg.validate();
  Grid<std::uint8_t> v(dem.geometry.nx, dem.geometry.ny, 0);
  for (std::size_t c = 0; c < v.size(); ++c) {
    const bool geometric = dem.slope.data()[c] > cfg.slope_max || dem.roughness.data()[c] > cfg.roughness_max;
    const bool tree = !dem.tree_cells.empty() && dem.tree_cells.data()[c] != 0;
    v.data()[c] = (geometric || tree) ? 1 : 0;
  }
  return v;
}

struct DistanceField {
  Grid<std::uint8_t> dilated;
  Grid<double> distance;  // m, D_t
};

/// Dilates V_c by a disk of radius dilate_radius (cell-centre distances) and
/// returns the exact Euclidean distance from each cell centre to the nearest
/// dilated cell centre. Without any obstacle the distance is the free cap.
inline DistanceField distance_field(const Grid<std::uint8_t>& obstacles, double cell, const TtaConfig& cfg) {
  cfg.validate();
  if (obstacles.empty()) throw DomainError("obstacle grid is empty");
  DistanceField out;
  out.dilated = Grid<std::uint8_t>(obstacles.nx(), obstacles.ny(), 0);
  out.distance = Grid<double>(obstacles.nx(), obstacles.ny(), cfg.free_distance_cap());
  const auto to_obstacle = squared_edt(obstacles);
  bool any = false;
  for (std::size_t c = 0; c < obstacles.size(); ++c) {
    const std::int64_t sq = to_obstacle.data()[c];
    if (sq != kNoSite && std::sqrt(static_cast<double>(sq)) * cell <= cfg.dilate_radius * (1.0 + 1e-12)) {
      out.dilated.data()[c] = 1;
      any = true;
    }
  }
  if (!any) return out;
  const auto to_dilated = squared_edt(out.dilated);
  for (std::size_t c = 0; c < obstacles.size(); ++c)
    out.distance.data()[c] = std::sqrt(static_cast<double>(to_dilated.data()[c])) * cell;
  return out;
}

inline double safety_cost(double distance, const TtaConfig& cfg) {
  return std::exp((cfg.safety_margin - distance) / cfg.decay);
}

struct CostSample {
  double value = 0.0;
  Vec2 gradient = Vec2::Zero();  // per metre
};

/// Combined traversability cost grid with a Catmull-Rom bicubic view that
/// reproduces node values and is C1 across cells. The continuous view is
/// defined on [origin + cell, origin + (n - 2) cell] along each axis.
class CostMap {
 public:
  CostMap() = default;

  /// Map from a bare cost grid (all other layers zero); for synthetic maps
  /// and for maps loaded from disk.
  static CostMap from_cost_grid(const GridGeometry& geometry, Grid<double> cost) {
    CostMap m;
    m.geometry_ = geometry;
    m.cost_ = std::move(cost);
    m.elevation_ = m.slope_ = m.roughness_ = m.distance_ = m.safety_ = Grid<double>(geometry.nx, geometry.ny, 0.0);
    m.obstacle_ = Grid<std::uint8_t>(geometry.nx, geometry.ny, 0);
    m.build_patches();
    return m;
  }

  /// Map from stored layers (as read back from disk); the obstacle layer is
  /// recovered as the cells at zero distance.
  static CostMap from_stored(const GridGeometry& geometry, Grid<double> elevation, Grid<double> slope,
                             Grid<double> roughness, Grid<double> distance, Grid<double> cost) {
    CostMap m = from_cost_grid(geometry, std::move(cost));
    m.elevation_ = std::move(elevation);
    m.slope_ = std::move(slope);
    m.roughness_ = std::move(roughness);
    m.distance_ = std::move(distance);
    for (std::size_t c = 0; c < m.distance_.size(); ++c) m.obstacle_.data()[c] = m.distance_.data()[c] == 0.0 ? 1 : 0;
    return m;
  }

  static CostMap from_layers(const Dem& dem, const Grid<std::uint8_t>& obstacle, const DistanceField& field,
                             const TtaConfig& cfg) {
    CostMap m;
    m.geometry_ = dem.geometry;
    m.elevation_ = dem.elevation;
    m.slope_ = dem.slope;
    m.roughness_ = dem.roughness;
    m.obstacle_ = obstacle;
    m.distance_ = field.distance;
    m.safety_ = Grid<double>(dem.geometry.nx, dem.geometry.ny, 0.0);
    m.cost_ = Grid<double>(dem.geometry.nx, dem.geometry.ny, 0.0);
    for (std::size_t c = 0; c < m.cost_.size(); ++c) {
      const double safety = safety_cost(field.distance.data()[c], cfg);
      m.safety_.data()[c] = safety;
      m.cost_.data()[c] = cfg.w_roughness * dem.roughness.data()[c] / cfg.roughness_max +
                          cfg.w_slope * dem.slope.data()[c] / cfg.slope_max + cfg.w_safety * safety;
    }
    m.build_patches();
    return m;
  }

  const GridGeometry& geometry() const { return geometry_; }
  const Grid<double>& cost() const { return cost_; }
  const Grid<double>& elevation() const { return elevation_; }
  const Grid<double>& slope() const { return slope_; }
  const Grid<double>& roughness() const { return roughness_; }
  const Grid<double>& distance() const { return distance_; }
  const Grid<double>& safety() const { return safety_; }
  const Grid<std::uint8_t>& obstacle() const { return obstacle_; }

  Vec2 margin_lo() const { return geometry_.node(1, 1); }
  Vec2 margin_hi() const { return geometry_.node(geometry_.nx - 2, geometry_.ny - 2); }

  bool inside_margin(const Vec2& p) const {
    const Vec2 lo = margin_lo(), hi = margin_hi();
    return p.x() >= lo.x() && p.y() >= lo.y() && p.x() <= hi.x() && p.y() <= hi.y();
  }

  Vec2 clamp_to_margin(const Vec2& p) const { return p.cwiseMax(margin_lo()).cwiseMin(margin_hi()); }

  /// Bicubic value and analytic gradient; throws outside the margin.
  CostSample sample(const Vec2& p) const {
    if (!inside_margin(p))
      throw DomainError("cost query (" + std::to_string(p.x()) + ", " + std::to_string(p.y()) + ") outside map margin");
    const double fx = (p.x() - geometry_.origin.x()) / geometry_.cell;
    const double fy = (p.y() - geometry_.origin.y()) / geometry_.cell;
    const int i = std::clamp(static_cast<int>(std::floor(fx)), 1, geometry_.nx - 3);
    const int j = std::clamp(static_cast<int>(std::floor(fy)), 1, geometry_.ny - 3);
    return eval_patch(i, j, fx - i, fy - j);
  }

  /// Evaluates the patch of cell (i, j) (i in [1, nx-3]) at local (u, v) in
  /// [0, 1]^2.
  CostSample eval_patch(int i, int j, double u, double v) const {
    if (i < 1 || j < 1 || i > geometry_.nx - 3 || j > geometry_.ny - 3) throw DomainError("patch index out of range");
    const auto& a = patches_[static_cast<std::size_t>(j) * static_cast<std::size_t>(geometry_.nx) + static_cast<std::size_t>(i)];
    const std::array<double, 4> pu = {1.0, u, u * u, u * u * u};
    const std::array<double, 4> pv = {1.0, v, v * v, v * v * v};
    const std::array<double, 4> du = {0.0, 1.0, 2.0 * u, 3.0 * u * u};
    const std::array<double, 4> dv = {0.0, 1.0, 2.0 * v, 3.0 * v * v};
    CostSample s;
    double gx = 0.0, gy = 0.0;
    for (std::size_t k = 0; k < 4; ++k)
      for (std::size_t l = 0; l < 4; ++l) {
        const double c = a[k * 4 + l];
        s.value += c * pu[k] * pv[l];
        gx += c * du[k] * pv[l];
        gy += c * pu[k] * dv[l];
      }
    s.gradient = Vec2(gx, gy) / geometry_.cell;
    return s;
  }

 private:
  // Catmull-Rom: f(u) = sum_k u^k sum_a kSpline[k][a] p[a] for p at -1..2.
  static constexpr std::array<std::array<double, 4>, 4> kSpline = {{
      {0.0, 1.0, 0.0, 0.0},
      {-0.5, 0.0, 0.5, 0.0},
      {1.0, -2.5, 2.0, -0.5},
      {-0.5, 1.5, -1.5, 0.5},
  }};

  void build_patches() {
    const int nx = geometry_.nx, ny = geometry_.ny;
    if (nx < 4 || ny < 4) throw DomainError("cost map needs at least 4x4 nodes");
    for (double c : cost_.data())
      if (!std::isfinite(c)) throw DomainError("cost map contains a non-finite value");
    patches_.assign(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny), {});
    for (int j = 1; j <= ny - 3; ++j)
      for (int i = 1; i <= nx - 3; ++i) {
        std::array<double, 16> f{};
        for (int b = 0; b < 4; ++b)
          for (int a = 0; a < 4; ++a) f[static_cast<std::size_t>(a * 4 + b)] = cost_(i - 1 + a, j - 1 + b);
        auto& out = patches_[static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(i)];
        for (std::size_t k = 0; k < 4; ++k)
          for (std::size_t l = 0; l < 4; ++l) {
            double acc = 0.0;
            for (std::size_t a = 0; a < 4; ++a)
              for (std::size_t b = 0; b < 4; ++b) acc += kSpline[k][a] * kSpline[l][b] * f[a * 4 + b];
            out[k * 4 + l] = acc;
          }
      }
  }

  GridGeometry geometry_;
  Grid<double> elevation_, slope_, roughness_, distance_, safety_, cost_;
  Grid<std::uint8_t> obstacle_;
  std::vector<std::array<double, 16>> patches_;
};

inline CostMap combine_cost(const Dem& dem, const Grid<std::uint8_t>& obstacle, const DistanceField& field,
                            const TtaConfig& cfg) {
  cfg.validate();
  if (field.distance.nx() != dem.geometry.nx || field.distance.ny() != dem.geometry.ny)
    throw DomainError("distance field and DEM are not aligned");
  return CostMap::from_layers(dem, obstacle, field, cfg);
}

inline CostSample cost_at(const CostMap& map, const Vec2& p) { return map.sample(p); }

/// Full pipeline from point clouds to cost map.
inline CostMap build_cost_map(const PointCloud& terrain, const PointCloud& obstacles, const TtaConfig& cfg) {
  const Dem dem = rasterize_dem(terrain, obstacles, cfg);
  const auto v_c = obstacle_map(dem, cfg);
  const auto field = distance_field(v_c, dem.geometry.cell, cfg);
  return combine_cost(dem, v_c, field, cfg);
}

// ---------------------------------------------------------------------------
// Directory format: costmap.json + one little-endian f32 blob per layer.

inline void save_cost_map(const CostMap& map, const TtaConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& g = map.geometry();
  const std::array<std::pair<const char*, const Grid<double>*>, 5> layers = {{{"elevation", &map.elevation()},
                                                                              {"slope", &map.slope()},
                                                                              {"roughness", &map.roughness()},
                                                                              {"distance", &map.distance()},
                                                                              {"cost", &map.cost()}}};
  Json files = Json::object();
  for (const auto& [name, grid] : layers) {
    const std::string file = std::string(name) + ".f32";
    io::write_file(dir / file, io::f32_blob(std::span<const double>(grid->data())));
    files[name] = file;
  }
  Json header{{"nx", g.nx}, {"ny", g.ny}, {"cell", g.cell}, {"origin", to_json_vec(g.origin)},
              {"config", to_json(cfg)}, {"layers", files}};
  io::write_file(dir / "costmap.json", header.dump(2) + "\n");
}

inline CostMap load_cost_map(const std::filesystem::path& dir) {
  const Json header = Json::parse(io::read_file(dir / "costmap.json"));
  GridGeometry g;
  g.nx = require(header, "nx").get<int>();
  g.ny = require(header, "ny").get<int>();
  g.cell = require_number(header, "cell");
  g.origin = vec2_from_json(require(header, "origin"), "origin");
  const auto n = static_cast<std::size_t>(g.nx) * static_cast<std::size_t>(g.ny);
  const Json& layers = require(header, "layers");
  auto load = [&](const char* name) {
    const auto values = io::parse_f32_blob(io::read_file(dir / require(layers, name).get<std::string>()), n);
    Grid<double> grid(g.nx, g.ny);
    std::copy(values.begin(), values.end(), grid.data().begin());
    return grid;
  };
  return CostMap::from_stored(g, load("elevation"), load("slope"), load("roughness"), load("distance"), load("cost"));
}

}  // namespace offroad
