#pragma once

// Terrain (2D) and obstacle (3D) voxel generators producing point clouds.

#include "offroad/binary_io.hpp"
#include "offroad/common.hpp"
#include "offroad/parallel.hpp"
#include "offroad/worldgen.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace offroad {

enum class VoxelMode { Terrain2D, Obstacle3D };

struct VoxelizerConfig {
  double voxel_size = 0.3;
  VoxelMode mode = VoxelMode::Terrain2D;
  double extent_x = 0.0;
  double extent_y = 0.0;
  double extent_z = 0.0;
  double z_origin = 0.0;  // bottom of the voxel column
  int workers = 0;        // 0 = hardware concurrency

  void validate() const {
    if (!(voxel_size > 0)) throw ConfigError("voxel size must be positive");
    if (!(extent_x > 0 && extent_y > 0 && extent_z > 0)) throw ConfigError("voxelizer extent must be positive");
  }
};

/// Config covering the whole world; the voxel column starts at the floor of
/// the lowest terrain point.
inline VoxelizerConfig voxelizer_config_for(const World& world, double voxel_size, VoxelMode mode, int workers = 0) {
  VoxelizerConfig c;
  c.voxel_size = voxel_size;
  c.mode = mode;
  c.extent_x = world.length();
  c.extent_y = world.width();
  c.extent_z = world.extent_z();
  c.z_origin = std::floor(world.min_height());
  c.workers = workers;
  return c;
}

struct PointCloud {
  std::vector<Vec3> points;
  double voxel_size = 0.0;  // 0 when unknown

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

inline int voxel_count(double extent, double l) { return static_cast<int>(std::ceil(extent / l - 1e-9)); }

/// One point per horizontal cell at the terrain height of the cell centre.
/// Centres of partial edge cells are clamped onto the extent.
inline PointCloud voxelize_terrain_2d(const World& world, const VoxelizerConfig& cfg) {
  cfg.validate();
  if (cfg.mode != VoxelMode::Terrain2D) throw ConfigError("voxelize_terrain_2d needs Terrain2D mode");
  const double l = cfg.voxel_size;
  const int nx = voxel_count(cfg.extent_x, l), ny = voxel_count(cfg.extent_y, l);
  PointCloud cloud;
  cloud.voxel_size = l;
  cloud.points.resize(static_cast<std::size_t>(nx) * ny);
  parallel_chunks(static_cast<std::size_t>(ny), resolve_workers(cfg.workers), [&](unsigned, std::size_t b, std::size_t e) {
    for (std::size_t j = b; j < e; ++j) {
      const double y = std::min((static_cast<double>(j) + 0.5) * l, cfg.extent_y);
      for (int i = 0; i < nx; ++i) {
        const double x = std::min((i + 0.5) * l, cfg.extent_x);
        cloud.points[j * static_cast<std::size_t>(nx) + static_cast<std::size_t>(i)] = Vec3(x, y, world.height_at(x, y));
      }
    }
  });
  return cloud;
}

/// Occupancy rule of the obstacle generator: the voxel centre lies within
/// radius + l/2 of the trunk axis (inclusive) and between the ground at the
/// trunk and the trunk top.
inline bool voxel_hits_tree(const Vec3& center, const Tree& tree, double ground, double l) {
  const double reach = tree.radius + 0.5 * l;
  const double dx = center.x() - tree.center.x(), dy = center.y() - tree.center.y();
  return dx * dx + dy * dy <= reach * reach && center.z() >= ground && center.z() <= ground + tree.height;
}

/// Emits the centre of every voxel that intersects a tree. Workers own
/// disjoint y-slabs; the merged key list is sorted so the output (z slowest,
/// x fastest) does not depend on the worker count.
inline PointCloud voxelize_obstacles_3d(const World& world, const VoxelizerConfig& cfg) {
  cfg.validate();
  if (cfg.mode != VoxelMode::Obstacle3D) throw ConfigError("voxelize_obstacles_3d needs Obstacle3D mode");
  const double l = cfg.voxel_size;
  const int nx = voxel_count(cfg.extent_x, l), ny = voxel_count(cfg.extent_y, l), nz = voxel_count(cfg.extent_z, l);
  auto center = [&](int i, int j, int k) {
    return Vec3((i + 0.5) * l, (j + 0.5) * l, cfg.z_origin + (k + 0.5) * l);
  };

  struct Key {
    std::int32_t k, j, i;
    auto operator<=>(const Key&) const = default;
  };
  const unsigned workers = resolve_workers(cfg.workers);
  std::vector<std::vector<Key>> buffers(workers);
  std::vector<double> grounds;
  grounds.reserve(world.trees().size());
  for (const Tree& t : world.trees()) grounds.push_back(world.tree_ground(t));

  parallel_chunks(static_cast<std::size_t>(ny), workers, [&](unsigned w, std::size_t jb, std::size_t je) {
    auto& out = buffers[w];
    for (std::size_t ti = 0; ti < world.trees().size(); ++ti) {
      const Tree& t = world.trees()[ti];
      const double reach = t.radius + 0.5 * l;
      const int i0 = std::max(0, static_cast<int>(std::floor((t.center.x() - reach) / l)) - 1);
      const int i1 = std::min(nx - 1, static_cast<int>(std::ceil((t.center.x() + reach) / l)) + 1);
      const int j0 = std::max(static_cast<int>(jb), static_cast<int>(std::floor((t.center.y() - reach) / l)) - 1);
      const int j1 = std::min(static_cast<int>(je) - 1, static_cast<int>(std::ceil((t.center.y() + reach) / l)) + 1);
      if (j0 > j1) continue;
      const int k0 = std::max(0, static_cast<int>(std::floor((grounds[ti] - cfg.z_origin) / l)) - 1);
      const int k1 = std::min(nz - 1, static_cast<int>(std::ceil((grounds[ti] + t.height - cfg.z_origin) / l)) + 1);
      for (int k = k0; k <= k1; ++k)
        for (int j = j0; j <= j1; ++j)
          for (int i = i0; i <= i1; ++i)
            if (voxel_hits_tree(center(i, j, k), t, grounds[ti], l)) out.push_back({k, j, i});
    }
  });

  std::vector<Key> keys;
  for (auto& b : buffers) keys.insert(keys.end(), b.begin(), b.end());
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  PointCloud cloud;
  cloud.voxel_size = l;
  cloud.points.reserve(keys.size());
  for (const Key& key : keys) {
    const Vec3 c = center(key.i, key.j, key.k);
    if (c.x() <= cfg.extent_x && c.y() <= cfg.extent_y && c.z() <= cfg.z_origin + cfg.extent_z) cloud.points.push_back(c);
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// ASCII PLY and compact binary ("OPC1", u64 count, f32 voxel size, f32 xyz).

inline std::string to_ply(const PointCloud& cloud) {
  std::ostringstream out;
  out << "ply\nformat ascii 1.0\ncomment voxel_size " << std::setprecision(9) << cloud.voxel_size << "\nelement vertex "
      << cloud.size() << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  out << std::setprecision(9);
  for (const Vec3& p : cloud.points)
    out << static_cast<float>(p.x()) << ' ' << static_cast<float>(p.y()) << ' ' << static_cast<float>(p.z()) << '\n';
  return out.str();
}

inline PointCloud parse_ply(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "ply") throw IoError("not a PLY file");
  std::size_t count = 0;
  bool have_count = false;
  int properties = 0;
  PointCloud cloud;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw IoError("only ASCII PLY is supported");
    } else if (word == "comment") {
      std::string key;
      ls >> key;
      if (key == "voxel_size") ls >> cloud.voxel_size;
    } else if (word == "element") {
      std::string name;
      ls >> name >> count;
      if (name != "vertex") throw IoError("unexpected PLY element " + name);
      have_count = true;
    } else if (word == "property") {
      ++properties;
    } else if (word == "end_header") {
      break;
    }
  }
  if (!have_count || properties != 3) throw IoError("PLY header must declare a vertex element with x, y, z");
  cloud.points.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    float x, y, z;
    if (!(in >> x >> y >> z)) throw IoError("truncated PLY vertex list");
    cloud.points.emplace_back(x, y, z);
  }
  return cloud;
}

inline std::string to_binary_cloud(const PointCloud& cloud) {
  std::string out = "OPC1";
  io::put_u64(out, cloud.size());
  io::put_f32(out, static_cast<float>(cloud.voxel_size));
  for (const Vec3& p : cloud.points) {
    io::put_f32(out, static_cast<float>(p.x()));
    io::put_f32(out, static_cast<float>(p.y()));
    io::put_f32(out, static_cast<float>(p.z()));
  }
  return out;
}

inline PointCloud parse_binary_cloud(const std::string& bytes) {
  if (bytes.size() < 16 || bytes.compare(0, 4, "OPC1") != 0) throw IoError("bad point cloud magic");
  std::size_t pos = 4;
  const std::uint64_t n = io::get_u64(bytes, pos);
  PointCloud cloud;
  cloud.voxel_size = io::get_f32(bytes, pos);
  if (bytes.size() != 16 + n * 12) throw IoError("point cloud size mismatch");
  cloud.points.reserve(n);
  for (std::uint64_t k = 0; k < n; ++k) {
    const float x = io::get_f32(bytes, pos), y = io::get_f32(bytes, pos), z = io::get_f32(bytes, pos);
    cloud.points.emplace_back(x, y, z);
  }
  return cloud;
}

inline void save_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
  io::write_file(path, path.extension() == ".ply" ? to_ply(cloud) : to_binary_cloud(cloud));
}

inline PointCloud load_cloud(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  return path.extension() == ".ply" ? parse_ply(bytes) : parse_binary_cloud(bytes);
}

}  // namespace offroad
