#pragma once

// Depth camera rendering against the analytic world, viewpoint sampling,
// inpainting and 16-bit PGM I/O.

#include "offroad/binary_io.hpp"
#include "offroad/common.hpp"
#include "offroad/json_util.hpp"
#include "offroad/parallel.hpp"
#include "offroad/worldgen.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace offroad {

/// Columns are spaced uniformly in bearing so that every band of 32 columns
/// covers exactly one lattice cell; rows follow a pinhole (tangent) mapping.
struct CameraIntrinsics {
  int width = 160;
  int height = 32;
  double fov_h = deg2rad(80.0);
  double fov_v = deg2rad(55.0);
  double max_range = 12.0;
  double mm_per_unit = 1000.0;

  void validate() const {
    if (width < 1 || height < 1) throw ConfigError("image dimensions must be positive");
    if (!(fov_h > 0 && fov_h < kPi) || !(fov_v > 0 && fov_v < kPi)) throw ConfigError("field of view must lie in (0, pi)");
    if (!(max_range > 0) || !(mm_per_unit > 0)) throw ConfigError("max range and encoding scale must be positive");
    if (max_range * mm_per_unit > 65535.0) throw ConfigError("max range does not fit the 16-bit encoding");
  }

  // Body-frame bearing of a column centre (column 0 is leftmost, +y).
  double column_bearing(double column) const { return 0.5 * fov_h - (column + 0.5) * fov_h / width; }

  // Tangent of the elevation of a row centre (row 0 is the top).
  double row_slope(double row) const {
    const double f = 0.5 * height / std::tan(0.5 * fov_v);
    return (0.5 * height - (row + 0.5)) / f;
  }
};

struct NoiseModel {
  bool enabled = false;
  double sigma_per_m2 = 0.001;  // sigma = sigma_per_m2 * d^2, relative
  double dropout = 0.01;
  std::uint64_t seed = 0;
};

struct SensorConfig {
  CameraIntrinsics intrinsics;
  double camera_height = 0.5;
  double pitch = 0.0;  // rad, positive looks down
  int supersample = 1;
  NoiseModel noise;
  int workers = 0;
};

inline Json to_json(const SensorConfig& c) {
  return Json{{"width", c.intrinsics.width},
              {"height", c.intrinsics.height},
              {"fov_h_deg", rad2deg(c.intrinsics.fov_h)},
              {"fov_v_deg", rad2deg(c.intrinsics.fov_v)},
              {"max_range", c.intrinsics.max_range},
              {"camera_height", c.camera_height},
              {"pitch_deg", rad2deg(c.pitch)},
              {"supersample", c.supersample},
              {"noise", {{"enabled", c.noise.enabled}, {"sigma_per_m2", c.noise.sigma_per_m2}, {"dropout", c.noise.dropout}}}};
}

inline SensorConfig sensors_from_json(const Json& j) {
  SensorConfig c;
  read_optional(j, "width", c.intrinsics.width);
  read_optional(j, "height", c.intrinsics.height);
  if (j.is_object() && j.contains("fov_h_deg")) c.intrinsics.fov_h = deg2rad(j.at("fov_h_deg").get<double>());
  if (j.is_object() && j.contains("fov_v_deg")) c.intrinsics.fov_v = deg2rad(j.at("fov_v_deg").get<double>());
  read_optional(j, "max_range", c.intrinsics.max_range);
  read_optional(j, "camera_height", c.camera_height);
  if (j.is_object() && j.contains("pitch_deg")) c.pitch = deg2rad(j.at("pitch_deg").get<double>());
  read_optional(j, "supersample", c.supersample);
  read_optional(j, "workers", c.workers);
  if (j.is_object() && j.contains("noise")) {
    const Json& n = j.at("noise");
    read_optional(n, "enabled", c.noise.enabled);
    read_optional(n, "sigma_per_m2", c.noise.sigma_per_m2);
    read_optional(n, "dropout", c.noise.dropout);
  }
  c.intrinsics.validate();
  if (c.supersample < 1) throw ConfigError("supersample factor must be at least 1");
  if (!(c.camera_height > 0)) throw ConfigError("camera height must be positive");
  return c;
}

struct CameraPose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw = 0.0;
  double pitch = 0.0;

  Vec3 origin() const { return {x, y, z}; }
};

/// 16-bit millimetre samples, row-major; 0 marks an invalid pixel.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> data;

  std::uint16_t& at(int col, int row) { return data[static_cast<std::size_t>(row) * width + col]; }
  std::uint16_t at(int col, int row) const { return data[static_cast<std::size_t>(row) * width + col]; }
  bool valid(int col, int row) const { return at(col, row) != 0; }

  friend bool operator==(const DepthImage&, const DepthImage&) = default;
};

inline std::uint16_t encode_depth(double metres, double mm_per_unit = 1000.0) {
  if (!std::isfinite(metres) || metres <= 0.0) return 0;
  return static_cast<std::uint16_t>(std::clamp(std::round(metres * mm_per_unit), 0.0, 65535.0));
}

inline double decode_depth(std::uint16_t v, double mm_per_unit = 1000.0) { return v / mm_per_unit; }

/// World-frame unit ray through pixel (col, row) for the given camera.
inline Vec3 pixel_ray(const CameraIntrinsics& intr, const CameraPose& pose, double col, double row) {
  const double b = intr.column_bearing(col);
  Vec3 d(std::cos(b), std::sin(b), intr.row_slope(row));
  d.normalize();
  // Pitch about the body y axis (positive tilts the view down), then yaw.
  const double cp = std::cos(pose.pitch), sp = std::sin(pose.pitch);
  const Vec3 p(cp * d.x() + sp * d.z(), d.y(), -sp * d.x() + cp * d.z());
  const double cy = std::cos(pose.yaw), sy = std::sin(pose.yaw);
  return {cy * p.x() - sy * p.y(), sy * p.x() + cy * p.y(), p.z()};
}

/// Nearest positive range of the ray to the side surface of a tree trunk
/// between its ground and its top, or nullopt.
inline std::optional<double> ray_tree_hit(const Vec3& o, const Vec3& d, const Tree& t, double ground) {
  const double ox = o.x() - t.center.x(), oy = o.y() - t.center.y();
  const double a = d.x() * d.x() + d.y() * d.y();
  if (a < 1e-18) return std::nullopt;
  const double b = 2.0 * (ox * d.x() + oy * d.y());
  const double c = ox * ox + oy * oy - t.radius * t.radius;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  // Numerically stable roots.
  const double q = -0.5 * (b + std::copysign(sq, b));
  double r0 = q / a, r1 = q != 0.0 ? c / q : r0;
  if (r0 > r1) std::swap(r0, r1);
  for (double s : {r0, r1}) {
    if (s <= 0.0) continue;
    const double z = o.z() + s * d.z();
    if (z >= ground && z <= ground + t.height) return s;
  }
  return std::nullopt;
}

/// Range at which a ray from inside the world leaves its horizontal extent.
inline double world_exit_range(const World& world, const Vec3& o, const Vec3& d) {
  double exit = std::numeric_limits<double>::infinity();
  auto slab = [&](double origin, double dir, double hi) {
    if (dir > 0.0) exit = std::min(exit, (hi - origin) / dir);
    if (dir < 0.0) exit = std::min(exit, -origin / dir);
  };
  slab(o.x(), d.x(), world.length());
  slab(o.y(), d.y(), world.width());
  return std::max(0.0, exit);
}

/// First crossing of the ray below the terrain within `max_range`: marched
/// at `step` and refined by bisection. The last sample sits on the world
/// boundary; the search ends there.
inline std::optional<double> ray_terrain_hit(const World& world, const Vec3& o, const Vec3& d, double max_range,
                                             double step) {
  auto above = [&](double s) {
    const Vec3 p = o + s * d;
    return p.z() - world.height_unchecked(std::clamp(p.x(), 0.0, world.length()), std::clamp(p.y(), 0.0, world.width()));
  };
  double s0 = 0.0, f0 = above(0.0);
  if (f0 <= 0.0) return 0.0;
  const double end = std::min(max_range, world_exit_range(world, o, d));
  while (s0 < end) {
    const double s1 = std::min(s0 + step, end);
    const double f1 = above(s1);
    if (f1 <= 0.0) {
      double lo = s0, hi = s1;
      for (int k = 0; k < 60 && hi - lo > 1e-9; ++k) {
        const double mid = 0.5 * (lo + hi);
        (above(mid) > 0.0 ? lo : hi) = mid;
      }
      return hi;
    }
    s0 = s1;
  }
  return std::nullopt;
}

namespace detail {

inline double noisy_depth(const NoiseModel& n, double d, std::uint64_t pixel) {
  if (!n.enabled) return d;
  if (hash_uniform(n.seed, 3 * pixel) < n.dropout) return 0.0;
  double u1 = hash_uniform(n.seed, 3 * pixel + 1);
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  const double u2 = hash_uniform(n.seed, 3 * pixel + 2);
  const double g = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  return d * (1.0 + n.sigma_per_m2 * d * d * g);
}

}  // namespace detail

/// Renders Euclidean range along each pixel ray. Rows are distributed over
/// workers; results do not depend on the worker count.
inline DepthImage render_depth(const World& world, const CameraPose& pose, const CameraIntrinsics& intr,
                               const NoiseModel& noise = {}, int workers = 0) {
  intr.validate();
  if (!world.contains(pose.x, pose.y)) throw DomainError("camera outside the world extent");
  if (pose.z <= world.height_at(pose.x, pose.y)) throw DomainError("camera is below the terrain surface");
  for (const Tree& t : world.trees())
    if ((Vec2(pose.x, pose.y) - t.center).norm() <= t.radius) throw DomainError("camera inside a tree trunk");

  std::vector<std::pair<const Tree*, double>> near;
  for (const Tree& t : world.trees())
    if ((Vec2(pose.x, pose.y) - t.center).norm() - t.radius <= intr.max_range) near.emplace_back(&t, world.tree_ground(t));

  DepthImage img{intr.width, intr.height, std::vector<std::uint16_t>(static_cast<std::size_t>(intr.width) * intr.height, 0)};
  const Vec3 o = pose.origin();
  const double step = 0.25 * world.cell();
  parallel_chunks(static_cast<std::size_t>(intr.height), resolve_workers(workers), [&](unsigned, std::size_t rb, std::size_t re) {
    for (std::size_t row = rb; row < re; ++row)
      for (int col = 0; col < intr.width; ++col) {
        const Vec3 d = pixel_ray(intr, pose, col, static_cast<double>(row));
        double best = std::numeric_limits<double>::infinity();
        for (const auto& [t, ground] : near)
          if (auto s = ray_tree_hit(o, d, *t, ground); s && *s < best) best = *s;
        if (auto s = ray_terrain_hit(world, o, d, std::min(best, intr.max_range), step); s && *s < best) best = *s;
        if (best > intr.max_range) continue;
        const std::uint64_t pixel = row * static_cast<std::uint64_t>(intr.width) + static_cast<std::uint64_t>(col);
        img.data[pixel] = encode_depth(detail::noisy_depth(noise, best, pixel), intr.mm_per_unit);
      }
  });
  return img;
}

/// Nearest-neighbour reduction of an image by an integer factor.
inline DepthImage downsample_nearest(const DepthImage& src, int factor) {
  if (factor < 1 || src.width % factor != 0 || src.height % factor != 0)
    throw DomainError("downsample factor must divide the image size");
  DepthImage out{src.width / factor, src.height / factor, {}};
  out.data.resize(static_cast<std::size_t>(out.width) * out.height);
  for (int r = 0; r < out.height; ++r)
    for (int c = 0; c < out.width; ++c) out.at(c, r) = src.at(c * factor + factor / 2, r * factor + factor / 2);
  return out;
}

/// Renders at `supersample` x the resolution and reduces with nearest
/// neighbour, emulating the low-resolution preprocessing path.
inline DepthImage render_frame(const World& world, const CameraPose& pose, const SensorConfig& cfg) {
  if (cfg.supersample <= 1) return render_depth(world, pose, cfg.intrinsics, cfg.noise, cfg.workers);
  CameraIntrinsics hi = cfg.intrinsics;
  hi.width *= cfg.supersample;
  hi.height *= cfg.supersample;
  return downsample_nearest(render_depth(world, pose, hi, cfg.noise, cfg.workers), cfg.supersample);
}

/// Fills invalid pixels by Jacobi diffusion over 4-neighbours until the
/// largest update is below 1 mm. Valid pixels are never modified.
inline DepthImage inpaint(const DepthImage& img, int max_iterations = 200000) {
  const std::size_t n = img.data.size();
  std::vector<std::size_t> holes;
  double sum = 0.0;
  std::size_t valid = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (img.data[k] == 0) {
      holes.push_back(k);
    } else {
      sum += img.data[k];
      ++valid;
    }
  }
  if (valid == 0) throw DomainError("cannot inpaint an image without valid pixels");
  if (holes.empty()) return img;
  std::vector<double> cur(n), next;
  for (std::size_t k = 0; k < n; ++k) cur[k] = img.data[k] == 0 ? sum / static_cast<double>(valid) : img.data[k];
  next = cur;
  const int w = img.width, h = img.height;
  for (int it = 0; it < max_iterations; ++it) {
    double delta = 0.0;
    for (std::size_t k : holes) {
      const int c = static_cast<int>(k % static_cast<std::size_t>(w)), r = static_cast<int>(k / static_cast<std::size_t>(w));
      double acc = 0.0;
      int cnt = 0;
      if (c > 0) acc += cur[k - 1], ++cnt;
      if (c + 1 < w) acc += cur[k + 1], ++cnt;
      if (r > 0) acc += cur[k - static_cast<std::size_t>(w)], ++cnt;
      if (r + 1 < h) acc += cur[k + static_cast<std::size_t>(w)], ++cnt;
      next[k] = cnt > 0 ? acc / cnt : cur[k];
      delta = std::max(delta, std::abs(next[k] - cur[k]));
    }
    std::swap(cur, next);
    if (delta < 1.0) break;
  }
  DepthImage out = img;
  for (std::size_t k : holes) out.data[k] = static_cast<std::uint16_t>(std::clamp(std::round(cur[k]), 1.0, 65535.0));
  return out;
}

// ---------------------------------------------------------------------------
// Viewpoints

/// Poisson-disk camera positions at least `min_spacing` apart, off every
/// trunk, each with a random yaw. Throws when fewer than `count` fit.
inline std::vector<CameraPose> sample_viewpoints(const World& world, double min_spacing, std::size_t count,
                                                 const SensorConfig& cfg, std::uint64_t seed,
                                                 std::size_t attempts_per_point = 200) {
  if (!(min_spacing > 0)) throw DomainError("viewpoint spacing must be positive");
  Rng rng(seed);
  const double keep_out = 0.3;
  std::vector<CameraPose> out;
  std::vector<Vec2> accepted;
  const std::size_t budget = std::max<std::size_t>(1, count) * attempts_per_point;
  const double s2 = min_spacing * min_spacing;
  for (std::size_t a = 0; a < budget && out.size() < count; ++a) {
    const Vec2 c(rng.uniform(0.0, world.length()), rng.uniform(0.0, world.width()));
    const double yaw = rng.uniform(-kPi, kPi);
    if (world.clearance(c.x(), c.y()) <= keep_out) continue;
    bool ok = true;
    for (const Vec2& p : accepted)
      if ((p - c).squaredNorm() < s2) {
        ok = false;
        break;
      }
    if (!ok) continue;
    accepted.push_back(c);
    out.push_back({c.x(), c.y(), world.height_at(c.x(), c.y()) + cfg.camera_height, yaw, cfg.pitch});
  }
  if (out.size() < count)
    throw DomainError("only " + std::to_string(out.size()) + " viewpoints fit with spacing " + std::to_string(min_spacing) +
                      " m; requested " + std::to_string(count));
  return out;
}

// ---------------------------------------------------------------------------
// 16-bit PGM (P5, big-endian samples)

inline std::string to_pgm(const DepthImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n65535\n";
  out.reserve(out.size() + img.data.size() * 2);
  for (std::uint16_t v : img.data) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

inline DepthImage parse_pgm(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 65535) throw IoError("expected a 16-bit P5 PGM");
  const auto start = static_cast<std::size_t>(in.tellg()) + 1;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() != start + 2 * n) throw IoError("PGM payload size mismatch");
  DepthImage img{w, h, std::vector<std::uint16_t>(n)};
  for (std::size_t k = 0; k < n; ++k)
    img.data[k] = static_cast<std::uint16_t>((static_cast<unsigned char>(bytes[start + 2 * k]) << 8) |
                                             static_cast<unsigned char>(bytes[start + 2 * k + 1]));
  return img;
}

inline void save_pgm(const DepthImage& img, const std::filesystem::path& path) { io::write_file(path, to_pgm(img)); }
inline DepthImage load_pgm(const std::filesystem::path& path) { return parse_pgm(io::read_file(path)); }

inline Json to_json(const CameraPose& p) {
  return Json{{"x", p.x}, {"y", p.y}, {"z", p.z}, {"yaw", p.yaw}, {"pitch", p.pitch}};
}

}  // namespace offroad
