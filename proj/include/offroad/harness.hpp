#pragma once

// Closed-loop episodes (planner at the planning rate, MPC at the control
// rate, RK4 plant), metrics, and dataset export.

#include "offroad/curves.hpp"
#include "offroad/json_util.hpp"
#include "offroad/mpc.hpp"
#include "offroad/sensors.hpp"
#include "offroad/trajopt.hpp"
#include "offroad/tta.hpp"
#include "offroad/voxelizer.hpp"
#include "offroad/worldgen.hpp"

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace offroad {

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) throw IoError("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

/// Every module's settings; each maps to one section of the JSON config.
struct StackConfig {
  TerrainParams worldgen;
  double world_length = 100.0;
  double world_width = 100.0;
  double terrain_voxel = 0.2;
  double obstacle_voxel = 0.2;
  int voxel_workers = 0;
  TtaConfig tta;
  CurvesConfig curves;
  NormalizationConfig normalization;
  TrajoptConfig trajopt;
  SensorConfig sensors;
  MpcConfig mpc;
};

struct EpisodeConfig {
  Pose2 start{20.0, 50.0, 0.0};
  Vec2 goal{80.0, 50.0};
  double planner_rate = 10.0;
  double controller_rate = 20.0;
  double v_avg = 1.0;
  double max_duration = 200.0;
  double goal_radius = 1.0;
  double spawn_clear_radius = 1.5;  // trees this close to start or goal are removed
  double min_horizon = 1.5;         // s; lower bound of the shortened t_e near the goal
  bool render_depth = false;        // telemetry frames at every planner tick
  std::string depth_dir;            // when set, telemetry frames are written here
  std::string predictions;          // learned mode: JSON-lines of per-frame predicted plans

  void validate() const {
    if (!(planner_rate > 0 && controller_rate > 0)) throw ConfigError("rates must be positive");
    if (controller_rate < planner_rate) throw ConfigError("controller rate must be at least the planner rate");
    if (!(v_avg > 0 && max_duration > 0 && goal_radius > 0 && min_horizon > 0))
      throw ConfigError("episode limits must be positive");
  }
};

inline Json to_json(const EpisodeConfig& e) {
  return Json{{"start", {e.start.x, e.start.y, e.start.yaw}},
              {"goal", to_json_vec(e.goal)},
              {"planner_rate", e.planner_rate},
              {"controller_rate", e.controller_rate},
              {"v_avg", e.v_avg},
              {"max_duration", e.max_duration},
              {"goal_radius", e.goal_radius},
              {"spawn_clear_radius", e.spawn_clear_radius},
              {"min_horizon", e.min_horizon},
              {"render_depth", e.render_depth}};
}

inline EpisodeConfig episode_from_json(const Json& j) {
  EpisodeConfig e;
  if (j.is_object() && j.contains("start")) {
    const auto s = j.at("start").get<std::vector<double>>();
    if (s.size() != 3) throw ConfigError("start must be [x, y, yaw]");
    e.start = {s[0], s[1], s[2]};
  }
  if (j.is_object() && j.contains("goal")) e.goal = vec2_from_json(j.at("goal"), "goal");
  read_optional(j, "planner_rate", e.planner_rate);
  read_optional(j, "controller_rate", e.controller_rate);
  read_optional(j, "v_avg", e.v_avg);
  read_optional(j, "max_duration", e.max_duration);
  read_optional(j, "goal_radius", e.goal_radius);
  read_optional(j, "spawn_clear_radius", e.spawn_clear_radius);
  read_optional(j, "min_horizon", e.min_horizon);
  read_optional(j, "render_depth", e.render_depth);
  read_optional(j, "depth_dir", e.depth_dir);
  read_optional(j, "predictions", e.predictions);
  e.validate();
  return e;
}

struct DatasetConfig {
  int worlds = 1;
  int viewpoints_per_world = 10;
  int states_per_viewpoint = 8;
  double viewpoint_spacing = 5.0;
  double world_length = 40.0;
  double world_width = 40.0;
  double viewpoint_border = 8.0;  // viewpoints keep this distance from the world edge
};

inline DatasetConfig dataset_from_json(const Json& j) {
  DatasetConfig d;
  read_optional(j, "worlds", d.worlds);
  read_optional(j, "viewpoints_per_world", d.viewpoints_per_world);
  read_optional(j, "states_per_viewpoint", d.states_per_viewpoint);
  read_optional(j, "viewpoint_spacing", d.viewpoint_spacing);
  read_optional(j, "world_length", d.world_length);
  read_optional(j, "world_width", d.world_width);
  read_optional(j, "viewpoint_border", d.viewpoint_border);
  if (d.worlds < 1 || d.viewpoints_per_world < 1 || d.states_per_viewpoint < 1) throw ConfigError("dataset counts must be positive");
  return d;
}

/// Reads every section of a stack config document; absent sections keep
/// their defaults.
inline StackConfig stack_from_json(const Json& j) {
  StackConfig c;
  auto section = [&](const char* name) { return j.is_object() && j.contains(name) ? j.at(name) : Json::object(); };
  c.worldgen = terrain_params_from_json(section("worldgen"));
  const Json world = section("world");
  read_optional(world, "length", c.world_length);
  read_optional(world, "width", c.world_width);
  const Json vox = section("voxelizer");
  read_optional(vox, "terrain_voxel", c.terrain_voxel);
  read_optional(vox, "obstacle_voxel", c.obstacle_voxel);
  read_optional(vox, "workers", c.voxel_workers);
  if (!(c.terrain_voxel > 0 && c.obstacle_voxel > 0)) throw ConfigError("voxel sizes must be positive");
  c.tta = tta_from_json(section("tta"));
  c.curves = curves_from_json(section("curves"));
  c.normalization = normalization_from_json(section("normalization"));
  c.trajopt = trajopt_from_json(section("trajopt"));
  c.sensors = sensors_from_json(section("sensors"));
  c.mpc = mpc_from_json(section("mpc"));
  return c;
}

inline Json to_json(const StackConfig& c) {
  return Json{{"worldgen", to_json(c.worldgen)},
              {"world", {{"length", c.world_length}, {"width", c.world_width}}},
              {"voxelizer", {{"terrain_voxel", c.terrain_voxel}, {"obstacle_voxel", c.obstacle_voxel}}},
              {"tta", to_json(c.tta)},
              {"curves", to_json(c.curves)},
              {"normalization", to_json(c.normalization)},
              {"trajopt", to_json(c.trajopt)},
              {"sensors", to_json(c.sensors)},
              {"mpc", to_json(c.mpc)}};
}

/// Voxelizes the world and runs the traversability pipeline.
inline CostMap cost_map_for_world(const World& world, const StackConfig& cfg) {
  const PointCloud terrain =
      voxelize_terrain_2d(world, voxelizer_config_for(world, cfg.terrain_voxel, VoxelMode::Terrain2D, cfg.voxel_workers));
  const PointCloud obstacles =
      voxelize_obstacles_3d(world, voxelizer_config_for(world, cfg.obstacle_voxel, VoxelMode::Obstacle3D, cfg.voxel_workers));
  return build_cost_map(terrain, obstacles, cfg.tta);
}

// ---------------------------------------------------------------------------
// Episodes

enum class Termination { Goal, Collision, Timeout, PlannerFailure };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::Goal: return "goal";
    case Termination::Collision: return "collision";
    case Termination::Timeout: return "timeout";
    case Termination::PlannerFailure: return "planner-failure";
  }
  return "unknown";
}

struct TraceStep {
  double t = 0.0;
  VehicleState state;
  ControlInput control;  // command applied over [t, t + dt)
  double control_ms = 0.0;
};

struct TracePlan {
  double t = 0.0;
  int tick = 0;
  int best = -1;
  double plan_ms = 0.0;
  int depth_frame = -1;
  HermiteTrajectory trajectory;
};

struct EpisodeTrace {
  std::vector<TraceStep> steps;
  std::vector<TracePlan> plans;
  Termination reason = Termination::Timeout;
  std::string error;  // message of the module error that ended the episode, if any
  double tta_ms = 0.0;
};

struct Metrics {
  double planning_ms = 0.0;  // mean per plan
  double controller_ms = 0.0;
  double total_ms = 0.0;
  double tta_ms = 0.0;       // one-off map construction
  double safety_avg = 0.0;
  double safety_min = 0.0;
  double bump_height = 0.0;
  double length = 0.0;
  int plans = 0;
  double duration = 0.0;
  std::string termination;
};

inline Json to_json(const Metrics& m) {
  return Json{{"latency_ms", {{"planning", m.planning_ms}, {"controller", m.controller_ms}, {"total", m.total_ms}, {"tta", m.tta_ms}}},
              {"safety_avg", m.safety_avg},
              {"safety_min", m.safety_min},
              {"bump_height", m.bump_height},
              {"length", m.length},
              {"plans", m.plans},
              {"duration", m.duration},
              {"termination", m.termination}};
}

/// Metrics recomputed from the trace and the world alone. Clearance is
/// capped at 1e6 m so tree-free worlds report finite safety.
inline Metrics compute_metrics(const EpisodeTrace& trace, const World& world) {
  if (trace.steps.empty()) throw DomainError("cannot compute metrics of an empty trace");
  Metrics m;
  m.termination = to_string(trace.reason);
  m.tta_ms = trace.tta_ms;
  double sum = 0.0;
  m.safety_min = std::numeric_limits<double>::infinity();
  double prev_z = 0.0;
  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    const VehicleState& s = trace.steps[k].state;
    const double c = std::min(world.clearance(s.x, s.y), 1e6);
    sum += c;
    m.safety_min = std::min(m.safety_min, c);
    const double z = world.height_unchecked(std::clamp(s.x, 0.0, world.length()), std::clamp(s.y, 0.0, world.width()));
    if (k > 0) {
      const VehicleState& p = trace.steps[k - 1].state;
      m.bump_height += std::abs(z - prev_z);
      m.length += std::hypot(s.x - p.x, s.y - p.y);
    }
    prev_z = z;
  }
  m.safety_avg = sum / static_cast<double>(trace.steps.size());
  m.safety_min = std::max(0.0, m.safety_min);
  m.safety_avg = std::max(m.safety_avg, m.safety_min);
  double ctrl = 0.0;
  std::size_t nctrl = 0;
  for (const TraceStep& s : trace.steps)
    if (s.control_ms > 0.0) ctrl += s.control_ms, ++nctrl;
  double plan = 0.0;
  for (const TracePlan& p : trace.plans) plan += p.plan_ms;
  m.plans = static_cast<int>(trace.plans.size());
  m.planning_ms = trace.plans.empty() ? 0.0 : plan / static_cast<double>(trace.plans.size());
  m.controller_ms = nctrl == 0 ? 0.0 : ctrl / static_cast<double>(nctrl);
  m.total_ms = m.planning_ms + m.controller_ms;
  m.duration = trace.steps.back().t - trace.steps.front().t;
  return m;
}

/// Local goal handed to the planner: the global goal, pulled in to at most
/// g_max from the current position.
inline Vec2 local_goal(const Vec2& position, const Vec2& goal, double g_max) {
  const Vec2 d = goal - position;
  const double n = d.norm();
  return n <= g_max ? goal : Vec2(position + d * (g_max / n));
}

/// Execution time for a plan: r / v_avg, shortened in proportion when the
/// local goal is closer than r so the vehicle keeps its pace on the final
/// approach; never below `min_horizon`.
inline double plan_horizon(double distance_to_goal, double radius, double v_avg, double min_horizon) {
  return std::max(min_horizon, std::min(distance_to_goal, radius) / v_avg);
}

/// Predicted plans keyed by planner tick, for learned-mode execution.
inline std::map<int, Json> load_predictions(const std::filesystem::path& path) {
  std::map<int, Json> out;
  std::istringstream in(io::read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j = Json::parse(line);
    const int frame = require(j, "frame").get<int>();
    out[frame] = std::move(j);
  }
  return out;
}

inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

/// Runs one episode on a prepared world and cost map. Simulated time is
/// driven by integer controller ticks; wall-clock timings are recorded only.
inline EpisodeTrace run_episode(const World& world, const CostMap& map, const StackConfig& stack, const EpisodeConfig& ep) {
  ep.validate();
  if (!world.contains(ep.goal.x(), ep.goal.y())) throw DomainError("goal outside the world");
  if (!world.contains(ep.start.x, ep.start.y)) throw DomainError("start outside the world");
  const PrimitiveLattice lattice = stack.curves.lattice();
  const double dt = 1.0 / ep.controller_rate;
  std::map<int, Json> predictions;
  if (!ep.predictions.empty()) predictions = load_predictions(ep.predictions);

  EpisodeTrace trace;
  VehicleState x{ep.start.x, ep.start.y, wrap_angle(ep.start.yaw)};
  ControlInput u{};
  std::vector<ControlInput> warm;
  std::optional<HermiteTrajectory> traj;
  double t_plan = 0.0;
  int plan_tick = 0;
  trace.steps.push_back({0.0, x, u, 0.0});
  if (world.clearance(x.x, x.y) <= 0.0) {
    trace.reason = Termination::Collision;
    return trace;
  }
  const auto max_ticks = static_cast<long long>(std::ceil(ep.max_duration * ep.controller_rate - 1e-9));
  for (long long k = 0;; ++k) {
    const double t = static_cast<double>(k) * dt;
    // Planner ticks fall on controller ticks where floor(t * planner_rate) advances.
    const bool plan_now = k == 0 || std::floor(static_cast<double>(k) * ep.planner_rate / ep.controller_rate) >
                                        std::floor(static_cast<double>(k - 1) * ep.planner_rate / ep.controller_rate);
    if (plan_now) {
      TracePlan rec;
      rec.t = t;
      rec.tick = plan_tick;
      const Pose2 pose{x.x, x.y, x.theta};
      // Start velocity continues the active reference so that consecutive
      // plans join smoothly; the first plan starts from the commanded speed.
      const Vec2 v_s = traj ? eval_clamped(*traj, t - t_plan).velocity : Vec2(u.v * unit(x.theta));
      if (ep.render_depth) {
        const CameraPose cam{x.x, x.y, world.height_at(x.x, x.y) + stack.sensors.camera_height, x.theta, stack.sensors.pitch};
        const DepthImage img = render_frame(world, cam, stack.sensors);
        rec.depth_frame = plan_tick;
        if (!ep.depth_dir.empty()) {
          char name[32];
          std::snprintf(name, sizeof name, "frame_%06d.pgm", plan_tick);
          save_pgm(img, std::filesystem::path(ep.depth_dir) / name);
        }
      }
      const Vec2 g_local = local_goal(pose.position(), ep.goal, stack.normalization.g_max);
      const double t_e = plan_horizon((g_local - pose.position()).norm(), stack.curves.radius, ep.v_avg, ep.min_horizon);
      const auto start = std::chrono::steady_clock::now();
      try {
        if (!ep.predictions.empty()) {
          auto it = predictions.find(plan_tick);
          if (it == predictions.end()) throw PlannerError("no prediction for frame " + std::to_string(plan_tick));
          const LatticePlan pred = plan_from_json(it->second, lattice);
          traj = trajectory_from_prediction(pred, lattice, pose, v_s, t_e);
          rec.best = pred.best;
        } else {
          PlanRequest req{pose, v_s, g_local, t_e};
          const LatticePlan plan = plan_lattice(req, map, lattice, stack.trajopt, stack.normalization);
          traj = plan.trajectory;
          rec.best = plan.best;
        }
      } catch (const Error& e) {
        rec.plan_ms = elapsed_ms(start);
        trace.plans.push_back(rec);
        trace.reason = Termination::PlannerFailure;
        trace.error = e.what();
        return trace;
      }
      rec.plan_ms = elapsed_ms(start);
      rec.trajectory = *traj;
      trace.plans.push_back(rec);
      t_plan = t;
      ++plan_tick;
    }

    const auto start = std::chrono::steady_clock::now();
    const auto refs = reference_from_trajectory(*traj, t - t_plan, stack.mpc, x.theta);
    const MpcSolution sol = solve_mpc(x, refs, stack.mpc, warm);
    const double control_ms = elapsed_ms(start);
    u = sol.controls.front();
    warm.assign(sol.controls.begin() + 1, sol.controls.end());
    trace.steps.back().control = u;
    trace.steps.back().control_ms = control_ms;

    x = rk4_step(x, u, dt);
    const double t_next = static_cast<double>(k + 1) * dt;
    trace.steps.push_back({t_next, x, {}, 0.0});
    if (!world.contains(x.x, x.y)) {
      trace.reason = Termination::PlannerFailure;
      trace.error = "vehicle left the world";
      return trace;
    }
    if (world.clearance(x.x, x.y) <= 0.0) {
      trace.reason = Termination::Collision;
      return trace;
    }
    if ((Vec2(x.x, x.y) - ep.goal).norm() <= ep.goal_radius) {
      trace.reason = Termination::Goal;
      return trace;
    }
    if (k + 1 >= max_ticks) {
      trace.reason = Termination::Timeout;
      return trace;
    }
  }
}

/// Generates the episode world (spawn and goal areas cleared), builds its
/// cost map and runs the episode.
struct EpisodeResult {
  World world;
  EpisodeTrace trace;
  Metrics metrics;
};

inline EpisodeResult simulate(const StackConfig& stack, const EpisodeConfig& ep) {
  const World raw = generate_world(stack.worldgen, stack.world_length, stack.world_width);
  const std::array<Vec2, 2> keep = {ep.start.position(), ep.goal};
  EpisodeResult r{without_trees_near(raw, keep, ep.spawn_clear_radius), {}, {}};
  const auto start = std::chrono::steady_clock::now();
  const CostMap map = cost_map_for_world(r.world, stack);
  const double tta_ms = elapsed_ms(start);
  r.trace = run_episode(r.world, map, stack, ep);
  r.trace.tta_ms = tta_ms;
  r.metrics = compute_metrics(r.trace, r.world);
  return r;
}

/// JSON-lines: one record per controller step, one per plan, then the end
/// record.
inline std::string trace_to_jsonl(const EpisodeTrace& trace) {
  std::string out;
  std::size_t p = 0;
  for (const TraceStep& s : trace.steps) {
    while (p < trace.plans.size() && trace.plans[p].t <= s.t) {
      const TracePlan& pl = trace.plans[p++];
      out += Json{{"type", "plan"},     {"t", pl.t},   {"tick", pl.tick}, {"best", pl.best}, {"plan_ms", pl.plan_ms},
                  {"depth_frame", pl.depth_frame}, {"trajectory", to_json(pl.trajectory)}}
                 .dump() +
             "\n";
    }
    out += Json{{"type", "state"}, {"t", s.t}, {"x", s.state.x}, {"y", s.state.y}, {"theta", s.state.theta},
                {"v", s.control.v}, {"w", s.control.w}, {"control_ms", s.control_ms}}
               .dump() +
           "\n";
  }
  Json end{{"type", "end"}, {"reason", to_string(trace.reason)}, {"tta_ms", trace.tta_ms}};
  if (!trace.error.empty()) end["error"] = trace.error;
  out += end.dump() + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Dataset export

struct DatasetSummary {
  std::size_t samples = 0;
  std::size_t skipped = 0;
  std::size_t frames = 0;
};

/// Planner state for one dataset sample, in the body frame of the viewpoint:
/// speed uniform in [0, v_max] with heading near the body x-axis, goal in a
/// uniform direction at a range uniform in (0, g_max].
inline std::pair<Vec2, Vec2> sample_state(Rng& rng, const NormalizationConfig& norm) {
  const double speed = rng.uniform(0.0, norm.v_max);
  const double heading = std::clamp(0.3 * rng.normal(), -kPi / 2, kPi / 2);
  const double bearing = rng.uniform(-kPi, kPi);
  const double range = norm.g_max * (1.0 - rng.uniform());
  return {speed * unit(heading), range * unit(bearing)};
}

/// Writes depth frames, per-sample label files and manifest.jsonl under
/// `out`. Output bytes depend only on the configs and the seed.
inline DatasetSummary build_dataset(const StackConfig& stack, const DatasetConfig& ds, std::uint64_t seed,
                                    const std::filesystem::path& out) {
  namespace fs = std::filesystem;
  fs::create_directories(out / "depth");
  fs::create_directories(out / "labels");
  const PrimitiveLattice lattice = stack.curves.lattice();
  const NormalizationConfig& norm = stack.normalization;
  if (stack.sensors.intrinsics.width != 32 * lattice.m_theta || stack.sensors.intrinsics.height != 32)
    throw ConfigError("dataset depth images must be 32*m_theta x 32");
  Rng rng(seed);
  DatasetSummary summary;
  std::string manifest;
  for (int w = 0; w < ds.worlds; ++w) {
    TerrainParams params = stack.worldgen;
    params.seed = rng.next_u64();
    const World world = generate_world(params, ds.world_length, ds.world_width);
    const CostMap map = cost_map_for_world(world, stack);
    const double border = ds.viewpoint_border;
    // Viewpoints come from the interior so that anchors rarely leave the map.
    std::vector<CameraPose> poses;
    {
      Rng vrng(rng.next_u64());
      const double s2 = ds.viewpoint_spacing * ds.viewpoint_spacing;
      for (std::size_t a = 0; a < 200u * static_cast<std::size_t>(ds.viewpoints_per_world) &&
                              poses.size() < static_cast<std::size_t>(ds.viewpoints_per_world);
           ++a) {
        const Vec2 c(vrng.uniform(border, ds.world_length - border), vrng.uniform(border, ds.world_width - border));
        const double yaw = vrng.uniform(-kPi, kPi);
        if (world.clearance(c.x(), c.y()) <= 0.5) continue;
        bool ok = true;
        for (const CameraPose& p : poses) ok = ok && (Vec2(p.x, p.y) - c).squaredNorm() >= s2;
        if (!ok) continue;
        poses.push_back({c.x(), c.y(), world.height_at(c.x(), c.y()) + stack.sensors.camera_height, yaw, stack.sensors.pitch});
      }
      if (poses.size() < static_cast<std::size_t>(ds.viewpoints_per_world))
        throw DomainError("only " + std::to_string(poses.size()) + " dataset viewpoints fit in world " + std::to_string(w));
    }
    for (std::size_t v = 0; v < poses.size(); ++v) {
      const CameraPose& cam = poses[v];
      const DepthImage img = render_frame(world, cam, stack.sensors);
      char frame[64];
      std::snprintf(frame, sizeof frame, "depth/w%03d_v%04zu.pgm", w, v);
      const std::string pgm = to_pgm(img);
      io::write_file(out / frame, pgm);
      const std::string depth_hash = sha256_hex(pgm);
      ++summary.frames;
      const Pose2 pose{cam.x, cam.y, cam.yaw};
      for (int s = 0; s < ds.states_per_viewpoint; ++s) {
        const auto [v_body, g_body] = sample_state(rng, norm);
        char id[64];
        std::snprintf(id, sizeof id, "w%03d_v%04zu_s%02d", w, v, s);
        LatticePlan plan;
        try {
          PlanRequest req{pose, pose.to_world_direction(v_body), pose.to_world(g_body), stack.curves.t_e};
          plan = plan_lattice(req, map, lattice, stack.trajopt, norm);
        } catch (const Error&) {
          ++summary.skipped;
          continue;
        }
        const auto labels = make_labels(plan, lattice, norm);
        const NormalizedState state = normalize_state(v_body, g_body, norm);
        Json y = Json::array(), raw = Json::array(), feasible = Json::array();
        for (std::size_t a = 0; a < labels.size(); ++a) {
          y.push_back(labels[a].y);
          raw.push_back(std::isfinite(plan.anchors[a].raw_cost) ? Json(plan.anchors[a].raw_cost) : Json(nullptr));
          feasible.push_back(plan.anchors[a].feasible);
        }
        Json sample{{"id", id},
                    {"depth", frame},
                    {"pose", to_json(cam)},
                    {"state", state.s},
                    {"v_s_body", to_json_vec(v_body)},
                    {"goal_body", to_json_vec(g_body)},
                    {"labels", y},
                    {"raw_cost", raw},
                    {"feasible", feasible},
                    {"best", plan.best},
                    {"plan", to_json(plan)}};
        const std::string label_path = std::string("labels/") + id + ".json";
        const std::string text = sample.dump(2) + "\n";
        io::write_file(out / label_path, text);
        manifest += Json{{"id", id},
                         {"depth", frame},
                         {"depth_sha256", depth_hash},
                         {"labels", label_path},
                         {"labels_sha256", sha256_hex(text)}}
                        .dump() +
                    "\n";
        ++summary.samples;
      }
    }
  }
  manifest += Json{{"summary",
                    {{"samples", summary.samples},
                     {"skipped", summary.skipped},
                     {"frames", summary.frames},
                     {"seed", seed},
                     {"m_theta", lattice.m_theta},
                     {"image", {stack.sensors.intrinsics.width, stack.sensors.intrinsics.height}},
                     {"normalization", to_json(norm)}}}}
                  .dump() +
              "\n";
  io::write_file(out / "manifest.jsonl", manifest);
  return summary;
}

}  // namespace offroad
