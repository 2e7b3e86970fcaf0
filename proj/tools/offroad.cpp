// Command-line front end: world generation, voxelization, traversability
// maps, planning, closed-loop simulation, dataset export and MPC evaluation.

#include "offroad/offroad.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace offroad;

std::vector<double> parse_list(const std::string& text, std::size_t expected, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  if (out.size() != expected)
    throw ConfigError(std::string(what) + " needs " + std::to_string(expected) + " comma-separated numbers");
  return out;
}

Json load_config(const std::string& path) {
  if (path.empty()) return Json::object();
  return Json::parse(io::read_file(path));
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  io::write_file(path, text);
}

std::string eval_mpc_csv(const MpcConfig& mpc, double duration, const std::string& which) {
  std::ostringstream csv;
  csv << "scenario,t,x,y,theta,ref_x,ref_y,ref_theta,v,w\n";
  const double dt = mpc.dt;
  auto run = [&](const char* name, auto ref_at, VehicleState x) {
    std::vector<ControlInput> warm;
    const int steps = static_cast<int>(std::round(duration / dt));
    for (int k = 0; k < steps; ++k) {
      const double t = k * dt;
      std::vector<VehicleState> refs;
      for (int i = 0; i < mpc.horizon; ++i) refs.push_back(ref_at(t + i * dt));
      const MpcSolution sol = solve_mpc(x, refs, mpc, warm);
      const ControlInput u = sol.controls.front();
      warm.assign(sol.controls.begin() + 1, sol.controls.end());
      csv << name << ',' << t << ',' << x.x << ',' << x.y << ',' << x.theta << ',' << refs[0].x << ',' << refs[0].y << ','
          << refs[0].theta << ',' << u.v << ',' << u.w << '\n';
      x = rk4_step(x, u, dt);
    }
  };
  if (which == "line" || which == "all")
    run("line", [](double t) { return VehicleState{t, 0.0, 0.0}; }, VehicleState{0.0, 0.0, 0.0});
  if (which == "circle" || which == "all") {
    const double radius = 5.0, speed = 1.0;
    run(
        "circle",
        [&](double t) {
          const double a = speed * t / radius;
          return VehicleState{radius * std::sin(a), radius * (1.0 - std::cos(a)), wrap_angle(a)};
        },
        VehicleState{0.0, 0.0, 0.0});
  }
  return csv.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Off-road local planning stack"};
  app.require_subcommand(1);
  std::string config_path;
  std::uint64_t seed = 0;
  bool have_seed = false;
  app.add_option("--config", config_path, "JSON config with per-module sections")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "world / dataset seed");

  auto* gen = app.add_subcommand("gen-world", "generate a procedural world");
  std::string gen_out;
  gen->add_option("--out", gen_out, "output directory")->required();

  auto* vox = app.add_subcommand("voxelize", "voxelize a world into point clouds");
  std::string vox_world, vox_terrain, vox_obstacles;
  int vox_workers = 0;
  vox->add_option("--world", vox_world, "world directory")->required();
  vox->add_option("--terrain", vox_terrain, "terrain cloud output (.ply or binary)")->required();
  vox->add_option("--obstacles", vox_obstacles, "obstacle cloud output (.ply or binary)")->required();
  vox->add_option("--workers", vox_workers, "worker threads (0 = all cores)");

  auto* tta = app.add_subcommand("tta", "build a traversability cost map");
  std::string tta_terrain, tta_obstacles, tta_out;
  tta->add_option("--terrain", tta_terrain, "terrain point cloud")->required();
  tta->add_option("--obstacles", tta_obstacles, "obstacle point cloud")->required();
  tta->add_option("--out", tta_out, "cost map directory")->required();

  auto* plan = app.add_subcommand("plan", "plan one lattice of trajectories");
  std::string plan_map, plan_start, plan_goal, plan_velocity = "0,0", plan_out;
  plan->add_option("--map", plan_map, "cost map directory")->required();
  plan->add_option("--start", plan_start, "x,y,yaw")->required();
  plan->add_option("--goal", plan_goal, "x,y")->required();
  plan->add_option("--velocity", plan_velocity, "start velocity vx,vy (world frame)");
  plan->add_option("--out", plan_out, "plan JSON ('-' for stdout)");

  auto* sim = app.add_subcommand("simulate", "run a closed-loop episode");
  std::string sim_trace, sim_metrics, sim_world;
  sim->add_option("--trace", sim_trace, "JSON-lines trace output");
  sim->add_option("--metrics", sim_metrics, "metrics JSON output ('-' for stdout)");
  sim->add_option("--save-world", sim_world, "also write the episode world here");

  auto* ds = app.add_subcommand("dataset", "export depth frames and expert labels");
  std::string ds_out;
  ds->add_option("--out", ds_out, "dataset directory")->required();

  auto* mpc = app.add_subcommand("eval-mpc", "MPC tracking of a line and a circle");
  std::string mpc_out, mpc_which = "all";
  double mpc_duration = 10.0;
  mpc->add_option("--out", mpc_out, "CSV output ('-' for stdout)");
  mpc->add_option("--scenario", mpc_which, "line | circle | all")->check(CLI::IsMember({"line", "circle", "all"}));
  mpc->add_option("--duration", mpc_duration, "seconds per scenario");

  CLI11_PARSE(app, argc, argv);
  have_seed = seed_opt->count() > 0;

  try {
    const Json config = load_config(config_path);
    StackConfig stack = stack_from_json(config);
    if (have_seed) stack.worldgen.seed = seed;
    auto section = [&](const char* name) { return config.contains(name) ? config.at(name) : Json::object(); };

    if (*gen) {
      const World world = generate_world(stack.worldgen, stack.world_length, stack.world_width);
      save_world(world, gen_out);
      const SlopeStats s = slope_stats(world);
      std::cout << Json{{"trees", world.trees().size()}, {"slope_mean_deg", s.mean_deg}, {"slope_max_deg", s.max_deg}}.dump()
                << "\n";
    } else if (*vox) {
      const World world = load_world(vox_world);
      const int workers = vox_workers > 0 ? vox_workers : stack.voxel_workers;
      const PointCloud terrain =
          voxelize_terrain_2d(world, voxelizer_config_for(world, stack.terrain_voxel, VoxelMode::Terrain2D, workers));
      const PointCloud obstacles =
          voxelize_obstacles_3d(world, voxelizer_config_for(world, stack.obstacle_voxel, VoxelMode::Obstacle3D, workers));
      save_cloud(terrain, vox_terrain);
      save_cloud(obstacles, vox_obstacles);
      std::cout << Json{{"terrain_points", terrain.size()}, {"obstacle_points", obstacles.size()}}.dump() << "\n";
    } else if (*tta) {
      const CostMap map = build_cost_map(load_cloud(tta_terrain), load_cloud(tta_obstacles), stack.tta);
      save_cost_map(map, stack.tta, tta_out);
      std::cout << Json{{"nx", map.geometry().nx}, {"ny", map.geometry().ny}}.dump() << "\n";
    } else if (*plan) {
      const CostMap map = load_cost_map(plan_map);
      const auto s = parse_list(plan_start, 3, "--start");
      const auto g = parse_list(plan_goal, 2, "--goal");
      const auto v = parse_list(plan_velocity, 2, "--velocity");
      const PlanRequest req{{s[0], s[1], s[2]}, Vec2(v[0], v[1]), Vec2(g[0], g[1]), stack.curves.t_e};
      const LatticePlan result = plan_lattice(req, map, stack.curves.lattice(), stack.trajopt, stack.normalization);
      write_text(plan_out, to_json(result).dump(2) + "\n");
    } else if (*sim) {
      const EpisodeConfig ep = episode_from_json(section("episode"));
      const EpisodeResult r = simulate(stack, ep);
      if (!sim_world.empty()) save_world(r.world, sim_world);
      if (!sim_trace.empty()) io::write_file(sim_trace, trace_to_jsonl(r.trace));
      write_text(sim_metrics, to_json(r.metrics).dump(2) + "\n");
    } else if (*ds) {
      const DatasetConfig dc = dataset_from_json(section("dataset"));
      const DatasetSummary summary = build_dataset(stack, dc, have_seed ? seed : stack.worldgen.seed, ds_out);
      std::cout << Json{{"samples", summary.samples}, {"skipped", summary.skipped}, {"frames", summary.frames}}.dump() << "\n";
    } else if (*mpc) {
      write_text(mpc_out, eval_mpc_csv(stack.mpc, mpc_duration, mpc_which));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
