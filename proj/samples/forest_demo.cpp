// Builds a small forest, plans one lattice from the middle of it and prints
// the per-anchor results, then drives a short episode to a goal.

#include "offroad/offroad.hpp"

#include <cstdio>

int main() {
  using namespace offroad;
  StackConfig stack;
  stack.world_length = 40.0;
  stack.world_width = 40.0;
  stack.worldgen.seed = 11;

  const World world = generate_world(stack.worldgen, stack.world_length, stack.world_width);
  const CostMap map = cost_map_for_world(world, stack);
  std::printf("world: %zu trees, cost map %d x %d\n", world.trees().size(), map.geometry().nx, map.geometry().ny);

  const PrimitiveLattice lattice = stack.curves.lattice();
  const PlanRequest req{{10.0, 20.0, 0.0}, Vec2(1.0, 0.0), Vec2(20.0, 24.0), stack.curves.t_e};
  const LatticePlan plan = plan_lattice(req, map, lattice, stack.trajopt, stack.normalization);
  for (const AnchorPlan& a : plan.anchors)
    std::printf("anchor %d  theta %+6.1f deg  p_e (%5.2f, %+5.2f)  J %7.3f  %s%s\n", a.index, rad2deg(a.theta),
                a.p_e_body.x(), a.p_e_body.y(), a.raw_cost, a.feasible ? "feasible" : "infeasible",
                a.index == plan.best ? "  <- best" : "");

  EpisodeConfig ep;
  ep.start = {5.0, 20.0, 0.0};
  ep.goal = Vec2(35.0, 20.0);
  const World cleared = without_trees_near(world, std::array<Vec2, 2>{ep.start.position(), ep.goal}, ep.spawn_clear_radius);
  const EpisodeTrace trace = run_episode(cleared, cost_map_for_world(cleared, stack), stack, ep);
  const Metrics m = compute_metrics(trace, cleared);
  std::printf("episode: %s after %.1f s, length %.1f m, min clearance %.2f m\n", m.termination.c_str(), m.duration,
              m.length, m.safety_min);
  return 0;
}
