#pragma once

// Brute-force references shared by the unit tests and the acceptance run.

#include "offroad/sensors.hpp"
#include "offroad/trajopt.hpp"

#include <limits>

namespace offroad::oracle {

struct GridOptimum {
  Vec2 p_e = Vec2::Zero();
  Vec2 v_e = Vec2::Zero();
  double value = std::numeric_limits<double>::infinity();
};

// Best v_e for a fixed p_e: start from the minimizer of the velocity term
// alone (an isotropic quadratic, so its ball projection is exact), then
// projected-gradient steps on v_e with backtracking.
inline std::pair<Vec2, double> best_velocity(const Vec2& p_e, const ObjectiveContext& ctx, double v_max, int steps) {
  // v(t_n) = a_n + b_n v_e with scalar b_n.
  Vec2 num = Vec2::Zero();
  double den = 0.0;
  for (int n = 0; n <= ctx.n_t; ++n) {
    const double tau = static_cast<double>(n) / ctx.n_t;
    const HermiteWeights w = hermite_weights(tau);
    const Vec2 a = ctx.p_s * (w.rate[0] / ctx.t_e) + ctx.v_s * w.rate[1] + p_e * (w.rate[3] / ctx.t_e);
    num += w.rate[2] * a;
    den += w.rate[2] * w.rate[2];
  }
  Vec2 v = project_to_ball(-num / den, v_max);
  ObjectiveValue f = objective(p_e, v, ctx);
  double step = 0.5;
  for (int k = 0; k < steps; ++k) {
    const Vec2 g = f.gradient.tail<2>();
    bool moved = false;
    for (int bt = 0; bt < 20 && !moved; ++bt, step *= 0.5) {
      const Vec2 cand = project_to_ball(v - step * g, v_max);
      const ObjectiveValue fc = objective(p_e, cand, ctx);
      if (fc.value < f.value) {
        v = cand;
        f = fc;
        moved = true;
      }
    }
    if (!moved) break;
    step *= 4.0;
  }
  return {v, f.value};
}

// Exhaustive search over an n x n grid of end positions spanning the cone's
// bounding box (positions outside the cone or leaving the map are skipped).
inline GridOptimum grid_search(const ObjectiveContext& ctx_in, const ConeRegion& cone, double v_max, int n = 200,
                               int velocity_steps = 8) {
  ObjectiveContext ctx = ctx_in;
  ctx.policy = MarginPolicy::Strict;
  const Vec2 side(-cone.axis.y(), cone.axis.x());
  const double half_width = cone.height * std::tan(cone.theta_half);
  GridOptimum best;
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      const double a = cone.height * (ix + 0.5) / n;
      const double b = -half_width + 2.0 * half_width * (iy + 0.5) / n;
      const Vec2 p = cone.apex + a * cone.axis + b * side;
      if (cone_violation(cone.apex, p, cone).max() > 0.0) continue;
      try {
        const auto [v, value] = best_velocity(p, ctx, v_max, velocity_steps);
        if (value < best.value) best = {p, v, value};
      } catch (const InfeasibleError&) {
      }
    }
  return best;
}

// Range along a pixel ray by fine uniform marching against an inside-solid
// predicate (below terrain or inside a trunk), refined by bisection. No
// closed-form intersection is used.
inline std::optional<double> march_depth(const World& w, const CameraPose& pose, const CameraIntrinsics& intr, int col,
                                         int row, double step = 0.002) {
  const Vec3 o = pose.origin();
  const Vec3 d = pixel_ray(intr, pose, col, row);
  auto solid = [&](double s) {
    const Vec3 p = o + s * d;
    if (!w.contains(p.x(), p.y())) return false;
    const double ground = w.height_at(p.x(), p.y());
    if (p.z() <= ground) return true;
    for (const Tree& t : w.trees()) {
      const double g = w.height_at(t.center.x(), t.center.y());
      if ((p.head<2>() - t.center).norm() <= t.radius && p.z() >= g && p.z() <= g + t.height) return true;
    }
    return false;
  };
  for (double s = step; s <= intr.max_range + step; s += step) {
    const Vec3 p = o + s * d;
    if (!w.contains(p.x(), p.y())) return std::nullopt;
    if (solid(s)) {
      double lo = s - step, hi = s;
      for (int k = 0; k < 80; ++k) {
        const double mid = 0.5 * (lo + hi);
        (solid(mid) ? hi : lo) = mid;
      }
      if (hi > intr.max_range) return std::nullopt;
      return hi;
    }
  }
  return std::nullopt;
}

}  // namespace offroad::oracle
