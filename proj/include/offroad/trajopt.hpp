#pragma once

// Expert trajectory generation: per-anchor cone-constrained minimization of
// map cost + control effort + terminal error, lattice-level selection and
// the normalized labels derived from it.

#include "offroad/common.hpp"
#include "offroad/curves.hpp"
#include "offroad/json_util.hpp"
#include "offroad/parallel.hpp"
#include "offroad/tta.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace offroad {

using Vec4 = Eigen::Vector4d;

/// Circular sector with apex p_s, axis n and half-angle theta_half, cut at
/// axial depth `height`.
struct ConeRegion {
  Vec2 apex = Vec2::Zero();
  Vec2 axis = Vec2::UnitX();
  double theta_half = 0.0;
  double height = 0.0;
  double theta_center = 0.0;
  double theta_min = 0.0;
  double theta_max = 0.0;

  void validate() const {
    if (std::abs(axis.norm() - 1.0) > 1e-9) throw DomainError("cone axis must be a unit vector");
    if (!(theta_half > 0.0 && theta_half < kPi / 2)) throw DomainError("cone half-angle must lie in (0, pi/2)");
    if (!(height > 0.0)) throw DomainError("cone height must be positive");
  }
};

/// Cone from world-frame bounding angles.
inline ConeRegion make_cone(const Vec2& apex, double theta_min, double theta_max, double height) {
  ConeRegion c;
  c.apex = apex;
  c.theta_min = theta_min;
  c.theta_max = theta_max;
  c.theta_center = 0.5 * (theta_min + theta_max);
  c.theta_half = 0.5 * (theta_max - theta_min);
  c.axis = unit(c.theta_center);
  c.height = height;
  c.validate();
  return c;
}

struct ConeResiduals {
  double g1 = 0.0;  // -dP.n
  double g2 = 0.0;  // dP.n - height
  double g3 = 0.0;  // cos^2(theta_half)|dP|^2 - (dP.n)^2

  double max() const { return std::max({g1, g2, g3}); }
};

inline ConeResiduals cone_violation(const Vec2& p_s, const Vec2& p_e, const ConeRegion& cone) {
  const Vec2 d = p_e - p_s;
  const double a = d.dot(cone.axis);
  const double c = std::cos(cone.theta_half);
  return {-a, a - cone.height, c * c * d.squaredNorm() - a * a};
}

namespace detail {

inline Vec2 project_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return a + t * ab;
}

}  // namespace detail

/// Euclidean projection onto the cone shrunk by `inset` along the axis, so
/// that g1 and g2 hold strictly.
inline Vec2 project_to_cone(const Vec2& p, const ConeRegion& cone, double inset = 1e-7) {
  const Vec2 side(-cone.axis.y(), cone.axis.x());
  const Vec2 d = p - cone.apex;
  const double a = d.dot(cone.axis), b = d.dot(side);
  const double t = std::tan(cone.theta_half);
  const double lo = inset, hi = cone.height - inset;
  if (a >= lo && a <= hi && std::abs(b) <= a * t) return p;
  // Convex quadrilateral in (a, b) coordinates; nearest point lies on an edge.
  const std::array<Vec2, 4> v = {Vec2(lo, -lo * t), Vec2(hi, -hi * t), Vec2(hi, hi * t), Vec2(lo, lo * t)};
  const Vec2 q(a, b);
  Vec2 best = v[0];
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < 4; ++k) {
    const Vec2 c = detail::project_segment(q, v[k], v[(k + 1) % 4]);
    const double dist = (c - q).squaredNorm();
    if (dist < best_d) {
      best_d = dist;
      best = c;
    }
  }
  // Keep the lateral coordinate inside the sector despite rounding.
  best.y() = std::clamp(best.y(), -best.x() * t, best.x() * t);
  return cone.apex + best.x() * cone.axis + best.y() * side;
}

inline Vec2 project_to_ball(const Vec2& v, double radius) {
  const double n = v.norm();
  return n > radius ? Vec2(v * (radius / n)) : v;
}

// ---------------------------------------------------------------------------
// Objective

enum class MarginPolicy {
  Strict,  // leaving the map margin throws InfeasibleError
  Clamp,   // value at the clamped point plus penalty * squared excursion
};

struct ObjectiveContext {
  const CostMap* map = nullptr;
  Vec2 goal = Vec2::Zero();
  Vec2 p_s = Vec2::Zero();
  Vec2 v_s = Vec2::Zero();
  double t_e = 1.0;
  int n_t = 20;
  MarginPolicy policy = MarginPolicy::Strict;
  double margin_penalty = 10.0;

  double dt() const { return t_e / n_t; }

  void validate() const {
    if (!map) throw DomainError("objective context has no cost map");
    if (n_t < 4) throw DomainError("objective needs at least 4 time steps");
    if (!(t_e > 0.0)) throw DomainError("t_e must be positive");
    if (!goal.allFinite() || !p_s.allFinite() || !v_s.allFinite()) throw DomainError("objective inputs must be finite");
  }
};

struct ObjectiveValue {
  double value = 0.0;
  Vec4 gradient = Vec4::Zero();  // d/d(p_e.x, p_e.y, v_e.x, v_e.y)
};

namespace detail {

inline CostSample map_sample(const ObjectiveContext& ctx, const Vec2& p, double t) {
  if (ctx.map->inside_margin(p)) return ctx.map->sample(p);
  if (ctx.policy == MarginPolicy::Strict)
    throw InfeasibleError("trajectory leaves the cost map margin at t = " + std::to_string(t), t);
  const Vec2 q = ctx.map->clamp_to_margin(p);
  CostSample s = ctx.map->sample(q);
  const Vec2 excess = p - q;
  // The clamped coordinate no longer depends on p.
  if (excess.x() != 0.0) s.gradient.x() = 0.0;
  if (excess.y() != 0.0) s.gradient.y() = 0.0;
  s.value += ctx.margin_penalty * excess.squaredNorm();
  s.gradient += 2.0 * ctx.margin_penalty * excess;
  return s;
}

}  // namespace detail

/// J = sum_{n=0..N_t} [C(p(t_n)) + |v(t_n)|^2] dT + |p_e - g|^2 and its
/// gradient with respect to (p_e, v_e).
inline ObjectiveValue objective(const Vec2& p_e, const Vec2& v_e, const ObjectiveContext& ctx) {
  ctx.validate();
  const double dt = ctx.dt();
  ObjectiveValue out;
  Vec2 g_pe = Vec2::Zero(), g_ve = Vec2::Zero();
  for (int n = 0; n <= ctx.n_t; ++n) {
    const double tau = static_cast<double>(n) / ctx.n_t;
    const HermiteWeights w = hermite_weights(tau);
    const Vec2 p = ctx.p_s * w.position[0] + (ctx.v_s * ctx.t_e) * w.position[1] + (v_e * ctx.t_e) * w.position[2] +
                   p_e * w.position[3];
    const Vec2 v = ctx.p_s * (w.rate[0] / ctx.t_e) + ctx.v_s * w.rate[1] + v_e * w.rate[2] + p_e * (w.rate[3] / ctx.t_e);
    const CostSample c = detail::map_sample(ctx, p, tau * ctx.t_e);
    out.value += (c.value + v.squaredNorm()) * dt;
    g_pe += (c.gradient * w.position[3] + 2.0 * v * (w.rate[3] / ctx.t_e)) * dt;
    g_ve += (c.gradient * (ctx.t_e * w.position[2]) + 2.0 * v * w.rate[2]) * dt;
  }
  const Vec2 e = p_e - ctx.goal;
  out.value += e.squaredNorm();
  g_pe += 2.0 * e;
  out.gradient << g_pe, g_ve;
  return out;
}

// ---------------------------------------------------------------------------
// Per-anchor solver

struct TrajoptConfig {
  int n_t = 20;
  int max_iterations = 200;
  double kkt_tolerance = 1e-4;
  double margin_penalty = 10.0;
  int workers = 1;

  void validate() const {
    if (n_t < 4) throw ConfigError("n_t must be at least 4");
    if (max_iterations < 1) throw ConfigError("iteration budget must be positive");
    if (!(kkt_tolerance > 0) || !(margin_penalty > 0)) throw ConfigError("tolerances must be positive");
  }
};

inline Json to_json(const TrajoptConfig& c) {
  return Json{{"n_t", c.n_t},
              {"max_iterations", c.max_iterations},
              {"kkt_tolerance", c.kkt_tolerance},
              {"margin_penalty", c.margin_penalty},
              {"workers", c.workers}};
}

inline TrajoptConfig trajopt_from_json(const Json& j) {
  TrajoptConfig c;
  read_optional(j, "n_t", c.n_t);
  read_optional(j, "max_iterations", c.max_iterations);
  read_optional(j, "kkt_tolerance", c.kkt_tolerance);
  read_optional(j, "margin_penalty", c.margin_penalty);
  read_optional(j, "workers", c.workers);
  c.validate();
  return c;
}

struct AnchorSolution {
  Vec2 p_e = Vec2::Zero();
  Vec2 v_e = Vec2::Zero();
  double cost = std::numeric_limits<double>::infinity();
  bool feasible = false;
  bool converged = false;
  int iterations = 0;
  double kkt = std::numeric_limits<double>::infinity();
  std::vector<double> history;  // objective per accepted iterate
};

/// Spectral projected gradient (Barzilai-Borwein steps, Armijo backtracking
/// along the projected direction) over the cone x velocity-ball product set.
/// Every iterate is feasible by construction. During the search the margin is
/// handled by the clamp policy; the final iterate must keep every sample
/// inside the margin, otherwise the anchor is infeasible.
inline AnchorSolution optimize_anchor(const ObjectiveContext& ctx_in, const ConeRegion& cone, double v_max,
                                      const Vec2& p_init, const Vec2& v_init, const TrajoptConfig& cfg = {}) {
  cone.validate();
  cfg.validate();
  if (!(v_max > 0)) throw DomainError("v_max must be positive");
  ObjectiveContext ctx = ctx_in;
  ctx.policy = MarginPolicy::Clamp;
  ctx.margin_penalty = cfg.margin_penalty;

  auto project = [&](const Vec4& x) {
    Vec4 y;
    y << project_to_cone(x.head<2>(), cone), project_to_ball(x.tail<2>(), v_max);
    return y;
  };
  auto eval = [&](const Vec4& x) { return objective(x.head<2>(), x.tail<2>(), ctx); };

  AnchorSolution sol;
  Vec4 x;
  x << p_init, v_init;
  x = project(x);
  ObjectiveValue f = eval(x);
  if (!std::isfinite(f.value)) return sol;
  sol.history.push_back(f.value);
  double step = 1.0 / std::max(1.0, f.gradient.norm());
  int it = 0;
  for (; it < cfg.max_iterations; ++it) {
    sol.kkt = (x - project(x - f.gradient)).norm();
    if (sol.kkt <= cfg.kkt_tolerance) {
      sol.converged = true;
      break;
    }
    const Vec4 d = project(x - step * f.gradient) - x;
    const double slope = f.gradient.dot(d);
    if (!(slope < 0.0)) {
      step = 1.0;
      continue;
    }
    double lambda = 1.0;
    Vec4 x_new;
    ObjectiveValue f_new;
    bool accepted = false;
    for (int bt = 0; bt < 40; ++bt) {
      x_new = x + lambda * d;
      f_new = eval(x_new);
      if (std::isfinite(f_new.value) && f_new.value <= f.value + 1e-4 * lambda * slope) {
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) break;
    // Convex combination of feasible points; re-project only to scrub rounding.
    x_new = project(x_new);
    f_new = eval(x_new);
    const Vec4 s = x_new - x, y = f_new.gradient - f.gradient;
    const double sy = s.dot(y);
    step = sy > 1e-16 ? std::clamp(s.squaredNorm() / sy, 1e-8, 1e8) : std::clamp(2.0 * step, 1e-8, 1e8);
    x = x_new;
    f = f_new;
    sol.history.push_back(f.value);
  }
  if (!sol.converged) sol.kkt = (x - project(x - f.gradient)).norm();
  if (!sol.converged && sol.kkt <= cfg.kkt_tolerance) sol.converged = true;
  sol.iterations = it;
  sol.p_e = x.head<2>();
  sol.v_e = x.tail<2>();

  ObjectiveContext strict = ctx_in;
  strict.policy = MarginPolicy::Strict;
  try {
    sol.cost = objective(sol.p_e, sol.v_e, strict).value;
    sol.feasible = std::isfinite(sol.cost);
  } catch (const InfeasibleError&) {
    sol.feasible = false;
    sol.cost = std::numeric_limits<double>::infinity();
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Lattice planning

struct PlanRequest {
  Pose2 pose;
  Vec2 v_s = Vec2::Zero();   // world frame
  Vec2 goal = Vec2::Zero();  // world frame
  double t_e = 6.0;
};

struct AnchorPlan {
  int index = 0;
  double theta = 0.0;          // body-frame anchor bearing
  Vec2 p_e_body = Vec2::Zero();
  Vec2 v_e_body = Vec2::Zero();
  EndStateOffset offset;       // re-encoded against the anchor; offset.c is the label cost
  double raw_cost = std::numeric_limits<double>::infinity();
  bool feasible = false;
  bool converged = false;
  int iterations = 0;
};

struct LatticePlan {
  Pose2 pose;
  double t_e = 0.0;
  int best = -1;
  std::vector<AnchorPlan> anchors;
  HermiteTrajectory trajectory;  // world frame, best anchor
};

/// Index of the feasible anchor with the lowest raw cost, or -1.
inline int select_best(const std::vector<AnchorPlan>& anchors) {
  int best = -1;
  for (const AnchorPlan& a : anchors)
    if (a.feasible && (best < 0 || a.raw_cost < anchors[static_cast<std::size_t>(best)].raw_cost)) best = a.index;
  return best;
}

/// Cone of anchor i in world coordinates.
inline ConeRegion anchor_cone(const PrimitiveLattice& lattice, int i, const Pose2& pose, double height) {
  return make_cone(pose.position(), pose.yaw + lattice.cell_min(i), pose.yaw + lattice.cell_max(i), height);
}

inline LatticePlan plan_lattice(const PlanRequest& req, const CostMap& map, const PrimitiveLattice& lattice,
                                const TrajoptConfig& cfg, const NormalizationConfig& norm) {
  cfg.validate();
  norm.validate();
  if (!std::isfinite(req.pose.x) || !std::isfinite(req.pose.y) || !std::isfinite(req.pose.yaw))
    throw DomainError("plan pose must be finite");
  LatticePlan plan;
  plan.pose = req.pose;
  plan.t_e = req.t_e;
  plan.anchors.resize(static_cast<std::size_t>(lattice.m_theta));

  ObjectiveContext ctx;
  ctx.map = &map;
  ctx.goal = req.goal;
  ctx.p_s = req.pose.position();
  ctx.v_s = req.v_s;
  ctx.t_e = req.t_e;
  ctx.n_t = cfg.n_t;

  parallel_chunks(plan.anchors.size(), resolve_workers(cfg.workers), [&](unsigned, std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) {
      const int i = static_cast<int>(k);
      const ConeRegion cone = anchor_cone(lattice, i, req.pose, norm.p_n_max);
      const Vec2 p0 = req.pose.to_world(lattice.anchor(i));
      const Vec2 v0 = std::min(req.v_s.norm(), norm.v_max) * cone.axis;
      const AnchorSolution s = optimize_anchor(ctx, cone, norm.v_max, p0, v0, cfg);
      AnchorPlan& a = plan.anchors[k];
      a.index = i;
      a.theta = lattice.angles[k];
      a.feasible = s.feasible;
      a.converged = s.converged;
      a.iterations = s.iterations;
      if (s.feasible) {
        a.p_e_body = req.pose.to_body(s.p_e);
        a.v_e_body = req.pose.to_body_direction(s.v_e);
        a.raw_cost = s.cost;
        a.offset = encode_end_state(lattice, i, a.p_e_body, a.v_e_body, std::min(s.cost, norm.c_max));
      } else {
        a.offset = EndStateOffset{0.0, 0.0, Vec2::Zero(), norm.c_max};
      }
    }
  });

  plan.best = select_best(plan.anchors);
  if (plan.best < 0) throw PlannerError("every lattice anchor is infeasible");
  const AnchorPlan& b = plan.anchors[static_cast<std::size_t>(plan.best)];
  plan.trajectory = {req.pose.position(), req.v_s, req.pose.to_world_direction(b.v_e_body), req.pose.to_world(b.p_e_body),
                     req.t_e};
  return plan;
}

/// Normalized label vectors per anchor; infeasible anchors carry zero offsets
/// and the maximum cost.
inline std::vector<NormalizedOutput> make_labels(const LatticePlan& plan, const PrimitiveLattice& lattice,
                                                 const NormalizationConfig& norm) {
  if (static_cast<int>(plan.anchors.size()) != lattice.m_theta) throw DomainError("plan does not match the lattice");
  std::vector<NormalizedOutput> out;
  out.reserve(plan.anchors.size());
  for (const AnchorPlan& a : plan.anchors) {
    if (!a.feasible) {
      out.push_back(normalize_output(EndStateOffset{0.0, 0.0, Vec2::Zero(), norm.c_max}, norm));
      continue;
    }
    const EndStateOffset o =
        encode_end_state(lattice, a.index, a.p_e_body, a.v_e_body, std::min(a.raw_cost, norm.c_max));
    out.push_back(normalize_output(o, norm));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plan JSON. Expert plans carry raw_cost; predictions from a learned model
// carry only the decoded per-anchor outputs and pass the same validator.

inline Json to_json(const LatticePlan& plan) {
  Json anchors = Json::array();
  for (const AnchorPlan& a : plan.anchors) {
    Json j{{"index", a.index},
           {"theta", a.theta},
           {"p_e", to_json_vec(a.p_e_body)},
           {"v_e", to_json_vec(a.v_e_body)},
           {"p_n", a.offset.p_n},
           {"p_theta", a.offset.p_theta},
           {"cost", a.offset.c},
           {"feasible", a.feasible},
           {"converged", a.converged},
           {"iterations", a.iterations}};
    j["raw_cost"] = std::isfinite(a.raw_cost) ? Json(a.raw_cost) : Json(nullptr);
    anchors.push_back(std::move(j));
  }
  return Json{{"pose", {{"x", plan.pose.x}, {"y", plan.pose.y}, {"yaw", plan.pose.yaw}}},
              {"t_e", plan.t_e},
              {"best", plan.best},
              {"anchors", anchors},
              {"trajectory", to_json(plan.trajectory)}};
}

/// Parses and validates a plan document against the lattice. Required per
/// anchor: index, p_n, p_theta, v_e, cost. `p_e` is recomputed from the
/// offsets when absent; `best` defaults to the minimum-cost anchor.
inline LatticePlan plan_from_json(const Json& j, const PrimitiveLattice& lattice) {
  LatticePlan plan;
  const Json& pose = require(j, "pose");
  plan.pose = {require_number(pose, "x"), require_number(pose, "y"), require_number(pose, "yaw")};
  plan.t_e = j.contains("t_e") ? require_number(j, "t_e") : 0.0;
  const Json& anchors = require(j, "anchors");
  if (!anchors.is_array() || static_cast<int>(anchors.size()) != lattice.m_theta)
    throw IoError("plan must list exactly " + std::to_string(lattice.m_theta) + " anchors");
  std::vector<bool> seen(anchors.size(), false);
  plan.anchors.resize(anchors.size());
  for (const Json& aj : anchors) {
    const Json& idx = require(aj, "index");
    if (!idx.is_number_integer()) throw IoError("anchor index must be an integer");
    const int i = idx.get<int>();
    if (i < 0 || i >= lattice.m_theta || seen[static_cast<std::size_t>(i)])
      throw IoError("anchor index " + std::to_string(i) + " invalid or repeated");
    seen[static_cast<std::size_t>(i)] = true;
    AnchorPlan& a = plan.anchors[static_cast<std::size_t>(i)];
    a.index = i;
    a.theta = lattice.angles[static_cast<std::size_t>(i)];
    a.offset.p_n = require_number(aj, "p_n");
    a.offset.p_theta = require_number(aj, "p_theta");
    a.offset.c = require_number(aj, "cost");
    a.v_e_body = vec2_from_json(require(aj, "v_e"), "v_e");
    a.offset.v_e = a.v_e_body;
    if (!(a.offset.p_n >= 0.0) || !std::isfinite(a.offset.p_n) || !std::isfinite(a.offset.p_theta) ||
        !std::isfinite(a.offset.c) || !a.v_e_body.allFinite())
      throw IoError("anchor " + std::to_string(i) + " has non-finite or negative outputs");
    a.p_e_body = aj.contains("p_e") ? vec2_from_json(aj.at("p_e"), "p_e") : decode_end_state(lattice, i, a.offset);
    a.feasible = aj.value("feasible", true);
    a.converged = aj.value("converged", true);
    a.iterations = aj.value("iterations", 0);
    if (aj.contains("raw_cost") && aj.at("raw_cost").is_number()) a.raw_cost = aj.at("raw_cost").get<double>();
  }
  if (j.contains("best") && j.at("best").is_number_integer()) {
    plan.best = j.at("best").get<int>();
    if (plan.best < -1 || plan.best >= lattice.m_theta) throw IoError("best index out of range");
  } else {
    for (const AnchorPlan& a : plan.anchors)
      if (a.feasible && (plan.best < 0 || a.offset.c < plan.anchors[static_cast<std::size_t>(plan.best)].offset.c))
        plan.best = a.index;
  }
  return plan;
}

/// Executable trajectory for a learned prediction: the anchor with the lowest
/// predicted cost, decoded against the current pose.
inline HermiteTrajectory trajectory_from_prediction(const LatticePlan& prediction, const PrimitiveLattice& lattice,
                                                    const Pose2& pose, const Vec2& v_s_world, double t_e) {
  int best = -1;
  for (const AnchorPlan& a : prediction.anchors)
    if (best < 0 || a.offset.c < prediction.anchors[static_cast<std::size_t>(best)].offset.c) best = a.index;
  if (best < 0) throw PlannerError("prediction has no anchors");
  const AnchorPlan& a = prediction.anchors[static_cast<std::size_t>(best)];
  const Vec2 p_e = decode_end_state(lattice, best, a.offset);
  return {pose.position(), v_s_world, pose.to_world_direction(a.v_e_body), pose.to_world(p_e), t_e};
}

}  // namespace offroad
