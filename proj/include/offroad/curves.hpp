#pragma once

// Cubic Hermite trajectories, the primitive anchor lattice, end-state
// decoding and output normalization.

#include "offroad/common.hpp"
#include "offroad/json_util.hpp"

#include <algorithm>
#include <array>
#include <vector>

namespace offroad {

/// Planar trajectory fixed by its boundary positions and velocities.
///
/// With tau = t / t_e in [0, 1] the position is P * H * [1, tau, tau^2, tau^3]^T
/// where P = [p_s, v_s * t_e, v_e * t_e, p_e] and H is kHermiteBasis.
struct HermiteTrajectory {
  Vec2 p_s = Vec2::Zero();
  Vec2 v_s = Vec2::Zero();
  Vec2 v_e = Vec2::Zero();
  Vec2 p_e = Vec2::Zero();
  double t_e = 1.0;
};

// Columns multiply [1, tau, tau^2, tau^3]; rows pair with the control points
// p_s, v_s t_e, v_e t_e, p_e.
inline constexpr std::array<std::array<double, 4>, 4> kHermiteBasis = {{
    {1.0, 0.0, -3.0, 2.0},
    {0.0, 1.0, -2.0, 1.0},
    {0.0, 0.0, -1.0, 1.0},
    {0.0, 0.0, 3.0, -2.0},
}};

/// Per-control-point weights at a normalized time. `position[r]` is row r of
/// H*T and `rate[r]` is row r of H*dT/dtau.
struct HermiteWeights {
  std::array<double, 4> position;
  std::array<double, 4> rate;
};

inline HermiteWeights hermite_weights(double tau) {
  const std::array<double, 4> t = {1.0, tau, tau * tau, tau * tau * tau};
  const std::array<double, 4> dt = {0.0, 1.0, 2.0 * tau, 3.0 * tau * tau};
  HermiteWeights w{};
  for (std::size_t r = 0; r < 4; ++r) {
    double p = 0.0, d = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
      p += kHermiteBasis[r][c] * t[c];
      d += kHermiteBasis[r][c] * dt[c];
    }
    w.position[r] = p;
    w.rate[r] = d;
  }
  return w;
}

struct TrajectorySample {
  Vec2 position;
  Vec2 velocity;
};

inline void validate(const HermiteTrajectory& traj) {
  if (!(traj.t_e > 0.0) || !std::isfinite(traj.t_e)) throw DomainError("trajectory execution time must be positive");
}

/// Position and velocity at time t in [0, t_e]. Boundary values are
/// reproduced bit-exactly: the basis weights at tau = 0 and tau = 1 are exact
/// zeros and ones, and the t_e factors of the velocity columns cancel
/// symbolically rather than numerically.
inline TrajectorySample eval(const HermiteTrajectory& traj, double t) {
  validate(traj);
  if (!(t >= 0.0 && t <= traj.t_e)) throw DomainError("trajectory time " + std::to_string(t) + " outside [0, t_e]");
  const double tau = t / traj.t_e;
  const HermiteWeights w = hermite_weights(tau);
  TrajectorySample s;
  s.position = traj.p_s * w.position[0] + (traj.v_s * traj.t_e) * w.position[1] +
               (traj.v_e * traj.t_e) * w.position[2] + traj.p_e * w.position[3];
  s.velocity = traj.p_s * (w.rate[0] / traj.t_e) + traj.v_s * w.rate[1] + traj.v_e * w.rate[2] +
               traj.p_e * (w.rate[3] / traj.t_e);
  return s;
}

// Same as eval() but clamps t into [0, t_e].
inline TrajectorySample eval_clamped(const HermiteTrajectory& traj, double t) {
  return eval(traj, std::clamp(t, 0.0, traj.t_e));
}

inline Json to_json(const HermiteTrajectory& traj) {
  return Json{{"p_s", to_json_vec(traj.p_s)},
              {"v_s", to_json_vec(traj.v_s)},
              {"v_e", to_json_vec(traj.v_e)},
              {"p_e", to_json_vec(traj.p_e)},
              {"t_e", traj.t_e}};
}

inline HermiteTrajectory trajectory_from_json(const Json& j) {
  HermiteTrajectory t;
  t.p_s = vec2_from_json(require(j, "p_s"), "p_s");
  t.v_s = vec2_from_json(require(j, "v_s"), "v_s");
  t.v_e = vec2_from_json(require(j, "v_e"), "v_e");
  t.p_e = vec2_from_json(require(j, "p_e"), "p_e");
  t.t_e = require_number(j, "t_e");
  validate(t);
  return t;
}

// ---------------------------------------------------------------------------
// Anchor lattice

/// Anchors r * (cos theta_i, sin theta_i) in the body frame, one per
/// equal-width angular cell of the horizontal field of view.
struct PrimitiveLattice {
  int m_theta = 0;
  double fov_h = 0.0;
  double radius = 0.0;
  std::vector<double> angles;

  double cell_width() const { return fov_h / m_theta; }
  double cell_min(int i) const { return angles.at(static_cast<std::size_t>(i)) - 0.5 * cell_width(); }
  double cell_max(int i) const { return angles.at(static_cast<std::size_t>(i)) + 0.5 * cell_width(); }

  Vec2 anchor(int i) const {
    const double th = angles.at(static_cast<std::size_t>(i));
    return {radius * std::cos(th), radius * std::sin(th)};
  }

  // Cell index whose [min, max) range contains the body-frame bearing, or -1.
  int cell_of_bearing(double bearing) const {
    const double rel = (bearing + 0.5 * fov_h) / cell_width();
    if (rel < 0.0 || rel >= m_theta) return -1;
    return static_cast<int>(std::floor(rel));
  }
};

inline PrimitiveLattice build_lattice(int m_theta, double fov_h, double radius) {
  if (m_theta < 1) throw ConfigError("lattice needs at least one anchor");
  if (!(fov_h > 0.0 && fov_h < kPi)) throw ConfigError("horizontal field of view must lie in (0, pi)");
  if (!(radius > 0.0)) throw ConfigError("lattice radius must be positive");
  PrimitiveLattice lat{m_theta, fov_h, radius, {}};
  const double width = fov_h / m_theta;
  lat.angles.reserve(static_cast<std::size_t>(m_theta));
  // (i + 0.5 - m/2) is exact and antisymmetric in i, so mirrored anchors get
  // exactly negated angles.
  for (int i = 0; i < m_theta; ++i) lat.angles.push_back((i + 0.5 - 0.5 * m_theta) * width);
  return lat;
}

/// Network-style output for one anchor: polar offset, end velocity, cost.
struct EndStateOffset {
  double p_n = 0.0;
  double p_theta = 0.0;
  Vec2 v_e = Vec2::Zero();
  double c = 0.0;
};

/// Body-frame end position p_n * (cos(theta_i + p_theta), sin(theta_i + p_theta)).
inline Vec2 decode_end_state(const PrimitiveLattice& lattice, int i, const EndStateOffset& offset) {
  if (i < 0 || i >= lattice.m_theta) throw DomainError("anchor index " + std::to_string(i) + " out of range");
  const double th = lattice.angles[static_cast<std::size_t>(i)] + offset.p_theta;
  return {offset.p_n * std::cos(th), offset.p_n * std::sin(th)};
}

/// Inverse of decode_end_state for a body-frame end position.
inline EndStateOffset encode_end_state(const PrimitiveLattice& lattice, int i, const Vec2& p_e, const Vec2& v_e,
                                       double cost) {
  if (i < 0 || i >= lattice.m_theta) throw DomainError("anchor index " + std::to_string(i) + " out of range");
  EndStateOffset o;
  o.p_n = p_e.norm();
  o.p_theta = o.p_n > 0.0 ? wrap_angle(std::atan2(p_e.y(), p_e.x()) - lattice.angles[static_cast<std::size_t>(i)]) : 0.0;
  o.v_e = v_e;
  o.c = cost;
  return o;
}

// ---------------------------------------------------------------------------
// Normalization

struct NormalizationConfig {
  double v_max = 2.0;
  double g_max = 10.0;
  double p_n_max = 8.0;
  double p_theta_max = deg2rad(8.0);
  double c_max = 20.0;

  void validate() const {
    if (!(v_max > 0 && g_max > 0 && p_n_max > 0 && p_theta_max > 0 && c_max > 0))
      throw ConfigError("normalization bounds must be strictly positive");
  }
};

inline Json to_json(const NormalizationConfig& c) {
  return Json{{"v_max", c.v_max},
              {"g_max", c.g_max},
              {"p_n_max", c.p_n_max},
              {"p_theta_max_deg", rad2deg(c.p_theta_max)},
              {"c_max", c.c_max}};
}

inline NormalizationConfig normalization_from_json(const Json& j) {
  NormalizationConfig c;
  read_optional(j, "v_max", c.v_max);
  read_optional(j, "g_max", c.g_max);
  read_optional(j, "p_n_max", c.p_n_max);
  if (j.is_object() && j.contains("p_theta_max_deg")) c.p_theta_max = deg2rad(j.at("p_theta_max_deg").get<double>());
  read_optional(j, "c_max", c.c_max);
  c.validate();
  return c;
}

/// s = [v_s / v_max, g / g_max]; entries clamped to [-1, 1].
struct NormalizedState {
  std::array<double, 4> s{};
  bool clamped = false;
};

/// y = [p_n / p_n_max, p_theta / p_theta_max, v_e / v_max, c / c_max]; p_n and
/// c clamped to [0, 1], the others to [-1, 1].
struct NormalizedOutput {
  std::array<double, 5> y{};
  bool clamped = false;
};

namespace detail {
inline double clamp_flag(double v, double lo, double hi, bool& flag) {
  if (v < lo) {
    flag = true;
    return lo;
  }
  if (v > hi) {
    flag = true;
    return hi;
  }
  return v;
}
}  // namespace detail

inline NormalizedState normalize_state(const Vec2& v_s, const Vec2& goal, const NormalizationConfig& cfg) {
  NormalizedState n;
  n.s[0] = detail::clamp_flag(v_s.x() / cfg.v_max, -1.0, 1.0, n.clamped);
  n.s[1] = detail::clamp_flag(v_s.y() / cfg.v_max, -1.0, 1.0, n.clamped);
  n.s[2] = detail::clamp_flag(goal.x() / cfg.g_max, -1.0, 1.0, n.clamped);
  n.s[3] = detail::clamp_flag(goal.y() / cfg.g_max, -1.0, 1.0, n.clamped);
  return n;
}

struct StateVector {
  Vec2 v_s;
  Vec2 goal;
};

inline StateVector denormalize_state(const std::array<double, 4>& s, const NormalizationConfig& cfg) {
  return {Vec2(s[0] * cfg.v_max, s[1] * cfg.v_max), Vec2(s[2] * cfg.g_max, s[3] * cfg.g_max)};
}

inline NormalizedOutput normalize_output(const EndStateOffset& o, const NormalizationConfig& cfg) {
  NormalizedOutput n;
  n.y[0] = detail::clamp_flag(o.p_n / cfg.p_n_max, 0.0, 1.0, n.clamped);
  n.y[1] = detail::clamp_flag(o.p_theta / cfg.p_theta_max, -1.0, 1.0, n.clamped);
  n.y[2] = detail::clamp_flag(o.v_e.x() / cfg.v_max, -1.0, 1.0, n.clamped);
  n.y[3] = detail::clamp_flag(o.v_e.y() / cfg.v_max, -1.0, 1.0, n.clamped);
  n.y[4] = detail::clamp_flag(o.c / cfg.c_max, 0.0, 1.0, n.clamped);
  return n;
}

inline EndStateOffset denormalize_output(const std::array<double, 5>& y, const NormalizationConfig& cfg) {
  EndStateOffset o;
  o.p_n = y[0] * cfg.p_n_max;
  o.p_theta = y[1] * cfg.p_theta_max;
  o.v_e = Vec2(y[2] * cfg.v_max, y[3] * cfg.v_max);
  o.c = y[4] * cfg.c_max;
  return o;
}

// ---------------------------------------------------------------------------

/// Lattice geometry and trajectory timing.
struct CurvesConfig {
  int m_theta = 5;
  double fov_h = deg2rad(80.0);
  double radius = 6.0;
  double t_e = 6.0;

  PrimitiveLattice lattice() const { return build_lattice(m_theta, fov_h, radius); }
};

inline Json to_json(const CurvesConfig& c) {
  return Json{{"m_theta", c.m_theta}, {"fov_h_deg", rad2deg(c.fov_h)}, {"radius", c.radius}, {"t_e", c.t_e}};
}

inline CurvesConfig curves_from_json(const Json& j) {
  CurvesConfig c;
  read_optional(j, "m_theta", c.m_theta);
  if (j.is_object() && j.contains("fov_h_deg")) c.fov_h = deg2rad(j.at("fov_h_deg").get<double>());
  read_optional(j, "radius", c.radius);
  read_optional(j, "t_e", c.t_e);
  if (!(c.t_e > 0)) throw ConfigError("t_e must be positive");
  (void)c.lattice();
  return c;
}

}  // namespace offroad
