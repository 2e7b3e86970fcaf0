#pragma once

// Differential-drive trajectory-following MPC solved by box-constrained
// iterative LQR on the Euler-discretized unicycle model.

#include "offroad/common.hpp"
#include "offroad/curves.hpp"
#include "offroad/json_util.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <vector>

namespace offroad {

using Vec3d = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat2 = Eigen::Matrix2d;
using Mat32 = Eigen::Matrix<double, 3, 2>;
using Mat23 = Eigen::Matrix<double, 2, 3>;

struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;  // wrapped to (-pi, pi]

  Vec3d vec() const { return {x, y, theta}; }
  static VehicleState from(const Vec3d& v) { return {v.x(), v.y(), wrap_angle(v.z())}; }
  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

struct ControlInput {
  double v = 0.0;
  double w = 0.0;
  friend bool operator==(const ControlInput&, const ControlInput&) = default;
};

struct MpcConfig {
  int horizon = 20;
  double dt = 0.1;
  Mat3 q = Vec3d(1.0, 1.0, 0.1).asDiagonal();
  Mat2 r = Eigen::Vector2d(0.05, 0.05).asDiagonal();
  double v_min = -0.5;
  double v_max = 2.0;
  double w_max = 1.5;
  int max_iterations = 50;
  double tolerance = 1e-9;  // relative objective decrease that counts as converged

  void validate() const {
    if (horizon < 2) throw ConfigError("MPC horizon must be at least 2");
    if (!(dt > 0)) throw ConfigError("MPC dt must be positive");
    if (!(v_min <= 0 && v_max > 0 && w_max > 0)) throw ConfigError("MPC input box must contain zero");
    Eigen::SelfAdjointEigenSolver<Mat3> eq(q);
    if (eq.eigenvalues().minCoeff() < -1e-12) throw ConfigError("Q must be positive semidefinite");
    Eigen::SelfAdjointEigenSolver<Mat2> er(r);
    if (er.eigenvalues().minCoeff() <= 0) throw ConfigError("R must be positive definite");
    if (max_iterations < 1) throw ConfigError("MPC iteration budget must be positive");
  }

  ControlInput clamp(const ControlInput& u) const {
    return {std::clamp(u.v, v_min, v_max), std::clamp(u.w, -w_max, w_max)};
  }
};

inline Json to_json(const MpcConfig& c) {
  return Json{{"horizon", c.horizon},
              {"dt", c.dt},
              {"q", {c.q(0, 0), c.q(1, 1), c.q(2, 2)}},
              {"r", {c.r(0, 0), c.r(1, 1)}},
              {"v_min", c.v_min},
              {"v_max", c.v_max},
              {"w_max", c.w_max},
              {"max_iterations", c.max_iterations}};
}

inline MpcConfig mpc_from_json(const Json& j) {
  MpcConfig c;
  read_optional(j, "horizon", c.horizon);
  read_optional(j, "dt", c.dt);
  if (j.is_object() && j.contains("q")) {
    const auto q = j.at("q").get<std::vector<double>>();
    if (q.size() != 3) throw ConfigError("q must list 3 diagonal weights");
    c.q = Vec3d(q[0], q[1], q[2]).asDiagonal();
  }
  if (j.is_object() && j.contains("r")) {
    const auto r = j.at("r").get<std::vector<double>>();
    if (r.size() != 2) throw ConfigError("r must list 2 diagonal weights");
    c.r = Eigen::Vector2d(r[0], r[1]).asDiagonal();
  }
  read_optional(j, "v_min", c.v_min);
  read_optional(j, "v_max", c.v_max);
  read_optional(j, "w_max", c.w_max);
  read_optional(j, "max_iterations", c.max_iterations);
  c.validate();
  return c;
}

inline Vec3d dynamics(const VehicleState& x, const ControlInput& u) {
  return {u.v * std::cos(x.theta), u.v * std::sin(x.theta), u.w};
}

/// x_{k+1} = x_k + dt f(x_k, u_k), heading wrapped.
inline VehicleState euler_step(const VehicleState& x, const ControlInput& u, double dt) {
  const Vec3d d = dynamics(x, u);
  return {x.x + dt * d.x(), x.y + dt * d.y(), wrap_angle(x.theta + dt * d.z())};
}

/// Classical RK4 step of the continuous model (plant integration).
inline VehicleState rk4_step(const VehicleState& x, const ControlInput& u, double dt) {
  auto f = [&](const Vec3d& s) { return dynamics(VehicleState{s.x(), s.y(), s.z()}, u); };
  const Vec3d s = x.vec();
  const Vec3d k1 = f(s), k2 = f(s + 0.5 * dt * k1), k3 = f(s + 0.5 * dt * k2), k4 = f(s + dt * k3);
  return VehicleState::from(s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

/// References x_k^r for k = 0..N-1 at t0 + k dt, clamped to [0, t_e]. The
/// heading follows the velocity; near-zero velocity keeps the previous one.
inline std::vector<VehicleState> reference_from_trajectory(const HermiteTrajectory& traj, double t0, const MpcConfig& cfg,
                                                           double initial_heading = 0.0) {
  std::vector<VehicleState> refs;
  refs.reserve(static_cast<std::size_t>(cfg.horizon));
  double heading = initial_heading;
  bool have_heading = false;
  for (int k = 0; k < cfg.horizon; ++k) {
    const TrajectorySample s = eval_clamped(traj, t0 + k * cfg.dt);
    if (s.velocity.norm() >= 1e-6) {
      heading = std::atan2(s.velocity.y(), s.velocity.x());
      have_heading = true;
    } else if (!have_heading) {
      // Look back along the trajectory for the last defined heading.
      const TrajectorySample end = eval(traj, traj.t_e);
      if (end.velocity.norm() >= 1e-6) heading = std::atan2(end.velocity.y(), end.velocity.x());
      else if ((traj.p_e - traj.p_s).norm() > 1e-9) heading = std::atan2(traj.p_e.y() - traj.p_s.y(), traj.p_e.x() - traj.p_s.x());
      have_heading = true;
    }
    refs.push_back({s.position.x(), s.position.y(), wrap_angle(heading)});
  }
  return refs;
}

inline Vec3d state_error(const VehicleState& x, const VehicleState& ref) {
  return {x.x - ref.x, x.y - ref.y, wrap_angle(x.theta - ref.theta)};
}

/// sum_{k=0}^{N-1} e_k^T Q e_k + u_k^T R u_k with e_k = x_k - x_k^r.
inline double mpc_cost(const std::vector<VehicleState>& states, const std::vector<ControlInput>& controls,
                       const std::vector<VehicleState>& refs, const MpcConfig& cfg) {
  double j = 0.0;
  for (int k = 0; k < cfg.horizon; ++k) {
    const Vec3d e = state_error(states[static_cast<std::size_t>(k)], refs[static_cast<std::size_t>(k)]);
    const Eigen::Vector2d u(controls[static_cast<std::size_t>(k)].v, controls[static_cast<std::size_t>(k)].w);
    j += e.dot(cfg.q * e) + u.dot(cfg.r * u);
  }
  return j;
}

inline std::vector<VehicleState> rollout(const VehicleState& x0, const std::vector<ControlInput>& controls, double dt) {
  std::vector<VehicleState> xs;
  xs.reserve(controls.size() + 1);
  xs.push_back(x0);
  for (const ControlInput& u : controls) xs.push_back(euler_step(xs.back(), u, dt));
  return xs;
}

struct MpcSolution {
  std::vector<ControlInput> controls;  // N
  std::vector<VehicleState> states;    // N + 1, states[0] = x_init
  std::vector<double> cost_history;    // accepted objective values, non-increasing
  double cost = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Box-constrained iLQR. The backward pass drops control dimensions that sit
/// on an active bound; the forward pass clamps and accepts a step only when
/// the objective strictly decreases.
inline MpcSolution solve_mpc(const VehicleState& x_init, const std::vector<VehicleState>& refs, const MpcConfig& cfg,
                             const std::vector<ControlInput>& warm_start = {}) {
  cfg.validate();
  const int n = cfg.horizon;
  if (static_cast<int>(refs.size()) < n) throw DomainError("MPC needs at least N reference states");
  std::vector<ControlInput> u(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k)
    if (k < static_cast<int>(warm_start.size())) u[static_cast<std::size_t>(k)] = cfg.clamp(warm_start[static_cast<std::size_t>(k)]);

  MpcSolution sol;
  sol.states = rollout(x_init, u, cfg.dt);
  sol.cost = mpc_cost(sol.states, u, refs, cfg);
  sol.cost_history.push_back(sol.cost);

  std::vector<Eigen::Vector2d> kff(static_cast<std::size_t>(n));
  std::vector<Mat23> kfb(static_cast<std::size_t>(n));
  double mu = 1e-6;
  const Mat3 q2 = 2.0 * cfg.q;
  const Mat2 r2 = 2.0 * cfg.r;
  int it = 0;
  for (; it < cfg.max_iterations; ++it) {
    // Backward pass (no terminal cost: the objective stops at k = N-1).
    Vec3d vx = Vec3d::Zero();
    Mat3 vxx = Mat3::Zero();
    bool ok = true;
    for (int k = n - 1; k >= 0; --k) {
      const auto ks = static_cast<std::size_t>(k);
      const VehicleState& x = sol.states[ks];
      const Vec3d e = state_error(x, refs[ks]);
      const Eigen::Vector2d uk(u[ks].v, u[ks].w);
      Mat3 a = Mat3::Identity();
      a(0, 2) = -cfg.dt * uk(0) * std::sin(x.theta);
      a(1, 2) = cfg.dt * uk(0) * std::cos(x.theta);
      Mat32 b = Mat32::Zero();
      b(0, 0) = cfg.dt * std::cos(x.theta);
      b(1, 0) = cfg.dt * std::sin(x.theta);
      b(2, 1) = cfg.dt;
      const Vec3d qx = q2 * e + a.transpose() * vx;
      const Eigen::Vector2d qu = r2 * uk + b.transpose() * vx;
      const Mat3 qxx = q2 + a.transpose() * vxx * a;
      const Mat2 quu = r2 + b.transpose() * vxx * b + mu * Mat2::Identity();
      const Mat23 qux = b.transpose() * vxx * a;

      // Free dimensions: not pinned at a bound by the unconstrained step.
      std::array<bool, 2> free{true, true};
      const std::array<double, 2> lo{cfg.v_min, -cfg.w_max}, hi{cfg.v_max, cfg.w_max};
      for (int d = 0; d < 2; ++d)
        if ((uk(d) <= lo[d] && qu(d) > 0) || (uk(d) >= hi[d] && qu(d) < 0)) free[static_cast<std::size_t>(d)] = false;
      Eigen::Vector2d kf = Eigen::Vector2d::Zero();
      Mat23 kb = Mat23::Zero();
      if (free[0] && free[1]) {
        Eigen::LLT<Mat2> llt(quu);
        if (llt.info() != Eigen::Success) {
          ok = false;
          break;
        }
        kf = -llt.solve(qu);
        kb = -llt.solve(qux);
      } else {
        for (int d = 0; d < 2; ++d) {
          if (!free[static_cast<std::size_t>(d)]) continue;
          if (quu(d, d) <= 0) {
            ok = false;
            break;
          }
          kf(d) = -qu(d) / quu(d, d);
          kb.row(d) = -qux.row(d) / quu(d, d);
        }
      }
      kff[ks] = kf;
      kfb[ks] = kb;
      vx = qx + kb.transpose() * quu * kf + kb.transpose() * qu + qux.transpose() * kf;
      vxx = qxx + kb.transpose() * quu * kb + kb.transpose() * qux + qux.transpose() * kb;
      vxx = 0.5 * (vxx + vxx.transpose()).eval();
    }
    if (!ok) {
      mu *= 10.0;
      if (mu > 1e6) break;
      continue;
    }

    // Forward pass with line search.
    bool accepted = false;
    for (double alpha = 1.0; alpha >= 1e-4; alpha *= 0.5) {
      std::vector<ControlInput> un(static_cast<std::size_t>(n));
      std::vector<VehicleState> xn;
      xn.reserve(static_cast<std::size_t>(n) + 1);
      xn.push_back(x_init);
      for (int k = 0; k < n; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        const Vec3d dx = state_error(xn[ks], sol.states[ks]);
        const Eigen::Vector2d du = alpha * kff[ks] + kfb[ks] * dx;
        un[ks] = cfg.clamp({u[ks].v + du(0), u[ks].w + du(1)});
        xn.push_back(euler_step(xn[ks], un[ks], cfg.dt));
      }
      const double c = mpc_cost(xn, un, refs, cfg);
      if (c < sol.cost) {
        const double improvement = sol.cost - c;
        u = std::move(un);
        sol.states = std::move(xn);
        sol.cost = c;
        sol.cost_history.push_back(c);
        accepted = true;
        mu = std::max(1e-9, mu * 0.5);
        if (improvement <= cfg.tolerance * std::max(1.0, c)) sol.converged = true;
        break;
      }
    }
    if (sol.converged) {
      ++it;
      break;
    }
    if (!accepted) {
      if (mu >= 1e-2) {
        // No descent even with a heavily damped step: stationary up to the box.
        sol.converged = true;
        ++it;
        break;
      }
      mu = std::max(mu * 10.0, 1e-4);
    }
  }
  sol.iterations = it;
  sol.controls = std::move(u);
  return sol;
}

}  // namespace offroad
