#pragma once

#include <chrono>
#include <cmath>
#include <future>
#include <memory>
#include <string>
#include <vector>

#include "hidyn/qp.hpp"
#include "hidyn/tasks.hpp"

namespace hidyn {

// Priority-ordered task sets over one decision vector. Lower index = higher
// priority. An optional context carries the physics snapshot for audits and
// torque recovery.
struct Hierarchy {
  VariableLayout layout;
  std::vector<AffineTaskSet> levels;
  std::shared_ptr<const CycleContext> context;
};

struct CascadeOptions {
  double tolerance = 1e-9;
  double cap_relaxation = 1e-9;     // slack added to stored inequality caps
  double rank_tolerance = 1e-8;     // nullspace singular-value cut
  double top_slack_tolerance = 1e-6;  // feasibility verdict on level 0
  bool overlap_nullspace = false;   // compute the next basis while a level solves
  int max_qp_iterations = 0;
};

struct LevelResult {
  VecX eq_slack;            // w at this level after its solve
  VecX ineq_slack;          // v, componentwise max(row, 0)
  double objective = 0.0;   // ||w||^2 + ||v||^2
  QpStatus status = QpStatus::optimal;
  int iterations = 0;
  int freedom = 0;          // nullspace columns available to this level
  double solve_seconds = 0.0;
  double nullspace_seconds = 0.0;
};

struct CascadeSolution {
  VecX y;
  std::vector<LevelResult> levels;
  bool feasible = false;
  double total_seconds = 0.0;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct WeightedLevel {
  MatX beq;   // weighted equality rows
  VecX beq_v;
  MatX aineq;
  VecX aineq_v;
};

inline WeightedLevel weigh(const AffineTaskSet& t) {
  WeightedLevel w;
  w.beq = t.eq_weight.asDiagonal() * t.eq_matrix;
  w.beq_v = t.eq_weight.asDiagonal() * t.eq_vector;
  w.aineq = t.ineq_weight.asDiagonal() * t.ineq_matrix;
  w.aineq_v = t.ineq_weight.asDiagonal() * t.ineq_vector;
  return w;
}

}  // namespace detail

// Cascade of QPs. Each level minimizes its own weighted slack inside the
// optimal set of all higher levels: equalities are pinned through a nullspace
// parameterization y = y* + Z u, inequalities through accumulated caps
// A y + a <= v*. Every level QP is feasible by construction and starts from
// u = 0 with v at its entry values.
inline CascadeSolution solve_hierarchy(const Hierarchy& h, const CascadeOptions& opts = {}) {
  const auto t_start = std::chrono::steady_clock::now();
  const int dim = h.layout.dimension();
  const int nlevels = static_cast<int>(h.levels.size());

  CascadeSolution sol;
  sol.y = VecX::Zero(dim);
  sol.levels.resize(nlevels);

  MatX basis = MatX::Identity(dim, dim);
  MatX eq_stack(0, dim);
  MatX cap_rows(0, dim);
  VecX cap_rhs(0);

  bool all_optimal = true;
  for (int r = 0; r < nlevels; ++r) {
    LevelResult& res = sol.levels[r];
    const detail::WeightedLevel lvl = detail::weigh(h.levels[r]);
    const int me = static_cast<int>(lvl.beq.rows());
    const int mi = static_cast<int>(lvl.aineq.rows());
    const int k = static_cast<int>(basis.cols());
    res.freedom = k;

    // The equality stack for the next basis is known before this level's QP
    // runs, so the decomposition can overlap with the solve.
    std::future<NullspaceBasis> next_basis;
    const bool need_basis = r + 1 < nlevels && me > 0 && k > 0;
    MatX next_stack;
    if (need_basis) {
      next_stack.resize(eq_stack.rows() + me, dim);
      next_stack << eq_stack, lvl.beq;
      if (opts.overlap_nullspace) {
        next_basis = std::async(std::launch::async, [&next_stack, &opts] {
          return nullspace_basis(next_stack, -1, opts.rank_tolerance);
        });
      }
    }

    const auto t_level = std::chrono::steady_clock::now();
    if (k > 0 && (me > 0 || mi > 0)) {
      const MatX g = lvl.beq * basis;                    // me x k
      const VecX g0 = lvl.beq * sol.y + lvl.beq_v;       // w at entry
      QuadraticProgram qp = QuadraticProgram::empty(k + mi);
      qp.hessian.topLeftCorner(k, k) = g.transpose() * g;
      qp.hessian.bottomRightCorner(mi, mi).setIdentity();
      qp.gradient.head(k) = g.transpose() * g0;

      const int caps = static_cast<int>(cap_rows.rows());
      qp.ineq_matrix = MatX::Zero(mi + caps, k + mi);
      qp.ineq_rhs.resize(mi + caps);
      if (mi > 0) {
        qp.ineq_matrix.topLeftCorner(mi, k) = lvl.aineq * basis;
        qp.ineq_matrix.topRightCorner(mi, mi) = -MatX::Identity(mi, mi);
        qp.ineq_rhs.head(mi) = -(lvl.aineq * sol.y + lvl.aineq_v);
      }
      if (caps > 0) {
        qp.ineq_matrix.bottomLeftCorner(caps, k) = cap_rows * basis;
        qp.ineq_rhs.tail(caps) = cap_rhs - cap_rows * sol.y;
      }

      VecX start = VecX::Zero(k + mi);
      for (int i = 0; i < mi; ++i) start[k + i] = std::max(-qp.ineq_rhs[i], 0.0);
      QpOptions qp_opts;
      qp_opts.tolerance = opts.tolerance;
      qp_opts.max_iterations = opts.max_qp_iterations;
      qp_opts.warm_start = &start;
      const QpSolution qs = solve_qp(qp, qp_opts);
      res.status = qs.status;
      res.iterations = qs.iterations;
      if (qs.status == QpStatus::optimal || qs.status == QpStatus::max_iterations) {
        sol.y += basis * qs.x.head(k);
      }
      if (qs.status != QpStatus::optimal) all_optimal = false;
    }
    res.solve_seconds = detail::seconds_since(t_level);

    res.eq_slack = lvl.beq * sol.y + lvl.beq_v;
    res.ineq_slack = (lvl.aineq * sol.y + lvl.aineq_v).cwiseMax(0.0);
    res.objective = res.eq_slack.squaredNorm() + res.ineq_slack.squaredNorm();

    if (mi > 0) {
      const int caps = static_cast<int>(cap_rows.rows());
      cap_rows.conservativeResize(caps + mi, dim);
      cap_rhs.conservativeResize(caps + mi);
      cap_rows.bottomRows(mi) = lvl.aineq;
      cap_rhs.tail(mi) = res.ineq_slack - lvl.aineq_v +
                         VecX::Constant(mi, opts.cap_relaxation);
    }
    if (need_basis) {
      const auto t_basis = std::chrono::steady_clock::now();
      NullspaceBasis nb = opts.overlap_nullspace
                              ? next_basis.get()
                              : nullspace_basis(next_stack, -1, opts.rank_tolerance);
      res.nullspace_seconds = detail::seconds_since(t_basis);
      eq_stack = std::move(next_stack);
      basis = std::move(nb.basis);
    }
  }

  sol.total_seconds = detail::seconds_since(t_start);
  double top_slack = 0.0;
  if (nlevels > 0) {
    const LevelResult& top = sol.levels[0];
    if (top.eq_slack.size()) top_slack = top.eq_slack.lpNorm<Eigen::Infinity>();
    if (top.ineq_slack.size()) {
      top_slack = std::max(top_slack, top.ineq_slack.lpNorm<Eigen::Infinity>());
    }
  }
  sol.feasible = all_optimal && top_slack <= opts.top_slack_tolerance;
  return sol;
}

inline VecX recover_torques(const CascadeSolution& sol, const TorqueMap& map) {
  return map.evaluate(sol.y);
}

struct AuditOptions {
  double slack_consistency = 1e-7;
  double cap_violation = 1e-7;
  double dynamics_residual = 1e-8;
  double box_violation = 1e-6;
  double force_violation = 1e-6;
  double min_normal_force = 1e-6;  // below this the cop is undefined
};

struct AuditCheck {
  std::string name;
  double worst = 0.0;
  double tolerance = 0.0;
  bool pass = true;
};

struct AuditReport {
  std::vector<AuditCheck> checks;

  bool clean() const {
    for (const auto& c : checks) {
      if (!c.pass) return false;
    }
    return true;
  }

  std::string summary() const {
    std::string out;
    for (const auto& c : checks) {
      out += (c.pass ? "[ok] " : "[violation] ") + c.name + " worst " +
             std::to_string(c.worst) + " tol " + std::to_string(c.tolerance) + "\n";
    }
    return out;
  }
};

// Re-derives every guarantee of a cascade solution from scratch: recorded
// slacks match recomputed ones, caps hold, and, when a physics context is
// attached, the Newton-Euler rows, torque and acceleration boxes, pressure
// bounds and friction limits are all satisfied at the returned point.
inline AuditReport audit_solution(const Hierarchy& h, const CascadeSolution& sol,
                                  const AuditOptions& opts = {}) {
  AuditReport report;
  const auto add = [&report](const std::string& name, double worst, double tol) {
    report.checks.push_back({name, worst, tol, worst <= tol});
  };

  double slack_err = 0.0;
  double cap_err = 0.0;
  for (int r = 0; r < static_cast<int>(h.levels.size()); ++r) {
    const detail::WeightedLevel lvl = detail::weigh(h.levels[r]);
    const LevelResult& res = sol.levels[r];
    if (lvl.beq.rows()) {
      slack_err = std::max(slack_err,
                           (lvl.beq * sol.y + lvl.beq_v - res.eq_slack).lpNorm<Eigen::Infinity>());
    }
    if (lvl.aineq.rows()) {
      const VecX raw = lvl.aineq * sol.y + lvl.aineq_v;
      slack_err = std::max(slack_err,
                           (raw.cwiseMax(0.0) - res.ineq_slack).lpNorm<Eigen::Infinity>());
      cap_err = std::max(cap_err, (raw - res.ineq_slack).maxCoeff());
    }
  }
  add("slack_consistency", slack_err, opts.slack_consistency);
  add("inequality_caps", cap_err, opts.cap_violation);

  bool statuses = true;
  for (const auto& lr : sol.levels) statuses &= lr.status == QpStatus::optimal;
  report.checks.push_back({"level_status", statuses ? 0.0 : 1.0, 0.5, statuses});

  if (!h.context) return report;
  const CycleContext& ctx = *h.context;
  const int n = ctx.layout.joints;

  add("dynamics_residual",
      (ctx.newton_euler_rows * sol.y + ctx.newton_euler_rhs).lpNorm<Eigen::Infinity>(),
      opts.dynamics_residual);

  const VecX tau = ctx.torque_map.evaluate(sol.y);
  double torque_excess = 0.0;
  double accel_excess = 0.0;
  for (int j = 0; j < n; ++j) {
    if (std::isfinite(ctx.torque_upper[j])) {
      torque_excess = std::max(torque_excess, tau[j] - ctx.torque_upper[j]);
    }
    if (std::isfinite(ctx.torque_lower[j])) {
      torque_excess = std::max(torque_excess, ctx.torque_lower[j] - tau[j]);
    }
    if (std::isfinite(ctx.accel_upper[j])) {
      accel_excess = std::max(accel_excess, sol.y[j] - ctx.accel_upper[j]);
    }
    if (std::isfinite(ctx.accel_lower[j])) {
      accel_excess = std::max(accel_excess, ctx.accel_lower[j] - sol.y[j]);
    }
  }
  add("torque_bounds", torque_excess, opts.box_violation);
  add("acceleration_bounds", accel_excess, opts.box_violation);

  double cop_excess = 0.0;
  double friction_excess = 0.0;
  double unilateral_excess = 0.0;
  for (int slot = 0; slot < static_cast<int>(ctx.data.active.size()); ++slot) {
    const Mat3 rot = ctx.data.contact_pose[slot].linear();
    const Vec6 wrench = sol.y.segment<6>(ctx.layout.force_offset() + 6 * slot);
    const Vec3 f = rot.transpose() * wrench.head<3>();
    const Vec3 tq = rot.transpose() * wrench.tail<3>();
    unilateral_excess = std::max(unilateral_excess, -f.z());
    const double mu = ctx.friction[slot] / std::sqrt(2.0);
    friction_excess = std::max({friction_excess, std::abs(f.x()) - mu * f.z(),
                                std::abs(f.y()) - mu * f.z()});
    if (f.z() > opts.min_normal_force) {
      const double cop_x = -tq.y() / f.z();
      const double cop_y = tq.x() / f.z();
      const SupportPatch& p = ctx.patch[slot];
      cop_excess = std::max({cop_excess,
                             cop_x - (p.x_plus - ctx.cop_margin),
                             -(p.x_minus - ctx.cop_margin) - cop_x,
                             cop_y - (p.y_plus - ctx.cop_margin),
                             -(p.y_minus - ctx.cop_margin) - cop_y});
    }
  }
  add("pressure_bounds", cop_excess, opts.force_violation);
  add("friction_limits", friction_excess, opts.force_violation);
  add("unilateral_contact", unilateral_excess, opts.force_violation);
  return report;
}

}  // namespace hidyn
