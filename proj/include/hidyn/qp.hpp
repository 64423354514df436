#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "hidyn/math.hpp"

namespace hidyn {

// minimize 0.5 x'Hx + g'x  subject to  eq_matrix x = eq_rhs,
// ineq_matrix x <= ineq_rhs. H must be symmetric positive semidefinite.
// Inequality rows with an infinite right-hand side are ignored.
struct QuadraticProgram {
  MatX hessian;
  VecX gradient;
  MatX eq_matrix;
  VecX eq_rhs;
  MatX ineq_matrix;
  VecX ineq_rhs;

  static QuadraticProgram empty(int dim) {
    QuadraticProgram qp;
    qp.hessian = MatX::Zero(dim, dim);
    qp.gradient = VecX::Zero(dim);
    qp.eq_matrix.resize(0, dim);
    qp.eq_rhs.resize(0);
    qp.ineq_matrix.resize(0, dim);
    qp.ineq_rhs.resize(0);
    return qp;
  }
};

enum class QpStatus { optimal, infeasible, max_iterations, invalid_input };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::max_iterations: return "max_iterations";
    case QpStatus::invalid_input: return "invalid_input";
  }
  return "unknown";
}

struct QpOptions {
  double tolerance = 1e-9;              // constraint satisfaction
  double multiplier_tolerance = 1e-9;   // dual feasibility
  double regularization = 1e-8;         // ridge relative to trace(H)/dim
  int max_iterations = 0;               // 0 selects an automatic cap
  bool polish = true;                   // exact KKT resolve on the final active set
  const VecX* warm_start = nullptr;     // feasible point, skips phase 1
  const std::vector<int>* warm_active = nullptr;
};

struct QpSolution {
  VecX x;
  QpStatus status = QpStatus::invalid_input;
  double objective = 0.0;
  int iterations = 0;
  std::vector<int> active_set;   // inequality rows active at the solution
  VecX ineq_multipliers;         // >= 0 at an optimum
  VecX eq_multipliers;
  double max_violation = 0.0;    // residual of the worst constraint at x
};

namespace detail {

inline bool all_finite(const MatX& m) { return m.allFinite(); }

struct LdpProblem {
  // minimize 0.5 ||z||^2 with eq rows always active.
  MatX eq;
  VecX eq_rhs;
  MatX ineq;
  VecX ineq_rhs;
};

struct LdpResult {
  VecX z;
  std::vector<int> active;
  VecX eq_mult;
  VecX ineq_mult;
  int iterations = 0;
  bool converged = false;
};

// Primal active-set iteration on the least-distance problem. z0 must be
// feasible. Deterministic pivoting: smallest blocking index enters, the most
// negative multiplier (smallest index on ties) leaves.
inline LdpResult least_distance(const LdpProblem& p, VecX z0,
                                std::vector<int> active0, const QpOptions& opts) {
  const int dim = static_cast<int>(z0.size());
  const int me = static_cast<int>(p.eq.rows());
  const int mi = static_cast<int>(p.ineq.rows());
  const int max_iter =
      opts.max_iterations > 0 ? opts.max_iterations : 40 + 8 * (dim + me + mi);

  LdpResult res;
  res.z = std::move(z0);
  res.active = std::move(active0);
  res.eq_mult = VecX::Zero(me);
  res.ineq_mult = VecX::Zero(mi);

  std::vector<char> in_set(mi, 0);
  for (int i : res.active) in_set[i] = 1;

  MatX wt;  // transpose of the working-set matrix, dim x m
  for (int iter = 0; iter < max_iter; ++iter) {
    res.iterations = iter + 1;
    const int na = static_cast<int>(res.active.size());
    const int m = me + na;

    VecX step;
    Eigen::CompleteOrthogonalDecomposition<MatX> cod;
    if (m == 0) {
      step = -res.z;
    } else {
      wt.resize(dim, m);
      for (int r = 0; r < me; ++r) wt.col(r) = p.eq.row(r).transpose();
      for (int r = 0; r < na; ++r) wt.col(me + r) = p.ineq.row(res.active[r]).transpose();
      cod.compute(wt);
      const int rank = static_cast<int>(cod.rank());
      // Projection of z onto range(W'); step targets the minimum-norm point
      // of the working-set affine subspace, which z already lies on.
      MatX q1 = cod.householderQ() * MatX::Identity(dim, rank);
      step = q1 * (q1.transpose() * res.z) - res.z;
    }

    if (step.lpNorm<Eigen::Infinity>() <= opts.tolerance * (1.0 + res.z.lpNorm<Eigen::Infinity>())) {
      // Stationary on the working set; check dual feasibility.
      VecX mult = VecX::Zero(m);
      if (m > 0) mult = cod.solve(-res.z);
      int drop = -1;
      double most_negative = -opts.multiplier_tolerance;
      for (int r = 0; r < na; ++r) {
        if (mult[me + r] < most_negative) {
          most_negative = mult[me + r];
          drop = r;
        }
      }
      if (drop < 0) {
        res.eq_mult = mult.head(me);
        for (int r = 0; r < na; ++r) res.ineq_mult[res.active[r]] = mult[me + r];
        res.converged = true;
        return res;
      }
      in_set[res.active[drop]] = 0;
      res.active.erase(res.active.begin() + drop);
      continue;
    }

    // Ratio test toward the working-set minimizer.
    double alpha = 1.0;
    int blocking = -1;
    for (int i = 0; i < mi; ++i) {
      if (in_set[i]) continue;
      if (!std::isfinite(p.ineq_rhs[i])) continue;
      const double slope = p.ineq.row(i).dot(step);
      if (slope <= 1e-14 * (1.0 + step.norm() * p.ineq.row(i).norm())) continue;
      const double room = std::max(p.ineq_rhs[i] - p.ineq.row(i).dot(res.z), 0.0);
      const double a = room / slope;
      if (a < alpha - 1e-15) {
        alpha = a;
        blocking = i;
      }
    }
    res.z += alpha * step;
    if (blocking >= 0) {
      in_set[blocking] = 1;
      res.active.push_back(blocking);
    }
  }
  return res;  // converged stays false
}

struct Transformed {
  Eigen::LLT<MatX> llt;
  VecX hinv_g;
  LdpProblem ldp;
  std::vector<int> row_map;  // ldp inequality row -> original row
  bool ok = false;
};

inline Transformed transform_problem(const MatX& h, const VecX& g, const MatX& eq,
                                     const VecX& eq_rhs, const MatX& ineq,
                                     const VecX& ineq_rhs, double regularization) {
  Transformed t;
  const int dim = static_cast<int>(h.rows());
  MatX hs = 0.5 * (h + h.transpose());
  const double ridge = regularization * std::max(hs.trace() / std::max(dim, 1), 1e-12);
  hs.diagonal().array() += ridge;
  t.llt.compute(hs);
  if (t.llt.info() != Eigen::Success) {
    hs.diagonal().array() += 1e3 * ridge;
    t.llt.compute(hs);
    if (t.llt.info() != Eigen::Success) return t;
  }
  t.hinv_g = t.llt.solve(g);

  const auto lt = t.llt.matrixL();
  t.ldp.eq = lt.solve(eq.transpose()).transpose();
  t.ldp.eq_rhs = eq_rhs + eq * t.hinv_g;

  int kept = 0;
  for (int i = 0; i < ineq.rows(); ++i) {
    if (std::isfinite(ineq_rhs[i])) ++kept;
  }
  t.ldp.ineq.resize(kept, dim);
  t.ldp.ineq_rhs.resize(kept);
  t.row_map.resize(kept);
  kept = 0;
  for (int i = 0; i < ineq.rows(); ++i) {
    if (!std::isfinite(ineq_rhs[i])) continue;
    t.ldp.ineq.row(kept) = lt.solve(ineq.row(i).transpose()).transpose();
    t.ldp.ineq_rhs[kept] = ineq_rhs[i] + ineq.row(i).dot(t.hinv_g);
    t.row_map[kept] = i;
    ++kept;
  }
  t.ok = true;
  return t;
}

inline VecX to_x(const Transformed& t, const VecX& z) {
  return t.llt.matrixU().solve(z) - t.hinv_g;
}

}  // namespace detail

// Deterministic dense convex QP solver. Phase 1 minimizes slack on the
// inequality rows; a positive optimal slack is the infeasibility certificate.
inline QpSolution solve_qp(const QuadraticProgram& qp, const QpOptions& opts = {}) {
  QpSolution sol;
  const int dim = static_cast<int>(qp.hessian.rows());
  const int me = static_cast<int>(qp.eq_matrix.rows());
  const int mi = static_cast<int>(qp.ineq_matrix.rows());

  const bool sized = qp.hessian.cols() == dim && qp.gradient.size() == dim &&
                     qp.eq_matrix.cols() == (me ? dim : qp.eq_matrix.cols()) &&
                     qp.eq_rhs.size() == me && qp.ineq_rhs.size() == mi &&
                     (mi == 0 || qp.ineq_matrix.cols() == dim);
  if (!sized || !detail::all_finite(qp.hessian) || !qp.gradient.allFinite() ||
      !detail::all_finite(qp.eq_matrix) || !qp.eq_rhs.allFinite() ||
      !detail::all_finite(qp.ineq_matrix)) {
    sol.status = QpStatus::invalid_input;
    return sol;
  }
  for (int i = 0; i < mi; ++i) {
    if (std::isnan(qp.ineq_rhs[i]) || qp.ineq_rhs[i] == -std::numeric_limits<double>::infinity()) {
      sol.status = QpStatus::invalid_input;
      return sol;
    }
  }

  sol.ineq_multipliers = VecX::Zero(mi);
  sol.eq_multipliers = VecX::Zero(me);

  const auto violation = [&](const VecX& x) {
    double v = 0.0;
    if (me) v = (qp.eq_matrix * x - qp.eq_rhs).lpNorm<Eigen::Infinity>();
    for (int i = 0; i < mi; ++i) {
      if (!std::isfinite(qp.ineq_rhs[i])) continue;
      v = std::max(v, qp.ineq_matrix.row(i).dot(x) - qp.ineq_rhs[i]);
    }
    return v;
  };
  const auto objective = [&](const VecX& x) {
    return 0.5 * x.dot(qp.hessian * x) + qp.gradient.dot(x);
  };

  // Find a feasible starting point.
  VecX x0;
  int phase1_iterations = 0;
  if (opts.warm_start && opts.warm_start->size() == dim) {
    x0 = *opts.warm_start;
  } else {
    if (me > 0) {
      x0 = qp.eq_matrix.completeOrthogonalDecomposition().solve(qp.eq_rhs);
      const double eq_res = (qp.eq_matrix * x0 - qp.eq_rhs).lpNorm<Eigen::Infinity>();
      if (eq_res > 1e2 * opts.tolerance * (1.0 + qp.eq_rhs.lpNorm<Eigen::Infinity>())) {
        sol.status = QpStatus::infeasible;
        sol.x = x0;
        sol.max_violation = eq_res;
        return sol;
      }
    } else {
      x0 = VecX::Zero(dim);
    }
    if (mi > 0) {
      // Lifted feasibility program over [x; s]: minimize 0.5||s||^2 with
      // A x - s <= b, E x = e, started at the least-squares point.
      QuadraticProgram lift = QuadraticProgram::empty(dim + mi);
      lift.hessian.bottomRightCorner(mi, mi).setIdentity();
      lift.eq_matrix = MatX::Zero(me, dim + mi);
      if (me) lift.eq_matrix.leftCols(dim) = qp.eq_matrix;
      lift.eq_rhs = qp.eq_rhs;
      lift.ineq_matrix = MatX::Zero(mi, dim + mi);
      lift.ineq_matrix.leftCols(dim) = qp.ineq_matrix;
      lift.ineq_matrix.rightCols(mi) = -MatX::Identity(mi, mi);
      lift.ineq_rhs = qp.ineq_rhs;

      VecX lifted0(dim + mi);
      lifted0.head(dim) = x0;
      for (int i = 0; i < mi; ++i) {
        const double r = std::isfinite(qp.ineq_rhs[i])
                             ? qp.ineq_matrix.row(i).dot(x0) - qp.ineq_rhs[i]
                             : 0.0;
        lifted0[dim + i] = std::max(r, 0.0);
      }
      QpOptions lifted_opts = opts;
      lifted_opts.warm_start = &lifted0;
      lifted_opts.warm_active = nullptr;
      lifted_opts.polish = false;
      const QpSolution feas = solve_qp(lift, lifted_opts);
      phase1_iterations = feas.iterations;
      if (feas.status != QpStatus::optimal && feas.status != QpStatus::max_iterations) {
        sol.status = feas.status;
        return sol;
      }
      const double worst = feas.x.tail(mi).lpNorm<Eigen::Infinity>();
      x0 = feas.x.head(dim);
      if (worst > 1e3 * opts.tolerance * (1.0 + qp.ineq_rhs.cwiseAbs().maxCoeff())) {
        sol.status = QpStatus::infeasible;
        sol.x = x0;
        sol.max_violation = violation(x0);
        sol.iterations = phase1_iterations;
        return sol;
      }
    }
  }

  detail::Transformed t = detail::transform_problem(
      qp.hessian, qp.gradient, qp.eq_matrix, qp.eq_rhs, qp.ineq_matrix,
      qp.ineq_rhs, opts.regularization);
  if (!t.ok) {
    sol.status = QpStatus::invalid_input;
    return sol;
  }

  VecX z0 = t.llt.matrixL().transpose() * x0 + t.llt.matrixL().solve(qp.gradient);

  std::vector<int> active0;
  if (opts.warm_active) {
    // Accept warm hints that are tight at the starting point.
    std::vector<int> inverse_map(mi, -1);
    for (int k = 0; k < static_cast<int>(t.row_map.size()); ++k) inverse_map[t.row_map[k]] = k;
    for (int i : *opts.warm_active) {
      if (i < 0 || i >= mi || inverse_map[i] < 0) continue;
      const int k = inverse_map[i];
      if (std::abs(t.ldp.ineq.row(k).dot(z0) - t.ldp.ineq_rhs[k]) <=
          1e2 * opts.tolerance * (1.0 + std::abs(t.ldp.ineq_rhs[k]))) {
        active0.push_back(k);
      }
    }
  }

  detail::LdpResult ldp = detail::least_distance(t.ldp, z0, active0, opts);
  sol.x = detail::to_x(t, ldp.z);
  sol.iterations = phase1_iterations + ldp.iterations;
  sol.eq_multipliers = ldp.eq_mult;
  for (int k = 0; k < static_cast<int>(t.row_map.size()); ++k) {
    sol.ineq_multipliers[t.row_map[k]] = ldp.ineq_mult[k];
  }
  sol.active_set.clear();
  for (int k : ldp.active) sol.active_set.push_back(t.row_map[k]);
  std::sort(sol.active_set.begin(), sol.active_set.end());
  sol.status = ldp.converged ? QpStatus::optimal : QpStatus::max_iterations;

  if (opts.polish && ldp.converged) {
    // Exact KKT resolve on the final active set removes the ridge bias.
    const int na = static_cast<int>(sol.active_set.size());
    const int m = me + na;
    MatX kkt = MatX::Zero(dim + m, dim + m);
    kkt.topLeftCorner(dim, dim) = 0.5 * (qp.hessian + qp.hessian.transpose());
    VecX rhs(dim + m);
    rhs.head(dim) = -qp.gradient;
    for (int r = 0; r < me; ++r) {
      kkt.block(dim + r, 0, 1, dim) = qp.eq_matrix.row(r);
      kkt.block(0, dim + r, dim, 1) = qp.eq_matrix.row(r).transpose();
      rhs[dim + r] = qp.eq_rhs[r];
    }
    for (int r = 0; r < na; ++r) {
      const int i = sol.active_set[r];
      kkt.block(dim + me + r, 0, 1, dim) = qp.ineq_matrix.row(i);
      kkt.block(0, dim + me + r, dim, 1) = qp.ineq_matrix.row(i).transpose();
      rhs[dim + me + r] = qp.ineq_rhs[i];
    }
    const VecX sol_kkt = kkt.completeOrthogonalDecomposition().solve(rhs);
    const VecX x_polished = sol_kkt.head(dim);
    const double tol_keep = 1e2 * opts.tolerance * (1.0 + sol.x.lpNorm<Eigen::Infinity>());
    bool keep = violation(x_polished) <= std::max(violation(sol.x), opts.tolerance) + opts.tolerance &&
                objective(x_polished) <= objective(sol.x) + tol_keep;
    if (keep) {
      bool duals_ok = true;
      for (int r = 0; r < na; ++r) {
        if (sol_kkt[dim + me + r] < -1e2 * opts.multiplier_tolerance) duals_ok = false;
      }
      if (duals_ok) {
        sol.x = x_polished;
        sol.eq_multipliers = sol_kkt.segment(dim, me);
        for (int r = 0; r < na; ++r) {
          sol.ineq_multipliers[sol.active_set[r]] = std::max(sol_kkt[dim + me + r], 0.0);
        }
      }
    }
  }

  sol.objective = objective(sol.x);
  sol.max_violation = violation(sol.x);
  return sol;
}

struct NullspaceBasis {
  MatX basis;      // columns span the nullspace, orthonormal
  int rank = 0;
  double singular_threshold = 0.0;
};

// Orthonormal nullspace of a stacked row matrix via SVD. Zero rows give the
// identity. The rank cut is relative to the largest singular value.
inline NullspaceBasis nullspace_basis(const MatX& rows, int cols_hint = -1,
                                      double relative_tolerance = 1e-8) {
  NullspaceBasis out;
  if (rows.rows() == 0) {
    const int cols = rows.cols() > 0 ? static_cast<int>(rows.cols()) : cols_hint;
    out.basis = MatX::Identity(cols, cols);
    return out;
  }
  Eigen::JacobiSVD<MatX> svd(rows, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double smax = sv.size() ? sv[0] : 0.0;
  out.singular_threshold = relative_tolerance * smax;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv[i] > out.singular_threshold) ++rank;
  }
  out.rank = rank;
  out.basis = svd.matrixV().rightCols(static_cast<int>(rows.cols()) - rank);
  return out;
}

}  // namespace hidyn
