#include <gtest/gtest.h>

#include <random>

#include "hidyn/qp.hpp"
#include "oracles.hpp"

using namespace hidyn;

namespace {

QuadraticProgram random_qp(std::mt19937& rng, int dim, int me, int mi,
                           bool force_feasible = true) {
  std::normal_distribution<double> unit(0.0, 1.0);
  const auto mat = [&](int r, int c) {
    MatX m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = unit(rng);
    return m;
  };
  QuadraticProgram qp = QuadraticProgram::empty(dim);
  // SPD hessian with spread eigenvalues.
  const MatX a = mat(dim, dim);
  qp.hessian = a * a.transpose() + 0.5 * MatX::Identity(dim, dim);
  qp.gradient = mat(dim, 1);

  VecX interior = mat(dim, 1);
  if (me > 0) {
    qp.eq_matrix = mat(me, dim);
    if (force_feasible) {
      qp.eq_rhs = qp.eq_matrix * interior;
    } else {
      qp.eq_rhs = mat(me, 1);
    }
  }
  if (mi > 0) {
    qp.ineq_matrix = mat(mi, dim);
    qp.ineq_rhs = mat(mi, 1);
    if (force_feasible) {
      // Shift each row so the interior point satisfies it strictly.
      std::uniform_real_distribution<double> margin(0.05, 1.0);
      for (int i = 0; i < mi; ++i) {
        qp.ineq_rhs[i] = qp.ineq_matrix.row(i).dot(interior) + margin(rng);
      }
    }
  }
  return qp;
}

double kkt_residual(const QuadraticProgram& qp, const QpSolution& sol) {
  VecX grad = qp.hessian * sol.x + qp.gradient;
  if (qp.eq_matrix.rows() > 0) {
    grad += qp.eq_matrix.transpose() * sol.eq_multipliers;
  }
  if (qp.ineq_matrix.rows() > 0) {
    grad += qp.ineq_matrix.transpose() * sol.ineq_multipliers;
  }
  double r = grad.cwiseAbs().maxCoeff();
  if (qp.eq_matrix.rows() > 0) {
    r = std::max(r, (qp.eq_matrix * sol.x - qp.eq_rhs).cwiseAbs().maxCoeff());
  }
  for (int i = 0; i < qp.ineq_matrix.rows(); ++i) {
    const double slack = qp.ineq_rhs[i] - qp.ineq_matrix.row(i).dot(sol.x);
    r = std::max(r, std::max(0.0, -slack));                       // feasibility
    r = std::max(r, std::max(0.0, -sol.ineq_multipliers[i]));     // dual sign
    r = std::max(r, std::abs(sol.ineq_multipliers[i] * slack));   // complementarity
  }
  return r;
}

TEST(Qp, UnconstrainedClosedForm) {
  QuadraticProgram qp = QuadraticProgram::empty(3);
  qp.hessian = Vec3(2.0, 4.0, 8.0).asDiagonal();
  qp.gradient = Vec3(-2.0, 4.0, -8.0);
  const QpSolution sol = solve_qp(qp);
  ASSERT_EQ(sol.status, QpStatus::optimal);
  EXPECT_LT((sol.x - Vec3(1.0, -1.0, 1.0)).norm(), 1e-9);
}

TEST(Qp, EqualityClosedForm) {
  // min x'x subject to sum(x) = 3 -> x = (1,1,1).
  QuadraticProgram qp = QuadraticProgram::empty(3);
  qp.hessian = 2.0 * Mat3::Identity();
  qp.eq_matrix = MatX::Ones(1, 3);
  qp.eq_rhs = VecX::Constant(1, 3.0);
  const QpSolution sol = solve_qp(qp);
  ASSERT_EQ(sol.status, QpStatus::optimal);
  EXPECT_LT((sol.x - Vec3::Ones()).norm(), 1e-9);
}

TEST(Qp, ActiveBoxConstraint) {
  // min (x-2)^2 with x <= 1 -> x = 1 with multiplier 2.
  QuadraticProgram qp = QuadraticProgram::empty(1);
  qp.hessian = MatX::Constant(1, 1, 2.0);
  qp.gradient = VecX::Constant(1, -4.0);
  qp.ineq_matrix = MatX::Constant(1, 1, 1.0);
  qp.ineq_rhs = VecX::Constant(1, 1.0);
  const QpSolution sol = solve_qp(qp);
  ASSERT_EQ(sol.status, QpStatus::optimal);
  EXPECT_NEAR(sol.x[0], 1.0, 1e-9);
  EXPECT_NEAR(sol.ineq_multipliers[0], 2.0, 1e-7);
}

TEST(Qp, MatchesEnumerationOracle) {
  std::mt19937 rng(7);
  int solved = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int dim = 2 + trial % 5;             // 2..6
    const int me = trial % 3 == 0 ? 1 : 0;     // occasional equality row
    const int mi = 1 + trial % 7;              // 1..7
    const QuadraticProgram qp = random_qp(rng, dim, me, mi);
    const oracles::EnumResult ref = oracles::qp_enumeration(qp);
    ASSERT_TRUE(ref.feasible) << "trial " << trial;

    const QpSolution sol = solve_qp(qp);
    ASSERT_EQ(sol.status, QpStatus::optimal) << "trial " << trial;
    EXPECT_LT((sol.x - ref.x).cwiseAbs().maxCoeff(),
              1e-7 * (1.0 + ref.x.cwiseAbs().maxCoeff()))
        << "trial " << trial;
    EXPECT_LT(kkt_residual(qp, sol), 1e-6) << "trial " << trial;
    ++solved;
  }
  EXPECT_EQ(solved, 200);
}

TEST(Qp, InfeasibleCertificate) {
  // x <= -1 and -x <= -1 cannot both hold.
  QuadraticProgram qp = QuadraticProgram::empty(1);
  qp.hessian = MatX::Identity(1, 1);
  qp.ineq_matrix.resize(2, 1);
  qp.ineq_matrix << 1.0, -1.0;
  qp.ineq_rhs.resize(2);
  qp.ineq_rhs << -1.0, -1.0;
  const QpSolution sol = solve_qp(qp);
  EXPECT_EQ(sol.status, QpStatus::infeasible);
  // Certificate: best achievable violation is 1 on at least one row.
  EXPECT_GT(sol.max_violation, 0.5);
}

TEST(Qp, InconsistentEqualities) {
  QuadraticProgram qp = QuadraticProgram::empty(2);
  qp.hessian = MatX::Identity(2, 2);
  qp.eq_matrix.resize(2, 2);
  qp.eq_matrix << 1.0, 1.0, 1.0, 1.0;
  qp.eq_rhs.resize(2);
  qp.eq_rhs << 1.0, 2.0;
  const QpSolution sol = solve_qp(qp);
  EXPECT_EQ(sol.status, QpStatus::infeasible);
}

TEST(Qp, RedundantEqualitiesAreFine) {
  QuadraticProgram qp = QuadraticProgram::empty(2);
  qp.hessian = 2.0 * MatX::Identity(2, 2);
  qp.eq_matrix.resize(2, 2);
  qp.eq_matrix << 1.0, 1.0, 2.0, 2.0;  // same row twice
  qp.eq_rhs.resize(2);
  qp.eq_rhs << 1.0, 2.0;
  const QpSolution sol = solve_qp(qp);
  ASSERT_EQ(sol.status, QpStatus::optimal);
  EXPECT_LT((sol.x - Eigen::Vector2d(0.5, 0.5)).norm(), 1e-9);
}

TEST(Qp, InvalidInputsRejected) {
  QuadraticProgram qp = QuadraticProgram::empty(2);
  qp.hessian = MatX::Identity(2, 2);
  qp.gradient[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(solve_qp(qp).status, QpStatus::invalid_input);

  qp = QuadraticProgram::empty(2);
  qp.hessian = MatX::Identity(3, 3);  // size mismatch
  EXPECT_EQ(solve_qp(qp).status, QpStatus::invalid_input);

  qp = QuadraticProgram::empty(2);
  qp.hessian = MatX::Identity(2, 2);
  qp.ineq_matrix = MatX::Ones(1, 2);
  qp.ineq_rhs = VecX::Constant(1, -std::numeric_limits<double>::infinity());
  EXPECT_EQ(solve_qp(qp).status, QpStatus::invalid_input);
}

TEST(Qp, InfiniteRhsRowsIgnored) {
  QuadraticProgram qp = QuadraticProgram::empty(1);
  qp.hessian = MatX::Constant(1, 1, 2.0);
  qp.gradient = VecX::Constant(1, -4.0);
  qp.ineq_matrix.resize(2, 1);
  qp.ineq_matrix << 1.0, -1.0;
  qp.ineq_rhs.resize(2);
  qp.ineq_rhs << std::numeric_limits<double>::infinity(), 0.5;
  const QpSolution sol = solve_qp(qp);
  ASSERT_EQ(sol.status, QpStatus::optimal);
  EXPECT_NEAR(sol.x[0], 2.0, 1e-9);  // only the vacuous row would bind
}

TEST(Qp, Deterministic) {
  std::mt19937 rng(99);
  const QuadraticProgram qp = random_qp(rng, 6, 2, 8);
  const QpSolution a = solve_qp(qp);
  const QpSolution b = solve_qp(qp);
  ASSERT_EQ(a.status, QpStatus::optimal);
  EXPECT_EQ(a.iterations, b.iterations);
  EXPECT_TRUE(a.x == b.x);  // bit identical
  EXPECT_TRUE(a.active_set == b.active_set);
}

TEST(Qp, WarmStartReducesWork) {
  std::mt19937 rng(123);
  const QuadraticProgram qp = random_qp(rng, 8, 0, 12);
  const QpSolution cold = solve_qp(qp);
  ASSERT_EQ(cold.status, QpStatus::optimal);

  QpOptions opts;
  opts.warm_start = &cold.x;
  opts.warm_active = &cold.active_set;
  const QpSolution warm = solve_qp(qp, opts);
  ASSERT_EQ(warm.status, QpStatus::optimal);
  EXPECT_LT((warm.x - cold.x).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE(warm.iterations, cold.iterations);
}

TEST(Qp, DegenerateTies) {
  // Symmetric corner: two constraints both active at the optimum.
  QuadraticProgram qp = QuadraticProgram::empty(2);
  qp.hessian = 2.0 * MatX::Identity(2, 2);
  qp.gradient = -2.0 * Eigen::Vector2d(1.0, 1.0);
  qp.ineq_matrix.resize(2, 2);
  qp.ineq_matrix << 1.0, 0.0, 0.0, 1.0;
  qp.ineq_rhs.resize(2);
  qp.ineq_rhs << 0.0, 0.0;
  const QpSolution sol = solve_qp(qp);
  ASSERT_EQ(sol.status, QpStatus::optimal);
  EXPECT_LT(sol.x.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Qp, NullspaceBasisProperties) {
  std::mt19937 rng(5);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int cols = 3 + trial % 6;
    const int rows = 1 + trial % 4;
    MatX m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = unit(rng);
    if (trial % 5 == 0 && rows >= 2) m.row(1) = 2.0 * m.row(0);  // rank gap

    const NullspaceBasis ns = nullspace_basis(m);
    EXPECT_EQ(ns.basis.cols(), cols - ns.rank);
    if (ns.basis.cols() > 0) {
      EXPECT_LT((m * ns.basis).cwiseAbs().maxCoeff(), 1e-9);
      const MatX gram = ns.basis.transpose() * ns.basis;
      EXPECT_LT((gram - MatX::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff(),
                1e-10);
    }
  }

  // Zero rows: full identity of the hinted dimension.
  const NullspaceBasis full = nullspace_basis(MatX(0, 0), 4);
  EXPECT_EQ(full.basis.cols(), 4);
  EXPECT_EQ(full.rank, 0);

  // Full-rank square: empty basis.
  const NullspaceBasis none = nullspace_basis(MatX::Identity(3, 3));
  EXPECT_EQ(none.basis.cols(), 0);
}

TEST(Qp, LargerRandomProblemsStayConsistent) {
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 30; ++trial) {
    const QuadraticProgram qp = random_qp(rng, 20, 4, 25);
    const QpSolution sol = solve_qp(qp);
    ASSERT_EQ(sol.status, QpStatus::optimal) << "trial " << trial;
    EXPECT_LT(kkt_residual(qp, sol), 1e-6) << "trial " << trial;
  }
}

}  // namespace
