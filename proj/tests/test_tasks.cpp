#include <gtest/gtest.h>

#include <random>

#include "hidyn/model_io.hpp"
#include "hidyn/tasks.hpp"
#include "test_util.hpp"

using namespace hidyn;

namespace {

const Vec3 kGravity(0.0, 0.0, -9.81);

RobotModel biped() {
  return load_model(std::string(HIDYN_MODELS_DIR) + "/biped14.json");
}

// Draw torques and contact wrenches, then complete the tuple with the
// resulting accelerations so it satisfies the equations of motion exactly.
struct ConsistentTuple {
  VecX qdd;
  VecX lambda;
  VecX tau;
};

ConsistentTuple consistent_tuple(const RobotModel& model, const RobotState& state,
                                 const DynamicsData& d, std::mt19937& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  const int n = model.joint_count();
  ConsistentTuple out;
  out.tau.resize(n);
  for (int j = 0; j < n; ++j) out.tau[j] = 20.0 * unit(rng);
  out.lambda.resize(d.contact_jac.rows());
  for (int i = 0; i < out.lambda.size(); ++i) out.lambda[i] = 30.0 * unit(rng);

  VecX rhs = -d.bias;
  rhs.head(n) += out.tau;
  if (out.lambda.size() > 0) rhs += d.contact_jac.transpose() * out.lambda;
  out.qdd = d.mass.ldlt().solve(rhs);
  (void)state;
  return out;
}

TEST(Tasks, LayoutDimensions) {
  const VariableLayout red = VariableLayout::reduced(14, 2);
  EXPECT_EQ(red.dimension(), 32);
  EXPECT_EQ(red.accel_dim(), 20);
  EXPECT_EQ(red.force_offset(), 20);

  const VariableLayout full = VariableLayout::full(25, 2);
  EXPECT_EQ(full.dimension(), 68);
  EXPECT_EQ(full.torque_offset(), 43);

  const VariableLayout red25 = VariableLayout::reduced(25, 2);
  EXPECT_EQ(red25.dimension(), 43);
}

TEST(Tasks, DynamicsRowsHoldOnConsistentTuples) {
  const RobotModel model = biped();
  std::mt19937 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const RobotState s = testutil::random_state(model, rng, 0.3, 0.5);
    const ContactSet contacts = ContactSet::all_active(model);
    const DynamicsData d = DynamicsData::compute(model, s, contacts, kGravity);
    const ConsistentTuple tp = consistent_tuple(model, s, d, rng);

    // Reduced: six unactuated rows vanish without the torque variables.
    const VariableLayout red = VariableLayout::reduced(model.joint_count(), 2);
    VecX y_red(red.dimension());
    y_red << tp.qdd, tp.lambda;
    const AffineTaskSet t_red = build_dynamics_constraint(d, red);
    EXPECT_EQ(t_red.equality_count(), 6);
    EXPECT_LT((t_red.eq_matrix * y_red + t_red.eq_vector).cwiseAbs().maxCoeff(), 1e-7);

    // The torque map recovers the torques that generated the motion.
    const TorqueMap map = build_torque_map(d, red);
    EXPECT_LT((map.evaluate(y_red) - tp.tau).cwiseAbs().maxCoeff(), 1e-7);

    // Full: all n+6 rows with explicit torque variables.
    const VariableLayout full = VariableLayout::full(model.joint_count(), 2);
    VecX y_full(full.dimension());
    y_full << tp.qdd, tp.lambda, tp.tau;
    const AffineTaskSet t_full = build_dynamics_constraint(d, full);
    EXPECT_EQ(t_full.equality_count(), model.velocity_dim());
    EXPECT_LT((t_full.eq_matrix * y_full + t_full.eq_vector).cwiseAbs().maxCoeff(), 1e-7);

    const TorqueMap full_map = build_torque_map(d, full);
    EXPECT_LT((full_map.evaluate(y_full) - tp.tau).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Tasks, ContactEqualityRowsMatchJacobian) {
  const RobotModel model = biped();
  std::mt19937 rng(7);
  const RobotState s = testutil::random_state(model, rng, 0.2, 0.8);
  const ContactSet contacts = ContactSet::all_active(model);
  const DynamicsData d = DynamicsData::compute(model, s, contacts, kGravity);
  const VariableLayout red = VariableLayout::reduced(model.joint_count(), 2);
  const AffineTaskSet t = build_contact_equality_rows(d, red);
  EXPECT_EQ(t.equality_count(), 12);

  VecX y = VecX::Zero(red.dimension());
  std::normal_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < red.accel_dim(); ++i) y[i] = unit(rng);
  const VecX resid = t.eq_matrix * y + t.eq_vector;
  const VecX expect = d.contact_jac * y.head(red.accel_dim()) + d.contact_drift;
  EXPECT_LT((resid - expect).cwiseAbs().maxCoeff(), 1e-12);
}

// Center of pressure and friction rows implement the local-frame conditions
// regardless of the foot orientation.
TEST(Tasks, ContactForceRowsLocalFrame) {
  const RobotModel model = biped();
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    RobotState s = testutil::random_state(model, rng, 0.4, 0.0);
    const ContactSet contacts = ContactSet::all_active(model);
    const DynamicsData d = DynamicsData::compute(model, s, contacts, kGravity);
    const VariableLayout red = VariableLayout::reduced(model.joint_count(), 2);
    const double margin = 0.01;
    const AffineTaskSet t = build_contact_force_rows(model, d, red, margin);
    ASSERT_EQ(t.inequality_count(), 16);  // 8 per contact, no unilateral row

    VecX y = VecX::Zero(red.dimension());
    for (int slot = 0; slot < 2; ++slot) {
      const Mat3 rot = d.contact_pose[slot].linear();
      Vec3 f_local(3.0 * uni(rng), 3.0 * uni(rng), 40.0 + 10.0 * uni(rng));
      Vec3 tau_local(2.0 * uni(rng), 2.0 * uni(rng), 0.5 * uni(rng));
      y.segment<3>(red.force_offset() + 6 * slot) = rot * f_local;
      y.segment<3>(red.force_offset() + 6 * slot + 3) = rot * tau_local;
    }
    const VecX rows = t.ineq_matrix * y + t.ineq_vector;

    int r = 0;
    for (int slot = 0; slot < 2; ++slot) {
      const int ee = d.active[slot];
      const SupportPatch& patch = model.end_effectors[ee].patch;
      const double mu = model.end_effectors[ee].friction;
      const Mat3 rot = d.contact_pose[slot].linear();
      const Vec3 f = rot.transpose() * y.segment<3>(red.force_offset() + 6 * slot);
      const Vec3 tq = rot.transpose() * y.segment<3>(red.force_offset() + 6 * slot + 3);
      const double fz = f.z();
      const double cop_x = -tq.y() / fz;
      const double cop_y = tq.x() / fz;

      EXPECT_NEAR(rows[r + 0], fz * (cop_x - (patch.x_plus - margin)), 1e-9);
      EXPECT_NEAR(rows[r + 1], fz * (-(patch.x_minus - margin) - cop_x), 1e-9);
      EXPECT_NEAR(rows[r + 2], fz * (cop_y - (patch.y_plus - margin)), 1e-9);
      EXPECT_NEAR(rows[r + 3], fz * (-(patch.y_minus - margin) - cop_y), 1e-9);
      const double cap = mu / std::sqrt(2.0) * fz;
      EXPECT_NEAR(rows[r + 4], f.x() - cap, 1e-9);
      EXPECT_NEAR(rows[r + 5], -f.x() - cap, 1e-9);
      EXPECT_NEAR(rows[r + 6], f.y() - cap, 1e-9);
      EXPECT_NEAR(rows[r + 7], -f.y() - cap, 1e-9);
      r += 8;
    }
  }
}

TEST(Tasks, UnilateralRowOptional) {
  const RobotModel model = biped();
  const RobotState s = RobotState::neutral(model);
  const ContactSet contacts = ContactSet::all_active(model);
  const DynamicsData d = DynamicsData::compute(model, s, contacts, kGravity);
  const VariableLayout red = VariableLayout::reduced(model.joint_count(), 2);
  const AffineTaskSet with = build_contact_force_rows(model, d, red, 0.01, true);
  EXPECT_EQ(with.inequality_count(), 18);

  // The added row is -fz <= 0 in the local frame.
  VecX y = VecX::Zero(red.dimension());
  y[red.force_offset() + 2] = 100.0;  // world up-force on contact 0
  const VecX rows = with.ineq_matrix * y + with.ineq_vector;
  const Mat3 rot = d.contact_pose[0].linear();
  const double fz_local = (rot.transpose() * y.segment<3>(red.force_offset())).z();
  EXPECT_NEAR(rows[8], -fz_local, 1e-9);
}

TEST(Tasks, AccelBoundFormula) {
  const RobotModel model = biped();
  RobotState s = RobotState::neutral(model);
  LimitOptions opts;
  opts.dt = 1e-3;
  opts.horizon_cycles = 10.0;
  const double h = 0.01;

  s.q[3] = model.joints[3].limits.position_max - 0.001;
  s.v[3] = 0.5;  // moving into the limit
  VecX lower, upper;
  joint_accel_bounds(model, s, opts, lower, upper);
  const double head =
      model.joints[3].limits.position_max - s.q[3] - s.v[3] * h;
  EXPECT_NEAR(upper[3], clamp(2.0 * head / (h * h), 0.0, opts.accel_cap), 1e-12);
  // Away from limits both bounds sit at the cap.
  EXPECT_NEAR(upper[0], opts.accel_cap, 1e-12);
  EXPECT_NEAR(lower[0], -opts.accel_cap, 1e-12);
}

TEST(Tasks, LimitRowsBoxSemantics) {
  const RobotModel model = biped();
  std::mt19937 rng(13);
  const RobotState s = testutil::random_state(model, rng, 0.2, 0.3);
  const ContactSet contacts = ContactSet::all_active(model);
  const DynamicsData d = DynamicsData::compute(model, s, contacts, kGravity);
  const VariableLayout red = VariableLayout::reduced(model.joint_count(), 2);
  const TorqueMap map = build_torque_map(d, red);
  const AffineTaskSet t = build_limit_rows(model, s, map, red);
  // All biped joints have torque and position limits: 2n + 2n rows.
  EXPECT_EQ(t.inequality_count(), 4 * model.joint_count());

  std::normal_distribution<double> unit(0.0, 1.0);
  VecX y(red.dimension());
  for (int i = 0; i < y.size(); ++i) y[i] = unit(rng);
  const VecX rows = t.ineq_matrix * y + t.ineq_vector;
  const VecX tau = map.evaluate(y);
  VecX lower, upper;
  joint_accel_bounds(model, s, LimitOptions{}, lower, upper);

  const int n = model.joint_count();
  for (int j = 0; j < n; ++j) {
    EXPECT_NEAR(rows[2 * j], tau[j] - model.joints[j].limits.torque_max, 1e-9);
    EXPECT_NEAR(rows[2 * j + 1], model.joints[j].limits.torque_min - tau[j], 1e-9);
    EXPECT_NEAR(rows[2 * n + 2 * j], y[j] - upper[j], 1e-9);
    EXPECT_NEAR(rows[2 * n + 2 * j + 1], lower[j] - y[j], 1e-9);
  }
}

TEST(Tasks, UnboundedJointsEmitNoRows) {
  RobotModel model = testutil::pendulum2();  // no limits declared
  const RobotState s = RobotState::neutral(model);
  const ContactSet contacts;  // no contacts
  const DynamicsData d = DynamicsData::compute(model, s, contacts, kGravity);
  const VariableLayout red = VariableLayout::reduced(model.joint_count(), 0);
  const TorqueMap map = build_torque_map(d, red);
  const AffineTaskSet t = build_limit_rows(model, s, map, red);
  EXPECT_EQ(t.inequality_count(), 0);
}

// Kinematic and force expressions of the momentum rate agree on any tuple
// satisfying the equations of motion.
TEST(Tasks, MomentumFormsAgreeOnConsistentTuples) {
  const RobotModel model = biped();
  std::mt19937 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const RobotState s = testutil::random_state(model, rng, 0.3, 0.6);
    const ContactSet contacts = ContactSet::all_active(model);
    const DynamicsData d = DynamicsData::compute(model, s, contacts, kGravity);
    const ConsistentTuple tp = consistent_tuple(model, s, d, rng);
    const VariableLayout red = VariableLayout::reduced(model.joint_count(), 2);
    VecX y(red.dimension());
    y << tp.qdd, tp.lambda;

    Vec6 hdot_ref;
    hdot_ref << 1.0, -2.0, 3.0, 0.2, -0.4, 0.1;
    const AffineTaskSet kin = build_momentum_task(d, hdot_ref, red, MomentumForm::kinematic);
    const AffineTaskSet frc = build_momentum_task(d, hdot_ref, red, MomentumForm::force);
    const VecX r_kin = kin.eq_matrix * y + kin.eq_vector;
    const VecX r_frc = frc.eq_matrix * y + frc.eq_vector;
    EXPECT_LT((r_kin - r_frc).cwiseAbs().maxCoeff(), 1e-5) << "trial " << trial;

    const AffineTaskSet lin = build_momentum_task(d, hdot_ref, red, MomentumForm::force, true);
    EXPECT_EQ(lin.equality_count(), 3);
    EXPECT_LT((lin.eq_matrix * y + lin.eq_vector - r_frc.head<3>()).cwiseAbs().maxCoeff(),
              1e-12);
  }
}

TEST(Tasks, MomentumPdReference) {
  Vec6 p, dgain;
  p << 25, 25, 25, 0, 0, 0;
  dgain << 10, 10, 10, 8, 8, 8;
  const double mass = 50.0;
  const Vec3 com(0.0, 0.1, 0.8);
  const Vec3 com_des(0.02, 0.1, 0.8);
  Vec6 h;
  h << 1.0, 0.0, -0.5, 0.1, 0.2, 0.0;
  const Vec6 h_des = Vec6::Zero();
  const Vec6 hdot_des = Vec6::Zero();
  const Vec6 out =
      momentum_pd_reference(mass, com, com_des, h, h_des, hdot_des, p, dgain);
  EXPECT_NEAR(out[0], 25.0 * mass * 0.02 + 10.0 * (-1.0), 1e-12);
  EXPECT_NEAR(out[3], 8.0 * (-0.1), 1e-12);
}

TEST(Tasks, PostureTaskZeroAtTarget) {
  const RobotModel model = biped();
  const RobotState s = RobotState::neutral(model);
  PostureReference ref;
  ref.q = s.q;
  ref.base_position = s.base_position;
  ref.base_orientation = s.base_orientation;
  const VariableLayout red = VariableLayout::reduced(model.joint_count(), 2);
  const AffineTaskSet t =
      build_posture_task(model, s, ref, PostureGains{}, red, true);
  EXPECT_EQ(t.equality_count(), model.joint_count() + 6);
  // At the target with zero velocity the preferred acceleration is zero.
  EXPECT_LT(t.eq_vector.cwiseAbs().maxCoeff(), 1e-12);
  // Rows select accelerations: residual at y = 0 equals eq_vector.
  const VecX y = VecX::Zero(red.dimension());
  EXPECT_LT((t.eq_matrix * y + t.eq_vector).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Tasks, PostureTaskPdSign) {
  const RobotModel model = biped();
  RobotState s = RobotState::neutral(model);
  PostureReference ref;
  ref.q = s.q;
  ref.q[2] += 0.1;  // target ahead of current
  const PostureGains gains;
  const VariableLayout red = VariableLayout::reduced(model.joint_count(), 2);
  const AffineTaskSet t = build_posture_task(model, s, ref, gains, red, false);
  EXPECT_EQ(t.equality_count(), model.joint_count());
  // Row j: qdd_j + vec = 0 -> desired qdd = -vec = P * err > 0.
  EXPECT_NEAR(-t.eq_vector[2], gains.joint_p * 0.1, 1e-12);
}

TEST(Tasks, ForceRegularizerTargets) {
  const RobotModel model = biped();
  const RobotState s = RobotState::neutral(model);
  const ContactSet contacts = ContactSet::all_active(model);
  const DynamicsData d = DynamicsData::compute(model, s, contacts, kGravity);
  const VariableLayout red = VariableLayout::reduced(model.joint_count(), 2);
  const VecX targets = default_force_targets(d);
  // Even weight split between two contacts.
  EXPECT_NEAR(targets[2] + targets[8], model.total_mass() * 9.81, 1e-9);
  EXPECT_NEAR(targets[2], targets[8], 1e-12);

  const AffineTaskSet t = build_force_regularizer(d, red, targets, 1e-3);
  VecX y = VecX::Zero(red.dimension());
  y.segment(red.force_offset(), red.force_dim()) = targets;
  EXPECT_LT((t.eq_matrix * y + t.eq_vector).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(t.eq_weight[0], 1e-3, 1e-15);
}

TEST(Tasks, MotionTaskResidual) {
  const RobotModel model = biped();
  std::mt19937 rng(19);
  const RobotState s = testutil::random_state(model, rng, 0.2, 0.5);
  const Kinematics kin = forward_kinematics(model, s);
  const MatX jac = end_effector_jacobian(model, kin, 0);
  const VecX drift = end_effector_drift(model, s, 0);
  const VariableLayout red = VariableLayout::reduced(model.joint_count(), 2);
  Vec6 ref;
  ref << 0.1, -0.2, 0.3, 0.0, 0.1, 0.0;
  const AffineTaskSet t = build_motion_task(jac, drift, ref, red);

  std::normal_distribution<double> unit(0.0, 1.0);
  VecX y = VecX::Zero(red.dimension());
  for (int i = 0; i < red.accel_dim(); ++i) y[i] = unit(rng);
  const VecX resid = t.eq_matrix * y + t.eq_vector;
  const VecX expect = jac * y.head(red.accel_dim()) + drift - ref;
  EXPECT_LT((resid - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Tasks, CycleContextNewtonEulerRows) {
  const RobotModel model = biped();
  std::mt19937 rng(23);
  const RobotState s = testutil::random_state(model, rng, 0.2, 0.4);
  const ContactSet contacts = ContactSet::all_active(model);
  DynamicsData d = DynamicsData::compute(model, s, contacts, kGravity);
  const VariableLayout red = VariableLayout::reduced(model.joint_count(), 2);
  const auto ctx = CycleContext::make(model, s, d, red, 0.01, LimitOptions{});

  const ConsistentTuple tp = consistent_tuple(model, s, d, rng);
  VecX y(red.dimension());
  y << tp.qdd, tp.lambda;
  EXPECT_LT((ctx->newton_euler_rows * y + ctx->newton_euler_rhs).cwiseAbs().maxCoeff(),
            1e-7);
  EXPECT_LT((ctx->torque_map.evaluate(y) - tp.tau).cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_EQ(static_cast<int>(ctx->patch.size()), 2);
  EXPECT_EQ(ctx->torque_lower.size(), model.joint_count());
}

}  // namespace
