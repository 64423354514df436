#include <hidyn/experiment.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace hidyn {
namespace {

nlohmann::json minimal() {
  return {{"model", std::string(HIDYN_MODELS_DIR) + "/biped14.json"}};
}

TEST(ExperimentConfig, RequiresModelPath) {
  EXPECT_THROW(experiment_from_json(nlohmann::json::object()), ExperimentError);
}

TEST(ExperimentConfig, DefaultsMatchControllerDefaults) {
  const ExperimentConfig cfg = experiment_from_json(minimal());
  EXPECT_EQ(cfg.controller, "balance");
  EXPECT_DOUBLE_EQ(cfg.duration, 5.0);
  EXPECT_DOUBLE_EQ(cfg.control.dt, 1e-3);
  EXPECT_DOUBLE_EQ(cfg.episode.duration, cfg.duration);
  EXPECT_TRUE(cfg.disturbances.empty());
  EXPECT_TRUE(cfg.initial_posture.empty());
}

TEST(ExperimentConfig, ParsesNestedSections) {
  nlohmann::json j = minimal();
  j["controller"] = "tracking";
  j["duration"] = 2.0;
  j["control"] = {{"dt", 2e-3},
                  {"cop_margin", 0.02},
                  {"formulation", "full"},
                  {"gains", {{"com_p", {1.0, 2.0, 3.0}}, {"momentum_p", {1, 2, 3, 4, 5, 6}}}},
                  {"weights", {{"swing", 7.0}}},
                  {"tracking_frequency", 0.5}};
  j["sim"] = {{"dt", 2e-3}, {"ground_height", 0.1}};
  j["cascade"] = {{"top_slack_tolerance", 1e-5}};
  j["audit"] = {{"dynamics_residual", 1e-7}};
  j["initial_posture"] = {{"left_knee", 0.5}};
  j["disturbances"] = {{{"kind", "constant"},
                        {"link", "pelvis"},
                        {"wrench", {1, 2, 3, 4, 5, 6}},
                        {"start", 0.5},
                        {"duration", 0.1}}};

  const ExperimentConfig cfg = experiment_from_json(j);
  EXPECT_EQ(cfg.controller, "tracking");
  EXPECT_DOUBLE_EQ(cfg.control.dt, 2e-3);
  EXPECT_DOUBLE_EQ(cfg.control.limits.dt, 2e-3);
  EXPECT_DOUBLE_EQ(cfg.control.cop_margin, 0.02);
  EXPECT_EQ(cfg.control.formulation, Formulation::full);
  EXPECT_DOUBLE_EQ(cfg.control.gains.com_p.y(), 2.0);
  EXPECT_DOUBLE_EQ(cfg.control.gains.momentum_p[5], 6.0);
  EXPECT_DOUBLE_EQ(cfg.control.weights.swing, 7.0);
  EXPECT_DOUBLE_EQ(cfg.control.tracking_frequency, 0.5);
  EXPECT_DOUBLE_EQ(cfg.sim.ground_height, 0.1);
  EXPECT_DOUBLE_EQ(cfg.episode.cascade.top_slack_tolerance, 1e-5);
  EXPECT_DOUBLE_EQ(cfg.episode.audit.dynamics_residual, 1e-7);
  EXPECT_DOUBLE_EQ(cfg.initial_posture.at("left_knee"), 0.5);
  ASSERT_EQ(cfg.disturbances.size(), 1u);
  EXPECT_EQ(cfg.disturbances[0].kind, Disturbance::Kind::constant);
  EXPECT_EQ(cfg.disturbances[0].link, "pelvis");
  EXPECT_DOUBLE_EQ(cfg.disturbances[0].wrench[2], 3.0);
}

TEST(ExperimentConfig, RejectsMalformedFields) {
  nlohmann::json bad_vec = minimal();
  bad_vec["control"] = {{"gravity", {0.0, -9.81}}};
  EXPECT_THROW(experiment_from_json(bad_vec), ExperimentError);

  nlohmann::json bad_form = minimal();
  bad_form["control"] = {{"formulation", "bogus"}};
  EXPECT_THROW(experiment_from_json(bad_form), ExperimentError);

  nlohmann::json bad_kind = minimal();
  bad_kind["disturbances"] = {{{"kind", "gust"}}};
  EXPECT_THROW(experiment_from_json(bad_kind), ExperimentError);
}

TEST(ExperimentConfig, OverridesPatchDottedPaths) {
  const std::vector<std::string> overrides = {
      "duration=2.5", "control.weights.swing=5", "controller=tracking"};
  const ExperimentConfig cfg = experiment_from_json(minimal(), overrides);
  EXPECT_DOUBLE_EQ(cfg.duration, 2.5);
  EXPECT_DOUBLE_EQ(cfg.control.weights.swing, 5.0);
  // A value that is not valid JSON falls back to a plain string.
  EXPECT_EQ(cfg.controller, "tracking");
}

TEST(ExperimentConfig, OverrideWithoutEqualsThrows) {
  EXPECT_THROW(experiment_from_json(minimal(), {"duration"}), ExperimentError);
  EXPECT_THROW(experiment_from_json(minimal(), {"=3"}), ExperimentError);
}

TEST(ExperimentConfig, EnvironmentRedirectsOutputDir) {
  ::setenv("HIDYN_OUTPUT_DIR", "/tmp/hidyn_env_test", 1);
  nlohmann::json j = minimal();
  j["output_dir"] = "ignored";
  const ExperimentConfig cfg = experiment_from_json(j);
  ::unsetenv("HIDYN_OUTPUT_DIR");
  EXPECT_EQ(cfg.output_dir, "/tmp/hidyn_env_test");
}

TEST(ExperimentConfig, LoadResolvesRelativeModelPath) {
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "hidyn_cfg_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "exp.json");
    out << R"({"model": "sub/robot.json"})";
  }
  const ExperimentConfig cfg = load_experiment((dir / "exp.json").string());
  EXPECT_EQ(cfg.model_file, (dir / "sub/robot.json").string());
  EXPECT_THROW(load_experiment((dir / "missing.json").string()), ExperimentError);
  {
    std::ofstream out(dir / "broken.json");
    out << "{not json";
  }
  EXPECT_THROW(load_experiment((dir / "broken.json").string()), ExperimentError);
  std::filesystem::remove_all(dir);
}

TEST(ExperimentInitialState, AppliesPostureAndSettles) {
  const RobotModel model = load_model(std::string(HIDYN_MODELS_DIR) + "/biped14.json");
  ExperimentConfig cfg;
  cfg.initial_posture = {{"left_knee", 0.7},
                         {"left_hip_pitch", -0.35},
                         {"left_ankle_pitch", -0.35},
                         {"right_knee", 0.7},
                         {"right_hip_pitch", -0.35},
                         {"right_ankle_pitch", -0.35}};
  const RobotState state = initial_state(model, cfg);
  for (int i = 0; i < model.joint_count(); ++i) {
    if (model.joints[i].name == "left_knee") EXPECT_DOUBLE_EQ(state.q[i], 0.7);
  }

  // Settled: the lowest support corner touches the ground exactly.
  const Kinematics kin = forward_kinematics(model, state);
  double lowest = std::numeric_limits<double>::max();
  for (int ee = 0; ee < static_cast<int>(model.end_effectors.size()); ++ee) {
    const Transform pose = end_effector_pose(model, kin, ee);
    const SupportPatch& p = model.end_effectors[ee].patch;
    for (const double x : {p.x_plus, -p.x_minus}) {
      for (const double y : {p.y_plus, -p.y_minus}) {
        lowest = std::min(lowest, (pose * Vec3(x, y, 0.0)).z());
      }
    }
  }
  EXPECT_NEAR(lowest, 0.0, 1e-12);

  cfg.initial_posture = {{"left_elbow", 0.3}};
  EXPECT_THROW(initial_state(model, cfg), ExperimentError);
}

TEST(ExperimentScenario, ShortBalanceEpisodeRunsClean) {
  nlohmann::json j = minimal();
  j["duration"] = 0.15;
  const ExperimentConfig cfg = experiment_from_json(j);
  const ScenarioResult result = run_scenario(cfg);
  EXPECT_EQ(result.summary.cycles, 150);
  EXPECT_FALSE(result.summary.failed);
  EXPECT_EQ(result.summary.audit_violation_cycles, 0);
  EXPECT_TRUE(result.pass);
  EXPECT_EQ(static_cast<int>(result.log.records.size()), 150);
  EXPECT_TRUE(result.metrics.contains("com_target"));
}

TEST(ExperimentScenario, WritesCsvAndSummary) {
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "hidyn_out_test";
  std::filesystem::remove_all(dir);
  nlohmann::json j = minimal();
  j["duration"] = 0.05;
  j["output_dir"] = dir.string();
  const ExperimentConfig cfg = experiment_from_json(j);
  run_scenario(cfg);
  EXPECT_TRUE(std::filesystem::exists(dir / "balance.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "balance.json"));
  std::ifstream in(dir / "balance.json");
  const nlohmann::json summary = nlohmann::json::parse(in);
  EXPECT_TRUE(summary.contains("pass"));
  EXPECT_TRUE(summary.contains("metrics"));
  std::filesystem::remove_all(dir);
}

TEST(ExperimentScenario, UnknownControllerThrows) {
  nlohmann::json j = minimal();
  j["controller"] = "hopping";
  const ExperimentConfig cfg = experiment_from_json(j);
  EXPECT_THROW(run_scenario(cfg), ExperimentError);
}

}  // namespace
}  // namespace hidyn
