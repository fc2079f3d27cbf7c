#include <gtest/gtest.h>

#include <filesystem>

#include "holofit/default_assets.hpp"
#include "holofit/io.hpp"
#include "holofit/synth.hpp"
#include "test_util.hpp"

using namespace holofit;
using holofit::testing::throws_kind;
using io::json;

namespace {

class IoTest : public ::testing::Test {
 protected:
  SkeletonModel model = default_skeleton();
  BiomechanicalLimits limits = default_limits(model);
  CameraIntrinsics cam;
  KeypointLayout layout = default_layout(model);

  MotionSequence clip(int frames = 3) {
    SynthOptions opt;
    opt.frames = frames;
    return synthesize(model, cam, layout, limits, opt, 9).motion;
  }
};

}  // namespace

TEST_F(IoTest, ModelRoundTrip) {
  const json a = io::model_to_json(model);
  const SkeletonModel back = io::model_from_json(a);
  EXPECT_EQ(io::model_to_json(back), a);
  EXPECT_EQ(back.joint_count(), model.joint_count());
}

TEST_F(IoTest, LimitsRoundTrip) {
  const json a = io::limits_to_json(limits, model);
  EXPECT_EQ(io::limits_to_json(io::limits_from_json(a, model), model), a);
}

TEST_F(IoTest, LimitsRejectInvertedInterval) {
  json a = io::limits_to_json(limits, model);
  auto& bones = a["bone_intervals"];
  const std::string name = bones.begin().key();
  bones[name] = {0.5, 0.1};
  EXPECT_TRUE(throws_kind(ErrorKind::InvalidInterval, [&] { io::limits_from_json(a, model); }));
}

TEST_F(IoTest, LimitsRejectClockwiseHull) {
  json a = io::limits_to_json(limits, model);
  auto& hulls = a["angle_hulls"];
  ASSERT_FALSE(hulls.empty());
  const std::string name = hulls.begin().key();
  json rev = json::array();
  for (auto it = hulls[name].rbegin(); it != hulls[name].rend(); ++it) rev.push_back(*it);
  hulls[name] = rev;
  EXPECT_TRUE(throws_kind(ErrorKind::DegenerateHull, [&] { io::limits_from_json(a, model); }));
}

TEST_F(IoTest, CameraAndLayoutRoundTrip) {
  cam.fx = 812.5;
  cam.cy = 200.0;
  const json c = io::camera_to_json(cam);
  EXPECT_EQ(io::camera_to_json(io::camera_from_json(c)), c);
  const json l = io::layout_to_json(layout);
  EXPECT_EQ(io::layout_to_json(io::layout_from_json(l)), l);
}

TEST_F(IoTest, CameraErrors) {
  EXPECT_TRUE(throws_kind(ErrorKind::ParseError, [] { io::camera_from_json({{"fx", 1.0}, {"fy", 1.0}, {"cx", 0.0}}); }));
  EXPECT_TRUE(throws_kind(ErrorKind::ParseError,
                          [] { io::camera_from_json({{"fx", -1.0}, {"fy", 1.0}, {"cx", 0.0}, {"cy", 0.0}}); }));
}

TEST_F(IoTest, MotionRoundTrip) {
  const MotionSequence m = clip();
  const json a = io::motion_to_json(m);
  const MotionSequence back = io::motion_from_json(a, model);
  EXPECT_EQ(io::motion_to_json(back), a);
  ASSERT_EQ(back.frames.size(), 3u);
  EXPECT_EQ(back.frames[1].theta_h, m.frames[1].theta_h);
  EXPECT_EQ(back.frames[2].transl, m.frames[2].transl);
}

TEST_F(IoTest, HandsOnlyMotion) {
  MotionSequence m = clip(2);
  m.hands_only = true;
  const json a = io::motion_to_json(m);
  EXPECT_FALSE(a["frames"][0].contains("theta_b"));
  const MotionSequence back = io::motion_from_json(a, model);
  EXPECT_TRUE(back.hands_only);
  EXPECT_EQ(back.frames[0].theta_h, m.frames[0].theta_h);
  EXPECT_EQ(back.frames[0].theta_b, MotionState::rest(model).theta_b);
}

TEST_F(IoTest, MotionErrors) {
  json a = io::motion_to_json(clip(1));
  json bad = a;
  bad["shape"] = {1.0, 2.0};
  EXPECT_TRUE(throws_kind(ErrorKind::ModelMismatch, [&] { io::motion_from_json(bad, model); }));
  bad = a;
  bad["frames"][0].erase("theta_h");
  EXPECT_TRUE(throws_kind(ErrorKind::ParseError, [&] { io::motion_from_json(bad, model); }));
  bad = a;
  bad["frames"] = json::array();
  EXPECT_TRUE(throws_kind(ErrorKind::ParseError, [&] { io::motion_from_json(bad, model); }));
  bad = a;
  bad["fps"] = "thirty";
  EXPECT_TRUE(throws_kind(ErrorKind::ParseError, [&] { io::motion_from_json(bad, model); }));
}

TEST(FitConfigIo, RoundTrip) {
  FitConfig c;
  c.optimizer = OptimizerKind::Lbfgs;
  c.seed = 17;
  c.weights.lambda_smooth = 3.5;
  c.objective.robust_sigma = 40.0;
  const json a = io::fit_config_to_json(c);
  EXPECT_EQ(io::fit_config_to_json(io::fit_config_from_json(a)), a);
}

TEST(FitConfigIo, PartialOverridesKeepDefaults) {
  const FitConfig c = io::fit_config_from_json({{"total_steps", 12}, {"weights", {{"lambda_J", 2.0}}}});
  const FitConfig d;
  EXPECT_EQ(c.total_steps, 12);
  ASSERT_EQ(c.stages.size(), 5u);
  EXPECT_EQ(c.stages[0].steps, 3);
  EXPECT_EQ(c.weights.lambda_J, 2.0);
  EXPECT_EQ(c.weights.lambda_ja, d.weights.lambda_ja);
  EXPECT_EQ(c.adam.lr, d.adam.lr);
}

TEST(FitConfigIo, NullSigmaMeansSquaredError) {
  const FitConfig c = io::fit_config_from_json({{"objective", {{"robust_sigma", nullptr}}}});
  EXPECT_TRUE(std::isinf(c.objective.robust_sigma));
}

TEST(FitConfigIo, Errors) {
  EXPECT_TRUE(throws_kind(ErrorKind::InvalidConfig, [] { io::fit_config_from_json({{"learning_rat", 0.1}}); }));
  EXPECT_TRUE(throws_kind(ErrorKind::InvalidConfig, [] { io::fit_config_from_json({{"weights", {{"lambda_x", 1}}}}); }));
  EXPECT_TRUE(throws_kind(ErrorKind::InvalidConfig, [] { io::fit_config_from_json({{"optimizer", "sgd"}}); }));
  EXPECT_TRUE(
      throws_kind(ErrorKind::InvalidConfig, [] { io::fit_config_from_json({{"stages", {{{"steps", 1}, {"x", 0}}}}}); }));
  EXPECT_TRUE(throws_kind(ErrorKind::ParseError, [] { io::fit_config_from_json({{"seed", "abc"}}); }));
  EXPECT_TRUE(throws_kind(ErrorKind::ParseError, [] { io::fit_config_from_json({{"stages", {{{"w_hand", 1}}}}}); }));
}

TEST(CodebookIo, RoundTripAndErrors) {
  Codebook b;
  b.kind = CodebookKind::Linguistic;
  b.codes = {{1, 2, 3}, {-1, 0.5, 2}};
  const json a = io::codebook_to_json(b);
  const Codebook back = io::codebook_from_json(a);
  EXPECT_EQ(back.codes, b.codes);
  EXPECT_EQ(back.kind, CodebookKind::Linguistic);
  json bad = a;
  bad["codes"][1] = {1.0, 2.0};
  EXPECT_TRUE(throws_kind(ErrorKind::ParseError, [&] { io::codebook_from_json(bad); }));
  bad = a;
  bad["kind"] = "audio";
  EXPECT_TRUE(throws_kind(ErrorKind::ParseError, [&] { io::codebook_from_json(bad); }));
}

TEST(FeaturesIo, RoundTripWithOptionalFields) {
  const json a = {{"d", 2},
                  {"items",
                   {{{"id", "a"}, {"motion", {1.0, 2.0}}, {"prompt", {0.5, 0.5}}, {"positive_id", "a"}, {"group", "g1"}},
                    {{"id", "b"}, {"motion", {3.0, 4.0}}}}}};
  const FeatureSet s = io::features_from_json(a);
  ASSERT_EQ(s.items.size(), 2u);
  EXPECT_EQ(*s.items[0].group, "g1");
  EXPECT_FALSE(s.items[1].prompt.has_value());
  EXPECT_EQ(io::features_to_json(s), a);
}

TEST(FeaturesIo, NumericIdsBecomeStrings) {
  const FeatureSet s = io::features_from_json({{"d", 1}, {"items", {{{"id", 7}, {"motion", {1.0}}, {"group", 3}}}}});
  EXPECT_EQ(s.items[0].id, "7");
  EXPECT_EQ(*s.items[0].group, "3");
}

TEST(FeaturesIo, WidthMismatch) {
  EXPECT_TRUE(throws_kind(ErrorKind::ParseError,
                          [] { io::features_from_json({{"d", 2}, {"items", {{{"id", "a"}, {"motion", {1.0}}}}}}); }));
}

TEST(JointsIo, RoundTripAndErrors) {
  JointSequence s;
  s.fps = 25.0;
  s.joints = {"a", "b"};
  s.frames = {{{0, 0, 0}, {1, 2, 3}}, {{0.5, 0, 0}, {1, 2, 4}}};
  const json a = io::joints_to_json(s);
  const JointSequence back = io::joints_from_json(a);
  EXPECT_EQ(back.fps, 25.0);
  EXPECT_EQ(back.joints, s.joints);
  EXPECT_EQ(io::joints_to_json(back), a);
  json bad = a;
  bad["frames"][1].erase(1);
  EXPECT_TRUE(throws_kind(ErrorKind::ShapeError, [&] { io::joints_from_json(bad); }));
  bad = a;
  bad["joints"] = {"a"};
  EXPECT_TRUE(throws_kind(ErrorKind::ShapeError, [&] { io::joints_from_json(bad); }));
}

TEST(FileIo, MissingFileAndBadJson) {
  const auto dir = std::filesystem::temp_directory_path() / "holofit_io_test";
  std::filesystem::create_directories(dir);
  EXPECT_TRUE(throws_kind(ErrorKind::Io, [&] { io::read_json((dir / "absent.json").string()); }));
  const std::string bad = (dir / "bad.json").string();
  io::write_text(bad, "{ \"a\": ");
  EXPECT_TRUE(throws_kind(ErrorKind::ParseError, [&] { io::read_json(bad); }));
  const std::string good = (dir / "good.json").string();
  io::write_json(good, {{"a", 1}});
  EXPECT_EQ(io::read_json(good)["a"], 1);
  std::filesystem::remove_all(dir);
}
