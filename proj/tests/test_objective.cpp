#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "gradcheck.hpp"
#include "holofit/default_assets.hpp"
#include "holofit/objective.hpp"
#include "holofit/optimizer.hpp"
#include "holofit/random.hpp"
#include "holofit/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace holofit;
using holofit::testing::throws_kind;

namespace {
Vec3<double> normalized(Vec3<double> v) { return v / norm(v); }
}  // namespace

TEST(IntervalPenalty, Examples) {
  EXPECT_DOUBLE_EQ(interval_penalty(0.5, 0.0, 1.0), 0.0);
  EXPECT_NEAR(interval_penalty(1.3, 0.0, 1.0), 0.09, 1e-15);
  EXPECT_DOUBLE_EQ(interval_penalty(-2.0, 0.0, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(interval_penalty(0.0, 0.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(interval_penalty(1.0, 0.0, 1.0), 0.0);
}

TEST(IntervalPenalty, ContinuouslyDifferentiableAtTheEnds) {
  const double h = 1e-8;
  for (double edge : {0.0, 1.0}) {
    const double right = (interval_penalty(edge + h, 0.0, 1.0) - interval_penalty(edge, 0.0, 1.0)) / h;
    const double left = (interval_penalty(edge, 0.0, 1.0) - interval_penalty(edge - h, 0.0, 1.0)) / h;
    EXPECT_NEAR(right, 0.0, 1e-7);
    EXPECT_NEAR(left, 0.0, 1e-7);
  }
}

TEST(IntervalPenalty, RejectsReversedInterval) {
  EXPECT_TRUE(throws_kind(ErrorKind::InvalidInterval, [] { interval_penalty(0.0, 1.0, 0.0); }));
}

TEST(ShapePrior, ValueAndGradient) {
  const std::vector<double> beta = {3.0, 4.0};
  std::vector<double> g(2);
  EXPECT_DOUBLE_EQ(shape_prior(beta, g), 25.0);
  EXPECT_DOUBLE_EQ(g[0], 6.0);
  EXPECT_DOUBLE_EQ(g[1], 8.0);
}

// ---------------------------------------------------------------------------
// Hull geometry

TEST(ConvexHull, SquareWithInteriorPoint) {
  const std::vector<Vec2<double>> pts = {{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}};
  const Polygon h = convex_hull_2d(pts);
  ASSERT_EQ(h.size(), 4u);
  EXPECT_TRUE(is_ccw_convex(h));
  for (const auto& v : h) EXPECT_FALSE(v.x == 0.5 && v.y == 0.5);
}

TEST(ConvexHull, TriangleIsCounterclockwise) {
  const std::vector<Vec2<double>> pts = {{0, 0}, {0, 1}, {1, 0}};
  const Polygon h = convex_hull_2d(pts);
  ASSERT_EQ(h.size(), 3u);
  EXPECT_TRUE(is_ccw_convex(h));
}

TEST(ConvexHull, DropsCollinearBoundaryPoints) {
  const std::vector<Vec2<double>> pts = {{0, 0}, {0.5, 0}, {1, 0}, {1, 1}, {0, 1}};
  EXPECT_EQ(convex_hull_2d(pts).size(), 4u);
}

TEST(ConvexHull, Degenerate) {
  const std::vector<Vec2<double>> two = {{0, 0}, {1, 1}, {1, 1}};
  const std::vector<Vec2<double>> line = {{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  EXPECT_TRUE(throws_kind(ErrorKind::DegenerateHull, [&] { convex_hull_2d(two); }));
  EXPECT_TRUE(throws_kind(ErrorKind::DegenerateHull, [&] { convex_hull_2d(line); }));
}

TEST(ConvexHull, MatchesBruteForce) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vec2<double>> pts(50);
    for (auto& p : pts) p = {rng.normal(), rng.normal()};
    const Polygon h = convex_hull_2d(pts);
    ASSERT_TRUE(is_ccw_convex(h));
    std::set<std::pair<double, double>> got;
    for (const auto& v : h) got.insert({v.x, v.y});
    EXPECT_EQ(got, oracle::brute_force_hull(pts)) << "trial " << trial;
  }
}

TEST(HullDistance, Examples) {
  const Polygon square = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  EXPECT_DOUBLE_EQ(hull_distance({0.5, 0.5}, square), 0.0);
  EXPECT_DOUBLE_EQ(hull_distance({2.0, 0.5}, square), 1.0);
  EXPECT_NEAR(hull_distance({2.0, 2.0}, square), std::sqrt(2.0), 1e-15);
  EXPECT_TRUE(hull_contains({1.0, 0.3}, square));
}

TEST(HullDistance, MatchesSampledBoundaryAndWinding) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Vec2<double>> pts(12);
    for (auto& p : pts) p = {rng.normal(), rng.normal()};
    const Polygon h = convex_hull_2d(pts);
    for (int q = 0; q < 50; ++q) {
      const Vec2<double> p{2.0 * rng.normal(), 2.0 * rng.normal()};
      const bool inside = oracle::winding_number(p, h) != 0;
      EXPECT_EQ(hull_contains(p, h), inside);
      const double d = hull_distance(p, h);
      if (inside)
        EXPECT_EQ(d, 0.0);
      else
        EXPECT_NEAR(d, oracle::sampled_boundary_distance(p, h), 1e-6);
    }
  }
}

// ---------------------------------------------------------------------------
// Objective terms on the default skeleton

class ObjectiveTest : public ::testing::Test {
 protected:
  SkeletonModel model = default_skeleton();
  CameraIntrinsics cam;
  KeypointLayout kl = default_layout(model);
  BiomechanicalLimits limits = default_limits(model);

  MotionSequence rest_motion(int frames) const {
    MotionSequence m;
    m.shape.assign(model.shape_dim, 0.0);
    for (int t = 0; t < frames; ++t) {
      MotionState s = MotionState::rest(model);
      const auto r0 = matrix_to_rot6d(camera_facing_orientation());
      std::copy(r0.begin(), r0.end(), s.theta_b.begin());
      s.transl = {0.0, 0.0, 2.5};
      m.frames.push_back(s);
    }
    return m;
  }

  void set_local(MotionState& s, int joint, const Mat3<double>& r) const {
    const RotationSlot& slot = model.slot(joint);
    auto& v = slot.kind == RotationKind::Body ? s.theta_b : s.theta_h;
    const auto r6 = matrix_to_rot6d(r);
    std::copy(r6.begin(), r6.end(), v.begin() + slot.row * kRot6d);
  }

  TermArray raw(const MotionSequence& m, const KeypointSequence* kp = nullptr, ObjectiveOptions opt = {},
                BiomechanicalLimits lim = {}) const {
    if (lim.bone_intervals.empty()) lim = limits;
    ResolvedLayout rl = resolve_layout(kl, model);
    Objective obj(model, cam, kp, &rl, lim, ObjectiveWeights{}, opt);
    const ParamLayout pl = obj.layout(m.size(), false);
    return obj.evaluate(pack(m, pl), pl, m.shape, false).raw;
  }
};

TEST_F(ObjectiveTest, RestPoseIsFeasible) {
  const TermArray r = raw(rest_motion(3));
  for (Term t : {Term::PosePrior, Term::Shape, Term::Smooth, Term::AngleLimit, Term::BoneLength, Term::Palm,
                 Term::JointAngle})
    EXPECT_EQ(r[int(t)], 0.0) << kTermNames[int(t)];
  // exp(0) per bend joint per frame
  EXPECT_DOUBLE_EQ(r[int(Term::Bending)], 3.0 * model.subsets.bend.size());
}

TEST_F(ObjectiveTest, ReprojectionVanishesOnRenderedKeypoints) {
  const MotionSequence m = rest_motion(2);
  const KeypointSequence kp = render_keypoints(model, cam, kl, m);
  EXPECT_NEAR(raw(m, &kp)[int(Term::Reprojection)], 0.0, 1e-16);
}

TEST_F(ObjectiveTest, ReprojectionSingleOffset) {
  const MotionSequence m = rest_motion(1);
  KeypointSequence kp = render_keypoints(model, cam, kl, m);
  kp.frames[0].groups[0][4].u += 3.0;
  kp.frames[0].groups[0][4].v += 4.0;
  kp.frames[0].groups[0][4].confidence = 0.5;
  ObjectiveOptions plain;
  plain.robust_sigma = std::numeric_limits<double>::infinity();
  EXPECT_NEAR(raw(m, &kp, plain)[0], 0.5 * 25.0, 1e-9);
  ObjectiveOptions robust;  // sigma 100
  EXPECT_NEAR(raw(m, &kp, robust)[0], 0.5 * 25.0 * 1e4 / (25.0 + 1e4), 1e-9);
}

TEST_F(ObjectiveTest, ReprojectionIgnoresZeroConfidence) {
  const MotionSequence m = rest_motion(1);
  KeypointSequence kp = render_keypoints(model, cam, kl, m);
  for (auto& g : kp.frames[0].groups)
    for (auto& k : g) {
      k.u += 50.0;
      k.confidence = 0.0;
    }
  EXPECT_EQ(raw(m, &kp)[0], 0.0);
}

TEST_F(ObjectiveTest, ReprojectionHandWeight) {
  const MotionSequence m = rest_motion(1);
  KeypointSequence kp = render_keypoints(model, cam, kl, m);
  kp.frames[0].groups[1][3].u += 2.0;  // left hand slot
  ResolvedLayout rl = resolve_layout(kl, model);
  ObjectiveOptions plain;
  plain.robust_sigma = 0.0;
  Objective obj(model, cam, &kp, &rl, limits, ObjectiveWeights{}, plain);
  const ParamLayout pl = obj.layout(1, false);
  const auto x = pack(m, pl);
  EXPECT_NEAR(obj.evaluate(x, pl, m.shape, only(Term::Reprojection), false).value, 4.0, 1e-9);
  obj.set_group_weights(1.0, 2.0);
  EXPECT_NEAR(obj.evaluate(x, pl, m.shape, only(Term::Reprojection), false).value, 8.0, 1e-9);
}

TEST_F(ObjectiveTest, PosePriorUnitOffset) {
  MotionSequence m = rest_motion(2);
  m.frames[0].theta_b[1 * kRot6d + 2] += 1.0;  // a non-root body row
  m.frames[1].theta_h[5 * kRot6d + 3] += 1.0;
  EXPECT_NEAR(raw(m)[int(Term::PosePrior)], 2.0, 1e-12);
  // the root row is excluded
  MotionSequence r = rest_motion(1);
  r.frames[0].theta_b[0] += 1.0;
  EXPECT_EQ(raw(r)[int(Term::PosePrior)], 0.0);
}

TEST_F(ObjectiveTest, PosePriorFullPrecision) {
  const int dim = model.pose_prior_dim();
  Rng rng(9);
  std::vector<std::vector<double>> a(dim, std::vector<double>(dim));
  for (auto& row : a)
    for (double& v : row) v = 0.05 * rng.normal();
  model.pose_prior.precision.assign(dim, std::vector<double>(dim, 0.0));
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j)
      for (int k = 0; k < dim; ++k) model.pose_prior.precision[i][j] += a[i][k] * a[j][k];
  model.pose_prior.precision_diagonal.clear();
  model.pose_prior.mean.assign(dim, 0.0);
  for (double& v : model.pose_prior.mean) v = 0.1 * rng.normal();
  model.finalize();

  MotionSequence m = rest_motion(1);
  for (std::size_t i = kRot6d; i < m.frames[0].theta_b.size(); ++i) m.frames[0].theta_b[i] += 0.2 * rng.normal();
  for (double& v : m.frames[0].theta_h) v += 0.2 * rng.normal();

  std::vector<double> r;
  const auto& s = m.frames[0];
  for (std::size_t i = kRot6d; i < s.theta_b.size(); ++i) r.push_back(s.theta_b[i] - kIdentity6d[i % kRot6d]);
  for (std::size_t i = 0; i < s.theta_h.size(); ++i) r.push_back(s.theta_h[i] - kIdentity6d[i % kRot6d]);
  double want = 0.0;
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j)
      want += (r[i] - model.pose_prior.mean[i]) * model.pose_prior.precision[i][j] * (r[j] - model.pose_prior.mean[j]);
  EXPECT_NEAR(raw(m)[int(Term::PosePrior)], want, 1e-10 * std::max(1.0, want));
}

TEST_F(ObjectiveTest, BendingFollowsHyperextension) {
  const BendJoint& knee = model.subsets.bend[0];
  const Vec3<double> axis = knee.hyperextension_axis / norm(knee.hyperextension_axis);
  ObjectiveOptions opt;
  opt.bend_gain = 10.0;
  const double others = double(model.subsets.bend.size() - 1);
  double prev = -1.0;
  for (double kappa : {-1.0, -0.5, 0.0, 0.3, 0.8}) {
    MotionSequence m = rest_motion(1);
    set_local(m.frames[0], knee.joint, axis_angle_matrix(axis, kappa));
    const double b = raw(m, nullptr, opt)[int(Term::Bending)];
    EXPECT_NEAR(b, others + std::exp(10.0 * kappa), 1e-9 * std::exp(10.0 * kappa) + 1e-12);
    EXPECT_GT(b, prev);
    prev = b;
  }
}

TEST_F(ObjectiveTest, SmoothMagnitudeAndVelocity) {
  ASSERT_FALSE(model.subsets.smooth_body.empty());
  const int spine = model.subsets.smooth_body[0];
  const int elbow = model.index_of("left_elbow");
  const std::array<double, 6> v = {0.1, -0.2, 0.05, 0.0, 0.3, 0.1};
  double vv = 0.0;
  for (double e : v) vv += e * e;

  EXPECT_EQ(raw(rest_motion(4))[int(Term::Smooth)], 0.0);

  // constant offset on a smoothed row: magnitude only
  MotionSequence c = rest_motion(4);
  for (auto& s : c.frames)
    for (int k = 0; k < kRot6d; ++k) s.theta_b[model.slot(spine).row * kRot6d + k] += v[k];
  EXPECT_NEAR(raw(c)[int(Term::Smooth)], 4.0 * vv, 1e-12);

  // one step on a row outside the subsets: velocity only
  MotionSequence d = rest_motion(2);
  for (int k = 0; k < kRot6d; ++k) d.frames[1].theta_b[model.slot(elbow).row * kRot6d + k] += v[k];
  EXPECT_NEAR(raw(d)[int(Term::Smooth)], vv, 1e-12);

  // adding the same offset to every frame leaves the velocity unchanged
  MotionSequence e = d;
  for (auto& s : e.frames)
    for (int k = 0; k < kRot6d; ++k) s.theta_b[model.slot(elbow).row * kRot6d + k] += 0.7;
  EXPECT_NEAR(raw(e)[int(Term::Smooth)], vv, 1e-12);
}

TEST_F(ObjectiveTest, AngleLimitOvershoot) {
  const int elbow = model.index_of("left_elbow");
  const Interval iv = limits.pose_angle_intervals.at(elbow);
  MotionSequence m = rest_motion(1);
  set_local(m.frames[0], elbow, axis_angle_matrix({0, 1, 0}, 0.5 * (iv.min + iv.max)));
  EXPECT_EQ(raw(m)[int(Term::AngleLimit)], 0.0);
  set_local(m.frames[0], elbow, axis_angle_matrix({0, 1, 0}, iv.max + 0.2));
  EXPECT_NEAR(raw(m)[int(Term::AngleLimit)], 0.04, 1e-12);

  // tightening the interval never lowers the penalty
  double prev = 0.0;
  for (double hi : {2.0, 1.5, 1.0, 0.5, 0.1}) {
    BiomechanicalLimits tight = limits;
    tight.pose_angle_intervals[elbow] = {0.0, hi};
    const double a = raw(m, nullptr, {}, tight)[int(Term::AngleLimit)];
    EXPECT_GE(a, prev);
    prev = a;
  }
}

TEST_F(ObjectiveTest, FlexionAbductionExamples) {
  const HandStructure& h = model.hands[0];
  const HandGeometry g = HandGeometry::build(model, 0);
  const FingerFrame& fr = g.fingers[1][1];
  const std::vector<double> zero(model.shape_dim, 0.0);
  MotionState s = MotionState::rest(model);

  auto fa = flexion_abduction(model, s, zero, h.fingers[1][1]);
  EXPECT_NEAR(fa.flexion, 0.0, 1e-12);
  EXPECT_NEAR(fa.abduction, 0.0, 1e-12);

  const Vec3<double> flex_axis = cross(fr.x, fr.z);
  for (double angle : {M_PI / 2, M_PI / 4}) {
    set_local(s, fr.joint, axis_angle_matrix(flex_axis, angle));
    fa = flexion_abduction(model, s, zero, fr.joint);
    EXPECT_NEAR(fa.flexion, angle, 1e-12);
    EXPECT_NEAR(fa.abduction, 0.0, 1e-12);
  }
  set_local(s, fr.joint, axis_angle_matrix(cross(fr.x, fr.y), 0.3));
  fa = flexion_abduction(model, s, zero, fr.joint);
  EXPECT_NEAR(fa.flexion, 0.0, 1e-12);
  EXPECT_NEAR(fa.abduction, 0.3, 1e-12);

  EXPECT_TRUE(throws_kind(ErrorKind::ModelMismatch, [&] { flexion_abduction(model, s, zero, 0); }));
}

TEST_F(ObjectiveTest, BoneLengthPenalty) {
  const int j = model.hands[1].fingers[2][1];
  const double len = norm(model.joints[j].rest_offset);
  BiomechanicalLimits lim = limits;
  lim.bone_intervals[j] = {len + 0.01, len + 0.02};
  EXPECT_NEAR(raw(rest_motion(2), nullptr, {}, lim)[int(Term::BoneLength)], 2.0 * 1e-4, 1e-15);
}

TEST_F(ObjectiveTest, JointAngleHullDistance) {
  const int j = model.hands[0].fingers[3][0];
  BiomechanicalLimits lim = limits;
  lim.angle_hulls[j] = rectangle({0.1, 1.0}, {-0.3, 0.3});  // rest (0, 0) is 0.1 outside
  EXPECT_NEAR(raw(rest_motion(1), nullptr, {}, lim)[int(Term::JointAngle)], 0.01, 1e-14);
}

TEST_F(ObjectiveTest, PalmPenaltyOutsideInterval) {
  const int j = model.hands[0].fingers[2][0];
  BiomechanicalLimits lim = limits;
  const Interval c = lim.curvature_intervals.at(j);
  const double centre = 0.5 * (c.min + c.max);
  lim.curvature_intervals[j] = {centre + 0.05, centre + 0.5};
  EXPECT_NEAR(raw(rest_motion(1), nullptr, {}, lim)[int(Term::Palm)], 0.0025, 1e-12);
}

TEST_F(ObjectiveTest, IncompleteLimitsRejected) {
  BiomechanicalLimits lim = limits;
  lim.bone_intervals.erase(model.hands[0].tips[4]);
  EXPECT_TRUE(throws_kind(ErrorKind::LimitsIncomplete,
                          [&] { Objective(model, cam, nullptr, nullptr, lim, ObjectiveWeights{}); }));
  lim = limits;
  lim.angle_hulls.erase(model.hands[1].fingers[0][0]);
  EXPECT_TRUE(throws_kind(ErrorKind::LimitsIncomplete,
                          [&] { Objective(model, cam, nullptr, nullptr, lim, ObjectiveWeights{}); }));
  lim = limits;
  auto& hull = lim.angle_hulls[model.hands[1].fingers[0][0]];
  std::reverse(hull.begin(), hull.end());
  EXPECT_TRUE(throws_kind(ErrorKind::DegenerateHull,
                          [&] { Objective(model, cam, nullptr, nullptr, lim, ObjectiveWeights{}); }));
}

TEST_F(ObjectiveTest, HandTermsIgnoreRigidMotion) {
  Rng rng(17);
  MotionSequence m = rest_motion(1);
  for (double& v : m.frames[0].theta_h) v += 0.4 * rng.normal();
  for (double& v : m.shape) v = rng.normal();
  const TermArray a = raw(m);
  ASSERT_GT(a[int(Term::JointAngle)] + a[int(Term::Palm)], 0.0);
  const auto r6 = matrix_to_rot6d(axis_angle_matrix(normalized({0.3, 0.9, -0.3}), 1.3) * camera_facing_orientation());
  std::copy(r6.begin(), r6.end(), m.frames[0].theta_b.begin());
  m.frames[0].transl = {0.4, -0.2, 3.3};
  const TermArray b = raw(m);
  for (Term t : {Term::BoneLength, Term::Palm, Term::JointAngle, Term::AngleLimit})
    EXPECT_NEAR(a[int(t)], b[int(t)], 1e-8 * std::max(1.0, a[int(t)])) << kTermNames[int(t)];
}

TEST_F(ObjectiveTest, TotalIsWeightedSum) {
  Rng rng(3);
  MotionSequence m = rest_motion(3);
  for (auto& s : m.frames) {
    for (double& v : s.theta_b) v += 0.2 * rng.normal();
    for (double& v : s.theta_h) v += 0.3 * rng.normal();
  }
  const KeypointSequence kp = render_keypoints(model, cam, kl, rest_motion(3));
  ResolvedLayout rl = resolve_layout(kl, model);
  Objective obj(model, cam, &kp, &rl, limits, ObjectiveWeights{});
  const ParamLayout pl = obj.layout(3, true);
  const Evaluation ev = obj.evaluate(pack(m, pl), pl, {}, false);
  double sum = 0.0;
  const TermArray c = ObjectiveWeights{}.coefficients();
  for (int k = 0; k < kTermCount; ++k) sum += c[k] * ev.raw[k];
  EXPECT_NEAR(ev.value, sum, 1e-12 * std::abs(sum));
}

TEST_F(ObjectiveTest, OnlyReprojectionWithPerfectKeypointsIsZero) {
  const MotionSequence m = rest_motion(2);
  const KeypointSequence kp = render_keypoints(model, cam, kl, m);
  ResolvedLayout rl = resolve_layout(kl, model);
  Objective obj(model, cam, &kp, &rl, limits, ObjectiveWeights{});
  const ParamLayout pl = obj.layout(2, false);
  const Evaluation ev = obj.evaluate(pack(m, pl), pl, m.shape, only(Term::Reprojection), true);
  EXPECT_NEAR(ev.value, 0.0, 1e-16);
  for (double g : ev.gradient) EXPECT_NEAR(g, 0.0, 1e-9);
}

TEST_F(ObjectiveTest, ThreadCountDoesNotChangeResults) {
  Rng rng(8);
  MotionSequence m = rest_motion(7);
  for (auto& s : m.frames)
    for (double& v : s.theta_h) v += 0.3 * rng.normal();
  const KeypointSequence kp = render_keypoints(model, cam, kl, rest_motion(7));
  ResolvedLayout rl = resolve_layout(kl, model);
  Objective obj(model, cam, &kp, &rl, limits, ObjectiveWeights{});
  const ParamLayout pl = obj.layout(7, true);
  const auto x = pack(m, pl);
  const Evaluation one = obj.evaluate(x, pl, {}, true);
  obj.set_threads(4);
  const Evaluation four = obj.evaluate(x, pl, {}, true);
  EXPECT_EQ(one.value, four.value);
  EXPECT_EQ(one.gradient, four.gradient);
}

TEST_F(ObjectiveTest, FrameCountMismatch) {
  const KeypointSequence kp = render_keypoints(model, cam, kl, rest_motion(2));
  ResolvedLayout rl = resolve_layout(kl, model);
  Objective obj(model, cam, &kp, &rl, limits, ObjectiveWeights{});
  const MotionSequence m = rest_motion(3);
  const ParamLayout pl = obj.layout(3, false);
  EXPECT_TRUE(throws_kind(ErrorKind::LayoutError, [&] { obj.evaluate(pack(m, pl), pl, m.shape, false); }));
}

TEST(Gradient, MatchesCentralDifferences) {
  const auto res = holofit::testing::run_gradcheck(10, 5, 101);
  for (int k = 0; k < kTermCount; ++k) {
    EXPECT_LT(res.max_rel_error[k], 1e-4) << kTermNames[k];
    EXPECT_GT(res.active[k], 0) << kTermNames[k] << " never active";
  }
  EXPECT_LT(res.total_max_rel_error, 1e-4);
}
