#pragma once

// Built-in 67-joint skeleton, its biomechanical limits and keypoint layout.
// Axes: y up, x toward the subject's left, z forward. Rest pose is a T-pose
// with the palms facing down.

#include <array>
#include <string>
#include <vector>

#include "holofit/body_model.hpp"
#include "holofit/hull.hpp"
#include "holofit/keypoints.hpp"
#include "holofit/objective.hpp"

namespace holofit {

namespace detail {

struct JointSpec {
  const char* name;
  int parent;
  Vec3<double> position;  // absolute rest position
};

inline constexpr std::array<const char*, kFingers> kFingerNames = {"thumb", "index", "middle", "ring", "pinky"};

// Offsets of the finger bases from the wrist and per-phalanx lengths, for
// the left hand (mirror x for the right).
struct FingerSpec {
  Vec3<double> base;
  Vec3<double> direction;
  std::array<double, 3> lengths;
};

inline std::array<FingerSpec, kFingers> finger_specs() {
  const Vec3<double> thumb_dir = Vec3<double>{0.6, -0.1, 0.8} / norm(Vec3<double>{0.6, -0.1, 0.8});
  return {{
      {{0.025, -0.01, 0.03}, thumb_dir, {0.035, 0.032, 0.028}},
      {{0.095, 0.0, 0.025}, {1, 0, 0}, {0.038, 0.024, 0.022}},
      {{0.097, 0.0, 0.003}, {1, 0, 0}, {0.043, 0.027, 0.024}},
      {{0.090, 0.0, -0.017}, {1, 0, 0}, {0.040, 0.026, 0.023}},
      {{0.080, 0.0, -0.035}, {1, 0, 0}, {0.031, 0.020, 0.020}},
  }};
}

}  // namespace detail

inline constexpr int kDefaultJointCount = 67;

/// The built-in skeleton: 23 body joints (root first), jaw, 2 x 15 finger
/// joints, 10 fingertips and 3 face landmarks.
inline SkeletonModel default_skeleton() {
  using detail::JointSpec;
  std::vector<JointSpec> spec = {
      {"pelvis", -1, {0, 0, 0}},
      {"left_hip", 0, {0.09, -0.08, 0}},
      {"right_hip", 0, {-0.09, -0.08, 0}},
      {"spine1", 0, {0, 0.11, -0.01}},
      {"left_knee", 1, {0.10, -0.46, 0.01}},
      {"right_knee", 2, {-0.10, -0.46, 0.01}},
      {"spine2", 3, {0, 0.24, 0}},
      {"left_ankle", 4, {0.10, -0.86, -0.03}},
      {"right_ankle", 5, {-0.10, -0.86, -0.03}},
      {"spine3", 6, {0, 0.30, 0.02}},
      {"left_foot", 7, {0.11, -0.92, 0.10}},
      {"right_foot", 8, {-0.11, -0.92, 0.10}},
      {"neck", 9, {0, 0.52, 0}},
      {"left_collar", 9, {0.07, 0.44, 0.01}},
      {"right_collar", 9, {-0.07, 0.44, 0.01}},
      {"head", 12, {0, 0.62, 0.03}},
      {"left_shoulder", 13, {0.18, 0.47, -0.01}},
      {"right_shoulder", 14, {-0.18, 0.47, -0.01}},
      {"left_elbow", 16, {0.44, 0.47, -0.03}},
      {"right_elbow", 17, {-0.44, 0.47, -0.03}},
      {"left_wrist", 18, {0.70, 0.47, -0.03}},
      {"right_wrist", 19, {-0.70, 0.47, -0.03}},
      {"face", 15, {0, 0.72, 0.06}},
      {"jaw", 15, {0, 0.66, 0.04}},
  };
  const auto fingers = detail::finger_specs();
  const std::array<int, 2> wrists = {20, 21};
  const std::array<const char*, 2> sides = {"left", "right"};
  std::array<std::array<std::array<int, kJointsPerFinger>, kFingers>, 2> finger_idx{};
  std::array<std::array<Vec3<double>, kFingers>, 2> last_pos{};
  for (int side = 0; side < 2; ++side) {
    const double mx = side == 0 ? 1.0 : -1.0;
    const Vec3<double> w = spec[wrists[side]].position;
    for (int f = 0; f < kFingers; ++f) {
      const auto& fs = fingers[f];
      const Vec3<double> dir{mx * fs.direction.x, fs.direction.y, fs.direction.z};
      Vec3<double> p = w + Vec3<double>{mx * fs.base.x, fs.base.y, fs.base.z};
      int parent = wrists[side];
      for (int k = 0; k < kJointsPerFinger; ++k) {
        finger_idx[side][f][k] = static_cast<int>(spec.size());
        spec.push_back({nullptr, parent, p});
        parent = finger_idx[side][f][k];
        p = p + fs.lengths[k] * dir;
      }
      last_pos[side][f] = p;  // end of the third phalanx
    }
  }
  std::vector<std::string> names(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i)
    if (spec[i].name != nullptr) names[i] = spec[i].name;
  for (int side = 0; side < 2; ++side)
    for (int f = 0; f < kFingers; ++f)
      for (int k = 0; k < kJointsPerFinger; ++k)
        names[finger_idx[side][f][k]] =
            std::string(sides[side]) + "_" + detail::kFingerNames[f] + std::to_string(k + 1);

  std::array<std::array<int, kFingers>, 2> tip_idx{};
  for (int side = 0; side < 2; ++side)
    for (int f = 0; f < kFingers; ++f) {
      tip_idx[side][f] = static_cast<int>(spec.size());
      spec.push_back({nullptr, finger_idx[side][f][2], last_pos[side][f]});
      names.push_back(std::string(sides[side]) + "_" + detail::kFingerNames[f] + "_tip");
    }
  spec.push_back({"nose", 22, {0, 0.66, 0.12}});
  spec.push_back({"forehead", 22, {0, 0.76, 0.10}});
  spec.push_back({"chin", 23, {0, 0.60, 0.09}});
  names.push_back("nose");
  names.push_back("forehead");
  names.push_back("chin");

  SkeletonModel m;
  m.name = "default-67";
  m.shape_dim = 10;
  m.expr_dim = 10;
  m.body_joint_count = 23;
  m.jaw_joint_index = 23;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    Joint j;
    j.name = names[i];
    j.parent = spec[i].parent;
    j.rest_offset = j.parent < 0 ? spec[i].position : spec[i].position - spec[spec[i].parent].position;
    j.shape_basis.assign(m.shape_dim, Vec3<double>{0, 0, 0});
    m.joints.push_back(std::move(j));
  }

  auto idx = [&](const std::string& n) {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == n) return static_cast<int>(i);
    return -1;
  };
  auto scale_along = [&](int component, std::initializer_list<const char*> joints, double factor) {
    for (const char* n : joints) {
      Joint& j = m.joints[idx(n)];
      j.shape_basis[component] = factor * j.rest_offset;
    }
  };
  auto shift = [&](int component, const char* n, Vec3<double> d) { m.joints[idx(n)].shape_basis[component] = d; };

  // 0: overall size.
  for (std::size_t i = 1; i < m.joints.size(); ++i) m.joints[i].shape_basis[0] = 0.05 * m.joints[i].rest_offset;
  // 1: arm length, 2: leg length, 3: torso length.
  scale_along(1, {"left_elbow", "right_elbow", "left_wrist", "right_wrist"}, 0.03);
  scale_along(2, {"left_knee", "right_knee", "left_ankle", "right_ankle"}, 0.03);
  scale_along(3, {"spine1", "spine2", "spine3", "neck"}, 0.03);
  // 4: shoulder width, 5: hip width.
  shift(4, "left_collar", {0.01, 0, 0});
  shift(4, "right_collar", {-0.01, 0, 0});
  shift(4, "left_shoulder", {0.005, 0, 0});
  shift(4, "right_shoulder", {-0.005, 0, 0});
  shift(5, "left_hip", {0.01, 0, 0});
  shift(5, "right_hip", {-0.01, 0, 0});
  // 6: hand size, 7: finger length.
  for (int side = 0; side < 2; ++side)
    for (int f = 0; f < kFingers; ++f) {
      for (int k = 0; k < kJointsPerFinger; ++k) {
        Joint& j = m.joints[finger_idx[side][f][k]];
        j.shape_basis[6] = 0.04 * j.rest_offset;
        if (k > 0) j.shape_basis[7] = 0.05 * j.rest_offset;
      }
      Joint& tip = m.joints[tip_idx[side][f]];
      tip.shape_basis[6] = 0.04 * tip.rest_offset;
      tip.shape_basis[7] = 0.05 * tip.rest_offset;
    }
  // 8: neck and head size, 9: chest depth.
  scale_along(8, {"head", "face", "jaw", "nose", "forehead", "chin"}, 0.04);
  shift(9, "spine3", {0, 0, 0.01});
  shift(9, "left_collar", {0, 0, 0.005});
  shift(9, "right_collar", {0, 0, 0.005});

  for (int side = 0; side < 2; ++side) {
    HandStructure& h = m.hands[side];
    h.wrist = wrists[side];
    h.fingers = finger_idx[side];
    h.tips = tip_idx[side];
    h.palm_normal = {0, -1, 0};
    for (int f = 0; f < kFingers; ++f)
      for (int k = 0; k < kJointsPerFinger; ++k) m.hand_joint_indices[side].push_back(finger_idx[side][f][k]);
  }

  m.subsets.smooth_body = {idx("spine1"), idx("spine2"), idx("spine3")};
  m.subsets.smooth_hand = {};
  m.subsets.angle_limit_body = {idx("spine1"),   idx("spine2"),     idx("spine3"),    idx("neck"),
                                idx("head"),     idx("left_elbow"), idx("right_elbow"), idx("left_knee"),
                                idx("right_knee"), idx("left_wrist"), idx("right_wrist")};
  for (int side = 0; side < 2; ++side)
    for (int j : m.hand_joint_indices[side]) m.subsets.angle_limit_hand.push_back(j);
  m.subsets.bend = {{idx("left_knee"), {-1, 0, 0}},
                    {idx("right_knee"), {-1, 0, 0}},
                    {idx("left_elbow"), {0, 1, 0}},
                    {idx("right_elbow"), {0, -1, 0}}};

  for (int j = 1; j < m.body_joint_count; ++j) m.pose_limits[j] = {0.0, 2.0};
  for (int side = 0; side < 2; ++side)
    for (int j : m.hand_joint_indices[side]) m.pose_limits[j] = {0.0, 1.8};

  m.finalize();
  return m;
}

struct LimitOptions {
  double bone_tolerance = 0.2;   // relative
  double palm_tolerance = 0.35;  // radians around rest
  Interval flexion{-0.3, 1.6};
  Interval abduction{-0.35, 0.35};
  Interval thumb_flexion{-0.6, 1.2};
  Interval thumb_abduction{-0.8, 0.8};
};

inline Polygon rectangle(const Interval& x, const Interval& y) {
  return {{x.min, y.min}, {x.max, y.min}, {x.max, y.max}, {x.min, y.max}};
}

/// Limits generated from the zero-shape rest hand of `model`.
inline BiomechanicalLimits default_limits(const SkeletonModel& model, const LimitOptions& opt = {}) {
  BiomechanicalLimits lim;
  const auto rest = model.rest_positions();
  for (int side = 0; side < 2; ++side) {
    const HandStructure& h = model.hands[side];
    const HandGeometry g = HandGeometry::build(model, side);
    for (int f = 0; f < kFingers; ++f) {
      for (int k = 0; k <= kJointsPerFinger; ++k) {
        const int j = k < kJointsPerFinger ? h.fingers[f][k] : h.tips[f];
        const double len = norm(model.joints[j].rest_offset);
        lim.bone_intervals[j] = {len * (1.0 - opt.bone_tolerance), len * (1.0 + opt.bone_tolerance)};
      }
      for (int k = 0; k < kJointsPerFinger; ++k)
        lim.angle_hulls[h.fingers[f][k]] =
            f == 0 ? rectangle(opt.thumb_flexion, opt.thumb_abduction) : rectangle(opt.flexion, opt.abduction);
    }
    const auto pm = palm_measures<double>(h, g, std::span<const Vec3<double>>(rest));
    for (int f = 1; f < kFingers; ++f) {
      const double c = pm.curvature[f - 1], d = pm.angular_distance[f - 1];
      lim.curvature_intervals[h.fingers[f][0]] = {c - opt.palm_tolerance, c + opt.palm_tolerance};
      lim.angular_distance_intervals[h.fingers[f][0]] = {d - opt.palm_tolerance, d + opt.palm_tolerance};
    }
  }
  auto add_pose = [&](int j) {
    auto it = model.pose_limits.find(j);
    lim.pose_angle_intervals[j] = it != model.pose_limits.end() ? it->second : Interval{0.0, M_PI};
  };
  for (int j : model.subsets.angle_limit_body) add_pose(j);
  for (int j : model.subsets.angle_limit_hand) add_pose(j);
  return lim;
}

/// Body: the 23 body joints. Hands: wrist, then per finger three joints and
/// the tip (21 slots). Face: nose, forehead, chin.
inline KeypointLayout default_layout(const SkeletonModel& model) {
  KeypointLayout l;
  for (int j = 0; j < model.body_joint_count; ++j) l.slots[0].push_back(model.joints[j].name);
  for (int side = 0; side < 2; ++side) {
    auto& slots = l.slots[1 + side];
    const HandStructure& h = model.hands[side];
    slots.push_back(model.joints[h.wrist].name);
    for (int f = 0; f < kFingers; ++f) {
      for (int k = 0; k < kJointsPerFinger; ++k) slots.push_back(model.joints[h.fingers[f][k]].name);
      slots.push_back(model.joints[h.tips[f]].name);
    }
  }
  for (const char* n : {"nose", "forehead", "chin"})
    if (model.find(n)) l.slots[3].push_back(std::string(n));
  return l;
}

}  // namespace holofit
