#pragma once

// Biomechanical checks of a motion against hand limits: bone length
// intervals, palm curvature and angular distance intervals and the
// flexion/abduction hulls, per frame.

#include <string>
#include <vector>

#include "holofit/body_model.hpp"
#include "holofit/keypoints.hpp"
#include "holofit/objective.hpp"

namespace holofit {

enum class CheckKind { BoneLength, Curvature, AngularDistance, JointAngle };

inline const char* to_string(CheckKind k) {
  switch (k) {
    case CheckKind::BoneLength: return "bone_length";
    case CheckKind::Curvature: return "curvature";
    case CheckKind::AngularDistance: return "angular_distance";
    case CheckKind::JointAngle: return "joint_angle";
  }
  return "?";
}

struct CheckResult {
  int frame = 0;
  CheckKind kind = CheckKind::BoneLength;
  int joint = -1;
  double value = 0.0;   // length, angle, or hull distance
  double value2 = 0.0;  // abduction for joint-angle checks
  bool pass = true;
};

struct ValidationReport {
  std::vector<CheckResult> checks;
  int violations = 0;

  double violation_rate() const { return checks.empty() ? 0.0 : double(violations) / double(checks.size()); }
};

inline ValidationReport validate_motion(const SkeletonModel& model, const BiomechanicalLimits& limits,
                                        const MotionSequence& motion, double tol = 1e-6) {
  check_limits(model, limits);
  const auto offsets = model.shaped_offsets(motion.shape);
  const std::array<HandGeometry, 2> geo{HandGeometry::build(model, 0), HandGeometry::build(model, 1)};
  ValidationReport r;
  auto add = [&](CheckResult c) {
    if (!c.pass) ++r.violations;
    r.checks.push_back(c);
  };
  auto inside = [tol](double v, const Interval& iv) { return v >= iv.min - tol && v <= iv.max + tol; };
  for (int t = 0; t < motion.size(); ++t) {
    const MotionState& s = motion.frames[t];
    check_state(model, s);
    const auto kin = forward_kinematics<double>(model, view_of(s), offsets);
    for (int side = 0; side < 2; ++side) {
      const HandStructure& h = model.hands[side];
      for (int f = 0; f < kFingers; ++f) {
        for (int k = 0; k <= kJointsPerFinger; ++k) {
          const int j = k < kJointsPerFinger ? h.fingers[f][k] : h.tips[f];
          const double len = norm(offsets[j]);
          add({t, CheckKind::BoneLength, j, len, 0.0, inside(len, limits.bone_intervals.at(j))});
        }
        for (int k = 0; k < kJointsPerFinger; ++k) {
          const FingerFrame& fr = geo[side].fingers[f][k];
          const auto fa = flexion_abduction<double>(fr, kin.local[fr.joint], offsets[fr.child]);
          const double d = hull_distance({fa.flexion, fa.abduction}, limits.angle_hulls.at(fr.joint));
          add({t, CheckKind::JointAngle, fr.joint, fa.flexion, fa.abduction, d <= tol});
        }
      }
      const auto pm = palm_measures<double>(h, geo[side], std::span<const Vec3<double>>(kin.position));
      for (int f = 1; f < kFingers; ++f) {
        const int j = h.fingers[f][0];
        add({t, CheckKind::Curvature, j, pm.curvature[f - 1], 0.0,
             inside(pm.curvature[f - 1], limits.curvature_intervals.at(j))});
        add({t, CheckKind::AngularDistance, j, pm.angular_distance[f - 1], 0.0,
             inside(pm.angular_distance[f - 1], limits.angular_distance_intervals.at(j))});
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Fit diagnostics

/// Mean pixel distance between projected joints and keypoints with
/// positive confidence.
inline double mean_reprojection_error(const SkeletonModel& model, const CameraIntrinsics& cam,
                                      const MotionSequence& motion, const KeypointSequence& keypoints,
                                      const ResolvedLayout& layout) {
  if (keypoints.size() != motion.size()) fail(ErrorKind::LayoutError, "keypoint and motion frame counts differ");
  double sum = 0.0;
  long count = 0;
  for (int t = 0; t < motion.size(); ++t) {
    const auto pos = forward_kinematics(model, motion.frames[t], motion.shape);
    for (int g = 0; g < kGroupCount; ++g)
      for (std::size_t k = 0; k < layout.joints[g].size(); ++k) {
        const Keypoint& kp = keypoints.frames[t].groups[g][k];
        if (layout.joints[g][k] < 0 || kp.confidence <= 0.0) continue;
        const auto uv = project_point(pos[layout.joints[g][k]], cam);
        sum += std::hypot(uv.x - kp.u, uv.y - kp.v);
        ++count;
      }
  }
  return count == 0 ? 0.0 : sum / double(count);
}

/// Mean 3D joint distance after aligning the root joints of both motions.
inline double mean_joint_error_3d(const SkeletonModel& model, const MotionSequence& a, const MotionSequence& b) {
  if (a.size() != b.size()) fail(ErrorKind::ModelMismatch, "motions differ in length");
  double sum = 0.0;
  long count = 0;
  for (int t = 0; t < a.size(); ++t) {
    const auto pa = forward_kinematics(model, a.frames[t], a.shape);
    const auto pb = forward_kinematics(model, b.frames[t], b.shape);
    for (std::size_t j = 0; j < pa.size(); ++j) {
      sum += norm((pa[j] - pa[0]) - (pb[j] - pb[0]));
      ++count;
    }
  }
  return sum / double(count);
}

/// Mean Euclidean norm of the frame-to-frame change of the body and hand
/// pose parameters.
inline double mean_pose_velocity(const MotionSequence& m) {
  if (m.size() < 2) return 0.0;
  double sum = 0.0;
  for (int t = 1; t < m.size(); ++t) {
    double d2 = 0.0;
    const MotionState &a = m.frames[t - 1], &b = m.frames[t];
    for (std::size_t i = 0; i < a.theta_b.size(); ++i) d2 += (b.theta_b[i] - a.theta_b[i]) * (b.theta_b[i] - a.theta_b[i]);
    for (std::size_t i = 0; i < a.theta_h.size(); ++i) d2 += (b.theta_h[i] - a.theta_h[i]) * (b.theta_h[i] - a.theta_h[i]);
    sum += std::sqrt(d2);
  }
  return sum / double(m.size() - 1);
}

}  // namespace holofit
