#pragma once

// Parametric skeleton: 6D rotations, shape-dependent rest offsets, forward
// kinematics and pinhole projection.

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "holofit/error.hpp"
#include "holofit/linalg.hpp"

namespace holofit {

inline constexpr int kRot6d = 6;
inline constexpr int kFingers = 5;
inline constexpr int kJointsPerFinger = 3;
inline constexpr int kHandJoints = kFingers * kJointsPerFinger;
inline constexpr std::array<double, 6> kIdentity6d = {1, 0, 0, 0, 1, 0};

enum class Side { Left = 0, Right = 1 };

struct Joint {
  std::string name;
  int parent = -1;  // -1 for the root
  Vec3<double> rest_offset;
  std::vector<Vec3<double>> shape_basis;  // one 3-vector per shape component
};

// A hinge joint whose hyperextension is penalized. Positive rotation about
// `hyperextension_axis` (parent frame) bends the joint the unnatural way.
struct BendJoint {
  int joint = -1;
  Vec3<double> hyperextension_axis;
};

// Anatomy of one hand. Finger order is thumb, index, middle, ring, pinky;
// joints within a finger run proximal to distal. Tips are fixed leaf joints.
struct HandStructure {
  int wrist = -1;
  std::array<std::array<int, kJointsPerFinger>, kFingers> fingers{};
  std::array<int, kFingers> tips{};
  Vec3<double> palm_normal;  // rest-pose direction the fingers flex toward
};

struct ModelSubsets {
  std::vector<int> smooth_body;
  std::vector<int> smooth_hand;
  std::vector<int> angle_limit_body;
  std::vector<int> angle_limit_hand;
  std::vector<BendJoint> bend;
};

// Gaussian prior over the pose offsets (6D rows minus identity) of every
// non-root body joint followed by every hand joint.
struct PosePrior {
  std::vector<double> mean;
  std::vector<double> precision_diagonal;
  std::vector<std::vector<double>> precision;  // full matrix; empty when diagonal
};

struct Interval {
  double min = 0.0;
  double max = 0.0;
};

enum class RotationKind { Body, Hand, Jaw, Fixed };

struct RotationSlot {
  RotationKind kind = RotationKind::Fixed;
  int row = -1;
};

class SkeletonModel {
 public:
  std::string name;
  int shape_dim = 10;
  int expr_dim = 10;
  int body_joint_count = 0;
  std::vector<Joint> joints;
  std::array<std::vector<int>, 2> hand_joint_indices;
  int jaw_joint_index = -1;
  std::array<HandStructure, 2> hands;
  ModelSubsets subsets;
  PosePrior pose_prior;
  std::unordered_map<int, Interval> pose_limits;  // keyed by joint index

  int joint_count() const { return static_cast<int>(joints.size()); }
  int hand_row_count() const {
    return static_cast<int>(hand_joint_indices[0].size() + hand_joint_indices[1].size());
  }
  int pose_prior_dim() const { return (body_joint_count - 1 + hand_row_count()) * kRot6d; }

  const RotationSlot& slot(int joint) const { return slots_.at(joint); }

  std::optional<int> find(const std::string& joint_name) const {
    auto it = by_name_.find(joint_name);
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
  }

  int index_of(const std::string& joint_name) const {
    auto idx = find(joint_name);
    if (!idx) fail(ErrorKind::ModelMismatch, "unknown joint '" + joint_name + "'");
    return *idx;
  }

  // Checks the structural invariants and builds the lookup tables. Must be
  // called after the public fields are populated.
  void finalize() {
    const int n = joint_count();
    if (n == 0) fail(ErrorKind::ModelMismatch, "model has no joints");
    int roots = 0;
    by_name_.clear();
    for (int i = 0; i < n; ++i) {
      const Joint& j = joints[i];
      if (j.parent < 0) {
        ++roots;
        if (i != 0) fail(ErrorKind::ModelMismatch, "root joint must come first");
      } else if (j.parent >= i) {
        fail(ErrorKind::ModelMismatch, "joint '" + j.name + "' has parent index >= its own index");
      }
      if (static_cast<int>(j.shape_basis.size()) != shape_dim)
        fail(ErrorKind::ModelMismatch, "joint '" + j.name + "' shape basis has " +
                                           std::to_string(j.shape_basis.size()) + " rows, expected " +
                                           std::to_string(shape_dim));
      if (!by_name_.emplace(j.name, i).second)
        fail(ErrorKind::ModelMismatch, "duplicate joint name '" + j.name + "'");
    }
    if (roots != 1) fail(ErrorKind::ModelMismatch, "model must have exactly one root joint");
    if (body_joint_count < 1 || body_joint_count > n)
      fail(ErrorKind::ModelMismatch, "body_joint_count out of range");

    slots_.assign(n, RotationSlot{});
    for (int i = 0; i < body_joint_count; ++i) slots_[i] = {RotationKind::Body, i};
    auto claim = [&](int joint, RotationSlot s) {
      check_index(joint, "rotation joint");
      if (slots_[joint].kind != RotationKind::Fixed)
        fail(ErrorKind::ModelMismatch, "joint '" + joints[joint].name + "' has two pose slots");
      slots_[joint] = s;
    };
    int row = 0;
    for (int side = 0; side < 2; ++side)
      for (int j : hand_joint_indices[side]) claim(j, {RotationKind::Hand, row++});
    if (jaw_joint_index >= 0) claim(jaw_joint_index, {RotationKind::Jaw, 0});

    for (int side = 0; side < 2; ++side) {
      if (hand_joint_indices[side].size() != static_cast<std::size_t>(kHandJoints))
        fail(ErrorKind::ModelMismatch, "each hand must list 15 joints");
      const HandStructure& h = hands[side];
      check_index(h.wrist, "hand wrist");
      for (int f = 0; f < kFingers; ++f) {
        for (int k = 0; k < kJointsPerFinger; ++k) {
          const int j = h.fingers[f][k];
          check_index(j, "finger joint");
          if (slots_[j].kind != RotationKind::Hand)
            fail(ErrorKind::ModelMismatch, "finger joint '" + joints[j].name + "' is not a hand joint");
          const int expected_parent = k == 0 ? h.wrist : h.fingers[f][k - 1];
          if (joints[j].parent != expected_parent)
            fail(ErrorKind::ModelMismatch, "finger joint '" + joints[j].name + "' has unexpected parent");
        }
        check_index(h.tips[f], "finger tip");
        if (joints[h.tips[f]].parent != h.fingers[f][2])
          fail(ErrorKind::ModelMismatch, "tip '" + joints[h.tips[f]].name + "' has unexpected parent");
      }
      if (norm(h.palm_normal) < 1e-9) fail(ErrorKind::ModelMismatch, "palm normal must be nonzero");
    }

    for (int j : subsets.smooth_body) check_kind(j, RotationKind::Body, "smooth_body");
    for (int j : subsets.angle_limit_body) check_kind(j, RotationKind::Body, "angle_limit_body");
    for (int j : subsets.smooth_hand) check_kind(j, RotationKind::Hand, "smooth_hand");
    for (int j : subsets.angle_limit_hand) check_kind(j, RotationKind::Hand, "angle_limit_hand");
    for (const BendJoint& b : subsets.bend) {
      check_index(b.joint, "bend joint");
      if (slots_[b.joint].kind == RotationKind::Fixed)
        fail(ErrorKind::ModelMismatch, "bend joint '" + joints[b.joint].name + "' has no rotation");
      if (norm(b.hyperextension_axis) < 1e-9)
        fail(ErrorKind::ModelMismatch, "bend joint axis must be nonzero");
    }
    for (const auto& [j, iv] : pose_limits) {
      check_index(j, "pose limit joint");
      if (iv.min > iv.max) fail(ErrorKind::InvalidInterval, "pose limit for '" + joints[j].name + "'");
    }

    const int dim = pose_prior_dim();
    if (pose_prior.mean.empty()) pose_prior.mean.assign(dim, 0.0);
    if (pose_prior.precision_diagonal.empty() && pose_prior.precision.empty())
      pose_prior.precision_diagonal.assign(dim, 1.0);
    if (static_cast<int>(pose_prior.mean.size()) != dim)
      fail(ErrorKind::ModelMismatch, "pose prior mean has wrong length");
    if (!pose_prior.precision.empty()) {
      if (static_cast<int>(pose_prior.precision.size()) != dim)
        fail(ErrorKind::ModelMismatch, "pose prior precision has wrong size");
      for (const auto& r : pose_prior.precision)
        if (static_cast<int>(r.size()) != dim)
          fail(ErrorKind::ModelMismatch, "pose prior precision has wrong size");
    } else if (static_cast<int>(pose_prior.precision_diagonal.size()) != dim) {
      fail(ErrorKind::ModelMismatch, "pose prior precision diagonal has wrong length");
    }
  }

  // Rest offsets with the linear shape basis applied.
  std::vector<Vec3<double>> shaped_offsets(std::span<const double> shape) const {
    if (static_cast<int>(shape.size()) != shape_dim)
      fail(ErrorKind::ModelMismatch, "shape vector has length " + std::to_string(shape.size()) +
                                         ", model expects " + std::to_string(shape_dim));
    std::vector<Vec3<double>> out(joints.size());
    for (std::size_t i = 0; i < joints.size(); ++i) {
      Vec3<double> o = joints[i].rest_offset;
      for (int k = 0; k < shape_dim; ++k) o = o + shape[k] * joints[i].shape_basis[k];
      out[i] = o;
    }
    return out;
  }

  // Rest-pose joint positions for a zero shape, root at the origin.
  std::vector<Vec3<double>> rest_positions() const {
    std::vector<double> zero(shape_dim, 0.0);
    const auto off = shaped_offsets(zero);
    std::vector<Vec3<double>> p(joints.size());
    for (std::size_t i = 0; i < joints.size(); ++i)
      p[i] = joints[i].parent < 0 ? off[i] : p[joints[i].parent] + off[i];
    return p;
  }

  double rest_height() const {
    const auto p = rest_positions();
    double lo = p[0].y, hi = p[0].y;
    for (const auto& q : p) {
      lo = std::min(lo, q.y);
      hi = std::max(hi, q.y);
    }
    return hi - lo;
  }

 private:
  void check_index(int j, const char* what) const {
    if (j < 0 || j >= joint_count())
      fail(ErrorKind::ModelMismatch, std::string(what) + " index " + std::to_string(j) + " out of range");
  }
  void check_kind(int j, RotationKind kind, const char* subset) const {
    check_index(j, subset);
    if (slots_[j].kind != kind)
      fail(ErrorKind::ModelMismatch,
           std::string("subset '") + subset + "' references joint '" + joints[j].name + "' of the wrong kind");
  }

  std::vector<RotationSlot> slots_;
  std::unordered_map<std::string, int> by_name_;
};

struct MotionState {
  std::vector<double> theta_b;  // body_joint_count x 6, row 0 is the global orientation
  std::vector<double> theta_h;  // 30 x 6, left hand rows then right hand rows
  std::vector<double> theta_f;  // 6, jaw
  std::vector<double> expr;     // carried through I/O, not fitted
  std::array<double, 3> transl{0.0, 0.0, 0.0};

  static MotionState rest(const SkeletonModel& model) {
    MotionState s;
    auto fill = [](std::vector<double>& v, int rows) {
      v.resize(static_cast<std::size_t>(rows) * kRot6d);
      for (int r = 0; r < rows; ++r)
        for (int k = 0; k < kRot6d; ++k) v[r * kRot6d + k] = kIdentity6d[k];
    };
    fill(s.theta_b, model.body_joint_count);
    fill(s.theta_h, model.hand_row_count());
    fill(s.theta_f, 1);
    s.expr.assign(model.expr_dim, 0.0);
    return s;
  }

  bool operator==(const MotionState&) const = default;
};

struct MotionSequence {
  double fps = 30.0;
  std::vector<double> shape;
  std::vector<MotionState> frames;
  bool hands_only = false;  // hand-only variant: frames carry theta_h only

  int size() const { return static_cast<int>(frames.size()); }
  bool operator==(const MotionSequence&) const = default;
};

struct CameraIntrinsics {
  double fx = 1000.0;
  double fy = 1000.0;
  double cx = 640.0;
  double cy = 360.0;
  int width = 1280;
  int height = 720;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) fail(ErrorKind::ParseError, "camera focal lengths must be positive");
  }
  double diagonal() const { return std::hypot(double(width), double(height)); }
};

inline void check_state(const SkeletonModel& model, const MotionState& s) {
  auto expect = [](std::size_t got, int want, const char* what) {
    if (got != static_cast<std::size_t>(want))
      fail(ErrorKind::ModelMismatch, std::string(what) + " has " + std::to_string(got) +
                                         " entries, model expects " + std::to_string(want));
  };
  expect(s.theta_b.size(), model.body_joint_count * kRot6d, "theta_b");
  expect(s.theta_h.size(), model.hand_row_count() * kRot6d, "theta_h");
  expect(s.theta_f.size(), kRot6d, "theta_f");
  for (double v : s.theta_b)
    if (!std::isfinite(v)) fail(ErrorKind::ModelMismatch, "theta_b has a non-finite entry");
  for (double v : s.theta_h)
    if (!std::isfinite(v)) fail(ErrorKind::ModelMismatch, "theta_h has a non-finite entry");
  for (double v : s.theta_f)
    if (!std::isfinite(v)) fail(ErrorKind::ModelMismatch, "theta_f has a non-finite entry");
}

/// Maps a 6D rotation (two stacked 3-vectors, the first two matrix columns
/// before orthonormalization) to a rotation matrix via Gram-Schmidt.
template <class S>
Mat3<S> rot6d_to_matrix(std::span<const S, 6> r) {
  using std::sqrt;
  const Vec3<S> a1{r[0], r[1], r[2]};
  const Vec3<S> a2{r[3], r[4], r[5]};
  const S n1 = sqrt(dot(a1, a1));
  if (value(n1) < 1e-9) fail(ErrorKind::DegenerateRotation, "first column has near-zero norm");
  const Vec3<S> b1 = a1 / n1;
  const Vec3<S> u2 = a2 - dot(b1, a2) * b1;
  const S n2 = sqrt(dot(u2, u2));
  if (value(n2) < 1e-9) fail(ErrorKind::DegenerateRotation, "columns are parallel");
  const Vec3<S> b2 = u2 / n2;
  return Mat3<S>::from_columns(b1, b2, cross(b1, b2));
}

template <class S>
Mat3<S> rot6d_to_matrix(std::span<const S> r) {
  return rot6d_to_matrix<S>(std::span<const S, 6>(r.data(), 6));
}

/// Inverse of rot6d_to_matrix for a proper rotation: its first two columns.
inline std::array<double, 6> matrix_to_rot6d(const Mat3<double>& m) {
  return {m(0, 0), m(1, 0), m(2, 0), m(0, 1), m(1, 1), m(2, 1)};
}

template <class S>
struct Kinematics {
  std::vector<Mat3<S>> local;
  std::vector<Mat3<S>> global;
  std::vector<Vec3<S>> position;
};

// Views of one frame's pose parameters in any scalar type.
template <class S>
struct PoseView {
  std::span<const S> theta_b;
  std::span<const S> theta_h;
  std::span<const S> theta_f;
  Vec3<S> transl;
};

template <class S>
Mat3<S> local_rotation(const SkeletonModel& model, const PoseView<S>& pose, int joint) {
  const RotationSlot& s = model.slot(joint);
  switch (s.kind) {
    case RotationKind::Body: return rot6d_to_matrix<S>(pose.theta_b.subspan(s.row * kRot6d, kRot6d));
    case RotationKind::Hand: return rot6d_to_matrix<S>(pose.theta_h.subspan(s.row * kRot6d, kRot6d));
    case RotationKind::Jaw: return rot6d_to_matrix<S>(pose.theta_f.subspan(0, kRot6d));
    case RotationKind::Fixed: break;
  }
  return Mat3<S>::identity();
}

/// Joint positions (camera frame, meters) and rotations for one frame.
/// `offsets` are the shape-applied rest offsets, one per joint.
template <class S>
Kinematics<S> forward_kinematics(const SkeletonModel& model, const PoseView<S>& pose,
                                 std::span<const Vec3<S>> offsets) {
  const int n = model.joint_count();
  if (static_cast<int>(offsets.size()) != n) fail(ErrorKind::ModelMismatch, "offset count mismatch");
  Kinematics<S> k;
  k.local.resize(n);
  k.global.resize(n);
  k.position.resize(n);
  for (int i = 0; i < n; ++i) {
    k.local[i] = local_rotation(model, pose, i);
    const int p = model.joints[i].parent;
    if (p < 0) {
      k.global[i] = k.local[i];
      k.position[i] = pose.transl + offsets[i];
    } else {
      k.global[i] = k.global[p] * k.local[i];
      k.position[i] = k.position[p] + k.global[p] * offsets[i];
    }
  }
  return k;
}

inline PoseView<double> view_of(const MotionState& s) {
  return {s.theta_b, s.theta_h, s.theta_f, {s.transl[0], s.transl[1], s.transl[2]}};
}

inline std::vector<Vec3<double>> forward_kinematics(const SkeletonModel& model, const MotionState& state,
                                                    std::span<const double> shape) {
  check_state(model, state);
  const auto offsets = model.shaped_offsets(shape);
  return forward_kinematics<double>(model, view_of(state), offsets).position;
}

/// Pinhole projection. Throws BehindCamera for depth <= 1e-6.
template <class S>
Vec2<S> project_point(const Vec3<S>& p, const CameraIntrinsics& cam) {
  if (!(value(p.z) > 1e-6))
    fail(ErrorKind::BehindCamera, "point at depth " + std::to_string(value(p.z)));
  return {S(cam.fx) * p.x / p.z + S(cam.cx), S(cam.fy) * p.y / p.z + S(cam.cy)};
}

inline std::vector<Vec2<double>> project(std::span<const Vec3<double>> points, const CameraIntrinsics& cam) {
  std::vector<Vec2<double>> out;
  out.reserve(points.size());
  std::string bad;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!(points[i].z > 1e-6)) {
      bad += (bad.empty() ? "" : ", ") + std::to_string(i);
      continue;
    }
    out.push_back(project_point(points[i], cam));
  }
  if (!bad.empty()) fail(ErrorKind::BehindCamera, "nonpositive depth at joint(s) " + bad);
  return out;
}

}  // namespace holofit
