#pragma once

// Total fitting energy: 2D reprojection, pose/bending/shape priors,
// temporal smoothness, angle limits and the biomechanical hand terms.
//
// Terms that depend on forward kinematics are evaluated per frame on a
// reverse-mode tape; the quadratic priors (pose, shape, smoothness) have
// closed-form gradients. Frame results are reduced in frame order, so the
// value and gradient do not depend on the thread count.

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "holofit/ad.hpp"
#include "holofit/body_model.hpp"
#include "holofit/error.hpp"
#include "holofit/hull.hpp"
#include "holofit/keypoints.hpp"
#include "holofit/linalg.hpp"

namespace holofit {

enum class Term : int {
  Reprojection = 0,
  PosePrior,
  Bending,
  Shape,
  Smooth,
  AngleLimit,
  BoneLength,
  Palm,
  JointAngle,
};
inline constexpr int kTermCount = 9;
inline constexpr std::array<const char*, kTermCount> kTermNames = {
    "L_J", "L_theta", "L_alpha", "L_beta", "L_smooth", "L_angle", "L_bl", "L_palm", "L_ja"};

using TermArray = std::array<double, kTermCount>;

inline TermArray only(Term t) {
  TermArray c{};
  c[static_cast<int>(t)] = 1.0;
  return c;
}

struct ObjectiveWeights {
  double lambda_J = 1.0;
  double lambda_theta = 1.0;
  double lambda_alpha = 0.1;
  double lambda_beta = 1.0;
  double lambda_smooth = 100.0;
  double lambda_angle = 100.0;
  double lambda_bl = 1e4;
  double lambda_palm = 100.0;
  double lambda_ja = 1e5;
  double w_body = 1.0;
  double w_hand = 1.0;

  TermArray coefficients() const {
    return {lambda_J, lambda_theta, lambda_alpha, lambda_beta, lambda_smooth,
            lambda_angle, lambda_bl, lambda_palm, lambda_ja};
  }

  void validate() const {
    for (double v : coefficients())
      if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorKind::InvalidConfig, "objective weights must be finite and >= 0");
    if (!(w_body >= 0.0) || !(w_hand >= 0.0) || !std::isfinite(w_body) || !std::isfinite(w_hand))
      fail(ErrorKind::InvalidConfig, "group weights must be finite and >= 0");
  }
};

struct ObjectiveOptions {
  // Geman-McClure scale in pixels; <= 0 or infinite selects plain squared error.
  double robust_sigma = 100.0;
  double bend_gain = 1.0;
  int threads = 1;
};

/// Feasible ranges for the hand. Bones are keyed by the joint they end at;
/// palm intervals by the first joint of the finger whose root bone they
/// describe; hulls by finger joint; pose-angle intervals by rotating joint.
struct BiomechanicalLimits {
  std::unordered_map<int, Interval> bone_intervals;
  std::unordered_map<int, Interval> curvature_intervals;
  std::unordered_map<int, Interval> angular_distance_intervals;
  std::unordered_map<int, Polygon> angle_hulls;
  std::unordered_map<int, Interval> pose_angle_intervals;
};

/// Quadratic hinge: zero inside [lo, hi], squared overshoot outside.
template <class S>
S interval_penalty(const S& x, double lo, double hi) {
  if (lo > hi) fail(ErrorKind::InvalidInterval, "interval [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  const double v = value(x);
  if (v > hi) {
    const S d = x - S(hi);
    return d * d;
  }
  if (v < lo) {
    const S d = S(lo) - x;
    return d * d;
  }
  return S(0.0);
}

/// Rotation angle of a rotation matrix, in [0, pi].
template <class S>
S geodesic_angle(const Mat3<S>& r) {
  using std::atan2;
  using std::sqrt;
  const S wx = r(2, 1) - r(1, 2);
  const S wy = r(0, 2) - r(2, 0);
  const S wz = r(1, 0) - r(0, 1);
  const S s = sqrt(wx * wx + wy * wy + wz * wz);
  const S c = r(0, 0) + r(1, 1) + r(2, 2) - S(1.0);
  return atan2(s, c);
}

inline double shape_prior(std::span<const double> shape, std::span<double> grad = {}) {
  double v = 0.0;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    v += shape[i] * shape[i];
    if (!grad.empty()) grad[i] = 2.0 * shape[i];
  }
  return v;
}

/// Per-hand frames used for the flexion/abduction and palm measures, derived
/// once from the zero-shape rest pose. For a finger joint the x-axis is the
/// rest direction of its child bone, z is the palm normal orthogonalized
/// against x, and y = z cross x.
struct FingerFrame {
  int joint = -1;
  int child = -1;
  Vec3<double> x, y, z;
};

struct HandGeometry {
  std::array<std::array<FingerFrame, kJointsPerFinger>, kFingers> fingers;
  std::array<int, 5> palm_polygon{};  // wrist then the four non-thumb finger roots

  static HandGeometry build(const SkeletonModel& model, int side) {
    const HandStructure& h = model.hands[side];
    const auto rest = model.rest_positions();
    const std::vector<double> zero(model.shape_dim, 0.0);
    const auto off = model.shaped_offsets(zero);
    HandGeometry g;
    const Vec3<double> n = h.palm_normal / norm(h.palm_normal);
    for (int f = 0; f < kFingers; ++f) {
      for (int k = 0; k < kJointsPerFinger; ++k) {
        FingerFrame& fr = g.fingers[f][k];
        fr.joint = h.fingers[f][k];
        fr.child = k + 1 < kJointsPerFinger ? h.fingers[f][k + 1] : h.tips[f];
        const double len = norm(off[fr.child]);
        if (len < 1e-9) fail(ErrorKind::DegenerateBone, "bone ending at '" + model.joints[fr.child].name + "'");
        fr.x = off[fr.child] / len;
        Vec3<double> z = n - dot(n, fr.x) * fr.x;
        const double zn = norm(z);
        if (zn < 1e-9)
          fail(ErrorKind::DegenerateBone, "bone ending at '" + model.joints[fr.child].name + "' is parallel to palm normal");
        fr.z = z / zn;
        fr.y = cross(fr.z, fr.x);
      }
    }
    g.palm_polygon = {h.wrist, h.fingers[1][0], h.fingers[2][0], h.fingers[3][0], h.fingers[4][0]};
    if (dot(newell_normal<double>(rest, g.palm_polygon), n) < 0.0)
      g.palm_polygon = {h.wrist, h.fingers[4][0], h.fingers[3][0], h.fingers[2][0], h.fingers[1][0]};
    return g;
  }

  // Best-fit plane normal of a closed polygon (Newell's method).
  template <class S>
  static Vec3<S> newell_normal(std::span<const Vec3<S>> p, const std::array<int, 5>& poly) {
    Vec3<S> n{S(0.0), S(0.0), S(0.0)};
    const Vec3<S> o = p[poly[0]];
    for (std::size_t i = 1; i + 1 < poly.size(); ++i) n = n + cross(p[poly[i]] - o, p[poly[i + 1]] - o);
    return n;
  }
};

template <class S>
struct FlexAbd {
  S flexion;
  S abduction;
};

template <class S>
FlexAbd<S> flexion_abduction(const FingerFrame& fr, const Mat3<S>& local, const Vec3<S>& child_offset) {
  using std::atan2;
  const Vec3<S> d = local * child_offset;
  const Vec3<S> x = fr.x.cast<S>(), y = fr.y.cast<S>(), z = fr.z.cast<S>();
  const S dx = dot(d, x), dy = dot(d, y), dz = dot(d, z);
  if (value(dx) * value(dx) + value(dy) * value(dy) + value(dz) * value(dz) < 1e-24)
    fail(ErrorKind::DegenerateBone, "zero-length bone at joint " + std::to_string(fr.child));
  return {atan2(dz, dx), atan2(dy, dx)};
}

template <class S>
struct PalmMeasures {
  std::array<S, 4> curvature;         // index, middle, ring, pinky root bones
  std::array<S, 4> angular_distance;  // same order
};

/// Curvature: signed angle from the previous root bone (thumb for index)
/// about the palm normal. Angular distance: elevation of the root bone
/// above the palm's best-fit plane.
template <class S>
PalmMeasures<S> palm_measures(const HandStructure& h, const HandGeometry& g, std::span<const Vec3<S>> pos) {
  using std::atan2;
  using std::sqrt;
  const Vec3<S> n = HandGeometry::newell_normal<S>(pos, g.palm_polygon);
  const S nn = sqrt(dot(n, n));
  PalmMeasures<S> m;
  const Vec3<S> w = pos[h.wrist];
  for (int f = 1; f < kFingers; ++f) {
    const Vec3<S> prev = pos[h.fingers[f - 1][0]] - w;
    const Vec3<S> b = pos[h.fingers[f][0]] - w;
    m.curvature[f - 1] = atan2(dot(n, cross(prev, b)) / nn, dot(prev, b));
    m.angular_distance[f - 1] = atan2(dot(n, b), norm(cross(n, b)));
  }
  return m;
}

inline void check_limits(const SkeletonModel& model, const BiomechanicalLimits& limits) {
  auto need = [&](const auto& map, int joint, const char* what) {
    if (!map.contains(joint))
      fail(ErrorKind::LimitsIncomplete, std::string(what) + " missing for '" + model.joints[joint].name + "'");
  };
  auto check_interval = [&](const Interval& iv, int joint, const char* what) {
    if (iv.min > iv.max)
      fail(ErrorKind::InvalidInterval, std::string(what) + " for '" + model.joints[joint].name + "' has min > max");
  };
  for (int side = 0; side < 2; ++side) {
    const HandStructure& h = model.hands[side];
    for (int f = 0; f < kFingers; ++f) {
      for (int k = 0; k < kJointsPerFinger; ++k) {
        need(limits.bone_intervals, h.fingers[f][k], "bone interval");
        need(limits.angle_hulls, h.fingers[f][k], "angle hull");
      }
      need(limits.bone_intervals, h.tips[f], "bone interval");
      if (f > 0) {
        need(limits.curvature_intervals, h.fingers[f][0], "curvature interval");
        need(limits.angular_distance_intervals, h.fingers[f][0], "angular distance interval");
      }
    }
  }
  for (int j : model.subsets.angle_limit_body) need(limits.pose_angle_intervals, j, "pose angle interval");
  for (int j : model.subsets.angle_limit_hand) need(limits.pose_angle_intervals, j, "pose angle interval");
  for (const auto& [j, iv] : limits.bone_intervals) check_interval(iv, j, "bone interval");
  for (const auto& [j, iv] : limits.curvature_intervals) check_interval(iv, j, "curvature interval");
  for (const auto& [j, iv] : limits.angular_distance_intervals) check_interval(iv, j, "angular distance interval");
  for (const auto& [j, iv] : limits.pose_angle_intervals) check_interval(iv, j, "pose angle interval");
  for (const auto& [j, hull] : limits.angle_hulls)
    if (!is_ccw_convex(hull))
      fail(ErrorKind::DegenerateHull, "angle hull for '" + model.joints[j].name + "' is not a counterclockwise convex polygon");
}

/// Flat parameter vector: per frame theta_b, theta_h, theta_f, transl; the
/// shape vector is appended when it is being optimized.
struct ParamLayout {
  int frames = 0;
  int body_rows = 0;
  int hand_rows = 0;
  int shape_dim = 0;
  bool shape_free = false;

  int theta_h_offset() const { return body_rows * kRot6d; }
  int theta_f_offset() const { return theta_h_offset() + hand_rows * kRot6d; }
  int transl_offset() const { return theta_f_offset() + kRot6d; }
  int frame_dim() const { return transl_offset() + 3; }
  int frame_offset(int t) const { return t * frame_dim(); }
  int shape_offset() const { return frames * frame_dim(); }
  int size() const { return frames * frame_dim() + (shape_free ? shape_dim : 0); }

  static ParamLayout of(const SkeletonModel& model, int frames, bool shape_free) {
    return {frames, model.body_joint_count, model.hand_row_count(), model.shape_dim, shape_free};
  }
};

inline std::vector<double> pack(const MotionSequence& seq, const ParamLayout& layout) {
  std::vector<double> x(layout.size());
  for (int t = 0; t < layout.frames; ++t) {
    const MotionState& s = seq.frames[t];
    double* dst = x.data() + layout.frame_offset(t);
    std::copy(s.theta_b.begin(), s.theta_b.end(), dst);
    std::copy(s.theta_h.begin(), s.theta_h.end(), dst + layout.theta_h_offset());
    std::copy(s.theta_f.begin(), s.theta_f.end(), dst + layout.theta_f_offset());
    std::copy(s.transl.begin(), s.transl.end(), dst + layout.transl_offset());
  }
  if (layout.shape_free) std::copy(seq.shape.begin(), seq.shape.end(), x.begin() + layout.shape_offset());
  return x;
}

inline void unpack(std::span<const double> x, const ParamLayout& layout, MotionSequence& seq) {
  for (int t = 0; t < layout.frames; ++t) {
    MotionState& s = seq.frames[t];
    const double* src = x.data() + layout.frame_offset(t);
    std::copy(src, src + layout.theta_h_offset(), s.theta_b.begin());
    std::copy(src + layout.theta_h_offset(), src + layout.theta_f_offset(), s.theta_h.begin());
    std::copy(src + layout.theta_f_offset(), src + layout.transl_offset(), s.theta_f.begin());
    std::copy(src + layout.transl_offset(), src + layout.frame_dim(), s.transl.begin());
  }
  if (layout.shape_free)
    std::copy(x.begin() + layout.shape_offset(), x.begin() + layout.shape_offset() + layout.shape_dim, seq.shape.begin());
}

struct Evaluation {
  double value = 0.0;
  TermArray raw{};  // unweighted term values
  std::vector<double> gradient;
};

class Objective {
 public:
  /// `keypoints` must already be fused and filled; pass nullptr to evaluate
  /// without a reprojection term.
  Objective(const SkeletonModel& model, const CameraIntrinsics& camera, const KeypointSequence* keypoints,
            const ResolvedLayout* layout, BiomechanicalLimits limits, ObjectiveWeights weights,
            ObjectiveOptions options = {})
      : model_(model),
        camera_(camera),
        keypoints_(keypoints),
        limits_(std::move(limits)),
        weights_(weights),
        options_(options),
        hands_{HandGeometry::build(model, 0), HandGeometry::build(model, 1)} {
    camera_.validate();
    weights_.validate();
    check_limits(model_, limits_);
    if (keypoints_ != nullptr) {
      if (layout == nullptr) fail(ErrorKind::LayoutError, "keypoints supplied without a layout");
      layout_ = *layout;
      for (int g = 0; g < kGroupCount; ++g)
        if (layout_.joints[g].size() != keypoints_->group_size(g) && !keypoints_->frames.empty())
          fail(ErrorKind::LayoutError, std::string("layout/keypoint size mismatch in group '") + kGroupNames[g] + "'");
    }
    for (const BendJoint& b : model_.subsets.bend) {
      const Vec3<double> a = b.hyperextension_axis / norm(b.hyperextension_axis);
      Vec3<double> e1 = std::abs(a.x) < 0.9 ? Vec3<double>{1, 0, 0} : Vec3<double>{0, 1, 0};
      e1 = e1 - dot(a, e1) * a;
      e1 = e1 / norm(e1);
      bend_frames_.push_back({b.joint, e1, cross(a, e1)});
    }
  }

  const SkeletonModel& model() const { return model_; }
  const ObjectiveWeights& weights() const { return weights_; }
  const BiomechanicalLimits& limits() const { return limits_; }
  const HandGeometry& hand(int side) const { return hands_[side]; }

  void set_group_weights(double w_body, double w_hand) {
    weights_.w_body = w_body;
    weights_.w_hand = w_hand;
    weights_.validate();
  }
  void set_threads(int threads) { options_.threads = std::max(1, threads); }

  ParamLayout layout(int frames, bool shape_free) const { return ParamLayout::of(model_, frames, shape_free); }

  /// Weighted total with the configured lambdas.
  Evaluation evaluate(std::span<const double> x, const ParamLayout& layout, std::span<const double> fixed_shape,
                      bool with_gradient) const {
    return evaluate(x, layout, fixed_shape, weights_.coefficients(), with_gradient);
  }

  /// Sum of coeff[k] * term_k. The gradient covers every entry of `x`;
  /// when the shape is not part of `x`, `fixed_shape` supplies it.
  Evaluation evaluate(std::span<const double> x, const ParamLayout& layout, std::span<const double> fixed_shape,
                      const TermArray& coeff, bool with_gradient) const {
    if (static_cast<int>(x.size()) != layout.size()) fail(ErrorKind::ModelMismatch, "parameter vector size mismatch");
    if (keypoints_ != nullptr && keypoints_->size() != layout.frames)
      fail(ErrorKind::LayoutError, "keypoints have " + std::to_string(keypoints_->size()) + " frames, motion has " +
                                       std::to_string(layout.frames));
    std::span<const double> shape =
        layout.shape_free ? x.subspan(layout.shape_offset(), layout.shape_dim) : fixed_shape;
    const auto offsets = model_.shaped_offsets(shape);

    Evaluation ev;
    if (with_gradient) ev.gradient.assign(x.size(), 0.0);

    // Per-frame kinematic terms.
    std::vector<FrameResult> frames(layout.frames);
    auto work = [&](int begin, int end) {
      for (int t = begin; t < end; ++t) {
        try {
          frames[t] = with_gradient ? frame_gradient(t, x, layout, offsets, coeff) : frame_value(t, x, layout, offsets);
        } catch (const Error& e) {
          throw Error(e.kind(), "frame " + std::to_string(t) + ": " + strip_kind(e));
        }
      }
    };
    run_partitioned(layout.frames, work);

    std::vector<double> shape_grad(model_.shape_dim, 0.0);
    for (int t = 0; t < layout.frames; ++t) {
      const FrameResult& fr = frames[t];
      for (int k = 0; k < kTermCount; ++k) ev.raw[k] += fr.raw[k];
      if (with_gradient) {
        double* g = ev.gradient.data() + layout.frame_offset(t);
        for (int i = 0; i < layout.frame_dim(); ++i) g[i] += fr.grad[i];
        if (layout.shape_free)
          for (std::size_t j = 0; j < fr.offset_grad.size(); ++j)
            for (int k = 0; k < model_.shape_dim; ++k)
              shape_grad[k] += dot(model_.joints[j].shape_basis[k], fr.offset_grad[j]);
      }
    }

    // Closed-form quadratic terms.
    ev.raw[int(Term::PosePrior)] = pose_prior(x, layout, coeff[int(Term::PosePrior)], with_gradient ? &ev.gradient : nullptr);
    ev.raw[int(Term::Smooth)] = smooth(x, layout, coeff[int(Term::Smooth)], with_gradient ? &ev.gradient : nullptr);
    std::vector<double> sg(model_.shape_dim, 0.0);
    ev.raw[int(Term::Shape)] = shape_prior(shape, sg);
    if (with_gradient && layout.shape_free) {
      double* g = ev.gradient.data() + layout.shape_offset();
      for (int k = 0; k < model_.shape_dim; ++k) g[k] += shape_grad[k] + coeff[int(Term::Shape)] * sg[k];
    }

    for (int k = 0; k < kTermCount; ++k) ev.value += coeff[k] * ev.raw[k];
    return ev;
  }

  /// Convenience: one raw term value and its gradient.
  Evaluation term(Term t, std::span<const double> x, const ParamLayout& layout,
                  std::span<const double> fixed_shape = {}) const {
    return evaluate(x, layout, fixed_shape, only(t), true);
  }

  /// Per-frame kinematic terms for a double pose; used by validation and tests.
  template <class S>
  TermArray kinematic_terms(int t, const PoseView<S>& pose, std::span<const Vec3<S>> offsets) const {
    auto raw = frame_terms<S>(t, pose, offsets);
    TermArray out{};
    for (int k = 0; k < kTermCount; ++k) out[k] = value(raw[k]);
    return out;
  }

 private:
  struct BendFrame {
    int joint;
    Vec3<double> e1, e2;
  };

  struct FrameResult {
    TermArray raw{};
    std::vector<double> grad;
    std::vector<Vec3<double>> offset_grad;
  };

  static std::string strip_kind(const Error& e) {
    std::string w = e.what();
    const auto prefix = std::string(to_string(e.kind())) + ": ";
    return w.rfind(prefix, 0) == 0 ? w.substr(prefix.size()) : w;
  }

  template <class Fn>
  void run_partitioned(int n, Fn&& work) const {
    const int threads = std::min(options_.threads, n);
    if (threads <= 1) {
      work(0, n);
      return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const int chunk = (n + threads - 1) / threads;
    for (int i = 0; i < threads; ++i) {
      const int b = i * chunk, e = std::min(n, b + chunk);
      pool.emplace_back([&, i, b, e] {
        try {
          work(b, e);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors)
      if (err) std::rethrow_exception(err);
  }

  template <class S>
  static PoseView<S> frame_view(std::span<const S> xf, const ParamLayout& layout) {
    const int ho = layout.theta_h_offset(), fo = layout.theta_f_offset(), to = layout.transl_offset();
    return {xf.subspan(0, ho), xf.subspan(ho, fo - ho), xf.subspan(fo, kRot6d), Vec3<S>{xf[to], xf[to + 1], xf[to + 2]}};
  }

  FrameResult frame_value(int t, std::span<const double> x, const ParamLayout& layout,
                          const std::vector<Vec3<double>>& offsets) const {
    const auto xf = x.subspan(layout.frame_offset(t), layout.frame_dim());
    const auto raw = frame_terms<double>(t, frame_view<double>(xf, layout), offsets);
    FrameResult r;
    r.raw = raw;
    return r;
  }

  FrameResult frame_gradient(int t, std::span<const double> x, const ParamLayout& layout,
                             const std::vector<Vec3<double>>& offsets, const TermArray& coeff) const {
    using ad::Var;
    thread_local ad::Tape tape;
    ad::TapeScope scope(tape);
    const auto xf = x.subspan(layout.frame_offset(t), layout.frame_dim());
    std::vector<Var> in;
    in.reserve(xf.size());
    for (double v : xf) in.push_back(Var::input(v));
    std::vector<Vec3<Var>> off(offsets.size());
    for (std::size_t j = 0; j < offsets.size(); ++j) {
      if (layout.shape_free)
        off[j] = {Var::input(offsets[j].x), Var::input(offsets[j].y), Var::input(offsets[j].z)};
      else
        off[j] = offsets[j].cast<Var>();
    }
    const auto raw = frame_terms<Var>(t, frame_view<Var>(std::span<const Var>(in), layout), off);
    Var total(0.0);
    FrameResult r;
    for (int k = 0; k < kTermCount; ++k) {
      r.raw[k] = raw[k].value();
      if (coeff[k] != 0.0) total = total + Var(coeff[k]) * raw[k];
    }
    const auto& adj = tape.gradient(total.slot());
    r.grad.resize(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) r.grad[i] = adj[in[i].slot()];
    if (layout.shape_free) {
      r.offset_grad.resize(off.size());
      for (std::size_t j = 0; j < off.size(); ++j)
        r.offset_grad[j] = {adj[off[j].x.slot()], adj[off[j].y.slot()], adj[off[j].z.slot()]};
    }
    return r;
  }

  template <class S>
  std::array<S, kTermCount> frame_terms(int t, const PoseView<S>& pose, std::span<const Vec3<S>> offsets) const {
    using std::atan2;
    using std::exp;
    std::array<S, kTermCount> out;
    out.fill(S(0.0));
    const Kinematics<S> kin = forward_kinematics<S>(model_, pose, offsets);

    if (keypoints_ != nullptr) out[int(Term::Reprojection)] = reprojection<S>(t, kin);

    S bend(0.0);
    for (const BendFrame& b : bend_frames_) {
      const Vec3<S> r1 = kin.local[b.joint] * b.e1.cast<S>();
      const S kappa = atan2(dot(r1, b.e2.cast<S>()), dot(r1, b.e1.cast<S>()));
      bend = bend + exp(S(options_.bend_gain) * kappa);
    }
    out[int(Term::Bending)] = bend;

    S angle(0.0);
    auto add_angle = [&](int j) {
      const Interval& iv = limits_.pose_angle_intervals.at(j);
      angle = angle + interval_penalty<S>(geodesic_angle<S>(kin.local[j]), iv.min, iv.max);
    };
    for (int j : model_.subsets.angle_limit_body) add_angle(j);
    for (int j : model_.subsets.angle_limit_hand) add_angle(j);
    out[int(Term::AngleLimit)] = angle;

    S bl(0.0), palm(0.0), ja(0.0);
    for (int side = 0; side < 2; ++side) {
      const HandStructure& h = model_.hands[side];
      const HandGeometry& g = hands_[side];
      for (int f = 0; f < kFingers; ++f) {
        for (int k = 0; k <= kJointsPerFinger; ++k) {
          const int j = k < kJointsPerFinger ? h.fingers[f][k] : h.tips[f];
          const Interval& iv = limits_.bone_intervals.at(j);
          bl = bl + interval_penalty<S>(norm(offsets[j]), iv.min, iv.max);
        }
        for (int k = 0; k < kJointsPerFinger; ++k) {
          const FingerFrame& fr = g.fingers[f][k];
          const auto fa = flexion_abduction<S>(fr, kin.local[fr.joint], offsets[fr.child]);
          ja = ja + hull_distance_squared<S>(Vec2<S>{fa.flexion, fa.abduction}, limits_.angle_hulls.at(fr.joint));
        }
      }
      const auto pm = palm_measures<S>(h, g, std::span<const Vec3<S>>(kin.position));
      for (int f = 1; f < kFingers; ++f) {
        const Interval& c = limits_.curvature_intervals.at(h.fingers[f][0]);
        const Interval& d = limits_.angular_distance_intervals.at(h.fingers[f][0]);
        palm = palm + interval_penalty<S>(pm.curvature[f - 1], c.min, c.max) +
               interval_penalty<S>(pm.angular_distance[f - 1], d.min, d.max);
      }
    }
    out[int(Term::BoneLength)] = bl;
    out[int(Term::Palm)] = palm;
    out[int(Term::JointAngle)] = ja;
    return out;
  }

  template <class S>
  S reprojection(int t, const Kinematics<S>& kin) const {
    const KeypointFrame& kf = keypoints_->frames[t];
    const double sigma = options_.robust_sigma;
    const bool robust = sigma > 0.0 && std::isfinite(sigma);
    const double s2 = sigma * sigma;
    S sum(0.0);
    for (int g = 0; g < kGroupCount; ++g) {
      const double w = is_hand_group(g) ? weights_.w_hand : weights_.w_body;
      const auto& joints = layout_.joints[g];
      for (std::size_t k = 0; k < joints.size(); ++k) {
        const Keypoint& kp = kf.groups[g][k];
        const int j = joints[k];
        if (j < 0 || kp.confidence <= 0.0) continue;
        const Vec3<S>& p = kin.position[j];
        if (!(value(p.z) > 1e-6))
          fail(ErrorKind::BehindCamera, "L_J: joint '" + model_.joints[j].name + "' at depth " + std::to_string(value(p.z)));
        const Vec2<S> uv = project_point(p, camera_);
        const S du = uv.x - S(kp.u), dv = uv.y - S(kp.v);
        const S e2 = du * du + dv * dv;
        const S rho = robust ? e2 * S(s2) / (e2 + S(s2)) : e2;
        sum = sum + S(w * kp.confidence) * rho;
      }
    }
    return sum;
  }

  // sum_t (theta_t - mean)^T P (theta_t - mean) over the non-root body rows
  // and all hand rows, in pose-offset space (6D minus identity).
  double pose_prior(std::span<const double> x, const ParamLayout& layout, double coeff,
                    std::vector<double>* grad) const {
    const PosePrior& prior = model_.pose_prior;
    const int dim = model_.pose_prior_dim();
    std::vector<double> r(dim);
    std::vector<int> where(dim);
    double total = 0.0;
    for (int t = 0; t < layout.frames; ++t) {
      const int base = layout.frame_offset(t);
      int i = 0;
      for (int row = 1; row < layout.body_rows; ++row)
        for (int k = 0; k < kRot6d; ++k, ++i) where[i] = base + row * kRot6d + k;
      for (int row = 0; row < layout.hand_rows; ++row)
        for (int k = 0; k < kRot6d; ++k, ++i) where[i] = base + layout.theta_h_offset() + row * kRot6d + k;
      for (int d = 0; d < dim; ++d) r[d] = x[where[d]] - kIdentity6d[d % kRot6d] - prior.mean[d];
      if (prior.precision.empty()) {
        for (int d = 0; d < dim; ++d) {
          total += prior.precision_diagonal[d] * r[d] * r[d];
          if (grad != nullptr) (*grad)[where[d]] += coeff * 2.0 * prior.precision_diagonal[d] * r[d];
        }
      } else {
        for (int a = 0; a < dim; ++a) {
          double pr = 0.0;
          for (int b = 0; b < dim; ++b) pr += prior.precision[a][b] * r[b];
          total += r[a] * pr;
          if (grad != nullptr) {
            double sym = 0.0;
            for (int b = 0; b < dim; ++b) sym += (prior.precision[a][b] + prior.precision[b][a]) * r[b];
            (*grad)[where[a]] += coeff * sym;
          }
        }
      }
    }
    return total;
  }

  // Magnitude of the selected body/hand rows (offset from identity) plus
  // first differences of the full body and hand poses.
  double smooth(std::span<const double> x, const ParamLayout& layout, double coeff, std::vector<double>* grad) const {
    double total = 0.0;
    auto magnitude = [&](int t, int row_base) {
      const int base = layout.frame_offset(t) + row_base;
      for (int k = 0; k < kRot6d; ++k) {
        const double r = x[base + k] - kIdentity6d[k];
        total += r * r;
        if (grad != nullptr) (*grad)[base + k] += coeff * 2.0 * r;
      }
    };
    for (int t = 0; t < layout.frames; ++t) {
      for (int j : model_.subsets.smooth_body) magnitude(t, model_.slot(j).row * kRot6d);
      for (int j : model_.subsets.smooth_hand) magnitude(t, layout.theta_h_offset() + model_.slot(j).row * kRot6d);
    }
    const int pose_len = layout.theta_f_offset();  // theta_b followed by theta_h
    for (int t = 1; t < layout.frames; ++t) {
      const int a = layout.frame_offset(t - 1), b = layout.frame_offset(t);
      for (int i = 0; i < pose_len; ++i) {
        const double d = x[b + i] - x[a + i];
        total += d * d;
        if (grad != nullptr) {
          (*grad)[b + i] += coeff * 2.0 * d;
          (*grad)[a + i] -= coeff * 2.0 * d;
        }
      }
    }
    return total;
  }

  const SkeletonModel& model_;
  CameraIntrinsics camera_;
  const KeypointSequence* keypoints_;
  ResolvedLayout layout_;
  BiomechanicalLimits limits_;
  ObjectiveWeights weights_;
  ObjectiveOptions options_;
  std::array<HandGeometry, 2> hands_;
  std::vector<BendFrame> bend_frames_;
};

/// Flexion and abduction of one finger joint for a given state.
inline FlexAbd<double> flexion_abduction(const SkeletonModel& model, const MotionState& state,
                                         std::span<const double> shape, int finger_joint) {
  check_state(model, state);
  for (int side = 0; side < 2; ++side)
    for (int f = 0; f < kFingers; ++f)
      for (int k = 0; k < kJointsPerFinger; ++k)
        if (model.hands[side].fingers[f][k] == finger_joint) {
          const HandGeometry g = HandGeometry::build(model, side);
          const FingerFrame& fr = g.fingers[f][k];
          const auto offsets = model.shaped_offsets(shape);
          const Mat3<double> local = local_rotation<double>(model, view_of(state), finger_joint);
          return flexion_abduction<double>(fr, local, offsets[fr.child]);
        }
  fail(ErrorKind::ModelMismatch, "joint " + std::to_string(finger_joint) + " is not a finger joint");
}

}  // namespace holofit
