#pragma once

// Seeded synthetic clips for round-trip testing: a smooth random motion
// that satisfies the hand limits by construction, and its projected
// keypoints with optional pixel noise.

#include <algorithm>
#include <cmath>
#include <vector>

#include "holofit/body_model.hpp"
#include "holofit/keypoints.hpp"
#include "holofit/objective.hpp"
#include "holofit/optimizer.hpp"
#include "holofit/random.hpp"

namespace holofit {

struct SynthOptions {
  int frames = 30;
  double fps = 30.0;
  double noise_px = 0.0;
  double shape_std = 0.3;
  double depth = 2.5;
  int knots = 4;           // spline knots over the clip
  double amplitude = 1.0;  // scales every body rotation range
  double hull_shrink = 0.7;
};

struct SynthClip {
  MotionSequence motion;
  KeypointSequence keypoints;        // noiseless
  KeypointSequence noisy_keypoints;  // equals `keypoints` when noise is 0
};

/// Stand-in for an external 3D regressor's output on a synthetic clip: the
/// true poses with Gaussian noise on every 6D entry, jittered translation
/// and the mean shape. Used as a fit initialization.
struct RegressorNoise {
  double rot6d_std = 0.1;
  double transl_std = 0.05;
};

inline MotionSequence simulate_regressor(const MotionSequence& truth, const RegressorNoise& noise, std::uint64_t seed) {
  Rng rng(seed);
  MotionSequence out = truth;
  std::fill(out.shape.begin(), out.shape.end(), 0.0);
  for (MotionState& s : out.frames) {
    for (double& v : s.theta_b) v += noise.rot6d_std * rng.normal();
    for (double& v : s.theta_h) v += noise.rot6d_std * rng.normal();
    for (double& v : s.transl) v += noise.transl_std * rng.normal();
  }
  return out;
}

namespace detail {

// A scalar track through random knots, interpolated with a cosine ease so
// that each segment stays within the range of its two knots.
class Track {
 public:
  Track(std::vector<double> knots, int frames) : knots_(std::move(knots)), frames_(frames) {}
  double at(int t) const {
    if (knots_.size() == 1 || frames_ <= 1) return knots_[0];
    const double u = double(t) / double(frames_ - 1) * double(knots_.size() - 1);
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(u), knots_.size() - 2);
    const double w = 0.5 - 0.5 * std::cos(M_PI * (u - double(i)));
    return knots_[i] + w * (knots_[i + 1] - knots_[i]);
  }

 private:
  std::vector<double> knots_;
  int frames_;
};

inline Track random_track(Rng& rng, int knots, int frames, double lo, double hi) {
  std::vector<double> k(knots);
  for (double& v : k) v = rng.uniform(lo, hi);
  return Track(std::move(k), frames);
}

// Random point inside a convex polygon shrunk toward its vertex centroid.
inline std::vector<Vec2<double>> random_hull_knots(Rng& rng, int knots, const Polygon& hull, double shrink) {
  Vec2<double> c{0, 0};
  for (const auto& p : hull) {
    c.x += p.x / double(hull.size());
    c.y += p.y / double(hull.size());
  }
  std::vector<Vec2<double>> out;
  for (int k = 0; k < knots; ++k) {
    std::vector<double> w(hull.size());
    double sum = 0.0;
    for (double& v : w) {
      v = -std::log(1.0 - rng.uniform());
      sum += v;
    }
    Vec2<double> p{0, 0};
    for (std::size_t i = 0; i < hull.size(); ++i) {
      p.x += w[i] / sum * hull[i].x;
      p.y += w[i] / sum * hull[i].y;
    }
    out.push_back({c.x + shrink * (p.x - c.x), c.y + shrink * (p.y - c.y)});
  }
  return out;
}

struct RotationTrack {
  std::array<Track, 3> rv;  // rotation vector components
  Mat3<double> pre = Mat3<double>::identity();
  Mat3<double> at(int t) const { return pre * rotation_vector_matrix({rv[0].at(t), rv[1].at(t), rv[2].at(t)}); }
};

inline RotationTrack random_rotation(Rng& rng, int knots, int frames, double amp) {
  return {{random_track(rng, knots, frames, -amp, amp), random_track(rng, knots, frames, -amp, amp),
           random_track(rng, knots, frames, -amp, amp)}};
}

// Hinge-like track: bend angle in [lo, hi] about `axis` plus small wobble.
inline RotationTrack hinge_rotation(Rng& rng, int knots, int frames, const Vec3<double>& axis, double lo, double hi,
                                    double wobble) {
  const Vec3<double> a = axis / norm(axis);
  std::vector<double> kx, ky, kz;
  for (int k = 0; k < knots; ++k) {
    const double th = rng.uniform(lo, hi);
    kx.push_back(a.x * th + rng.uniform(-wobble, wobble));
    ky.push_back(a.y * th + rng.uniform(-wobble, wobble));
    kz.push_back(a.z * th + rng.uniform(-wobble, wobble));
  }
  return {{Track(kx, frames), Track(ky, frames), Track(kz, frames)}};
}

inline void set_row(std::vector<double>& v, int row, const Mat3<double>& r) {
  const auto r6 = matrix_to_rot6d(r);
  std::copy(r6.begin(), r6.end(), v.begin() + row * kRot6d);
}

}  // namespace detail

/// Keypoints of `motion` under `layout`, confidence 1 for every mapped slot
/// (0 for unmapped slots).
inline KeypointSequence render_keypoints(const SkeletonModel& model, const CameraIntrinsics& cam,
                                         const KeypointLayout& layout, const MotionSequence& motion) {
  const ResolvedLayout rl = resolve_layout(layout, model);
  KeypointSequence seq;
  seq.source_name = "synthetic";
  seq.layout = layout;
  for (int t = 0; t < motion.size(); ++t) {
    const auto pos = forward_kinematics(model, motion.frames[t], motion.shape);
    KeypointFrame f;
    f.frame_index = t;
    for (int g = 0; g < kGroupCount; ++g)
      for (int j : rl.joints[g]) {
        if (j < 0) {
          f.groups[g].push_back({0, 0, 0});
          continue;
        }
        const auto uv = project_point(pos[j], cam);
        f.groups[g].push_back({uv.x, uv.y, 1.0});
      }
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

inline SynthClip synthesize(const SkeletonModel& model, const CameraIntrinsics& cam, const KeypointLayout& layout,
                            const BiomechanicalLimits& limits, const SynthOptions& opt, std::uint64_t seed) {
  using namespace detail;
  if (opt.frames < 1) fail(ErrorKind::InvalidConfig, "synthetic clip needs at least one frame");
  check_limits(model, limits);
  Rng rng(seed);
  const int T = opt.frames, K = std::max(2, opt.knots);
  const double A = opt.amplitude;

  SynthClip clip;
  MotionSequence& m = clip.motion;
  m.fps = opt.fps;
  m.shape.resize(model.shape_dim);
  for (double& b : m.shape) b = std::clamp(opt.shape_std * rng.normal(), -2.5 * opt.shape_std, 2.5 * opt.shape_std);

  // Body rotation tracks, by joint name when the joint exists.
  std::vector<std::optional<RotationTrack>> body(model.body_joint_count);
  auto amp_for = [&](const std::string& n) {
    if (n.find("spine") != std::string::npos) return 0.12;
    if (n == "neck") return 0.15;
    if (n == "head") return 0.2;
    if (n.find("collar") != std::string::npos) return 0.1;
    if (n.find("shoulder") != std::string::npos) return 0.4;
    if (n.find("wrist") != std::string::npos) return 0.35;
    return 0.08;
  };
  for (int j = 0; j < model.body_joint_count; ++j) body[j] = random_rotation(rng, K, T, A * amp_for(model.joints[j].name));
  body[0]->pre = camera_facing_orientation();
  for (const BendJoint& b : model.subsets.bend) {
    if (model.slot(b.joint).kind != RotationKind::Body) continue;
    const bool elbow = model.joints[b.joint].name.find("elbow") != std::string::npos;
    body[b.joint] = hinge_rotation(rng, K, T, -1.0 * b.hyperextension_axis, elbow ? 0.2 * A : 0.0,
                                   elbow ? 1.5 * A : 0.3 * A, 0.05 * A);
  }
  const RotationTrack jaw = hinge_rotation(rng, K, T, {1, 0, 0}, 0.0, 0.25 * A, 0.02 * A);
  std::array<Track, 3> transl = {random_track(rng, K, T, -0.1, 0.1), random_track(rng, K, T, -0.05, 0.05),
                                 random_track(rng, K, T, opt.depth - 0.1, opt.depth + 0.1)};

  // Finger tracks: knots inside each joint's hull, rotation taking the rest
  // child direction to the requested flexion/abduction direction.
  struct FingerTrack {
    FingerFrame frame;
    int row;
    Track flex, abd;
  };
  std::vector<FingerTrack> fingers;
  for (int side = 0; side < 2; ++side) {
    const HandGeometry g = HandGeometry::build(model, side);
    for (int f = 0; f < kFingers; ++f)
      for (int k = 0; k < kJointsPerFinger; ++k) {
        const FingerFrame& fr = g.fingers[f][k];
        const auto knots = random_hull_knots(rng, K, limits.angle_hulls.at(fr.joint), opt.hull_shrink);
        std::vector<double> kf, ka;
        for (const auto& p : knots) {
          kf.push_back(p.x);
          ka.push_back(p.y);
        }
        fingers.push_back({fr, model.slot(fr.joint).row, Track(kf, T), Track(ka, T)});
      }
  }

  for (int t = 0; t < T; ++t) {
    MotionState s = MotionState::rest(model);
    for (int j = 0; j < model.body_joint_count; ++j) set_row(s.theta_b, j, body[j]->at(t));
    if (model.jaw_joint_index >= 0) set_row(s.theta_f, 0, jaw.at(t));
    for (const FingerTrack& ft : fingers) {
      const double fl = ft.flex.at(t), ab = ft.abd.at(t);
      const Vec3<double> d = ft.frame.x + std::tan(ab) * ft.frame.y + std::tan(fl) * ft.frame.z;
      set_row(s.theta_h, ft.row, align_vectors(ft.frame.x, d / norm(d)));
    }
    s.transl = {transl[0].at(t), transl[1].at(t), transl[2].at(t)};
    m.frames.push_back(std::move(s));
  }

  clip.keypoints = render_keypoints(model, cam, layout, m);
  clip.noisy_keypoints = clip.keypoints;
  if (opt.noise_px > 0.0)
    for (auto& f : clip.noisy_keypoints.frames)
      for (auto& grp : f.groups)
        for (auto& k : grp)
          if (k.confidence > 0.0) {
            k.u += opt.noise_px * rng.normal();
            k.v += opt.noise_px * rng.normal();
          }
  return clip;
}

}  // namespace holofit
