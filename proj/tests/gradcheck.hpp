#pragma once

// Central finite-difference check of the objective gradient, shared by the
// unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <vector>

#include "holofit/default_assets.hpp"
#include "holofit/objective.hpp"
#include "holofit/random.hpp"
#include "holofit/synth.hpp"

namespace holofit::testing {

struct GradCheckCase {
  MotionSequence motion;
  KeypointSequence keypoints;
  ResolvedLayout layout;
};

// Random perturbation of the rest pose with enough spread that every limit
// term is active somewhere, and keypoints from an unrelated pose so the
// reprojection residuals cover both regimes of the robustifier.
inline GradCheckCase random_case(const SkeletonModel& model, const CameraIntrinsics& cam, const KeypointLayout& layout,
                                 int frames, std::uint64_t seed) {
  Rng rng(seed);
  auto random_motion = [&](double spread) {
    MotionSequence m;
    m.shape.resize(model.shape_dim);
    for (double& b : m.shape) b = 0.8 * rng.normal();
    for (int t = 0; t < frames; ++t) {
      MotionState s = MotionState::rest(model);
      const auto r0 = matrix_to_rot6d(camera_facing_orientation());
      std::copy(r0.begin(), r0.end(), s.theta_b.begin());
      for (double& v : s.theta_b) v += spread * rng.normal();
      for (double& v : s.theta_h) v += spread * rng.normal();
      for (double& v : s.theta_f) v += spread * rng.normal();
      s.transl = {0.1 * rng.normal(), 0.1 * rng.normal(), 2.5 + 0.1 * rng.normal()};
      m.frames.push_back(s);
    }
    return m;
  };
  GradCheckCase c;
  c.motion = random_motion(0.3);
  const MotionSequence target = random_motion(0.3);
  c.keypoints = render_keypoints(model, cam, layout, target);
  for (auto& f : c.keypoints.frames)
    for (auto& g : f.groups)
      for (auto& k : g) {
        k.u += 40.0 * rng.normal();
        k.v += 40.0 * rng.normal();
        k.confidence = rng.uniform() < 0.1 ? 0.0 : rng.uniform();
      }
  c.layout = resolve_layout(layout, model, &c.keypoints);
  return c;
}

struct GradCheckResult {
  TermArray max_rel_error{};
  double total_max_rel_error = 0.0;
  std::array<int, kTermCount> active{};  // cases where the term was nonzero
  int cases = 0;
};

/// Compares the analytic gradient of every raw term and of the weighted
/// total with central differences (step h). Per case the compared entries
/// are every coordinate of one frame (cycling through frames), every shape
/// coordinate, and `directions` random full-vector directional derivatives;
/// the error is ||analytic - numeric|| / max(||numeric||, 1e-8) over them.
inline GradCheckResult run_gradcheck(int cases, int frames, std::uint64_t seed, double h = 1e-5, int directions = 4) {
  // The default shape basis scales the palm uniformly, which leaves its
  // angles fixed; a non-uniform push on the finger roots makes L_palm depend
  // on the shape.
  SkeletonModel model = default_skeleton();
  Rng basis_rng(seed);
  for (const HandStructure& h : model.hands)
    for (int f = 1; f < kFingers; ++f) {
      Vec3<double>& b = model.joints[h.fingers[f][0]].shape_basis[6];
      b = b + Vec3<double>{0.005 * basis_rng.normal(), 0.005 * basis_rng.normal(), 0.005 * basis_rng.normal()};
    }
  model.finalize();
  // Bone lengths and palm measures depend on the shape only; narrow
  // intervals keep those terms (and the pose-angle term) active.
  LimitOptions narrow;
  narrow.bone_tolerance = 0.01;
  narrow.palm_tolerance = 0.01;
  BiomechanicalLimits limits = default_limits(model, narrow);
  for (auto& [joint, iv] : limits.pose_angle_intervals) iv = {0.1, 0.4};
  const CameraIntrinsics cam;
  const KeypointLayout layout = default_layout(model);
  const ObjectiveWeights weights;
  const TermArray coeff = weights.coefficients();

  GradCheckResult res;
  Rng dir_rng(seed ^ 0x5bd1e995ULL);
  for (int c = 0; c < cases; ++c) {
    const GradCheckCase gc = random_case(model, cam, layout, frames, seed + static_cast<std::uint64_t>(c));
    Objective obj(model, cam, &gc.keypoints, &gc.layout, limits, weights);
    const ParamLayout pl = obj.layout(frames, true);
    std::vector<double> x = pack(gc.motion, pl);

    std::array<std::vector<double>, kTermCount> grads;
    const Evaluation base = obj.evaluate(x, pl, {}, weights.coefficients(), false);
    for (int k = 0; k < kTermCount; ++k) {
      grads[k] = obj.term(static_cast<Term>(k), x, pl).gradient;
      if (base.raw[k] != 0.0) ++res.active[k];
    }
    const std::vector<double> total_grad = obj.evaluate(x, pl, {}, true).gradient;

    auto raw_at = [&](const std::vector<double>& p) { return obj.evaluate(p, pl, {}, coeff, false).raw; };
    std::array<std::vector<double>, kTermCount + 1> ana, num;
    auto add = [&](const std::vector<double>& dir) {
      std::vector<double> xp = x, xm = x;
      for (std::size_t i = 0; i < x.size(); ++i) {
        xp[i] += h * dir[i];
        xm[i] -= h * dir[i];
      }
      const TermArray fp = raw_at(xp), fm = raw_at(xm);
      double tot_num = 0.0, tot_ana = 0.0;
      for (int k = 0; k < kTermCount; ++k) {
        double a = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) a += grads[k][i] * dir[i];
        const double n = (fp[k] - fm[k]) / (2.0 * h);
        ana[k].push_back(a);
        num[k].push_back(n);
        tot_num += coeff[k] * n;
      }
      for (std::size_t i = 0; i < x.size(); ++i) tot_ana += total_grad[i] * dir[i];
      ana[kTermCount].push_back(tot_ana);
      num[kTermCount].push_back(tot_num);
    };

    std::vector<double> e(x.size(), 0.0);
    const int frame = c % frames;
    for (int i = 0; i < pl.frame_dim(); ++i) {
      const int idx = pl.frame_offset(frame) + i;
      e[idx] = 1.0;
      add(e);
      e[idx] = 0.0;
    }
    for (int i = 0; i < pl.shape_dim; ++i) {
      const int idx = pl.shape_offset() + i;
      e[idx] = 1.0;
      add(e);
      e[idx] = 0.0;
    }
    for (int d = 0; d < directions; ++d) {
      std::vector<double> dir(x.size());
      double n2 = 0.0;
      for (double& v : dir) {
        v = dir_rng.normal();
        n2 += v * v;
      }
      for (double& v : dir) v /= std::sqrt(n2);
      add(dir);
    }

    for (int k = 0; k <= kTermCount; ++k) {
      double diff = 0.0, ref = 0.0;
      for (std::size_t i = 0; i < ana[k].size(); ++i) {
        diff += (ana[k][i] - num[k][i]) * (ana[k][i] - num[k][i]);
        ref += num[k][i] * num[k][i];
      }
      const double rel = std::sqrt(diff) / std::max(std::sqrt(ref), 1e-8);
      if (k < kTermCount)
        res.max_rel_error[k] = std::max(res.max_rel_error[k], rel);
      else
        res.total_max_rel_error = std::max(res.total_max_rel_error, rel);
    }
    ++res.cases;
  }
  return res;
}

}  // namespace holofit::testing
