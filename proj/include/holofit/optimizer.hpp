#pragma once

// Staged minimization of the fitting objective.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "holofit/body_model.hpp"
#include "holofit/error.hpp"
#include "holofit/keypoints.hpp"
#include "holofit/objective.hpp"

namespace holofit {

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;

  void reset(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    t = 0;
  }
};

struct AdamOptions {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update in place.
inline void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state,
                      const AdamOptions& opt = {}) {
  if (state.m.size() != params.size()) state.reset(params.size());
  ++state.t;
  const double c1 = 1.0 - std::pow(opt.beta1, double(state.t));
  const double c2 = 1.0 - std::pow(opt.beta2, double(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = opt.beta1 * state.m[i] + (1.0 - opt.beta1) * grad[i];
    state.v[i] = opt.beta2 * state.v[i] + (1.0 - opt.beta2) * grad[i] * grad[i];
    const double mh = state.m[i] / c1;
    const double vh = state.v[i] / c2;
    params[i] -= opt.lr * mh / (std::sqrt(vh) + opt.eps);
  }
}

// ---------------------------------------------------------------------------
// Strong Wolfe line search (bracket and zoom with cubic interpolation).

// Returns f(x) and writes the gradient into `grad`.
using ValueGradFn = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct WolfeOptions {
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_iters = 25;
  double alpha_max = 1e10;
};

struct LineSearchResult {
  double alpha = 0.0;
  double f = 0.0;
  double slope = 0.0;  // g(x + alpha d) . d
  std::vector<double> x;
  std::vector<double> grad;
  bool converged = false;
  int evaluations = 0;
};

namespace detail {

inline double dotv(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dotv(a, a)); }

// Minimizer of the cubic matching values and slopes at a and b, if the
// cubic has one.
inline std::optional<double> cubic_minimizer(double a, double fa, double da, double b, double fb, double db) {
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  if (disc < 0.0) return std::nullopt;
  const double d2 = std::copysign(std::sqrt(disc), b - a);
  const double denom = db - da + 2.0 * d2;
  if (denom == 0.0) return std::nullopt;
  const double c = b - (b - a) * (db + d2 - d1) / denom;
  if (!std::isfinite(c)) return std::nullopt;
  return c;
}

// Cubic minimizer, or bisection when it lands outside the safeguarded
// interior of [a, b].
inline double cubic_step(double a, double fa, double da, double b, double fb, double db) {
  const double lo = std::min(a, b), hi = std::max(a, b);
  const double width = hi - lo;
  const auto c = cubic_minimizer(a, fa, da, b, fb, db);
  if (c && *c > lo + 0.1 * width && *c < hi - 0.1 * width) return *c;
  return 0.5 * (a + b);
}

}  // namespace detail

/// Finds a step along `dir` satisfying the strong Wolfe conditions. `f0` and
/// `g0` are the value and gradient at `x`. When the iteration budget runs
/// out, the best sufficient-decrease point seen so far is returned with
/// `converged == false`.
inline LineSearchResult line_search_strong_wolfe(const ValueGradFn& fn, std::span<const double> x, double f0,
                                                 std::span<const double> g0, std::span<const double> dir,
                                                 const WolfeOptions& opt = {}, double alpha_init = 1.0) {
  const double slope0 = detail::dotv(g0, dir);
  if (!(slope0 < 0.0)) fail(ErrorKind::NotDescent, "direction has slope " + std::to_string(slope0));
  if (!(0.0 < opt.c1 && opt.c1 < opt.c2 && opt.c2 < 1.0))
    fail(ErrorKind::InvalidConfig, "Wolfe constants must satisfy 0 < c1 < c2 < 1");

  const std::size_t n = x.size();
  struct Sample {
    double alpha, f, slope;
    std::vector<double> x, g;
  };
  LineSearchResult out;
  auto eval = [&](double alpha) {
    Sample s{alpha, 0.0, 0.0, std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) s.x[i] = x[i] + alpha * dir[i];
    s.f = fn(s.x, s.g);
    s.slope = detail::dotv(s.g, dir);
    ++out.evaluations;
    return s;
  };
  auto armijo = [&](const Sample& s) { return s.f <= f0 + opt.c1 * s.alpha * slope0; };
  auto curvature = [&](const Sample& s) { return std::abs(s.slope) <= opt.c2 * std::abs(slope0); };

  std::optional<Sample> best;
  auto consider = [&](const Sample& s) {
    if (!std::isfinite(s.f)) return;
    if (!best || (armijo(s) && (!armijo(*best) || s.f < best->f)) || (!armijo(*best) && s.f < best->f)) best = s;
  };
  auto finish = [&](Sample s, bool ok) {
    out.alpha = s.alpha;
    out.f = s.f;
    out.slope = s.slope;
    out.x = std::move(s.x);
    out.grad = std::move(s.g);
    out.converged = ok;
    return out;
  };

  Sample prev{0.0, f0, slope0, std::vector<double>(x.begin(), x.end()), std::vector<double>(g0.begin(), g0.end())};
  double alpha = std::min(alpha_init, opt.alpha_max);
  bool first = true;

  auto zoom = [&](Sample lo, Sample hi) -> LineSearchResult {
    while (out.evaluations < opt.max_iters) {
      const double a = detail::cubic_step(lo.alpha, lo.f, lo.slope, hi.alpha, hi.f, hi.slope);
      Sample s = eval(a);
      consider(s);
      if (!std::isfinite(s.f) || !armijo(s) || s.f >= lo.f) {
        hi = std::move(s);
      } else {
        if (curvature(s)) return finish(std::move(s), true);
        if (s.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = std::move(s);
      }
      if (std::abs(hi.alpha - lo.alpha) < 1e-16 * std::max(1.0, lo.alpha)) break;
    }
    return finish(best ? *best : lo, false);
  };

  while (out.evaluations < opt.max_iters) {
    Sample s = eval(alpha);
    consider(s);
    if (!std::isfinite(s.f) || !armijo(s) || (!first && s.f >= prev.f)) return zoom(std::move(prev), std::move(s));
    if (curvature(s)) {
      // One interpolation step from the accepted point; exact on quadratics,
      // kept only if it also satisfies both conditions and lowers f.
      const auto c = detail::cubic_minimizer(0.0, f0, slope0, s.alpha, s.f, s.slope);
      if (c && *c > 0.0 && *c <= opt.alpha_max && std::abs(*c - s.alpha) > 1e-12 * s.alpha &&
          out.evaluations < opt.max_iters) {
        Sample r = eval(*c);
        if (std::isfinite(r.f) && armijo(r) && curvature(r) && r.f < s.f) return finish(std::move(r), true);
      }
      return finish(std::move(s), true);
    }
    if (s.slope >= 0.0) return zoom(std::move(s), std::move(prev));
    first = false;
    prev = std::move(s);
    alpha = std::min(2.0 * alpha, opt.alpha_max);
  }
  return finish(best ? *best : prev, false);
}

// ---------------------------------------------------------------------------
// L-BFGS

class LbfgsHistory {
 public:
  explicit LbfgsHistory(int capacity = 10) : capacity_(capacity) {}

  std::size_t size() const { return s_.size(); }
  int capacity() const { return capacity_; }
  void clear() {
    s_.clear();
    y_.clear();
    rho_.clear();
  }

  /// Stores the pair when s.y > 1e-10; returns whether it was stored.
  bool update(std::vector<double> s, std::vector<double> y) {
    const double sy = detail::dotv(s, y);
    if (!(sy > 1e-10)) return false;
    if (static_cast<int>(s_.size()) == capacity_) {
      s_.pop_front();
      y_.pop_front();
      rho_.pop_front();
    }
    s_.push_back(std::move(s));
    y_.push_back(std::move(y));
    rho_.push_back(1.0 / sy);
    return true;
  }

  /// Two-loop recursion: returns -H grad.
  std::vector<double> direction(std::span<const double> grad) const {
    std::vector<double> q(grad.begin(), grad.end());
    const std::size_t m = s_.size();
    std::vector<double> a(m);
    for (std::size_t i = m; i-- > 0;) {
      a[i] = rho_[i] * detail::dotv(s_[i], q);
      for (std::size_t k = 0; k < q.size(); ++k) q[k] -= a[i] * y_[i][k];
    }
    if (m > 0) {
      const double gamma = detail::dotv(s_.back(), y_.back()) / detail::dotv(y_.back(), y_.back());
      for (double& v : q) v *= gamma;
    }
    for (std::size_t i = 0; i < m; ++i) {
      const double b = rho_[i] * detail::dotv(y_[i], q);
      for (std::size_t k = 0; k < q.size(); ++k) q[k] += (a[i] - b) * s_[i][k];
    }
    for (double& v : q) v = -v;
    return q;
  }

 private:
  int capacity_;
  std::deque<std::vector<double>> s_, y_;
  std::deque<double> rho_;
};

struct LbfgsOptions {
  int history = 10;
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  int max_line_iters = 25;
};

struct AcceptedStep {
  double alpha;
  double f_before;
  double slope_before;  // g(x) . d
  double f_after;
  double slope_after;  // g(x + alpha d) . d
  bool wolfe_converged;
};

struct MinimizeResult {
  std::vector<double> x;
  double f = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<AcceptedStep> steps;
};

/// One L-BFGS iteration from (x, f, g): computes the search direction,
/// runs the line search and updates the history.
inline AcceptedStep lbfgs_iterate(const ValueGradFn& fn, std::vector<double>& x, double& f, std::vector<double>& g,
                                  LbfgsHistory& history, const LbfgsOptions& opt) {
  std::vector<double> d = history.direction(g);
  if (!(detail::dotv(g, d) < 0.0)) {
    history.clear();
    d = history.direction(g);
  }
  const double alpha0 = history.size() == 0 ? std::min(1.0, 1.0 / std::max(detail::norm2(g), 1e-300)) : 1.0;
  WolfeOptions wo{opt.wolfe_c1, opt.wolfe_c2, opt.max_line_iters};
  const double slope0 = detail::dotv(g, d);
  LineSearchResult ls = line_search_strong_wolfe(fn, x, f, g, d, wo, alpha0);
  AcceptedStep step{ls.alpha, f, slope0, ls.f, ls.slope, ls.converged};
  if (!(ls.f <= f)) {
    // No decrease anywhere along the line; keep the current point.
    history.clear();
    step.alpha = 0.0;
    step.f_after = f;
    step.slope_after = slope0;
    return step;
  }
  std::vector<double> s(x.size()), y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    s[i] = ls.x[i] - x[i];
    y[i] = ls.grad[i] - g[i];
  }
  history.update(std::move(s), std::move(y));
  x = std::move(ls.x);
  g = std::move(ls.grad);
  f = ls.f;
  return step;
}

inline MinimizeResult minimize_lbfgs(const ValueGradFn& fn, std::vector<double> x, int max_iters,
                                     double grad_tol = 1e-10, const LbfgsOptions& opt = {}) {
  MinimizeResult r;
  std::vector<double> g(x.size());
  double f = fn(x, g);
  LbfgsHistory history(opt.history);
  for (; r.iterations < max_iters; ++r.iterations) {
    if (detail::norm2(g) < grad_tol) {
      r.converged = true;
      break;
    }
    AcceptedStep s = lbfgs_iterate(fn, x, f, g, history, opt);
    r.steps.push_back(s);
    if (s.alpha == 0.0) break;
  }
  r.grad_norm = detail::norm2(g);
  r.converged = r.converged || r.grad_norm < grad_tol;
  r.x = std::move(x);
  r.f = f;
  return r;
}

// ---------------------------------------------------------------------------
// Staged fitting

enum class OptimizerKind { Adam, Lbfgs };

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "lbfgs"; }

struct StageSpec {
  int steps = 400;
  bool optimize_shape = true;
  double w_body = 1.0;
  double w_hand = 1.0;
  std::optional<OptimizerKind> optimizer;  // overrides FitConfig::optimizer
};

struct FitConfig {
  int total_steps = 2000;
  std::vector<StageSpec> stages = default_stages();
  OptimizerKind optimizer = OptimizerKind::Adam;
  AdamOptions adam;
  LbfgsOptions lbfgs;
  double convergence_tol = 1e-6;
  std::uint64_t seed = 0;
  ObjectiveWeights weights;
  ObjectiveOptions objective;
  double threshold = 0.3;

  // Three stages with a free shape and unit group weights, then two with
  // the shape frozen and the hand weight doubled.
  static std::vector<StageSpec> default_stages() {
    return {{400, true, 1.0, 1.0, std::nullopt},
            {400, true, 1.0, 1.0, std::nullopt},
            {400, true, 1.0, 1.0, std::nullopt},
            {400, false, 1.0, 2.0, std::nullopt},
            {400, false, 1.0, 2.0, std::nullopt}};
  }

  // Spreads `steps` over the existing stages as evenly as possible.
  void set_total_steps(int steps) {
    if (steps < 0) fail(ErrorKind::InvalidConfig, "total steps must be >= 0");
    total_steps = steps;
    const int n = static_cast<int>(stages.size());
    for (int i = 0; i < n; ++i) stages[i].steps = steps / n + (i < steps % n ? 1 : 0);
  }

  void validate() const {
    int sum = 0;
    for (const auto& s : stages) {
      if (s.steps < 0) fail(ErrorKind::InvalidConfig, "stage steps must be >= 0");
      if (!(s.w_body >= 0.0) || !(s.w_hand >= 0.0)) fail(ErrorKind::InvalidConfig, "stage weights must be >= 0");
      sum += s.steps;
    }
    if (sum != total_steps)
      fail(ErrorKind::InvalidConfig, "stage steps sum to " + std::to_string(sum) + ", total_steps is " +
                                         std::to_string(total_steps));
    if (!(0.0 < lbfgs.wolfe_c1 && lbfgs.wolfe_c1 < lbfgs.wolfe_c2 && lbfgs.wolfe_c2 < 1.0))
      fail(ErrorKind::InvalidConfig, "Wolfe constants must satisfy 0 < c1 < c2 < 1");
    if (lbfgs.history < 1 || lbfgs.max_line_iters < 1) fail(ErrorKind::InvalidConfig, "bad L-BFGS options");
    if (!(adam.lr > 0.0)) fail(ErrorKind::InvalidConfig, "learning rate must be positive");
    if (!(threshold >= 0.0 && threshold <= 1.0)) fail(ErrorKind::InvalidConfig, "threshold must be in [0,1]");
    weights.validate();
  }
};

struct StageTrace {
  int index = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  bool optimize_shape = false;
  double w_body = 1.0;
  double w_hand = 1.0;
  int steps_planned = 0;
  int steps_run = 0;
  bool early_stopped = false;
  std::vector<double> total;
  std::array<std::vector<double>, kTermCount> terms;
  std::vector<double> grad_norm;
  std::vector<std::vector<double>> shape_iterates;  // shape after every step
};

struct FitReport {
  std::vector<StageTrace> stages;
  MotionSequence motion;
  std::vector<double> frozen_shape;
  bool shape_frozen = false;
  int iterations = 0;
  double final_total = 0.0;
  TermArray final_terms{};
  double wall_time_s = 0.0;
  std::uint64_t seed = 0;
};

/// Element-wise mean of the recorded shape iterates.
inline std::vector<double> freeze_shape_mean(const std::vector<std::vector<double>>& trace) {
  if (trace.empty()) fail(ErrorKind::NoTrace, "no shape iterates recorded");
  std::vector<double> mean(trace.front().size(), 0.0);
  for (const auto& s : trace) {
    if (s.size() != mean.size()) fail(ErrorKind::ShapeError, "shape iterates differ in length");
    for (std::size_t i = 0; i < s.size(); ++i) mean[i] += s[i];
  }
  for (double& v : mean) v /= static_cast<double>(trace.size());
  return mean;
}

/// Upright, camera-facing global orientation for a y-up skeleton: a half
/// turn about x maps the model's +y to the image's -v direction.
inline Mat3<double> camera_facing_orientation() { return axis_angle_matrix({1, 0, 0}, M_PI); }

inline constexpr double kDefaultDepth = 2.0;

/// Initial motion. With `init` the sequence is taken as given; otherwise
/// every frame starts at the rest pose facing the camera, with a translation
/// from a closed-form centroid/spread alignment of the rest joints to the
/// detected keypoints (default depth 2 m when a frame has too few points).
inline MotionSequence initialize(const SkeletonModel& model, const CameraIntrinsics& cam,
                                 const KeypointSequence& keypoints, const ResolvedLayout& layout,
                                 const std::optional<MotionSequence>& init, double fps = 30.0) {
  if (init) {
    if (!keypoints.frames.empty() && init->size() != keypoints.size())
      fail(ErrorKind::InitMismatch, "initialization has " + std::to_string(init->size()) + " frames, keypoints have " +
                                        std::to_string(keypoints.size()));
    if (init->frames.empty()) fail(ErrorKind::InitMismatch, "initialization has no frames");
    if (static_cast<int>(init->shape.size()) != model.shape_dim)
      fail(ErrorKind::ModelMismatch, "initialization shape has wrong length");
    for (const auto& s : init->frames) check_state(model, s);
    return *init;
  }

  MotionSequence seq;
  seq.fps = fps;
  seq.shape.assign(model.shape_dim, 0.0);
  const Mat3<double> r0 = camera_facing_orientation();
  MotionState rest = MotionState::rest(model);
  const auto r6 = matrix_to_rot6d(r0);
  std::copy(r6.begin(), r6.end(), rest.theta_b.begin());
  const auto rest_pos = model.rest_positions();

  const int frames = std::max(1, keypoints.size());
  for (int t = 0; t < frames; ++t) {
    MotionState s = rest;
    s.transl = {0.0, 0.0, kDefaultDepth};
    if (t < keypoints.size()) {
      std::vector<Vec3<double>> X;
      std::vector<Vec2<double>> u;
      for (int g = 0; g < kGroupCount; ++g)
        for (std::size_t k = 0; k < layout.joints[g].size(); ++k) {
          const Keypoint& kp = keypoints.frames[t].groups[g][k];
          if (layout.joints[g][k] < 0 || kp.confidence <= 0.0) continue;
          X.push_back(r0 * rest_pos[layout.joints[g][k]]);
          u.push_back({(kp.u - cam.cx) / cam.fx, (kp.v - cam.cy) / cam.fy});
        }
      if (X.size() >= 2) {
        Vec3<double> xm{};
        Vec2<double> um{};
        for (std::size_t i = 0; i < X.size(); ++i) {
          xm = xm + X[i];
          um.x += u[i].x;
          um.y += u[i].y;
        }
        xm = xm / double(X.size());
        um.x /= double(X.size());
        um.y /= double(X.size());
        double s3 = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < X.size(); ++i) {
          s3 += std::pow(X[i].x - xm.x, 2) + std::pow(X[i].y - xm.y, 2);
          s2 += std::pow(u[i].x - um.x, 2) + std::pow(u[i].y - um.y, 2);
        }
        if (s2 > 1e-18 && s3 > 1e-18) {
          const double z = std::sqrt(s3 / s2);
          s.transl = {um.x * z - xm.x, um.y * z - xm.y, z - xm.z};
        }
      }
    }
    seq.frames.push_back(std::move(s));
  }
  return seq;
}

/// Runs the configured stages in order. The shape is optimized while a
/// stage asks for it; at the first stage that does not, it is frozen to the
/// mean of every shape iterate recorded so far and stays fixed afterwards.
inline FitReport fit_sequence(const SkeletonModel& model, const CameraIntrinsics& cam,
                              const KeypointSequence& keypoints, const ResolvedLayout& layout,
                              const BiomechanicalLimits& limits, const FitConfig& config,
                              const MotionSequence& init) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  ObjectiveOptions oopt = config.objective;
  Objective objective(model, cam, &keypoints, &layout, limits, config.weights, oopt);

  FitReport report;
  report.seed = config.seed;
  report.motion = init;
  MotionSequence& motion = report.motion;
  const int T = motion.size();
  std::vector<std::vector<double>> shape_trace;
  bool frozen = false;

  for (std::size_t si = 0; si < config.stages.size(); ++si) {
    const StageSpec& spec = config.stages[si];
    StageTrace trace;
    trace.index = static_cast<int>(si) + 1;
    trace.optimizer = spec.optimizer.value_or(config.optimizer);
    trace.w_body = spec.w_body;
    trace.w_hand = spec.w_hand;
    trace.steps_planned = spec.steps;

    if (!spec.optimize_shape && !frozen && !shape_trace.empty()) {
      motion.shape = freeze_shape_mean(shape_trace);
      report.frozen_shape = motion.shape;
      report.shape_frozen = true;
      frozen = true;
    }
    const bool shape_free = spec.optimize_shape && !frozen;
    trace.optimize_shape = shape_free;
    objective.set_group_weights(spec.w_body, spec.w_hand);
    const ParamLayout pl = objective.layout(T, shape_free);
    std::vector<double> x = pack(motion, pl);
    const std::vector<double> fixed_shape = motion.shape;

    auto record = [&](const Evaluation& ev, double gnorm) {
      trace.total.push_back(ev.value);
      for (int k = 0; k < kTermCount; ++k) trace.terms[k].push_back(ev.raw[k]);
      trace.grad_norm.push_back(gnorm);
    };
    auto record_shape = [&] {
      std::vector<double> s = shape_free ? std::vector<double>(x.begin() + pl.shape_offset(), x.end()) : fixed_shape;
      trace.shape_iterates.push_back(s);
      if (shape_free) shape_trace.push_back(std::move(s));
    };
    auto evaluate = [&](std::span<const double> p, bool grad) {
      Evaluation ev;
      try {
        ev = objective.evaluate(p, pl, fixed_shape, grad);
      } catch (const Error& e) {
        throw Error(e.kind(), "stage " + std::to_string(trace.index) + ", step " + std::to_string(trace.steps_run) +
                                  ": " + std::string(e.what()).substr(std::string(to_string(e.kind())).size() + 2));
      }
      if (!std::isfinite(ev.value))
        fail(ErrorKind::InvalidConfig, "stage " + std::to_string(trace.index) + ": objective became non-finite");
      return ev;
    };

    if (trace.optimizer == OptimizerKind::Adam) {
      AdamState state;
      state.reset(x.size());
      for (int step = 0; step < spec.steps; ++step) {
        const Evaluation ev = evaluate(x, true);
        const double gn = detail::norm2(ev.gradient);
        record(ev, gn);
        if (gn < config.convergence_tol) {
          trace.early_stopped = true;
          break;
        }
        adam_step(x, ev.gradient, state, config.adam);
        ++trace.steps_run;
        record_shape();
      }
    } else {
      LbfgsHistory history(config.lbfgs.history);
      ValueGradFn fn = [&](std::span<const double> p, std::span<double> g) {
        Evaluation ev = evaluate(p, true);
        std::copy(ev.gradient.begin(), ev.gradient.end(), g.begin());
        return ev.value;
      };
      std::vector<double> g(x.size());
      Evaluation ev = evaluate(x, true);
      double f = ev.value;
      g = ev.gradient;
      for (int step = 0; step < spec.steps; ++step) {
        const double gn = detail::norm2(g);
        record(ev, gn);
        if (gn < config.convergence_tol) {
          trace.early_stopped = true;
          break;
        }
        const AcceptedStep s = lbfgs_iterate(fn, x, f, g, history, config.lbfgs);
        ++trace.steps_run;
        record_shape();
        if (s.alpha != 0.0) {
          ev.value = f;
          ev.gradient = g;
          ev.raw = objective.evaluate(x, pl, fixed_shape, false).raw;
        }
      }
    }
    unpack(x, pl, motion);
    report.iterations += trace.steps_run;
    report.stages.push_back(std::move(trace));
  }

  const ParamLayout final_layout = objective.layout(T, false);
  const auto final_ev = objective.evaluate(pack(motion, final_layout), final_layout, motion.shape, false);
  report.final_total = final_ev.value;
  report.final_terms = final_ev.raw;
  report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace holofit
