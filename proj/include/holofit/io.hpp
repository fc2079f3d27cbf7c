#pragma once

// JSON file formats: skeleton model, limits, camera, keypoint layout,
// motion, fit config, fit report, codebook, features, joint sequences.

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "holofit/body_model.hpp"
#include "holofit/error.hpp"
#include "holofit/keypoints.hpp"
#include "holofit/metrics.hpp"
#include "holofit/objective.hpp"
#include "holofit/optimizer.hpp"
#include "holofit/quantize.hpp"
#include "holofit/validate.hpp"

namespace holofit::io {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Helpers

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, path + ": " + e.what());
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  out << text;
  if (!out) fail(ErrorKind::Io, "write failed for '" + path + "'");
}

inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(1) + "\n"); }

namespace detail {

// Wraps nlohmann type errors as ParseError with the field path.
template <class Fn>
auto guarded(const std::string& what, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, what + ": " + e.what());
  }
}

inline const json& field(const json& j, const char* key, const std::string& ctx) {
  if (!j.is_object() || !j.contains(key)) fail(ErrorKind::ParseError, ctx + ": missing field '" + key + "'");
  return j.at(key);
}

inline double number(const json& j, const std::string& ctx) {
  if (!j.is_number()) fail(ErrorKind::ParseError, ctx + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(ErrorKind::ParseError, ctx + ": non-finite number");
  return v;
}

inline int integer(const json& j, const std::string& ctx) {
  if (!j.is_number_integer()) fail(ErrorKind::ParseError, ctx + ": expected an integer");
  return j.get<int>();
}

inline std::vector<double> numbers(const json& j, const std::string& ctx, int expect = -1) {
  if (!j.is_array()) fail(ErrorKind::ParseError, ctx + ": expected an array");
  if (expect >= 0 && static_cast<int>(j.size()) != expect)
    fail(ErrorKind::ParseError, ctx + ": expected " + std::to_string(expect) + " values, got " + std::to_string(j.size()));
  std::vector<double> v;
  for (std::size_t i = 0; i < j.size(); ++i) v.push_back(number(j[i], ctx));
  return v;
}

inline std::vector<int> integers(const json& j, const std::string& ctx) {
  if (!j.is_array()) fail(ErrorKind::ParseError, ctx + ": expected an array");
  std::vector<int> v;
  for (const auto& e : j) v.push_back(integer(e, ctx));
  return v;
}

inline Vec3<double> vec3(const json& j, const std::string& ctx) {
  const auto v = numbers(j, ctx, 3);
  return {v[0], v[1], v[2]};
}

inline json to_json(const Vec3<double>& v) { return json::array({v.x, v.y, v.z}); }

// Flat row-major values as an array of `width`-wide rows.
inline json rows(std::span<const double> v, int width) {
  json out = json::array();
  for (std::size_t i = 0; i < v.size(); i += width) out.push_back(std::vector<double>(v.begin() + i, v.begin() + i + width));
  return out;
}

inline std::vector<double> flat_rows(const json& j, int count, int width, const std::string& ctx) {
  if (!j.is_array() || static_cast<int>(j.size()) != count)
    fail(ErrorKind::ModelMismatch, ctx + ": expected " + std::to_string(count) + " rows");
  std::vector<double> out;
  for (std::size_t r = 0; r < j.size(); ++r) {
    const auto v = numbers(j[r], ctx + "[" + std::to_string(r) + "]", width);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& ctx) {
  if (!j.is_object()) fail(ErrorKind::InvalidConfig, ctx + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.contains(k)) fail(ErrorKind::InvalidConfig, ctx + ": unknown key '" + k + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Skeleton model

inline json model_to_json(const SkeletonModel& m) {
  using detail::to_json;
  json j;
  j["name"] = m.name;
  j["shape_dim"] = m.shape_dim;
  j["expr_dim"] = m.expr_dim;
  j["body_joint_count"] = m.body_joint_count;
  json joints = json::array();
  for (const Joint& jt : m.joints) {
    json e;
    e["name"] = jt.name;
    e["parent"] = jt.parent < 0 ? json(nullptr) : json(jt.parent);
    e["rest_offset"] = to_json(jt.rest_offset);
    json basis = json::array();
    for (const auto& b : jt.shape_basis) basis.push_back(to_json(b));
    e["shape_basis"] = basis;
    joints.push_back(e);
  }
  j["joints"] = joints;
  j["hand_joint_indices"] = {m.hand_joint_indices[0], m.hand_joint_indices[1]};
  j["jaw_joint_index"] = m.jaw_joint_index < 0 ? json(nullptr) : json(m.jaw_joint_index);
  json hands = json::array();
  for (const HandStructure& h : m.hands) {
    json e;
    e["wrist"] = h.wrist;
    json fingers = json::array();
    for (const auto& f : h.fingers) fingers.push_back(std::vector<int>(f.begin(), f.end()));
    e["fingers"] = fingers;
    e["tips"] = std::vector<int>(h.tips.begin(), h.tips.end());
    e["palm_normal"] = to_json(h.palm_normal);
    hands.push_back(e);
  }
  j["hands"] = hands;
  json bend = json::array();
  for (const BendJoint& b : m.subsets.bend) bend.push_back({{"joint", b.joint}, {"hyperextension_axis", to_json(b.hyperextension_axis)}});
  j["subsets"] = {{"smooth_body", m.subsets.smooth_body},
                  {"smooth_hand", m.subsets.smooth_hand},
                  {"angle_limit_body", m.subsets.angle_limit_body},
                  {"angle_limit_hand", m.subsets.angle_limit_hand},
                  {"bend", bend}};
  json prior;
  prior["mean"] = m.pose_prior.mean;
  if (m.pose_prior.precision.empty())
    prior["precision_diagonal"] = m.pose_prior.precision_diagonal;
  else
    prior["precision"] = m.pose_prior.precision;
  j["pose_prior"] = prior;
  std::vector<int> limited;
  for (const auto& [k, v] : m.pose_limits) limited.push_back(k);
  std::sort(limited.begin(), limited.end());
  json limits = json::array();
  for (int k : limited) limits.push_back({{"joint", k}, {"min", m.pose_limits.at(k).min}, {"max", m.pose_limits.at(k).max}});
  j["pose_limits"] = limits;
  return j;
}

inline SkeletonModel model_from_json(const json& j) {
  using namespace detail;
  return guarded("model", [&] {
    SkeletonModel m;
    m.name = j.value("name", std::string("model"));
    m.shape_dim = integer(field(j, "shape_dim", "model"), "shape_dim");
    m.expr_dim = j.contains("expr_dim") ? integer(j["expr_dim"], "expr_dim") : 10;
    m.body_joint_count = integer(field(j, "body_joint_count", "model"), "body_joint_count");
    const json& joints = field(j, "joints", "model");
    if (!joints.is_array()) fail(ErrorKind::ParseError, "model: 'joints' must be an array");
    for (std::size_t i = 0; i < joints.size(); ++i) {
      const std::string ctx = "joints[" + std::to_string(i) + "]";
      const json& e = joints[i];
      Joint jt;
      jt.name = field(e, "name", ctx).get<std::string>();
      const json& p = field(e, "parent", ctx);
      jt.parent = p.is_null() ? -1 : integer(p, ctx + ".parent");
      jt.rest_offset = vec3(field(e, "rest_offset", ctx), ctx + ".rest_offset");
      const json& basis = field(e, "shape_basis", ctx);
      if (!basis.is_array()) fail(ErrorKind::ParseError, ctx + ".shape_basis must be an array");
      for (const auto& b : basis) jt.shape_basis.push_back(vec3(b, ctx + ".shape_basis"));
      m.joints.push_back(std::move(jt));
    }
    const json& hji = field(j, "hand_joint_indices", "model");
    if (!hji.is_array() || hji.size() != 2) fail(ErrorKind::ParseError, "hand_joint_indices must list two hands");
    for (int s = 0; s < 2; ++s) m.hand_joint_indices[s] = integers(hji[s], "hand_joint_indices");
    const json& jaw = field(j, "jaw_joint_index", "model");
    m.jaw_joint_index = jaw.is_null() ? -1 : integer(jaw, "jaw_joint_index");
    const json& hands = field(j, "hands", "model");
    if (!hands.is_array() || hands.size() != 2) fail(ErrorKind::ParseError, "hands must list two hands");
    for (int s = 0; s < 2; ++s) {
      const json& h = hands[s];
      HandStructure& hs = m.hands[s];
      hs.wrist = integer(field(h, "wrist", "hands"), "hands.wrist");
      const json& f = field(h, "fingers", "hands");
      if (!f.is_array() || f.size() != kFingers) fail(ErrorKind::ParseError, "hands.fingers must list 5 fingers");
      for (int k = 0; k < kFingers; ++k) {
        const auto idx = integers(f[k], "hands.fingers");
        if (idx.size() != kJointsPerFinger) fail(ErrorKind::ParseError, "each finger must list 3 joints");
        std::copy(idx.begin(), idx.end(), hs.fingers[k].begin());
      }
      const auto tips = integers(field(h, "tips", "hands"), "hands.tips");
      if (tips.size() != kFingers) fail(ErrorKind::ParseError, "hands.tips must list 5 joints");
      std::copy(tips.begin(), tips.end(), hs.tips.begin());
      hs.palm_normal = vec3(field(h, "palm_normal", "hands"), "hands.palm_normal");
    }
    const json& sub = field(j, "subsets", "model");
    m.subsets.smooth_body = integers(field(sub, "smooth_body", "subsets"), "smooth_body");
    m.subsets.smooth_hand = integers(field(sub, "smooth_hand", "subsets"), "smooth_hand");
    m.subsets.angle_limit_body = integers(field(sub, "angle_limit_body", "subsets"), "angle_limit_body");
    m.subsets.angle_limit_hand = integers(field(sub, "angle_limit_hand", "subsets"), "angle_limit_hand");
    for (const auto& b : field(sub, "bend", "subsets"))
      m.subsets.bend.push_back({integer(field(b, "joint", "bend"), "bend.joint"),
                                vec3(field(b, "hyperextension_axis", "bend"), "bend.hyperextension_axis")});
    if (j.contains("pose_prior")) {
      const json& p = j["pose_prior"];
      if (p.contains("mean")) m.pose_prior.mean = numbers(p["mean"], "pose_prior.mean");
      if (p.contains("precision_diagonal"))
        m.pose_prior.precision_diagonal = numbers(p["precision_diagonal"], "pose_prior.precision_diagonal");
      if (p.contains("precision"))
        for (const auto& r : p["precision"]) m.pose_prior.precision.push_back(numbers(r, "pose_prior.precision"));
    }
    if (j.contains("pose_limits"))
      for (const auto& e : j["pose_limits"])
        m.pose_limits[integer(field(e, "joint", "pose_limits"), "pose_limits.joint")] = {
            number(field(e, "min", "pose_limits"), "pose_limits.min"),
            number(field(e, "max", "pose_limits"), "pose_limits.max")};
    m.finalize();
    return m;
  });
}

inline SkeletonModel load_model(const std::string& path) { return model_from_json(read_json(path)); }

// ---------------------------------------------------------------------------
// Limits (keyed by joint name)

inline json limits_to_json(const BiomechanicalLimits& l, const SkeletonModel& m) {
  auto intervals = [&](const std::unordered_map<int, Interval>& map) {
    std::vector<int> keys;
    for (const auto& [k, v] : map) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    json o = json::object();
    for (int k : keys) o[m.joints[k].name] = {map.at(k).min, map.at(k).max};
    return o;
  };
  std::vector<int> keys;
  for (const auto& [k, v] : l.angle_hulls) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  json hulls = json::object();
  for (int k : keys) {
    json poly = json::array();
    for (const auto& p : l.angle_hulls.at(k)) poly.push_back({p.x, p.y});
    hulls[m.joints[k].name] = poly;
  }
  json j;
  j["bone_intervals"] = intervals(l.bone_intervals);
  j["curvature_intervals"] = intervals(l.curvature_intervals);
  j["angular_distance_intervals"] = intervals(l.angular_distance_intervals);
  j["angle_hulls"] = hulls;
  j["pose_angle_intervals"] = intervals(l.pose_angle_intervals);
  return j;
}

inline BiomechanicalLimits limits_from_json(const json& j, const SkeletonModel& m) {
  using namespace detail;
  return guarded("limits", [&] {
    BiomechanicalLimits l;
    auto intervals = [&](const char* key, std::unordered_map<int, Interval>& out) {
      if (!j.contains(key)) return;
      for (const auto& [name, v] : j[key].items()) {
        const auto iv = numbers(v, std::string(key) + "." + name, 2);
        if (iv[0] > iv[1]) fail(ErrorKind::InvalidInterval, std::string(key) + "." + name + " has min > max");
        out[m.index_of(name)] = {iv[0], iv[1]};
      }
    };
    intervals("bone_intervals", l.bone_intervals);
    intervals("curvature_intervals", l.curvature_intervals);
    intervals("angular_distance_intervals", l.angular_distance_intervals);
    intervals("pose_angle_intervals", l.pose_angle_intervals);
    if (j.contains("angle_hulls"))
      for (const auto& [name, poly] : j["angle_hulls"].items()) {
        Polygon p;
        for (const auto& v : poly) {
          const auto xy = numbers(v, "angle_hulls." + name, 2);
          p.push_back({xy[0], xy[1]});
        }
        if (!is_ccw_convex(p))
          fail(ErrorKind::DegenerateHull, "angle_hulls." + name + " is not a counterclockwise convex polygon");
        l.angle_hulls[m.index_of(name)] = std::move(p);
      }
    check_limits(m, l);
    return l;
  });
}

// ---------------------------------------------------------------------------
// Camera and layout

inline json camera_to_json(const CameraIntrinsics& c) {
  return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width}, {"height", c.height}};
}

inline CameraIntrinsics camera_from_json(const json& j) {
  using namespace detail;
  CameraIntrinsics c;
  c.fx = number(field(j, "fx", "camera"), "camera.fx");
  c.fy = number(field(j, "fy", "camera"), "camera.fy");
  c.cx = number(field(j, "cx", "camera"), "camera.cx");
  c.cy = number(field(j, "cy", "camera"), "camera.cy");
  if (j.contains("width")) c.width = integer(j["width"], "camera.width");
  if (j.contains("height")) c.height = integer(j["height"], "camera.height");
  c.validate();
  return c;
}

inline json layout_to_json(const KeypointLayout& l) {
  json j;
  for (int g = 0; g < kGroupCount; ++g) {
    json a = json::array();
    for (const auto& s : l.slots[g]) a.push_back(s ? json(*s) : json(nullptr));
    j[kGroupNames[g]] = a;
  }
  return j;
}

inline KeypointLayout layout_from_json(const json& j) {
  KeypointLayout l;
  for (int g = 0; g < kGroupCount; ++g) {
    if (!j.contains(kGroupNames[g])) continue;
    const json& a = j[kGroupNames[g]];
    if (!a.is_array()) fail(ErrorKind::ParseError, std::string("layout.") + kGroupNames[g] + " must be an array");
    for (const auto& s : a) {
      if (s.is_null())
        l.slots[g].push_back(std::nullopt);
      else if (s.is_string())
        l.slots[g].push_back(s.get<std::string>());
      else
        fail(ErrorKind::ParseError, std::string("layout.") + kGroupNames[g] + " entries must be joint names or null");
    }
  }
  return l;
}

// ---------------------------------------------------------------------------
// Motion

inline json motion_to_json(const MotionSequence& s) {
  json j;
  j["fps"] = s.fps;
  j["shape"] = s.shape;
  if (s.hands_only) j["hands_only"] = true;
  json frames = json::array();
  for (const MotionState& f : s.frames) {
    json e;
    if (!s.hands_only) e["theta_b"] = detail::rows(f.theta_b, kRot6d);
    e["theta_h"] = detail::rows(f.theta_h, kRot6d);
    if (!s.hands_only) {
      e["theta_f"] = f.theta_f;
      e["expr"] = f.expr;
      e["transl"] = f.transl;
    }
    frames.push_back(e);
  }
  j["frames"] = frames;
  return j;
}

/// Hand-only files carry theta_h and the shape; the remaining fields are
/// filled with the rest pose.
inline MotionSequence motion_from_json(const json& j, const SkeletonModel& m) {
  using namespace detail;
  return guarded("motion", [&] {
    MotionSequence s;
    s.fps = number(field(j, "fps", "motion"), "motion.fps");
    if (!(s.fps > 0.0)) fail(ErrorKind::ParseError, "motion.fps must be positive");
    s.shape = numbers(field(j, "shape", "motion"), "motion.shape");
    if (static_cast<int>(s.shape.size()) != m.shape_dim)
      fail(ErrorKind::ModelMismatch, "motion.shape has " + std::to_string(s.shape.size()) + " entries, model expects " +
                                         std::to_string(m.shape_dim));
    s.hands_only = j.value("hands_only", false);
    const json& frames = field(j, "frames", "motion");
    if (!frames.is_array() || frames.empty()) fail(ErrorKind::ParseError, "motion.frames must be a non-empty array");
    for (std::size_t t = 0; t < frames.size(); ++t) {
      const std::string ctx = "frames[" + std::to_string(t) + "]";
      const json& e = frames[t];
      MotionState st = MotionState::rest(m);
      st.theta_h = flat_rows(field(e, "theta_h", ctx), m.hand_row_count(), kRot6d, ctx + ".theta_h");
      if (!s.hands_only) {
        st.theta_b = flat_rows(field(e, "theta_b", ctx), m.body_joint_count, kRot6d, ctx + ".theta_b");
        st.theta_f = numbers(field(e, "theta_f", ctx), ctx + ".theta_f", kRot6d);
        if (e.contains("expr")) st.expr = numbers(e["expr"], ctx + ".expr");
        if (e.contains("transl")) {
          const auto v = numbers(e["transl"], ctx + ".transl", 3);
          st.transl = {v[0], v[1], v[2]};
        }
      }
      check_state(m, st);
      s.frames.push_back(std::move(st));
    }
    return s;
  });
}

inline MotionSequence load_motion(const std::string& path, const SkeletonModel& m) {
  return motion_from_json(read_json(path), m);
}

// ---------------------------------------------------------------------------
// Fit config

inline json weights_to_json(const ObjectiveWeights& w) {
  return {{"lambda_J", w.lambda_J},         {"lambda_theta", w.lambda_theta}, {"lambda_alpha", w.lambda_alpha},
          {"lambda_beta", w.lambda_beta},   {"lambda_smooth", w.lambda_smooth}, {"lambda_angle", w.lambda_angle},
          {"lambda_bl", w.lambda_bl},       {"lambda_palm", w.lambda_palm},   {"lambda_ja", w.lambda_ja},
          {"w_body", w.w_body},             {"w_hand", w.w_hand}};
}

inline ObjectiveWeights weights_from_json(const json& j, ObjectiveWeights w = {}) {
  using detail::number;
  detail::reject_unknown(j,
                         {"lambda_J", "lambda_theta", "lambda_alpha", "lambda_beta", "lambda_smooth", "lambda_angle",
                          "lambda_bl", "lambda_palm", "lambda_ja", "w_body", "w_hand"},
                         "weights");
  auto get = [&](const char* k, double& dst) {
    if (j.contains(k)) dst = number(j[k], std::string("weights.") + k);
  };
  get("lambda_J", w.lambda_J);
  get("lambda_theta", w.lambda_theta);
  get("lambda_alpha", w.lambda_alpha);
  get("lambda_beta", w.lambda_beta);
  get("lambda_smooth", w.lambda_smooth);
  get("lambda_angle", w.lambda_angle);
  get("lambda_bl", w.lambda_bl);
  get("lambda_palm", w.lambda_palm);
  get("lambda_ja", w.lambda_ja);
  get("w_body", w.w_body);
  get("w_hand", w.w_hand);
  w.validate();
  return w;
}

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "lbfgs") return OptimizerKind::Lbfgs;
  fail(ErrorKind::InvalidConfig, "unknown optimizer '" + s + "' (expected adam or lbfgs)");
}

inline json fit_config_to_json(const FitConfig& c) {
  json stages = json::array();
  for (const StageSpec& s : c.stages) {
    json e = {{"steps", s.steps}, {"optimize_shape", s.optimize_shape}, {"w_body", s.w_body}, {"w_hand", s.w_hand}};
    if (s.optimizer) e["optimizer"] = to_string(*s.optimizer);
    stages.push_back(e);
  }
  return {{"total_steps", c.total_steps},
          {"optimizer", to_string(c.optimizer)},
          {"adam", {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
          {"lbfgs",
           {{"history", c.lbfgs.history},
            {"wolfe_c1", c.lbfgs.wolfe_c1},
            {"wolfe_c2", c.lbfgs.wolfe_c2},
            {"max_line_iters", c.lbfgs.max_line_iters}}},
          {"convergence_tol", c.convergence_tol},
          {"seed", c.seed},
          {"threshold", c.threshold},
          {"weights", weights_to_json(c.weights)},
          {"objective", {{"robust_sigma", c.objective.robust_sigma}, {"bend_gain", c.objective.bend_gain}}},
          {"stages", stages}};
}

/// Missing keys keep their defaults; unknown keys are rejected. When
/// `stages` is absent and `total_steps` is given, the default stages are
/// rescaled to the new total.
inline FitConfig fit_config_from_json(const json& j, FitConfig c = {}) {
  using namespace detail;
  return guarded("config", [&] {
    reject_unknown(j,
                   {"total_steps", "optimizer", "learning_rate", "adam", "lbfgs", "convergence_tol", "seed",
                    "threshold", "weights", "objective", "stages"},
                   "config");
    if (j.contains("optimizer")) c.optimizer = optimizer_from_string(j["optimizer"].get<std::string>());
    if (j.contains("learning_rate")) c.adam.lr = number(j["learning_rate"], "learning_rate");
    if (j.contains("adam")) {
      const json& a = j["adam"];
      reject_unknown(a, {"lr", "beta1", "beta2", "eps"}, "adam");
      if (a.contains("lr")) c.adam.lr = number(a["lr"], "adam.lr");
      if (a.contains("beta1")) c.adam.beta1 = number(a["beta1"], "adam.beta1");
      if (a.contains("beta2")) c.adam.beta2 = number(a["beta2"], "adam.beta2");
      if (a.contains("eps")) c.adam.eps = number(a["eps"], "adam.eps");
    }
    if (j.contains("lbfgs")) {
      const json& l = j["lbfgs"];
      reject_unknown(l, {"history", "wolfe_c1", "wolfe_c2", "max_line_iters"}, "lbfgs");
      if (l.contains("history")) c.lbfgs.history = integer(l["history"], "lbfgs.history");
      if (l.contains("wolfe_c1")) c.lbfgs.wolfe_c1 = number(l["wolfe_c1"], "lbfgs.wolfe_c1");
      if (l.contains("wolfe_c2")) c.lbfgs.wolfe_c2 = number(l["wolfe_c2"], "lbfgs.wolfe_c2");
      if (l.contains("max_line_iters")) c.lbfgs.max_line_iters = integer(l["max_line_iters"], "lbfgs.max_line_iters");
    }
    if (j.contains("convergence_tol")) c.convergence_tol = number(j["convergence_tol"], "convergence_tol");
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("threshold")) c.threshold = number(j["threshold"], "threshold");
    if (j.contains("weights")) c.weights = weights_from_json(j["weights"], c.weights);
    if (j.contains("objective")) {
      const json& o = j["objective"];
      reject_unknown(o, {"robust_sigma", "bend_gain"}, "objective");
      if (o.contains("robust_sigma")) {
        c.objective.robust_sigma =
            o["robust_sigma"].is_null() ? INFINITY : number(o["robust_sigma"], "objective.robust_sigma");
      }
      if (o.contains("bend_gain")) c.objective.bend_gain = number(o["bend_gain"], "objective.bend_gain");
    }
    if (j.contains("stages")) {
      c.stages.clear();
      for (const auto& e : j["stages"]) {
        reject_unknown(e, {"steps", "optimize_shape", "w_body", "w_hand", "optimizer"}, "stages[]");
        StageSpec s;
        s.steps = integer(field(e, "steps", "stages[]"), "stages[].steps");
        s.optimize_shape = e.value("optimize_shape", false);
        if (e.contains("w_body")) s.w_body = number(e["w_body"], "stages[].w_body");
        if (e.contains("w_hand")) s.w_hand = number(e["w_hand"], "stages[].w_hand");
        if (e.contains("optimizer")) s.optimizer = optimizer_from_string(e["optimizer"].get<std::string>());
        c.stages.push_back(s);
      }
      int sum = 0;
      for (const auto& s : c.stages) sum += s.steps;
      c.total_steps = j.contains("total_steps") ? integer(j["total_steps"], "total_steps") : sum;
    } else if (j.contains("total_steps")) {
      c.set_total_steps(integer(j["total_steps"], "total_steps"));
    }
    c.validate();
    return c;
  });
}

// ---------------------------------------------------------------------------
// Fit report

inline json report_to_json(const FitReport& r) {
  json stages = json::array();
  for (const StageTrace& s : r.stages) {
    json trace;
    trace["total"] = s.total;
    for (int k = 0; k < kTermCount; ++k) trace[kTermNames[k]] = s.terms[k];
    trace["grad_norm"] = s.grad_norm;
    stages.push_back({{"stage", s.index},
                      {"optimizer", to_string(s.optimizer)},
                      {"optimize_shape", s.optimize_shape},
                      {"w_body", s.w_body},
                      {"w_hand", s.w_hand},
                      {"steps_planned", s.steps_planned},
                      {"steps_run", s.steps_run},
                      {"early_stopped", s.early_stopped},
                      {"trace", trace}});
  }
  json final_terms;
  for (int k = 0; k < kTermCount; ++k) final_terms[kTermNames[k]] = r.final_terms[k];
  return {{"seed", r.seed},
          {"iterations", r.iterations},
          {"shape_frozen", r.shape_frozen},
          {"frozen_shape", r.frozen_shape},
          {"final_total", r.final_total},
          {"final_terms", final_terms},
          {"stages", stages}};
}

// ---------------------------------------------------------------------------
// Validation report

inline json validation_to_json(const ValidationReport& r, const SkeletonModel& m, double max_violations) {
  json checks = json::array();
  for (const CheckResult& c : r.checks) {
    json e = {{"frame", c.frame}, {"check", to_string(c.kind)}, {"joint", m.joints[c.joint].name}, {"value", c.value}};
    if (c.kind == CheckKind::JointAngle) {
      e["flexion"] = c.value;
      e["abduction"] = c.value2;
      e.erase("value");
    }
    e["pass"] = c.pass;
    checks.push_back(e);
  }
  return {{"checks_total", r.checks.size()},
          {"violations", r.violations},
          {"violation_rate", r.violation_rate()},
          {"max_violations", max_violations},
          {"pass", r.violation_rate() <= max_violations},
          {"checks", checks}};
}

// ---------------------------------------------------------------------------
// Codebooks, features, joint sequences

inline json codebook_to_json(const Codebook& b) {
  return {{"d_z", b.dim()}, {"kind", b.kind == CodebookKind::Motion ? "motion" : "linguistic"}, {"codes", b.codes}};
}

inline Codebook codebook_from_json(const json& j) {
  using namespace detail;
  return guarded("codebook", [&] {
    Codebook b;
    const int d = integer(field(j, "d_z", "codebook"), "d_z");
    const std::string kind = j.value("kind", std::string("motion"));
    if (kind != "motion" && kind != "linguistic") fail(ErrorKind::ParseError, "codebook.kind must be motion or linguistic");
    b.kind = kind == "motion" ? CodebookKind::Motion : CodebookKind::Linguistic;
    for (const auto& c : field(j, "codes", "codebook")) b.codes.push_back(numbers(c, "codebook.codes", d));
    b.validate();
    return b;
  });
}

inline FeatureSet features_from_json(const json& j) {
  using namespace detail;
  return guarded("features", [&] {
    FeatureSet s;
    s.d = integer(field(j, "d", "features"), "d");
    for (const auto& e : field(j, "items", "features")) {
      FeatureItem it;
      const json& id = field(e, "id", "items[]");
      it.id = id.is_string() ? id.get<std::string>() : id.dump();
      it.motion = numbers(field(e, "motion", "items[]"), "items[].motion", s.d);
      if (e.contains("prompt") && !e["prompt"].is_null()) it.prompt = numbers(e["prompt"], "items[].prompt", s.d);
      if (e.contains("positive_id") && !e["positive_id"].is_null())
        it.positive_id = e["positive_id"].is_string() ? e["positive_id"].get<std::string>() : e["positive_id"].dump();
      if (e.contains("group") && !e["group"].is_null())
        it.group = e["group"].is_string() ? e["group"].get<std::string>() : e["group"].dump();
      s.items.push_back(std::move(it));
    }
    s.validate();
    return s;
  });
}

inline json features_to_json(const FeatureSet& s) {
  json items = json::array();
  for (const auto& it : s.items) {
    json e = {{"id", it.id}, {"motion", it.motion}};
    if (it.prompt) e["prompt"] = *it.prompt;
    if (it.positive_id) e["positive_id"] = *it.positive_id;
    if (it.group) e["group"] = *it.group;
    items.push_back(e);
  }
  return {{"d", s.d}, {"items", items}};
}

inline JointSequence joints_from_json(const json& j) {
  using namespace detail;
  return guarded("joint sequence", [&] {
    JointSequence s;
    s.fps = j.contains("fps") ? number(j["fps"], "fps") : 30.0;
    if (j.contains("joints"))
      for (const auto& n : j["joints"]) s.joints.push_back(n.get<std::string>());
    for (const auto& f : field(j, "frames", "joint sequence")) {
      std::vector<Vec3<double>> frame;
      for (const auto& p : f) frame.push_back(vec3(p, "frames[]"));
      if (!s.frames.empty() && frame.size() != s.frames[0].size())
        fail(ErrorKind::ShapeError, "joint count differs between frames");
      s.frames.push_back(std::move(frame));
    }
    if (!s.joints.empty() && !s.frames.empty() && s.joints.size() != s.frames[0].size())
      fail(ErrorKind::ShapeError, "joint names and frame width differ");
    return s;
  });
}

inline json joints_to_json(const JointSequence& s) {
  json frames = json::array();
  for (const auto& f : s.frames) {
    json fr = json::array();
    for (const auto& p : f) fr.push_back(detail::to_json(p));
    frames.push_back(fr);
  }
  return {{"fps", s.fps}, {"joints", s.joints}, {"frames", frames}};
}

}  // namespace holofit::io
