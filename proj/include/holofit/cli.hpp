#pragma once

// The `holofit` command line: fit, fuse, validate, metrics, synth and
// assets subcommands over the file formats in io.hpp.

#include <CLI11.hpp>

#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "holofit/default_assets.hpp"
#include "holofit/io.hpp"
#include "holofit/keypoints.hpp"
#include "holofit/metrics.hpp"
#include "holofit/optimizer.hpp"
#include "holofit/synth.hpp"
#include "holofit/validate.hpp"

namespace holofit::cli {

enum ExitCode : int { kOk = 0, kThresholdFailure = 1, kInputError = 2, kRuntimeAbort = 3 };

using io::json;

/// Thrown for failures after all inputs were accepted (exit 3).
struct RuntimeAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SharedFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool json_output = false;
  bool verbose = false;
};

/// Flat key=value lines, nested keys joined with '.', arrays as JSON.
inline void print_flat(std::ostream& out, const json& j, const std::string& prefix = "") {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object())
      print_flat(out, *it, key);
    else if (it->is_string())
      out << key << "=" << it->get<std::string>() << "\n";
    else
      out << key << "=" << it->dump() << "\n";
  }
}

inline void emit(std::ostream& out, const SharedFlags& f, const json& j) {
  if (f.json_output)
    out << j.dump(1) << "\n";
  else
    print_flat(out, j);
}

// Model, limits, camera and layout from files, falling back to the built-in
// assets for any path left empty.
struct Assets {
  SkeletonModel model;
  BiomechanicalLimits limits;
  CameraIntrinsics camera;
  KeypointLayout layout;
};

struct AssetPaths {
  std::string model, limits, camera, layout;

  void add_to(CLI::App* app) {
    app->add_option("--model", model, "skeleton model file (default: built-in)")->check(CLI::ExistingFile);
    app->add_option("--limits", limits, "hand limits file (default: built-in)")->check(CLI::ExistingFile);
    app->add_option("--camera", camera, "camera intrinsics file (default: built-in)")->check(CLI::ExistingFile);
    app->add_option("--layout", layout, "keypoint layout file (default: built-in)")->check(CLI::ExistingFile);
  }

  Assets load() const {
    Assets a;
    a.model = model.empty() ? default_skeleton() : io::load_model(model);
    a.limits = limits.empty() ? default_limits(a.model) : io::limits_from_json(io::read_json(limits), a.model);
    a.camera = camera.empty() ? CameraIntrinsics{} : io::camera_from_json(io::read_json(camera));
    a.layout = layout.empty() ? default_layout(a.model) : io::layout_from_json(io::read_json(layout));
    return a;
  }
};

inline KeypointSequence fuse_files(const std::vector<std::string>& paths, double threshold, bool fill,
                                   std::vector<std::string>* warnings) {
  std::vector<KeypointSequence> sources;
  for (const auto& p : paths) sources.push_back(parse_keypoints(p, warnings));
  KeypointSequence fused = fuse_confidence_guided(sources, threshold);
  return fill ? fill_missing(fused) : fused;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  AssetPaths assets;
  std::vector<std::string> keypoints;
  std::string init, out, report;
  std::optional<int> steps;
  std::optional<std::string> optimizer;
  std::optional<double> threshold, lr;
};

/// Keys of a run config file that are not part of the fit config.
inline void apply_run_keys(json& j, FitArgs& a) {
  if (!j.contains("paths")) return;
  const json p = j["paths"];
  j.erase("paths");
  io::detail::reject_unknown(p, {"model", "limits", "camera", "layout", "keypoints", "init", "output", "report"},
                             "paths");
  auto take = [&](const char* k, std::string& dst) {
    if (p.contains(k) && dst.empty()) dst = p[k].get<std::string>();
  };
  take("model", a.assets.model);
  take("limits", a.assets.limits);
  take("camera", a.assets.camera);
  take("layout", a.assets.layout);
  take("init", a.init);
  take("output", a.out);
  take("report", a.report);
  if (p.contains("keypoints") && a.keypoints.empty())
    for (const auto& k : p["keypoints"]) a.keypoints.push_back(k.get<std::string>());
}

inline int cmd_fit(FitArgs a, const SharedFlags& f, std::ostream& out, std::ostream& err) {
  FitConfig config;
  if (!f.config.empty()) {
    json j = io::read_json(f.config);
    apply_run_keys(j, a);
    config = io::fit_config_from_json(j);
  }
  if (a.keypoints.empty()) fail(ErrorKind::InvalidConfig, "no keypoint files given");
  if (a.out.empty()) fail(ErrorKind::InvalidConfig, "no output path given");
  for (const auto& p : a.keypoints)
    if (!std::filesystem::exists(p)) fail(ErrorKind::Io, "keypoint file '" + p + "' does not exist");
  if (a.steps) config.set_total_steps(*a.steps);
  if (a.optimizer) {
    config.optimizer = io::optimizer_from_string(*a.optimizer);
    for (auto& s : config.stages) s.optimizer.reset();
  }
  if (a.threshold) config.threshold = *a.threshold;
  if (a.lr) config.adam.lr = *a.lr;
  if (f.seed) config.seed = *f.seed;
  config.objective.threads = f.threads;
  config.validate();

  const Assets as = a.assets.load();
  std::vector<std::string> warnings;
  const KeypointSequence kp = fuse_files(a.keypoints, config.threshold, true, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  const ResolvedLayout rl = resolve_layout(as.layout, as.model, &kp);
  std::optional<MotionSequence> init;
  if (!a.init.empty()) init = io::load_motion(a.init, as.model);
  const MotionSequence start = initialize(as.model, as.camera, kp, rl, init);

  FitReport rep;
  try {
    rep = fit_sequence(as.model, as.camera, kp, rl, as.limits, config, start);
  } catch (const Error& e) {
    throw RuntimeAbort(std::string("fit aborted: ") + e.what());
  }
  io::write_json(a.out, io::motion_to_json(rep.motion));
  if (!a.report.empty()) io::write_json(a.report, io::report_to_json(rep));
  if (f.verbose) {
    for (const auto& s : rep.stages)
      err << "stage " << s.index << " " << to_string(s.optimizer) << ": " << s.steps_run << " steps, total "
          << (s.total.empty() ? 0.0 : s.total.back()) << "\n";
    err << "wall time " << rep.wall_time_s << " s\n";
  }
  json summary = {{"frames", rep.motion.size()},
                  {"iterations", rep.iterations},
                  {"final_total", rep.final_total},
                  {"mean_2d_error_px", mean_reprojection_error(as.model, as.camera, rep.motion, kp, rl)},
                  {"seed", rep.seed},
                  {"output", a.out}};
  emit(out, f, summary);
  return kOk;
}

// ---------------------------------------------------------------------------
// fuse

struct FuseArgs {
  std::vector<std::string> keypoints;
  std::string out;
  double threshold = 0.3;
  bool no_fill = false;
};

inline int cmd_fuse(const FuseArgs& a, const SharedFlags& f, std::ostream& out, std::ostream& err) {
  if (!(a.threshold >= 0.0 && a.threshold <= 1.0)) fail(ErrorKind::InvalidConfig, "threshold must be in [0,1]");
  std::vector<std::string> warnings;
  const KeypointSequence kp = fuse_files(a.keypoints, a.threshold, !a.no_fill, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  write_keypoints(a.out, kp);
  long missing = 0;
  for (const auto& fr : kp.frames)
    for (const auto& g : fr.groups)
      for (const auto& k : g) missing += k.confidence == 0.0;
  emit(out, f, {{"sources", a.keypoints.size()}, {"frames", kp.size()}, {"missing", missing}, {"output", a.out}});
  return kOk;
}

// ---------------------------------------------------------------------------
// validate

struct ValidateArgs {
  AssetPaths assets;
  std::string motion, report;
  double max_violations = 0.01;
};

inline int cmd_validate(const ValidateArgs& a, const SharedFlags& f, std::ostream& out) {
  const Assets as = a.assets.load();
  const MotionSequence m = io::load_motion(a.motion, as.model);
  const ValidationReport r = validate_motion(as.model, as.limits, m);
  const json full = io::validation_to_json(r, as.model, a.max_violations);
  if (!a.report.empty()) io::write_json(a.report, full);
  json summary = full;
  summary.erase("checks");
  if (f.verbose) {
    json failed = json::array();
    for (const auto& c : full["checks"])
      if (!c["pass"].get<bool>()) failed.push_back(c);
    summary["failed"] = failed;
  }
  emit(out, f, summary);
  return r.violation_rate() <= a.max_violations ? kOk : kThresholdFailure;
}

// ---------------------------------------------------------------------------
// metrics

struct MetricArgs {
  std::string real, gen, features, dataset, ref, hyp, subset;
  int pool = 0;
  std::vector<int> k = kDefaultTopK;
  int nd = kDiversityPairs;
  int nm = kMultimodalityPairs;
};

inline std::vector<int> parse_index_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      fail(ErrorKind::ParseError, "bad index '" + tok + "' in subset list");
    }
  }
  return out;
}

inline json precision_json(const PrecisionReport& r) {
  json j;
  for (const auto& [k, v] : r) j["top" + std::to_string(k)] = v;
  return j;
}

inline int cmd_metric(const std::string& name, const MetricArgs& a, const SharedFlags& f, std::ostream& out) {
  const std::uint64_t seed = f.seed.value_or(0);
  auto features = [](const std::string& p) { return io::features_from_json(io::read_json(p)); };
  json r = {{"metric", name}};
  if (name == "fid") {
    r["fid"] = fid(features(a.real), features(a.gen));
  } else if (name == "diversity") {
    r["diversity"] = diversity(features(a.features), a.nd, seed);
    r["pairs"] = a.nd;
    r["seed"] = seed;
  } else if (name == "multimodality") {
    const auto groups = feature_groups(features(a.features));
    r["multimodality"] = multimodality(groups, a.nm, seed);
    r["groups"] = groups.size();
    r["pairs"] = a.nm;
    r["seed"] = seed;
  } else if (name == "mm-dist") {
    r["mm_dist"] = mm_dist(features(a.features));
  } else if (name == "r-precision") {
    const int pool = a.pool > 0 ? a.pool : kRPrecisionPool;
    r["r_precision"] = precision_json(r_precision(features(a.features), a.k, pool, seed));
    r["pool"] = pool;
    r["seed"] = seed;
  } else if (name == "mr-precision") {
    const int pool = a.pool > 0 ? a.pool : kMrPrecisionPool;
    r["mr_precision"] = precision_json(mr_precision(features(a.gen), features(a.dataset), a.k, pool, seed));
    r["pool"] = pool;
    r["seed"] = seed;
  } else if (name == "dtw-mje") {
    JointSequence ref = io::joints_from_json(io::read_json(a.ref));
    JointSequence hyp = io::joints_from_json(io::read_json(a.hyp));
    if (!a.subset.empty()) {
      const auto idx = parse_index_list(a.subset);
      ref = strip_lower_body(ref, idx);
      hyp = strip_lower_body(hyp, idx);
    }
    const DtwResult d = dtw_align(ref, hyp);
    r["dtw_mje"] = d.normalized();
    r["path_length"] = d.length;
  }
  emit(out, f, r);
  return kOk;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  AssetPaths assets;
  std::string out_dir;
  int frames = 30;
  double noise = 2.0;
  double init_noise = RegressorNoise{}.rot6d_std;
};

inline constexpr std::uint64_t kRegressorStream = 0x9e3779b97f4a7c15ULL;

inline int cmd_synth(const SynthArgs& a, const SharedFlags& f, std::ostream& out) {
  const Assets as = a.assets.load();
  SynthOptions opt;
  opt.frames = a.frames;
  opt.noise_px = a.noise;
  if (!(a.noise >= 0.0) || !(a.init_noise >= 0.0)) fail(ErrorKind::InvalidConfig, "noise levels must be >= 0");
  const std::uint64_t seed = f.seed.value_or(0);
  const SynthClip clip = synthesize(as.model, as.camera, as.layout, as.limits, opt, seed);
  RegressorNoise rn;
  rn.rot6d_std = a.init_noise;
  const MotionSequence init = simulate_regressor(clip.motion, rn, seed ^ kRegressorStream);

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(a.out_dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create '" + a.out_dir + "': " + ec.message());
  const fs::path dir(a.out_dir);
  io::write_json((dir / "gt_motion.json").string(), io::motion_to_json(clip.motion));
  io::write_json((dir / "init_regressor.json").string(), io::motion_to_json(init));
  write_keypoints((dir / "keypoints.jsonl").string(), clip.keypoints);
  write_keypoints((dir / "keypoints_noisy.jsonl").string(), clip.noisy_keypoints);
  io::write_json((dir / "camera.json").string(), io::camera_to_json(as.camera));
  io::write_json((dir / "layout.json").string(), io::layout_to_json(as.layout));
  emit(out, f,
       {{"frames", clip.motion.size()},
        {"noise_px", a.noise},
        {"init_noise", a.init_noise},
        {"seed", seed},
        {"out_dir", a.out_dir}});
  return kOk;
}

// ---------------------------------------------------------------------------
// assets

inline int cmd_assets(const std::string& out_dir, const SharedFlags& f, std::ostream& out) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create '" + out_dir + "': " + ec.message());
  const SkeletonModel m = default_skeleton();
  const fs::path dir(out_dir);
  io::write_json((dir / "model.json").string(), io::model_to_json(m));
  io::write_json((dir / "limits.json").string(), io::limits_to_json(default_limits(m), m));
  io::write_json((dir / "camera.json").string(), io::camera_to_json(CameraIntrinsics{}));
  io::write_json((dir / "layout.json").string(), io::layout_to_json(default_layout(m)));
  io::write_json((dir / "fit_config.json").string(), io::fit_config_to_json(FitConfig{}));
  emit(out, f, {{"out_dir", out_dir}, {"joints", m.joint_count()}});
  return kOk;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"holistic motion fitting, validation and evaluation"};
  app.name("holofit");
  app.require_subcommand(1);
  app.fallthrough();
  SharedFlags flags;
  app.add_option("--config", flags.config, "run config file (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", flags.seed, "seed for every random choice");
  app.add_option("--threads", flags.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--json", flags.json_output, "print the report as JSON");
  app.add_flag("--verbose", flags.verbose, "extra diagnostics on stderr");

  std::function<int()> action;

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "fit a motion sequence to 2D keypoints");
  fit.assets.add_to(fit_cmd);
  fit_cmd->add_option("--keypoints", fit.keypoints, "keypoint files, fused before fitting");
  fit_cmd->add_option("--init", fit.init, "initialization motion file")->check(CLI::ExistingFile);
  fit_cmd->add_option("--out", fit.out, "output motion file");
  fit_cmd->add_option("--report", fit.report, "per-stage loss trace file");
  fit_cmd->add_option("--steps", fit.steps, "total steps, spread over the stages");
  fit_cmd->add_option("--optimizer", fit.optimizer, "adam or lbfgs for every stage");
  fit_cmd->add_option("--threshold", fit.threshold, "keypoint confidence threshold");
  fit_cmd->add_option("--lr", fit.lr, "Adam learning rate");
  fit_cmd->callback([&] { action = [&] { return cmd_fit(fit, flags, out, err); }; });

  FuseArgs fuse;
  auto* fuse_cmd = app.add_subcommand("fuse", "merge keypoint files by confidence");
  fuse_cmd->add_option("--keypoints", fuse.keypoints, "keypoint files")->required()->check(CLI::ExistingFile);
  fuse_cmd->add_option("--out", fuse.out, "output keypoint file")->required();
  fuse_cmd->add_option("--threshold", fuse.threshold, "confidence threshold");
  fuse_cmd->add_flag("--no-fill", fuse.no_fill, "leave missing keypoints unfilled");
  fuse_cmd->callback([&] { action = [&] { return cmd_fuse(fuse, flags, out, err); }; });

  ValidateArgs val;
  auto* val_cmd = app.add_subcommand("validate", "check a motion against the hand limits");
  val.assets.add_to(val_cmd);
  val_cmd->add_option("--motion", val.motion, "motion file")->required()->check(CLI::ExistingFile);
  val_cmd->add_option("--max-violations", val.max_violations, "largest accepted violation rate");
  val_cmd->add_option("--report", val.report, "per-check report file");
  val_cmd->callback([&] { action = [&] { return cmd_validate(val, flags, out); }; });

  MetricArgs met;
  auto* met_cmd = app.add_subcommand("metrics", "evaluation metrics over feature or joint files");
  met_cmd->require_subcommand(1);
  auto file = [](CLI::App* c, const char* name, std::string& dst, const char* help) {
    c->add_option(name, dst, help)->required()->check(CLI::ExistingFile);
  };
  auto metric = [&](const char* name, const char* help) {
    auto* c = met_cmd->add_subcommand(name, help);
    c->callback([&, n = std::string(name)] { action = [&, n] { return cmd_metric(n, met, flags, out); }; });
    return c;
  };
  auto* m_fid = metric("fid", "Frechet distance |mu_r - mu_g|^2 + Tr(C_r + C_g - 2 (C_r^1/2 C_g C_r^1/2)^1/2); the plus sign and squared mean difference keep it a distance");
  file(m_fid, "--real", met.real, "reference features");
  file(m_fid, "--gen", met.gen, "generated features");
  auto* m_div = metric("diversity", "mean distance of random feature pairs");
  file(m_div, "--features", met.features, "features");
  m_div->add_option("--nd", met.nd, "number of pairs")->check(CLI::PositiveNumber);
  auto* m_mm = metric("multimodality", "mean distance of pairs generated from one prompt");
  file(m_mm, "--features", met.features, "features with group labels or shared prompts");
  m_mm->add_option("--nm", met.nm, "pairs per group")->check(CLI::PositiveNumber);
  auto* m_mmd = metric("mm-dist", "mean motion-to-prompt distance");
  file(m_mmd, "--features", met.features, "features with prompts");
  auto* m_rp = metric("r-precision", "prompt retrieval accuracy");
  file(m_rp, "--features", met.features, "features with prompts");
  m_rp->add_option("--pool", met.pool, "candidate pool size")->check(CLI::PositiveNumber);
  m_rp->add_option("--k", met.k, "top-k cutoffs")->delimiter(',');
  auto* m_mr = metric("mr-precision", "motion retrieval accuracy");
  file(m_mr, "--gen", met.gen, "generated features with positive ids");
  file(m_mr, "--dataset", met.dataset, "dataset features");
  m_mr->add_option("--pool", met.pool, "candidate pool size")->check(CLI::PositiveNumber);
  m_mr->add_option("--k", met.k, "top-k cutoffs")->delimiter(',');
  auto* m_dtw = metric("dtw-mje", "time-warped mean joint error");
  file(m_dtw, "--ref", met.ref, "reference joint sequence");
  file(m_dtw, "--hyp", met.hyp, "hypothesis joint sequence");
  m_dtw->add_option("--subset", met.subset, "comma-separated joint indices to keep");

  SynthArgs syn;
  auto* syn_cmd = app.add_subcommand("synth", "write a synthetic clip with known parameters");
  syn.assets.add_to(syn_cmd);
  syn_cmd->add_option("--out-dir", syn.out_dir, "output directory")->required();
  syn_cmd->add_option("--frames", syn.frames, "clip length")->check(CLI::PositiveNumber);
  syn_cmd->add_option("--noise", syn.noise, "pixel noise std of the noisy keypoints");
  syn_cmd->add_option("--init-noise", syn.init_noise, "6D pose noise std of the simulated regressor output");
  syn_cmd->callback([&] { action = [&] { return cmd_synth(syn, flags, out); }; });

  std::string assets_dir;
  auto* as_cmd = app.add_subcommand("assets", "export the built-in model, limits, layout and camera");
  as_cmd->add_option("--out-dir", assets_dir, "output directory")->required();
  as_cmd->callback([&] { action = [&] { return cmd_assets(assets_dir, flags, out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kInputError;
  }

  try {
    return action();
  } catch (const RuntimeAbort& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeAbort;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeAbort;
  }
}

}  // namespace holofit::cli
