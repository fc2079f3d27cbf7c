#pragma once

// Evaluation metrics over feature vectors and joint sequences: FID,
// diversity, multimodality, MM-Dist, R-/MR-precision, DTW-MJE.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "holofit/error.hpp"
#include "holofit/linalg.hpp"
#include "holofit/quantize.hpp"
#include "holofit/random.hpp"

namespace holofit {

struct FeatureItem {
  std::string id;
  Vector motion;
  std::optional<Vector> prompt;
  std::optional<std::string> positive_id;
  std::optional<std::string> group;  // items generated from the same prompt
};

struct FeatureSet {
  int d = 512;
  std::vector<FeatureItem> items;

  int size() const { return static_cast<int>(items.size()); }

  void validate() const {
    std::set<std::string> ids;
    for (const auto& it : items) {
      if (static_cast<int>(it.motion.size()) != d)
        fail(ErrorKind::ShapeError, "item '" + it.id + "' has motion dimension " + std::to_string(it.motion.size()) +
                                        ", expected " + std::to_string(d));
      if (it.prompt && static_cast<int>(it.prompt->size()) != d)
        fail(ErrorKind::ShapeError, "item '" + it.id + "' has prompt dimension " + std::to_string(it.prompt->size()));
      if (!ids.insert(it.id).second) fail(ErrorKind::ShapeError, "duplicate item id '" + it.id + "'");
    }
  }
};

struct JointSequence {
  double fps = 30.0;
  std::vector<std::string> joints;
  std::vector<std::vector<Vec3<double>>> frames;

  int size() const { return static_cast<int>(frames.size()); }
  int joint_count() const { return frames.empty() ? static_cast<int>(joints.size()) : static_cast<int>(frames[0].size()); }
};

inline double euclidean(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

// ---------------------------------------------------------------------------
// FID

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

inline GaussianMoments moments(const FeatureSet& s) {
  s.validate();
  if (s.size() < 2) fail(ErrorKind::TooFewSamples, "need at least 2 items, got " + std::to_string(s.size()));
  const int n = s.size();
  Eigen::MatrixXd X(n, s.d);
  for (int i = 0; i < n; ++i) X.row(i) = Eigen::Map<const Eigen::VectorXd>(s.items[i].motion.data(), s.d);
  GaussianMoments m;
  m.mean = X.colwise().mean();
  const Eigen::MatrixXd c = X.rowwise() - m.mean.transpose();
  m.cov = (c.transpose() * c) / double(n - 1);
  return m;
}

// Symmetric square root with negative eigenvalues clamped to zero.
inline Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Frechet distance between two Gaussians:
/// |mu_r - mu_g|^2 + Tr(C_r + C_g - 2 (C_r^1/2 C_g C_r^1/2)^1/2).
inline double fid_from_moments(const GaussianMoments& r, const GaussianMoments& g) {
  if (r.mean.size() != g.mean.size()) fail(ErrorKind::ShapeError, "feature dimensions differ");
  const Eigen::MatrixXd sr = sqrtm_psd(r.cov);
  const Eigen::MatrixXd m = sr * g.cov * sr;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double v = (r.mean - g.mean).squaredNorm() + r.cov.trace() + g.cov.trace() - 2.0 * cross;
  return std::max(0.0, v);
}

inline double fid(const FeatureSet& real, const FeatureSet& gen) {
  if (real.d != gen.d) fail(ErrorKind::ShapeError, "feature dimensions differ");
  return fid_from_moments(moments(real), moments(gen));
}

// ---------------------------------------------------------------------------
// Diversity, multimodality, MM-Dist

inline constexpr int kDiversityPairs = 300;
inline constexpr int kMultimodalityPairs = 10;

// Mean distance over `pairs` seeded ordered pairs of distinct items.
inline double mean_pair_distance(const std::vector<const Vector*>& items, int pairs, Rng& rng) {
  const std::size_t n = items.size();
  if (n < 2) fail(ErrorKind::TooFewSamples, "need at least 2 items, got " + std::to_string(n));
  if (pairs < 1) fail(ErrorKind::InvalidConfig, "pair count must be positive");
  double sum = 0.0;
  for (int p = 0; p < pairs; ++p) {
    const std::size_t i = rng.below(n);
    std::size_t j = rng.below(n - 1);
    if (j >= i) ++j;
    sum += euclidean(*items[i], *items[j]);
  }
  return sum / pairs;
}

inline double diversity(const FeatureSet& set, int pairs = kDiversityPairs, std::uint64_t seed = 0) {
  set.validate();
  std::vector<const Vector*> v;
  for (const auto& it : set.items) v.push_back(&it.motion);
  Rng rng(seed);
  return mean_pair_distance(v, pairs, rng);
}

inline double multimodality(const std::vector<Matrix>& groups, int pairs = kMultimodalityPairs,
                            std::uint64_t seed = 0) {
  if (groups.empty()) fail(ErrorKind::TooFewSamples, "no groups");
  Rng rng(seed);
  double sum = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<const Vector*> v;
    for (const auto& f : groups[g]) {
      if (f.size() != groups[0][0].size()) fail(ErrorKind::ShapeError, "group features differ in dimension");
      v.push_back(&f);
    }
    if (v.size() < 2) fail(ErrorKind::TooFewSamples, "group " + std::to_string(g) + " has fewer than 2 items");
    sum += mean_pair_distance(v, pairs, rng);
  }
  return sum / static_cast<double>(groups.size());
}

/// Motion features grouped for multimodality, in order of first
/// appearance: by the `group` label when every item has one, otherwise by
/// identical prompt vectors.
inline std::vector<Matrix> feature_groups(const FeatureSet& set) {
  set.validate();
  const bool labelled = !set.items.empty() && std::all_of(set.items.begin(), set.items.end(),
                                                            [](const FeatureItem& it) { return it.group.has_value(); });
  std::vector<Matrix> groups;
  std::vector<const FeatureItem*> heads;
  for (const auto& it : set.items) {
    if (!labelled && !it.prompt)
      fail(ErrorKind::MissingPrompt, "item '" + it.id + "' has neither a group label nor a prompt feature");
    std::size_t g = 0;
    for (; g < heads.size(); ++g)
      if (labelled ? *heads[g]->group == *it.group : *heads[g]->prompt == *it.prompt) break;
    if (g == heads.size()) {
      heads.push_back(&it);
      groups.emplace_back();
    }
    groups[g].push_back(it.motion);
  }
  return groups;
}

inline double mm_dist(const FeatureSet& set) {
  set.validate();
  if (set.items.empty()) fail(ErrorKind::TooFewSamples, "no items");
  double sum = 0.0;
  for (const auto& it : set.items) {
    if (!it.prompt) fail(ErrorKind::MissingPrompt, "item '" + it.id + "' has no prompt feature");
    sum += euclidean(it.motion, *it.prompt);
  }
  return sum / set.size();
}

// ---------------------------------------------------------------------------
// Retrieval precision

inline constexpr int kRPrecisionPool = 32;
inline constexpr int kMrPrecisionPool = 16;
inline const std::vector<int> kDefaultTopK = {1, 3, 5};

using PrecisionReport = std::map<int, double>;

namespace detail {

struct Candidate {
  double distance;
  const std::string* id;
  bool positive;
};

// 1-based rank of the positive candidate; ties broken by id order.
inline int rank_of_positive(std::vector<Candidate>& c) {
  std::sort(c.begin(), c.end(), [](const Candidate& a, const Candidate& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return *a.id < *b.id;
  });
  for (std::size_t i = 0; i < c.size(); ++i)
    if (c[i].positive) return static_cast<int>(i) + 1;
  return static_cast<int>(c.size()) + 1;
}

inline void check_k(const std::vector<int>& ks, int pool) {
  if (ks.empty()) fail(ErrorKind::InvalidConfig, "no k values");
  for (int k : ks)
    if (k < 1 || k > pool) fail(ErrorKind::InvalidConfig, "k = " + std::to_string(k) + " outside [1, pool]");
}

inline PrecisionReport rates(const std::vector<int>& ranks, const std::vector<int>& ks) {
  PrecisionReport r;
  for (int k : ks) {
    const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](int rank) { return rank <= k; });
    r[k] = ranks.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(ranks.size());
  }
  return r;
}

}  // namespace detail

/// For every item, ranks its own prompt among `pool - 1` seeded distractor
/// prompts by distance to the motion feature.
inline PrecisionReport r_precision(const FeatureSet& set, const std::vector<int>& ks = kDefaultTopK,
                                   int pool = kRPrecisionPool, std::uint64_t seed = 0) {
  set.validate();
  detail::check_k(ks, pool);
  if (set.size() < pool)
    fail(ErrorKind::TooFewSamples, std::to_string(set.size()) + " items for a pool of " + std::to_string(pool));
  for (const auto& it : set.items)
    if (!it.prompt) fail(ErrorKind::MissingPrompt, "item '" + it.id + "' has no prompt feature");
  Rng rng(seed);
  std::vector<int> ranks;
  for (std::size_t i = 0; i < set.items.size(); ++i) {
    const FeatureItem& q = set.items[i];
    std::vector<detail::Candidate> c{{euclidean(q.motion, *q.prompt), &q.id, true}};
    for (std::size_t j : rng.sample_distinct(set.items.size(), pool - 1, i))
      c.push_back({euclidean(q.motion, *set.items[j].prompt), &set.items[j].id, false});
    ranks.push_back(detail::rank_of_positive(c));
  }
  return detail::rates(ranks, ks);
}

/// For every generated item, ranks its designated positive dataset motion
/// among `pool - 1` seeded negatives by motion-feature distance.
inline PrecisionReport mr_precision(const FeatureSet& gen, const FeatureSet& dataset,
                                    const std::vector<int>& ks = kDefaultTopK, int pool = kMrPrecisionPool,
                                    std::uint64_t seed = 0) {
  gen.validate();
  dataset.validate();
  if (gen.d != dataset.d) fail(ErrorKind::ShapeError, "feature dimensions differ");
  detail::check_k(ks, pool);
  if (dataset.size() < pool)
    fail(ErrorKind::TooFewSamples, std::to_string(dataset.size()) + " dataset items for a pool of " +
                                       std::to_string(pool));
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < dataset.items.size(); ++i) by_id[dataset.items[i].id] = i;
  Rng rng(seed);
  std::vector<int> ranks;
  for (const auto& g : gen.items) {
    if (!g.positive_id) fail(ErrorKind::MissingPositive, "item '" + g.id + "' has no positive");
    auto it = by_id.find(*g.positive_id);
    if (it == by_id.end()) fail(ErrorKind::MissingPositive, "positive '" + *g.positive_id + "' not in dataset");
    const FeatureItem& pos = dataset.items[it->second];
    std::vector<detail::Candidate> c{{euclidean(g.motion, pos.motion), &pos.id, true}};
    for (std::size_t j : rng.sample_distinct(dataset.items.size(), pool - 1, it->second))
      c.push_back({euclidean(g.motion, dataset.items[j].motion), &dataset.items[j].id, false});
    ranks.push_back(detail::rank_of_positive(c));
  }
  return detail::rates(ranks, ks);
}

// ---------------------------------------------------------------------------
// DTW-MJE

inline double mean_joint_error(const std::vector<Vec3<double>>& a, const std::vector<Vec3<double>>& b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += norm(a[j] - b[j]);
  return s / static_cast<double>(a.size());
}

struct DtwResult {
  double cost = 0.0;  // accumulated along the optimal path
  int length = 0;     // cells on the optimal path
  double normalized() const { return cost / length; }
};

/// Classic DTW over mean-joint-error cells. Among equal-cost paths the
/// shortest one is taken.
inline DtwResult dtw_align(const JointSequence& ref, const JointSequence& hyp) {
  if (ref.frames.empty() || hyp.frames.empty()) fail(ErrorKind::EmptySequence, "empty joint sequence");
  const std::size_t J = ref.frames[0].size();
  auto check = [J](const JointSequence& s) {
    for (const auto& f : s.frames)
      if (f.size() != J) fail(ErrorKind::ShapeError, "joint counts differ");
  };
  check(ref);
  check(hyp);
  if (J == 0) fail(ErrorKind::ShapeError, "no joints");
  const std::size_t n = ref.frames.size(), m = hyp.frames.size();
  struct Cell {
    double cost;
    int length;
  };
  auto better = [](const Cell& a, const Cell& b) { return a.cost < b.cost || (a.cost == b.cost && a.length < b.length); };
  std::vector<Cell> D(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double c = mean_joint_error(ref.frames[i], hyp.frames[j]);
      if (i == 0 && j == 0) {
        D[0] = {c, 1};
        continue;
      }
      Cell best{INFINITY, 0};
      if (i > 0 && better(D[(i - 1) * m + j], best)) best = D[(i - 1) * m + j];
      if (j > 0 && better(D[i * m + j - 1], best)) best = D[i * m + j - 1];
      if (i > 0 && j > 0 && better(D[(i - 1) * m + j - 1], best)) best = D[(i - 1) * m + j - 1];
      D[i * m + j] = {best.cost + c, best.length + 1};
    }
  return {D.back().cost, D.back().length};
}

inline double dtw_mje(const JointSequence& ref, const JointSequence& hyp) { return dtw_align(ref, hyp).normalized(); }

/// Keeps only the listed joints, in the given order.
inline JointSequence strip_lower_body(const JointSequence& seq, std::span<const int> subset) {
  if (subset.empty()) fail(ErrorKind::EmptySubset, "joint subset is empty");
  const int J = seq.joint_count();
  for (int j : subset)
    if (j < 0 || j >= J) fail(ErrorKind::BadIndex, "joint index " + std::to_string(j) + " out of range");
  JointSequence out;
  out.fps = seq.fps;
  for (int j : subset)
    if (static_cast<std::size_t>(j) < seq.joints.size()) out.joints.push_back(seq.joints[j]);
  for (const auto& f : seq.frames) {
    std::vector<Vec3<double>> g;
    for (int j : subset) g.push_back(f[j]);
    out.frames.push_back(std::move(g));
  }
  return out;
}

}  // namespace holofit
