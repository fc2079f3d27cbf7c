#pragma once

// 2D keypoint ingestion: the line-delimited detection format, the
// confidence-guided fusion of several detectors and gap filling.

#include <algorithm>
#include <array>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "holofit/body_model.hpp"
#include "holofit/error.hpp"

namespace holofit {

enum class Group { Body = 0, LeftHand = 1, RightHand = 2, Face = 3 };
inline constexpr int kGroupCount = 4;
inline constexpr std::array<const char*, kGroupCount> kGroupNames = {"body", "left_hand", "right_hand", "face"};

inline bool is_hand_group(int g) {
  return g == static_cast<int>(Group::LeftHand) || g == static_cast<int>(Group::RightHand);
}

struct Keypoint {
  double u = 0.0;
  double v = 0.0;
  double confidence = 0.0;
  bool operator==(const Keypoint&) const = default;
};

struct KeypointFrame {
  int frame_index = 0;
  std::array<std::vector<Keypoint>, kGroupCount> groups;
  bool operator==(const KeypointFrame&) const = default;
};

/// Slot -> skeleton joint name, per group. Unmapped slots are nullopt.
struct KeypointLayout {
  std::array<std::vector<std::optional<std::string>>, kGroupCount> slots;
  bool operator==(const KeypointLayout&) const = default;
};

/// Layout resolved against a model: joint index per slot, -1 if unmapped.
struct ResolvedLayout {
  std::array<std::vector<int>, kGroupCount> joints;
};

struct KeypointSequence {
  std::string source_name;
  std::vector<KeypointFrame> frames;
  std::optional<KeypointLayout> layout;

  int size() const { return static_cast<int>(frames.size()); }
  std::size_t group_size(int g) const { return frames.empty() ? 0 : frames.front().groups[g].size(); }
};

inline ResolvedLayout resolve_layout(const KeypointLayout& layout, const SkeletonModel& model,
                                     const KeypointSequence* seq = nullptr) {
  ResolvedLayout r;
  for (int g = 0; g < kGroupCount; ++g) {
    if (seq != nullptr && !seq->frames.empty() && layout.slots[g].size() != seq->group_size(g))
      fail(ErrorKind::LayoutError, std::string("layout for group '") + kGroupNames[g] + "' has " +
                                       std::to_string(layout.slots[g].size()) + " slots, keypoints have " +
                                       std::to_string(seq->group_size(g)));
    for (const auto& name : layout.slots[g]) {
      if (!name) {
        r.joints[g].push_back(-1);
        continue;
      }
      auto idx = model.find(*name);
      if (!idx) fail(ErrorKind::LayoutError, "layout references unknown joint '" + *name + "'");
      r.joints[g].push_back(*idx);
    }
  }
  return r;
}

namespace detail {

inline std::vector<Keypoint> parse_group(const nlohmann::json& arr, int line, const char* group) {
  std::vector<Keypoint> out;
  if (!arr.is_array())
    fail(ErrorKind::ParseError, "line " + std::to_string(line) + ": '" + group + "' is not an array");
  out.reserve(arr.size());
  for (const auto& e : arr) {
    if (!e.is_array() || e.size() != 3 || !e[0].is_number() || !e[1].is_number() || !e[2].is_number())
      fail(ErrorKind::ParseError, "line " + std::to_string(line) + ": '" + group + "' entries must be [u,v,c]");
    Keypoint k{e[0].get<double>(), e[1].get<double>(), e[2].get<double>()};
    if (!std::isfinite(k.u) || !std::isfinite(k.v))
      fail(ErrorKind::ParseError, "line " + std::to_string(line) + ": non-finite coordinate");
    if (!(k.confidence >= 0.0 && k.confidence <= 1.0))
      fail(ErrorKind::ParseError, "line " + std::to_string(line) + ": confidence " +
                                      std::to_string(k.confidence) + " outside [0,1]");
    out.push_back(k);
  }
  return out;
}

}  // namespace detail

/// Parses the line-delimited keypoint format. Frames are returned sorted;
/// an out-of-order file produces a warning, not an error.
inline KeypointSequence parse_keypoints_stream(std::istream& in, const std::string& source_name,
                                               std::vector<std::string>* warnings = nullptr) {
  KeypointSequence seq;
  seq.source_name = source_name;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("frame") || !j["frame"].is_number_integer())
      fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": missing integer 'frame'");
    KeypointFrame f;
    f.frame_index = j["frame"].get<int>();
    for (int g = 0; g < kGroupCount; ++g)
      if (j.contains(kGroupNames[g])) f.groups[g] = detail::parse_group(j[kGroupNames[g]], line_no, kGroupNames[g]);
    if (!seq.frames.empty())
      for (int g = 0; g < kGroupCount; ++g)
        if (f.groups[g].size() != seq.frames.front().groups[g].size())
          fail(ErrorKind::LayoutError, "line " + std::to_string(line_no) + ": group '" + kGroupNames[g] +
                                           "' has " + std::to_string(f.groups[g].size()) + " points, expected " +
                                           std::to_string(seq.frames.front().groups[g].size()));
    seq.frames.push_back(std::move(f));
  }
  const bool sorted = std::is_sorted(seq.frames.begin(), seq.frames.end(),
                                     [](const auto& a, const auto& b) { return a.frame_index < b.frame_index; });
  if (!sorted) {
    std::stable_sort(seq.frames.begin(), seq.frames.end(),
                     [](const auto& a, const auto& b) { return a.frame_index < b.frame_index; });
    if (warnings != nullptr) warnings->push_back(source_name + ": frames out of order, re-sorted");
  }
  for (std::size_t i = 1; i < seq.frames.size(); ++i)
    if (seq.frames[i].frame_index == seq.frames[i - 1].frame_index)
      fail(ErrorKind::ParseError, "duplicate frame index " + std::to_string(seq.frames[i].frame_index));
  return seq;
}

inline KeypointSequence parse_keypoints(const std::string& path, std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open keypoint file '" + path + "'");
  return parse_keypoints_stream(in, path, warnings);
}

inline std::string format_keypoints(const KeypointSequence& seq) {
  std::string out;
  for (const auto& f : seq.frames) {
    nlohmann::ordered_json j;
    j["frame"] = f.frame_index;
    for (int g = 0; g < kGroupCount; ++g) {
      auto arr = nlohmann::ordered_json::array();
      for (const auto& k : f.groups[g]) arr.push_back({k.u, k.v, k.confidence});
      j[kGroupNames[g]] = std::move(arr);
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline void write_keypoints(const std::string& path, const KeypointSequence& seq) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write keypoint file '" + path + "'");
  out << format_keypoints(seq);
}

/// Winner-take-all fusion: every slot takes the sample of the most confident
/// source (first source wins ties); samples below `threshold` are kept in
/// place but their confidence is zeroed.
inline KeypointSequence fuse_confidence_guided(std::span<const KeypointSequence> sources, double threshold) {
  if (sources.empty()) fail(ErrorKind::LayoutError, "no keypoint sources to fuse");
  const KeypointSequence& first = sources.front();
  for (const auto& s : sources) {
    if (s.frames.size() != first.frames.size())
      fail(ErrorKind::LayoutError, "source '" + s.source_name + "' has a different frame count");
    for (std::size_t t = 0; t < s.frames.size(); ++t)
      if (s.frames[t].frame_index != first.frames[t].frame_index)
        fail(ErrorKind::LayoutError, "source '" + s.source_name + "' covers a different frame range");
    for (int g = 0; g < kGroupCount; ++g)
      if (s.group_size(g) != first.group_size(g))
        fail(ErrorKind::LayoutError, "source '" + s.source_name + "' has a different size for group '" +
                                         kGroupNames[g] + "'");
    if (s.layout && first.layout && !(*s.layout == *first.layout))
      fail(ErrorKind::LayoutError, "source '" + s.source_name + "' uses a different layout");
  }

  KeypointSequence out;
  out.source_name = "fused";
  out.layout = first.layout;
  out.frames = first.frames;
  for (std::size_t t = 0; t < out.frames.size(); ++t) {
    for (int g = 0; g < kGroupCount; ++g) {
      auto& dst = out.frames[t].groups[g];
      for (std::size_t k = 0; k < dst.size(); ++k) {
        Keypoint best = sources.front().frames[t].groups[g][k];
        for (const auto& s : sources.subspan(1)) {
          const Keypoint& c = s.frames[t].groups[g][k];
          if (c.confidence > best.confidence) best = c;
        }
        if (best.confidence < threshold) best.confidence = 0.0;
        dst[k] = best;
      }
    }
  }
  return out;
}

/// Makes every track dense: confidence-0 samples are linearly interpolated in
/// time between the nearest observed neighbours (held constant past the
/// ends) and keep confidence 0. Tracks never observed become (0,0,0).
inline KeypointSequence fill_missing(const KeypointSequence& seq) {
  KeypointSequence out = seq;
  const std::size_t n = seq.frames.size();
  for (int g = 0; g < kGroupCount; ++g) {
    for (std::size_t k = 0; k < seq.group_size(g); ++k) {
      std::vector<std::size_t> observed;
      for (std::size_t t = 0; t < n; ++t)
        if (seq.frames[t].groups[g][k].confidence > 0.0) observed.push_back(t);
      for (std::size_t t = 0; t < n; ++t) {
        Keypoint& dst = out.frames[t].groups[g][k];
        if (dst.confidence > 0.0) continue;
        if (observed.empty()) {
          dst = Keypoint{};
          continue;
        }
        auto next = std::lower_bound(observed.begin(), observed.end(), t);
        const Keypoint* after = next == observed.end() ? nullptr : &seq.frames[*next].groups[g][k];
        const Keypoint* before = next == observed.begin() ? nullptr : &seq.frames[*std::prev(next)].groups[g][k];
        if (before == nullptr) {
          dst = {after->u, after->v, 0.0};
        } else if (after == nullptr) {
          dst = {before->u, before->v, 0.0};
        } else {
          const double t0 = seq.frames[*std::prev(next)].frame_index;
          const double t1 = seq.frames[*next].frame_index;
          const double w = (seq.frames[t].frame_index - t0) / (t1 - t0);
          dst = {before->u + w * (after->u - before->u), before->v + w * (after->v - before->v), 0.0};
        }
      }
    }
  }
  return out;
}

}  // namespace holofit
