#include <gtest/gtest.h>

#include <sstream>

#include "holofit/keypoints.hpp"

using namespace holofit;

namespace {

KeypointSequence parse(const std::string& text, std::vector<std::string>* warnings = nullptr) {
  std::istringstream in(text);
  return parse_keypoints_stream(in, "test", warnings);
}

// One body slot per frame, the given (u, v, c) samples.
KeypointSequence track(std::vector<Keypoint> samples) {
  KeypointSequence s;
  s.source_name = "track";
  for (std::size_t t = 0; t < samples.size(); ++t) {
    KeypointFrame f;
    f.frame_index = static_cast<int>(t);
    f.groups[0] = {samples[t]};
    s.frames.push_back(f);
  }
  return s;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::Io;
}

}  // namespace

TEST(ParseKeypoints, TwoFramesThreeBodyPoints) {
  const auto s = parse(
      R"({"frame":0,"body":[[1,2,0.5],[3,4,1],[5,6,0]]})"
      "\n"
      R"({"frame":1,"body":[[1,2,0.5],[3,4,1],[5,6,0]]})"
      "\n");
  EXPECT_EQ(s.size(), 2);
  EXPECT_EQ(s.group_size(0), 3u);
  EXPECT_EQ(s.frames[0].groups[0][1], (Keypoint{3, 4, 1}));
}

TEST(ParseKeypoints, ConfidenceOutOfRange) {
  EXPECT_EQ(kind_of([] { parse(R"({"frame":0,"body":[[1,2,1.2]]})"); }), ErrorKind::ParseError);
}

TEST(ParseKeypoints, MalformedLineReportsLineNumber) {
  try {
    parse("{\"frame\":0,\"body\":[]}\n{not json\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(ParseKeypoints, InconsistentGroupSizes) {
  EXPECT_EQ(kind_of([] { parse("{\"frame\":0,\"body\":[[1,2,1]]}\n{\"frame\":1,\"body\":[]}\n"); }),
            ErrorKind::LayoutError);
}

TEST(ParseKeypoints, OutOfOrderFramesAreSortedWithWarning) {
  std::vector<std::string> warnings;
  const auto s = parse("{\"frame\":3,\"body\":[[1,1,1]]}\n{\"frame\":1,\"body\":[[2,2,1]]}\n", &warnings);
  ASSERT_EQ(s.size(), 2);
  EXPECT_EQ(s.frames[0].frame_index, 1);
  EXPECT_EQ(s.frames[1].frame_index, 3);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(ParseKeypoints, FormatRoundTrip) {
  const auto s = parse(R"({"frame":0,"body":[[1.25,2.5,0.75]],"left_hand":[],"right_hand":[],"face":[[9,8,0.1]]})");
  std::istringstream in(format_keypoints(s));
  const auto back = parse_keypoints_stream(in, "again");
  EXPECT_EQ(back.frames, s.frames);
}

TEST(Fuse, MaxConfidenceWins) {
  const auto a = track({{10, 10, 0.9}});
  const auto b = track({{50, 50, 0.2}});
  const std::vector<KeypointSequence> src = {a, b};
  const auto f = fuse_confidence_guided(src, 0.3);
  EXPECT_EQ(f.source_name, "fused");
  EXPECT_EQ(f.frames[0].groups[0][0], (Keypoint{10, 10, 0.9}));
}

TEST(Fuse, BelowThresholdIsMissing) {
  const std::vector<KeypointSequence> src = {track({{10, 10, 0.1}}), track({{50, 50, 0.1}})};
  EXPECT_EQ(fuse_confidence_guided(src, 0.3).frames[0].groups[0][0].confidence, 0.0);
}

TEST(Fuse, SingleSourceZeroesWeakEntries) {
  const auto a = track({{1, 1, 0.9}, {2, 2, 0.2}, {3, 3, 0.3}});
  const std::vector<KeypointSequence> src = {a};
  const auto f = fuse_confidence_guided(src, 0.3);
  EXPECT_EQ(f.frames[0].groups[0][0], a.frames[0].groups[0][0]);
  EXPECT_EQ(f.frames[1].groups[0][0], (Keypoint{2, 2, 0.0}));
  EXPECT_EQ(f.frames[2].groups[0][0], a.frames[2].groups[0][0]);
}

TEST(Fuse, Idempotent) {
  const std::vector<KeypointSequence> src = {track({{1, 1, 0.9}, {2, 2, 0.2}}), track({{5, 5, 0.4}, {6, 6, 0.8}})};
  const auto once = fuse_confidence_guided(src, 0.3);
  const std::vector<KeypointSequence> again = {once};
  EXPECT_EQ(fuse_confidence_guided(again, 0.3).frames, once.frames);
}

TEST(Fuse, MismatchedLayouts) {
  auto a = track({{1, 1, 1}});
  auto b = track({{1, 1, 1}});
  b.frames[0].groups[0].push_back({2, 2, 1});
  const std::vector<KeypointSequence> src = {a, b};
  EXPECT_EQ(kind_of([&] { fuse_confidence_guided(src, 0.3); }), ErrorKind::LayoutError);
}

TEST(FillMissing, LinearInterpolation) {
  const auto f = fill_missing(track({{0, 0, 1}, {9, 9, 0}, {4, 8, 1}}));
  EXPECT_EQ(f.frames[1].groups[0][0], (Keypoint{2, 4, 0}));
}

TEST(FillMissing, EdgesHoldNearest) {
  const auto f = fill_missing(track({{7, 7, 0}, {1, 2, 1}, {7, 7, 0}}));
  EXPECT_EQ(f.frames[0].groups[0][0], (Keypoint{1, 2, 0}));
  EXPECT_EQ(f.frames[2].groups[0][0], (Keypoint{1, 2, 0}));
}

TEST(FillMissing, FullyObservedUnchanged) {
  const auto s = track({{0, 0, 1}, {1, 1, 0.5}});
  EXPECT_EQ(fill_missing(s).frames, s.frames);
}

TEST(FillMissing, NeverObservedIsZero) {
  const auto f = fill_missing(track({{3, 3, 0}, {4, 4, 0}}));
  for (const auto& fr : f.frames) EXPECT_EQ(fr.groups[0][0], (Keypoint{0, 0, 0}));
}
