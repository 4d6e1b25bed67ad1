#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "t23dqa/dataset.hpp"
#include "t23dqa/errors.hpp"
#include "t23dqa/synthetic.hpp"

using namespace t23dqa;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("t23dqa_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<AssetRecord> manifest_of(int n, int prompts = 0) {
  std::vector<AssetRecord> m;
  for (int i = 0; i < n; ++i)
    m.push_back({"a" + std::to_string(i),
                 "prompt " + std::to_string(prompts ? i % prompts : i),
                 std::string(kKnownGenerators[static_cast<std::size_t>(i) % 6]), "v.mp4", 120,
                 512, 512});
  return m;
}

}  // namespace

TEST(Manifest, ParsesJsonLinesInOrder) {
  std::istringstream in(
      R"({"asset_id":"x1","prompt":"a red vase","generator":"sjc","video_path":"x1.mp4","frame_count":120,"width":512,"height":512})"
      "\n\n"
      R"({"asset_id":"x0","prompt":"a cat","generator":"magic3d","video_path":"x0.mp4","frame_count":120,"width":512,"height":512})"
      "\n");
  const auto m = parse_manifest(in);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].asset_id, "x1");
  EXPECT_EQ(m[1].generator, "magic3d");
  std::istringstream empty("");
  EXPECT_TRUE(parse_manifest(empty).empty());
}

TEST(Manifest, MissingFieldNamesTheLine) {
  std::istringstream in(
      R"({"asset_id":"x1","generator":"sjc","video_path":"x1.mp4","frame_count":120,"width":512,"height":512})");
  try {
    parse_manifest(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
    EXPECT_NE(std::string(e.what()).find("prompt"), std::string::npos);
  }
  std::istringstream garbage("{not json\n");
  EXPECT_THROW(parse_manifest(garbage), ParseError);
}

TEST(Manifest, DuplicateIdsAreRejected) {
  const std::string line =
      R"({"asset_id":"x","prompt":"p","generator":"sjc","video_path":"x.mp4","frame_count":120,"width":512,"height":512})";
  std::istringstream in(line + "\n" + line + "\n");
  EXPECT_THROW(parse_manifest(in), ValidationError);
}

TEST(Manifest, RoundTrip) {
  const auto dir = scratch("manifest");
  auto m = manifest_of(7);
  m[3].prompt = "quotes \" and, commas";
  write_manifest(dir / "m.jsonl", m);
  EXPECT_EQ(load_manifest(dir / "m.jsonl"), m);
  EXPECT_THROW(load_manifest(dir / "absent.jsonl"), Error);
}

TEST(Ratings, CsvRowAndRangeErrors) {
  std::istringstream in(std::string(kRatingsCsvHeader) + "\ns1,a1,3.2,4.0,1.5,2\n");
  const auto r = parse_ratings(in);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0], (RatingRecord{"s1", "a1", {3.2, 4.0, 1.5}, 2}));

  std::istringstream high(std::string(kRatingsCsvHeader) + "\ns1,a1,5.1,4.0,1.5,2\n");
  EXPECT_THROW(parse_ratings(high), RangeError);
  std::istringstream dup(std::string(kRatingsCsvHeader) + "\ns1,a1,1,1,1,1\ns1,a1,2,2,2,1\n");
  EXPECT_THROW(parse_ratings(dup), ValidationError);
  std::istringstream bad_header("subject_id,asset_id,quality\ns1,a1,1\n");
  EXPECT_THROW(parse_ratings(bad_header), ParseError);
  std::istringstream nan_cell(std::string(kRatingsCsvHeader) + "\ns1,a1,x,1,1,1\n");
  EXPECT_THROW(parse_ratings(nan_cell), ParseError);
}

TEST(Ratings, JsonLinesAreSniffed) {
  std::istringstream in(
      R"({"subject_id":"s","asset_id":"a","quality":1.5,"authenticity":2,"correspondence":0,"session":3})");
  const auto r = parse_ratings(in);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].scores, (Triple{1.5, 2, 0}));
  EXPECT_EQ(r[0].session, 3);
}

TEST(Ratings, CsvRoundTrip) {
  const auto dir = scratch("ratings");
  std::vector<RatingRecord> r = {{"s,1", "a1", {0.1, 4.9, 2.3}, 1}, {"s2", "a\"1", {5, 0, 1}, 3}};
  write_ratings_csv(dir / "r.csv", r);
  EXPECT_EQ(load_ratings(dir / "r.csv"), r);
}

TEST(Ratings, FullStudyScalarCount) {
  SyntheticStudyOptions o;
  o.n_assets = 40;
  o.n_subjects = 17;
  const auto study = make_synthetic_study(o);
  std::ostringstream out;
  write_ratings_csv(out, study.ratings);
  std::istringstream in(out.str());
  EXPECT_EQ(parse_ratings(in).size() * 3, 17u * 40u * 3u);
}

TEST(MosAndScores, RoundTrip) {
  const auto dir = scratch("mos");
  std::vector<MosRecord> mos = {{"a", {10.25, 50, 99.5}, 12, {1, 0, 2}}, {"b", {0, 0, 0}, 3, {}}};
  write_mos(dir / "mos.jsonl", mos);
  EXPECT_EQ(load_mos(dir / "mos.jsonl"), mos);
  std::vector<ScoreTriple> s = {{"a", {0.1, -2, 3e-7}}, {"b", {1, 2, 3}}};
  write_scores(dir / "s.jsonl", s);
  EXPECT_EQ(load_scores(dir / "s.jsonl"), s);
  EXPECT_DOUBLE_EQ(s[0].a(), -2);
}

TEST(Splits, TestSizeRounds) {
  EXPECT_EQ(test_size_for(969), 194u);
  EXPECT_EQ(test_size_for(5), 1u);
  EXPECT_EQ(test_size_for(12), 2u);
  EXPECT_EQ(test_size_for(13), 3u);
}

TEST(Splits, FourToOneAndDeterministic) {
  const auto m = manifest_of(969);
  const auto a = make_splits(m, 10, 42);
  ASSERT_EQ(a.size(), 10u);
  std::set<std::vector<std::string>> distinct;
  for (const auto& s : a) {
    EXPECT_EQ(s.test_ids.size(), 194u);
    EXPECT_EQ(s.train_ids.size(), 775u);
    std::set<std::string> all(s.train_ids.begin(), s.train_ids.end());
    all.insert(s.test_ids.begin(), s.test_ids.end());
    EXPECT_EQ(all.size(), 969u);
    distinct.insert(s.test_ids);
  }
  EXPECT_GE(distinct.size(), 9u);
  EXPECT_EQ(make_splits(m, 10, 42), a);
  EXPECT_NE(make_splits(m, 1, 43)[0], a[0]);
}

TEST(Splits, SmallestLegalManifest) {
  const auto s = make_splits(manifest_of(5), 3, 1);
  for (const auto& x : s) EXPECT_EQ(x.test_ids.size(), 1u);
  EXPECT_THROW(make_splits(manifest_of(4), 1, 1), ValidationError);
  EXPECT_THROW(make_splits(manifest_of(10), 0, 1), ConfigError);
}

TEST(Splits, GroupedByPromptNeverLeaks) {
  const auto m = manifest_of(60, 20);  // three assets per prompt
  for (const auto& s : make_splits(m, 10, 7, true)) {
    EXPECT_TRUE(s.grouped_by_prompt);
    std::set<std::string> train_prompts;
    for (const auto& id : s.train_ids) train_prompts.insert(m[std::stoul(id.substr(1))].prompt);
    for (const auto& id : s.test_ids)
      EXPECT_FALSE(train_prompts.count(m[std::stoul(id.substr(1))].prompt)) << id;
    EXPECT_LE(s.test_ids.size(), test_size_for(60));
    EXPECT_GT(s.test_ids.size(), 0u);
  }
}

TEST(Splits, FileRoundTripAndOverlapCheck) {
  const auto dir = scratch("splits");
  const auto s = make_splits(manifest_of(20), 1, 3)[0];
  write_split(dir / "s.json", s);
  EXPECT_EQ(load_split(dir / "s.json"), s);
  auto bad = s;
  bad.test_ids.push_back(bad.train_ids.front());
  write_split(dir / "bad.json", bad);
  EXPECT_THROW(load_split(dir / "bad.json"), ValidationError);
}

TEST(Synthetic, StudyIsSeededAndOnGrid) {
  SyntheticStudyOptions o;
  o.n_assets = 10;
  o.n_subjects = 4;
  o.seed = 9;
  const auto a = make_synthetic_study(o), b = make_synthetic_study(o);
  EXPECT_EQ(a.manifest, b.manifest);
  EXPECT_EQ(a.ratings, b.ratings);
  EXPECT_EQ(a.ratings.size(), 40u);
  for (const auto& r : a.ratings) {
    EXPECT_NO_THROW(validate(r));
    for (double v : r.scores) EXPECT_NEAR(v * 10, std::round(v * 10), 1e-9);
  }
  o.seed = 10;
  EXPECT_NE(make_synthetic_study(o).ratings, a.ratings);
  EXPECT_DOUBLE_EQ(snap_rating(5.3), 5.0);
  EXPECT_DOUBLE_EQ(snap_rating(-0.2), 0.0);
  EXPECT_DOUBLE_EQ(snap_rating(2.34), 2.3);
}

TEST(Synthetic, FramesOnDisk) {
  const auto dir = scratch("synth_frames");
  SyntheticStudyOptions o;
  o.n_assets = 2;
  o.n_frames = 4;
  o.width = 16;
  o.height = 16;
  const auto study = make_synthetic_study(o);
  const auto m = write_study_frames(study, dir);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_TRUE(fs::exists(dir / m[0].video_path / "frame_0003.png"));
  EXPECT_EQ(m[1].frame_count, 4);
}
