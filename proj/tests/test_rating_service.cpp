#include <gtest/gtest.h>

// httplib drags in <resolv.h>, whose macros clash with Eigen; keep it last.
#include "t23dqa/dataset.hpp"
#include "t23dqa/rating_service.hpp"
#include "t23dqa/subjective.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

using namespace t23dqa;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("t23dqa_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<AssetRecord> manifest_of(int n) {
  std::vector<AssetRecord> m;
  for (int i = 0; i < n; ++i)
    m.push_back({"a" + std::to_string(i), "prompt number " + std::to_string(i), "sjc",
                 "a" + std::to_string(i) + ".mp4", 120, 64, 64});
  return m;
}

std::vector<RatingRecord> exported(const RatingStore& store) {
  std::ostringstream out;
  export_ratings(store, out);
  std::istringstream in(out.str());
  return parse_ratings(in);
}

// Rates every remaining item of the subject's current subset.
void finish_subset(RatingService& svc, const std::string& subject, double q = 3.0) {
  Session s = svc.create_session(subject);
  const int subset = s.subset_index;
  while (!s.completed && s.subset_index == subset) {
    const SessionItem item = svc.current(subject);
    s = svc.submit(subject, item.asset->asset_id, {q, 2.5, 4.1});
  }
}

}  // namespace

TEST(Grid, TenthStepsOnly) {
  for (double v : {0.0, 0.1, 3.2, 4.0, 1.5, 5.0, 0.30000000000000004}) EXPECT_TRUE(on_rating_grid(v)) << v;
  for (double v : {3.25, -0.1, 5.1, 0.01, std::nan("")}) EXPECT_FALSE(on_rating_grid(v)) << v;
}

TEST(Subsets, PartitionTheManifest) {
  const auto m = manifest_of(969);
  const auto s = subject_subsets(m, "s1", 0);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].size(), 323u);
  EXPECT_EQ(s[1].size(), 323u);
  EXPECT_EQ(s[2].size(), 323u);
  std::set<std::string> all;
  for (const auto& part : s) all.insert(part.begin(), part.end());
  EXPECT_EQ(all.size(), 969u);
  EXPECT_EQ(subject_subsets(m, "s1", 0), s);
  EXPECT_NE(subject_subsets(m, "s2", 0), s);
  EXPECT_NE(subject_subsets(m, "s1", 1), s);
}

TEST(Subsets, EarlierSubsetsTakeTheRemainder) {
  const auto s = subject_subsets(manifest_of(11), "x", 0);
  EXPECT_EQ(s[0].size(), 4u);
  EXPECT_EQ(s[1].size(), 4u);
  EXPECT_EQ(s[2].size(), 3u);
  const auto t = subject_subsets(manifest_of(10), "x", 0);
  EXPECT_EQ(t[0].size(), 4u);
  EXPECT_EQ(t[1].size(), 3u);
}

TEST(Service, FreshSubjectStartsAtSubsetOne) {
  const auto dir = scratch("svc_fresh");
  RatingStore store(dir / "store.jsonl");
  RatingService svc(manifest_of(9), store);
  const Session s = svc.create_session("alice");
  EXPECT_EQ(s.subset_index, 1);
  EXPECT_EQ(s.cursor, 0);
  EXPECT_FALSE(s.completed);
  EXPECT_EQ(s.order.size(), 3u);
  EXPECT_EQ(svc.current("alice").asset->asset_id, s.order[0]);
  EXPECT_THROW(svc.previous("alice"), NotFoundError);
}

TEST(Service, SubmitAdvancesAndValidates) {
  const auto dir = scratch("svc_submit");
  RatingStore store(dir / "store.jsonl");
  RatingService svc(manifest_of(9), store);
  const Session s = svc.create_session("bob");
  EXPECT_THROW(svc.submit("bob", s.order[0], {3.25, 4.0, 1.5}), ValidationError);
  EXPECT_THROW(svc.submit("bob", s.order[1], {3.2, 4.0, 1.5}), ConflictError);
  EXPECT_THROW(svc.submit("bob", "nope", {3.2, 4.0, 1.5}), NotFoundError);
  const Session after = svc.submit("bob", s.order[0], {3.2, 4.0, 1.5});
  EXPECT_EQ(after.cursor, 1);
  EXPECT_EQ(svc.current("bob").asset->asset_id, s.order[1]);
  const SessionItem prev = svc.previous("bob");
  EXPECT_EQ(prev.asset->asset_id, s.order[0]);
  ASSERT_TRUE(prev.rating.has_value());
  EXPECT_EQ(*prev.rating, (Triple{3.2, 4.0, 1.5}));
  // already rated: read-only unless overwrite is requested
  EXPECT_THROW(svc.submit("bob", s.order[0], {1, 1, 1}), ConflictError);
  EXPECT_NO_THROW(svc.submit("bob", s.order[0], {1, 1, 1}, true));
  EXPECT_EQ(svc.create_session("bob").cursor, 1);
}

TEST(Service, OverwriteCanBeDisabled) {
  const auto dir = scratch("svc_nooverwrite");
  RatingStore store(dir / "store.jsonl");
  RatingServiceOptions opts;
  opts.allow_overwrite = false;
  RatingService svc(manifest_of(6), store, opts);
  const auto first = svc.current("c").asset->asset_id;
  svc.submit("c", first, {1, 1, 1});
  EXPECT_THROW(svc.submit("c", first, {2, 2, 2}, true), ConflictError);
}

TEST(Service, RosterForbidsStrangers) {
  const auto dir = scratch("svc_roster");
  RatingStore store(dir / "store.jsonl");
  RatingServiceOptions opts;
  opts.roster = std::set<std::string>{"enrolled"};
  RatingService svc(manifest_of(6), store, opts);
  EXPECT_NO_THROW(svc.create_session("enrolled"));
  EXPECT_THROW(svc.create_session("stranger"), ForbiddenError);
  EXPECT_THROW(svc.create_session(""), ForbiddenError);
}

TEST(Service, WalksAllThreeSubsetsThenConflicts) {
  const auto dir = scratch("svc_walk");
  RatingStore store(dir / "store.jsonl");
  RatingService svc(manifest_of(7), store);
  finish_subset(svc, "d");
  EXPECT_EQ(svc.create_session("d").subset_index, 2);
  finish_subset(svc, "d");
  EXPECT_EQ(svc.create_session("d").subset_index, 3);
  finish_subset(svc, "d");
  EXPECT_THROW(svc.create_session("d"), ConflictError);
  EXPECT_THROW(svc.current("d"), ConflictError);
  EXPECT_EQ(exported(store).size(), 7u);
}

TEST(Service, RestartResumesTheCursor) {
  const auto dir = scratch("svc_restart");
  const auto m = manifest_of(12);
  std::string next;
  {
    RatingStore store(dir / "store.jsonl");
    RatingService svc(m, store);
    finish_subset(svc, "e");
    const auto item = svc.current("e");
    svc.submit("e", item.asset->asset_id, {1, 2, 3});
    next = svc.current("e").asset->asset_id;
  }
  RatingStore store(dir / "store.jsonl");
  RatingService svc(m, store);
  const Session s = svc.create_session("e");
  EXPECT_EQ(s.subset_index, 2);
  EXPECT_EQ(s.cursor, 1);
  EXPECT_EQ(svc.current("e").asset->asset_id, next);
}

TEST(Store, CorruptLinesAreSkippedAndReported) {
  const auto dir = scratch("store_corrupt");
  RatingStore store(dir / "store.jsonl");
  store.append({"s", "a0", {1, 2, 3}, 1, false, 0});
  { std::ofstream(dir / "store.jsonl", std::ios::app) << "{\"subject_id\": \"s\", \"asset_id\n"; }
  store.append({"s", "a1", {1, 2, 3.33}, 1, false, 1});  // off grid
  store.append({"s", "a2", {4, 4, 4}, 1, false, 2});
  const auto scan = store.scan();
  EXPECT_EQ(scan.entries.size(), 2u);
  EXPECT_EQ(scan.problems.size(), 2u);
  std::ostringstream out;
  const auto summary = export_ratings(store, out);
  EXPECT_EQ(summary.rows, 2u);
  EXPECT_EQ(summary.skipped.size(), 2u);
}

TEST(Store, ExportIsLastWriteWins) {
  const auto dir = scratch("store_lww");
  RatingStore store(dir / "store.jsonl");
  {
    std::ostringstream empty;
    export_ratings(store, empty);
    EXPECT_EQ(empty.str(), std::string(kRatingsCsvHeader) + "\n");
  }
  RatingService svc(manifest_of(6), store);
  const auto first = svc.current("f").asset->asset_id;
  svc.submit("f", first, {3.0, 1, 1});
  svc.submit("f", first, {3.5, 1, 1}, true);
  const auto rows = exported(store);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_DOUBLE_EQ(rows[0].scores[0], 3.5);
  EXPECT_EQ(store.scan().entries.size(), 2u);  // both revisions kept
  EXPECT_TRUE(store.scan().entries[1].revision);
}

TEST(Store, TwoSubjectsThreeAssetsSixRows) {
  const auto dir = scratch("store_count");
  RatingStore store(dir / "store.jsonl");
  RatingService svc(manifest_of(3), store);
  for (const char* s : {"g", "h"})
    for (int k = 0; k < 3; ++k) finish_subset(svc, s);
  EXPECT_EQ(exported(store).size(), 6u);
}

TEST(Store, ConcurrentSubjectsDoNotInterleave) {
  const auto dir = scratch("store_threads");
  RatingStore store(dir / "store.jsonl");
  RatingService svc(manifest_of(30), store);
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&svc, t] {
      for (int k = 0; k < 3; ++k) finish_subset(svc, "t" + std::to_string(t), 0.5 * t);
    });
  for (auto& th : threads) th.join();
  const auto scan = store.scan();
  EXPECT_TRUE(scan.problems.empty());
  EXPECT_EQ(scan.entries.size(), 120u);
  for (const auto& e : scan.entries) EXPECT_DOUBLE_EQ(e.scores[0], 0.5 * (e.subject_id[1] - '0'));
}

TEST(Store, ExportFeedsTheSubjectivePipeline) {
  // Three scripted subjects; the CSV round trip must not move the MOS.
  const auto dir = scratch("store_pipeline");
  const auto m = manifest_of(6);
  RatingStore store(dir / "store.jsonl");
  RatingService svc(m, store);
  std::vector<RatingRecord> direct;
  for (int s = 0; s < 3; ++s) {
    const std::string subject = "p" + std::to_string(s);
    for (int k = 0; k < 3; ++k) {
      Session sess = svc.create_session(subject);
      const int subset = sess.subset_index;
      while (!sess.completed && sess.subset_index == subset) {
        const auto id = svc.current(subject).asset->asset_id;
        const int j = std::stoi(id.substr(1));
        const Triple t = {0.5 + 0.7 * j + 0.1 * s, 4.5 - 0.6 * j, 0.3 * j + 0.2 * s};
        Triple snapped;
        for (int d = 0; d < 3; ++d) snapped[d] = std::round(t[d] * 10) / 10;
        direct.push_back({subject, id, snapped, subset});
        sess = svc.submit(subject, id, snapped);
      }
    }
  }
  const auto rows = exported(store);
  ASSERT_EQ(rows.size(), 18u);
  const auto a = process_ratings(rows, m).mos;
  const auto b = process_ratings(direct, m).mos;
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (int d = 0; d < 3; ++d) EXPECT_NEAR(a[i].mos[d], b[i].mos[d], 1e-9);
}

class Http : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = scratch("http");
    auto m = manifest_of(6);
    m[0].video_path = "clip0.mp4";
    std::ofstream(dir_ / "clip0.mp4", std::ios::binary) << std::string("0123456789abcdef");
    store_ = std::make_unique<RatingStore>(dir_ / "store.jsonl");
    RatingServiceOptions opts;
    opts.roster = std::set<std::string>{"u1", "u2"};
    service_ = std::make_unique<RatingService>(m, *store_, opts);
    mount_rating_api(server_, *service_, dir_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() { return httplib::Client("127.0.0.1", port_); }
  json post_rating(const std::string& subject, const json& body, int* status) {
    auto res = client().Post("/session/" + subject + "/rating", body.dump(), "application/json");
    *status = res ? res->status : -1;
    return res ? json::parse(res->body) : json();
  }

  fs::path dir_;
  std::unique_ptr<RatingStore> store_;
  std::unique_ptr<RatingService> service_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(Http, SessionCurrentRatingFlow) {
  auto cli = client();
  auto res = cli.Get("/session/u1");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const json session = json::parse(res->body);
  EXPECT_EQ(session.at("subset_index"), 1);
  EXPECT_EQ(session.at("cursor"), 0);

  res = cli.Get("/session/u1/current");
  ASSERT_TRUE(res);
  const json cur = json::parse(res->body);
  const std::string first = cur.at("asset_id");
  EXPECT_EQ(cur.at("prompt"), "prompt number " + first.substr(1));
  EXPECT_EQ(cur.at("video_url"), "/media/" + first);
  EXPECT_EQ(cli.Get("/session/u1/previous")->status, 404);

  int status = 0;
  json ack = post_rating("u1", {{"asset_id", first}, {"q", 3.2}, {"a", 4.0}, {"c", 1.5}}, &status);
  EXPECT_EQ(status, 200);
  EXPECT_EQ(ack.at("cursor"), 1);
  const json next = json::parse(cli.Get("/session/u1/current")->body);
  EXPECT_NE(next.at("asset_id"), first);
  const json prev = json::parse(cli.Get("/session/u1/previous")->body);
  EXPECT_EQ(prev.at("asset_id"), first);
  EXPECT_EQ(prev.at("read_only"), true);
  EXPECT_DOUBLE_EQ(prev.at("rating").at("q").get<double>(), 3.2);

  const auto csv = cli.Get("/export.csv");
  ASSERT_TRUE(csv);
  EXPECT_EQ(csv->get_header_value("X-Skipped-Entries"), "0");
  std::istringstream in(csv->body);
  EXPECT_EQ(parse_ratings(in).size(), 1u);
}

TEST_F(Http, ErrorStatuses) {
  auto cli = client();
  EXPECT_EQ(cli.Get("/session/intruder")->status, 403);
  const std::string first = json::parse(cli.Get("/session/u2/current")->body).at("asset_id");
  int status = 0;
  json err = post_rating("u2", {{"asset_id", first}, {"q", 3.25}, {"a", 4.0}, {"c", 1.5}}, &status);
  EXPECT_EQ(status, 422);
  EXPECT_NE(err.at("error").get<std::string>().find("0.1"), std::string::npos);
  post_rating("u2", {{"asset_id", "missing"}, {"q", 3}, {"a", 4}, {"c", 1}}, &status);
  EXPECT_EQ(status, 404);
  post_rating("u2", {{"asset_id", first}, {"q", 3}}, &status);
  EXPECT_EQ(status, 400);
  auto res = cli.Post("/session/u2/rating", "{not json", "application/json");
  EXPECT_EQ(res->status, 400);
  const std::string other = first == "a1" ? "a2" : "a1";
  post_rating("u2", {{"asset_id", other}, {"q", 3}, {"a", 4}, {"c", 1}}, &status);
  EXPECT_EQ(status, 409);
}

TEST_F(Http, MediaSupportsRanges) {
  auto cli = client();
  auto whole = cli.Get("/media/a0");
  ASSERT_TRUE(whole);
  EXPECT_EQ(whole->status, 200);
  EXPECT_EQ(whole->body, "0123456789abcdef");
  EXPECT_EQ(whole->get_header_value("Content-Type"), "video/mp4");
  auto part = cli.Get("/media/a0", {httplib::make_range_header({{4, 7}})});
  ASSERT_TRUE(part);
  EXPECT_EQ(part->status, 206);
  EXPECT_EQ(part->body, "4567");
  EXPECT_EQ(cli.Get("/media/a1")->status, 404);  // no file on disk
  EXPECT_EQ(cli.Get("/media/unknown")->status, 404);
}
