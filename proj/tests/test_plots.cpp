#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "t23dqa/errors.hpp"
#include "t23dqa/plots.hpp"

using namespace t23dqa;
namespace fs = std::filesystem;

TEST(Histogram, CountsEveryValue) {
  const std::vector<double> v = {0, 1, 2, 3, 4, 5, 6, 7, 8, 10};
  const Histogram h = histogram(v, 5);
  EXPECT_EQ(h.lo, 0);
  EXPECT_EQ(h.hi, 10);
  EXPECT_EQ(h.counts, (std::vector<int>{2, 2, 2, 2, 2}));
  EXPECT_EQ(std::accumulate(h.counts.begin(), h.counts.end(), 0), 10);
}

TEST(Histogram, SingleValueGivesOneBin) {
  const std::vector<double> v = {3.5, 3.5, 3.5};
  const Histogram h = histogram(v, 20);
  ASSERT_EQ(h.counts.size(), 1u);
  EXPECT_EQ(h.counts[0], 3);
  EXPECT_THROW(histogram(std::vector<double>{}, 4), ValidationError);
  EXPECT_THROW(histogram(v, 0), ConfigError);
}

TEST(Svg, EscapesTitlesAndDrawsBars) {
  const std::vector<double> v = {1, 2, 2, 3};
  const std::string svg = histogram_svg(histogram(v, 3), "a < b & c");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("a &lt; b &amp; c"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  const std::vector<BarGroup> groups = {{"g1", {1, 2}}, {"g2", {3, 4}}};
  const std::vector<std::string> series = {"s1", "s2"};
  const std::string bars = bar_chart_svg(groups, series, "bars");
  EXPECT_NE(bars.find("g2"), std::string::npos);
  EXPECT_NE(bars.find("s1"), std::string::npos);
}

TEST(PlotFiles, MosAndReport) {
  const auto dir = fs::temp_directory_path() / "t23dqa_test_plots";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<AssetRecord> manifest;
  std::vector<MosRecord> mos;
  for (int i = 0; i < 6; ++i) {
    const std::string id = "a" + std::to_string(i);
    manifest.push_back({id, std::string(i + 1, 'w'), i % 2 ? "sjc" : "magic3d", "v", 120, 8, 8});
    mos.push_back({id, {10.0 * i, 50, 90 - 5.0 * i}, 5, {}});
  }
  const auto files = plot_mos(mos, manifest, dir);
  EXPECT_EQ(files.size(), 5u);
  for (const auto& f : files) EXPECT_TRUE(fs::exists(f)) << f;
  EXPECT_EQ(plot_mos(mos, {}, dir).size(), 3u);
  EXPECT_THROW(plot_mos({}, manifest, dir), ValidationError);

  const auto gen = mos_by_generator(mos, manifest);
  ASSERT_EQ(gen.size(), 2u);
  double expect_q = (10 + 30 + 50) / 3.0;
  for (const auto& g : gen)
    if (g.label == "sjc") EXPECT_NEAR(g.values[0], expect_q, 1e-12);

  BenchmarkResult r;
  r.method = "m";
  r.mean[0].srcc = 0.5;
  const std::vector<BenchmarkResult> rs = {r};
  const auto rep = plot_report(rs, dir);
  ASSERT_EQ(rep.size(), 1u);
  std::ifstream in(rep[0]);
  std::stringstream text;
  text << in.rdbuf();
  EXPECT_NE(text.str().find(">m<"), std::string::npos);
}
