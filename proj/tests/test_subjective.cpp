#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "oracles.hpp"
#include "t23dqa/errors.hpp"
#include "t23dqa/subjective.hpp"

using namespace t23dqa;

namespace {

RatingRecord rec(std::string s, std::string a, double q, double au, double c) {
  return {std::move(s), std::move(a), {q, au, c}, 1};
}

// s subjects rate n assets with true score j / (n - 1) * 4 + 0.5 and a
// subject-specific affine distortion.
std::vector<RatingRecord> affine_panel(int subjects, int assets) {
  std::vector<RatingRecord> out;
  for (int s = 0; s < subjects; ++s) {
    const double scale = 0.5 + 0.1 * s, shift = 0.05 * s;
    for (int j = 0; j < assets; ++j) {
      const double t = 0.5 + 4.0 * j / (assets - 1);
      out.push_back(rec("s" + std::to_string(s), "a" + std::to_string(j), scale * t * 0.8 + shift,
                        scale * (5 - t) * 0.8 + shift, scale * t * 0.5 + shift));
    }
  }
  return out;
}

}  // namespace

TEST(Moments, SampleStdAndKurtosis) {
  EXPECT_EQ(sample_std(std::vector<double>{3.0}), 0.0);
  EXPECT_NEAR(sample_std(std::vector<double>{1, 2, 3, 4}), std::sqrt(5.0 / 3.0), 1e-15);
  // two-point distribution has kurtosis exactly 1
  EXPECT_NEAR(kurtosis(std::vector<double>{0, 1, 0, 1}), 1.0, 1e-15);
  EXPECT_TRUE(std::isnan(kurtosis(std::vector<double>{2, 2, 2})));
}

TEST(Moments, KurtosisClassification) {
  EXPECT_EQ(classify_distribution(2.0), DistributionClass::kGaussian);
  EXPECT_EQ(classify_distribution(3.0), DistributionClass::kGaussian);
  EXPECT_EQ(classify_distribution(4.0), DistributionClass::kGaussian);
  EXPECT_EQ(classify_distribution(1.9), DistributionClass::kNonGaussian);
  EXPECT_EQ(classify_distribution(4.1), DistributionClass::kNonGaussian);
}

TEST(Outliers, HandOracleFlagsTheNinety) {
  const std::vector<double> v = {50, 51, 49, 50, 52, 90};
  EXPECT_NEAR(oracle::mean(v), 57.0, 1e-12);
  EXPECT_NEAR(sample_std(v), 16.2, 0.05);
  EXPECT_EQ(flag_outliers(v, 2.0), std::vector<std::size_t>{5});
  EXPECT_TRUE(flag_outliers(v, std::sqrt(20.0)).empty());
}

TEST(Outliers, IdenticalScoresFlagNothing) {
  std::vector<RatingRecord> r;
  for (int s = 0; s < 5; ++s) r.push_back(rec("s" + std::to_string(s), "x", 3, 3, 3));
  const auto report = detect_outliers(r);
  EXPECT_TRUE(report.flagged.empty());
  EXPECT_TRUE(report.rejected_subjects.empty());
}

TEST(Outliers, TooFewRatingsNamesTheAsset) {
  std::vector<RatingRecord> r = {rec("s1", "a1", 1, 1, 1), rec("s2", "a1", 2, 2, 2),
                                 rec("s1", "lonely", 1, 1, 1)};
  try {
    detect_outliers(r);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("lonely"), std::string::npos);
  }
}

TEST(Outliers, ReportIsConsistent) {
  Rng rng(3);
  std::vector<RatingRecord> r;
  for (int s = 0; s < 12; ++s)
    for (int j = 0; j < 30; ++j) {
      // Enough spread that most assets fall in the Gaussian band; a lone
      // deviant among 12 can never clear the wider non-Gaussian band.
      const double t = 1.0 + 2.5 * j / 29.0;
      const bool wild = s == 0 && j % 3 == 0;
      r.push_back(rec("s" + std::to_string(s), "a" + std::to_string(j),
                      wild ? t + 1.5 : t + normal(rng, 0, 0.5), t, t));
    }
  const auto report = detect_outliers(r);
  std::size_t flagged_ratings = 0;
  for (const auto& f : report.flagged) {
    auto it = std::find_if(r.begin(), r.end(), [&](const RatingRecord& x) {
      return x.subject_id == f.subject_id && x.asset_id == f.asset_id &&
             x.scores[index_of(f.dimension)] == f.score;
    });
    EXPECT_NE(it, r.end()) << "flag without a matching rating";
    ++flagged_ratings;
  }
  for (const auto& st : report.subjects)
    for (int d = 0; d < 3; ++d) {
      EXPECT_GE(st.std[d], 0.0);
      EXPECT_DOUBLE_EQ(st.outlier_rate[d], static_cast<double>(st.flagged[d]) / st.rated[d]);
    }
  EXPECT_NE(std::find(report.rejected_subjects.begin(), report.rejected_subjects.end(), "s0"),
            report.rejected_subjects.end());
  EXPECT_DOUBLE_EQ(report.rating_discard_fraction,
                   static_cast<double>(flagged_ratings) / (r.size() * 3.0));
  EXPECT_DOUBLE_EQ(report.subject_reject_fraction,
                   static_cast<double>(report.rejected_subjects.size()) / 12.0);
}

TEST(ZScore, RescaleExamples) {
  EXPECT_DOUBLE_EQ(rescale_z(0.0), 50.0);
  EXPECT_DOUBLE_EQ(rescale_z(3.0), 100.0);
  EXPECT_DOUBLE_EQ(rescale_z(-3.0), 0.0);
}

TEST(ZScore, SubjectWithMeanThreeStdOne) {
  // scores 2, 3, 4: mean 3, sample std 1
  std::vector<RatingRecord> r = {rec("s", "a", 2, 2, 2), rec("s", "b", 3, 3, 3),
                                 rec("s", "c", 4, 4, 4)};
  const std::vector<std::string> valid = {"s"};
  const auto z = zscore_rescale(r, valid);
  ASSERT_EQ(z.size(), 3u);
  EXPECT_NEAR(*z[2].z[0], 1.0, 1e-15);
  EXPECT_NEAR(*z[2].z_prime[0], 200.0 / 3.0, 1e-12);
}

TEST(ZScore, ZeroSpreadSubjectIsAnError) {
  std::vector<RatingRecord> r = {rec("flat", "a", 2, 1, 2), rec("flat", "b", 2, 3, 3)};
  const std::vector<std::string> valid = {"flat"};
  EXPECT_THROW(zscore_rescale(r, valid), ValidationError);
}

TEST(ZScore, ExcludedRatingsAreEmptyAndSkipped) {
  std::vector<RatingRecord> r = {rec("s", "a", 1, 1, 1), rec("s", "b", 2, 2, 2),
                                 rec("s", "c", 3, 3, 3), rec("s", "d", 5, 4, 4)};
  const std::vector<std::string> valid = {"s"};
  const std::vector<FlaggedRating> ex = {{"s", "d", Dimension::kQuality, 5.0}};
  const auto z = zscore_rescale(r, valid, ex);
  EXPECT_FALSE(z[3].z[0].has_value());
  EXPECT_TRUE(z[3].z[1].has_value());
  // quality moments come from {1, 2, 3} alone
  EXPECT_NEAR(*z[2].z[0], 1.0, 1e-15);
}

TEST(Mos, MeanOfRescaledScores) {
  std::vector<RescaledRating> z(2);
  z[0] = {"s1", "a", {}, {10.0, 20.0, 30.0}};
  z[1] = {"s2", "a", {}, {30.0, std::nullopt, 50.0}};
  const auto mos = compute_mos(z);
  ASSERT_EQ(mos.size(), 1u);
  EXPECT_EQ(mos[0].mos, (Triple{20.0, 20.0, 40.0}));
  std::vector<RescaledRating> empty_dim = {{"s1", "b", {}, {1.0, std::nullopt, 2.0}}};
  EXPECT_THROW(compute_mos(empty_dim), ValidationError);
}

TEST(Pipeline, AffineSubjectsPreserveTrueRanking) {
  const auto ratings = affine_panel(6, 20);
  const auto out = process_ratings(ratings);
  ASSERT_EQ(out.mos.size(), 20u);
  for (std::size_t j = 1; j < out.mos.size(); ++j) {
    EXPECT_GT(out.mos[j].mos[0], out.mos[j - 1].mos[0]);
    EXPECT_LT(out.mos[j].mos[1], out.mos[j - 1].mos[1]);
    EXPECT_GT(out.mos[j].mos[2], out.mos[j - 1].mos[2]);
  }
}

TEST(Pipeline, PositiveAffinePerturbationLeavesMosUnchanged) {
  Rng rng(17);
  std::vector<RatingRecord> r;
  for (int s = 0; s < 8; ++s)
    for (int j = 0; j < 25; ++j) {
      RatingRecord x{"s" + std::to_string(s), "a" + std::to_string(j), {}, 1};
      for (auto& v : x.scores) v = std::round(uniform(rng, 0, 5) * 10) / 10;
      r.push_back(x);
    }
  std::vector<std::string> subjects;
  for (int s = 0; s < 8; ++s) subjects.push_back("s" + std::to_string(s));
  const auto base = compute_mos(zscore_rescale(r, subjects));
  for (auto& x : r) {
    const int s = x.subject_id[1] - '0';
    for (auto& v : x.scores) v = (0.3 + 0.4 * s) * v + 2.0 - s;
  }
  const auto moved = compute_mos(zscore_rescale(r, subjects));
  ASSERT_EQ(base.size(), moved.size());
  for (std::size_t j = 0; j < base.size(); ++j)
    for (int d = 0; d < 3; ++d) EXPECT_NEAR(base[j].mos[d], moved[j].mos[d], 1e-9);
}

TEST(Pipeline, ManifestOrderAndCoverage) {
  auto ratings = affine_panel(4, 6);
  std::vector<AssetRecord> manifest;
  for (int j = 5; j >= 0; --j)
    manifest.push_back({"a" + std::to_string(j), "p", "g", "v.mp4", 120, 64, 64});
  const auto out = process_ratings(ratings, manifest);
  ASSERT_EQ(out.mos.size(), 6u);
  EXPECT_EQ(out.mos.front().asset_id, "a5");
  manifest.push_back({"unrated", "p", "g", "v.mp4", 120, 64, 64});
  EXPECT_THROW(process_ratings(ratings, manifest), ValidationError);
  manifest.pop_back();
  manifest.pop_back();
  EXPECT_THROW(process_ratings(ratings, manifest), ValidationError);
}

TEST(Pipeline, MosCountsValidSubjects) {
  const auto out = process_ratings(affine_panel(5, 10));
  for (const auto& m : out.mos) EXPECT_EQ(m.n_valid_subjects, 5);
}
