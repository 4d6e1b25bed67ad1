#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "t23dqa/errors.hpp"
#include "t23dqa/losses.hpp"

using namespace t23dqa;

namespace {

std::vector<double> randn(Rng& rng, std::size_t n, double mean = 0.0, double sd = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng, mean, sd);
  return v;
}

}  // namespace

TEST(LinearityLoss, ZeroForPositiveAffinePredictions) {
  const std::vector<double> q = {10, 40, 25, 90, 60};
  std::vector<double> p;
  for (double v : q) p.push_back(0.3 * v - 12.0);
  EXPECT_NEAR(linearity_loss(p, q), 0.0, 1e-14);
}

TEST(LinearityLoss, TwoForNegatedLabels) {
  const std::vector<double> q = {-1.0, 1.0, -1.0, 1.0};  // already unit variance
  const std::vector<double> p = {1.0, -1.0, 1.0, -1.0};
  EXPECT_NEAR(linearity_loss(p, q), 2.0, 1e-12);
}

TEST(LinearityLoss, ConstantPredictionIsOneWithZeroGradient) {
  // S^ = 0 so both terms reduce to mean(S^2) = 1
  const std::vector<double> q = {1, 2, 3, 4}, p(4, 7.0);
  std::vector<double> g;
  EXPECT_NEAR(linearity_loss(p, q, &g), 1.0, 1e-14);
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(LinearityLoss, Errors) {
  const std::vector<double> a = {1, 2, 3}, c = {2, 2, 2};
  EXPECT_THROW(linearity_loss(a, c), ValidationError);
  EXPECT_THROW(linearity_loss(std::vector<double>{1}, std::vector<double>{1}), ValidationError);
  EXPECT_THROW(linearity_loss(a, std::vector<double>{1, 2}), ValidationError);
}

TEST(LinearityLoss, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 3 + uniform_index(rng, 10);
    const auto p = randn(rng, n, 3.0, 2.0), y = randn(rng, n, 50.0, 20.0);
    std::vector<double> g;
    linearity_loss(p, y, &g);
    const auto fd = oracle::numeric_gradient(
        [&](std::vector<double>& v) { return linearity_loss(v, y); }, p, 1e-5);
    EXPECT_LT(oracle::relative_error(g, fd), 1e-6) << "n=" << n;
  }
}

TEST(LinearityLoss, PairsHaveZeroGradient) {
  // two z-scored values are always -1 and +1, so the loss is flat in p
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = randn(rng, 2, 3.0, 2.0), y = randn(rng, 2, 50.0, 20.0);
    std::vector<double> g;
    const double l = linearity_loss(p, y, &g);
    EXPECT_TRUE(std::abs(l) < 1e-12 || std::abs(l - 2.0) < 1e-12) << l;
    for (double v : g) EXPECT_LT(std::abs(v), 1e-12);
  }
}

TEST(RankLoss, PairwiseHandValues) {
  // one swapped pair out of 2 ordered pairs per unordered pair: 2 * 1 / (3 * 2)
  const std::vector<double> y = {1, 2, 3}, p = {0, 2, 1};
  EXPECT_NEAR(rank_loss(p, y), 2.0 / 6.0, 1e-15);
  EXPECT_EQ(rank_loss(y, y), 0.0);
  // tied labels never contribute
  EXPECT_EQ(rank_loss(std::vector<double>{5, 1}, std::vector<double>{2, 2}), 0.0);
}

TEST(RankLoss, LiteralVariantIsMeanAbsoluteError) {
  const std::vector<double> y = {1, 2, 3}, p = {2, 2, 1};
  EXPECT_NEAR(rank_loss(p, y, RankVariant::kLiteral), 1.0, 1e-15);
  std::vector<double> g;
  rank_loss(p, y, RankVariant::kLiteral, &g);
  EXPECT_EQ(g, (std::vector<double>{1.0 / 3, 0.0, -1.0 / 3}));
}

TEST(RankLoss, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 8);
    const auto p = randn(rng, n), y = randn(rng, n);
    for (auto variant : {RankVariant::kPairwiseSignHinge, RankVariant::kLiteral}) {
      std::vector<double> g;
      rank_loss(p, y, variant, &g);
      const auto fd = oracle::numeric_gradient(
          [&](std::vector<double>& v) { return rank_loss(v, y, variant); }, p, 1e-7);
      EXPECT_LT(oracle::relative_error(g, fd), 1e-6);
    }
  }
}

TEST(RankVariantNames, RoundTrip) {
  for (auto v : {RankVariant::kPairwiseSignHinge, RankVariant::kLiteral})
    EXPECT_EQ(parse_rank_variant(rank_variant_name(v)), v);
  EXPECT_THROW(parse_rank_variant("listwise"), ConfigError);
}

TEST(TotalLoss, FusedMatchesPerDimensionSum) {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 9);
    std::vector<ScoreTriple> preds;
    std::vector<MosRecord> labels;
    nn::Matrix p(static_cast<Eigen::Index>(n), 3), y(static_cast<Eigen::Index>(n), 3);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string id = "a" + std::to_string(i);
      ScoreTriple s{id, {}};
      MosRecord m{id, {}, 3, {}};
      for (int d = 0; d < 3; ++d) {
        s.scores[d] = p(static_cast<Eigen::Index>(i), d) = normal(rng);
        m.mos[d] = y(static_cast<Eigen::Index>(i), d) = uniform(rng, 0, 100);
      }
      preds.push_back(s);
      labels.push_back(m);
    }
    LossConfig cfg;
    cfg.lambda = uniform(rng, 0.0, 2.0);
    cfg.rank_variant = trial % 2 ? RankVariant::kLiteral : RankVariant::kPairwiseSignHinge;
    const auto a = total_loss(preds, labels, cfg);
    nn::Matrix grad;
    const auto b = total_loss(p, y, cfg, &grad);
    EXPECT_NEAR(a.total, b.total, 1e-10);
    double sum = 0.0;
    for (int d = 0; d < 3; ++d) {
      EXPECT_NEAR(a.dims[d].lin, b.dims[d].lin, 1e-10);
      EXPECT_NEAR(a.dims[d].rank, b.dims[d].rank, 1e-10);
      EXPECT_NEAR(b.dims[d].total, b.dims[d].lin + cfg.lambda * b.dims[d].rank, 1e-12);
      sum += b.dims[d].total;
    }
    EXPECT_NEAR(b.total, sum, 1e-12);
  }
}

TEST(TotalLoss, RejectsMisalignedBatches) {
  std::vector<ScoreTriple> p = {{"a", {1, 2, 3}}, {"b", {2, 3, 1}}};
  std::vector<MosRecord> y = {{"a", {1, 2, 3}, 1, {}}, {"c", {2, 3, 1}, 1, {}}};
  EXPECT_THROW(total_loss(p, y, LossConfig{}), ValidationError);
  LossConfig bad;
  bad.lambda = -1.0;
  y[1].asset_id = "b";
  EXPECT_THROW(total_loss(p, y, bad), ConfigError);
}

TEST(TotalLoss, ConstantLabelColumnSkippedOnlyWhenAsked) {
  nn::Matrix p(3, 3), y(3, 3);
  p << 1, 2, 3, 2, 1, 0, 5, 5, 1;
  y << 10, 50, 20, 20, 50, 30, 30, 50, 10;
  EXPECT_THROW(total_loss(p, y, LossConfig{}), ValidationError);
  nn::Matrix grad;
  const auto out = total_loss(p, y, LossConfig{}, &grad, true);
  EXPECT_TRUE(out.dims[1].lin_skipped);
  EXPECT_EQ(out.dims[1].lin, 0.0);
  EXPECT_EQ(out.dims[1].rank, 0.0);
  EXPECT_FALSE(out.dims[0].lin_skipped);
  EXPECT_TRUE(grad.col(1).isZero());
}
