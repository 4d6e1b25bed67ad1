#pragma once

// Training objective. Per dimension:
//   lin  = ( mean((S^ - S)^2) + mean((rho S^ - S)^2) ) / 2
//          where S^, S are the batch z-scores and rho = mean(S^ * S)
//   rank = mean over ordered pairs of max(0, -(p_i - p_j) sgn(y_i - y_j))
// and the total is the sum over (q, a, c) of lin + lambda * rank.

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include "t23dqa/dataset.hpp"
#include "t23dqa/nn.hpp"

namespace t23dqa {

enum class RankVariant {
  kPairwiseSignHinge,
  // mean |p - y|, the elementwise reading of the printed formula
  kLiteral,
};

std::string_view rank_variant_name(RankVariant v);
RankVariant parse_rank_variant(std::string_view name);

struct LossConfig {
  double lambda = 0.3;
  RankVariant rank_variant = RankVariant::kPairwiseSignHinge;

  bool operator==(const LossConfig&) const = default;
};

void validate(const LossConfig& config);

// Throws ValidationError for batches smaller than 2, mismatched lengths and
// constant labels. A constant prediction has zero z-score (and zero gradient).
// When `grad` is non-null it receives d loss / d pred.
double linearity_loss(std::span<const double> pred, std::span<const double> label,
                      std::vector<double>* grad = nullptr);

double rank_loss(std::span<const double> pred, std::span<const double> label,
                 RankVariant variant = RankVariant::kPairwiseSignHinge,
                 std::vector<double>* grad = nullptr);

struct DimensionLoss {
  double lin = 0.0;
  double rank = 0.0;
  double total = 0.0;
  bool lin_skipped = false;  // label column was constant
};

struct LossBreakdown {
  std::array<DimensionLoss, kNumDimensions> dims{};
  double total = 0.0;
};

// Sum of per-dimension calls. Predictions and labels are matched by asset_id
// position; any id mismatch throws.
LossBreakdown total_loss(std::span<const ScoreTriple> preds, std::span<const MosRecord> labels,
                         const LossConfig& config);

// Fused B x 3 version used by training. With skip_constant_labels a dimension
// whose labels are constant across the batch contributes only its rank term
// instead of throwing.
LossBreakdown total_loss(const nn::Matrix& preds, const nn::Matrix& labels,
                         const LossConfig& config, nn::Matrix* grad = nullptr,
                         bool skip_constant_labels = false);

}  // namespace t23dqa
