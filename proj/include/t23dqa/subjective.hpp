#pragma once

// Raw slider ratings -> MOS labels.
//
// Per asset and dimension the raw scores are classified Gaussian or not by
// their kurtosis, outliers are flagged against a k-sigma band, subjects with
// too many flagged ratings are rejected, and the surviving ratings are
// z-scored per subject and dimension, rescaled with z' = 100 (z + 3) / 6 and
// averaged over subjects.

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "t23dqa/dataset.hpp"

namespace t23dqa {

enum class DistributionClass { kGaussian, kNonGaussian };

struct OutlierConfig {
  double gaussian_k = 2.0;
  double non_gaussian_k = std::sqrt(20.0);
  double subject_reject_rate = 0.03;
  // Non-excess kurtosis band treated as Gaussian.
  double gaussian_kurtosis_min = 2.0;
  double gaussian_kurtosis_max = 4.0;
};

struct SubjectStats {
  std::string subject_id;
  Triple mean{};
  Triple std{};
  Triple outlier_rate{};
  std::array<int, kNumDimensions> rated{};
  std::array<int, kNumDimensions> flagged{};
};

struct FlaggedRating {
  std::string subject_id;
  std::string asset_id;
  Dimension dimension = Dimension::kQuality;
  double score = 0.0;

  bool operator==(const FlaggedRating&) const = default;
};

struct AssetDistribution {
  std::string asset_id;
  Triple kurtosis{};
  std::array<DistributionClass, kNumDimensions> classes{};
};

struct OutlierReport {
  std::vector<AssetDistribution> distributions;
  std::vector<FlaggedRating> flagged;
  std::vector<SubjectStats> subjects;
  std::vector<std::string> rejected_subjects;
  // Flagged scalar ratings / all scalar ratings.
  double rating_discard_fraction = 0.0;
  // Rejected subjects / all subjects.
  double subject_reject_fraction = 0.0;
};

// Sample (n - 1) standard deviation; 0 for fewer than two values.
double sample_std(std::span<const double> values);

// Fourth standardized moment with population moments (not excess); NaN when
// the values have zero spread.
double kurtosis(std::span<const double> values);

DistributionClass classify_distribution(double kurtosis, const OutlierConfig& config = {});

// Indices i with |values[i] - mean| > k * sample_std(values).
std::vector<std::size_t> flag_outliers(std::span<const double> values, double k);

// Throws ValidationError naming the asset when some (asset, dimension) has
// fewer than two ratings.
OutlierReport detect_outliers(std::span<const RatingRecord> ratings,
                              const OutlierConfig& config = {});

struct RescaledRating {
  std::string subject_id;
  std::string asset_id;
  // Empty where the rating was excluded as an outlier.
  std::array<std::optional<double>, kNumDimensions> z{};
  std::array<std::optional<double>, kNumDimensions> z_prime{};
};

inline double rescale_z(double z) { return 100.0 * (z + 3.0) / 6.0; }

// z-scores every rating of a valid subject against that subject's own mean
// and sample std per dimension, computed over the ratings that survive
// `excluded`. Ratings by other subjects are dropped. Throws ValidationError
// when a valid subject has zero spread in some dimension.
std::vector<RescaledRating> zscore_rescale(std::span<const RatingRecord> ratings,
                                           std::span<const std::string> valid_subjects,
                                           std::span<const FlaggedRating> excluded = {});

// Per-asset mean of z' over subjects, in first-appearance order. Throws
// ValidationError listing assets that end up with no valid value.
std::vector<MosRecord> compute_mos(std::span<const RescaledRating> rescaled);

struct ProcessOptions {
  OutlierConfig outliers;
  // Drop individually flagged ratings as well as rejected subjects.
  bool drop_flagged_ratings = true;
};

struct ProcessedStudy {
  std::vector<MosRecord> mos;
  OutlierReport report;
};

// Full pipeline. When a manifest is given, ratings must reference manifest
// assets and every manifest asset must end up with a MOS; output follows
// manifest order.
ProcessedStudy process_ratings(std::span<const RatingRecord> ratings,
                               std::span<const AssetRecord> manifest = {},
                               const ProcessOptions& options = {});

}  // namespace t23dqa
