#include "t23dqa/subjective.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "t23dqa/errors.hpp"

namespace t23dqa {

namespace {

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Indices of records grouped by a key, groups in first-appearance order.
template <typename KeyFn>
std::vector<std::pair<std::string, std::vector<std::size_t>>> group_by(
    std::span<const RatingRecord> ratings, KeyFn key) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> groups;
  std::unordered_map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < ratings.size(); ++i) {
    const std::string& k = key(ratings[i]);
    auto [it, inserted] = slot.emplace(k, groups.size());
    if (inserted) groups.emplace_back(k, std::vector<std::size_t>{});
    groups[it->second].second.push_back(i);
  }
  return groups;
}

using RatingKey = std::tuple<std::string, std::string, int>;

}  // namespace

double sample_std(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean_of(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

double kurtosis(std::span<const double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean_of(values);
  double m2 = 0.0;
  double m4 = 0.0;
  for (double v : values) {
    const double d2 = (v - m) * (v - m);
    m2 += d2;
    m4 += d2 * d2;
  }
  const auto n = static_cast<double>(values.size());
  m2 /= n;
  m4 /= n;
  if (m2 <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return m4 / (m2 * m2);
}

DistributionClass classify_distribution(double k, const OutlierConfig& config) {
  // Zero spread has no tails to speak of; nothing can be flagged either way.
  if (std::isnan(k)) return DistributionClass::kGaussian;
  return (k >= config.gaussian_kurtosis_min && k <= config.gaussian_kurtosis_max)
             ? DistributionClass::kGaussian
             : DistributionClass::kNonGaussian;
}

std::vector<std::size_t> flag_outliers(std::span<const double> values, double k) {
  std::vector<std::size_t> out;
  const double m = mean_of(values);
  const double band = k * sample_std(values);
  for (std::size_t i = 0; i < values.size(); ++i)
    if (std::abs(values[i] - m) > band) out.push_back(i);
  return out;
}

OutlierReport detect_outliers(std::span<const RatingRecord> ratings,
                              const OutlierConfig& config) {
  OutlierReport report;
  const auto by_asset = group_by(ratings, [](const RatingRecord& r) -> const std::string& {
    return r.asset_id;
  });
  const auto by_subject = group_by(ratings, [](const RatingRecord& r) -> const std::string& {
    return r.subject_id;
  });

  std::unordered_map<std::string, std::array<int, kNumDimensions>> flagged_count;
  std::vector<double> values;
  for (const auto& [asset_id, idx] : by_asset) {
    if (idx.size() < 2)
      throw ValidationError("asset '" + asset_id +
                            "' has fewer than 2 ratings; outlier detection needs at least 2");
    AssetDistribution dist;
    dist.asset_id = asset_id;
    for (Dimension d : kDimensions) {
      const std::size_t di = index_of(d);
      values.clear();
      for (std::size_t i : idx) values.push_back(ratings[i].scores[di]);
      dist.kurtosis[di] = kurtosis(values);
      dist.classes[di] = classify_distribution(dist.kurtosis[di], config);
      const double k = dist.classes[di] == DistributionClass::kGaussian
                           ? config.gaussian_k
                           : config.non_gaussian_k;
      for (std::size_t j : flag_outliers(values, k)) {
        const RatingRecord& r = ratings[idx[j]];
        report.flagged.push_back({r.subject_id, r.asset_id, d, r.scores[di]});
        ++flagged_count[r.subject_id][di];
      }
    }
    report.distributions.push_back(std::move(dist));
  }

  for (const auto& [subject_id, idx] : by_subject) {
    SubjectStats stats;
    stats.subject_id = subject_id;
    bool reject = false;
    for (Dimension d : kDimensions) {
      const std::size_t di = index_of(d);
      values.clear();
      for (std::size_t i : idx) values.push_back(ratings[i].scores[di]);
      stats.mean[di] = mean_of(values);
      stats.std[di] = sample_std(values);
      stats.rated[di] = static_cast<int>(idx.size());
      auto it = flagged_count.find(subject_id);
      stats.flagged[di] = it == flagged_count.end() ? 0 : it->second[di];
      stats.outlier_rate[di] =
          static_cast<double>(stats.flagged[di]) / static_cast<double>(stats.rated[di]);
      if (stats.outlier_rate[di] > config.subject_reject_rate) reject = true;
    }
    if (reject) report.rejected_subjects.push_back(subject_id);
    report.subjects.push_back(std::move(stats));
  }

  if (!ratings.empty()) {
    report.rating_discard_fraction =
        static_cast<double>(report.flagged.size()) /
        static_cast<double>(ratings.size() * kNumDimensions);
    report.subject_reject_fraction = static_cast<double>(report.rejected_subjects.size()) /
                                     static_cast<double>(by_subject.size());
  }
  return report;
}

std::vector<RescaledRating> zscore_rescale(std::span<const RatingRecord> ratings,
                                           std::span<const std::string> valid_subjects,
                                           std::span<const FlaggedRating> excluded) {
  const std::unordered_set<std::string> valid(valid_subjects.begin(), valid_subjects.end());
  std::set<RatingKey> dropped;
  for (const auto& f : excluded)
    dropped.emplace(f.subject_id, f.asset_id, static_cast<int>(index_of(f.dimension)));
  auto is_dropped = [&](const RatingRecord& r, std::size_t di) {
    return !dropped.empty() &&
           dropped.contains(RatingKey{r.subject_id, r.asset_id, static_cast<int>(di)});
  };

  const auto by_subject = group_by(ratings, [](const RatingRecord& r) -> const std::string& {
    return r.subject_id;
  });
  std::unordered_map<std::string, std::pair<Triple, Triple>> moments;  // mean, std
  std::vector<double> values;
  for (const auto& [subject_id, idx] : by_subject) {
    if (!valid.contains(subject_id)) continue;
    Triple mean{}, sd{};
    for (Dimension d : kDimensions) {
      const std::size_t di = index_of(d);
      values.clear();
      for (std::size_t i : idx)
        if (!is_dropped(ratings[i], di)) values.push_back(ratings[i].scores[di]);
      mean[di] = mean_of(values);
      sd[di] = sample_std(values);
      if (!(sd[di] > 0.0))
        throw ValidationError("subject '" + subject_id + "' has zero rating spread in " +
                              std::string(dimension_name(d)) +
                              "; z-scores are undefined, reject this subject");
    }
    moments.emplace(subject_id, std::make_pair(mean, sd));
  }

  std::vector<RescaledRating> out;
  out.reserve(ratings.size());
  for (const auto& r : ratings) {
    auto it = moments.find(r.subject_id);
    if (it == moments.end()) continue;
    const auto& [mean, sd] = it->second;
    RescaledRating rr;
    rr.subject_id = r.subject_id;
    rr.asset_id = r.asset_id;
    for (std::size_t di = 0; di < kNumDimensions; ++di) {
      if (is_dropped(r, di)) continue;
      const double z = (r.scores[di] - mean[di]) / sd[di];
      rr.z[di] = z;
      rr.z_prime[di] = rescale_z(z);
    }
    out.push_back(std::move(rr));
  }
  return out;
}

std::vector<MosRecord> compute_mos(std::span<const RescaledRating> rescaled) {
  struct Acc {
    Triple sum{};
    std::array<int, kNumDimensions> count{};
    std::array<int, kNumDimensions> removed{};
    std::unordered_set<std::string> subjects;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, Acc> acc;
  for (const auto& r : rescaled) {
    auto [it, inserted] = acc.try_emplace(r.asset_id);
    if (inserted) order.push_back(r.asset_id);
    Acc& a = it->second;
    bool any = false;
    for (std::size_t di = 0; di < kNumDimensions; ++di) {
      if (r.z_prime[di]) {
        a.sum[di] += *r.z_prime[di];
        ++a.count[di];
        any = true;
      } else {
        ++a.removed[di];
      }
    }
    if (any) a.subjects.insert(r.subject_id);
  }

  std::vector<MosRecord> out;
  std::vector<std::string> empty;
  for (const auto& id : order) {
    const Acc& a = acc.at(id);
    if (std::any_of(a.count.begin(), a.count.end(), [](int c) { return c == 0; })) {
      empty.push_back(id);
      continue;
    }
    MosRecord m;
    m.asset_id = id;
    for (std::size_t di = 0; di < kNumDimensions; ++di)
      m.mos[di] = a.sum[di] / static_cast<double>(a.count[di]);
    m.n_valid_subjects = static_cast<int>(a.subjects.size());
    m.n_outliers_removed = a.removed;
    out.push_back(std::move(m));
  }
  if (!empty.empty()) {
    std::string list;
    for (const auto& id : empty) list += (list.empty() ? "" : ", ") + id;
    throw ValidationError("no valid ratings left for asset(s): " + list);
  }
  return out;
}

ProcessedStudy process_ratings(std::span<const RatingRecord> ratings,
                               std::span<const AssetRecord> manifest,
                               const ProcessOptions& options) {
  if (!manifest.empty()) {
    std::unordered_set<std::string> known;
    for (const auto& a : manifest) known.insert(a.asset_id);
    for (const auto& r : ratings)
      if (!known.contains(r.asset_id))
        throw ValidationError("rating by '" + r.subject_id + "' references unknown asset '" +
                              r.asset_id + "'");
  }

  ProcessedStudy study;
  study.report = detect_outliers(ratings, options.outliers);

  const std::unordered_set<std::string> rejected(study.report.rejected_subjects.begin(),
                                                 study.report.rejected_subjects.end());
  std::vector<std::string> valid;
  for (const auto& s : study.report.subjects)
    if (!rejected.contains(s.subject_id)) valid.push_back(s.subject_id);

  std::span<const FlaggedRating> excluded;
  if (options.drop_flagged_ratings) excluded = study.report.flagged;
  const auto rescaled = zscore_rescale(ratings, valid, excluded);
  auto mos = compute_mos(rescaled);

  if (manifest.empty()) {
    study.mos = std::move(mos);
    return study;
  }
  std::unordered_map<std::string, MosRecord> by_id;
  for (auto& m : mos) by_id.emplace(m.asset_id, std::move(m));
  std::string missing;
  for (const auto& a : manifest) {
    auto it = by_id.find(a.asset_id);
    if (it == by_id.end()) {
      missing += (missing.empty() ? "" : ", ") + a.asset_id;
      continue;
    }
    study.mos.push_back(std::move(it->second));
  }
  if (!missing.empty()) throw ValidationError("no valid ratings for asset(s): " + missing);
  return study;
}

}  // namespace t23dqa
