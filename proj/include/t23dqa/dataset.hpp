#pragma once

// Data model shared by every stage: assets, raw ratings, MOS labels,
// predictor outputs and train/test splits, plus their on-disk formats.
//
//   manifest  JSON lines: asset_id, prompt, generator, video_path,
//             frame_count, width, height
//   ratings   CSV (subject_id,asset_id,quality,authenticity,correspondence,
//             session) or JSON lines with the same keys
//   mos       JSON lines mirroring MosRecord
//   scores    JSON lines: asset_id, q, a, c

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace t23dqa {

enum class Dimension : int { kQuality = 0, kAuthenticity = 1, kCorrespondence = 2 };

inline constexpr std::array<Dimension, 3> kDimensions = {
    Dimension::kQuality, Dimension::kAuthenticity, Dimension::kCorrespondence};
inline constexpr std::size_t kNumDimensions = 3;

std::string_view dimension_name(Dimension d);
inline std::size_t index_of(Dimension d) { return static_cast<std::size_t>(d); }

// One value per dimension, ordered (quality, authenticity, correspondence).
using Triple = std::array<double, kNumDimensions>;

// The six generators of the released database. Manifests may use others.
inline constexpr std::array<std::string_view, 6> kKnownGenerators = {
    "dreamfusion", "latentnerf", "sjc", "textmesh", "magic3d", "prolificdreamer"};

inline constexpr double kMinRating = 0.0;
inline constexpr double kMaxRating = 5.0;

struct AssetRecord {
  std::string asset_id;
  std::string prompt;
  std::string generator;
  std::filesystem::path video_path;
  int frame_count = 0;
  int width = 0;
  int height = 0;

  bool operator==(const AssetRecord&) const = default;
};

struct RatingRecord {
  std::string subject_id;
  std::string asset_id;
  Triple scores{};
  int session = 0;

  bool operator==(const RatingRecord&) const = default;
};

struct MosRecord {
  std::string asset_id;
  Triple mos{};
  int n_valid_subjects = 0;
  std::array<int, kNumDimensions> n_outliers_removed{};

  bool operator==(const MosRecord&) const = default;
};

struct ScoreTriple {
  std::string asset_id;
  Triple scores{};  // (q, a, c)

  double q() const { return scores[0]; }
  double a() const { return scores[1]; }
  double c() const { return scores[2]; }
  bool operator==(const ScoreTriple&) const = default;
};

struct SplitSpec {
  std::uint64_t seed = 0;  // derived per-split seed
  int index = 0;
  bool grouped_by_prompt = false;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;

  bool operator==(const SplitSpec&) const = default;
};

// Throws ValidationError when a record breaks its invariants.
void validate(const AssetRecord& asset);
void validate(const RatingRecord& rating);
void validate(const MosRecord& mos);
void validate(const ScoreTriple& score);

// Manifest I/O. Duplicate ids raise ValidationError, bad lines ParseError
// carrying the 1-based line number.
std::vector<AssetRecord> parse_manifest(std::istream& in);
std::vector<AssetRecord> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    std::span<const AssetRecord> assets);

// Ratings I/O. The format is sniffed from the first non-blank character.
std::vector<RatingRecord> parse_ratings(std::istream& in);
std::vector<RatingRecord> load_ratings(const std::filesystem::path& path);
void write_ratings_csv(std::ostream& out, std::span<const RatingRecord> ratings);
void write_ratings_csv(const std::filesystem::path& path,
                       std::span<const RatingRecord> ratings);
inline constexpr std::string_view kRatingsCsvHeader =
    "subject_id,asset_id,quality,authenticity,correspondence,session";

std::vector<MosRecord> load_mos(const std::filesystem::path& path);
void write_mos(const std::filesystem::path& path, std::span<const MosRecord> mos);

std::vector<ScoreTriple> load_scores(const std::filesystem::path& path);
void write_scores(const std::filesystem::path& path,
                  std::span<const ScoreTriple> scores);

// Test-set size for a 4:1 split: nearest integer to n/5.
std::size_t test_size_for(std::size_t n_assets);

// Deterministic 4:1 splits. With group_by_prompt every prompt lands on one
// side only; the test side is then filled up to, never beyond, the target.
std::vector<SplitSpec> make_splits(std::span<const AssetRecord> manifest,
                                   int n_splits, std::uint64_t seed,
                                   bool group_by_prompt = false);

void write_split(const std::filesystem::path& path, const SplitSpec& split);
SplitSpec load_split(const std::filesystem::path& path);

}  // namespace t23dqa
