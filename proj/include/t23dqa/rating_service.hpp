#pragma once

// Backend of the subjective study.
//
// Each subject's manifest is shuffled with a seed derived from (subject, seed)
// and cut into three contiguous subsets; earlier subsets take the remainder.
// A subject works through the first subset that still has unrated items, in
// shuffled order. Ratings go to an append-only JSON-lines store; the cursor
// is recomputed from the store, so a restart resumes where the subject left.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "t23dqa/dataset.hpp"
#include "t23dqa/errors.hpp"

namespace httplib {
class Server;
}

namespace t23dqa {

class ForbiddenError : public Error {
 public:
  using Error::Error;
};

// Out-of-order submission, or every subset already completed.
class ConflictError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kSubsetsPerSubject = 3;

std::vector<std::vector<std::string>> subject_subsets(std::span<const AssetRecord> manifest,
                                                      const std::string& subject_id,
                                                      std::uint64_t seed);

// True when every score lies in [0, 5] on the 0.1 grid (to 1e-9 after scaling).
bool on_rating_grid(double score);

struct StoredRating {
  std::string subject_id;
  std::string asset_id;
  Triple scores{};
  int subset = 0;
  bool revision = false;  // overwrote an earlier rating
  std::uint64_t sequence = 0;
};

struct StoreScan {
  std::vector<StoredRating> entries;  // file order
  std::vector<std::string> problems;  // "line N: reason" for skipped lines
};

// Append-only JSON-lines file. Each append is one write of one full line
// followed by a flush, under a mutex.
class RatingStore {
 public:
  explicit RatingStore(std::filesystem::path path);
  void append(const StoredRating& entry);
  StoreScan scan() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
};

struct ExportSummary {
  std::size_t rows = 0;
  std::vector<std::string> skipped;
};

// CSV in the ratings schema; the latest entry per (subject, asset) wins.
ExportSummary export_ratings(const RatingStore& store, std::ostream& out);

struct Session {
  std::string subject_id;
  int subset_index = 1;  // 1-based
  std::vector<std::string> order;
  int cursor = 0;
  bool completed = false;
};

struct SessionItem {
  const AssetRecord* asset = nullptr;
  int position = 0;  // index in the subset order
  std::optional<Triple> rating;
};

struct RatingServiceOptions {
  std::uint64_t seed = 0;
  bool allow_overwrite = true;
  std::optional<std::set<std::string>> roster;  // when set, other subjects are forbidden
};

class RatingService {
 public:
  RatingService(std::vector<AssetRecord> manifest, RatingStore& store,
                RatingServiceOptions options = {});

  // The subject's first unfinished subset. ConflictError when all are done.
  Session create_session(const std::string& subject_id);
  SessionItem current(const std::string& subject_id);
  // The item before the cursor, with its stored rating. NotFoundError at 0.
  SessionItem previous(const std::string& subject_id);
  // Rates the current item, or (with overwrite) revises an earlier one.
  // ValidationError for off-grid scores, ConflictError for anything else out
  // of order, NotFoundError for unknown assets.
  Session submit(const std::string& subject_id, const std::string& asset_id,
                 const Triple& scores, bool overwrite = false);

  const AssetRecord& asset(const std::string& asset_id) const;
  std::span<const AssetRecord> manifest() const { return manifest_; }
  RatingStore& store() { return store_; }

 private:
  struct SubjectState {
    std::vector<std::vector<std::string>> subsets;
    std::map<std::string, Triple> rated;  // asset -> latest scores
  };
  void authorize(const std::string& subject_id) const;
  SubjectState& state_for(const std::string& subject_id);
  Session session_for(const std::string& subject_id, SubjectState& state) const;

  std::vector<AssetRecord> manifest_;
  std::unordered_map<std::string, std::size_t> index_;
  RatingStore& store_;
  RatingServiceOptions options_;
  std::uint64_t next_sequence_ = 0;
  std::mutex mutex_;
  std::unordered_map<std::string, SubjectState> subjects_;
  std::map<std::string, std::map<std::string, Triple>> recovered_;
};

// Routes the HTTP API onto `server`. Media files are asset.video_path resolved
// against media_dir.
void mount_rating_api(httplib::Server& server, RatingService& service,
                      std::filesystem::path media_dir);

}  // namespace t23dqa
