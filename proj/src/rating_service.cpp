#include "t23dqa/rating_service.hpp"

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "t23dqa/random.hpp"

namespace t23dqa {

using nlohmann::json;

std::vector<std::vector<std::string>> subject_subsets(std::span<const AssetRecord> manifest,
                                                      const std::string& subject_id,
                                                      std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(manifest.size());
  for (const auto& a : manifest) ids.push_back(a.asset_id);
  Rng rng(mix_seed(seed, fnv1a(subject_id)));
  shuffle(ids, rng);
  std::vector<std::vector<std::string>> out(kSubsetsPerSubject);
  const std::size_t base = ids.size() / kSubsetsPerSubject;
  const std::size_t rem = ids.size() % kSubsetsPerSubject;
  std::size_t pos = 0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    const std::size_t len = base + (k < rem ? 1 : 0);
    out[k].assign(ids.begin() + static_cast<std::ptrdiff_t>(pos),
                  ids.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return out;
}

bool on_rating_grid(double score) {
  if (!std::isfinite(score) || score < kMinRating || score > kMaxRating) return false;
  const double scaled = score * 10.0;
  return std::abs(scaled - std::round(scaled)) <= 1e-9;
}

namespace {

double snap(double score) { return std::round(score * 10.0) / 10.0; }

std::string grid_problem(const Triple& scores) {
  for (auto d : kDimensions) {
    const double v = scores[index_of(d)];
    if (!on_rating_grid(v)) {
      std::ostringstream msg;
      msg << dimension_name(d) << " score " << v
          << " is not a multiple of 0.1 in [0, 5]";
      return msg.str();
    }
  }
  return {};
}

}  // namespace

RatingStore::RatingStore(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream touch(path_, std::ios::app);
  if (!touch) throw Error("cannot open rating store " + path_.string());
}

void RatingStore::append(const StoredRating& e) {
  const json j = {{"subject_id", e.subject_id}, {"asset_id", e.asset_id},
                  {"q", e.scores[0]},           {"a", e.scores[1]},
                  {"c", e.scores[2]},           {"subset", e.subset},
                  {"revision", e.revision},     {"sequence", e.sequence}};
  const std::string line = j.dump() + "\n";
  std::lock_guard lock(mutex_);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.flush();
  if (!out) throw Error("failed to append to rating store " + path_.string());
}

StoreScan RatingStore::scan() const {
  std::lock_guard lock(mutex_);
  StoreScan scan;
  std::ifstream in(path_);
  if (!in) throw NotFoundError("cannot read rating store " + path_.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      StoredRating e;
      e.subject_id = j.at("subject_id").get<std::string>();
      e.asset_id = j.at("asset_id").get<std::string>();
      e.scores = {j.at("q").get<double>(), j.at("a").get<double>(), j.at("c").get<double>()};
      e.subset = j.value("subset", 0);
      e.revision = j.value("revision", false);
      e.sequence = j.value("sequence", std::uint64_t{0});
      if (e.subject_id.empty() || e.asset_id.empty())
        throw ValidationError("empty subject or asset id");
      if (const auto problem = grid_problem(e.scores); !problem.empty())
        throw ValidationError(problem);
      scan.entries.push_back(std::move(e));
    } catch (const std::exception& ex) {
      scan.problems.push_back("line " + std::to_string(n) + ": " + ex.what());
    }
  }
  return scan;
}

ExportSummary export_ratings(const RatingStore& store, std::ostream& out) {
  const StoreScan scan = store.scan();
  std::vector<RatingRecord> rows;
  std::map<std::pair<std::string, std::string>, std::size_t> slot;
  for (const auto& e : scan.entries) {
    RatingRecord r{e.subject_id, e.asset_id, e.scores, e.subset};
    auto [it, fresh] = slot.try_emplace({e.subject_id, e.asset_id}, rows.size());
    if (fresh) rows.push_back(std::move(r));
    else rows[it->second] = std::move(r);
  }
  write_ratings_csv(out, rows);
  for (const auto& p : scan.problems) spdlog::warn("rating store {}: skipped {}", store.path().string(), p);
  return {rows.size(), scan.problems};
}

RatingService::RatingService(std::vector<AssetRecord> manifest, RatingStore& store,
                             RatingServiceOptions options)
    : manifest_(std::move(manifest)), store_(store), options_(std::move(options)) {
  if (manifest_.empty()) throw ValidationError("rating service needs a non-empty manifest");
  for (std::size_t i = 0; i < manifest_.size(); ++i)
    if (!index_.emplace(manifest_[i].asset_id, i).second)
      throw ValidationError("duplicate asset id '" + manifest_[i].asset_id + "' in manifest");
  const StoreScan scan = store_.scan();
  for (const auto& p : scan.problems) spdlog::warn("rating store: skipped {}", p);
  for (const auto& e : scan.entries) {
    if (!index_.count(e.asset_id)) {
      spdlog::warn("rating store: asset '{}' is not in the manifest", e.asset_id);
      continue;
    }
    recovered_[e.subject_id][e.asset_id] = e.scores;
    next_sequence_ = std::max(next_sequence_, e.sequence + 1);
  }
}

void RatingService::authorize(const std::string& subject_id) const {
  if (subject_id.empty()) throw ForbiddenError("missing subject id");
  if (options_.roster && !options_.roster->count(subject_id))
    throw ForbiddenError("subject '" + subject_id + "' is not enrolled in this study");
}

RatingService::SubjectState& RatingService::state_for(const std::string& subject_id) {
  auto it = subjects_.find(subject_id);
  if (it != subjects_.end()) return it->second;
  SubjectState s;
  s.subsets = subject_subsets(manifest_, subject_id, options_.seed);
  if (auto r = recovered_.find(subject_id); r != recovered_.end()) s.rated = r->second;
  return subjects_.emplace(subject_id, std::move(s)).first->second;
}

Session RatingService::session_for(const std::string& subject_id, SubjectState& state) const {
  for (std::size_t k = 0; k < state.subsets.size(); ++k) {
    const auto& order = state.subsets[k];
    for (std::size_t i = 0; i < order.size(); ++i)
      if (!state.rated.count(order[i]))
        return {subject_id, static_cast<int>(k) + 1, order, static_cast<int>(i), false};
  }
  const auto& last = state.subsets.back();
  return {subject_id, kSubsetsPerSubject, last, static_cast<int>(last.size()), true};
}

Session RatingService::create_session(const std::string& subject_id) {
  authorize(subject_id);
  std::lock_guard lock(mutex_);
  Session s = session_for(subject_id, state_for(subject_id));
  if (s.completed)
    throw ConflictError("subject '" + subject_id + "' has completed all " +
                        std::to_string(kSubsetsPerSubject) + " subsets");
  return s;
}

const AssetRecord& RatingService::asset(const std::string& asset_id) const {
  auto it = index_.find(asset_id);
  if (it == index_.end()) throw NotFoundError("unknown asset '" + asset_id + "'");
  return manifest_[it->second];
}

SessionItem RatingService::current(const std::string& subject_id) {
  authorize(subject_id);
  std::lock_guard lock(mutex_);
  SubjectState& state = state_for(subject_id);
  const Session s = session_for(subject_id, state);
  if (s.completed) throw ConflictError("subject '" + subject_id + "' has nothing left to rate");
  return {&asset(s.order[static_cast<std::size_t>(s.cursor)]), s.cursor, std::nullopt};
}

SessionItem RatingService::previous(const std::string& subject_id) {
  authorize(subject_id);
  std::lock_guard lock(mutex_);
  SubjectState& state = state_for(subject_id);
  const Session s = session_for(subject_id, state);
  if (s.cursor == 0) throw NotFoundError("no previous item at the start of a subset");
  const auto& id = s.order[static_cast<std::size_t>(s.cursor - 1)];
  return {&asset(id), s.cursor - 1, state.rated.at(id)};
}

Session RatingService::submit(const std::string& subject_id, const std::string& asset_id,
                              const Triple& scores, bool overwrite) {
  authorize(subject_id);
  if (const auto problem = grid_problem(scores); !problem.empty())
    throw ValidationError("rating rejected: " + problem);
  asset(asset_id);  // NotFoundError for unknown ids

  std::lock_guard lock(mutex_);
  SubjectState& state = state_for(subject_id);
  const Session s = session_for(subject_id, state);
  const bool is_current =
      !s.completed && s.order[static_cast<std::size_t>(s.cursor)] == asset_id;
  bool revision = false;
  if (!is_current) {
    if (!state.rated.count(asset_id)) {
      throw ConflictError(
          s.completed ? "all subsets are complete"
                      : "out of order: the current item is '" +
                            s.order[static_cast<std::size_t>(s.cursor)] + "'");
    }
    if (!overwrite) throw ConflictError("'" + asset_id + "' is already rated (read-only)");
    if (!options_.allow_overwrite) throw ConflictError("rating revisions are disabled");
    revision = true;
  }

  int subset = 0;
  for (std::size_t k = 0; k < state.subsets.size(); ++k)
    if (std::find(state.subsets[k].begin(), state.subsets[k].end(), asset_id) !=
        state.subsets[k].end())
      subset = static_cast<int>(k) + 1;

  StoredRating entry{subject_id, asset_id, {snap(scores[0]), snap(scores[1]), snap(scores[2])},
                     subset, revision, next_sequence_};
  store_.append(entry);
  ++next_sequence_;
  state.rated[asset_id] = entry.scores;
  return session_for(subject_id, state);
}

namespace {

json session_json(const Session& s) {
  return {{"subject_id", s.subject_id},
          {"subset_index", s.subset_index},
          {"subsets", kSubsetsPerSubject},
          {"cursor", s.cursor},
          {"total", s.order.size()},
          {"completed", s.completed}};
}

json item_json(const std::string& subject, const SessionItem& item, std::size_t total) {
  json j = {{"subject_id", subject},
            {"asset_id", item.asset->asset_id},
            {"prompt", item.asset->prompt},
            {"video_url", "/media/" + item.asset->asset_id},
            {"position", item.position},
            {"total", total},
            {"read_only", item.rating.has_value()}};
  if (item.rating)
    j["rating"] = {{"q", (*item.rating)[0]}, {"a", (*item.rating)[1]}, {"c", (*item.rating)[2]}};
  else
    j["rating"] = nullptr;
  return j;
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", message}}.dump(), "application/json");
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ForbiddenError& e) {
      send_error(res, 403, e.what());
    } catch (const NotFoundError& e) {
      send_error(res, 404, e.what());
    } catch (const ConflictError& e) {
      send_error(res, 409, e.what());
    } catch (const ValidationError& e) {
      send_error(res, 422, e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, std::string("malformed request: ") + e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  };
}

std::string media_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".mp4") return "video/mp4";
  if (ext == ".webm") return "video/webm";
  if (ext == ".avi") return "video/x-msvideo";
  if (ext == ".mov") return "video/quicktime";
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  return "application/octet-stream";
}

}  // namespace

void mount_rating_api(httplib::Server& server, RatingService& service,
                      std::filesystem::path media_dir) {
  server.Get(R"(/session/([^/]+))", guarded([&service](const auto& req, auto& res) {
               const Session s = service.create_session(req.matches[1]);
               res.set_content(session_json(s).dump(), "application/json");
             }));
  server.Get(R"(/session/([^/]+)/current)", guarded([&service](const auto& req, auto& res) {
               const std::string subject = req.matches[1];
               const SessionItem item = service.current(subject);
               const Session s = service.create_session(subject);
               res.set_content(item_json(subject, item, s.order.size()).dump(),
                               "application/json");
             }));
  server.Get(R"(/session/([^/]+)/previous)", guarded([&service](const auto& req, auto& res) {
               const std::string subject = req.matches[1];
               const SessionItem item = service.previous(subject);
               res.set_content(item_json(subject, item, 0).dump(), "application/json");
             }));
  server.Post(R"(/session/([^/]+)/rating)", guarded([&service](const auto& req, auto& res) {
                const json body = json::parse(req.body);
                const Triple scores = {body.at("q").template get<double>(),
                                       body.at("a").template get<double>(),
                                       body.at("c").template get<double>()};
                const Session s = service.submit(req.matches[1],
                                                 body.at("asset_id").template get<std::string>(),
                                                 scores, body.value("overwrite", false));
                json out = session_json(s);
                out["accepted"] = true;
                res.set_content(out.dump(), "application/json");
              }));
  server.Get(R"(/media/([^/]+))",
             guarded([&service, media_dir](const auto& req, auto& res) {
               const AssetRecord& a = service.asset(req.matches[1]);
               auto path = a.video_path;
               if (path.is_relative()) path = media_dir / path;
               if (!std::filesystem::is_regular_file(path))
                 throw NotFoundError("no video file for '" + a.asset_id + "'");
               std::ifstream in(path, std::ios::binary);
               std::string bytes((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
               // httplib answers Range requests from the full body.
               res.set_content(std::move(bytes), media_type(path));
             }));
  server.Get("/export.csv", guarded([&service](const auto&, auto& res) {
               std::ostringstream csv;
               const ExportSummary summary = export_ratings(service.store(), csv);
               res.set_header("X-Skipped-Entries", std::to_string(summary.skipped.size()));
               res.set_content(csv.str(), "text/csv");
             }));
}

}  // namespace t23dqa
