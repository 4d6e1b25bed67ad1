#include "t23dqa/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "t23dqa/errors.hpp"
#include "t23dqa/random.hpp"
#include "text_util.hpp"

namespace t23dqa {

using nlohmann::json;

std::string_view dimension_name(Dimension d) {
  switch (d) {
    case Dimension::kQuality:
      return "quality";
    case Dimension::kAuthenticity:
      return "authenticity";
    case Dimension::kCorrespondence:
      return "correspondence";
  }
  return "unknown";
}

void validate(const AssetRecord& asset) {
  if (asset.asset_id.empty()) throw ValidationError("asset_id is empty");
  if (asset.prompt.empty())
    throw ValidationError("asset " + asset.asset_id + ": prompt is empty");
  if (asset.generator.empty())
    throw ValidationError("asset " + asset.asset_id + ": generator is empty");
  if (asset.frame_count < 2 || asset.frame_count % 2 != 0)
    throw ValidationError("asset " + asset.asset_id +
                          ": frame_count must be even and >= 2, got " +
                          std::to_string(asset.frame_count));
  if (asset.width <= 0 || asset.height <= 0)
    throw ValidationError("asset " + asset.asset_id + ": resolution must be positive");
}

void validate(const RatingRecord& rating) {
  if (rating.subject_id.empty()) throw ValidationError("subject_id is empty");
  if (rating.asset_id.empty()) throw ValidationError("asset_id is empty");
  for (Dimension d : kDimensions) {
    const double s = rating.scores[index_of(d)];
    if (!(s >= kMinRating && s <= kMaxRating))
      throw RangeError("rating (" + rating.subject_id + ", " + rating.asset_id +
                       "): " + std::string(dimension_name(d)) + " score " +
                       format_double(s) + " outside [0, 5]");
  }
}

void validate(const MosRecord& mos) {
  if (mos.asset_id.empty()) throw ValidationError("asset_id is empty");
  if (mos.n_valid_subjects < 1)
    throw ValidationError("asset " + mos.asset_id + ": no valid subjects");
  for (double v : mos.mos)
    if (!std::isfinite(v))
      throw ValidationError("asset " + mos.asset_id + ": non-finite MOS");
}

void validate(const ScoreTriple& score) {
  if (score.asset_id.empty()) throw ValidationError("asset_id is empty");
  for (double v : score.scores)
    if (!std::isfinite(v))
      throw ValidationError("asset " + score.asset_id + ": non-finite score");
}

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

template <typename T>
T required(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string("missing field '") + key + "'", line);
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(std::string("field '") + key + "' has the wrong type", line);
  }
}

// Calls fn(json, line_number) for every non-blank line.
template <typename Fn>
void for_each_json_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!obj.is_object()) throw ParseError("expected a JSON object", line_no);
    fn(obj, line_no);
  }
}

double parse_number(std::string_view field, std::size_t line) {
  const std::string_view s = trim(field);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ParseError("not a number: '" + std::string(s) + "'", line);
  return value;
}

int parse_int(std::string_view field, std::size_t line) {
  const std::string_view s = trim(field);
  int value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ParseError("not an integer: '" + std::string(s) + "'", line);
  return value;
}

void check_unique_ratings(const std::vector<RatingRecord>& ratings) {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : ratings)
    if (!seen.emplace(r.subject_id, r.asset_id).second)
      throw ValidationError("duplicate rating for (" + r.subject_id + ", " +
                            r.asset_id + ")");
}

std::vector<RatingRecord> parse_ratings_csv(std::istream& in) {
  std::vector<RatingRecord> out;
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> columns;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (columns.empty()) {
      for (std::size_t i = 0; i < fields.size(); ++i)
        columns[std::string(trim(fields[i]))] = i;
      for (const char* key : {"subject_id", "asset_id", "quality", "authenticity",
                              "correspondence", "session"})
        if (!columns.contains(key))
          throw ParseError(std::string("ratings header lacks column '") + key + "'",
                           line_no);
      continue;
    }
    auto field = [&](const char* key) -> std::string_view {
      const std::size_t i = columns.at(key);
      if (i >= fields.size())
        throw ParseError(std::string("missing column '") + key + "'", line_no);
      return fields[i];
    };
    RatingRecord r;
    r.subject_id = std::string(trim(field("subject_id")));
    r.asset_id = std::string(trim(field("asset_id")));
    r.scores = {parse_number(field("quality"), line_no),
                parse_number(field("authenticity"), line_no),
                parse_number(field("correspondence"), line_no)};
    r.session = parse_int(field("session"), line_no);
    try {
      validate(r);
    } catch (const RangeError& e) {
      throw RangeError("line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RatingRecord> parse_ratings_jsonl(std::istream& in) {
  std::vector<RatingRecord> out;
  for_each_json_line(in, [&](const json& obj, std::size_t line) {
    RatingRecord r;
    r.subject_id = required<std::string>(obj, "subject_id", line);
    r.asset_id = required<std::string>(obj, "asset_id", line);
    r.scores = {required<double>(obj, "quality", line),
                required<double>(obj, "authenticity", line),
                required<double>(obj, "correspondence", line)};
    r.session = required<int>(obj, "session", line);
    try {
      validate(r);
    } catch (const RangeError& e) {
      throw RangeError("line " + std::to_string(line) + ": " + e.what());
    }
    out.push_back(std::move(r));
  });
  return out;
}

}  // namespace

std::vector<AssetRecord> parse_manifest(std::istream& in) {
  std::vector<AssetRecord> out;
  std::unordered_set<std::string> ids;
  for_each_json_line(in, [&](const json& obj, std::size_t line) {
    AssetRecord a;
    a.asset_id = required<std::string>(obj, "asset_id", line);
    a.prompt = required<std::string>(obj, "prompt", line);
    a.generator = required<std::string>(obj, "generator", line);
    a.video_path = required<std::string>(obj, "video_path", line);
    a.frame_count = required<int>(obj, "frame_count", line);
    a.width = required<int>(obj, "width", line);
    a.height = required<int>(obj, "height", line);
    try {
      validate(a);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line);
    }
    if (!ids.insert(a.asset_id).second)
      throw ValidationError("line " + std::to_string(line) + ": duplicate asset_id '" +
                            a.asset_id + "'");
    out.push_back(std::move(a));
  });
  return out;
}

std::vector<AssetRecord> load_manifest(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_manifest(in);
}

void write_manifest(const std::filesystem::path& path,
                    std::span<const AssetRecord> assets) {
  auto out = open_output(path);
  for (const auto& a : assets) {
    json obj = {{"asset_id", a.asset_id},
                {"prompt", a.prompt},
                {"generator", a.generator},
                {"video_path", a.video_path.string()},
                {"frame_count", a.frame_count},
                {"width", a.width},
                {"height", a.height}};
    out << obj.dump() << '\n';
  }
}

std::vector<RatingRecord> parse_ratings(std::istream& in) {
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  std::istringstream body(text);
  std::vector<RatingRecord> out =
      text[first] == '{' ? parse_ratings_jsonl(body) : parse_ratings_csv(body);
  check_unique_ratings(out);
  return out;
}

std::vector<RatingRecord> load_ratings(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_ratings(in);
}

void write_ratings_csv(std::ostream& out, std::span<const RatingRecord> ratings) {
  out << kRatingsCsvHeader << '\n';
  for (const auto& r : ratings) {
    out << csv_escape(r.subject_id) << ',' << csv_escape(r.asset_id) << ','
        << format_double(r.scores[0]) << ',' << format_double(r.scores[1]) << ','
        << format_double(r.scores[2]) << ',' << r.session << '\n';
  }
}

void write_ratings_csv(const std::filesystem::path& path,
                       std::span<const RatingRecord> ratings) {
  auto out = open_output(path);
  write_ratings_csv(out, ratings);
}

std::vector<MosRecord> load_mos(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<MosRecord> out;
  for_each_json_line(in, [&](const json& obj, std::size_t line) {
    MosRecord m;
    m.asset_id = required<std::string>(obj, "asset_id", line);
    const auto mos = required<std::vector<double>>(obj, "mos", line);
    if (mos.size() != kNumDimensions) throw ParseError("'mos' needs 3 values", line);
    std::copy(mos.begin(), mos.end(), m.mos.begin());
    m.n_valid_subjects = required<int>(obj, "n_valid_subjects", line);
    const auto removed = obj.value("n_outliers_removed", std::vector<int>(3, 0));
    if (removed.size() != kNumDimensions)
      throw ParseError("'n_outliers_removed' needs 3 values", line);
    std::copy(removed.begin(), removed.end(), m.n_outliers_removed.begin());
    try {
      validate(m);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line);
    }
    out.push_back(std::move(m));
  });
  return out;
}

void write_mos(const std::filesystem::path& path, std::span<const MosRecord> mos) {
  auto out = open_output(path);
  for (const auto& m : mos) {
    json obj = {{"asset_id", m.asset_id},
                {"mos", m.mos},
                {"n_valid_subjects", m.n_valid_subjects},
                {"n_outliers_removed", m.n_outliers_removed}};
    out << obj.dump() << '\n';
  }
}

std::vector<ScoreTriple> load_scores(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<ScoreTriple> out;
  for_each_json_line(in, [&](const json& obj, std::size_t line) {
    ScoreTriple s;
    s.asset_id = required<std::string>(obj, "asset_id", line);
    s.scores = {required<double>(obj, "q", line), required<double>(obj, "a", line),
                required<double>(obj, "c", line)};
    try {
      validate(s);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line);
    }
    out.push_back(std::move(s));
  });
  return out;
}

void write_scores(const std::filesystem::path& path,
                  std::span<const ScoreTriple> scores) {
  auto out = open_output(path);
  for (const auto& s : scores) {
    json obj = {{"asset_id", s.asset_id}, {"q", s.q()}, {"a", s.a()}, {"c", s.c()}};
    out << obj.dump() << '\n';
  }
}

std::size_t test_size_for(std::size_t n_assets) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n_assets) / 5.0));
}

std::vector<SplitSpec> make_splits(std::span<const AssetRecord> manifest, int n_splits,
                                   std::uint64_t seed, bool group_by_prompt) {
  if (n_splits < 1) throw ConfigError("n_splits must be >= 1");
  if (manifest.size() < 5)
    throw ValidationError("manifest has " + std::to_string(manifest.size()) +
                          " assets; at least 5 are needed for a 4:1 split");
  const std::size_t target = test_size_for(manifest.size());

  // Groups in first-appearance order; singleton groups when not grouping.
  std::vector<std::vector<std::size_t>> groups;
  if (group_by_prompt) {
    std::unordered_map<std::string, std::size_t> group_of;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
      auto [it, inserted] = group_of.emplace(manifest[i].prompt, groups.size());
      if (inserted) groups.emplace_back();
      groups[it->second].push_back(i);
    }
  } else {
    groups.reserve(manifest.size());
    for (std::size_t i = 0; i < manifest.size(); ++i) groups.push_back({i});
  }

  std::vector<SplitSpec> splits;
  splits.reserve(static_cast<std::size_t>(n_splits));
  for (int s = 0; s < n_splits; ++s) {
    SplitSpec split;
    split.index = s;
    split.seed = mix_seed(seed, static_cast<std::uint64_t>(s));
    split.grouped_by_prompt = group_by_prompt;
    Rng rng(split.seed);

    std::vector<std::size_t> order(groups.size());
    for (std::size_t g = 0; g < order.size(); ++g) order[g] = g;
    shuffle(order, rng);

    std::vector<bool> in_test(manifest.size(), false);
    std::size_t n_test = 0;
    for (std::size_t g : order) {
      if (n_test == target) break;
      if (n_test + groups[g].size() > target) continue;
      for (std::size_t i : groups[g]) in_test[i] = true;
      n_test += groups[g].size();
    }
    if (n_test == 0 || n_test == manifest.size())
      throw ValidationError("cannot form a non-trivial 4:1 split (one prompt group "
                            "is larger than the test target)");
    for (std::size_t i = 0; i < manifest.size(); ++i)
      (in_test[i] ? split.test_ids : split.train_ids).push_back(manifest[i].asset_id);
    splits.push_back(std::move(split));
  }
  return splits;
}

void write_split(const std::filesystem::path& path, const SplitSpec& split) {
  auto out = open_output(path);
  json obj = {{"seed", split.seed},
              {"index", split.index},
              {"grouped_by_prompt", split.grouped_by_prompt},
              {"ratio", {4, 1}},
              {"train_ids", split.train_ids},
              {"test_ids", split.test_ids}};
  out << obj.dump(2) << '\n';
}

SplitSpec load_split(const std::filesystem::path& path) {
  auto in = open_input(path);
  json obj;
  try {
    obj = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid split file: ") + e.what(), 0);
  }
  SplitSpec split;
  split.seed = required<std::uint64_t>(obj, "seed", 0);
  split.index = obj.value("index", 0);
  split.grouped_by_prompt = obj.value("grouped_by_prompt", false);
  split.train_ids = required<std::vector<std::string>>(obj, "train_ids", 0);
  split.test_ids = required<std::vector<std::string>>(obj, "test_ids", 0);
  std::unordered_set<std::string> train(split.train_ids.begin(), split.train_ids.end());
  for (const auto& id : split.test_ids)
    if (train.contains(id))
      throw ValidationError("split: asset '" + id + "' is in both train and test");
  return split;
}

}  // namespace t23dqa
