#include "t23dqa/train.hpp"

#include <spdlog/spdlog.h>

#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "t23dqa/errors.hpp"
#include "t23dqa/random.hpp"
#include "text_util.hpp"

namespace t23dqa {

using nlohmann::json;

void validate(const TrainConfig& c) {
  if (!(c.adam.lr > 0.0)) throw ConfigError("lr must be > 0");
  if (c.adam.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (c.batch_size < 2) throw ConfigError("batch_size must be >= 2 (the losses need pairs)");
  if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (c.max_steps < 0) throw ConfigError("max_steps must be >= 0");
  validate(c.loss);
  validate(c.model);
}

json to_json(const TrainConfig& c) {
  return {{"optimizer", "adam"},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"eps", c.adam.eps},
          {"weight_decay", c.adam.weight_decay},
          {"grad_clip", nullptr},
          {"lr_schedule", nullptr},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"max_steps", c.max_steps},
          {"seed", c.seed},
          {"lambda", c.loss.lambda},
          {"rank_variant", std::string(rank_variant_name(c.loss.rank_variant))},
          {"model", to_json(c.model)}};
}

namespace {

std::string unquote(std::string_view v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front())
    return std::string(v.substr(1, v.size() - 2));
  return std::string(v);
}

// Drops a trailing comment that is not inside quotes.
std::string_view strip_comment(std::string_view line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote) {
      if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v, int line) {
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ParseError("'" + key + "' expects a number, got '" + v + "'", line);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError("'" + key + "' expects true or false, got '" + v + "'", line);
}

std::vector<int> parse_int_list(const std::string& key, std::string v, int line) {
  if (!v.empty() && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ','))
    out.push_back(parse_number<int>(key, std::string(trim(item)), line));
  return out;
}

}  // namespace

ConfigFile parse_config(std::istream& in) {
  ConfigFile cfg;
  TrainConfig& t = cfg.train;
  ModelConfig& m = t.model;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string_view body = trim(strip_comment(raw));
    if (body.empty()) continue;
    if (body.front() == '[')
      throw ParseError("sections are not supported; the config is a flat key/value list", line);
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line);
    const std::string key(trim(body.substr(0, eq)));
    const std::string v = unquote(trim(body.substr(eq + 1)));
    auto num = [&](auto& field) { field = parse_number<std::decay_t<decltype(field)>>(key, v, line); };
    auto identifier = [&](std::initializer_list<EncoderSpec*> specs) {
      for (EncoderSpec* s : specs) s->identifier = v;
    };

    if (key == "lr") num(t.adam.lr);
    else if (key == "beta1") num(t.adam.beta1);
    else if (key == "beta2") num(t.adam.beta2);
    else if (key == "eps") num(t.adam.eps);
    else if (key == "weight_decay") num(t.adam.weight_decay);
    else if (key == "batch_size") num(t.batch_size);
    else if (key == "epochs") num(t.epochs);
    else if (key == "max_steps") num(t.max_steps);
    else if (key == "seed") num(t.seed);
    else if (key == "lambda") num(t.loss.lambda);
    else if (key == "rank_variant") {
      try {
        t.loss.rank_variant = parse_rank_variant(v);
      } catch (const ConfigError& e) {
        throw ParseError(e.what(), line);
      }
    } else if (key == "input_resolution") {
      const auto wh = parse_int_list(key, v, line);
      if (wh.size() != 2) throw ParseError("input_resolution expects 'width,height'", line);
      m.preprocess.width = wh[0];
      m.preprocess.height = wh[1];
    } else if (key == "input_width") num(m.preprocess.width);
    else if (key == "input_height") num(m.preprocess.height);
    else if (key == "n_segments") num(m.n_segments);
    else if (key == "text_context") num(m.text_context);
    else if (key == "init_seed") num(m.init_seed);
    else if (key == "use_shape") m.branches.use_shape = parse_bool(key, v, line);
    else if (key == "use_texture") m.branches.use_texture = parse_bool(key, v, line);
    else if (key == "use_align") m.branches.use_align = parse_bool(key, v, line);
    else if (key == "ablation") {
      if (v.size() != 1) throw ParseError("ablation expects one of a-g", line);
      try {
        m.branches = ablation_switches(v[0]);
      } catch (const ConfigError& e) {
        throw ParseError(e.what(), line);
      }
    } else if (key == "shape_encoder") identifier({&m.shape});
    else if (key == "texture_encoder") identifier({&m.texture_front, &m.texture_back});
    else if (key == "align_encoder") identifier({&m.align_image, &m.align_text});
    else if (key == "shape_dim") num(m.shape.output_dim);
    else if (key == "texture_dim") {
      num(m.texture_front.output_dim);
      m.texture_back.output_dim = m.texture_front.output_dim;
    } else if (key == "align_dim") {
      num(m.align_image.output_dim);
      m.align_text.output_dim = m.align_image.output_dim;
    } else if (key == "align_fusion_dim") num(m.align_fusion_dim);
    else if (key == "head_hidden") m.head_hidden = parse_int_list(key, v, line);
    else if (key == "manifest") cfg.data.manifest = v;
    else if (key == "mos") cfg.data.mos = v;
    else if (key == "frames") cfg.data.frames = v;
    else if (key == "out_dir") cfg.data.out_dir = v;
    else throw ParseError("unknown key '" + key + "'", line);
  }
  return cfg;
}

ConfigFile load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open config " + path.string());
  ConfigFile cfg = parse_config(in);
  // Relative data paths are taken relative to the config file.
  const auto base = path.parent_path();
  for (auto* p : {&cfg.data.manifest, &cfg.data.mos, &cfg.data.frames, &cfg.data.out_dir})
    if (!p->empty() && p->is_relative()) *p = base / *p;
  return cfg;
}

void write_step_log(std::ostream& out, const StepLog& entry) {
  for (auto d : kDimensions) {
    const auto& dim = entry.loss.dims[index_of(d)];
    json j = {{"step", entry.step},        {"epoch", entry.epoch},
              {"dim", dimension_name(d)},  {"lin", dim.lin},
              {"rank", dim.rank},          {"total", dim.total}};
    if (dim.lin_skipped) j["lin_skipped"] = true;
    out << j.dump() << '\n';
  }
  out.flush();
}

namespace {

std::vector<const AssetRecord*> lookup_assets(std::span<const AssetRecord> manifest,
                                              std::span<const std::string> ids,
                                              const char* role) {
  std::unordered_map<std::string, const AssetRecord*> by_id;
  for (const auto& a : manifest) by_id.emplace(a.asset_id, &a);
  std::vector<const AssetRecord*> out;
  std::vector<std::string> missing;
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) missing.push_back(id);
    else out.push_back(it->second);
  }
  if (!missing.empty()) {
    std::string msg = std::string(role) + " assets missing from the manifest:";
    for (const auto& id : missing) msg += " " + id;
    throw ValidationError(msg);
  }
  return out;
}

std::optional<Evaluation> try_evaluate(const QualityModel& model,
                                       std::span<const AssetRecord* const> assets,
                                       const std::unordered_map<std::string, const MosRecord*>& mos,
                                       const ClipSource& frames) {
  if (assets.size() < 5) return std::nullopt;
  std::vector<AssetRecord> records;
  std::vector<MosRecord> labels;
  for (const AssetRecord* a : assets) {
    auto it = mos.find(a->asset_id);
    if (it == mos.end()) return std::nullopt;
    records.push_back(*a);
    labels.push_back(*it->second);
  }
  const auto scores = score_assets(model, records, frames);
  try {
    return evaluate(scores, labels);
  } catch (const ValidationError& e) {
    // e.g. a model that collapsed to a constant output
    spdlog::warn("evaluation skipped: {}", e.what());
    return std::nullopt;
  }
}

}  // namespace

std::vector<ScoreTriple> score_assets(const QualityModel& model,
                                      std::span<const AssetRecord> assets,
                                      const ClipSource& frames, int batch_size) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  std::vector<ScoreTriple> out;
  out.reserve(assets.size());
  std::vector<AssetInput> batch;
  auto flush = [&] {
    if (batch.empty()) return;
    const auto scores = model.score(batch);
    out.insert(out.end(), scores.begin(), scores.end());
    batch.clear();
  };
  for (const auto& a : assets) {
    const auto clip = frames.load(a);
    batch.push_back(make_input(a, *clip, SampleMode::kTest, 0, model.config()));
    if (static_cast<int>(batch.size()) == batch_size) flush();
  }
  flush();
  return out;
}

TrainResult train(const TrainConfig& config, const SplitSpec& split,
                  std::span<const AssetRecord> manifest, std::span<const MosRecord> mos,
                  const ClipSource& frames, const TrainHooks& hooks) {
  validate(config);
  const auto train_assets = lookup_assets(manifest, split.train_ids, "train");
  if (train_assets.size() < 2) throw ValidationError("training needs at least 2 assets");

  std::unordered_map<std::string, const MosRecord*> labels;
  for (const auto& m : mos) labels.emplace(m.asset_id, &m);
  std::vector<std::string> unlabelled;
  for (const AssetRecord* a : train_assets)
    if (!labels.count(a->asset_id)) unlabelled.push_back(a->asset_id);
  if (!unlabelled.empty()) {
    std::string msg = "train assets without MOS:";
    for (const auto& id : unlabelled) msg += " " + id;
    throw ValidationError(msg);
  }
  // Every clip must load and support the sampling rules before step 1.
  for (const AssetRecord* a : train_assets) {
    try {
      const auto clip = frames.load(*a);
      validate(*clip);
      sample_frames(*clip, SampleMode::kTest, config.model.n_segments);
      front_back_indices(clip->frame_count());
    } catch (const Error& e) {
      throw ValidationError("frames for '" + a->asset_id + "': " + e.what());
    }
  }

  TrainResult result{QualityModel(config.model), {}, 0, 0.0, std::nullopt, std::nullopt};
  QualityModel& model = result.model;
  auto params = model.trainable_parameters();
  nn::Adam adam(config.adam);

  std::vector<std::size_t> order(train_assets.size());
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  bool done = false;
  for (int epoch = 0; epoch < config.epochs && !done; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(config.seed, fnv1a("epoch"), static_cast<std::uint64_t>(epoch)));
    shuffle(order, rng);
    for (std::size_t start = 0; start + 1 < order.size() && !done; start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      if (end - start < 2) break;  // a single leftover asset cannot form a pair
      std::vector<AssetInput> batch;
      nn::Matrix y(static_cast<Eigen::Index>(end - start), 3);
      for (std::size_t k = start; k < end; ++k) {
        const AssetRecord& a = *train_assets[order[k]];
        const auto clip = frames.load(a);
        const std::uint64_t sample_seed =
            mix_seed(config.seed, fnv1a(a.asset_id), static_cast<std::uint64_t>(epoch));
        batch.push_back(make_input(a, *clip, SampleMode::kTrain, sample_seed, config.model));
        const Triple& t = labels.at(a.asset_id)->mos;
        for (int d = 0; d < 3; ++d) y(static_cast<Eigen::Index>(k - start), d) = t[d];
      }
      const nn::Matrix pred = model.forward(batch);
      nn::Matrix grad;
      const LossBreakdown loss = total_loss(pred, y, config.loss, &grad, true);
      model.backward(grad);
      adam.step(params);
      nn::zero_grad(params);

      StepLog entry{++result.steps, epoch, loss};
      result.final_loss = loss.total;
      if (hooks.step_log) write_step_log(*hooks.step_log, entry);
      if (hooks.on_step) hooks.on_step(entry);
      result.log.push_back(entry);
      if (config.max_steps > 0 && result.steps >= config.max_steps) done = true;
    }
  }
  if (result.steps == 0) throw ValidationError("no training step could be formed");

  result.train_eval = try_evaluate(model, train_assets, labels, frames);
  if (!split.test_ids.empty()) {
    const auto test_assets = lookup_assets(manifest, split.test_ids, "test");
    result.test_eval = try_evaluate(model, test_assets, labels, frames);
  }
  return result;
}

std::vector<AblationRun> ablation_grid(const TrainConfig& base, std::string_view grid,
                                       std::span<const AssetRecord> manifest,
                                       std::span<const MosRecord> mos,
                                       std::span<const SplitSpec> splits,
                                       const ClipSource& frames) {
  if (grid.empty()) throw ConfigError("ablation grid is empty");
  std::vector<AblationRun> runs;
  for (char c : grid) {
    AblationRun run;
    run.config = c;
    try {
      run.branches = ablation_switches(c);
      TrainConfig cfg = base;
      cfg.model.branches = run.branches;
      validate(cfg);
      const ScoringFunction scorer = [&](const SplitSpec& split) {
        TrainResult trained = train(cfg, split, manifest, mos, frames);
        std::vector<AssetRecord> test;
        for (const AssetRecord* a : lookup_assets(manifest, split.test_ids, "test"))
          test.push_back(*a);
        return score_assets(trained.model, test, frames);
      };
      run.result = run_benchmark(std::string("config_") + c, scorer, mos, splits);
    } catch (const std::exception& e) {
      run.error = e.what();
      spdlog::warn("ablation config {} failed: {}", c, e.what());
    }
    runs.push_back(std::move(run));
  }
  return runs;
}

json ablation_report(std::span<const AblationRun> runs) {
  json rows = json::array();
  for (const auto& r : runs) {
    json row = {{"config", std::string(1, r.config)},
                {"use_align", r.branches.use_align},
                {"use_texture", r.branches.use_texture},
                {"use_shape", r.branches.use_shape}};
    if (r.result) {
      row["status"] = "ok";
      row["result"] = to_json(*r.result);
    } else {
      row["status"] = "error";
      row["error"] = r.error;
    }
    rows.push_back(std::move(row));
  }
  return {{"ablation", std::move(rows)}};
}

}  // namespace t23dqa
