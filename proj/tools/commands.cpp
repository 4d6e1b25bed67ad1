#include <algorithm>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "t23dqa/benchmark.hpp"
#include "t23dqa/dataset.hpp"
#include "t23dqa/model.hpp"
#include "t23dqa/plots.hpp"
#include "t23dqa/projection.hpp"
#include "t23dqa/rating_service.hpp"
#include "t23dqa/subjective.hpp"
#include "t23dqa/synthetic.hpp"
#include "t23dqa/train.hpp"
#include "t23dqa/video_io.hpp"

// After the Eigen-based headers: <resolv.h> defines a _res macro.
#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace t23dqa::cli {

namespace {

json correlations_json(const std::array<Correlations, kNumDimensions>& dims) {
  json j = json::object();
  for (auto d : kDimensions) {
    const auto& c = dims[index_of(d)];
    j[std::string(dimension_name(d))] = {{"srcc", c.srcc}, {"krcc", c.krcc}, {"plcc", c.plcc}};
  }
  return j;
}

json evaluation_json(const Evaluation& ev) {
  json j = {{"n_items", ev.residuals.size()}, {"metrics", correlations_json(ev.dims)}};
  for (auto d : kDimensions) {
    const auto i = index_of(d);
    j["logistic"][std::string(dimension_name(d))] = {{"beta", ev.logistic[i]},
                                                     {"converged", ev.fit_converged[i]},
                                                     {"plcc_raw", ev.plcc_raw[i]}};
  }
  return j;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<MosRecord> select_mos(const std::vector<MosRecord>& mos,
                                  const std::vector<std::string>& ids) {
  std::map<std::string, const MosRecord*> by_id;
  for (const auto& m : mos) by_id.emplace(m.asset_id, &m);
  std::vector<MosRecord> out;
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError("no MOS for asset '" + id + "'");
    out.push_back(*it->second);
  }
  return out;
}

std::vector<AssetRecord> select_assets(const std::vector<AssetRecord>& manifest,
                                       const std::vector<std::string>& ids) {
  std::map<std::string, const AssetRecord*> by_id;
  for (const auto& a : manifest) by_id.emplace(a.asset_id, &a);
  std::vector<AssetRecord> out;
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError("asset '" + id + "' is not in the manifest");
    out.push_back(*it->second);
  }
  return out;
}

SplitSpec whole_set_split(const std::vector<AssetRecord>& manifest) {
  SplitSpec s;
  for (const auto& a : manifest) s.train_ids.push_back(a.asset_id);
  return s;
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
  fs::path out;
  SyntheticStudyOptions opts;
  bool no_frames = false;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* c = app.add_subcommand("synth", "Generate a synthetic study (manifest, frames, ratings)");
  c->add_option("--out", a.out, "Output directory")->required();
  c->add_option("--assets", a.opts.n_assets, "Number of assets")->capture_default_str();
  c->add_option("--subjects", a.opts.n_subjects, "Number of simulated raters")->capture_default_str();
  c->add_option("--frames", a.opts.n_frames, "Frames per orbit clip")->capture_default_str();
  c->add_option("--width", a.opts.width)->capture_default_str();
  c->add_option("--height", a.opts.height)->capture_default_str();
  c->add_option("--noise", a.opts.rater_noise, "Per-rating noise std")->capture_default_str();
  c->add_option("--seed", a.opts.seed)->capture_default_str();
  c->add_flag("--no-frames", a.no_frames, "Skip rendering frame images");
}

int run_synth(const SynthArgs& a, std::ostream& out) {
  const SyntheticStudy study = make_synthetic_study(a.opts);
  fs::create_directories(a.out);
  std::vector<AssetRecord> manifest = study.manifest;
  if (!a.no_frames) manifest = write_study_frames(study, a.out / "frames");
  write_manifest(a.out / "manifest.jsonl", manifest);
  write_ratings_csv(a.out / "ratings.csv", study.ratings);
  std::vector<ScoreTriple> truth;
  for (std::size_t i = 0; i < manifest.size(); ++i)
    truth.push_back({manifest[i].asset_id, study.truth[i]});
  write_scores(a.out / "truth.jsonl", truth);
  out << "wrote " << manifest.size() << " assets and " << study.ratings.size()
      << " ratings to " << a.out.string() << '\n';
  return 0;
}

// --- process-ratings -------------------------------------------------------

struct ProcessArgs {
  fs::path ratings, manifest, out, report;
  bool keep_flagged = false;
};

void add_process(CLI::App& app, ProcessArgs& a) {
  auto* c = app.add_subcommand("process-ratings", "Outlier screening and MOS computation");
  c->add_option("--ratings", a.ratings, "Ratings CSV or JSONL")->required();
  c->add_option("--manifest", a.manifest, "Manifest JSONL (enables coverage checks)");
  c->add_option("--out", a.out, "MOS JSONL output")->required();
  c->add_option("--report", a.report, "Outlier report JSON");
  c->add_flag("--keep-flagged", a.keep_flagged,
              "Keep individually flagged ratings of accepted subjects");
}

int run_process(const ProcessArgs& a, std::ostream& out) {
  const auto ratings = load_ratings(a.ratings);
  std::vector<AssetRecord> manifest;
  if (!a.manifest.empty()) manifest = load_manifest(a.manifest);
  ProcessOptions opts;
  opts.drop_flagged_ratings = !a.keep_flagged;
  const ProcessedStudy study = process_ratings(ratings, manifest, opts);
  write_mos(a.out, study.mos);
  const auto& r = study.report;
  if (!a.report.empty()) {
    json flagged = json::array();
    for (const auto& f : r.flagged)
      flagged.push_back({{"subject_id", f.subject_id},
                         {"asset_id", f.asset_id},
                         {"dimension", dimension_name(f.dimension)},
                         {"score", f.score}});
    json subjects = json::array();
    for (const auto& s : r.subjects)
      subjects.push_back({{"subject_id", s.subject_id},
                          {"mean", s.mean},
                          {"std", s.std},
                          {"outlier_rate", s.outlier_rate}});
    write_json(a.report, {{"rejected_subjects", r.rejected_subjects},
                          {"rating_discard_fraction", r.rating_discard_fraction},
                          {"subject_reject_fraction", r.subject_reject_fraction},
                          {"drop_flagged_ratings", opts.drop_flagged_ratings},
                          {"flagged", flagged},
                          {"subjects", subjects}});
  }
  out << "MOS for " << study.mos.size() << " assets; rejected " << r.rejected_subjects.size()
      << " of " << r.subjects.size() << " subjects\n";
  return 0;
}

// --- make-splits -----------------------------------------------------------

struct SplitArgs {
  fs::path manifest, out;
  int splits = 10;
  std::uint64_t seed = 0;
  bool group = false;
};

void add_splits(CLI::App& app, SplitArgs& a) {
  auto* c = app.add_subcommand("make-splits", "Write seeded 4:1 train/test splits");
  c->add_option("--manifest", a.manifest)->required();
  c->add_option("--out", a.out, "Directory for split<i>.json")->required();
  c->add_option("--splits", a.splits)->capture_default_str();
  c->add_option("--seed", a.seed)->capture_default_str();
  c->add_flag("--group-by-prompt", a.group, "Keep every prompt on one side");
}

int run_splits(const SplitArgs& a, std::ostream& out) {
  const auto manifest = load_manifest(a.manifest);
  const auto splits = make_splits(manifest, a.splits, a.seed, a.group);
  for (const auto& s : splits)
    write_split(a.out / ("split" + std::to_string(s.index) + ".json"), s);
  out << "wrote " << splits.size() << " splits to " << a.out.string() << '\n';
  return 0;
}

// --- sample-frames ---------------------------------------------------------

struct SampleArgs {
  fs::path manifest, frames, out;
  int segments = 12;
  std::string mode = "test";
  std::uint64_t seed = 0;
};

void add_sample(CLI::App& app, SampleArgs& a) {
  auto* c = app.add_subcommand("sample-frames", "Export the frames the model sees per asset");
  c->add_option("--manifest", a.manifest)->required();
  c->add_option("--frames", a.frames, "Base directory of the clips")->required();
  c->add_option("--out", a.out)->required();
  c->add_option("--segments", a.segments)->capture_default_str();
  c->add_option("--mode", a.mode)->check(CLI::IsMember({"test", "train"}))->capture_default_str();
  c->add_option("--seed", a.seed, "Train-mode sampling seed")->capture_default_str();
}

int run_sample(const SampleArgs& a, std::ostream& out) {
  const auto manifest = load_manifest(a.manifest);
  const VideoClipSource source(a.frames);
  const SampleMode mode = a.mode == "train" ? SampleMode::kTrain : SampleMode::kTest;
  json index = json::object();
  for (const auto& asset : manifest) {
    const auto clip = source.load(asset);
    const FrameSample sample =
        sample_frames(*clip, mode, a.segments, mix_seed(a.seed, fnv1a(asset.asset_id)));
    const auto [front, back] = front_back_indices(clip->frame_count());
    const fs::path dir = a.out / asset.asset_id;
    fs::create_directories(dir);
    for (std::size_t i = 0; i < sample.indices.size(); ++i)
      write_png(dir / ("segment_" + std::to_string(i) + ".png"),
                clip->frames[static_cast<std::size_t>(sample.indices[i])]);
    write_png(dir / "front.png", clip->frames[static_cast<std::size_t>(front)]);
    write_png(dir / "back.png", clip->frames[static_cast<std::size_t>(back)]);
    index[asset.asset_id] = {{"frame_count", clip->frame_count()},
                             {"indices", sample.indices},
                             {"front", front},
                             {"back", back}};
  }
  write_json(a.out / "index.json", {{"mode", a.mode}, {"segments", a.segments}, {"assets", index}});
  out << "sampled frames for " << manifest.size() << " assets\n";
  return 0;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  fs::path config, split, manifest, mos, frames, out;
  std::optional<int> epochs, max_steps, batch_size;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::optional<int> width;
  std::optional<std::string> ablation;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* c = app.add_subcommand("train", "Train the quality model on one split");
  c->add_option("--config", a.config, "Flat key = value config file");
  c->add_option("--split", a.split, "Split JSON (default: every asset is a train asset)");
  c->add_option("--manifest", a.manifest);
  c->add_option("--mos", a.mos);
  c->add_option("--frames", a.frames, "Base directory of the clips");
  c->add_option("--out", a.out, "Output directory");
  c->add_option("--epochs", a.epochs);
  c->add_option("--max-steps", a.max_steps);
  c->add_option("--batch-size", a.batch_size);
  c->add_option("--lr", a.lr);
  c->add_option("--seed", a.seed);
  c->add_option("--resolution", a.width, "Square input resolution");
  c->add_option("--ablation", a.ablation, "Branch configuration a-g");
}

ConfigFile resolve_train_config(const TrainArgs& a) {
  ConfigFile cfg = a.config.empty() ? ConfigFile{} : load_config(a.config);
  if (!a.manifest.empty()) cfg.data.manifest = a.manifest;
  if (!a.mos.empty()) cfg.data.mos = a.mos;
  if (!a.frames.empty()) cfg.data.frames = a.frames;
  if (!a.out.empty()) cfg.data.out_dir = a.out;
  auto& t = cfg.train;
  if (a.epochs) t.epochs = *a.epochs;
  if (a.max_steps) t.max_steps = *a.max_steps;
  if (a.batch_size) t.batch_size = *a.batch_size;
  if (a.lr) t.adam.lr = *a.lr;
  if (a.seed) t.seed = *a.seed;
  if (a.width) t.model.preprocess.width = t.model.preprocess.height = *a.width;
  if (a.ablation) {
    if (a.ablation->size() != 1) throw ConfigError("--ablation expects one letter a-g");
    t.model.branches = ablation_switches((*a.ablation)[0]);
  }
  for (auto [path, name] : {std::pair{&cfg.data.manifest, "manifest"},
                            std::pair{&cfg.data.mos, "mos"}, std::pair{&cfg.data.frames, "frames"},
                            std::pair{&cfg.data.out_dir, "out"}})
    if (path->empty()) throw ConfigError(std::string("missing ") + name + " (flag or config key)");
  return cfg;
}

int run_train(const TrainArgs& a, std::ostream& out) {
  const ConfigFile cfg = resolve_train_config(a);
  validate(cfg.train);
  const auto manifest = load_manifest(cfg.data.manifest);
  const auto mos = load_mos(cfg.data.mos);
  const SplitSpec split = a.split.empty() ? whole_set_split(manifest) : load_split(a.split);
  const VideoClipSource video(cfg.data.frames);
  const CachedClipSource frames(video);

  fs::create_directories(cfg.data.out_dir);
  std::ofstream log(cfg.data.out_dir / "train_log.jsonl");
  TrainHooks hooks;
  hooks.step_log = &log;
  const TrainResult result = train(cfg.train, split, manifest, mos, frames, hooks);

  json summary = {{"steps", result.steps},
                  {"final_loss", result.final_loss},
                  {"split_index", split.index},
                  {"split_seed", split.seed},
                  {"train", to_json(cfg.train)}};
  if (result.train_eval) summary["train_eval"] = evaluation_json(*result.train_eval);
  if (result.test_eval) summary["test_eval"] = evaluation_json(*result.test_eval);
  save_checkpoint(cfg.data.out_dir / "checkpoint.json", result.model, summary);
  write_json(cfg.data.out_dir / "train_summary.json", summary);
  out << "trained " << result.steps << " steps, final loss " << result.final_loss << '\n';
  if (result.test_eval)
    out << "test SRCC q/a/c: " << result.test_eval->dims[0].srcc << " "
        << result.test_eval->dims[1].srcc << " " << result.test_eval->dims[2].srcc << '\n';
  return 0;
}

// --- evaluate --------------------------------------------------------------

struct EvalArgs {
  fs::path pred, mos, checkpoint, manifest, frames, split, out, scores_out;
  std::string subset = "test";
};

void add_evaluate(CLI::App& app, EvalArgs& a) {
  auto* c = app.add_subcommand("evaluate", "SRCC / KRCC / PLCC of predictions against MOS");
  c->add_option("--pred", a.pred, "Score JSONL (q, a, c per asset)");
  c->add_option("--checkpoint", a.checkpoint, "Score with a trained model instead");
  c->add_option("--mos", a.mos)->required();
  c->add_option("--manifest", a.manifest, "Needed with --checkpoint");
  c->add_option("--frames", a.frames, "Needed with --checkpoint");
  c->add_option("--split", a.split, "Restrict to one side of a split");
  c->add_option("--subset", a.subset)->check(CLI::IsMember({"test", "train"}))->capture_default_str();
  c->add_option("--out", a.out, "Evaluation JSON");
  c->add_option("--scores-out", a.scores_out, "Write the model's scores as JSONL");
}

int run_evaluate(const EvalArgs& a, std::ostream& out) {
  if (a.pred.empty() == a.checkpoint.empty())
    throw ConfigError("pass exactly one of --pred and --checkpoint");
  const auto all_mos = load_mos(a.mos);
  std::vector<MosRecord> labels = all_mos;
  std::optional<SplitSpec> split;
  if (!a.split.empty()) {
    split = load_split(a.split);
    labels = select_mos(all_mos, a.subset == "train" ? split->train_ids : split->test_ids);
  }
  std::vector<ScoreTriple> preds;
  if (!a.pred.empty()) {
    preds = load_scores(a.pred);
  } else {
    if (a.manifest.empty() || a.frames.empty())
      throw ConfigError("--checkpoint needs --manifest and --frames");
    const auto manifest = load_manifest(a.manifest);
    std::vector<std::string> ids;
    for (const auto& m : labels) ids.push_back(m.asset_id);
    const auto assets = select_assets(manifest, ids);
    const LoadedCheckpoint ckpt = load_checkpoint(a.checkpoint);
    const VideoClipSource video(a.frames);
    const CachedClipSource frames(video);
    preds = score_assets(ckpt.model, assets, frames);
  }
  if (!a.scores_out.empty()) write_scores(a.scores_out, preds);
  const Evaluation ev = evaluate(preds, labels);
  const json j = evaluation_json(ev);
  if (!a.out.empty()) write_json(a.out, j);
  out << j["metrics"].dump(2) << '\n';
  return 0;
}

// --- benchmark -------------------------------------------------------------

struct BenchArgs {
  fs::path methods, mos, manifest, split_dir, out;
  int splits = 10;
  std::uint64_t seed = 0;
  bool group = false;
};

void add_benchmark(CLI::App& app, BenchArgs& a) {
  auto* c = app.add_subcommand("benchmark", "Repeated-split evaluation of score files");
  c->add_option("--methods", a.methods, "Directory of <method>.jsonl score files")->required();
  c->add_option("--mos", a.mos)->required();
  c->add_option("--manifest", a.manifest, "Manifest used to draw splits");
  c->add_option("--split-dir", a.split_dir, "Use split*.json files instead of drawing");
  c->add_option("--splits", a.splits)->capture_default_str();
  c->add_option("--seed", a.seed)->capture_default_str();
  c->add_flag("--group-by-prompt", a.group);
  c->add_option("--out", a.out, "Report JSON")->required();
}

std::vector<SplitSpec> load_split_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json" && e.path().filename().string().rfind("split", 0) == 0)
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<SplitSpec> out;
  for (const auto& f : files) out.push_back(load_split(f));
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.index < y.index; });
  if (out.empty()) throw NotFoundError("no split*.json files in " + dir.string());
  return out;
}

int run_benchmark_cmd(const BenchArgs& a, std::ostream& out) {
  const auto mos = load_mos(a.mos);
  std::vector<SplitSpec> splits;
  if (!a.split_dir.empty()) {
    splits = load_split_dir(a.split_dir);
  } else {
    if (a.manifest.empty()) throw ConfigError("pass --manifest or --split-dir");
    splits = make_splits(load_manifest(a.manifest), a.splits, a.seed, a.group);
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.methods))
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw NotFoundError("no .jsonl score files in " + a.methods.string());
  std::vector<BenchmarkResult> results;
  for (const auto& f : files)
    results.push_back(run_benchmark(f.stem().string(), score_table(load_scores(f)), mos, splits));
  write_report(a.out, results,
               {{"n_splits", splits.size()}, {"seed", a.seed}, {"grouped_by_prompt", a.group}});
  for (const auto& r : results) {
    out << r.method << ":";
    for (auto d : kDimensions)
      out << ' ' << dimension_name(d) << " SRCC " << r.mean[index_of(d)].srcc;
    out << '\n';
  }
  return 0;
}

// --- significance ----------------------------------------------------------

struct SigArgs {
  fs::path report, out;
  double confidence = 0.95;
};

void add_significance(CLI::App& app, SigArgs& a) {
  auto* c = app.add_subcommand("significance", "Pairwise F-test verdicts between methods");
  c->add_option("--report", a.report)->required();
  c->add_option("--out", a.out, "Matrix CSV")->required();
  c->add_option("--confidence", a.confidence)->capture_default_str();
}

int run_significance(const SigArgs& a, std::ostream& out) {
  const auto results = load_report(a.report);
  const auto matrices = significance_matrices(results, a.confidence);
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  std::ofstream csv(a.out);
  if (!csv) throw Error("cannot write " + a.out.string());
  write_significance_csv(csv, results, matrices);
  out << "wrote " << results.size() << "x" << results.size() << " verdicts per dimension to "
      << a.out.string() << '\n';
  return 0;
}

// --- ablate ----------------------------------------------------------------

struct AblateArgs {
  TrainArgs train;
  std::string grid = "a,b,c,d,e,f,g";
  int splits = 10;
  std::uint64_t split_seed = 0;
  fs::path report;
};

void add_ablate(CLI::App& app, AblateArgs& a) {
  auto* c = app.add_subcommand("ablate", "Train and benchmark branch configurations a-g");
  c->add_option("--grid", a.grid, "Comma-separated configurations")->capture_default_str();
  c->add_option("--config", a.train.config);
  c->add_option("--manifest", a.train.manifest);
  c->add_option("--mos", a.train.mos);
  c->add_option("--frames", a.train.frames);
  c->add_option("--out", a.train.out, "Output directory");
  c->add_option("--epochs", a.train.epochs);
  c->add_option("--max-steps", a.train.max_steps);
  c->add_option("--seed", a.train.seed);
  c->add_option("--splits", a.splits)->capture_default_str();
  c->add_option("--split-seed", a.split_seed)->capture_default_str();
}

int run_ablate(const AblateArgs& a, std::ostream& out) {
  const ConfigFile cfg = resolve_train_config(a.train);
  std::string grid;
  for (char ch : a.grid)
    if (ch != ',' && ch != ' ') grid.push_back(ch);
  const auto manifest = load_manifest(cfg.data.manifest);
  const auto mos = load_mos(cfg.data.mos);
  const auto splits = make_splits(manifest, a.splits, a.split_seed);
  const VideoClipSource video(cfg.data.frames);
  const CachedClipSource frames(video);
  const auto runs = ablation_grid(cfg.train, grid, manifest, mos, splits, frames);
  json report = ablation_report(runs);
  report["base"] = to_json(cfg.train);
  write_json(cfg.data.out_dir / "ablation.json", report);
  for (const auto& r : runs) {
    out << r.config << ": ";
    if (r.result) {
      for (auto d : kDimensions)
        out << dimension_name(d) << " " << r.result->mean[index_of(d)].srcc << "  ";
    } else {
      out << "error: " << r.error;
    }
    out << '\n';
  }
  return 0;
}

// --- plot ------------------------------------------------------------------

struct PlotArgs {
  fs::path mos, manifest, report, out;
  int bins = 20;
};

void add_plot(CLI::App& app, PlotArgs& a) {
  auto* c = app.add_subcommand("plot", "SVG figures for MOS files and benchmark reports");
  c->add_option("--mos", a.mos);
  c->add_option("--manifest", a.manifest, "Enables per-generator and prompt-length charts");
  c->add_option("--report", a.report);
  c->add_option("--bins", a.bins)->capture_default_str();
  c->add_option("--out", a.out)->required();
}

int run_plot(const PlotArgs& a, std::ostream& out) {
  if (a.mos.empty() && a.report.empty()) throw ConfigError("pass --mos and/or --report");
  std::vector<fs::path> written;
  if (!a.mos.empty()) {
    std::vector<AssetRecord> manifest;
    if (!a.manifest.empty()) manifest = load_manifest(a.manifest);
    const auto files = plot_mos(load_mos(a.mos), manifest, a.out, a.bins);
    written.insert(written.end(), files.begin(), files.end());
  }
  if (!a.report.empty()) {
    const auto files = plot_report(load_report(a.report), a.out);
    written.insert(written.end(), files.begin(), files.end());
  }
  for (const auto& f : written) out << f.string() << '\n';
  return 0;
}

// --- serve -----------------------------------------------------------------

struct ServeArgs {
  fs::path manifest, store, media, roster;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::uint64_t seed = 0;
  bool no_overwrite = false;
};

void add_serve(CLI::App& app, ServeArgs& a) {
  auto* c = app.add_subcommand("serve", "Run the rating service");
  c->add_option("--manifest", a.manifest)->required();
  c->add_option("--store", a.store, "Append-only ratings JSONL")->required();
  c->add_option("--media", a.media, "Base directory of the videos")->required();
  c->add_option("--roster", a.roster, "File with one allowed subject id per line");
  c->add_option("--host", a.host)->capture_default_str();
  c->add_option("--port", a.port)->capture_default_str();
  c->add_option("--seed", a.seed, "Subset shuffle seed")->capture_default_str();
  c->add_flag("--no-overwrite", a.no_overwrite, "Disallow rating revisions");
}

int run_serve(const ServeArgs& a, std::ostream& out) {
  RatingServiceOptions opts;
  opts.seed = a.seed;
  opts.allow_overwrite = !a.no_overwrite;
  if (!a.roster.empty()) {
    std::ifstream in(a.roster);
    if (!in) throw NotFoundError("cannot open roster " + a.roster.string());
    std::set<std::string> ids;
    for (std::string line; std::getline(in, line);)
      if (!line.empty()) ids.insert(line);
    opts.roster = std::move(ids);
  }
  RatingStore store(a.store);
  RatingService service(load_manifest(a.manifest), store, opts);
  httplib::Server server;
  mount_rating_api(server, service, a.media);
  out << "listening on http://" << a.host << ':' << a.port << '\n' << std::flush;
  if (!server.listen(a.host, a.port)) throw Error("cannot listen on port " + std::to_string(a.port));
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quality assessment toolkit for text-to-3D assets", "t23dqa"};
  app.require_subcommand(1);
  SynthArgs synth;
  ProcessArgs process;
  SplitArgs splits;
  SampleArgs sample;
  TrainArgs train_args;
  EvalArgs eval;
  BenchArgs bench;
  SigArgs sig;
  AblateArgs ablate;
  PlotArgs plot;
  ServeArgs serve;
  add_synth(app, synth);
  add_process(app, process);
  add_splits(app, splits);
  add_sample(app, sample);
  add_train(app, train_args);
  add_evaluate(app, eval);
  add_benchmark(app, bench);
  add_significance(app, sig);
  add_ablate(app, ablate);
  add_plot(app, plot);
  add_serve(app, serve);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "synth") return run_synth(synth, out);
    if (cmd == "process-ratings") return run_process(process, out);
    if (cmd == "make-splits") return run_splits(splits, out);
    if (cmd == "sample-frames") return run_sample(sample, out);
    if (cmd == "train") return run_train(train_args, out);
    if (cmd == "evaluate") return run_evaluate(eval, out);
    if (cmd == "benchmark") return run_benchmark_cmd(bench, out);
    if (cmd == "significance") return run_significance(sig, out);
    if (cmd == "ablate") return run_ablate(ablate, out);
    if (cmd == "plot") return run_plot(plot, out);
    if (cmd == "serve") return run_serve(serve, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace t23dqa::cli
