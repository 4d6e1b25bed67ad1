#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "t23dqa/errors.hpp"
#include "t23dqa/synthetic.hpp"
#include "t23dqa/train.hpp"

using namespace t23dqa;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  SyntheticStudy study;
  std::vector<MosRecord> mos;
  SplitSpec split;
};

Fixture fixture(int n_assets) {
  SyntheticStudyOptions so;
  so.n_assets = n_assets;
  so.n_frames = 8;
  so.width = 16;
  so.height = 16;
  so.seed = 12;
  Fixture f{make_synthetic_study(so), {}, {}};
  for (std::size_t i = 0; i < f.study.manifest.size(); ++i) {
    const auto& t = f.study.truth[i];
    f.mos.push_back({f.study.manifest[i].asset_id, {t[0] * 20, t[1] * 20, t[2] * 20}, 5, {}});
    (i < 8 ? f.split.train_ids : f.split.test_ids).push_back(f.study.manifest[i].asset_id);
  }
  return f;
}

TrainConfig small_train() {
  TrainConfig c;
  c.model.shape.output_dim = 8;
  c.model.texture_front.output_dim = 8;
  c.model.texture_back.output_dim = 8;
  c.model.align_image.output_dim = 8;
  c.model.align_text.output_dim = 8;
  c.model.align_fusion_dim = 8;
  c.model.head_hidden = {16, 8};
  c.model.n_segments = 4;
  c.model.preprocess.width = 16;
  c.model.preprocess.height = 16;
  c.epochs = 2;
  c.batch_size = 3;
  c.seed = 1;
  return c;
}

}  // namespace

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(validate(c));
  c.epochs = 0;
  EXPECT_THROW(validate(c), ConfigError);
  c = TrainConfig{};
  c.batch_size = 1;
  EXPECT_THROW(validate(c), ConfigError);
  c = TrainConfig{};
  c.adam.lr = 0.0;
  EXPECT_THROW(validate(c), ConfigError);
  c = TrainConfig{};
  c.max_steps = -1;
  EXPECT_THROW(validate(c), ConfigError);
  c = TrainConfig{};
  EXPECT_EQ(c.adam.lr, 1e-4);
  EXPECT_EQ(c.batch_size, 4);
  EXPECT_EQ(c.epochs, 50);
  EXPECT_EQ(c.loss.lambda, 0.3);
  EXPECT_TRUE(to_json(c).at("grad_clip").is_null());
}

TEST(TrainConfig, ParsesFlatKeyValues) {
  std::istringstream in(R"(# comment
lr = 0.001
batch_size = 8   # trailing comment
rank_variant = "literal"
input_resolution = 96, 64
ablation = e
head_hidden = [32, 16]
texture_dim = 24
manifest = "data/m.jsonl"
)");
  const ConfigFile cfg = parse_config(in);
  EXPECT_EQ(cfg.train.adam.lr, 0.001);
  EXPECT_EQ(cfg.train.batch_size, 8);
  EXPECT_EQ(cfg.train.loss.rank_variant, RankVariant::kLiteral);
  EXPECT_EQ(cfg.train.model.preprocess.width, 96);
  EXPECT_EQ(cfg.train.model.preprocess.height, 64);
  EXPECT_EQ(cfg.train.model.branches, ablation_switches('e'));
  EXPECT_EQ(cfg.train.model.head_hidden, (std::vector<int>{32, 16}));
  EXPECT_EQ(cfg.train.model.texture_back.output_dim, 24);
  EXPECT_EQ(cfg.data.manifest, fs::path("data/m.jsonl"));
}

TEST(TrainConfig, ErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      parse_config(in);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("lr = 1\nlearning_rate = 2\n"), 2u);
  EXPECT_EQ(line_of("\n\nepochs = ten\n"), 3u);
  EXPECT_EQ(line_of("[train]\n"), 1u);
  EXPECT_EQ(line_of("use_shape = maybe\n"), 1u);
  EXPECT_EQ(line_of("ablation = z\n"), 1u);
}

TEST(TrainConfig, RelativePathsFollowTheConfigFile) {
  const auto dir = fs::temp_directory_path() / "t23dqa_test_cfg";
  fs::create_directories(dir);
  std::ofstream(dir / "run.cfg") << "manifest = m.jsonl\nframes = /abs/frames\n";
  const auto cfg = load_config(dir / "run.cfg");
  EXPECT_EQ(cfg.data.manifest, dir / "m.jsonl");
  EXPECT_EQ(cfg.data.frames, fs::path("/abs/frames"));
  EXPECT_THROW(load_config(dir / "nope.cfg"), NotFoundError);
}

TEST(Train, DeterministicForAFixedSeed) {
  const auto f = fixture(13);
  SyntheticClipSource src(f.study.assets);
  const auto cfg = small_train();
  const auto a = train(cfg, f.split, f.study.manifest, f.mos, src);
  const auto b = train(cfg, f.split, f.study.manifest, f.mos, src);
  EXPECT_EQ(nn::checksum(a.model.parameters()), nn::checksum(b.model.parameters()));
  EXPECT_EQ(a.final_loss, b.final_loss);
  // 8 train assets in batches of 3: 3 + 3 + 2 per epoch
  EXPECT_EQ(a.steps, 6);
  ASSERT_TRUE(a.test_eval.has_value());
  EXPECT_EQ(a.test_eval->residuals.size(), 5u);
  auto other = cfg;
  other.seed = 2;
  EXPECT_NE(train(other, f.split, f.study.manifest, f.mos, src).final_loss, a.final_loss);
}

TEST(Train, MaxStepsAndLeftoverBatches) {
  auto f = fixture(12);
  SyntheticClipSource src(f.study.assets);
  auto cfg = small_train();
  cfg.max_steps = 4;
  cfg.epochs = 10;
  EXPECT_EQ(train(cfg, f.split, f.study.manifest, f.mos, src).steps, 4);
  // 7 assets in batches of 3 leave one asset, which is skipped
  f.split.train_ids.pop_back();
  cfg.max_steps = 0;
  cfg.epochs = 1;
  EXPECT_EQ(train(cfg, f.split, f.study.manifest, f.mos, src).steps, 2);
}

TEST(Train, StepLogHasOneLinePerDimension) {
  const auto f = fixture(12);
  SyntheticClipSource src(f.study.assets);
  std::ostringstream log;
  int calls = 0;
  TrainHooks hooks;
  hooks.step_log = &log;
  hooks.on_step = [&](const StepLog&) { ++calls; };
  const auto r = train(small_train(), f.split, f.study.manifest, f.mos, src, hooks);
  EXPECT_EQ(calls, r.steps);
  std::istringstream in(log.str());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("lin") && j.contains("rank") && j.contains("total"));
    ++lines;
  }
  EXPECT_EQ(lines, 3 * r.steps);
}

TEST(Train, RejectsMissingLabelsAndFramesBeforeStepping) {
  auto f = fixture(12);
  SyntheticClipSource src(f.study.assets);
  int calls = 0;
  TrainHooks hooks;
  hooks.on_step = [&](const StepLog&) { ++calls; };
  auto mos = f.mos;
  mos.erase(mos.begin() + 2);
  EXPECT_THROW(train(small_train(), f.split, f.study.manifest, mos, src, hooks), ValidationError);
  auto assets = f.study.assets;
  assets.erase(f.study.manifest[5].asset_id);
  SyntheticClipSource partial(assets);
  EXPECT_THROW(train(small_train(), f.split, f.study.manifest, f.mos, partial, hooks),
               ValidationError);
  auto bad = small_train();
  bad.model.n_segments = 9;  // more than the 8 frames per clip
  EXPECT_THROW(train(bad, f.split, f.study.manifest, f.mos, src, hooks), ValidationError);
  bad = small_train();
  bad.epochs = 0;
  EXPECT_THROW(train(bad, f.split, f.study.manifest, f.mos, src, hooks), ConfigError);
  EXPECT_EQ(calls, 0);
}

TEST(Train, ScoreAssetsIsBatchSizeIndependent) {
  const auto f = fixture(6);
  SyntheticClipSource src(f.study.assets);
  const QualityModel m(small_train().model);
  EXPECT_EQ(score_assets(m, f.study.manifest, src, 1), score_assets(m, f.study.manifest, src, 4));
  EXPECT_THROW(score_assets(m, f.study.manifest, src, 0), ConfigError);
}

TEST(Ablation, GridRecordsEveryConfiguration) {
  const auto f = fixture(25);
  SyntheticClipSource src(f.study.assets);
  std::vector<AssetRecord> manifest = f.study.manifest;
  const auto splits = make_splits(manifest, 1, 3);
  auto cfg = small_train();
  cfg.epochs = 1;
  // 'x' is not a configuration
  const auto runs = ablation_grid(cfg, "agx", manifest, f.mos, splits, src);
  ASSERT_EQ(runs.size(), 3u);
  EXPECT_EQ(runs[0].branches, ablation_switches('a'));
  EXPECT_TRUE(runs[1].error.empty()) << runs[1].error;
  EXPECT_FALSE(runs[2].error.empty());
  const auto report = ablation_report(runs);
  EXPECT_EQ(report.at("ablation").size(), 3u);
}
