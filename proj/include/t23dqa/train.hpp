#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "t23dqa/benchmark.hpp"
#include "t23dqa/dataset.hpp"
#include "t23dqa/losses.hpp"
#include "t23dqa/model.hpp"
#include "t23dqa/nn.hpp"
#include "t23dqa/projection.hpp"

namespace t23dqa {

struct TrainConfig {
  nn::AdamOptions adam;  // lr 1e-4, no weight decay
  int batch_size = 4;
  int epochs = 50;
  int max_steps = 0;  // 0: run every epoch
  std::uint64_t seed = 0;
  LossConfig loss;
  ModelConfig model;  // input resolution lives in model.preprocess

  bool operator==(const TrainConfig&) const = default;
};

// lr > 0, batch_size >= 2, epochs >= 1, max_steps >= 0, valid loss and model.
void validate(const TrainConfig& config);

nlohmann::json to_json(const TrainConfig& config);

// Flat `key = value` documents (TOML-style comments and quoting accepted).
// Unknown keys and malformed values throw ParseError with the line number.
struct DataPaths {
  std::filesystem::path manifest;
  std::filesystem::path mos;
  std::filesystem::path frames;  // base directory for relative video paths
  std::filesystem::path out_dir;
};

struct ConfigFile {
  TrainConfig train;
  DataPaths data;
};

ConfigFile parse_config(std::istream& in);
ConfigFile load_config(const std::filesystem::path& path);

struct StepLog {
  int step = 0;
  int epoch = 0;
  LossBreakdown loss;
};

void write_step_log(std::ostream& out, const StepLog& entry);

struct TrainResult {
  QualityModel model;
  std::vector<StepLog> log;
  int steps = 0;
  double final_loss = 0.0;
  std::optional<Evaluation> train_eval;
  std::optional<Evaluation> test_eval;
};

struct TrainHooks {
  std::ostream* step_log = nullptr;  // JSON lines {step, epoch, dim, lin, rank, total}
  std::function<void(const StepLog&)> on_step;
};

// Trains on split.train_ids. Missing MOS or frames for any train asset raise
// ValidationError before the first step. When the split has test ids with
// labels, the result carries a test-set evaluation of the final weights.
TrainResult train(const TrainConfig& config, const SplitSpec& split,
                  std::span<const AssetRecord> manifest, std::span<const MosRecord> mos,
                  const ClipSource& frames, const TrainHooks& hooks = {});

// Scores assets with deterministic test-mode sampling.
std::vector<ScoreTriple> score_assets(const QualityModel& model,
                                      std::span<const AssetRecord> assets,
                                      const ClipSource& frames, int batch_size = 8);

struct AblationRun {
  char config = 'g';
  BranchSwitches branches;
  std::optional<BenchmarkResult> result;
  std::string error;  // set when the run failed
};

// Trains and evaluates every configuration on the same splits and seeds.
// A failing configuration is recorded and the grid moves on.
std::vector<AblationRun> ablation_grid(const TrainConfig& base, std::string_view grid,
                                       std::span<const AssetRecord> manifest,
                                       std::span<const MosRecord> mos,
                                       std::span<const SplitSpec> splits,
                                       const ClipSource& frames);

nlohmann::json ablation_report(std::span<const AblationRun> runs);

}  // namespace t23dqa
