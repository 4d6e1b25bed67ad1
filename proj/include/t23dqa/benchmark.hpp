#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "t23dqa/dataset.hpp"
#include "t23dqa/metrics.hpp"

namespace t23dqa {

struct Correlations {
  double srcc = 0.0;
  double krcc = 0.0;
  double plcc = 0.0;  // after the logistic map
};

struct ItemResidual {
  std::string asset_id;
  Triple residual{};  // mapped prediction - MOS
};

struct Evaluation {
  std::array<Correlations, kNumDimensions> dims{};
  std::array<double, kNumDimensions> plcc_raw{};
  std::array<LogisticParams, kNumDimensions> logistic{};
  std::array<bool, kNumDimensions> fit_converged{};
  std::vector<ItemResidual> residuals;  // label order
};

// Predictions are matched to labels by asset_id; every label needs exactly
// one prediction. Extra predictions are ignored. Needs at least 5 items.
Evaluation evaluate(std::span<const ScoreTriple> preds, std::span<const MosRecord> labels);

struct SplitResult {
  int index = 0;
  std::uint64_t seed = 0;
  std::array<Correlations, kNumDimensions> dims{};
};

struct BenchmarkResult {
  std::string method;
  std::array<Correlations, kNumDimensions> mean{};
  std::vector<SplitResult> splits;
  // Residuals of every (split, test item), concatenated in split order.
  std::vector<ItemResidual> residuals;
};

// Produces scores for (at least) the split's test assets.
using ScoringFunction = std::function<std::vector<ScoreTriple>(const SplitSpec&)>;

// Throws ValidationError listing the test ids a method fails to score.
BenchmarkResult run_benchmark(const std::string& method, const ScoringFunction& scorer,
                              std::span<const MosRecord> mos, std::span<const SplitSpec> splits);

// Convenience: a fixed score file.
ScoringFunction score_table(std::vector<ScoreTriple> scores);

nlohmann::json to_json(const BenchmarkResult& result);
BenchmarkResult benchmark_result_from_json(const nlohmann::json& j);

// Reports hold one or more methods evaluated on the same splits.
void write_report(const std::filesystem::path& path, std::span<const BenchmarkResult> results,
                  const nlohmann::json& extra = nlohmann::json::object());
std::vector<BenchmarkResult> load_report(const std::filesystem::path& path);

enum class Verdict { kIndistinguishable = 0, kSuperior = 1, kInferior = -1 };
std::string_view verdict_name(Verdict v);

struct ResidualSet {
  std::string method;
  std::vector<double> residuals;
};

// Variance-ratio F-test at the given confidence. Entry (r, c) says whether the
// row method is superior (smaller residual variance), inferior, or neither.
std::vector<std::vector<Verdict>> significance_matrix(std::span<const ResidualSet> methods,
                                                      double confidence = 0.95);

// One matrix per dimension from benchmark residuals (same items required).
std::array<std::vector<std::vector<Verdict>>, kNumDimensions> significance_matrices(
    std::span<const BenchmarkResult> results, double confidence = 0.95);

void write_significance_csv(std::ostream& out, std::span<const BenchmarkResult> results,
                            const std::array<std::vector<std::vector<Verdict>>, kNumDimensions>&
                                matrices);

}  // namespace t23dqa
