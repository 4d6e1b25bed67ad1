#pragma once

// Static SVG figures for MOS distributions and benchmark summaries.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "t23dqa/benchmark.hpp"
#include "t23dqa/dataset.hpp"

namespace t23dqa {

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<int> counts;
};

// Equal-width bins over [min, max]; a single distinct value gives one bin.
Histogram histogram(std::span<const double> values, int bins);

struct BarGroup {
  std::string label;
  std::vector<double> values;  // one bar per series
};

std::string histogram_svg(const Histogram& h, const std::string& title);
std::string bar_chart_svg(std::span<const BarGroup> groups,
                          std::span<const std::string> series, const std::string& title);

// Mean MOS per group, one series per dimension.
std::vector<BarGroup> mos_by_generator(std::span<const MosRecord> mos,
                                       std::span<const AssetRecord> manifest);
std::vector<BarGroup> mos_by_prompt_length(std::span<const MosRecord> mos,
                                           std::span<const AssetRecord> manifest);

// Writes mos_<dim>.svg for each dimension and, with a manifest, the grouped
// bar charts. Returns the files written. Empty input throws ValidationError.
std::vector<std::filesystem::path> plot_mos(std::span<const MosRecord> mos,
                                            std::span<const AssetRecord> manifest,
                                            const std::filesystem::path& out_dir, int bins = 20);

// Mean SRCC per method and dimension.
std::vector<std::filesystem::path> plot_report(std::span<const BenchmarkResult> results,
                                               const std::filesystem::path& out_dir);

}  // namespace t23dqa
