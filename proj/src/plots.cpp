#include "t23dqa/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <unordered_map>

#include "t23dqa/errors.hpp"
#include "t23dqa/encoders.hpp"
#include "text_util.hpp"

namespace t23dqa {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 400;
constexpr int kLeft = 60, kRight = 20, kTop = 40, kBottom = 60;
constexpr const char* kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3"};

std::string escape_xml(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

void header(std::ostringstream& svg, const std::string& title) {
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << escape_xml(title) << "</text>\n";
}

void axes(std::ostringstream& svg, double ymax) {
  const int x0 = kLeft, y0 = kHeight - kBottom, y1 = kTop;
  svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << kWidth - kRight << "\" y2=\""
      << y0 << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1
      << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = ymax * t / 4.0;
    const double y = y0 - (y0 - y1) * t / 4.0;
    svg << "<text x=\"" << x0 - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << num(v)
        << "</text>\n";
  }
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::vector<BarGroup> grouped_means(
    std::span<const MosRecord> mos, std::span<const AssetRecord> manifest,
    const std::function<std::string(const AssetRecord&)>& key) {
  std::unordered_map<std::string, const AssetRecord*> assets;
  for (const auto& a : manifest) assets.emplace(a.asset_id, &a);
  std::map<std::string, std::pair<Triple, int>> sums;
  for (const auto& m : mos) {
    auto it = assets.find(m.asset_id);
    if (it == assets.end())
      throw ValidationError("MOS record '" + m.asset_id + "' is not in the manifest");
    auto& [sum, count] = sums[key(*it->second)];
    for (std::size_t d = 0; d < kNumDimensions; ++d) sum[d] += m.mos[d];
    ++count;
  }
  std::vector<BarGroup> out;
  for (const auto& [label, sc] : sums) {
    BarGroup g{label, {}};
    for (std::size_t d = 0; d < kNumDimensions; ++d) g.values.push_back(sc.first[d] / sc.second);
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<std::string> dimension_series() {
  std::vector<std::string> s;
  for (auto d : kDimensions) s.emplace_back(dimension_name(d));
  return s;
}

}  // namespace

Histogram histogram(std::span<const double> values, int bins) {
  if (values.empty()) throw ValidationError("histogram of no values");
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  Histogram h{*lo, *hi, {}};
  if (h.hi == h.lo) {
    h.counts.assign(1, static_cast<int>(values.size()));
    return h;
  }
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    auto b = static_cast<int>((v - h.lo) / (h.hi - h.lo) * bins);
    ++h.counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))];
  }
  return h;
}

std::string histogram_svg(const Histogram& h, const std::string& title) {
  std::ostringstream svg;
  header(svg, title);
  const int peak = std::max(1, *std::max_element(h.counts.begin(), h.counts.end()));
  axes(svg, peak);
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const double bw = plot_w / static_cast<double>(h.counts.size());
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    const double bh = plot_h * h.counts[i] / peak;
    svg << "<rect x=\"" << kLeft + bw * static_cast<double>(i) << "\" y=\""
        << kHeight - kBottom - bh << "\" width=\"" << std::max(1.0, bw - 1.0) << "\" height=\""
        << bh << "\" fill=\"" << kPalette[0] << "\"/>\n";
  }
  svg << "<text x=\"" << kLeft << "\" y=\"" << kHeight - kBottom + 18 << "\">" << num(h.lo)
      << "</text>\n<text x=\"" << kWidth - kRight << "\" y=\"" << kHeight - kBottom + 18
      << "\" text-anchor=\"end\">" << num(h.hi) << "</text>\n</svg>\n";
  return svg.str();
}

std::string bar_chart_svg(std::span<const BarGroup> groups, std::span<const std::string> series,
                          const std::string& title) {
  std::ostringstream svg;
  header(svg, title);
  double peak = 0.0;
  for (const auto& g : groups)
    for (double v : g.values) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) peak = 1.0;
  axes(svg, peak);
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const double gw = plot_w / static_cast<double>(std::max<std::size_t>(1, groups.size()));
  const double bw = gw * 0.8 / static_cast<double>(std::max<std::size_t>(1, series.size()));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double gx = kLeft + gw * static_cast<double>(g) + gw * 0.1;
    for (std::size_t s = 0; s < groups[g].values.size(); ++s) {
      const double bh = plot_h * std::max(0.0, groups[g].values[s]) / peak;
      svg << "<rect x=\"" << gx + bw * static_cast<double>(s) << "\" y=\""
          << kHeight - kBottom - bh << "\" width=\"" << bw << "\" height=\"" << bh
          << "\" fill=\"" << kPalette[s % std::size(kPalette)] << "\"/>\n";
    }
    svg << "<text x=\"" << gx + gw * 0.4 << "\" y=\"" << kHeight - kBottom + 16
        << "\" text-anchor=\"middle\">" << escape_xml(groups[g].label) << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double ly = kHeight - 20;
    const double lx = kLeft + 130.0 * static_cast<double>(s);
    svg << "<rect x=\"" << lx << "\" y=\"" << ly - 10 << "\" width=\"10\" height=\"10\" fill=\""
        << kPalette[s % std::size(kPalette)] << "\"/><text x=\"" << lx + 14 << "\" y=\"" << ly
        << "\">" << escape_xml(series[s]) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<BarGroup> mos_by_generator(std::span<const MosRecord> mos,
                                       std::span<const AssetRecord> manifest) {
  return grouped_means(mos, manifest, [](const AssetRecord& a) { return a.generator; });
}

std::vector<BarGroup> mos_by_prompt_length(std::span<const MosRecord> mos,
                                           std::span<const AssetRecord> manifest) {
  return grouped_means(mos, manifest, [](const AssetRecord& a) {
    const std::size_t words = tokenize(a.prompt).size();
    if (words <= 3) return std::string("1-3 words");
    if (words <= 6) return std::string("4-6 words");
    if (words <= 9) return std::string("7-9 words");
    return std::string("10+ words");
  });
}

std::vector<std::filesystem::path> plot_mos(std::span<const MosRecord> mos,
                                            std::span<const AssetRecord> manifest,
                                            const std::filesystem::path& out_dir, int bins) {
  if (mos.empty()) throw ValidationError("no MOS records to plot");
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (auto d : kDimensions) {
    std::vector<double> v;
    for (const auto& m : mos) v.push_back(m.mos[index_of(d)]);
    const auto path = out_dir / ("mos_" + std::string(dimension_name(d)) + ".svg");
    write_file(path, histogram_svg(histogram(v, bins),
                                   "MOS distribution: " + std::string(dimension_name(d))));
    written.push_back(path);
  }
  if (!manifest.empty()) {
    const auto series = dimension_series();
    const auto gen = out_dir / "mos_by_generator.svg";
    write_file(gen, bar_chart_svg(mos_by_generator(mos, manifest), series, "Mean MOS by generator"));
    const auto len = out_dir / "mos_by_prompt_length.svg";
    write_file(len, bar_chart_svg(mos_by_prompt_length(mos, manifest), series,
                                  "Mean MOS by prompt length"));
    written.push_back(gen);
    written.push_back(len);
  }
  return written;
}

std::vector<std::filesystem::path> plot_report(std::span<const BenchmarkResult> results,
                                               const std::filesystem::path& out_dir) {
  if (results.empty()) throw ValidationError("no benchmark results to plot");
  std::filesystem::create_directories(out_dir);
  std::vector<BarGroup> groups;
  for (const auto& r : results) {
    BarGroup g{r.method, {}};
    for (const auto& c : r.mean) g.values.push_back(c.srcc);
    groups.push_back(std::move(g));
  }
  const auto path = out_dir / "benchmark_srcc.svg";
  write_file(path, bar_chart_svg(groups, dimension_series(), "Mean SRCC over splits"));
  return {path};
}

}  // namespace t23dqa
