#include "t23dqa/benchmark.hpp"

#include <boost/math/distributions/fisher_f.hpp>

#include <fstream>
#include <numeric>
#include <unordered_map>

#include "t23dqa/errors.hpp"
#include "text_util.hpp"

namespace t23dqa {

using nlohmann::json;

Evaluation evaluate(std::span<const ScoreTriple> preds, std::span<const MosRecord> labels) {
  if (labels.size() < 5) throw ValidationError("evaluation needs at least 5 items");
  std::unordered_map<std::string, const ScoreTriple*> by_id;
  for (const auto& p : preds)
    if (!by_id.emplace(p.asset_id, &p).second)
      throw ValidationError("duplicate prediction for asset '" + p.asset_id + "'");
  std::vector<std::string> missing;
  for (const auto& l : labels)
    if (!by_id.count(l.asset_id)) missing.push_back(l.asset_id);
  if (!missing.empty()) {
    std::string msg = "no prediction for " + std::to_string(missing.size()) + " asset(s):";
    for (const auto& id : missing) msg += " " + id;
    throw ValidationError(msg);
  }

  Evaluation ev;
  ev.residuals.resize(labels.size());
  std::vector<double> p(labels.size()), y(labels.size());
  for (std::size_t d = 0; d < kNumDimensions; ++d) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      p[i] = by_id.at(labels[i].asset_id)->scores[d];
      y[i] = labels[i].mos[d];
    }
    auto& c = ev.dims[d];
    c.srcc = srcc(p, y);
    c.krcc = krcc(p, y);
    ev.plcc_raw[d] = plcc(p, y);
    const LogisticFit fit = fit_logistic(p, y);
    ev.logistic[d] = fit.beta;
    ev.fit_converged[d] = fit.converged;
    // A perfect linear predictor can leave a mapped vector with zero spread
    // only if the labels are constant, which plcc already rejects.
    c.plcc = plcc(fit.mapped, y);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      ev.residuals[i].asset_id = labels[i].asset_id;
      ev.residuals[i].residual[d] = fit.mapped[i] - y[i];
    }
  }
  return ev;
}

BenchmarkResult run_benchmark(const std::string& method, const ScoringFunction& scorer,
                              std::span<const MosRecord> mos, std::span<const SplitSpec> splits) {
  if (splits.empty()) throw ValidationError("benchmark needs at least one split");
  std::unordered_map<std::string, const MosRecord*> labels;
  for (const auto& m : mos) labels.emplace(m.asset_id, &m);

  BenchmarkResult result;
  result.method = method;
  for (const auto& split : splits) {
    std::vector<MosRecord> test;
    test.reserve(split.test_ids.size());
    for (const auto& id : split.test_ids) {
      auto it = labels.find(id);
      if (it == labels.end())
        throw ValidationError("split " + std::to_string(split.index) + ": no MOS for '" + id +
                              "'");
      test.push_back(*it->second);
    }
    const std::vector<ScoreTriple> scores = scorer(split);
    Evaluation ev;
    try {
      ev = evaluate(scores, test);
    } catch (const ValidationError& e) {
      throw ValidationError("method '" + method + "', split " + std::to_string(split.index) +
                            ": " + e.what());
    }
    result.splits.push_back({split.index, split.seed, ev.dims});
    result.residuals.insert(result.residuals.end(), ev.residuals.begin(), ev.residuals.end());
  }
  const double n = static_cast<double>(result.splits.size());
  for (std::size_t d = 0; d < kNumDimensions; ++d) {
    auto& m = result.mean[d];
    for (const auto& s : result.splits) {
      m.srcc += s.dims[d].srcc;
      m.krcc += s.dims[d].krcc;
      m.plcc += s.dims[d].plcc;
    }
    m.srcc /= n;
    m.krcc /= n;
    m.plcc /= n;
  }
  return result;
}

ScoringFunction score_table(std::vector<ScoreTriple> scores) {
  return [scores = std::move(scores)](const SplitSpec&) { return scores; };
}

namespace {

json dims_to_json(const std::array<Correlations, kNumDimensions>& dims) {
  json j = json::object();
  for (auto d : kDimensions) {
    const auto& c = dims[index_of(d)];
    j[std::string(dimension_name(d))] = {{"srcc", c.srcc}, {"krcc", c.krcc}, {"plcc", c.plcc}};
  }
  return j;
}

std::array<Correlations, kNumDimensions> dims_from_json(const json& j) {
  std::array<Correlations, kNumDimensions> out{};
  for (auto d : kDimensions) {
    const json& c = j.at(std::string(dimension_name(d)));
    out[index_of(d)] = {c.at("srcc").get<double>(), c.at("krcc").get<double>(),
                        c.at("plcc").get<double>()};
  }
  return out;
}

}  // namespace

json to_json(const BenchmarkResult& r) {
  json splits = json::array();
  for (const auto& s : r.splits)
    splits.push_back({{"index", s.index}, {"seed", s.seed}, {"metrics", dims_to_json(s.dims)}});
  json residuals = json::array();
  for (const auto& e : r.residuals)
    residuals.push_back({{"asset_id", e.asset_id}, {"residual", e.residual}});
  return {{"method", r.method},
          {"mean", dims_to_json(r.mean)},
          {"splits", std::move(splits)},
          {"residual_pooling", "per test item, concatenated over splits"},
          {"residuals", std::move(residuals)}};
}

BenchmarkResult benchmark_result_from_json(const json& j) {
  try {
    BenchmarkResult r;
    r.method = j.at("method").get<std::string>();
    r.mean = dims_from_json(j.at("mean"));
    for (const json& s : j.at("splits"))
      r.splits.push_back({s.at("index").get<int>(), s.at("seed").get<std::uint64_t>(),
                          dims_from_json(s.at("metrics"))});
    for (const json& e : j.at("residuals"))
      r.residuals.push_back({e.at("asset_id").get<std::string>(), e.at("residual").get<Triple>()});
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed benchmark result: ") + e.what(), 0);
  }
}

void write_report(const std::filesystem::path& path, std::span<const BenchmarkResult> results,
                  const json& extra) {
  json methods = json::array();
  for (const auto& r : results) methods.push_back(to_json(r));
  json doc = extra;
  doc["methods"] = std::move(methods);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write report " + path.string());
  out << doc.dump(2) << '\n';
}

std::vector<BenchmarkResult> load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open report " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("report is not valid JSON: ") + e.what(), 0);
  }
  if (!doc.contains("methods")) throw ParseError("report has no 'methods' array", 0);
  std::vector<BenchmarkResult> out;
  for (const json& m : doc.at("methods")) out.push_back(benchmark_result_from_json(m));
  return out;
}

std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kSuperior: return "superior";
    case Verdict::kInferior: return "inferior";
    case Verdict::kIndistinguishable: break;
  }
  return "indistinguishable";
}

namespace {

double sample_variance(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double s = 0.0;
  for (double e : v) s += (e - m) * (e - m);
  return s / (n - 1.0);
}

}  // namespace

std::vector<std::vector<Verdict>> significance_matrix(std::span<const ResidualSet> methods,
                                                      double confidence) {
  if (methods.size() < 2) throw ValidationError("significance test needs at least 2 methods");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw ConfigError("confidence must lie in (0, 1)");
  const std::size_t n = methods.front().residuals.size();
  for (const auto& m : methods)
    if (m.residuals.size() != n)
      throw ValidationError("residual sets differ in length ('" + methods.front().method +
                            "' has " + std::to_string(n) + ", '" + m.method + "' has " +
                            std::to_string(m.residuals.size()) + ")");
  if (n < 2) throw ValidationError("significance test needs at least 2 residuals per method");

  std::vector<double> var(methods.size());
  for (std::size_t i = 0; i < methods.size(); ++i) var[i] = sample_variance(methods[i].residuals);
  const double dof = static_cast<double>(n - 1);
  const double critical = boost::math::quantile(boost::math::fisher_f(dof, dof), confidence);

  const std::size_t k = methods.size();
  std::vector<std::vector<Verdict>> out(k, std::vector<Verdict>(k, Verdict::kIndistinguishable));
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t c = r + 1; c < k; ++c) {
      // Equal lengths make both critical values F(n-1, n-1); the test on r/c
      // and c/r is then one comparison and the matrix comes out antisymmetric.
      Verdict v = Verdict::kIndistinguishable;
      if (var[c] == 0.0 || var[r] == 0.0) {
        if (var[r] > 0.0) v = Verdict::kInferior;
        else if (var[c] > 0.0) v = Verdict::kSuperior;
      } else {
        const double ratio = var[r] / var[c];
        if (ratio > critical) v = Verdict::kInferior;
        else if (ratio < 1.0 / critical) v = Verdict::kSuperior;
      }
      out[r][c] = v;
      out[c][r] = static_cast<Verdict>(-static_cast<int>(v));
    }
  return out;
}

std::array<std::vector<std::vector<Verdict>>, kNumDimensions> significance_matrices(
    std::span<const BenchmarkResult> results, double confidence) {
  if (results.size() < 2) throw ValidationError("significance test needs at least 2 methods");
  const auto& ref = results.front().residuals;
  for (const auto& r : results) {
    if (r.residuals.size() != ref.size())
      throw ValidationError("methods '" + results.front().method + "' and '" + r.method +
                            "' were evaluated on different items");
    for (std::size_t i = 0; i < ref.size(); ++i)
      if (r.residuals[i].asset_id != ref[i].asset_id)
        throw ValidationError("methods '" + results.front().method + "' and '" + r.method +
                              "' were evaluated on different items");
  }
  std::array<std::vector<std::vector<Verdict>>, kNumDimensions> out;
  for (std::size_t d = 0; d < kNumDimensions; ++d) {
    std::vector<ResidualSet> sets;
    for (const auto& r : results) {
      ResidualSet s{r.method, {}};
      for (const auto& e : r.residuals) s.residuals.push_back(e.residual[d]);
      sets.push_back(std::move(s));
    }
    out[d] = significance_matrix(sets, confidence);
  }
  return out;
}

void write_significance_csv(std::ostream& out, std::span<const BenchmarkResult> results,
                            const std::array<std::vector<std::vector<Verdict>>, kNumDimensions>&
                                matrices) {
  out << "dimension,row_method,column_method,verdict\n";
  for (auto d : kDimensions)
    for (std::size_t r = 0; r < results.size(); ++r)
      for (std::size_t c = 0; c < results.size(); ++c)
        out << dimension_name(d) << ',' << csv_escape(results[r].method) << ','
            << csv_escape(results[c].method) << ','
            << verdict_name(matrices[index_of(d)][r][c]) << '\n';
}

}  // namespace t23dqa
