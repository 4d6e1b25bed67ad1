#include "t23dqa/losses.hpp"

#include <cmath>
#include <numeric>

#include "t23dqa/errors.hpp"

namespace t23dqa {

std::string_view rank_variant_name(RankVariant v) {
  return v == RankVariant::kLiteral ? "literal" : "pairwise";
}

RankVariant parse_rank_variant(std::string_view name) {
  if (name == "pairwise" || name == "pairwise_sign_hinge") return RankVariant::kPairwiseSignHinge;
  if (name == "literal" || name == "literal_eq10") return RankVariant::kLiteral;
  throw ConfigError("unknown rank loss variant '" + std::string(name) + "'");
}

void validate(const LossConfig& config) {
  if (!(config.lambda >= 0.0) || !std::isfinite(config.lambda))
    throw ConfigError("loss lambda must be a finite value >= 0");
}

namespace {

void check_batch(std::span<const double> pred, std::span<const double> label) {
  if (pred.size() != label.size())
    throw ValidationError("prediction and label batches differ in length (" +
                          std::to_string(pred.size()) + " vs " + std::to_string(label.size()) +
                          ")");
  if (pred.size() < 2) throw ValidationError("loss needs a batch of at least 2");
}

// Population z-score. Returns the std; a zero-spread input yields zeros.
double zscore(std::span<const double> v, std::vector<double>& out) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  out.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = sd > 0.0 ? (v[i] - mean) / sd : 0.0;
  return sd;
}

}  // namespace

double linearity_loss(std::span<const double> pred, std::span<const double> label,
                      std::vector<double>* grad) {
  check_batch(pred, label);
  const std::size_t n = pred.size();
  const double nd = static_cast<double>(n);
  std::vector<double> sh, s;
  if (zscore(label, s) == 0.0)
    throw ValidationError("linearity loss is undefined for a constant label batch");
  const double sd = zscore(pred, sh);

  double rho = 0.0;
  for (std::size_t i = 0; i < n; ++i) rho += sh[i] * s[i];
  rho /= nd;
  double a = 0.0, b = 0.0, cross = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = rho * sh[i] - s[i];
    a += (sh[i] - s[i]) * (sh[i] - s[i]);
    b += r * r;
    cross += r * sh[i];
  }
  const double loss = (a + b) / (2.0 * nd);

  if (grad) {
    grad->assign(n, 0.0);
    if (sd == 0.0) return loss;
    // d loss / d S^
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double ga = 2.0 * (sh[i] - s[i]) / nd;
      const double gb = 2.0 / nd * (rho * (rho * sh[i] - s[i]) + s[i] / nd * cross);
      g[i] = 0.5 * (ga + gb);
    }
    // back through the z-score
    double g_mean = 0.0, gs_mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      g_mean += g[i];
      gs_mean += g[i] * sh[i];
    }
    g_mean /= nd;
    gs_mean /= nd;
    for (std::size_t i = 0; i < n; ++i) (*grad)[i] = (g[i] - g_mean - sh[i] * gs_mean) / sd;
  }
  return loss;
}

double rank_loss(std::span<const double> pred, std::span<const double> label,
                 RankVariant variant, std::vector<double>* grad) {
  check_batch(pred, label);
  const std::size_t n = pred.size();
  if (grad) grad->assign(n, 0.0);

  if (variant == RankVariant::kLiteral) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = pred[i] - label[i];
      sum += std::abs(d);
      if (grad) (*grad)[i] = (d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0) / static_cast<double>(n);
    }
    return sum / static_cast<double>(n);
  }

  const double pairs = static_cast<double>(n * (n - 1));
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double sign = (label[i] > label[j]) - (label[i] < label[j]);
      const double h = -(pred[i] - pred[j]) * sign;
      if (h > 0.0) {
        sum += h;
        if (grad) {
          (*grad)[i] -= sign / pairs;
          (*grad)[j] += sign / pairs;
        }
      }
    }
  return sum / pairs;
}

LossBreakdown total_loss(std::span<const ScoreTriple> preds, std::span<const MosRecord> labels,
                         const LossConfig& config) {
  validate(config);
  if (preds.size() != labels.size())
    throw ValidationError("prediction and label batches differ in length");
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i].asset_id != labels[i].asset_id)
      throw ValidationError("batch misaligned at position " + std::to_string(i) + ": '" +
                            preds[i].asset_id + "' vs '" + labels[i].asset_id + "'");
  LossBreakdown out;
  std::vector<double> p(preds.size()), y(preds.size());
  for (std::size_t d = 0; d < kNumDimensions; ++d) {
    for (std::size_t i = 0; i < preds.size(); ++i) {
      p[i] = preds[i].scores[d];
      y[i] = labels[i].mos[d];
    }
    auto& dim = out.dims[d];
    dim.lin = linearity_loss(p, y);
    dim.rank = rank_loss(p, y, config.rank_variant);
    dim.total = dim.lin + config.lambda * dim.rank;
    out.total += dim.total;
  }
  return out;
}

LossBreakdown total_loss(const nn::Matrix& preds, const nn::Matrix& labels,
                         const LossConfig& config, nn::Matrix* grad, bool skip_constant_labels) {
  validate(config);
  using Eigen::Index;
  if (preds.rows() != labels.rows() || preds.cols() != labels.cols())
    throw ValidationError("prediction and label matrices differ in shape");
  if (preds.cols() != static_cast<Index>(kNumDimensions))
    throw ValidationError("loss expects one column per rated dimension");
  const Index n = preds.rows();
  if (n < 2) throw ValidationError("loss needs a batch of at least 2");
  const double nd = static_cast<double>(n);

  const Eigen::ArrayXXd p = preds.array();
  const Eigen::ArrayXXd y = labels.array();
  const Eigen::ArrayXXd pc = p.rowwise() - p.colwise().mean();
  const Eigen::ArrayXXd yc = y.rowwise() - y.colwise().mean();
  const Eigen::ArrayXd p_sd = (pc.square().colwise().sum() / nd).sqrt().transpose();
  const Eigen::ArrayXd y_sd = (yc.square().colwise().sum() / nd).sqrt().transpose();

  LossBreakdown out;
  if (grad) grad->setZero(n, preds.cols());
  const double pairs = nd * (nd - 1.0);
  for (Index d = 0; d < preds.cols(); ++d) {
    auto& dim = out.dims[static_cast<std::size_t>(d)];
    if (y_sd[d] == 0.0) {
      if (!skip_constant_labels)
        throw ValidationError("linearity loss is undefined for a constant label batch");
      dim.lin_skipped = true;
    } else {
      const Eigen::ArrayXd s = yc.col(d) / y_sd[d];
      const Eigen::ArrayXd sh =
          p_sd[d] > 0.0 ? Eigen::ArrayXd(pc.col(d) / p_sd[d]) : Eigen::ArrayXd::Zero(n);
      const double rho = (sh * s).mean();
      const Eigen::ArrayXd r = rho * sh - s;
      dim.lin = ((sh - s).square().mean() + r.square().mean()) / 2.0;
      if (grad && p_sd[d] > 0.0) {
        const Eigen::ArrayXd g =
            ((sh - s) + rho * r + s * (r * sh).mean()) / nd;
        grad->col(d).array() += (g - g.mean() - sh * (g * sh).mean()) / p_sd[d];
      }
    }

    if (config.rank_variant == RankVariant::kLiteral) {
      const Eigen::ArrayXd diff = p.col(d) - y.col(d);
      dim.rank = diff.abs().mean();
      if (grad) grad->col(d).array() += config.lambda * diff.sign() / nd;
    } else {
      // pairwise differences as n x n matrices: D_ij = v_i - v_j
      const Eigen::ArrayXd pv = p.col(d), yv = y.col(d);
      const Eigen::ArrayXXd dp =
          pv.replicate(1, n) - pv.transpose().replicate(n, 1);
      const Eigen::ArrayXXd sy =
          (yv.replicate(1, n) - yv.transpose().replicate(n, 1)).sign();
      const Eigen::ArrayXXd h = -dp * sy;
      const Eigen::ArrayXXd active = (h > 0.0).cast<double>();
      dim.rank = (h > 0.0).select(h, 0.0).sum() / pairs;
      if (grad) {
        const Eigen::ArrayXXd w = active * sy;
        const Eigen::ArrayXd g = (w.colwise().sum().transpose() - w.rowwise().sum()) / pairs;
        grad->col(d).array() += config.lambda * g;
      }
    }
    dim.total = dim.lin + config.lambda * dim.rank;
    out.total += dim.total;
  }
  return out;
}

}  // namespace t23dqa
