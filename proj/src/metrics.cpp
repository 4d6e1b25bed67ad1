#include "t23dqa/metrics.hpp"

#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "t23dqa/errors.hpp"

namespace t23dqa {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw ValidationError("correlation inputs differ in length (" + std::to_string(x.size()) +
                          " vs " + std::to_string(y.size()) + ")");
  if (x.size() < 2) throw ValidationError("correlation needs at least 2 values");
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
  };
  if (constant(x) || constant(y))
    throw ValidationError("correlation is undefined for a constant input");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
      throw ValidationError("correlation input contains a non-finite value");
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw ValidationError("correlation is undefined for a constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// Pairs tied within consecutive runs of equal keys.
template <typename Eq>
long long tied_pairs(const std::vector<std::size_t>& order, Eq eq) {
  long long total = 0, run = 1;
  for (std::size_t i = 1; i <= order.size(); ++i) {
    if (i < order.size() && eq(order[i - 1], order[i])) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

// Sorts idx[lo, hi) by key, returning the number of inversions removed.
long long merge_count(std::vector<std::size_t>& idx, std::vector<std::size_t>& buf,
                      std::span<const double> key, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  long long swaps = merge_count(idx, buf, key, lo, mid) + merge_count(idx, buf, key, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (key[idx[j]] < key[idx[i]]) {
      swaps += static_cast<long long>(mid - i);
      buf[k++] = idx[j++];
    } else {
      buf[k++] = idx[i++];
    }
  }
  while (i < mid) buf[k++] = idx[i++];
  while (j < hi) buf[k++] = idx[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo),
            buf.begin() + static_cast<std::ptrdiff_t>(hi),
            idx.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace

std::vector<double> mid_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double srcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const auto rx = mid_ranks(x);
  const auto ry = mid_ranks(y);
  return pearson(rx, ry);
}

double plcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  return pearson(x, y);
}

// Knight's O(n log n) tau-b.
double krcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  const long long x_ties = tied_pairs(idx, [&](auto a, auto b) { return x[a] == x[b]; });
  const long long joint_ties =
      tied_pairs(idx, [&](auto a, auto b) { return x[a] == x[b] && y[a] == y[b]; });
  std::vector<std::size_t> buf(n);
  const long long discordant = merge_count(idx, buf, y, 0, n);
  const long long y_ties = tied_pairs(idx, [&](auto a, auto b) { return y[a] == y[b]; });

  const long long total = static_cast<long long>(n) * static_cast<long long>(n - 1) / 2;
  const double num = static_cast<double>(total - x_ties - y_ties + joint_ties - 2 * discordant);
  const double den = std::sqrt(static_cast<double>(total - x_ties) *
                               static_cast<double>(total - y_ties));
  return std::clamp(num / den, -1.0, 1.0);
}

double logistic(const LogisticParams& b, double x) {
  return b[0] * (0.5 - 1.0 / (1.0 + std::exp(b[1] * (x - b[2])))) + b[3] * x + b[4];
}

namespace {

struct FitData {
  std::span<const double> x;
  std::span<const double> y;
};

double sse_of(const LogisticParams& b, std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = logistic(b, x[i]) - y[i];
    s += r * r;
  }
  return std::isfinite(s) ? s : std::numeric_limits<double>::max();
}

double gsl_objective(const gsl_vector* v, void* params) {
  const auto* data = static_cast<const FitData*>(params);
  LogisticParams b;
  for (std::size_t i = 0; i < 5; ++i) b[i] = gsl_vector_get(v, i);
  return sse_of(b, data->x, data->y);
}

struct SimplexResult {
  LogisticParams beta;
  double sse;
  bool converged;
};

SimplexResult run_simplex(const FitData& data, const LogisticParams& start, int max_iter) {
  gsl_multimin_function f{&gsl_objective, 5, const_cast<FitData*>(&data)};
  gsl_vector* x = gsl_vector_alloc(5);
  gsl_vector* step = gsl_vector_alloc(5);
  for (std::size_t i = 0; i < 5; ++i) {
    gsl_vector_set(x, i, start[i]);
    gsl_vector_set(step, i, std::max(0.1, 0.25 * std::abs(start[i])));
  }
  gsl_multimin_fminimizer* s =
      gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 5);
  gsl_multimin_fminimizer_set(s, &f, x, step);
  bool converged = false;
  for (int it = 0; it < max_iter; ++it) {
    if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-10) == GSL_SUCCESS) {
      converged = true;
      break;
    }
  }
  SimplexResult r;
  for (std::size_t i = 0; i < 5; ++i) r.beta[i] = gsl_vector_get(s->x, i);
  r.sse = s->fval;
  r.converged = converged;
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(x);
  gsl_vector_free(step);
  return r;
}

}  // namespace

LogisticFit fit_logistic(std::span<const double> pred, std::span<const double> mos) {
  if (pred.size() != mos.size()) throw ValidationError("logistic fit inputs differ in length");
  if (pred.size() < 5) throw ValidationError("logistic fit needs at least 5 points");
  check_pair(pred, mos);

  // Fit in standardized coordinates so the starting rule and the simplex step
  // sizes do not depend on the score scales.
  const double n = static_cast<double>(pred.size());
  auto moments = [n](std::span<const double> v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double var = 0.0;
    for (double e : v) var += (e - m) * (e - m);
    return std::pair{m, std::sqrt(var / n)};
  };
  const auto [my, sy] = moments(pred);
  const auto [mm, sm] = moments(mos);
  std::vector<double> x(pred.size()), y(mos.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = (pred[i] - my) / sy;
    y[i] = (mos[i] - mm) / sm;
  }
  const FitData data{x, y};

  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sxy += x[i] * y[i];
  const double slope = sxy / n;  // both sides are standardized
  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
  const double range = *ymax - *ymin;

  std::vector<LogisticParams> starts;
  starts.push_back({0.0, 1.0, 0.0, slope, 0.0});  // the pure affine map
  for (double b3 : {*xmin, 0.0, *xmax}) starts.push_back({range, 1.0, b3, slope, 0.0});

  constexpr int kIterations = 4000;
  constexpr int kRestarts = 4;
  SimplexResult best{{}, std::numeric_limits<double>::infinity(), false};
  for (const auto& start : starts) {
    SimplexResult r = run_simplex(data, start, kIterations);
    for (int k = 0; k < kRestarts; ++k) {
      SimplexResult again = run_simplex(data, r.beta, kIterations);
      const bool stalled = again.sse >= r.sse * (1.0 - 1e-12);
      if (again.sse <= r.sse) r = again;
      if (stalled) break;
    }
    if (r.sse < best.sse) best = r;
  }

  LogisticFit fit;
  const auto& b = best.beta;
  fit.beta[0] = sm * b[0];
  fit.beta[1] = b[1] / sy;
  fit.beta[2] = my + sy * b[2];
  fit.beta[3] = sm * b[3] / sy;
  fit.beta[4] = sm * b[4] + mm - fit.beta[3] * my;
  fit.converged = best.converged && std::all_of(fit.beta.begin(), fit.beta.end(),
                                                [](double v) { return std::isfinite(v); });
  fit.mapped.resize(pred.size());
  // Map with the standardized parameters to avoid cancellation, then rescale.
  for (std::size_t i = 0; i < x.size(); ++i) {
    fit.mapped[i] = mm + sm * logistic(b, x[i]);
    const double r = fit.mapped[i] - mos[i];
    fit.sse += r * r;
  }
  return fit;
}

}  // namespace t23dqa
