#pragma once

#include <array>
#include <span>
#include <vector>

namespace t23dqa {

// All three throw ValidationError for unequal lengths, fewer than 2 values or
// a constant input.
double srcc(std::span<const double> x, std::span<const double> y);
double krcc(std::span<const double> x, std::span<const double> y);  // tau-b
double plcc(std::span<const double> x, std::span<const double> y);

// Average ranks (1-based) with ties sharing their mean rank.
std::vector<double> mid_ranks(std::span<const double> v);

// y = b1 (0.5 - 1 / (1 + exp(b2 (x - b3)))) + b4 x + b5
using LogisticParams = std::array<double, 5>;
double logistic(const LogisticParams& beta, double x);

struct LogisticFit {
  LogisticParams beta{};
  std::vector<double> mapped;
  double sse = 0.0;
  bool converged = true;  // false: best-so-far after the iteration budget
};

// Least-squares fit of the five-parameter map from pred to mos. Deterministic.
// Throws ValidationError for fewer than 5 points or a constant pred.
LogisticFit fit_logistic(std::span<const double> pred, std::span<const double> mos);

}  // namespace t23dqa
