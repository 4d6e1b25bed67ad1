#pragma once

// Minimal dense layers with explicit backward passes, in double precision.
// Batches are row-major: one sample per row.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "t23dqa/random.hpp"

namespace t23dqa::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool frozen = false;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
};

// FNV-1a over the raw bytes of every value; any change flips it.
std::uint64_t checksum(std::span<const Parameter* const> params);

class Linear {
 public:
  Linear() = default;
  // Weights and bias drawn from U(-1/sqrt(in), 1/sqrt(in)).
  Linear(std::string name, int in_features, int out_features, std::uint64_t seed,
         bool frozen = false);

  Matrix forward(const Matrix& x);  // caches x for backward
  Matrix apply(const Matrix& x) const;
  // Accumulates parameter gradients unless frozen; returns d loss / d x.
  Matrix backward(const Matrix& grad_out);

  int in_features() const { return static_cast<int>(weight_.value.rows()); }
  int out_features() const { return static_cast<int>(weight_.value.cols()); }
  void collect(std::vector<Parameter*>& out) { out.push_back(&weight_); out.push_back(&bias_); }
  void collect(std::vector<const Parameter*>& out) const {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Parameter weight_;  // in x out
  Parameter bias_;    // 1 x out
  Matrix input_;
};

// Affine layers with ReLU between them; no activation after the last one.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, std::span<const int> widths, std::uint64_t seed,
      bool frozen = false);

  Matrix forward(const Matrix& x);
  Matrix apply(const Matrix& x) const;
  Matrix backward(const Matrix& grad_out);

  int in_features() const { return layers_.front().in_features(); }
  int out_features() const { return layers_.back().out_features(); }
  void collect(std::vector<Parameter*>& out) {
    for (auto& l : layers_) l.collect(out);
  }
  void collect(std::vector<const Parameter*>& out) const {
    for (const auto& l : layers_) l.collect(out);
  }

 private:
  std::vector<Linear> layers_;
  std::vector<Matrix> pre_activations_;
};

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  bool operator==(const AdamOptions&) const = default;
};

// Adam; frozen parameters are never touched.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}
  void step(std::span<Parameter* const> params);
  long steps() const { return t_; }

 private:
  struct Moments {
    Matrix m;
    Matrix v;
  };
  AdamOptions options_;
  long t_ = 0;
  std::map<const Parameter*, Moments> state_;
};

void zero_grad(std::span<Parameter* const> params);

}  // namespace t23dqa::nn
