#include "t23dqa/nn.hpp"

#include <cmath>
#include <cstring>

#include "t23dqa/errors.hpp"

namespace t23dqa::nn {

std::uint64_t checksum(std::span<const Parameter* const> params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Parameter* p : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    const std::size_t n = p->size() * sizeof(double);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

Linear::Linear(std::string name, int in_features, int out_features, std::uint64_t seed,
               bool frozen) {
  if (in_features <= 0 || out_features <= 0)
    throw ConfigError("layer '" + name + "' needs positive dimensions");
  Rng rng(mix_seed(seed, fnv1a(name)));
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  weight_.name = name + ".weight";
  weight_.value.resize(in_features, out_features);
  for (Eigen::Index i = 0; i < weight_.value.size(); ++i)
    weight_.value.data()[i] = uniform(rng, -bound, bound);
  bias_.name = name + ".bias";
  bias_.value.resize(1, out_features);
  for (Eigen::Index i = 0; i < bias_.value.size(); ++i)
    bias_.value.data()[i] = uniform(rng, -bound, bound);
  weight_.frozen = bias_.frozen = frozen;
  weight_.zero_grad();
  bias_.zero_grad();
}

Matrix Linear::apply(const Matrix& x) const {
  if (x.cols() != weight_.value.rows())
    throw ValidationError(weight_.name + ": expected " +
                          std::to_string(weight_.value.rows()) + " input features, got " +
                          std::to_string(x.cols()));
  // Row by row so a sample's output does not depend on the batch it is in.
  Matrix y(x.rows(), weight_.value.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    y.row(i).noalias() = x.row(i) * weight_.value + bias_.value.row(0);
  return y;
}

Matrix Linear::forward(const Matrix& x) {
  Matrix y = apply(x);
  input_ = x;
  return y;
}

Matrix Linear::backward(const Matrix& grad_out) {
  if (!weight_.frozen) {
    weight_.grad.noalias() += input_.transpose() * grad_out;
    bias_.grad.row(0) += grad_out.colwise().sum();
  }
  return grad_out * weight_.value.transpose();
}

Mlp::Mlp(const std::string& name, std::span<const int> widths, std::uint64_t seed,
         bool frozen) {
  if (widths.size() < 2) throw ConfigError("mlp '" + name + "' needs at least two widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    layers_.emplace_back(name + "." + std::to_string(i), widths[i], widths[i + 1], seed,
                         frozen);
}

Matrix Mlp::apply(const Matrix& x) const {
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].apply(h);
    if (i + 1 < layers_.size()) h = h.cwiseMax(0.0);
  }
  return h;
}

Matrix Mlp::forward(const Matrix& x) {
  pre_activations_.clear();
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(h);
    if (i + 1 < layers_.size()) {
      pre_activations_.push_back(h);
      h = h.cwiseMax(0.0);
    }
  }
  return h;
}

Matrix Mlp::backward(const Matrix& grad_out) {
  Matrix g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (i + 1 < layers_.size())
      g = g.cwiseProduct((pre_activations_[i].array() > 0.0).cast<double>().matrix());
    g = layers_[i].backward(g);
  }
  return g;
}

void Adam::step(std::span<Parameter* const> params) {
  ++t_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (Parameter* p : params) {
    if (p->frozen) continue;
    auto [it, inserted] = state_.try_emplace(p);
    Moments& s = it->second;
    if (inserted) {
      s.m = Matrix::Zero(p->value.rows(), p->value.cols());
      s.v = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    Matrix g = p->grad;
    if (options_.weight_decay > 0.0) g += options_.weight_decay * p->value;
    s.m = options_.beta1 * s.m + (1.0 - options_.beta1) * g;
    s.v = options_.beta2 * s.v + (1.0 - options_.beta2) * g.cwiseAbs2();
    p->value.array() -= options_.lr * (s.m.array() / c1) /
                        ((s.v.array() / c2).sqrt() + options_.eps);
  }
}

void zero_grad(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace t23dqa::nn
