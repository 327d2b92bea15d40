#include "fusionloc/nn/module.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>

#include "fusionloc/error.hpp"

namespace fusionloc::nn {

std::vector<NamedTensor> Module::parameters() const {
  std::vector<NamedTensor> out;
  collect("", false, out);
  return out;
}

std::vector<NamedTensor> Module::buffers() const {
  std::vector<NamedTensor> out;
  collect("", true, out);
  return out;
}

std::size_t Module::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.size();
  return total;
}

void Module::collect(const std::string& prefix, bool want_buffers,
                     std::vector<NamedTensor>& out) const {
  for (const auto& slot : want_buffers ? buffers_ : params_) {
    out.push_back({prefix + slot.name, slot.tensor, slot.decay});
  }
  for (const auto& [name, child] : children_) {
    child->collect(prefix + name + ".", want_buffers, out);
  }
}

void Module::set_training(bool training) {
  training_ = training;
  for (auto& [name, child] : children_) child->set_training(training);
}

void Module::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

Tensor& Module::register_parameter(std::string name, Tensor tensor, bool decay) {
  tensor.set_requires_grad(true);
  params_.push_back({std::move(name), std::move(tensor), decay});
  return params_.back().tensor;
}

Tensor& Module::register_buffer(std::string name, Tensor tensor) {
  buffers_.push_back({std::move(name), std::move(tensor), false});
  return buffers_.back().tensor;
}

void Module::register_module(std::string name, Module& child) {
  children_.emplace_back(std::move(name), &child);
}

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values;
  values.reserve(numel(shape));
  std::generate_n(std::back_inserter(values), numel(shape), [&] { return dist(rng); });
  return Tensor::from(std::move(shape), std::move(values));
}

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> values;
  values.reserve(numel(shape));
  std::generate_n(std::back_inserter(values), numel(shape), [&] { return dist(rng); });
  return Tensor::from(std::move(shape), std::move(values));
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, bool bias) {
  if (in == 0 || out == 0) throw ConfigError("Linear: zero-sized layer");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  // Members are stored in params_; the handles below share their storage.
  weight_ = register_parameter("weight", uniform_tensor({out, in}, bound, rng));
  if (bias) bias_ = register_parameter("bias", uniform_tensor({out}, bound, rng));
}

Mlp::Mlp(const std::vector<std::size_t>& widths, Rng& rng, bool relu_last)
    : relu_last_(relu_last) {
  if (widths.size() < 2) throw ConfigError("Mlp: need at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers_.push_back(std::make_unique<Linear>(widths[i], widths[i + 1], rng));
    register_module(std::to_string(i), *layers_.back());
  }
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i]->forward(h);
    if (i + 1 < layers_.size() || relu_last_) h = relu(h);
  }
  return h;
}

Conv2d::Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
               std::size_t pad, Rng& rng)
    : stride_(stride), pad_(pad) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(out * kernel * kernel));
  weight_ = register_parameter("weight", normal_tensor({out, in, kernel, kernel}, stddev, rng));
}

BatchNorm::BatchNorm(std::size_t channels, double momentum, double eps)
    : momentum_(momentum), eps_(eps) {
  gamma_ = register_parameter("weight", Tensor::full({channels}, 1.0), false);
  beta_ = register_parameter("bias", Tensor::zeros({channels}), false);
  running_mean_ = register_buffer("running_mean", Tensor::zeros({channels}));
  running_var_ = register_buffer("running_var", Tensor::full({channels}, 1.0));
}

Tensor BatchNorm::forward(const Tensor& x) {
  return batch_norm(x, gamma_, beta_, running_mean_, running_var_, training(), momentum_, eps_);
}

LayerNorm::LayerNorm(std::size_t dim, double eps) : eps_(eps) {
  gamma_ = register_parameter("weight", Tensor::full({dim}, 1.0), false);
  beta_ = register_parameter("bias", Tensor::zeros({dim}), false);
}

}  // namespace fusionloc::nn
