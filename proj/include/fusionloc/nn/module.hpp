#pragma once

#include <string>
#include <vector>

#include "fusionloc/nn/ops.hpp"
#include "fusionloc/nn/tensor.hpp"

namespace fusionloc::nn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
  /// False for tensors that weight decay must leave alone (normalization
  /// affine terms, loss-balance scalars).
  bool decay = true;
};

/// Owner of named parameters, buffers and child modules.
///
/// Modules are neither copyable nor movable: children are registered by
/// address. Hold composite modules through std::unique_ptr when they must move.
class Module {
 public:
  Module() = default;
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  std::vector<NamedTensor> parameters() const;
  /// Non-trainable state (running statistics).
  std::vector<NamedTensor> buffers() const;
  std::size_t parameter_count() const;

  void set_training(bool training);
  bool training() const { return training_; }

  void zero_grad();

 protected:
  Tensor& register_parameter(std::string name, Tensor tensor, bool decay = true);
  Tensor& register_buffer(std::string name, Tensor tensor);
  void register_module(std::string name, Module& child);

 private:
  void collect(const std::string& prefix, bool want_buffers, std::vector<NamedTensor>& out) const;

  struct Slot {
    std::string name;
    Tensor tensor;
    bool decay;
  };
  std::vector<Slot> params_;
  std::vector<Slot> buffers_;
  std::vector<std::pair<std::string, Module*>> children_;
  bool training_ = true;
};

/// U(-bound, bound) initializer shared by the layers.
Tensor uniform_tensor(Shape shape, double bound, Rng& rng);
/// N(0, stddev^2) initializer.
Tensor normal_tensor(Shape shape, double stddev, Rng& rng);

class Linear : public Module {
 public:
  /// Default init: weight and bias ~ U(-1/sqrt(in), 1/sqrt(in)).
  Linear(std::size_t in, std::size_t out, Rng& rng, bool bias = true);

  Tensor forward(const Tensor& x) const { return linear(x, weight_, bias_); }

  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  std::size_t in_features() const { return weight_.dim(1); }
  std::size_t out_features() const { return weight_.dim(0); }

 private:
  Tensor weight_;
  Tensor bias_;
};

/// Stack of Linear layers with ReLU between them (and after the last one when
/// `relu_last`). `widths` = {in, hidden..., out}.
class Mlp : public Module {
 public:
  Mlp(const std::vector<std::size_t>& widths, Rng& rng, bool relu_last);

  Tensor forward(const Tensor& x) const;
  std::size_t layer_count() const { return layers_.size(); }
  Linear& layer(std::size_t i) { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Linear>> layers_;
  bool relu_last_;
};

class Conv2d : public Module {
 public:
  /// He-normal (fan_out) initialization, no bias.
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t pad,
         Rng& rng);

  Tensor forward(const Tensor& x) const { return conv2d(x, weight_, stride_, pad_); }

 private:
  Tensor weight_;
  std::size_t stride_;
  std::size_t pad_;
};

/// Normalizes axis 1 over the batch (and any trailing spatial axes).
class BatchNorm : public Module {
 public:
  explicit BatchNorm(std::size_t channels, double momentum = 0.1, double eps = 1e-5);

  Tensor forward(const Tensor& x);

  Tensor& gamma() { return gamma_; }
  Tensor& beta() { return beta_; }
  Tensor& running_mean() { return running_mean_; }
  Tensor& running_var() { return running_var_; }

 private:
  Tensor gamma_;
  Tensor beta_;
  Tensor running_mean_;
  Tensor running_var_;
  double momentum_;
  double eps_;
};

class LayerNorm : public Module {
 public:
  explicit LayerNorm(std::size_t dim, double eps = 1e-5);

  Tensor forward(const Tensor& x) const { return layer_norm(x, gamma_, beta_, eps_); }

 private:
  Tensor gamma_;
  Tensor beta_;
  double eps_;
};

}  // namespace fusionloc::nn
