#pragma once

#include <utility>

#include "fusionloc/nn/module.hpp"

namespace fusionloc::model {

using nn::Rng;
using nn::Tensor;

/// Network output for a batch: positions [B, 2] and raw orientation vectors [B, 2].
struct PosePrediction {
  Tensor position;
  Tensor orientation;
};

/// Two independent MLP branches d -> d/2 -> hidden -> 2 with ReLU between layers.
class RegressionHead : public nn::Module {
 public:
  RegressionHead(std::size_t dim, Rng& rng, std::size_t hidden = 128);

  PosePrediction forward(const Tensor& f) const;

  nn::Mlp& position_branch() { return position_; }
  nn::Mlp& orientation_branch() { return orientation_; }

 private:
  nn::Mlp position_;
  nn::Mlp orientation_;
};

/// Learnable balance terms of the loss.
class LossState : public nn::Module {
 public:
  static constexpr double kInitialBeta = 0.0;
  static constexpr double kInitialGamma = -3.0;

  LossState(double beta = kInitialBeta, double gamma = kInitialGamma);

  Tensor& beta() { return beta_; }
  Tensor& gamma() { return gamma_; }
  double beta_value() const { return beta_[0]; }
  double gamma_value() const { return gamma_[0]; }

 private:
  Tensor beta_;
  Tensor gamma_;
};

/// |p - p_hat|_1 e^-beta + beta + |q - q_hat|_1 e^-gamma + gamma for one sample.
double pose_loss(double position_l1, double orientation_l1, double beta, double gamma);

/// (dL/dbeta, dL/dgamma) = (1 - |p - p_hat|_1 e^-beta, 1 - |q - q_hat|_1 e^-gamma).
std::pair<double, double> loss_grad_state(double position_l1, double orientation_l1, double beta,
                                          double gamma);

/// Batch loss: mean over samples of pose_loss, differentiable w.r.t. the
/// predictions, the targets and both balance terms. All pose tensors are [B, 2];
/// `q_target` holds exact unit [cos, sin] vectors, `q_pred` the raw output.
Tensor pose_loss(const Tensor& p_pred, const Tensor& q_pred, const Tensor& p_target,
                 const Tensor& q_target, const Tensor& beta, const Tensor& gamma);

}  // namespace fusionloc::model
