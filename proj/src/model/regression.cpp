#include "fusionloc/model/regression.hpp"

#include <algorithm>
#include <cmath>

#include "fusionloc/error.hpp"

namespace fusionloc::model {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

RegressionHead::RegressionHead(std::size_t dim, Rng& rng, std::size_t hidden)
    : position_({dim, std::max<std::size_t>(1, dim / 2), hidden, 2}, rng, false),
      orientation_({dim, std::max<std::size_t>(1, dim / 2), hidden, 2}, rng, false) {
  register_module("position", position_);
  register_module("orientation", orientation_);
}

PosePrediction RegressionHead::forward(const Tensor& f) const {
  return {position_.forward(f), orientation_.forward(f)};
}

LossState::LossState(double beta, double gamma) {
  beta_ = register_parameter("beta", Tensor::scalar(beta), false);
  gamma_ = register_parameter("gamma", Tensor::scalar(gamma), false);
}

double pose_loss(double position_l1, double orientation_l1, double beta, double gamma) {
  return position_l1 * std::exp(-beta) + beta + orientation_l1 * std::exp(-gamma) + gamma;
}

std::pair<double, double> loss_grad_state(double position_l1, double orientation_l1, double beta,
                                          double gamma) {
  return {1.0 - position_l1 * std::exp(-beta), 1.0 - orientation_l1 * std::exp(-gamma)};
}

Tensor pose_loss(const Tensor& p_pred, const Tensor& q_pred, const Tensor& p_target,
                 const Tensor& q_target, const Tensor& beta, const Tensor& gamma) {
  for (const Tensor* t : {&p_pred, &q_pred, &p_target, &q_target}) {
    if (t->rank() != 2 || t->dim(1) != 2 || t->dim(0) != p_pred.dim(0)) {
      throw ArgumentError("pose_loss: pose tensors must all be [B, 2]");
    }
  }
  if (beta.size() != 1 || gamma.size() != 1) {
    throw ArgumentError("pose_loss: balance terms must be scalars");
  }
  const std::size_t batch = p_pred.dim(0);
  if (batch == 0) throw ArgumentError("pose_loss: empty batch");
  double l1_pos = 0.0;
  double l1_ori = 0.0;
  for (std::size_t i = 0; i < batch * 2; ++i) {
    l1_pos += std::abs(p_target[i] - p_pred[i]);
    l1_ori += std::abs(q_target[i] - q_pred[i]);
  }
  const double inv_b = 1.0 / static_cast<double>(batch);
  l1_pos *= inv_b;
  l1_ori *= inv_b;
  const double b = beta.item();
  const double c = gamma.item();
  const double value = pose_loss(l1_pos, l1_ori, b, c);
  if (!std::isfinite(value)) throw NumericError("pose_loss: non-finite loss");

  return Tensor::make_result(
      {1}, {value}, {p_pred, q_pred, p_target, q_target, beta, gamma},
      [batch, inv_b, l1_pos, l1_ori, b, c](nn::detail::Node& self) {
        using nn::detail::input_grad;
        const double g = self.grad[0];
        const double wp = std::exp(-b) * inv_b * g;
        const double wq = std::exp(-c) * inv_b * g;
        const auto& pp = self.inputs[0]->value;
        const auto& qp = self.inputs[1]->value;
        const auto& pt = self.inputs[2]->value;
        const auto& qt = self.inputs[3]->value;
        double* d_pp = input_grad(self, 0);
        double* d_qp = input_grad(self, 1);
        double* d_pt = input_grad(self, 2);
        double* d_qt = input_grad(self, 3);
        for (std::size_t i = 0; i < batch * 2; ++i) {
          const double sp = sign(pp[i] - pt[i]);
          const double sq = sign(qp[i] - qt[i]);
          if (d_pp) d_pp[i] += wp * sp;
          if (d_pt) d_pt[i] -= wp * sp;
          if (d_qp) d_qp[i] += wq * sq;
          if (d_qt) d_qt[i] -= wq * sq;
        }
        const auto [d_beta, d_gamma] = loss_grad_state(l1_pos, l1_ori, b, c);
        if (double* db = input_grad(self, 4)) db[0] += g * d_beta;
        if (double* dc = input_grad(self, 5)) dc[0] += g * d_gamma;
      });
}

}  // namespace fusionloc::model
