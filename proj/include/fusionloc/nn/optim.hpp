#pragma once

#include <cstdint>
#include <vector>

#include "fusionloc/nn/module.hpp"

namespace fusionloc::nn {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// L2 penalty added to the gradient of every parameter whose `decay` flag is set.
  double weight_decay = 1e-4;
};

/// Adam with coupled (L2) weight decay.
class Adam {
 public:
  Adam(std::vector<NamedTensor> params, AdamOptions options);

  void step();
  void zero_grad();

  std::int64_t step_count() const { return step_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<NamedTensor>& params() const { return params_; }

  // Moment access for checkpointing; indexed like params().
  Buffer& first_moment(std::size_t i) { return m_[i]; }
  Buffer& second_moment(std::size_t i) { return v_[i]; }
  void set_step_count(std::int64_t step) { step_ = step; }

 private:
  std::vector<NamedTensor> params_;
  AdamOptions options_;
  std::vector<Buffer> m_;
  std::vector<Buffer> v_;
  std::int64_t step_ = 0;
};

}  // namespace fusionloc::nn
