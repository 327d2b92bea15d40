#pragma once

#include <memory>

#include "fusionloc/core/pose.hpp"
#include "fusionloc/model/fusion.hpp"
#include "fusionloc/model/image_branch.hpp"
#include "fusionloc/model/point_branch.hpp"
#include "fusionloc/model/regression.hpp"

namespace fusionloc::model {

/// Which sensor branches feed the head. `image` and `point` are the
/// single-sensor baselines.
enum class Modality { fused, image, point };

struct ModelConfig {
  Modality modality = Modality::fused;
  ImageBranchConfig image;
  PointBranchConfig point;
  /// d_image / d_point here are overwritten from the branch configs.
  FusionConfig fusion;
  std::size_t head_hidden = 128;

  /// Fusion config with dimensions taken from the branches.
  FusionConfig resolved_fusion() const;
  std::size_t head_dim() const;
  /// Dropout on the image feature, disabled when the fusion stack uses BN.
  bool image_dropout() const;
  void validate() const;
};

struct ModelInput {
  Tensor images;  // [B, 3, S, S]
  Tensor scans;   // [B, N, 2]
};

struct ForwardTrace {
  std::vector<double> image_attention;
  AttentionTrace fusion_attention;
};

class FusionLocNet : public nn::Module {
 public:
  FusionLocNet(const ModelConfig& cfg, Rng& init_rng);

  /// `rng` drives dropout and sampling starts in training mode.
  PosePrediction forward(const ModelInput& input, Rng& rng, ForwardTrace* trace = nullptr);

  const ModelConfig& config() const { return cfg_; }
  LossState& loss_state() { return loss_; }
  ImageBranch* image_branch() { return image_.get(); }
  PointBranch* point_branch() { return point_.get(); }
  FusionStack* fusion_stack() { return fusion_.get(); }
  RegressionHead& head() { return *head_; }

 private:
  ModelConfig cfg_;
  std::unique_ptr<ImageBranch> image_;
  std::unique_ptr<PointBranch> point_;
  std::unique_ptr<FusionStack> fusion_;
  std::unique_ptr<RegressionHead> head_;
  LossState loss_;
};

}  // namespace fusionloc::model
