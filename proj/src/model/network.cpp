#include "fusionloc/model/network.hpp"

#include "fusionloc/error.hpp"

namespace fusionloc::model {

FusionConfig ModelConfig::resolved_fusion() const {
  FusionConfig f = fusion;
  f.d_image = image.d_image;
  f.d_point = point.d_point;
  return f;
}

std::size_t ModelConfig::head_dim() const {
  switch (modality) {
    case Modality::image:
      return image.d_image;
    case Modality::point:
      return point.d_point;
    case Modality::fused:
      break;
  }
  return image.d_image + point.d_point;
}

bool ModelConfig::image_dropout() const {
  if (!image.dropout) return false;
  return !(modality == Modality::fused && fusion.mode == FusionMode::mhsa &&
           fusion.norm == NormKind::batch);
}

void ModelConfig::validate() const {
  if (modality != Modality::point) image.validate();
  if (modality != Modality::image) point.validate();
  if (modality == Modality::fused) resolved_fusion().validate();
  if (head_hidden == 0) throw ConfigError("regression hidden width must be positive");
}

FusionLocNet::FusionLocNet(const ModelConfig& cfg, Rng& init_rng) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.modality != Modality::point) {
    image_ = std::make_unique<ImageBranch>(cfg_.image, cfg_.image_dropout(), init_rng);
    register_module("image", *image_);
  }
  if (cfg_.modality != Modality::image) {
    point_ = std::make_unique<PointBranch>(cfg_.point, init_rng);
    register_module("point", *point_);
  }
  if (cfg_.modality == Modality::fused && cfg_.fusion.mode == FusionMode::mhsa) {
    fusion_ = std::make_unique<FusionStack>(cfg_.resolved_fusion(), init_rng);
    register_module("fusion", *fusion_);
  }
  head_ = std::make_unique<RegressionHead>(cfg_.head_dim(), init_rng, cfg_.head_hidden);
  register_module("head", *head_);
  register_module("loss", loss_);
}

PosePrediction FusionLocNet::forward(const ModelInput& input, Rng& rng, ForwardTrace* trace) {
  Tensor f_image;
  Tensor f_point;
  if (image_) {
    f_image = image_->forward(input.images, rng, trace ? &trace->image_attention : nullptr);
  }
  if (point_) f_point = point_->forward(input.scans, rng);

  Tensor f;
  if (image_ && point_) {
    f = fuse_concat(f_image, f_point);
    if (fusion_) f = fusion_->forward(f, trace ? &trace->fusion_attention : nullptr);
  } else {
    f = image_ ? f_image : f_point;
  }
  return head_->forward(f);
}

}  // namespace fusionloc::model
