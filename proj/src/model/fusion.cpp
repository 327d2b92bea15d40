#include "fusionloc/model/fusion.hpp"

#include <cmath>

#include "fusionloc/error.hpp"

namespace fusionloc::model {

void FusionConfig::validate() const {
  if (d_image == 0 || d_point == 0) throw ConfigError("feature dimensions must be positive");
  if (mode == FusionMode::concat) return;
  if (heads == 0) throw ConfigError("attention needs at least one head");
  if (layers == 0) throw ConfigError("attention stack needs at least one layer");
  if (dim() % heads != 0) {
    throw ConfigError("fusion dimension " + std::to_string(dim()) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

Tensor fuse_concat(const Tensor& f_image, const Tensor& f_point) {
  return nn::concat_last(f_image, f_point);
}

MhsaBlock::MhsaBlock(std::size_t dim, std::size_t heads, NormKind norm, Rng& rng)
    : dim_(dim), heads_(heads), norm_kind_(norm) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("MHSA block: dimension " + std::to_string(dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (norm == NormKind::batch) {
    batch_norm_ = std::make_unique<nn::BatchNorm>(dim);
    register_module("norm", *batch_norm_);
  } else {
    layer_norm_ = std::make_unique<nn::LayerNorm>(dim);
    register_module("norm", *layer_norm_);
  }
  const std::size_t dh = dim / heads;
  const double head_bound = 1.0 / std::sqrt(static_cast<double>(dh));
  const double proj_bound = 1.0 / std::sqrt(static_cast<double>(dim));
  w_query_ = register_parameter("w_query", nn::uniform_tensor({heads, dh, dh}, head_bound, rng));
  w_key_ = register_parameter("w_key", nn::uniform_tensor({heads, dh, dh}, head_bound, rng));
  w_value_ = register_parameter("w_value", nn::uniform_tensor({heads, dh, dh}, head_bound, rng));
  w_proj_ = register_parameter("w_proj", nn::uniform_tensor({dim, dim}, proj_bound, rng));
}

Tensor MhsaBlock::forward(const Tensor& f, AttentionTrace* trace) {
  if (f.rank() != 2 || f.dim(1) != dim_) {
    throw ArgumentError("MHSA block expects [batch, " + std::to_string(dim_) + "], got " +
                        nn::shape_str(f.shape()));
  }
  Tensor g;
  if (batch_norm_) {
    if (training() && f.dim(0) < 2) {
      throw ConfigError("batch normalization needs a batch of at least 2 in training mode");
    }
    g = batch_norm_->forward(f);
  } else {
    g = layer_norm_->forward(f);
  }
  const std::size_t dh = dim_ / heads_;
  const Tensor q = nn::segment_linear(g, w_query_);
  const Tensor k = nn::segment_linear(g, w_key_);
  const Tensor v = nn::segment_linear(g, w_value_);
  std::vector<double>* weights = nullptr;
  if (trace) weights = &trace->emplace_back();
  const Tensor heads_out =
      nn::token_attention(q, k, v, heads_, 1.0 / std::sqrt(static_cast<double>(dh)), weights);
  return nn::add(nn::linear(heads_out, w_proj_, Tensor{}), f);
}

FusionStack::FusionStack(const FusionConfig& cfg, Rng& rng) {
  cfg.validate();
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    blocks_.push_back(std::make_unique<MhsaBlock>(cfg.dim(), cfg.heads, cfg.norm, rng));
    register_module("blocks." + std::to_string(i), *blocks_.back());
  }
}

Tensor FusionStack::forward(const Tensor& f, AttentionTrace* trace) {
  Tensor h = f;
  for (auto& block : blocks_) h = block->forward(h, trace);
  return h;
}

}  // namespace fusionloc::model
