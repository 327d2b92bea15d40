#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "fusionloc/nn/module.hpp"

namespace fusionloc::model {

using nn::Rng;
using nn::Tensor;

enum class NormKind { batch, layer };
enum class FusionMode { concat, mhsa };

struct FusionConfig {
  std::size_t d_image = 256;
  std::size_t d_point = 256;
  std::size_t heads = 1;
  std::size_t layers = 1;
  NormKind norm = NormKind::batch;
  /// concat: plain concatenation feeds the head; mhsa: concatenation followed
  /// by `layers` attention blocks.
  FusionMode mode = FusionMode::mhsa;

  std::size_t dim() const { return d_image + d_point; }
  void validate() const;
};

/// [f_I, f_P] along the feature axis, image first.
Tensor fuse_concat(const Tensor& f_image, const Tensor& f_point);

/// Attention weights recorded during a forward pass: one entry per block, each
/// [batch, heads, dh, dh].
using AttentionTrace = std::vector<std::vector<double>>;

/// Pre-norm multi-head self-attention over scalar tokens with a residual:
///   g = norm(f); head h attends within its d/N_h segment of g with scores
///   scaled by 1/sqrt(d/N_h); out = W_p [heads...] + f.
class MhsaBlock : public nn::Module {
 public:
  MhsaBlock(std::size_t dim, std::size_t heads, NormKind norm, Rng& rng);

  Tensor forward(const Tensor& f, AttentionTrace* trace = nullptr);

  std::size_t dim() const { return dim_; }
  std::size_t heads() const { return heads_; }
  Tensor& w_query() { return w_query_; }
  Tensor& w_key() { return w_key_; }
  Tensor& w_value() { return w_value_; }
  Tensor& w_proj() { return w_proj_; }

 private:
  std::size_t dim_;
  std::size_t heads_;
  NormKind norm_kind_;
  std::unique_ptr<nn::BatchNorm> batch_norm_;
  std::unique_ptr<nn::LayerNorm> layer_norm_;
  Tensor w_query_;  // [heads, dh, dh]
  Tensor w_key_;
  Tensor w_value_;
  Tensor w_proj_;  // [d, d]
};

/// N_l blocks of identical shape with independent parameters, applied in order.
class FusionStack : public nn::Module {
 public:
  FusionStack(const FusionConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& f, AttentionTrace* trace = nullptr);

  std::size_t size() const { return blocks_.size(); }
  MhsaBlock& block(std::size_t i) { return *blocks_[i]; }

 private:
  std::vector<std::unique_ptr<MhsaBlock>> blocks_;
};

}  // namespace fusionloc::model
