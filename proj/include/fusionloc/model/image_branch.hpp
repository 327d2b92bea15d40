#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "fusionloc/nn/module.hpp"

namespace fusionloc::model {

using nn::Rng;
using nn::Tensor;

/// Residual trunk layout: BasicBlocks per stage and the stem width. Stage i
/// has base_width * 2^i channels; stages after the first downsample by 2.
struct ResNetSpec {
  std::vector<std::size_t> blocks{3, 4, 6, 3};
  std::size_t base_width = 64;

  static ResNetSpec resnet34() { return {}; }
  std::size_t output_channels() const;
  bool operator==(const ResNetSpec&) const = default;
};

struct ImageBranchConfig {
  std::size_t d_image = 256;
  ResNetSpec backbone = ResNetSpec::resnet34();
  bool dropout = true;
  double dropout_p = 0.5;
  /// Optional archive of named arrays to initialize the trunk from.
  std::filesystem::path pretrained;

  void validate() const;
};

/// Learnable projections of one vector self-attention: W_q, W_k, W_v and the
/// output projection W_p, all d x d.
struct AttentionParams {
  Tensor w_query;
  Tensor w_key;
  Tensor w_value;
  Tensor w_proj;

  std::size_t dim() const { return w_query.dim(0); }
  void validate() const;
};

/// f_att_i = sum_j softmax_j(q_i k_j) v_j with q = W_q f, k = W_k f, v = W_v f;
/// returns W_p f_att + f. `f` is [batch, d]. When `weights_out` is given it
/// receives the [batch, d, d] attention weights.
Tensor vector_self_attention(const Tensor& f, const AttentionParams& params,
                             std::vector<double>* weights_out = nullptr);

class VectorSelfAttention : public nn::Module {
 public:
  VectorSelfAttention(std::size_t dim, Rng& rng);

  Tensor forward(const Tensor& f, std::vector<double>* weights_out = nullptr) const {
    return vector_self_attention(f, params_, weights_out);
  }
  AttentionParams& params() { return params_; }

 private:
  AttentionParams params_;
};

class BasicBlock : public nn::Module {
 public:
  BasicBlock(std::size_t in, std::size_t out, std::size_t stride, Rng& rng);
  Tensor forward(const Tensor& x);

 private:
  nn::Conv2d conv1_;
  nn::BatchNorm bn1_;
  nn::Conv2d conv2_;
  nn::BatchNorm bn2_;
  std::unique_ptr<nn::Conv2d> down_conv_;
  std::unique_ptr<nn::BatchNorm> down_bn_;
};

/// Convolutional trunk up to global average pooling: [N, 3, H, W] -> [N, C].
class ResNetTrunk : public nn::Module {
 public:
  ResNetTrunk(const ResNetSpec& spec, Rng& rng);
  Tensor forward(const Tensor& images);
  std::size_t output_channels() const { return out_channels_; }

 private:
  nn::Conv2d conv1_;
  nn::BatchNorm bn1_;
  std::vector<std::vector<std::unique_ptr<BasicBlock>>> stages_;
  std::size_t out_channels_;
};

/// Trunk + affine projection to d_image + dropout + vector self-attention.
class ImageBranch : public nn::Module {
 public:
  /// `use_dropout` is the effective switch; the caller folds in the
  /// normalization kind of the fusion stack.
  ImageBranch(const ImageBranchConfig& cfg, bool use_dropout, Rng& rng);

  /// Trunk and projection only: [N, 3, H, W] -> [N, d_image].
  Tensor backbone_forward(const Tensor& images);
  Tensor forward(const Tensor& images, Rng& rng, std::vector<double>* attention_out = nullptr);

  ResNetTrunk& trunk() { return trunk_; }
  VectorSelfAttention& attention() { return attention_; }
  /// Copies every trunk array present in the archive; returns how many were loaded.
  std::size_t load_pretrained(const std::filesystem::path& path);

 private:
  ResNetTrunk trunk_;
  nn::Linear fc_;
  VectorSelfAttention attention_;
  bool use_dropout_;
  double dropout_p_;
};

}  // namespace fusionloc::model
