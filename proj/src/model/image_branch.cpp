#include "fusionloc/model/image_branch.hpp"

#include <cmath>

#include "fusionloc/error.hpp"
#include "fusionloc/nn/archive.hpp"

namespace fusionloc::model {

std::size_t ResNetSpec::output_channels() const {
  return base_width << (blocks.empty() ? 0 : blocks.size() - 1);
}

void ImageBranchConfig::validate() const {
  if (d_image == 0) throw ConfigError("image feature dimension must be positive");
  if (backbone.blocks.empty() || backbone.base_width == 0) {
    throw ConfigError("image backbone needs at least one stage and a positive width");
  }
  for (auto b : backbone.blocks) {
    if (b == 0) throw ConfigError("image backbone stages need at least one block");
  }
  if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("dropout probability must be in [0, 1)");
}

void AttentionParams::validate() const {
  const std::size_t d = w_query.defined() ? w_query.dim(0) : 0;
  for (const Tensor* w : {&w_query, &w_key, &w_value, &w_proj}) {
    if (!w->defined() || w->rank() != 2 || w->dim(0) != d || w->dim(1) != d) {
      throw ArgumentError("attention projections must all be square with matching size");
    }
    for (double v : w->data()) {
      if (!std::isfinite(v)) throw NumericError("attention projection has non-finite entries");
    }
  }
}

Tensor vector_self_attention(const Tensor& f, const AttentionParams& params,
                             std::vector<double>* weights_out) {
  const std::size_t d = params.dim();
  if (f.rank() != 2 || f.dim(1) != d) {
    throw ArgumentError("vector_self_attention: input " + nn::shape_str(f.shape()) +
                        " does not match attention size " + std::to_string(d));
  }
  const Tensor none;
  const Tensor q = nn::linear(f, params.w_query, none);
  const Tensor k = nn::linear(f, params.w_key, none);
  const Tensor v = nn::linear(f, params.w_value, none);
  const Tensor att = nn::token_attention(q, k, v, 1, 1.0, weights_out);
  return nn::add(nn::linear(att, params.w_proj, none), f);
}

VectorSelfAttention::VectorSelfAttention(std::size_t dim, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  params_.w_query = register_parameter("w_query", nn::uniform_tensor({dim, dim}, bound, rng));
  params_.w_key = register_parameter("w_key", nn::uniform_tensor({dim, dim}, bound, rng));
  params_.w_value = register_parameter("w_value", nn::uniform_tensor({dim, dim}, bound, rng));
  params_.w_proj = register_parameter("w_proj", nn::uniform_tensor({dim, dim}, bound, rng));
}

BasicBlock::BasicBlock(std::size_t in, std::size_t out, std::size_t stride, Rng& rng)
    : conv1_(in, out, 3, stride, 1, rng), bn1_(out), conv2_(out, out, 3, 1, 1, rng), bn2_(out) {
  register_module("conv1", conv1_);
  register_module("bn1", bn1_);
  register_module("conv2", conv2_);
  register_module("bn2", bn2_);
  if (stride != 1 || in != out) {
    down_conv_ = std::make_unique<nn::Conv2d>(in, out, 1, stride, 0, rng);
    down_bn_ = std::make_unique<nn::BatchNorm>(out);
    register_module("downsample.0", *down_conv_);
    register_module("downsample.1", *down_bn_);
  }
}

Tensor BasicBlock::forward(const Tensor& x) {
  Tensor h = nn::relu(bn1_.forward(conv1_.forward(x)));
  h = bn2_.forward(conv2_.forward(h));
  const Tensor shortcut = down_conv_ ? down_bn_->forward(down_conv_->forward(x)) : x;
  return nn::relu(nn::add(h, shortcut));
}

ResNetTrunk::ResNetTrunk(const ResNetSpec& spec, Rng& rng)
    : conv1_(3, spec.base_width, 7, 2, 3, rng), bn1_(spec.base_width) {
  register_module("conv1", conv1_);
  register_module("bn1", bn1_);
  std::size_t channels = spec.base_width;
  for (std::size_t s = 0; s < spec.blocks.size(); ++s) {
    const std::size_t width = spec.base_width << s;
    auto& stage = stages_.emplace_back();
    for (std::size_t b = 0; b < spec.blocks[s]; ++b) {
      const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
      stage.push_back(std::make_unique<BasicBlock>(channels, width, stride, rng));
      register_module("layer" + std::to_string(s + 1) + "." + std::to_string(b), *stage.back());
      channels = width;
    }
  }
  out_channels_ = channels;
}

Tensor ResNetTrunk::forward(const Tensor& images) {
  if (images.rank() != 4 || images.dim(1) != 3) {
    throw ArgumentError("image trunk expects [N, 3, H, W], got " + nn::shape_str(images.shape()));
  }
  Tensor h = nn::relu(bn1_.forward(conv1_.forward(images)));
  h = nn::max_pool2d(h, 3, 2, 1);
  for (auto& stage : stages_) {
    for (auto& block : stage) h = block->forward(h);
  }
  return nn::global_avg_pool2d(h);
}

ImageBranch::ImageBranch(const ImageBranchConfig& cfg, bool use_dropout, Rng& rng)
    : trunk_((cfg.validate(), cfg.backbone), rng),
      fc_(trunk_.output_channels(), cfg.d_image, rng),
      attention_(cfg.d_image, rng),
      use_dropout_(use_dropout),
      dropout_p_(cfg.dropout_p) {
  register_module("backbone", trunk_);
  register_module("fc", fc_);
  register_module("attention", attention_);
  if (!cfg.pretrained.empty()) load_pretrained(cfg.pretrained);
}

Tensor ImageBranch::backbone_forward(const Tensor& images) {
  return fc_.forward(trunk_.forward(images));
}

Tensor ImageBranch::forward(const Tensor& images, Rng& rng, std::vector<double>* attention_out) {
  Tensor f = backbone_forward(images);
  if (use_dropout_) f = nn::dropout(f, dropout_p_, rng, training());
  return attention_.forward(f, attention_out);
}

std::size_t ImageBranch::load_pretrained(const std::filesystem::path& path) {
  const auto archive = nn::Archive::load(path);
  std::size_t loaded = 0;
  auto load_all = [&](std::vector<nn::NamedTensor> tensors) {
    for (auto& t : tensors) {
      if (const auto* a = archive.find(t.name)) {
        nn::assign(t.tensor, *a);
        ++loaded;
      }
    }
  };
  load_all(trunk_.parameters());
  load_all(trunk_.buffers());
  return loaded;
}

}  // namespace fusionloc::model
