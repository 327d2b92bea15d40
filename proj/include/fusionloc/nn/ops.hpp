#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "fusionloc/nn/tensor.hpp"

// Differentiable tensor operations. Layout is row-major throughout; image
// tensors are NCHW; point tensors are [batch, points, channels].
namespace fusionloc::nn {

using Rng = std::mt19937_64;

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
/// Sum of all elements, as a [1] tensor.
Tensor sum(const Tensor& x);

/// Concatenates along the last axis; all leading dimensions must agree.
Tensor concat_last(const Tensor& a, const Tensor& b);
/// Columns [begin, end) of the last axis.
Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t end);

/// y = x W^T + b over the last axis of x. W is [out, in]; `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Block-diagonal projection: the last axis of x is split into H segments of
/// length dh and segment h is mapped by weights[h] (a dh x dh matrix, [H, dh, dh]).
Tensor segment_linear(const Tensor& x, const Tensor& weights);

/// Attention over scalar tokens. Each row of q, k, v ([rows, d]) is split into
/// `heads` segments of length dh = d / heads; within a segment the score of
/// token i against token j is scale * q_i * k_j, each score row is
/// softmax-normalized and the output token is sum_j A_ij v_j.
/// When `weights_out` is given it receives A as [rows, heads, dh, dh].
Tensor token_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                       double scale, std::vector<double>* weights_out = nullptr);

/// 2-D convolution without bias. x [N, C, H, W], weight [O, C, kh, kw].
Tensor conv2d(const Tensor& x, const Tensor& weight, std::size_t stride, std::size_t pad);
Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t pad);
/// [N, C, H, W] -> [N, C]
Tensor global_avg_pool2d(const Tensor& x);

/// Normalizes axis 1 of x ([N, C, ...]) with batch statistics in training
/// mode (updating the running buffers in place) and running statistics otherwise.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, double momentum, double eps);
/// Normalizes each row over the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

/// Inverted dropout; identity when `training` is false or p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);

/// Gathers rows of x ([B, N, C]) by per-batch indices. `index` holds B * G
/// entries in [0, N); the result has shape out_prefix + [C] where
/// numel(out_prefix) == B * G and out_prefix[0] == B.
Tensor gather_rows(const Tensor& x, std::span<const std::int32_t> index, const Shape& out_prefix);

/// grouped [B, M, K, C] minus centers [B, M, C] broadcast over K.
Tensor subtract_centers(const Tensor& grouped, const Tensor& centers);

/// Max over the second-to-last axis: [..., K, C] -> [..., C]. Ties resolve
/// to the first index, so the subgradient is deterministic.
Tensor max_reduce(const Tensor& x);

}  // namespace fusionloc::nn
