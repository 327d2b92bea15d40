#include "fusionloc/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "fusionloc/error.hpp"

namespace fusionloc::nn {

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;
using StridedMap = Eigen::Map<MatR, 0, Eigen::OuterStride<>>;
using CStridedMap = Eigen::Map<const MatR, 0, Eigen::OuterStride<>>;

using detail::input_grad;
using detail::Node;

const Buffer& in_value(const Node& self, std::size_t i) {
  return self.inputs[i]->value;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ArgumentError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ArgumentError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                        shape_str(t.shape()));
  }
}

struct ConvGeometry {
  std::size_t n, c, h, w, o, kh, kw, stride, pad, ho, wo;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t out_area() const { return ho * wo; }
};

void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const std::size_t area = g.out_area();
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    const double* plane = x + ch * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = cols + ((ch * g.kh + ki) * g.kw + kj) * area;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.pad);
          double* dst = row + oy * g.wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = plane + iy * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvGeometry& g, double* dx) {
  const std::size_t area = g.out_area();
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    double* plane = dx + ch * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = cols + ((ch * g.kh + ki) * g.kw + kj) * area;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          const double* src = row + oy * g.wo;
          double* dst = plane + iy * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Buffer out(a.size());
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& g = self.grad;
    for (std::size_t k = 0; k < 2; ++k) {
      if (double* d = input_grad(self, k)) {
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Buffer out(a.size());
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& g = self.grad;
    const auto& av = in_value(self, 0);
    const auto& bv = in_value(self, 1);
    if (double* da = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
    }
    if (double* db = input_grad(self, 1)) {
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  Buffer out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return Tensor::make_result(x.shape(), std::move(out), {x}, [factor](Node& self) {
    if (double* dx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += factor * self.grad[i];
    }
  });
}

Tensor relu(const Tensor& x) {
  Buffer out(x.size());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return Tensor::make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    if (double* dx = input_grad(self, 0)) {
      const auto& y = self.value;
      for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] > 0.0) dx[i] += self.grad[i];
      }
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  Buffer out(x.size());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  return Tensor::make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    if (double* dx = input_grad(self, 0)) {
      const auto& y = self.value;
      for (std::size_t i = 0; i < y.size(); ++i) dx[i] += self.grad[i] * y[i] * (1.0 - y[i]);
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ArgumentError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  Buffer out(x.data().begin(), x.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    if (double* dx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return Tensor::make_result({1}, {total}, {x}, [](Node& self) {
    if (double* dx = input_grad(self, 0)) {
      const double g = self.grad[0];
      const std::size_t n = self.inputs[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) dx[i] += g;
    }
  });
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() == 0 ||
      !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin())) {
    throw ArgumentError("concat_last: incompatible " + shape_str(a.shape()) + " and " +
                        shape_str(b.shape()));
  }
  const std::size_t ca = a.shape().back();
  const std::size_t cb = b.shape().back();
  const std::size_t rows = a.size() / ca;
  Buffer out(rows * (ca + cb));
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(bv.data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  Shape shape = a.shape();
  shape.back() = ca + cb;
  return Tensor::make_result(std::move(shape), std::move(out), {a, b},
                             [rows, ca, cb](Node& self) {
                               const double* g = self.grad.data();
                               if (double* da = input_grad(self, 0)) {
                                 for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t c = 0; c < ca; ++c)
                                     da[r * ca + c] += g[r * (ca + cb) + c];
                               }
                               if (double* db = input_grad(self, 1)) {
                                 for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t c = 0; c < cb; ++c)
                                     db[r * cb + c] += g[r * (ca + cb) + ca + c];
                               }
                             });
}

Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t c = x.shape().back();
  if (begin >= end || end > c) {
    throw ArgumentError("slice_last: bad range for " + shape_str(x.shape()));
  }
  const std::size_t rows = x.size() / c;
  const std::size_t width = end - begin;
  Buffer out(rows * width);
  const auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(xv.data() + r * c + begin, width, out.data() + r * width);
  }
  Shape shape = x.shape();
  shape.back() = width;
  return Tensor::make_result(std::move(shape), std::move(out), {x},
                             [rows, c, begin, width](Node& self) {
                               if (double* dx = input_grad(self, 0)) {
                                 for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t j = 0; j < width; ++j)
                                     dx[r * c + begin + j] += self.grad[r * width + j];
                               }
                             });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(weight, 2, "linear");
  const std::size_t out_dim = weight.dim(0);
  const std::size_t in_dim = weight.dim(1);
  if (x.rank() == 0 || x.shape().back() != in_dim) {
    throw ArgumentError("linear: input " + shape_str(x.shape()) + " vs weight " +
                        shape_str(weight.shape()));
  }
  if (bias.defined() && bias.size() != out_dim) {
    throw ArgumentError("linear: bias size mismatch");
  }
  const std::size_t rows = x.size() / in_dim;
  Buffer out(rows * out_dim);
  {
    CMapR X(x.data().data(), rows, in_dim);
    CMapR W(weight.data().data(), out_dim, in_dim);
    MapR Y(out.data(), rows, out_dim);
    Y.noalias() = X * W.transpose();
    if (bias.defined()) {
      Eigen::Map<const Eigen::RowVectorXd> b(bias.data().data(), out_dim);
      Y.rowwise() += b;
    }
  }
  Shape shape = x.shape();
  shape.back() = out_dim;
  return Tensor::make_result(
      std::move(shape), std::move(out), {x, weight, bias}, [rows, in_dim, out_dim](Node& self) {
        CMapR G(self.grad.data(), rows, out_dim);
        if (double* dx = input_grad(self, 0)) {
          CMapR W(in_value(self, 1).data(), out_dim, in_dim);
          MapR(dx, rows, in_dim).noalias() += G * W;
        }
        if (double* dw = input_grad(self, 1)) {
          CMapR X(in_value(self, 0).data(), rows, in_dim);
          MapR(dw, out_dim, in_dim).noalias() += G.transpose() * X;
        }
        if (double* db = input_grad(self, 2)) {
          Eigen::Map<Eigen::RowVectorXd>(db, out_dim) += G.colwise().sum();
        }
      });
}

Tensor segment_linear(const Tensor& x, const Tensor& weights) {
  require_rank(weights, 3, "segment_linear");
  const std::size_t heads = weights.dim(0);
  const std::size_t dh = weights.dim(1);
  if (weights.dim(2) != dh) throw ArgumentError("segment_linear: weights must be square");
  const std::size_t d = heads * dh;
  if (x.rank() == 0 || x.shape().back() != d) {
    throw ArgumentError("segment_linear: input " + shape_str(x.shape()) + " vs weights " +
                        shape_str(weights.shape()));
  }
  const std::size_t rows = x.size() / d;
  Buffer out(x.size());
  for (std::size_t h = 0; h < heads; ++h) {
    CStridedMap X(x.data().data() + h * dh, rows, dh, Eigen::OuterStride<>(d));
    CMapR W(weights.data().data() + h * dh * dh, dh, dh);
    StridedMap(out.data() + h * dh, rows, dh, Eigen::OuterStride<>(d)).noalias() =
        X * W.transpose();
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, weights}, [rows, heads, dh, d](Node& self) {
        double* dx = input_grad(self, 0);
        double* dw = input_grad(self, 1);
        for (std::size_t h = 0; h < heads; ++h) {
          CStridedMap G(self.grad.data() + h * dh, rows, dh, Eigen::OuterStride<>(d));
          if (dx) {
            CMapR W(in_value(self, 1).data() + h * dh * dh, dh, dh);
            StridedMap(dx + h * dh, rows, dh, Eigen::OuterStride<>(d)).noalias() += G * W;
          }
          if (dw) {
            CStridedMap X(in_value(self, 0).data() + h * dh, rows, dh, Eigen::OuterStride<>(d));
            MapR(dw + h * dh * dh, dh, dh).noalias() += G.transpose() * X;
          }
        }
      });
}

Tensor token_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                       double scale, std::vector<double>* weights_out) {
  require_same_shape(q, k, "token_attention");
  require_same_shape(q, v, "token_attention");
  if (q.rank() == 0 || heads == 0 || q.shape().back() % heads != 0) {
    throw ArgumentError("token_attention: last axis of " + shape_str(q.shape()) +
                        " not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t d = q.shape().back();
  const std::size_t dh = d / heads;
  const std::size_t rows = q.size() / d;
  const std::size_t blocks = rows * heads;

  const bool keep =
      grad_enabled() && (q.requires_grad() || k.requires_grad() || v.requires_grad());
  auto weights = std::make_shared<Buffer>();
  if (keep || weights_out) weights->resize(blocks * dh * dh);

  Buffer out(q.size());
  Buffer row_buf(dh);
  const double* qv = q.data().data();
  const double* kv = k.data().data();
  const double* vv = v.data().data();
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const std::size_t off = blk * dh;  // rows * heads blocks are contiguous segments
    const double* qs = qv + off;
    const double* ks = kv + off;
    const double* vs = vv + off;
    double* os = out.data() + off;
    const Eigen::Map<const Eigen::ArrayXd> key(ks, static_cast<Eigen::Index>(dh));
    const Eigen::Map<const Eigen::ArrayXd> value(vs, static_cast<Eigen::Index>(dh));
    for (std::size_t i = 0; i < dh; ++i) {
      double* dst = weights->empty() ? row_buf.data() : weights->data() + (blk * dh + i) * dh;
      Eigen::Map<Eigen::ArrayXd> a(dst, static_cast<Eigen::Index>(dh));
      a = (scale * qs[i]) * key;
      const double mx = a.maxCoeff<Eigen::PropagateNaN>();
      if (!std::isfinite(mx)) throw NumericError("token_attention: non-finite attention score");
      a = (a - mx).exp();
      a *= 1.0 / a.sum();
      os[i] = (a * value).sum();
    }
  }
  if (weights_out) weights_out->assign(weights->begin(), weights->end());
  if (!keep) weights.reset();

  return Tensor::make_result(
      q.shape(), std::move(out), {q, k, v}, [weights, blocks, dh, scale](Node& self) {
        double* dq = input_grad(self, 0);
        double* dk = input_grad(self, 1);
        double* dv = input_grad(self, 2);
        const double* qv = in_value(self, 0).data();
        const double* kv = in_value(self, 1).data();
        const double* vv = in_value(self, 2).data();
        for (std::size_t blk = 0; blk < blocks; ++blk) {
          const std::size_t off = blk * dh;
          const double* g = self.grad.data() + off;
          const double* o = self.value.data() + off;
          for (std::size_t i = 0; i < dh; ++i) {
            const double* a = weights->data() + (blk * dh + i) * dh;
            const double gi = g[i];
            if (gi == 0.0) continue;
            double qacc = 0.0;
            for (std::size_t j = 0; j < dh; ++j) {
              // dS_ij = A_ij * g_i * (v_j - o_i)
              const double ds = a[j] * gi * (vv[off + j] - o[i]);
              if (dv) dv[off + j] += a[j] * gi;
              qacc += ds * kv[off + j];
              if (dk) dk[off + j] += scale * ds * qv[off + i];
            }
            if (dq) dq[off + i] += scale * qacc;
          }
        }
      });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, std::size_t stride, std::size_t pad) {
  require_rank(x, 4, "conv2d");
  require_rank(weight, 4, "conv2d");
  if (x.dim(1) != weight.dim(1)) {
    throw ArgumentError("conv2d: input " + shape_str(x.shape()) + " vs weight " +
                        shape_str(weight.shape()));
  }
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(2),
                 weight.dim(3), stride, pad, 0, 0};
  if (g.h + 2 * pad < g.kh || g.w + 2 * pad < g.kw || stride == 0) {
    throw ArgumentError("conv2d: kernel larger than padded input");
  }
  g.ho = (g.h + 2 * pad - g.kh) / stride + 1;
  g.wo = (g.w + 2 * pad - g.kw) / stride + 1;

  const std::size_t in_plane = g.c * g.h * g.w;
  const std::size_t out_plane = g.o * g.out_area();
  Buffer out(g.n * out_plane);
  Buffer cols(g.patch() * g.out_area());
  CMapR W(weight.data().data(), g.o, g.patch());
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(x.data().data() + n * in_plane, g, cols.data());
    MapR(out.data() + n * out_plane, g.o, g.out_area()).noalias() =
        W * CMapR(cols.data(), g.patch(), g.out_area());
  }
  return Tensor::make_result(
      {g.n, g.o, g.ho, g.wo}, std::move(out), {x, weight}, [g, in_plane, out_plane](Node& self) {
        double* dx = input_grad(self, 0);
        double* dw = input_grad(self, 1);
        const double* xv = in_value(self, 0).data();
        CMapR W(in_value(self, 1).data(), g.o, g.patch());
        Buffer cols(g.patch() * g.out_area());
        for (std::size_t n = 0; n < g.n; ++n) {
          CMapR G(self.grad.data() + n * out_plane, g.o, g.out_area());
          if (dw) {
            im2col(xv + n * in_plane, g, cols.data());
            MapR(dw, g.o, g.patch()).noalias() +=
                G * CMapR(cols.data(), g.patch(), g.out_area()).transpose();
          }
          if (dx) {
            MapR(cols.data(), g.patch(), g.out_area()).noalias() = W.transpose() * G;
            col2im(cols.data(), g, dx + n * in_plane);
          }
        }
      });
}

Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t pad) {
  require_rank(x, 4, "max_pool2d");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (pad >= kernel || h + 2 * pad < kernel || w + 2 * pad < kernel) {
    throw ArgumentError("max_pool2d: bad geometry for " + shape_str(x.shape()));
  }
  const std::size_t ho = (h + 2 * pad - kernel) / stride + 1;
  const std::size_t wo = (w + 2 * pad - kernel) / stride + 1;
  Buffer out(n * c * ho * wo);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const double* xv = x.data().data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const double* src = xv + plane * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t ki = 0; ki < kernel; ++ki) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ki) -
                          static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kj = 0; kj < kernel; ++kj) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kj) -
                            static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            const std::size_t idx = iy * w + ix;
            if (src[idx] > best) {
              best = src[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t o = (plane * ho + oy) * wo + ox;
        out[o] = best;
        (*argmax)[o] = plane * h * w + best_idx;
      }
    }
  }
  return Tensor::make_result({n, c, ho, wo}, std::move(out), {x}, [argmax](Node& self) {
    if (double* dx = input_grad(self, 0)) {
      for (std::size_t o = 0; o < self.grad.size(); ++o) dx[(*argmax)[o]] += self.grad[o];
    }
  });
}

Tensor global_avg_pool2d(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool2d");
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t area = x.dim(2) * x.dim(3);
  Buffer out(planes);
  const double* xv = x.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < area; ++i) acc += xv[p * area + i];
    out[p] = acc / static_cast<double>(area);
  }
  return Tensor::make_result({x.dim(0), x.dim(1)}, std::move(out), {x}, [planes, area](Node& self) {
    if (double* dx = input_grad(self, 0)) {
      const double inv = 1.0 / static_cast<double>(area);
      for (std::size_t p = 0; p < planes; ++p) {
        const double g = self.grad[p] * inv;
        for (std::size_t i = 0; i < area; ++i) dx[p * area + i] += g;
      }
    }
  });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, double momentum, double eps) {
  if (x.rank() < 2) throw ArgumentError("batch_norm: need [N, C, ...], got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0);
  const std::size_t c = x.dim(1);
  const std::size_t inner = x.size() / (n * c);
  if (gamma.size() != c || beta.size() != c || running_mean.size() != c ||
      running_var.size() != c) {
    throw ArgumentError("batch_norm: parameter size does not match channels");
  }
  const std::size_t count = n * inner;
  const double* xv = x.data().data();
  auto xhat = std::make_shared<Buffer>(x.size());
  auto inv_std = std::make_shared<Buffer>(c);
  Buffer out(x.size());

  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean = 0.0;
    double var = 0.0;
    if (training) {
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = xv + (b * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) mean += p[i];
      }
      mean /= static_cast<double>(count);
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = xv + (b * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) var += (p[i] - mean) * (p[i] - mean);
      }
      var /= static_cast<double>(count);
      const double unbiased =
          count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
      running_mean.data()[ch] = (1.0 - momentum) * running_mean.data()[ch] + momentum * mean;
      running_var.data()[ch] = (1.0 - momentum) * running_var.data()[ch] + momentum * unbiased;
    } else {
      mean = running_mean.data()[ch];
      var = running_var.data()[ch];
    }
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[ch] = is;
    const double gm = gamma.data()[ch];
    const double bt = beta.data()[ch];
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t base = (b * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const double xh = (xv[base + i] - mean) * is;
        (*xhat)[base + i] = xh;
        out[base + i] = gm * xh + bt;
      }
    }
  }

  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [xhat, inv_std, n, c, inner, count, training](Node& self) {
        double* dx = input_grad(self, 0);
        double* dgamma = input_grad(self, 1);
        double* dbeta = input_grad(self, 2);
        const auto& gamma_v = in_value(self, 1);
        const auto& g = self.grad;
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sum_g = 0.0;
          double sum_gx = 0.0;
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t base = (b * c + ch) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              sum_g += g[base + i];
              sum_gx += g[base + i] * (*xhat)[base + i];
            }
          }
          if (dgamma) dgamma[ch] += sum_gx;
          if (dbeta) dbeta[ch] += sum_g;
          if (!dx) continue;
          const double k = gamma_v[ch] * (*inv_std)[ch];
          const double mean_g = sum_g / static_cast<double>(count);
          const double mean_gx = sum_gx / static_cast<double>(count);
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t base = (b * c + ch) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              dx[base + i] += training
                                  ? k * (g[base + i] - mean_g - (*xhat)[base + i] * mean_gx)
                                  : k * g[base + i];
            }
          }
        }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0) throw ArgumentError("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (gamma.size() != d || beta.size() != d) {
    throw ArgumentError("layer_norm: parameter size does not match feature dimension");
  }
  const std::size_t rows = x.size() / d;
  const double* xv = x.data().data();
  auto xhat = std::make_shared<Buffer>(x.size());
  auto inv_std = std::make_shared<Buffer>(rows);
  Buffer out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* p = xv + r * d;
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += p[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (p[i] - mean) * (p[i] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t i = 0; i < d; ++i) {
      const double xh = (p[i] - mean) * is;
      (*xhat)[r * d + i] = xh;
      out[r * d + i] = gamma.data()[i] * xh + beta.data()[i];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta}, [xhat, inv_std, rows, d](Node& self) {
        double* dx = input_grad(self, 0);
        double* dgamma = input_grad(self, 1);
        double* dbeta = input_grad(self, 2);
        const auto& gamma_v = in_value(self, 1);
        const auto& g = self.grad;
        Buffer gg(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_g = 0.0;
          double mean_gx = 0.0;
          for (std::size_t i = 0; i < d; ++i) {
            const std::size_t idx = r * d + i;
            if (dgamma) dgamma[i] += g[idx] * (*xhat)[idx];
            if (dbeta) dbeta[i] += g[idx];
            gg[i] = g[idx] * gamma_v[i];
            mean_g += gg[i];
            mean_gx += gg[i] * (*xhat)[idx];
          }
          if (!dx) continue;
          mean_g /= static_cast<double>(d);
          mean_gx /= static_cast<double>(d);
          for (std::size_t i = 0; i < d; ++i) {
            const std::size_t idx = r * d + i;
            dx[idx] += (*inv_std)[r] * (gg[i] - mean_g - (*xhat)[idx] * mean_gx);
          }
        }
      });
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0) throw ArgumentError("dropout: p must be in [0, 1)");
  if (!training || p == 0.0) return x;
  auto mask = std::make_shared<Buffer>(x.size());
  std::bernoulli_distribution keep(1.0 - p);
  const double scale_kept = 1.0 / (1.0 - p);
  Buffer out(x.size());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = keep(rng) ? scale_kept : 0.0;
    out[i] = xv[i] * (*mask)[i];
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [mask](Node& self) {
    if (double* dx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i] * (*mask)[i];
    }
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::int32_t> index, const Shape& out_prefix) {
  require_rank(x, 3, "gather_rows");
  const std::size_t b = x.dim(0);
  const std::size_t n = x.dim(1);
  const std::size_t c = x.dim(2);
  if (out_prefix.empty() || out_prefix[0] != b || numel(out_prefix) != index.size()) {
    throw ArgumentError("gather_rows: index layout does not match batch");
  }
  const std::size_t per_batch = index.size() / b;
  auto idx = std::make_shared<std::vector<std::int32_t>>(index.begin(), index.end());
  Buffer out(index.size() * c);
  const double* xv = x.data().data();
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t g = 0; g < per_batch; ++g) {
      const auto src = (*idx)[bi * per_batch + g];
      if (src < 0 || static_cast<std::size_t>(src) >= n) {
        throw ArgumentError("gather_rows: index out of range");
      }
      std::copy_n(xv + (bi * n + src) * c, c, out.data() + (bi * per_batch + g) * c);
    }
  }
  Shape shape = out_prefix;
  shape.push_back(c);
  return Tensor::make_result(std::move(shape), std::move(out), {x},
                             [idx, b, n, c, per_batch](Node& self) {
                               double* dx = input_grad(self, 0);
                               if (!dx) return;
                               for (std::size_t bi = 0; bi < b; ++bi) {
                                 for (std::size_t g = 0; g < per_batch; ++g) {
                                   const auto src = (*idx)[bi * per_batch + g];
                                   const double* gr = self.grad.data() + (bi * per_batch + g) * c;
                                   double* dst = dx + (bi * n + src) * c;
                                   for (std::size_t j = 0; j < c; ++j) dst[j] += gr[j];
                                 }
                               }
                             });
}

Tensor subtract_centers(const Tensor& grouped, const Tensor& centers) {
  require_rank(grouped, 4, "subtract_centers");
  require_rank(centers, 3, "subtract_centers");
  const std::size_t b = grouped.dim(0), m = grouped.dim(1), k = grouped.dim(2),
                    c = grouped.dim(3);
  if (centers.dim(0) != b || centers.dim(1) != m || centers.dim(2) != c) {
    throw ArgumentError("subtract_centers: " + shape_str(grouped.shape()) + " vs " +
                        shape_str(centers.shape()));
  }
  Buffer out(grouped.size());
  const double* gv = grouped.data().data();
  const double* cv = centers.data().data();
  for (std::size_t bm = 0; bm < b * m; ++bm) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t o = (bm * k + kk) * c + j;
        out[o] = gv[o] - cv[bm * c + j];
      }
    }
  }
  return Tensor::make_result(grouped.shape(), std::move(out), {grouped, centers},
                             [b, m, k, c](Node& self) {
                               double* dg = input_grad(self, 0);
                               double* dc = input_grad(self, 1);
                               for (std::size_t bm = 0; bm < b * m; ++bm) {
                                 for (std::size_t kk = 0; kk < k; ++kk) {
                                   for (std::size_t j = 0; j < c; ++j) {
                                     const std::size_t o = (bm * k + kk) * c + j;
                                     if (dg) dg[o] += self.grad[o];
                                     if (dc) dc[bm * c + j] -= self.grad[o];
                                   }
                                 }
                               }
                             });
}

Tensor max_reduce(const Tensor& x) {
  if (x.rank() < 2) throw ArgumentError("max_reduce: need rank >= 2, got " + shape_str(x.shape()));
  const std::size_t c = x.shape()[x.rank() - 1];
  const std::size_t k = x.shape()[x.rank() - 2];
  const std::size_t outer = x.size() / (k * c);
  Buffer out(outer * c);
  auto argmax = std::make_shared<std::vector<std::size_t>>(outer * c);
  const double* xv = x.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < c; ++j) {
      std::size_t best = o * k * c + j;
      for (std::size_t kk = 1; kk < k; ++kk) {
        const std::size_t idx = (o * k + kk) * c + j;
        if (xv[idx] > xv[best]) best = idx;
      }
      out[o * c + j] = xv[best];
      (*argmax)[o * c + j] = best;
    }
  }
  Shape shape(x.shape().begin(), x.shape().end() - 2);
  shape.push_back(c);
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [argmax](Node& self) {
    if (double* dx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) dx[(*argmax)[i]] += self.grad[i];
    }
  });
}

}  // namespace fusionloc::nn
