// src/ops.cc

// Copyright 2026  The mfa authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "mfa/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gemm.h"
#include "mfa/error.h"

namespace mfa {

using internal::Gemm;
using internal::Node;

namespace {

void Require(bool ok, const std::string &what) {
  if (!ok) throw Error(ErrorCode::kShapeMismatch, what);
}

int NormAxis(int axis, int rank) {
  if (axis < 0) axis += rank;
  Require(axis >= 0 && axis < rank,
          "axis " + std::to_string(axis) + " out of range for rank " +
              std::to_string(rank));
  return axis;
}

Index Prod(const Shape &s, std::size_t begin, std::size_t end) {
  Index n = 1;
  for (std::size_t i = begin; i < end; ++i) n *= s[i];
  return n;
}

// Number of times b is tiled to cover a; throws unless b's shape is a suffix
// of a's.
Index SuffixTiles(const Tensor &a, const Tensor &b, const char *op) {
  const Shape &sa = a.shape(), &sb = b.shape();
  bool ok = sb.size() <= sa.size() &&
            std::equal(sb.begin(), sb.end(), sa.end() - sb.size());
  Require(ok, std::string(op) + ": cannot broadcast " + ShapeString(sb) +
                  " onto " + ShapeString(sa));
  return a.numel() / b.numel();
}

template <typename Fwd, typename Deriv>
Tensor Unary(const char *op, const Tensor &x, Fwd fwd, Deriv deriv) {
  std::span<const double> xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = fwd(xd[i]);
  return MakeOpResult(op, x.shape(), std::move(out), {x}, [deriv](Node &self) {
    double *gx = self.InputGrad(0);
    if (!gx) return;
    const std::vector<double> &xin = self.inputs[0]->data;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      gx[i] += self.grad[i] * deriv(xin[i], self.data[i]);
  });
}

double SigmoidScalar(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor Add(const Tensor &a, const Tensor &b) {
  Index tiles = SuffixTiles(a, b, "add");
  Index inner = b.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  std::span<const double> bd = b.data();
  for (Index t = 0; t < tiles; ++t)
    for (Index j = 0; j < inner; ++j) out[t * inner + j] += bd[j];
  return MakeOpResult("add", a.shape(), std::move(out), {a, b},
                      [tiles, inner](Node &self) {
    const std::vector<double> &g = self.grad;
    if (double *ga = self.InputGrad(0))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (double *gb = self.InputGrad(1))
      for (Index t = 0; t < tiles; ++t)
        for (Index j = 0; j < inner; ++j) gb[j] += g[t * inner + j];
  });
}

Tensor Sub(const Tensor &a, const Tensor &b) {
  Index tiles = SuffixTiles(a, b, "sub");
  Index inner = b.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  std::span<const double> bd = b.data();
  for (Index t = 0; t < tiles; ++t)
    for (Index j = 0; j < inner; ++j) out[t * inner + j] -= bd[j];
  return MakeOpResult("sub", a.shape(), std::move(out), {a, b},
                      [tiles, inner](Node &self) {
    const std::vector<double> &g = self.grad;
    if (double *ga = self.InputGrad(0))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (double *gb = self.InputGrad(1))
      for (Index t = 0; t < tiles; ++t)
        for (Index j = 0; j < inner; ++j) gb[j] -= g[t * inner + j];
  });
}

Tensor Mul(const Tensor &a, const Tensor &b) {
  Index tiles = SuffixTiles(a, b, "mul");
  Index inner = b.numel();
  std::span<const double> ad = a.data(), bd = b.data();
  std::vector<double> out(ad.size());
  for (Index t = 0; t < tiles; ++t)
    for (Index j = 0; j < inner; ++j)
      out[t * inner + j] = ad[t * inner + j] * bd[j];
  return MakeOpResult("mul", a.shape(), std::move(out), {a, b},
                      [tiles, inner](Node &self) {
    const std::vector<double> &g = self.grad;
    const std::vector<double> &av = self.inputs[0]->data;
    const std::vector<double> &bv = self.inputs[1]->data;
    if (double *ga = self.InputGrad(0))
      for (Index t = 0; t < tiles; ++t)
        for (Index j = 0; j < inner; ++j)
          ga[t * inner + j] += g[t * inner + j] * bv[j];
    if (double *gb = self.InputGrad(1))
      for (Index t = 0; t < tiles; ++t)
        for (Index j = 0; j < inner; ++j)
          gb[j] += g[t * inner + j] * av[t * inner + j];
  });
}

Tensor Scale(const Tensor &a, double c) {
  return Unary("scale", a, [c](double v) { return c * v; },
               [c](double, double) { return c; });
}

Tensor AddScalar(const Tensor &a, double c) {
  return Unary("add_scalar", a, [c](double v) { return v + c; },
               [](double, double) { return 1.0; });
}

Tensor Relu(const Tensor &x) {
  return Unary("relu", x, [](double v) { return v > 0 ? v : 0.0; },
               [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor Tanh(const Tensor &x) {
  return Unary("tanh", x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor Sigmoid(const Tensor &x) {
  return Unary("sigmoid", x, SigmoidScalar,
               [](double, double y) { return y * (1.0 - y); });
}

Tensor Swish(const Tensor &x) {
  return Unary("swish", x, [](double v) { return v * SigmoidScalar(v); },
               [](double v, double) {
                 double s = SigmoidScalar(v);
                 return s + v * s * (1.0 - s);
               });
}

Tensor Sqrt(const Tensor &x) {
  return Unary("sqrt", x, [](double v) { return std::sqrt(v); },
               [](double, double y) { return 0.5 / y; });
}

Tensor ClampMin(const Tensor &x, double floor) {
  return Unary("clamp_min", x,
               [floor](double v) { return v > floor ? v : floor; },
               [floor](double v, double) { return v > floor ? 1.0 : 0.0; });
}

Tensor Glu(const Tensor &x, int axis) {
  axis = NormAxis(axis, x.rank());
  const Shape &s = x.shape();
  Index width = s[static_cast<std::size_t>(axis)];
  Require(width % 2 == 0, "glu: odd split dimension in " + ShapeString(s));
  Index half = width / 2;
  Index outer = Prod(s, 0, static_cast<std::size_t>(axis));
  Index inner = Prod(s, static_cast<std::size_t>(axis) + 1, s.size());
  Shape out_shape = s;
  out_shape[static_cast<std::size_t>(axis)] = half;
  std::span<const double> xd = x.data();
  std::vector<double> out(static_cast<std::size_t>(outer * half * inner));
  for (Index o = 0; o < outer; ++o)
    for (Index c = 0; c < half; ++c)
      for (Index i = 0; i < inner; ++i) {
        double a = xd[(o * width + c) * inner + i];
        double b = xd[(o * width + c + half) * inner + i];
        out[(o * half + c) * inner + i] = a * SigmoidScalar(b);
      }
  return MakeOpResult("glu", out_shape, std::move(out), {x},
                      [outer, half, width, inner](Node &self) {
    double *gx = self.InputGrad(0);
    if (!gx) return;
    const std::vector<double> &xin = self.inputs[0]->data;
    for (Index o = 0; o < outer; ++o)
      for (Index c = 0; c < half; ++c)
        for (Index i = 0; i < inner; ++i) {
          Index ia = (o * width + c) * inner + i;
          Index ib = (o * width + c + half) * inner + i;
          double sb = SigmoidScalar(xin[ib]);
          double g = self.grad[(o * half + c) * inner + i];
          gx[ia] += g * sb;
          gx[ib] += g * xin[ia] * sb * (1.0 - sb);
        }
  });
}

Tensor Dropout(const Tensor &x, double p, bool train, std::mt19937_64 &rng) {
  if (p < 0.0 || p >= 1.0)
    throw Error(ErrorCode::kInvalidArgument, "dropout p must be in [0, 1)");
  if (!train || p == 0.0) return x;
  std::vector<double> mask(static_cast<std::size_t>(x.numel()));
  const double keep_scale = 1.0 / (1.0 - p);
  for (double &m : mask) {
    // 53-bit uniform in [0, 1), identical on every platform for a given seed.
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    m = u < p ? 0.0 : keep_scale;
  }
  std::span<const double> xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] * mask[i];
  return MakeOpResult("dropout", x.shape(), std::move(out), {x},
                      [mask = std::move(mask)](Node &self) {
    if (double *gx = self.InputGrad(0))
      for (std::size_t i = 0; i < mask.size(); ++i)
        gx[i] += self.grad[i] * mask[i];
  });
}

Tensor Softmax(const Tensor &x) {
  Require(x.rank() >= 1, "softmax needs rank >= 1");
  Index n = x.dim(-1);
  Index rows = x.numel() / n;
  std::span<const double> xd = x.data();
  std::vector<double> out(xd.size());
  for (Index r = 0; r < rows; ++r) {
    const double *in = xd.data() + r * n;
    double *o = out.data() + r * n;
    double mx = *std::max_element(in, in + n);
    double sum = 0.0;
    for (Index j = 0; j < n; ++j) sum += (o[j] = std::exp(in[j] - mx));
    for (Index j = 0; j < n; ++j) o[j] /= sum;
  }
  return MakeOpResult("softmax", x.shape(), std::move(out), {x},
                      [rows, n](Node &self) {
    double *gx = self.InputGrad(0);
    if (!gx) return;
    for (Index r = 0; r < rows; ++r) {
      const double *y = self.data.data() + r * n;
      const double *g = self.grad.data() + r * n;
      double dot = 0.0;
      for (Index j = 0; j < n; ++j) dot += g[j] * y[j];
      for (Index j = 0; j < n; ++j) gx[r * n + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor CrossEntropy(const Tensor &logits, const std::vector<int> &labels) {
  Require(logits.rank() == 2, "cross_entropy expects [batch, C] logits");
  Index batch = logits.dim(0), classes = logits.dim(1);
  Require(static_cast<Index>(labels.size()) == batch,
          "cross_entropy: label count does not match batch");
  for (int y : labels) {
    if (y < 0 || y >= classes)
      throw Error(ErrorCode::kLabelOutOfRange,
                  "label " + std::to_string(y) + " with " +
                      std::to_string(classes) + " classes");
  }
  std::span<const double> xd = logits.data();
  std::vector<double> probs(xd.size());
  double loss = 0.0;
  for (Index b = 0; b < batch; ++b) {
    const double *in = xd.data() + b * classes;
    const Index arg = std::max_element(in, in + classes) - in;
    const double mx = in[arg];
    // The arg-max term is exactly 1; keeping it out of `rest` lets log1p
    // resolve losses far below machine epsilon.
    double rest = 0.0;
    for (Index j = 0; j < classes; ++j) {
      probs[b * classes + j] = std::exp(in[j] - mx);
      if (j != arg) rest += probs[b * classes + j];
    }
    for (Index j = 0; j < classes; ++j) probs[b * classes + j] /= 1.0 + rest;
    loss += (mx - in[labels[b]]) + std::log1p(rest);
  }
  loss /= static_cast<double>(batch);
  return MakeOpResult("cross_entropy", {}, {loss}, {logits},
                      [probs = std::move(probs), labels, batch,
                       classes](Node &self) {
    double *gx = self.InputGrad(0);
    if (!gx) return;
    double g = self.grad[0] / static_cast<double>(batch);
    for (Index b = 0; b < batch; ++b)
      for (Index j = 0; j < classes; ++j) {
        double target = (j == labels[b]) ? 1.0 : 0.0;
        gx[b * classes + j] += g * (probs[b * classes + j] - target);
      }
  });
}

Tensor L2Normalize(const Tensor &x, double eps) {
  Index n = x.dim(-1);
  Index rows = x.numel() / n;
  std::span<const double> xd = x.data();
  std::vector<double> out(xd.size());
  std::vector<double> norms(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (Index j = 0; j < n; ++j) ss += xd[r * n + j] * xd[r * n + j];
    double norm = std::max(std::sqrt(ss), eps);
    norms[r] = norm;
    for (Index j = 0; j < n; ++j) out[r * n + j] = xd[r * n + j] / norm;
  }
  return MakeOpResult("l2_normalize", x.shape(), std::move(out), {x},
                      [norms = std::move(norms), rows, n, eps](Node &self) {
    double *gx = self.InputGrad(0);
    if (!gx) return;
    for (Index r = 0; r < rows; ++r) {
      const double *y = self.data.data() + r * n;
      const double *g = self.grad.data() + r * n;
      if (norms[r] <= eps) {
        // Clamped branch: y = x / eps is linear.
        for (Index j = 0; j < n; ++j) gx[r * n + j] += g[j] / eps;
        continue;
      }
      double dot = 0.0;
      for (Index j = 0; j < n; ++j) dot += y[j] * g[j];
      for (Index j = 0; j < n; ++j)
        gx[r * n + j] += (g[j] - y[j] * dot) / norms[r];
    }
  });
}

Tensor Sum(const Tensor &x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return MakeOpResult("sum", {}, {s}, {x}, [](Node &self) {
    if (double *gx = self.InputGrad(0))
      for (std::size_t i = 0; i < self.inputs[0]->data.size(); ++i)
        gx[i] += self.grad[0];
  });
}

Tensor Mean(const Tensor &x) {
  return Scale(Sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor MeanAxis(const Tensor &x, int axis) {
  axis = NormAxis(axis, x.rank());
  const Shape &s = x.shape();
  auto ax = static_cast<std::size_t>(axis);
  Index outer = Prod(s, 0, ax), len = s[ax], inner = Prod(s, ax + 1, s.size());
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != ax) out_shape.push_back(s[i]);
  std::span<const double> xd = x.data();
  std::vector<double> out(static_cast<std::size_t>(outer * inner), 0.0);
  for (Index o = 0; o < outer; ++o)
    for (Index l = 0; l < len; ++l)
      for (Index i = 0; i < inner; ++i)
        out[o * inner + i] += xd[(o * len + l) * inner + i];
  for (double &v : out) v /= static_cast<double>(len);
  return MakeOpResult("mean_axis", out_shape, std::move(out), {x},
                      [outer, len, inner](Node &self) {
    double *gx = self.InputGrad(0);
    if (!gx) return;
    double w = 1.0 / static_cast<double>(len);
    for (Index o = 0; o < outer; ++o)
      for (Index l = 0; l < len; ++l)
        for (Index i = 0; i < inner; ++i)
          gx[(o * len + l) * inner + i] += w * self.grad[o * inner + i];
  });
}

Tensor Matmul(const Tensor &a, const Tensor &b, bool transpose_b) {
  Require(a.rank() >= 2 && b.rank() >= 2, "matmul needs rank >= 2 operands");
  Index m = a.dim(-2), k = a.dim(-1);
  Index bk = transpose_b ? b.dim(-1) : b.dim(-2);
  Index n = transpose_b ? b.dim(-2) : b.dim(-1);
  Require(k == bk, "matmul inner dims differ: " + ShapeString(a.shape()) +
                       " x " + ShapeString(b.shape()));
  bool shared_b = b.rank() == 2;
  Index batch = a.numel() / (m * k);
  if (!shared_b) {
    Require(a.rank() == b.rank() &&
                std::equal(a.shape().begin(), a.shape().end() - 2,
                           b.shape().begin()),
            "matmul batch dims differ: " + ShapeString(a.shape()) + " x " +
                ShapeString(b.shape()));
  }
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(n);
  std::vector<double> out(static_cast<std::size_t>(batch * m * n));
  const double *ad = a.data().data(), *bd = b.data().data();
  if (shared_b) {
    Gemm(false, transpose_b, batch * m, n, k, ad, bd, out.data(), false);
  } else {
    for (Index i = 0; i < batch; ++i)
      Gemm(false, transpose_b, m, n, k, ad + i * m * k, bd + i * k * n,
           out.data() + i * m * n, false);
  }
  return MakeOpResult("matmul", out_shape, std::move(out), {a, b},
                      [=](Node &self) {
    const double *g = self.grad.data();
    const double *av = self.inputs[0]->data.data();
    const double *bv = self.inputs[1]->data.data();
    double *ga = self.InputGrad(0);
    double *gb = self.InputGrad(1);
    Index rows = shared_b ? batch * m : m;
    Index reps = shared_b ? 1 : batch;
    Index b_stride = shared_b ? 0 : k * n;
    for (Index i = 0; i < reps; ++i) {
      const double *gi = g + i * rows * n;
      const double *ai = av + i * rows * k;
      const double *bi = bv + i * b_stride;
      // dA = dC * op(B)^T
      if (ga) Gemm(false, !transpose_b, rows, k, n, gi, bi, ga + i * rows * k, true);
      if (gb) {
        if (transpose_b)  // B stored [n, k]: dB = dC^T * A
          Gemm(true, false, n, k, rows, gi, ai, gb + i * b_stride, true);
        else  // dB = A^T * dC
          Gemm(true, false, k, n, rows, ai, gi, gb + i * b_stride, true);
      }
    }
  });
}

Tensor Linear(const Tensor &x, const Tensor &weight, const Tensor &bias) {
  Require(weight.rank() == 2, "linear weight must be [out, in]");
  Index in = weight.dim(1), out_dim = weight.dim(0);
  Require(x.dim(-1) == in, "linear: input width " + std::to_string(x.dim(-1)) +
                               " != weight in " + std::to_string(in));
  if (bias.defined())
    Require(bias.rank() == 1 && bias.dim(0) == out_dim, "linear: bad bias");
  Index rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  std::vector<double> out(static_cast<std::size_t>(rows * out_dim));
  Gemm(false, true, rows, out_dim, in, x.data().data(), weight.data().data(),
       out.data(), false);
  if (bias.defined()) {
    std::span<const double> bd = bias.data();
    for (Index r = 0; r < rows; ++r)
      for (Index j = 0; j < out_dim; ++j) out[r * out_dim + j] += bd[j];
  }
  std::vector<Tensor> inputs = {x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return MakeOpResult("linear", out_shape, std::move(out), inputs,
                      [rows, in, out_dim](Node &self) {
    const double *g = self.grad.data();
    if (double *gx = self.InputGrad(0))
      Gemm(false, false, rows, in, out_dim, g, self.inputs[1]->data.data(), gx,
           true);
    if (double *gw = self.InputGrad(1))
      Gemm(true, false, out_dim, in, rows, g, self.inputs[0]->data.data(), gw,
           true);
    if (self.inputs.size() > 2) {
      if (double *gb = self.InputGrad(2))
        for (Index r = 0; r < rows; ++r)
          for (Index j = 0; j < out_dim; ++j) gb[j] += g[r * out_dim + j];
    }
  });
}

Tensor Reshape(const Tensor &x, const Shape &shape) {
  Require(NumElements(shape) == x.numel(),
          "reshape " + ShapeString(x.shape()) + " -> " + ShapeString(shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  return MakeOpResult("reshape", shape, std::move(out), {x}, [](Node &self) {
    if (double *gx = self.InputGrad(0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor Permute(const Tensor &x, const std::vector<int> &perm) {
  int r = x.rank();
  Require(static_cast<int>(perm.size()) == r, "permute: rank mismatch");
  std::vector<bool> seen(static_cast<std::size_t>(r), false);
  for (int p : perm) {
    Require(p >= 0 && p < r && !seen[p], "permute: invalid permutation");
    seen[p] = true;
  }
  const Shape &s = x.shape();
  std::vector<Index> in_strides(static_cast<std::size_t>(r));
  Index acc = 1;
  for (int i = r - 1; i >= 0; --i) {
    in_strides[i] = acc;
    acc *= s[i];
  }
  Shape out_shape(static_cast<std::size_t>(r));
  std::vector<Index> strides(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    out_shape[i] = s[perm[i]];
    strides[i] = in_strides[perm[i]];
  }
  // src[j] is the input offset of output element j.
  std::vector<Index> src(static_cast<std::size_t>(x.numel()));
  std::vector<Index> idx(static_cast<std::size_t>(r), 0);
  Index offset = 0;
  for (std::size_t j = 0; j < src.size(); ++j) {
    src[j] = offset;
    for (int d = r - 1; d >= 0; --d) {
      offset += strides[d];
      if (++idx[d] < out_shape[d]) break;
      offset -= strides[d] * out_shape[d];
      idx[d] = 0;
    }
  }
  std::span<const double> xd = x.data();
  std::vector<double> out(src.size());
  for (std::size_t j = 0; j < src.size(); ++j) out[j] = xd[src[j]];
  return MakeOpResult("permute", out_shape, std::move(out), {x},
                      [src = std::move(src)](Node &self) {
    if (double *gx = self.InputGrad(0))
      for (std::size_t j = 0; j < src.size(); ++j) gx[src[j]] += self.grad[j];
  });
}

Tensor Concat(const std::vector<Tensor> &parts, int axis) {
  Require(!parts.empty(), "concat of nothing");
  int r = parts[0].rank();
  axis = NormAxis(axis, r);
  auto ax = static_cast<std::size_t>(axis);
  const Shape &s0 = parts[0].shape();
  Index outer = Prod(s0, 0, ax), inner = Prod(s0, ax + 1, s0.size());
  Shape out_shape = s0;
  out_shape[ax] = 0;
  std::vector<Index> widths;
  for (const Tensor &p : parts) {
    const Shape &s = p.shape();
    bool ok = p.rank() == r;
    for (int i = 0; ok && i < r; ++i)
      ok = (i == axis) || s[i] == s0[i];
    Require(ok, "concat: incompatible " + ShapeString(s) + " vs " +
                    ShapeString(s0));
    widths.push_back(s[ax] * inner);
    out_shape[ax] += s[ax];
  }
  Index row = out_shape[ax] * inner;
  std::vector<double> out(static_cast<std::size_t>(outer * row));
  Index col = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    std::span<const double> pd = parts[p].data();
    for (Index o = 0; o < outer; ++o)
      std::copy_n(pd.data() + o * widths[p], widths[p],
                  out.data() + o * row + col);
    col += widths[p];
  }
  return MakeOpResult("concat", out_shape, std::move(out), parts,
                      [widths, outer, row](Node &self) {
    Index c = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      if (double *gp = self.InputGrad(p))
        for (Index o = 0; o < outer; ++o)
          for (Index j = 0; j < widths[p]; ++j)
            gp[o * widths[p] + j] += self.grad[o * row + c + j];
      c += widths[p];
    }
  });
}

Tensor Slice(const Tensor &x, int axis, Index start, Index length) {
  axis = NormAxis(axis, x.rank());
  auto ax = static_cast<std::size_t>(axis);
  const Shape &s = x.shape();
  Require(start >= 0 && length > 0 && start + length <= s[ax],
          "slice out of range on " + ShapeString(s));
  Index outer = Prod(s, 0, ax), inner = Prod(s, ax + 1, s.size());
  Index in_row = s[ax] * inner, out_row = length * inner, off = start * inner;
  Shape out_shape = s;
  out_shape[ax] = length;
  std::span<const double> xd = x.data();
  std::vector<double> out(static_cast<std::size_t>(outer * out_row));
  for (Index o = 0; o < outer; ++o)
    std::copy_n(xd.data() + o * in_row + off, out_row,
                out.data() + o * out_row);
  return MakeOpResult("slice", out_shape, std::move(out), {x},
                      [outer, in_row, out_row, off](Node &self) {
    if (double *gx = self.InputGrad(0))
      for (Index o = 0; o < outer; ++o)
        for (Index j = 0; j < out_row; ++j)
          gx[o * in_row + off + j] += self.grad[o * out_row + j];
  });
}

Tensor RelativeGather(const Tensor &p) {
  Require(p.rank() >= 2, "relative_gather needs rank >= 2");
  Index t_len = p.dim(-2), r_len = p.dim(-1);
  Require(r_len == 2 * t_len - 1,
          "relative_gather expects [..., T, 2T-1], got " + ShapeString(p.shape()));
  Index batch = p.numel() / (t_len * r_len);
  Shape out_shape = p.shape();
  out_shape.back() = t_len;
  std::span<const double> pd = p.data();
  std::vector<double> out(static_cast<std::size_t>(batch * t_len * t_len));
  for (Index b = 0; b < batch; ++b)
    for (Index t = 0; t < t_len; ++t) {
      const double *row = pd.data() + (b * t_len + t) * r_len;
      double *o = out.data() + (b * t_len + t) * t_len;
      for (Index tau = 0; tau < t_len; ++tau) o[tau] = row[t - tau + t_len - 1];
    }
  return MakeOpResult("relative_gather", out_shape, std::move(out), {p},
                      [batch, t_len, r_len](Node &self) {
    double *gp = self.InputGrad(0);
    if (!gp) return;
    for (Index b = 0; b < batch; ++b)
      for (Index t = 0; t < t_len; ++t) {
        double *row = gp + (b * t_len + t) * r_len;
        const double *g = self.grad.data() + (b * t_len + t) * t_len;
        for (Index tau = 0; tau < t_len; ++tau) row[t - tau + t_len - 1] += g[tau];
      }
  });
}

Tensor LayerNorm(const Tensor &x, const Tensor &gamma, const Tensor &beta,
                 double eps) {
  Index d = x.dim(-1);
  Require(gamma.rank() == 1 && gamma.dim(0) == d && beta.rank() == 1 &&
              beta.dim(0) == d,
          "layer_norm: affine params do not match width " + std::to_string(d));
  Index rows = x.numel() / d;
  std::span<const double> xd = x.data(), gd = gamma.data(), bd = beta.data();
  std::vector<double> out(xd.size()), xhat(xd.size());
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r) {
    const double *in = xd.data() + r * d;
    double mean = 0.0;
    for (Index j = 0; j < d; ++j) mean += in[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (Index j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<double>(d);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (Index j = 0; j < d; ++j) {
      double h = (in[j] - mean) * is;
      xhat[r * d + j] = h;
      out[r * d + j] = gd[j] * h + bd[j];
    }
  }
  return MakeOpResult("layer_norm", x.shape(), std::move(out), {x, gamma, beta},
                      [xhat = std::move(xhat), inv_std = std::move(inv_std),
                       rows, d](Node &self) {
    const double *g = self.grad.data();
    const std::vector<double> &gam = self.inputs[1]->data;
    if (double *gx = self.InputGrad(0)) {
      for (Index r = 0; r < rows; ++r) {
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (Index j = 0; j < d; ++j) {
          double dh = g[r * d + j] * gam[j];
          mean_dh += dh;
          mean_dh_h += dh * xhat[r * d + j];
        }
        mean_dh /= static_cast<double>(d);
        mean_dh_h /= static_cast<double>(d);
        for (Index j = 0; j < d; ++j) {
          double dh = g[r * d + j] * gam[j];
          gx[r * d + j] +=
              inv_std[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_h);
        }
      }
    }
    if (double *gg = self.InputGrad(1))
      for (Index r = 0; r < rows; ++r)
        for (Index j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
    if (double *gb = self.InputGrad(2))
      for (Index r = 0; r < rows; ++r)
        for (Index j = 0; j < d; ++j) gb[j] += g[r * d + j];
  });
}

Tensor BatchNorm1d(const Tensor &x, const Tensor &gamma, const Tensor &beta,
                   BatchNormState &state, bool train, double momentum,
                   double eps) {
  Require(x.rank() == 2 || x.rank() == 3,
          "batch_norm_1d expects [batch, C] or [batch, C, T]");
  Index batch = x.dim(0), channels = x.dim(1);
  Index t_len = x.rank() == 3 ? x.dim(2) : 1;
  Require(gamma.numel() == channels && beta.numel() == channels &&
              state.running_mean.numel() == channels &&
              state.running_var.numel() == channels,
          "batch_norm_1d: parameter width mismatch");
  Index count = batch * t_len;
  if (train && count < 2)
    throw Error(ErrorCode::kDegenerateBatch,
                "batch norm in train mode needs at least 2 values per channel");
  std::span<const double> xd = x.data(), gd = gamma.data(), bd = beta.data();
  std::vector<double> mean(static_cast<std::size_t>(channels));
  std::vector<double> inv_std(static_cast<std::size_t>(channels));
  auto at = [channels, t_len](Index b, Index c, Index t) {
    return (b * channels + c) * t_len + t;
  };
  if (train) {
    std::span<double> rm = state.running_mean.mutable_data();
    std::span<double> rv = state.running_var.mutable_data();
    for (Index c = 0; c < channels; ++c) {
      double m = 0.0;
      for (Index b = 0; b < batch; ++b)
        for (Index t = 0; t < t_len; ++t) m += xd[at(b, c, t)];
      m /= static_cast<double>(count);
      double v = 0.0;
      for (Index b = 0; b < batch; ++b)
        for (Index t = 0; t < t_len; ++t) {
          double dv = xd[at(b, c, t)] - m;
          v += dv * dv;
        }
      v /= static_cast<double>(count);
      mean[c] = m;
      inv_std[c] = 1.0 / std::sqrt(v + eps);
      double unbiased = v * static_cast<double>(count) /
                        static_cast<double>(count - 1);
      rm[c] = (1.0 - momentum) * rm[c] + momentum * m;
      rv[c] = (1.0 - momentum) * rv[c] + momentum * unbiased;
    }
  } else {
    std::span<const double> rm = state.running_mean.data();
    std::span<const double> rv = state.running_var.data();
    for (Index c = 0; c < channels; ++c) {
      mean[c] = rm[c];
      inv_std[c] = 1.0 / std::sqrt(rv[c] + eps);
    }
  }
  std::vector<double> out(xd.size()), xhat(xd.size());
  for (Index b = 0; b < batch; ++b)
    for (Index c = 0; c < channels; ++c)
      for (Index t = 0; t < t_len; ++t) {
        Index i = at(b, c, t);
        xhat[i] = (xd[i] - mean[c]) * inv_std[c];
        out[i] = gd[c] * xhat[i] + bd[c];
      }
  return MakeOpResult("batch_norm_1d", x.shape(), std::move(out),
                      {x, gamma, beta},
                      [xhat = std::move(xhat), inv_std = std::move(inv_std),
                       batch, channels, t_len, count, train, at](Node &self) {
    const double *g = self.grad.data();
    const std::vector<double> &gam = self.inputs[1]->data;
    double *gx = self.InputGrad(0);
    double *gg = self.InputGrad(1);
    double *gb = self.InputGrad(2);
    for (Index c = 0; c < channels; ++c) {
      double sum_g = 0.0, sum_g_h = 0.0;
      for (Index b = 0; b < batch; ++b)
        for (Index t = 0; t < t_len; ++t) {
          Index i = at(b, c, t);
          sum_g += g[i];
          sum_g_h += g[i] * xhat[i];
        }
      if (gg) gg[c] += sum_g_h;
      if (gb) gb[c] += sum_g;
      if (!gx) continue;
      double n = static_cast<double>(count);
      for (Index b = 0; b < batch; ++b)
        for (Index t = 0; t < t_len; ++t) {
          Index i = at(b, c, t);
          if (train)
            gx[i] += gam[c] * inv_std[c] *
                     (g[i] - sum_g / n - xhat[i] * sum_g_h / n);
          else
            gx[i] += gam[c] * inv_std[c] * g[i];
        }
    }
  });
}

namespace {

// cols[(ci * K + k), to] = x[ci, to * stride + k - padding], zero outside.
void Im2Col1d(const double *x, Index c_in, Index t_len, Index kernel,
              Index stride, Index padding, Index t_out, double *cols) {
  for (Index ci = 0; ci < c_in; ++ci)
    for (Index k = 0; k < kernel; ++k) {
      double *row = cols + (ci * kernel + k) * t_out;
      for (Index to = 0; to < t_out; ++to) {
        Index ti = to * stride + k - padding;
        row[to] = (ti >= 0 && ti < t_len) ? x[ci * t_len + ti] : 0.0;
      }
    }
}

void Col2Im1d(const double *cols, Index c_in, Index t_len, Index kernel,
              Index stride, Index padding, Index t_out, double *gx) {
  for (Index ci = 0; ci < c_in; ++ci)
    for (Index k = 0; k < kernel; ++k) {
      const double *row = cols + (ci * kernel + k) * t_out;
      for (Index to = 0; to < t_out; ++to) {
        Index ti = to * stride + k - padding;
        if (ti >= 0 && ti < t_len) gx[ci * t_len + ti] += row[to];
      }
    }
}

}  // namespace

Tensor Conv1d(const Tensor &x, const Tensor &weight, const Tensor &bias,
              Index stride, Index padding, Index groups) {
  Require(x.rank() == 3 && weight.rank() == 3,
          "conv1d expects x [B, C, T] and weight [C_out, C_in/g, K]");
  Index batch = x.dim(0), c_in = x.dim(1), t_len = x.dim(2);
  Index c_out = weight.dim(0), cg_in = weight.dim(1), kernel = weight.dim(2);
  Require(groups >= 1 && c_in % groups == 0 && c_out % groups == 0 &&
              cg_in == c_in / groups,
          "conv1d: channels/groups mismatch");
  Require(stride >= 1 && padding >= 0 && kernel <= t_len + 2 * padding,
          "conv1d: kernel larger than padded input");
  if (bias.defined()) Require(bias.numel() == c_out, "conv1d: bad bias");
  Index t_out = (t_len + 2 * padding - kernel) / stride + 1;
  Index cg_out = c_out / groups;
  std::span<const double> xd = x.data(), wd = weight.data();
  std::vector<double> out(static_cast<std::size_t>(batch * c_out * t_out));
  if (groups == 1) {
    std::vector<double> cols(static_cast<std::size_t>(c_in * kernel * t_out));
    for (Index b = 0; b < batch; ++b) {
      Im2Col1d(xd.data() + b * c_in * t_len, c_in, t_len, kernel, stride,
               padding, t_out, cols.data());
      Gemm(false, false, c_out, t_out, c_in * kernel, wd.data(), cols.data(),
           out.data() + b * c_out * t_out, false);
    }
  } else {
    for (Index b = 0; b < batch; ++b)
      for (Index co = 0; co < c_out; ++co) {
        Index g = co / cg_out;
        for (Index to = 0; to < t_out; ++to) {
          double acc = 0.0;
          for (Index cl = 0; cl < cg_in; ++cl) {
            const double *xr = xd.data() + (b * c_in + g * cg_in + cl) * t_len;
            const double *wr = wd.data() + (co * cg_in + cl) * kernel;
            for (Index k = 0; k < kernel; ++k) {
              Index ti = to * stride + k - padding;
              if (ti >= 0 && ti < t_len) acc += wr[k] * xr[ti];
            }
          }
          out[(b * c_out + co) * t_out + to] = acc;
        }
      }
  }
  if (bias.defined()) {
    std::span<const double> bd = bias.data();
    for (Index b = 0; b < batch; ++b)
      for (Index co = 0; co < c_out; ++co)
        for (Index to = 0; to < t_out; ++to)
          out[(b * c_out + co) * t_out + to] += bd[co];
  }
  std::vector<Tensor> inputs = {x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return MakeOpResult("conv1d", {batch, c_out, t_out}, std::move(out), inputs,
                      [=](Node &self) {
    const double *g = self.grad.data();
    const double *xv = self.inputs[0]->data.data();
    const double *wv = self.inputs[1]->data.data();
    double *gx = self.InputGrad(0);
    double *gw = self.InputGrad(1);
    if (self.inputs.size() > 2) {
      if (double *gb = self.InputGrad(2))
        for (Index b = 0; b < batch; ++b)
          for (Index co = 0; co < c_out; ++co)
            for (Index to = 0; to < t_out; ++to)
              gb[co] += g[(b * c_out + co) * t_out + to];
    }
    if (groups == 1) {
      std::vector<double> cols(static_cast<std::size_t>(c_in * kernel * t_out));
      for (Index b = 0; b < batch; ++b) {
        const double *gb_out = g + b * c_out * t_out;
        if (gw) {
          Im2Col1d(xv + b * c_in * t_len, c_in, t_len, kernel, stride, padding,
                   t_out, cols.data());
          Gemm(false, true, c_out, c_in * kernel, t_out, gb_out, cols.data(),
               gw, true);
        }
        if (gx) {
          Gemm(true, false, c_in * kernel, t_out, c_out, wv, gb_out,
               cols.data(), false);
          Col2Im1d(cols.data(), c_in, t_len, kernel, stride, padding, t_out,
                   gx + b * c_in * t_len);
        }
      }
      return;
    }
    for (Index b = 0; b < batch; ++b)
      for (Index co = 0; co < c_out; ++co) {
        Index grp = co / cg_out;
        for (Index to = 0; to < t_out; ++to) {
          double go = g[(b * c_out + co) * t_out + to];
          for (Index cl = 0; cl < cg_in; ++cl) {
            Index xrow = (b * c_in + grp * cg_in + cl) * t_len;
            Index wrow = (co * cg_in + cl) * kernel;
            for (Index k = 0; k < kernel; ++k) {
              Index ti = to * stride + k - padding;
              if (ti < 0 || ti >= t_len) continue;
              if (gw) gw[wrow + k] += go * xv[xrow + ti];
              if (gx) gx[xrow + ti] += go * wv[wrow + k];
            }
          }
        }
      }
  });
}

namespace {

struct Conv2dGeom {
  Index c_in, h, w, kh, kw, sh, sw, ph, pw, oh, ow;
};

void Im2Col2d(const double *x, const Conv2dGeom &g, double *cols) {
  Index plane = g.oh * g.ow;
  for (Index ci = 0; ci < g.c_in; ++ci)
    for (Index ki = 0; ki < g.kh; ++ki)
      for (Index kj = 0; kj < g.kw; ++kj) {
        double *row = cols + ((ci * g.kh + ki) * g.kw + kj) * plane;
        for (Index oi = 0; oi < g.oh; ++oi) {
          Index hi = oi * g.sh + ki - g.ph;
          for (Index oj = 0; oj < g.ow; ++oj) {
            Index wi = oj * g.sw + kj - g.pw;
            bool inside = hi >= 0 && hi < g.h && wi >= 0 && wi < g.w;
            row[oi * g.ow + oj] = inside ? x[(ci * g.h + hi) * g.w + wi] : 0.0;
          }
        }
      }
}

void Col2Im2d(const double *cols, const Conv2dGeom &g, double *gx) {
  Index plane = g.oh * g.ow;
  for (Index ci = 0; ci < g.c_in; ++ci)
    for (Index ki = 0; ki < g.kh; ++ki)
      for (Index kj = 0; kj < g.kw; ++kj) {
        const double *row = cols + ((ci * g.kh + ki) * g.kw + kj) * plane;
        for (Index oi = 0; oi < g.oh; ++oi) {
          Index hi = oi * g.sh + ki - g.ph;
          if (hi < 0 || hi >= g.h) continue;
          for (Index oj = 0; oj < g.ow; ++oj) {
            Index wi = oj * g.sw + kj - g.pw;
            if (wi >= 0 && wi < g.w) gx[(ci * g.h + hi) * g.w + wi] += row[oi * g.ow + oj];
          }
        }
      }
}

}  // namespace

Tensor Conv2d(const Tensor &x, const Tensor &weight, const Tensor &bias,
              Index stride_h, Index stride_w, Index pad_h, Index pad_w) {
  Require(x.rank() == 4 && weight.rank() == 4,
          "conv2d expects x [B, C, H, W] and weight [C_out, C_in, KH, KW]");
  Conv2dGeom geo{x.dim(1), x.dim(2), x.dim(3), weight.dim(2), weight.dim(3),
                 stride_h, stride_w, pad_h, pad_w, 0, 0};
  Index batch = x.dim(0), c_out = weight.dim(0);
  Require(weight.dim(1) == geo.c_in, "conv2d: input channel mismatch");
  Require(stride_h >= 1 && stride_w >= 1 && pad_h >= 0 && pad_w >= 0 &&
              geo.kh <= geo.h + 2 * pad_h && geo.kw <= geo.w + 2 * pad_w,
          "conv2d: kernel larger than padded input");
  if (bias.defined()) Require(bias.numel() == c_out, "conv2d: bad bias");
  geo.oh = (geo.h + 2 * pad_h - geo.kh) / stride_h + 1;
  geo.ow = (geo.w + 2 * pad_w - geo.kw) / stride_w + 1;
  Index plane = geo.oh * geo.ow;
  Index patch = geo.c_in * geo.kh * geo.kw;
  Index in_size = geo.c_in * geo.h * geo.w;
  std::span<const double> xd = x.data(), wd = weight.data();
  std::vector<double> out(static_cast<std::size_t>(batch * c_out * plane));
  std::vector<double> cols(static_cast<std::size_t>(patch * plane));
  for (Index b = 0; b < batch; ++b) {
    Im2Col2d(xd.data() + b * in_size, geo, cols.data());
    Gemm(false, false, c_out, plane, patch, wd.data(), cols.data(),
         out.data() + b * c_out * plane, false);
  }
  if (bias.defined()) {
    std::span<const double> bd = bias.data();
    for (Index b = 0; b < batch; ++b)
      for (Index co = 0; co < c_out; ++co)
        for (Index p = 0; p < plane; ++p) out[(b * c_out + co) * plane + p] += bd[co];
  }
  std::vector<Tensor> inputs = {x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return MakeOpResult("conv2d", {batch, c_out, geo.oh, geo.ow}, std::move(out),
                      inputs, [=](Node &self) {
    const double *g = self.grad.data();
    const double *xv = self.inputs[0]->data.data();
    const double *wv = self.inputs[1]->data.data();
    double *gx = self.InputGrad(0);
    double *gw = self.InputGrad(1);
    if (self.inputs.size() > 2) {
      if (double *gb = self.InputGrad(2))
        for (Index b = 0; b < batch; ++b)
          for (Index co = 0; co < c_out; ++co)
            for (Index p = 0; p < plane; ++p) gb[co] += g[(b * c_out + co) * plane + p];
    }
    std::vector<double> work(static_cast<std::size_t>(patch * plane));
    for (Index b = 0; b < batch; ++b) {
      const double *gb_out = g + b * c_out * plane;
      if (gw) {
        Im2Col2d(xv + b * in_size, geo, work.data());
        Gemm(false, true, c_out, patch, plane, gb_out, work.data(), gw, true);
      }
      if (gx) {
        Gemm(true, false, patch, plane, c_out, wv, gb_out, work.data(), false);
        Col2Im2d(work.data(), geo, gx + b * in_size);
      }
    }
  });
}

}  // namespace mfa
