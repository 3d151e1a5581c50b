// Copyright 2026 The Resiscale Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "resiscale/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "resiscale/status.h"

namespace resiscale {
namespace {

using RowMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

bool Tracking(std::initializer_list<const Tensor*> inputs) {
  if (ActiveTape() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor NewOutput(Shape shape, bool track) {
  Tensor out(std::move(shape));
  if (track) out.set_requires_grad(true);
  return out;
}

void CheckSameShape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    Fail(ErrorCode::kShapeMismatch, std::string(op) + ": shapes " +
                                        ShapeToString(a.shape()) + " and " +
                                        ShapeToString(b.shape()) +
                                        " differ");
  }
}

void CheckRank(const Tensor& t, int rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    Fail(ErrorCode::kShapeMismatch,
         std::string(op) + ": " + what + " must be rank " +
             std::to_string(rank) + ", got " + ShapeToString(t.shape()));
  }
}

// Geometry of a strided, zero-padded window scan of a C x H x W image
// producing an out_h x out_w grid of Kh x Kw windows.
struct ConvGeometry {
  int channels, height, width;
  int kernel_h, kernel_w;
  int stride, pad;
  int out_h, out_w;

  int patch() const { return channels * kernel_h * kernel_w; }
  int positions() const { return out_h * out_w; }
  size_t image_size() const {
    return static_cast<size_t>(channels) * height * width;
  }
};

// cols is [C*Kh*Kw, out_h*out_w], row-major.
void Im2Col(const float* image, const ConvGeometry& g, float* cols) {
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.kernel_h; ++ky) {
      for (int kx = 0; kx < g.kernel_w; ++kx) {
        float* row =
            cols + static_cast<size_t>((c * g.kernel_h + ky) * g.kernel_w +
                                       kx) *
                       g.positions();
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          float* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_w, 0.0f);
            continue;
          }
          const float* src = image + (static_cast<size_t>(c) * g.height + iy) *
                                         g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

// Adjoint of Im2Col: scatters (accumulates) columns back into the image.
void Col2Im(const float* cols, const ConvGeometry& g, float* image) {
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.kernel_h; ++ky) {
      for (int kx = 0; kx < g.kernel_w; ++kx) {
        const float* row =
            cols + static_cast<size_t>((c * g.kernel_h + ky) * g.kernel_w +
                                       kx) *
                       g.positions();
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          const float* src = row + oy * g.out_w;
          float* dst = image + (static_cast<size_t>(c) * g.height + iy) *
                                   g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void CheckBias(const Tensor& bias, int channels, const char* op) {
  if (!bias.defined()) return;
  if (bias.rank() != 1 || bias.dim(0) != channels) {
    Fail(ErrorCode::kShapeMismatch,
         std::string(op) + ": bias shape " + ShapeToString(bias.shape()) +
             " does not match " + std::to_string(channels) +
             " output channels");
  }
}

void AccumulateBiasGrad(const Tensor& out, Tensor bias) {
  if (!bias.defined() || !bias.requires_grad()) return;
  const Shape& s = out.shape();
  const size_t plane = static_cast<size_t>(s[2]) * s[3];
  auto og = out.grad();
  auto bg = bias.mutable_grad();
  for (int n = 0; n < s[0]; ++n) {
    for (int c = 0; c < s[1]; ++c) {
      const float* p = og.data() + (static_cast<size_t>(n) * s[1] + c) * plane;
      double acc = 0.0;
      for (size_t i = 0; i < plane; ++i) acc += p[i];
      bg[c] += static_cast<float>(acc);
    }
  }
}

void AddBias(Tensor& out, const Tensor& bias) {
  if (!bias.defined()) return;
  const Shape& s = out.shape();
  const size_t plane = static_cast<size_t>(s[2]) * s[3];
  auto od = out.mutable_data();
  auto bd = bias.data();
  for (int n = 0; n < s[0]; ++n) {
    for (int c = 0; c < s[1]; ++c) {
      float* p = od.data() + (static_cast<size_t>(n) * s[1] + c) * plane;
      for (size_t i = 0; i < plane; ++i) p[i] += bd[c];
    }
  }
}

double NormalCdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double NormalPdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace

Tensor Conv2D(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int pad) {
  CheckRank(input, 4, "Conv2D", "input");
  CheckRank(kernel, 4, "Conv2D", "kernel");
  Check(stride >= 1 && pad >= 0, ErrorCode::kInvalidArgument,
        "Conv2D: stride must be >= 1 and pad >= 0");
  if (input.dim(1) != kernel.dim(1)) {
    Fail(ErrorCode::kShapeMismatch,
         "Conv2D: input " + ShapeToString(input.shape()) + " has " +
             std::to_string(input.dim(1)) + " channels but kernel " +
             ShapeToString(kernel.shape()) + " expects " +
             std::to_string(kernel.dim(1)));
  }
  const int n = input.dim(0);
  const int out_c = kernel.dim(0);
  ConvGeometry g{input.dim(1), input.dim(2), input.dim(3), kernel.dim(2),
                 kernel.dim(3), stride, pad, 0, 0};
  const int span_h = g.height + 2 * pad - g.kernel_h;
  const int span_w = g.width + 2 * pad - g.kernel_w;
  if (span_h < 0 || span_w < 0) {
    Fail(ErrorCode::kShapeMismatch,
         "Conv2D: kernel " + ShapeToString(kernel.shape()) +
             " larger than padded input " + ShapeToString(input.shape()));
  }
  g.out_h = span_h / stride + 1;
  g.out_w = span_w / stride + 1;
  CheckBias(bias, out_c, "Conv2D");

  const bool track = Tracking({&input, &kernel, &bias});
  Tensor out = NewOutput({n, out_c, g.out_h, g.out_w}, track);

  const size_t col_size = static_cast<size_t>(g.patch()) * g.positions();
  auto cols = std::make_shared<std::vector<float>>(col_size * n);
  ConstMatrixMap w(kernel.data().data(), out_c, g.patch());
  auto od = out.mutable_data();
  for (int i = 0; i < n; ++i) {
    float* col = cols->data() + col_size * i;
    Im2Col(input.data().data() + g.image_size() * i, g, col);
    MatrixMap o(od.data() + static_cast<size_t>(out_c) * g.positions() * i,
                out_c, g.positions());
    o.noalias() = w * ConstMatrixMap(col, g.patch(), g.positions());
  }
  AddBias(out, bias);

  if (track) {
    ActiveTape()->Record(out, [input, kernel, bias, out, cols, g, n, out_c,
                               col_size]() mutable {
      auto og = out.grad();
      ConstMatrixMap w(kernel.data().data(), out_c, g.patch());
      std::vector<float> dcol(input.requires_grad() ? col_size : 0);
      for (int i = 0; i < n; ++i) {
        ConstMatrixMap go(og.data() + static_cast<size_t>(out_c) *
                                          g.positions() * i,
                          out_c, g.positions());
        ConstMatrixMap col(cols->data() + col_size * i, g.patch(),
                           g.positions());
        if (kernel.requires_grad()) {
          MatrixMap gw(kernel.mutable_grad().data(), out_c, g.patch());
          gw.noalias() += go * col.transpose();
        }
        if (input.requires_grad()) {
          MatrixMap dc(dcol.data(), g.patch(), g.positions());
          dc.noalias() = w.transpose() * go;
          Col2Im(dcol.data(), g,
                 input.mutable_grad().data() + g.image_size() * i);
        }
      }
      AccumulateBiasGrad(out, bias);
    });
  }
  return out;
}

Tensor Conv2DTranspose(const Tensor& input, const Tensor& kernel,
                       const Tensor& bias, int stride, int pad,
                       int output_padding) {
  CheckRank(input, 4, "Conv2DTranspose", "input");
  CheckRank(kernel, 4, "Conv2DTranspose", "kernel");
  Check(stride >= 1 && pad >= 0 && output_padding >= 0 &&
            output_padding < stride,
        ErrorCode::kInvalidArgument,
        "Conv2DTranspose: need stride >= 1, pad >= 0, "
        "0 <= output_padding < stride");
  if (input.dim(1) != kernel.dim(0)) {
    Fail(ErrorCode::kShapeMismatch,
         "Conv2DTranspose: input " + ShapeToString(input.shape()) + " has " +
             std::to_string(input.dim(1)) + " channels but kernel " +
             ShapeToString(kernel.shape()) + " expects " +
             std::to_string(kernel.dim(0)));
  }
  const int n = input.dim(0);
  const int in_c = kernel.dim(0);
  const int out_c = kernel.dim(1);
  const int out_h =
      (input.dim(2) - 1) * stride - 2 * pad + kernel.dim(2) + output_padding;
  const int out_w =
      (input.dim(3) - 1) * stride - 2 * pad + kernel.dim(3) + output_padding;
  if (out_h < 1 || out_w < 1) {
    Fail(ErrorCode::kShapeMismatch,
         "Conv2DTranspose: input " + ShapeToString(input.shape()) +
             " with kernel " + ShapeToString(kernel.shape()) +
             " gives an empty output");
  }
  // The forward conv geometry that this operation is the adjoint of.
  ConvGeometry g{out_c,  out_h, out_w,        kernel.dim(2), kernel.dim(3),
                 stride, pad,   input.dim(2), input.dim(3)};
  CheckBias(bias, out_c, "Conv2DTranspose");

  const bool track = Tracking({&input, &kernel, &bias});
  Tensor out = NewOutput({n, out_c, out_h, out_w}, track);

  const size_t col_size = static_cast<size_t>(g.patch()) * g.positions();
  const size_t in_size = static_cast<size_t>(in_c) * g.positions();
  std::vector<float> col(col_size);
  ConstMatrixMap w(kernel.data().data(), in_c, g.patch());
  auto od = out.mutable_data();
  for (int i = 0; i < n; ++i) {
    MatrixMap c(col.data(), g.patch(), g.positions());
    c.noalias() = w.transpose() *
                  ConstMatrixMap(input.data().data() + in_size * i, in_c,
                                 g.positions());
    Col2Im(col.data(), g, od.data() + g.image_size() * i);
  }
  AddBias(out, bias);

  if (track) {
    ActiveTape()->Record(out, [input, kernel, bias, out, g, n, in_c, col_size,
                               in_size]() mutable {
      auto og = out.grad();
      ConstMatrixMap w(kernel.data().data(), in_c, g.patch());
      std::vector<float> dcol(col_size);
      for (int i = 0; i < n; ++i) {
        Im2Col(og.data() + g.image_size() * i, g, dcol.data());
        ConstMatrixMap dc(dcol.data(), g.patch(), g.positions());
        if (input.requires_grad()) {
          MatrixMap gi(input.mutable_grad().data() + in_size * i, in_c,
                       g.positions());
          gi.noalias() += w * dc;
        }
        if (kernel.requires_grad()) {
          MatrixMap gw(kernel.mutable_grad().data(), in_c, g.patch());
          gw.noalias() += ConstMatrixMap(input.data().data() + in_size * i,
                                         in_c, g.positions()) *
                          dc.transpose();
        }
      }
      AccumulateBiasGrad(out, bias);
    });
  }
  return out;
}

namespace {

// Shared driver for elementwise unary ops: value(x) and derivative(x, y).
template <typename Value, typename Derivative>
Tensor Unary(const Tensor& x, Value value, Derivative derivative) {
  const bool track = Tracking({&x});
  Tensor out = NewOutput(x.shape(), track);
  auto xd = x.data();
  auto od = out.mutable_data();
  for (size_t i = 0; i < xd.size(); ++i) od[i] = value(xd[i]);
  if (track) {
    ActiveTape()->Record(out, [x, out, derivative]() mutable {
      auto xd = x.data();
      auto od = out.data();
      auto og = out.grad();
      auto xg = x.mutable_grad();
      for (size_t i = 0; i < xd.size(); ++i) {
        xg[i] += og[i] * derivative(xd[i], od[i]);
      }
    });
  }
  return out;
}

}  // namespace

namespace {
thread_local GatePattern* active_gates = nullptr;
}  // namespace

GateScope::GateScope(GatePattern* pattern) : previous_(active_gates) {
  active_gates = pattern;
}
GateScope::~GateScope() { active_gates = previous_; }

Tensor LeakyRelu(const Tensor& x, float slope) {
  if (GatePattern* g = active_gates) {
    const auto v = x.data();
    std::vector<float> factor(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
      uint8_t positive = v[i] > 0.0f;
      if (g->replay) {
        Check(g->cursor < g->bits.size(), ErrorCode::kInvalidArgument,
              "gate pattern: more activations than recorded");
        positive = g->bits[g->cursor++];
      } else {
        g->bits.push_back(positive);
      }
      factor[i] = positive ? 1.0f : slope;
    }
    return Mul(x, Tensor(x.shape(), std::move(factor)));
  }
  return Unary(
      x, [slope](float v) { return v > 0.0f ? v : slope * v; },
      [slope](float v, float) { return v > 0.0f ? 1.0f : slope; });
}

Tensor Softplus(const Tensor& x) {
  return Unary(
      x,
      [](float v) {
        // log(1 + e^v) without overflow.
        return v > 0.0f ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
      },
      [](float v, float) { return 1.0f / (1.0f + std::exp(-v)); });
}

Tensor Clamp(const Tensor& x, float lo, float hi) {
  return Unary(
      x, [lo, hi](float v) { return std::clamp(v, lo, hi); },
      [lo, hi](float v, float) { return (v >= lo && v <= hi) ? 1.0f : 0.0f; });
}

Tensor Scale(const Tensor& x, float factor) {
  return Unary(
      x, [factor](float v) { return v * factor; },
      [factor](float, float) { return factor; });
}

Tensor AddScalar(const Tensor& x, float value) {
  return Unary(
      x, [value](float v) { return v + value; },
      [](float, float) { return 1.0f; });
}

Tensor Add(const Tensor& a, const Tensor& b) {
  CheckSameShape(a, b, "Add");
  const bool track = Tracking({&a, &b});
  Tensor out = NewOutput(a.shape(), track);
  auto ad = a.data();
  auto bd = b.data();
  auto od = out.mutable_data();
  for (size_t i = 0; i < od.size(); ++i) od[i] = ad[i] + bd[i];
  if (track) {
    ActiveTape()->Record(out, [a, b, out]() mutable {
      auto og = out.grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto g = t->mutable_grad();
        for (size_t i = 0; i < og.size(); ++i) g[i] += og[i];
      }
    });
  }
  return out;
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  CheckSameShape(a, b, "Sub");
  const bool track = Tracking({&a, &b});
  Tensor out = NewOutput(a.shape(), track);
  auto ad = a.data();
  auto bd = b.data();
  auto od = out.mutable_data();
  for (size_t i = 0; i < od.size(); ++i) od[i] = ad[i] - bd[i];
  if (track) {
    ActiveTape()->Record(out, [a, b, out]() mutable {
      auto og = out.grad();
      if (a.requires_grad()) {
        auto g = a.mutable_grad();
        for (size_t i = 0; i < og.size(); ++i) g[i] += og[i];
      }
      if (b.requires_grad()) {
        auto g = b.mutable_grad();
        for (size_t i = 0; i < og.size(); ++i) g[i] -= og[i];
      }
    });
  }
  return out;
}

Tensor Mul(const Tensor& a, const Tensor& b) {
  CheckSameShape(a, b, "Mul");
  const bool track = Tracking({&a, &b});
  Tensor out = NewOutput(a.shape(), track);
  auto ad = a.data();
  auto bd = b.data();
  auto od = out.mutable_data();
  for (size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * bd[i];
  if (track) {
    ActiveTape()->Record(out, [a, b, out]() mutable {
      auto og = out.grad();
      auto ad = a.data();
      auto bd = b.data();
      if (a.requires_grad()) {
        auto g = a.mutable_grad();
        for (size_t i = 0; i < og.size(); ++i) g[i] += og[i] * bd[i];
      }
      if (b.requires_grad()) {
        auto g = b.mutable_grad();
        for (size_t i = 0; i < og.size(); ++i) g[i] += og[i] * ad[i];
      }
    });
  }
  return out;
}

Tensor ConcatChannels(const std::vector<Tensor>& parts) {
  Check(!parts.empty(), ErrorCode::kInvalidArgument,
        "ConcatChannels: nothing to concatenate");
  const Tensor& first = parts.front();
  CheckRank(first, 4, "ConcatChannels", "part");
  int channels = 0;
  for (const Tensor& p : parts) {
    CheckRank(p, 4, "ConcatChannels", "part");
    if (p.dim(0) != first.dim(0) || p.dim(2) != first.dim(2) ||
        p.dim(3) != first.dim(3)) {
      Fail(ErrorCode::kShapeMismatch,
           "ConcatChannels: part " + ShapeToString(p.shape()) +
               " does not match " + ShapeToString(first.shape()) +
               " outside the channel axis");
    }
    channels += p.dim(1);
  }
  const int n = first.dim(0);
  const size_t plane = static_cast<size_t>(first.dim(2)) * first.dim(3);
  bool track = false;
  for (const Tensor& p : parts) track = track || Tracking({&p});
  Tensor out = NewOutput({n, channels, first.dim(2), first.dim(3)}, track);
  auto od = out.mutable_data();
  int offset = 0;
  for (const Tensor& p : parts) {
    const size_t block = plane * p.dim(1);
    for (int i = 0; i < n; ++i) {
      std::copy_n(p.data().data() + block * i, block,
                  od.data() + (static_cast<size_t>(i) * channels + offset) *
                                  plane);
    }
    offset += p.dim(1);
  }
  if (track) {
    ActiveTape()->Record(out, [parts, out, n, channels, plane]() mutable {
      auto og = out.grad();
      int offset = 0;
      for (const Tensor& p : parts) {
        const size_t block = plane * p.dim(1);
        if (p.requires_grad()) {
          auto g = p.mutable_grad();
          for (int i = 0; i < n; ++i) {
            const float* src =
                og.data() + (static_cast<size_t>(i) * channels + offset) * plane;
            float* dst = g.data() + block * i;
            for (size_t j = 0; j < block; ++j) dst[j] += src[j];
          }
        }
        offset += p.dim(1);
      }
    });
  }
  return out;
}

Tensor SliceChannels(const Tensor& x, int begin, int count) {
  CheckRank(x, 4, "SliceChannels", "input");
  if (begin < 0 || count < 1 || begin + count > x.dim(1)) {
    Fail(ErrorCode::kShapeMismatch,
         "SliceChannels: channels [" + std::to_string(begin) + ", " +
             std::to_string(begin + count) + ") outside " +
             ShapeToString(x.shape()));
  }
  const int n = x.dim(0);
  const int channels = x.dim(1);
  const size_t plane = static_cast<size_t>(x.dim(2)) * x.dim(3);
  const size_t block = plane * count;
  const bool track = Tracking({&x});
  Tensor out = NewOutput({n, count, x.dim(2), x.dim(3)}, track);
  auto od = out.mutable_data();
  for (int i = 0; i < n; ++i) {
    std::copy_n(x.data().data() + (static_cast<size_t>(i) * channels + begin) *
                                      plane,
                block, od.data() + block * i);
  }
  if (track) {
    ActiveTape()->Record(out, [x, out, n, channels, begin, plane,
                               block]() mutable {
      auto og = out.grad();
      auto g = x.mutable_grad();
      for (int i = 0; i < n; ++i) {
        float* dst =
            g.data() + (static_cast<size_t>(i) * channels + begin) * plane;
        const float* src = og.data() + block * i;
        for (size_t j = 0; j < block; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

Tensor CropSpatial(const Tensor& x, int h, int w) {
  CheckRank(x, 4, "CropSpatial", "input");
  if (h < 1 || w < 1 || h > x.dim(2) || w > x.dim(3)) {
    Fail(ErrorCode::kShapeMismatch, "CropSpatial: window " + std::to_string(h) +
                                        "x" + std::to_string(w) +
                                        " does not fit " +
                                        ShapeToString(x.shape()));
  }
  const int planes = x.dim(0) * x.dim(1);
  const int src_h = x.dim(2);
  const int src_w = x.dim(3);
  const bool track = Tracking({&x});
  Tensor out = NewOutput({x.dim(0), x.dim(1), h, w}, track);
  auto od = out.mutable_data();
  auto xd = x.data();
  for (int p = 0; p < planes; ++p) {
    for (int r = 0; r < h; ++r) {
      std::copy_n(xd.data() + (static_cast<size_t>(p) * src_h + r) * src_w, w,
                  od.data() + (static_cast<size_t>(p) * h + r) * w);
    }
  }
  if (track) {
    ActiveTape()->Record(out, [x, out, planes, src_h, src_w, h, w]() mutable {
      auto og = out.grad();
      auto g = x.mutable_grad();
      for (int p = 0; p < planes; ++p) {
        for (int r = 0; r < h; ++r) {
          float* dst = g.data() + (static_cast<size_t>(p) * src_h + r) * src_w;
          const float* src = og.data() + (static_cast<size_t>(p) * h + r) * w;
          for (int c = 0; c < w; ++c) dst[c] += src[c];
        }
      }
    });
  }
  return out;
}

Tensor ExpandChannels(const Tensor& per_channel, int n, int h, int w) {
  CheckRank(per_channel, 1, "ExpandChannels", "input");
  const int c = per_channel.dim(0);
  const size_t plane = static_cast<size_t>(h) * w;
  const bool track = Tracking({&per_channel});
  Tensor out = NewOutput({n, c, h, w}, track);
  auto od = out.mutable_data();
  auto pd = per_channel.data();
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < c; ++k) {
      std::fill_n(od.data() + (static_cast<size_t>(i) * c + k) * plane, plane,
                  pd[k]);
    }
  }
  if (track) {
    ActiveTape()->Record(out, [per_channel, out, n, c, plane]() mutable {
      auto og = out.grad();
      auto g = per_channel.mutable_grad();
      for (int i = 0; i < n; ++i) {
        for (int k = 0; k < c; ++k) {
          const float* src =
              og.data() + (static_cast<size_t>(i) * c + k) * plane;
          double acc = 0.0;
          for (size_t j = 0; j < plane; ++j) acc += src[j];
          g[k] += static_cast<float>(acc);
        }
      }
    });
  }
  return out;
}

namespace {

Tensor ScalarReduce(const Tensor& x, double scale) {
  const bool track = Tracking({&x});
  Tensor out = NewOutput(Shape{}, track);
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  out.mutable_data()[0] = static_cast<float>(acc * scale);
  if (track) {
    ActiveTape()->Record(out, [x, out, scale]() mutable {
      const float g = static_cast<float>(out.grad()[0] * scale);
      for (float& v : x.mutable_grad()) v += g;
    });
  }
  return out;
}

}  // namespace

Tensor Sum(const Tensor& x) { return ScalarReduce(x, 1.0); }

Tensor Mean(const Tensor& x) {
  Check(x.numel() > 0, ErrorCode::kShapeMismatch, "Mean of an empty tensor");
  return ScalarReduce(x, 1.0 / static_cast<double>(x.numel()));
}

Tensor Mse(const Tensor& a, const Tensor& b) {
  CheckSameShape(a, b, "Mse");
  Check(a.numel() > 0, ErrorCode::kShapeMismatch, "Mse of empty tensors");
  const bool track = Tracking({&a, &b});
  Tensor out = NewOutput(Shape{}, track);
  auto ad = a.data();
  auto bd = b.data();
  double acc = 0.0;
  for (size_t i = 0; i < ad.size(); ++i) {
    const double d = static_cast<double>(ad[i]) - bd[i];
    acc += d * d;
  }
  const double inv = 1.0 / static_cast<double>(ad.size());
  out.mutable_data()[0] = static_cast<float>(acc * inv);
  if (track) {
    ActiveTape()->Record(out, [a, b, out, inv]() mutable {
      const double g = out.grad()[0] * 2.0 * inv;
      auto ad = a.data();
      auto bd = b.data();
      if (a.requires_grad()) {
        auto ag = a.mutable_grad();
        for (size_t i = 0; i < ad.size(); ++i) {
          ag[i] += static_cast<float>(g * (ad[i] - bd[i]));
        }
      }
      if (b.requires_grad()) {
        auto bg = b.mutable_grad();
        for (size_t i = 0; i < ad.size(); ++i) {
          bg[i] -= static_cast<float>(g * (ad[i] - bd[i]));
        }
      }
    });
  }
  return out;
}

Tensor MaskedMse(const Tensor& a, const Tensor& b, const Tensor& mask,
                 bool normalize_by_mask_area) {
  CheckSameShape(a, b, "MaskedMse");
  CheckRank(a, 4, "MaskedMse", "input");
  CheckRank(mask, 4, "MaskedMse", "mask");
  const bool per_channel_mask = mask.shape() == a.shape();
  if (!per_channel_mask &&
      (mask.dim(0) != a.dim(0) || mask.dim(1) != 1 || mask.dim(2) != a.dim(2) ||
       mask.dim(3) != a.dim(3))) {
    Fail(ErrorCode::kShapeMismatch,
         "MaskedMse: mask " + ShapeToString(mask.shape()) +
             " is neither [N,1,H,W] nor the shape of input " +
             ShapeToString(a.shape()));
  }
  const int c = a.dim(1);
  const size_t plane = static_cast<size_t>(a.dim(2)) * a.dim(3);
  auto mask_index = [=](size_t i) -> size_t {
    if (per_channel_mask) return i;
    const size_t per_sample = plane * c;
    return (i / per_sample) * plane + (i % plane);
  };

  auto ad = a.data();
  auto bd = b.data();
  auto md = mask.data();
  double acc = 0.0;
  double area = 0.0;
  for (size_t i = 0; i < ad.size(); ++i) {
    const double m = md[mask_index(i)];
    const double d = (static_cast<double>(ad[i]) - bd[i]) * m;
    acc += d * d;
    area += m * m;
  }
  double denom = static_cast<double>(ad.size());
  if (normalize_by_mask_area) denom = std::max(area, 1.0);
  const double inv = 1.0 / denom;

  const bool track = Tracking({&a, &b});
  Tensor out = NewOutput(Shape{}, track);
  out.mutable_data()[0] = static_cast<float>(acc * inv);
  if (track) {
    ActiveTape()->Record(out, [a, b, mask, out, inv, mask_index]() mutable {
      const double g = out.grad()[0] * 2.0 * inv;
      auto ad = a.data();
      auto bd = b.data();
      auto md = mask.data();
      std::span<float> ag, bg;
      if (a.requires_grad()) ag = a.mutable_grad();
      if (b.requires_grad()) bg = b.mutable_grad();
      for (size_t i = 0; i < ad.size(); ++i) {
        const double m = md[mask_index(i)];
        const float d = static_cast<float>(g * (ad[i] - bd[i]) * m * m);
        if (!ag.empty()) ag[i] += d;
        if (!bg.empty()) bg[i] -= d;
      }
    });
  }
  return out;
}

Tensor GaussianRateBits(const Tensor& y, const Tensor& mean,
                        const Tensor& scale) {
  CheckSameShape(y, mean, "GaussianRateBits");
  CheckSameShape(y, scale, "GaussianRateBits");
  const bool track = Tracking({&y, &mean, &scale});
  Tensor out = NewOutput(Shape{}, track);
  auto yd = y.data();
  auto md = mean.data();
  auto sd = scale.data();
  const size_t count = yd.size();

  // Per element: d(bits)/d(y - mean) and d(bits)/d(scale).
  auto d_offset = std::make_shared<std::vector<float>>(track ? count : 0);
  auto d_scale = std::make_shared<std::vector<float>>(track ? count : 0);
  const double inv_ln2 = 1.0 / std::numbers::ln2;
  double bits = 0.0;
  for (size_t i = 0; i < count; ++i) {
    const double sigma = sd[i];
    if (!(sigma > 0.0)) {
      Fail(ErrorCode::kInvalidArgument, "GaussianRateBits: non-positive scale");
    }
    const double offset = static_cast<double>(yd[i]) - md[i];
    // The Gaussian is symmetric, so evaluate on the left tail for accuracy.
    const double v = std::abs(offset);
    const double upper = (0.5 - v) / sigma;
    const double lower = (-0.5 - v) / sigma;
    const double p = NormalCdf(upper) - NormalCdf(lower);
    if (p > kLikelihoodFloor) {
      bits -= std::log2(p);
      if (track) {
        const double dbits_dp = -inv_ln2 / p;
        const double dp_dv = (NormalPdf(lower) - NormalPdf(upper)) / sigma;
        const double dp_dsigma =
            (NormalPdf(lower) * lower - NormalPdf(upper) * upper) / sigma;
        const double sign = offset > 0.0 ? 1.0 : (offset < 0.0 ? -1.0 : 0.0);
        (*d_offset)[i] = static_cast<float>(dbits_dp * dp_dv * sign);
        (*d_scale)[i] = static_cast<float>(dbits_dp * dp_dsigma);
      }
    } else {
      bits -= std::log2(kLikelihoodFloor);
    }
  }
  out.mutable_data()[0] = static_cast<float>(bits);

  if (track) {
    ActiveTape()->Record(out, [y, mean, scale, out, d_offset,
                               d_scale]() mutable {
      const float g = out.grad()[0];
      const auto& dof = *d_offset;
      const auto& dsc = *d_scale;
      if (y.requires_grad()) {
        auto yg = y.mutable_grad();
        for (size_t i = 0; i < dof.size(); ++i) yg[i] += g * dof[i];
      }
      if (mean.requires_grad()) {
        auto mg = mean.mutable_grad();
        for (size_t i = 0; i < dof.size(); ++i) mg[i] -= g * dof[i];
      }
      if (scale.requires_grad()) {
        auto sg = scale.mutable_grad();
        for (size_t i = 0; i < dsc.size(); ++i) sg[i] += g * dsc[i];
      }
    });
  }
  return out;
}

}  // namespace resiscale
