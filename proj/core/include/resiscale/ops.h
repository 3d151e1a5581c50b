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

// Differentiable primitives. Every function records itself on the active
// tape (see TapeScope) when at least one input requires grad; otherwise it
// is a plain forward computation.
//
// Activations are NCHW. Kernels are [O, I, Kh, Kw]. The only implicit
// broadcast is bias over channels; every other shape disagreement throws
// Error(kShapeMismatch).

#ifndef RESISCALE_OPS_H_
#define RESISCALE_OPS_H_

#include <cstdint>
#include <vector>

#include "resiscale/tensor.h"

namespace resiscale {

inline constexpr float kLeakySlope = 0.01f;

// Cross-correlation. input [N,C,H,W], kernel [O,C,Kh,Kw], bias [O] (or an
// undefined tensor for no bias) -> [N,O,(H+2p-Kh)/s+1,(W+2p-Kw)/s+1].
Tensor Conv2D(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int pad);

// Adjoint of Conv2D with the same kernel: maps [N,O,h,w] to [N,C,H,W] with
// H = (h-1)*stride - 2*pad + Kh + output_padding. bias is [C].
Tensor Conv2DTranspose(const Tensor& input, const Tensor& kernel,
                       const Tensor& bias, int stride, int pad,
                       int output_padding = 0);

Tensor LeakyRelu(const Tensor& x, float slope = kLeakySlope);

// Records or replays which LeakyRelu inputs were on the positive side, in
// call order. Replaying freezes the piecewise-linear region so that finite
// differences see one linear piece (see GradCheckParameter).
struct GatePattern {
  std::vector<uint8_t> bits;
  size_t cursor = 0;
  bool replay = false;
};

// Makes `pattern` active for LeakyRelu calls on this thread.
class GateScope {
 public:
  explicit GateScope(GatePattern* pattern);
  ~GateScope();
  GateScope(const GateScope&) = delete;
  GateScope& operator=(const GateScope&) = delete;

 private:
  GatePattern* previous_;
};
Tensor Softplus(const Tensor& x);
// Gradient is 1 inside [lo, hi] and 0 where the value was clamped.
Tensor Clamp(const Tensor& x, float lo, float hi);

Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);
Tensor Scale(const Tensor& x, float factor);
Tensor AddScalar(const Tensor& x, float value);

Tensor ConcatChannels(const std::vector<Tensor>& parts);
Tensor SliceChannels(const Tensor& x, int begin, int count);
// Keeps the top-left [h, w] window of an [N,C,H,W] tensor.
Tensor CropSpatial(const Tensor& x, int h, int w);
// Repeats a per-channel vector [C] over an [N,C,H,W] grid.
Tensor ExpandChannels(const Tensor& per_channel, int n, int h, int w);

Tensor Sum(const Tensor& x);
Tensor Mean(const Tensor& x);
Tensor Mse(const Tensor& a, const Tensor& b);

// mean(((a - b) * m)^2) with m [N,1,H,W] broadcast over channels, or m of
// the same shape as a. By default the mean runs over every element; with
// normalize_by_mask_area it runs over the masked elements only.
Tensor MaskedMse(const Tensor& a, const Tensor& b, const Tensor& mask,
                 bool normalize_by_mask_area = false);

// Sum over elements of -log2 P(y) where P is the Gaussian N(mean, scale^2)
// integrated over [y-0.5, y+0.5]. Likelihoods are floored at
// kLikelihoodFloor; the gradient vanishes below the floor.
inline constexpr double kLikelihoodFloor = 1e-9;
Tensor GaussianRateBits(const Tensor& y, const Tensor& mean,
                        const Tensor& scale);

}  // namespace resiscale

#endif  // RESISCALE_OPS_H_
