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

// Learned transforms shared by the base (machine-oriented) codec and the
// enhancement codecs:
//
//   analysis         4 stride-2 3x3 convs, x16 downsampling
//   synthesis        mirror with transposed convs
//   hyper analysis   2 stride-2 convs over the latent
//   hyper synthesis  2 stride-2 transposed convs producing the context
//   slice params     channel-autoregressive entropy parameters: slice k is
//                    predicted from the context and slices 0..k-1 only
//
// Leaky ReLU sits between layers, never after the last one.

#ifndef RESISCALE_TRANSFORM_H_
#define RESISCALE_TRANSFORM_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "resiscale/entropy.h"
#include "resiscale/tensor.h"

namespace resiscale {

enum class ModelRole {
  kBase,
  // Enhancement coding y_k - quantized base slice k.
  kFeatureResidual,
  // Enhancement coding the pixel difference x - base reconstruction.
  kPixelResidual,
  // Baseline enhancement: raw y_k slices, fused by addition at the decoder
  // (no encoder-side subtraction).
  kFeatureFusion,
};

const char* RoleName(ModelRole role);
ModelRole ParseRole(const std::string& name);
// True for the roles whose synthesis consumes the fused base latent.
bool UsesFeatureFusion(ModelRole role);

struct SlicePartition {
  std::vector<int> widths;

  static SlicePartition Equal(int total_channels, int num_slices);

  int total() const;
  int count() const { return static_cast<int>(widths.size()); }
  // First channel of slice k (0-based).
  int offset(int k) const;
  void Validate() const;
  bool operator==(const SlicePartition&) const = default;
};

using LatentSlices = std::vector<Tensor>;

LatentSlices SplitSlices(const Tensor& y, const SlicePartition& partition);
Tensor ConcatSlices(const LatentSlices& slices);

struct Architecture {
  ModelRole role = ModelRole::kBase;
  int in_channels = 3;
  std::vector<int> analysis_widths = {16, 32, 32};
  SlicePartition latent = SlicePartition::Equal(40, 5);
  int hyper_channels = 16;
  int param_hidden = 32;
  // Channels entering synthesis: the latent width, except for fusion roles
  // where it is the base latent width.
  int synthesis_in = 40;
  int out_channels = 3;
  // Training metadata carried with the weights.
  double lambda = 0.0;
  int lambda_id = -1;

  static Architecture Base(int latent_channels = 40, int num_slices = 5);
  // Enhancement with `num_slices` slices of `slice_width` channels.
  static Architecture Enhancement(ModelRole role, int num_slices,
                                  const Architecture& base,
                                  int slice_width = 8);

  int latent_channels() const { return latent.total(); }
  int num_slices() const { return latent.count(); }
  void Validate() const;

  std::string ToText() const;
  static Architecture FromText(const std::string& text);
  bool operator==(const Architecture&) const = default;
};

struct LayerSpec {
  std::string name;
  Shape shape;
};

// Every tensor the architecture owns, in a fixed order.
std::vector<LayerSpec> LayerSpecs(const Architecture& arch);

class TransformWeights {
 public:
  // All tensors zero.
  explicit TransformWeights(Architecture arch);

  // He-style normal init for kernels, zero biases, deterministic in `seed`.
  static TransformWeights Initialize(const Architecture& arch, uint64_t seed);

  const Architecture& arch() const { return arch_; }
  Architecture& mutable_arch() { return arch_; }
  const Tensor& Get(const std::string& name) const;
  // Replaces a tensor; its shape must match the layer spec.
  void Set(const std::string& name, Tensor value);
  const std::map<std::string, Tensor>& tensors() const { return tensors_; }

  // Handles to every trainable tensor in LayerSpecs order.
  std::vector<Tensor> Parameters() const;
  void SetRequiresGrad(bool requires_grad);
  TransformWeights Clone() const;

 private:
  Architecture arch_;
  std::map<std::string, Tensor> tensors_;
};

// x [N,C,H,W] -> y [N,M,H/16,W/16]. H and W must be multiples of 16.
Tensor Analysis(const Tensor& x, const TransformWeights& w);
// y [N,synthesis_in,h,w] -> [N,out,16h,16w]; clamped to [0,1] unless
// clamp_output is false (training and signed residual outputs).
Tensor Synthesis(const Tensor& y, const TransformWeights& w,
                 bool clamp_output = true);
Tensor HyperAnalysis(const Tensor& y, const TransformWeights& w);
// z [N,Mz,hz,wz] -> context [N,2M,h,w]; the transposed convolutions may
// overshoot odd sizes, so the result is cropped to (h, w).
Tensor HyperSynthesis(const Tensor& z, const TransformWeights& w, int h,
                      int width);

// Learned per-channel parameters of the hyper-latent prior, shape [Mz].
GaussianParams HyperPrior(const TransformWeights& w);

// Entropy parameters for slice k (0-based) from the context and exactly k
// previously decoded slices. scale = kScaleMin + softplus(raw).
GaussianParams PredictSliceParams(const Tensor& context,
                                  const LatentSlices& prior, int k,
                                  const TransformWeights& w);

}  // namespace resiscale

#endif  // RESISCALE_TRANSFORM_H_
