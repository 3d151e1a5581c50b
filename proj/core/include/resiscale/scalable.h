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

// Two-layer codec. The base layer is a machine-oriented codec decodable on
// its own; the enhancement layer carries either
//
//   FR  latent residuals  ya_k = y_k - Q(ym_k), k < N_a, fused back as
//       y^_k = ym^_k + ya^_k (k < N_a) or ym^_k (k >= N_a) before the
//       enhancement synthesis, or
//   PR  the pixel residual xd = x - xm^, reconstructed as
//       clamp(xm^ + xd^, 0, 1).
//
// The feature-fusion baseline (role kFeatureFusion) codes raw y_k with the
// FR decoder and container mode.
//
// Every layer payload is a single range-coder stream: the hyper-latent in
// NCHW order, then latent slices 0..N-1, each coded with tables built from
// already decoded values. Encoders run the decoder's parameter path, so both
// sides build identical tables.

#ifndef RESISCALE_SCALABLE_H_
#define RESISCALE_SCALABLE_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "resiscale/bitstream.h"
#include "resiscale/tensor.h"
#include "resiscale/transform.h"

namespace resiscale {

// Container lambda ids.
inline constexpr std::array<double, 5> kLambdaSet = {0.005, 0.01, 0.02, 0.03,
                                                     0.05};
// Throws kConfig for ids outside [0, 4].
double LambdaForId(int lambda_id);
// -1 when lambda is not in kLambdaSet.
int LambdaIdFor(double lambda);

struct CodecConfig {
  int num_base_slices = 5;  // N_m
  int num_enh_slices = 0;   // N_a, 0 for base-only
  int base_channels = 40;
  int enh_channels = 0;
  int lambda_id = -1;
  StreamMode mode = StreamMode::kBaseOnly;

  // From the weights; enh may be null.
  static CodecConfig From(const TransformWeights& base,
                          const TransformWeights* enh);
  void Validate() const;
};

StreamMode ModeForRole(ModelRole role);

struct BaseState {
  LatentSlices y_hat;  // N_m dequantized slices
  Tensor x_hat;        // synthesis(concat(y_hat)), clamped
};

struct EncodeStats {
  size_t symbols = 0;
  size_t saturated = 0;
  // More than 0.01% of symbols hit the alphabet limits.
  bool saturation_warning() const { return saturated * 10000 > symbols; }
};

struct EncodedLayer {
  std::vector<uint8_t> payload;
  EncodeStats stats;
};

struct BaseEncoding {
  EncodedLayer layer;
  BaseState state;
};

// x is [1,3,H,W] with H, W multiples of 16.
BaseEncoding EncodeBase(const Tensor& x, const TransformWeights& base);
BaseState DecodeBase(std::span<const uint8_t> payload, int height, int width,
                     const TransformWeights& base);

// ya_k = y_k - y_hat_m_k for k < y.size(). Slices of y_hat_m beyond
// y.size() are ignored.
LatentSlices FeatureSubtract(const LatentSlices& y,
                             const LatentSlices& y_hat_m);
// conc(y_hat_m_k + y_hat_a_k for k < N_a, y_hat_m_k otherwise).
Tensor FeatureFuse(const LatentSlices& y_hat_m, const LatentSlices& y_hat_a);
Tensor PixelResidual(const Tensor& x, const Tensor& x_hat_m);

// Dispatch on the role of `enh` (FR, PR or the fusion baseline).
EncodedLayer EncodeEnhancement(const Tensor& x, const BaseState& base,
                               const TransformWeights& enh);
Tensor DecodeEnhancement(const BaseState& base,
                         std::span<const uint8_t> payload,
                         const TransformWeights& enh);

EncodedLayer EncodeFr(const Tensor& x, const BaseState& base,
                      const TransformWeights& enh);
Tensor DecodeFr(const BaseState& base, std::span<const uint8_t> payload,
                const TransformWeights& enh);
EncodedLayer EncodePr(const Tensor& x, const BaseState& base,
                      const TransformWeights& enh);
Tensor DecodePr(const BaseState& base, std::span<const uint8_t> payload,
                const TransformWeights& enh);

struct EncodedImage {
  std::vector<uint8_t> bytes;  // serialized container
  BaseState base;
  EncodeStats base_stats;
  EncodeStats enh_stats;
  size_t base_payload_bytes = 0;
  size_t enh_payload_bytes = 0;
};

// enh == nullptr produces a base-only stream.
EncodedImage EncodeImage(const Tensor& x, const TransformWeights& base,
                         const TransformWeights* enh);

struct DecodedImage {
  StreamHeader header;
  BaseState base;
  Tensor human;  // undefined unless the enhancement layer was decoded
};

// Reads only the base section when enh is null. Throws kConfig when the
// stream was produced for different models (slice counts, mode).
DecodedImage DecodeImage(std::span<const uint8_t> bytes,
                         const TransformWeights& base,
                         const TransformWeights* enh);

}  // namespace resiscale

#endif  // RESISCALE_SCALABLE_H_
