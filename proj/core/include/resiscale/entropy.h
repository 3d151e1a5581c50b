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

// Quantization, the uniform-noise training proxy, discretized Gaussian
// likelihoods and rate estimation.

#ifndef RESISCALE_ENTROPY_H_
#define RESISCALE_ENTROPY_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "resiscale/tensor.h"

namespace resiscale {

// Smallest admissible Gaussian scale.
inline constexpr float kScaleMin = 0.11f;

// Coded symbols are saturated to this alphabet.
inline constexpr int kSymbolMin = -128;
inline constexpr int kSymbolMax = 127;
inline constexpr int kAlphabetSize = kSymbolMax - kSymbolMin + 1;

struct GaussianParams {
  Tensor mean;
  Tensor scale;

  // Throws unless shapes agree and every scale is finite and >= kScaleMin.
  void Validate() const;
};

struct SymbolTensor {
  Shape shape;
  std::vector<int16_t> values;

  size_t size() const { return values.size(); }
  bool operator==(const SymbolTensor&) const = default;
};

struct Quantized {
  SymbolTensor symbols;
  // Number of inputs that fell outside [kSymbolMin, kSymbolMax].
  size_t saturated = 0;
};

// Round half away from zero, then saturate.
int QuantizeValue(float v);
Quantized Quantize(const Tensor& y);
Tensor Dequantize(const SymbolTensor& symbols);

// y + u with u ~ U(-0.5, 0.5) drawn from a generator seeded with `seed`.
// Recorded on the active tape (the noise itself is a constant).
Tensor NoiseProxy(const Tensor& y, uint64_t seed);

double NormalCdf(double x);

// P(symbol) under N(mean, scale^2) discretized to unit bins, with the tail
// mass beyond the alphabet folded into the first and last symbols. Throws if
// scale < kScaleMin.
double Likelihood(int symbol, double mean, double scale);

struct RateEstimate {
  double total_bits = 0.0;
  std::vector<double> per_slice_bits;
};

RateEstimate RateBits(const SymbolTensor& symbols, const GaussianParams& params);
// One entry of per_slice_bits per slice.
RateEstimate RateBits(std::span<const SymbolTensor> slices,
                      std::span<const GaussianParams> params);

// Rate of a hyper-latent [N,C,h,w] under per-channel parameters of shape [C]
// broadcast over batch and space.
RateEstimate FactorizedRate(const SymbolTensor& symbols,
                            const GaussianParams& per_channel);

}  // namespace resiscale

#endif  // RESISCALE_ENTROPY_H_
