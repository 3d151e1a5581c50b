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

#include "resiscale/entropy.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "resiscale/ops.h"
#include "resiscale/status.h"

namespace resiscale {
namespace {

// The range coder never assigns less than 1/65536 to a symbol, so neither
// does the estimate.
constexpr double kMinCodedProbability = 1.0 / 65536.0;

double SymbolBits(int symbol, double mean, double scale) {
  return -std::log2(std::max(Likelihood(symbol, mean, scale),
                             kMinCodedProbability));
}

}  // namespace

void GaussianParams::Validate() const {
  if (mean.shape() != scale.shape()) {
    Fail(ErrorCode::kShapeMismatch, "GaussianParams: mean " +
                                        ShapeToString(mean.shape()) +
                                        " vs scale " +
                                        ShapeToString(scale.shape()));
  }
  for (float s : scale.data()) {
    if (!std::isfinite(s) || s < kScaleMin) {
      Fail(ErrorCode::kInvalidArgument,
           "GaussianParams: scale " + std::to_string(s) +
               " is not finite or below the floor");
    }
  }
  for (float m : mean.data()) {
    Check(std::isfinite(m), ErrorCode::kInvalidArgument,
          "GaussianParams: non-finite mean");
  }
}

int QuantizeValue(float v) {
  const float r = std::round(v);  // halves away from zero
  if (!(r >= kSymbolMin)) return kSymbolMin;  // also maps NaN to the floor
  if (r > kSymbolMax) return kSymbolMax;
  return static_cast<int>(r);
}

Quantized Quantize(const Tensor& y) {
  Quantized q;
  q.symbols.shape = y.shape();
  q.symbols.values.reserve(y.numel());
  for (float v : y.data()) {
    const float r = std::round(v);
    if (!(r >= kSymbolMin && r <= kSymbolMax)) ++q.saturated;
    q.symbols.values.push_back(static_cast<int16_t>(QuantizeValue(v)));
  }
  return q;
}

Tensor Dequantize(const SymbolTensor& symbols) {
  std::vector<float> values(symbols.values.begin(), symbols.values.end());
  return Tensor(symbols.shape, std::move(values));
}

Tensor NoiseProxy(const Tensor& y, uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor noise(y.shape());
  for (float& u : noise.mutable_data()) {
    // 24-bit grid centred in each cell keeps |u| < 0.5 strictly.
    const uint64_t k = rng() >> 40;
    u = static_cast<float>((static_cast<double>(k) + 0.5) / 16777216.0 - 0.5);
  }
  return Add(y, noise);
}

double NormalCdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double Likelihood(int symbol, double mean, double scale) {
  if (!(scale >= kScaleMin)) {
    Fail(ErrorCode::kInvalidArgument,
         "likelihood: scale " + std::to_string(scale) +
             " below the floor; apply the floor upstream");
  }
  Check(symbol >= kSymbolMin && symbol <= kSymbolMax,
        ErrorCode::kInvalidArgument, "likelihood: symbol outside alphabet");
  double p;
  if (symbol == kSymbolMin) {
    p = NormalCdf((symbol - mean + 0.5) / scale);
  } else if (symbol == kSymbolMax) {
    p = NormalCdf((mean - symbol + 0.5) / scale);
  } else {
    // Symmetric form keeps precision when the symbol is far in a tail.
    const double v = std::abs(symbol - mean);
    p = NormalCdf((0.5 - v) / scale) - NormalCdf((-0.5 - v) / scale);
  }
  return std::clamp(p, std::numeric_limits<double>::min(), 1.0);
}

RateEstimate RateBits(const SymbolTensor& symbols,
                      const GaussianParams& params) {
  params.Validate();
  if (symbols.shape != params.mean.shape()) {
    Fail(ErrorCode::kShapeMismatch, "RateBits: symbols " +
                                        ShapeToString(symbols.shape) +
                                        " vs params " +
                                        ShapeToString(params.mean.shape()));
  }
  auto md = params.mean.data();
  auto sd = params.scale.data();
  double bits = 0.0;
  for (size_t i = 0; i < symbols.values.size(); ++i) {
    bits += SymbolBits(symbols.values[i], md[i], sd[i]);
  }
  return RateEstimate{bits, {bits}};
}

RateEstimate RateBits(std::span<const SymbolTensor> slices,
                      std::span<const GaussianParams> params) {
  Check(slices.size() == params.size(), ErrorCode::kShapeMismatch,
        "RateBits: slice and parameter counts differ");
  RateEstimate out;
  for (size_t k = 0; k < slices.size(); ++k) {
    const double bits = RateBits(slices[k], params[k]).total_bits;
    out.per_slice_bits.push_back(bits);
    out.total_bits += bits;
  }
  return out;
}

RateEstimate FactorizedRate(const SymbolTensor& symbols,
                            const GaussianParams& per_channel) {
  per_channel.Validate();
  Check(per_channel.mean.rank() == 1, ErrorCode::kShapeMismatch,
        "FactorizedRate: parameters must be per-channel vectors");
  Check(symbols.shape.size() == 4, ErrorCode::kShapeMismatch,
        "FactorizedRate: symbols must be [N,C,h,w]");
  const int channels = per_channel.mean.dim(0);
  if (symbols.shape[1] != channels) {
    Fail(ErrorCode::kShapeMismatch,
         "FactorizedRate: symbols have " + std::to_string(symbols.shape[1]) +
             " channels, parameters " + std::to_string(channels));
  }
  const size_t plane = static_cast<size_t>(symbols.shape[2]) * symbols.shape[3];
  auto md = per_channel.mean.data();
  auto sd = per_channel.scale.data();
  double bits = 0.0;
  for (size_t i = 0; i < symbols.values.size(); ++i) {
    const size_t c = (i / plane) % channels;
    bits += SymbolBits(symbols.values[i], md[c], sd[c]);
  }
  return RateEstimate{bits, {bits}};
}

}  // namespace resiscale
