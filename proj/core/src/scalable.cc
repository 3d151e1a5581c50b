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

#include "resiscale/scalable.h"

#include <string>

#include "resiscale/coder.h"
#include "resiscale/entropy.h"
#include "resiscale/ops.h"
#include "resiscale/status.h"

namespace resiscale {
namespace {

int HalfCeil(int v) { return (v + 1) / 2; }

void CheckImage(const Tensor& x, const char* what) {
  if (x.rank() != 4 || x.dim(0) != 1 || x.dim(1) != 3) {
    Fail(ErrorCode::kShapeMismatch, std::string(what) +
                                        ": image must be [1,3,H,W], got " +
                                        ShapeToString(x.shape()));
  }
}

struct CodedLatent {
  LatentSlices y_hat;
  EncodeStats stats;
};

// Codes the hyper-latent of y and then the slices of y, in the order the
// decoder reconstructs them.
CodedLatent EncodeLatent(const Tensor& y, const TransformWeights& w,
                         RangeEncoder& enc, CdfCache& cache) {
  CodedLatent out;
  const Quantized z = Quantize(HyperAnalysis(y, w));
  const GaussianParams prior = HyperPrior(w);
  const int mz = z.symbols.shape[1];
  const size_t zplane =
      static_cast<size_t>(z.symbols.shape[2]) * z.symbols.shape[3];
  auto pm = prior.mean.data();
  auto ps = prior.scale.data();
  for (size_t i = 0; i < z.symbols.values.size(); ++i) {
    const size_t c = (i / zplane) % mz;
    enc.Encode(z.symbols.values[i], cache.Get(pm[c], ps[c]));
  }
  out.stats.symbols += z.symbols.size();
  out.stats.saturated += z.saturated;

  const Tensor ctx =
      HyperSynthesis(Dequantize(z.symbols), w, y.dim(2), y.dim(3));
  const LatentSlices slices = SplitSlices(y, w.arch().latent);
  for (int k = 0; k < static_cast<int>(slices.size()); ++k) {
    const GaussianParams p = PredictSliceParams(ctx, out.y_hat, k, w);
    const Quantized q = Quantize(slices[k]);
    auto md = p.mean.data();
    auto sd = p.scale.data();
    for (size_t i = 0; i < q.symbols.values.size(); ++i) {
      enc.Encode(q.symbols.values[i], cache.Get(md[i], sd[i]));
    }
    out.stats.symbols += q.symbols.size();
    out.stats.saturated += q.saturated;
    out.y_hat.push_back(Dequantize(q.symbols));
  }
  return out;
}

LatentSlices DecodeLatent(RangeDecoder& dec, const TransformWeights& w,
                          int h, int width, CdfCache& cache) {
  const Architecture& arch = w.arch();
  const GaussianParams prior = HyperPrior(w);
  const int mz = arch.hyper_channels;
  const int hz = HalfCeil(HalfCeil(h));
  const int wz = HalfCeil(HalfCeil(width));
  SymbolTensor z{{1, mz, hz, wz}, {}};
  z.values.resize(static_cast<size_t>(mz) * hz * wz);
  auto pm = prior.mean.data();
  auto ps = prior.scale.data();
  const size_t zplane = static_cast<size_t>(hz) * wz;
  for (size_t i = 0; i < z.values.size(); ++i) {
    const size_t c = i / zplane;
    z.values[i] = static_cast<int16_t>(dec.Decode(cache.Get(pm[c], ps[c])));
  }
  const Tensor ctx = HyperSynthesis(Dequantize(z), w, h, width);
  LatentSlices y_hat;
  for (int k = 0; k < arch.num_slices(); ++k) {
    const GaussianParams p = PredictSliceParams(ctx, y_hat, k, w);
    SymbolTensor q{p.mean.shape(), {}};
    q.values.resize(p.mean.numel());
    auto md = p.mean.data();
    auto sd = p.scale.data();
    for (size_t i = 0; i < q.values.size(); ++i) {
      q.values[i] = static_cast<int16_t>(dec.Decode(cache.Get(md[i], sd[i])));
    }
    y_hat.push_back(Dequantize(q));
  }
  dec.CheckEnd();
  return y_hat;
}

void CheckRole(const TransformWeights& enh, ModelRole expected,
               const char* what) {
  const ModelRole role = enh.arch().role;
  const bool ok = expected == ModelRole::kFeatureResidual
                      ? UsesFeatureFusion(role)
                      : role == expected;
  if (!ok) {
    Fail(ErrorCode::kConfig, std::string(what) + ": weights have role '" +
                                 RoleName(role) + "'");
  }
}

void CheckBaseCompatible(const BaseState& base, const TransformWeights& enh) {
  const Architecture& a = enh.arch();
  Check(!base.y_hat.empty() && base.x_hat.defined(), ErrorCode::kInvalidArgument,
        "enhancement coding needs a decoded base state");
  if (UsesFeatureFusion(a.role)) {
    Check(a.num_slices() <= static_cast<int>(base.y_hat.size()),
          ErrorCode::kConfig, "N_a exceeds the base slice count N_m");
    int base_channels = 0;
    for (const Tensor& s : base.y_hat) base_channels += s.dim(1);
    Check(a.synthesis_in == base_channels, ErrorCode::kConfig,
          "enhancement synthesis width does not match the base latent");
  }
}

}  // namespace

double LambdaForId(int lambda_id) {
  if (lambda_id < 0 || lambda_id >= static_cast<int>(kLambdaSet.size())) {
    Fail(ErrorCode::kConfig,
         "lambda id " + std::to_string(lambda_id) + " outside [0, 4]");
  }
  return kLambdaSet[lambda_id];
}

int LambdaIdFor(double lambda) {
  for (size_t i = 0; i < kLambdaSet.size(); ++i) {
    if (kLambdaSet[i] == lambda) return static_cast<int>(i);
  }
  return -1;
}

StreamMode ModeForRole(ModelRole role) {
  switch (role) {
    case ModelRole::kBase:
      return StreamMode::kBaseOnly;
    case ModelRole::kFeatureResidual:
    case ModelRole::kFeatureFusion:
      return StreamMode::kFeatureResidual;
    case ModelRole::kPixelResidual:
      return StreamMode::kPixelResidual;
  }
  return StreamMode::kBaseOnly;
}

CodecConfig CodecConfig::From(const TransformWeights& base,
                              const TransformWeights* enh) {
  CodecConfig c;
  c.num_base_slices = base.arch().num_slices();
  c.base_channels = base.arch().latent_channels();
  c.lambda_id = base.arch().lambda_id;
  if (enh != nullptr) {
    c.num_enh_slices = enh->arch().num_slices();
    c.enh_channels = enh->arch().latent_channels();
    c.lambda_id = enh->arch().lambda_id;
    c.mode = ModeForRole(enh->arch().role);
  }
  c.Validate();
  return c;
}

void CodecConfig::Validate() const {
  Check(num_base_slices >= 1 && num_base_slices <= 255, ErrorCode::kConfig,
        "N_m must lie in [1, 255]");
  Check(base_channels % num_base_slices == 0, ErrorCode::kConfig,
        "base channels not divisible by N_m");
  if (mode == StreamMode::kBaseOnly) {
    Check(num_enh_slices == 0, ErrorCode::kConfig,
          "base-only configuration with N_a != 0");
  } else {
    if (num_enh_slices < 1 || num_enh_slices > num_base_slices) {
      Fail(ErrorCode::kConfig, "N_a " + std::to_string(num_enh_slices) +
                                   " outside [1, N_m=" +
                                   std::to_string(num_base_slices) + "]");
    }
    Check(enh_channels % num_enh_slices == 0, ErrorCode::kConfig,
          "enhancement channels not divisible by N_a");
  }
  Check(lambda_id >= -1 && lambda_id <= kMaxLambdaId, ErrorCode::kConfig,
        "lambda id outside [0, 4]");
}

BaseEncoding EncodeBase(const Tensor& x, const TransformWeights& base) {
  CheckImage(x, "EncodeBase");
  Check(base.arch().role == ModelRole::kBase, ErrorCode::kConfig,
        "EncodeBase: weights are not a base model");
  RangeEncoder enc;
  CdfCache cache;
  CodedLatent coded = EncodeLatent(Analysis(x, base), base, enc, cache);
  BaseEncoding out;
  out.layer.payload = enc.Finish();
  out.layer.stats = coded.stats;
  out.state.x_hat = Synthesis(ConcatSlices(coded.y_hat), base);
  out.state.y_hat = std::move(coded.y_hat);
  return out;
}

BaseState DecodeBase(std::span<const uint8_t> payload, int height, int width,
                     const TransformWeights& base) {
  Check(base.arch().role == ModelRole::kBase, ErrorCode::kConfig,
        "DecodeBase: weights are not a base model");
  Check(height > 0 && width > 0 && height % 16 == 0 && width % 16 == 0,
        ErrorCode::kInvalidArgument,
        "DecodeBase: frame size must be a positive multiple of 16");
  RangeDecoder dec(payload);
  CdfCache cache;
  BaseState state;
  state.y_hat = DecodeLatent(dec, base, height / 16, width / 16, cache);
  state.x_hat = Synthesis(ConcatSlices(state.y_hat), base);
  return state;
}

LatentSlices FeatureSubtract(const LatentSlices& y,
                             const LatentSlices& y_hat_m) {
  if (y.size() > y_hat_m.size()) {
    Fail(ErrorCode::kShapeMismatch,
         "FeatureSubtract: N_a=" + std::to_string(y.size()) +
             " exceeds N_m=" + std::to_string(y_hat_m.size()));
  }
  LatentSlices out;
  for (size_t k = 0; k < y.size(); ++k) {
    if (y[k].shape() != y_hat_m[k].shape()) {
      Fail(ErrorCode::kShapeMismatch,
           "FeatureSubtract: slice " + std::to_string(k) + " " +
               ShapeToString(y[k].shape()) + " vs base " +
               ShapeToString(y_hat_m[k].shape()));
    }
    out.push_back(Sub(y[k], y_hat_m[k]));
  }
  return out;
}

Tensor FeatureFuse(const LatentSlices& y_hat_m, const LatentSlices& y_hat_a) {
  if (y_hat_a.size() > y_hat_m.size()) {
    Fail(ErrorCode::kShapeMismatch,
         "FeatureFuse: N_a=" + std::to_string(y_hat_a.size()) +
             " exceeds N_m=" + std::to_string(y_hat_m.size()));
  }
  LatentSlices fused;
  for (size_t k = 0; k < y_hat_m.size(); ++k) {
    if (k < y_hat_a.size()) {
      if (y_hat_a[k].shape() != y_hat_m[k].shape()) {
        Fail(ErrorCode::kShapeMismatch,
             "FeatureFuse: slice " + std::to_string(k) + " " +
                 ShapeToString(y_hat_a[k].shape()) + " vs base " +
                 ShapeToString(y_hat_m[k].shape()));
      }
      fused.push_back(Add(y_hat_m[k], y_hat_a[k]));
    } else {
      fused.push_back(y_hat_m[k]);
    }
  }
  return ConcatSlices(fused);
}

Tensor PixelResidual(const Tensor& x, const Tensor& x_hat_m) {
  if (x.shape() != x_hat_m.shape()) {
    Fail(ErrorCode::kShapeMismatch, "PixelResidual: " +
                                        ShapeToString(x.shape()) + " vs " +
                                        ShapeToString(x_hat_m.shape()));
  }
  return Sub(x, x_hat_m);
}

EncodedLayer EncodeFr(const Tensor& x, const BaseState& base,
                      const TransformWeights& enh) {
  CheckImage(x, "EncodeFr");
  CheckRole(enh, ModelRole::kFeatureResidual, "EncodeFr");
  CheckBaseCompatible(base, enh);
  const LatentSlices y = SplitSlices(Analysis(x, enh), enh.arch().latent);
  const LatentSlices ya = enh.arch().role == ModelRole::kFeatureFusion
                              ? y
                              : FeatureSubtract(y, base.y_hat);
  RangeEncoder enc;
  CdfCache cache;
  CodedLatent coded = EncodeLatent(ConcatSlices(ya), enh, enc, cache);
  return EncodedLayer{enc.Finish(), coded.stats};
}

Tensor DecodeFr(const BaseState& base, std::span<const uint8_t> payload,
                const TransformWeights& enh) {
  CheckRole(enh, ModelRole::kFeatureResidual, "DecodeFr");
  CheckBaseCompatible(base, enh);
  RangeDecoder dec(payload);
  CdfCache cache;
  const Tensor& ref = base.y_hat.front();
  const LatentSlices y_hat_a =
      DecodeLatent(dec, enh, ref.dim(2), ref.dim(3), cache);
  return Synthesis(FeatureFuse(base.y_hat, y_hat_a), enh);
}

EncodedLayer EncodePr(const Tensor& x, const BaseState& base,
                      const TransformWeights& enh) {
  CheckImage(x, "EncodePr");
  CheckRole(enh, ModelRole::kPixelResidual, "EncodePr");
  CheckBaseCompatible(base, enh);
  const Tensor xd = PixelResidual(x, base.x_hat);
  RangeEncoder enc;
  CdfCache cache;
  CodedLatent coded = EncodeLatent(Analysis(xd, enh), enh, enc, cache);
  return EncodedLayer{enc.Finish(), coded.stats};
}

Tensor DecodePr(const BaseState& base, std::span<const uint8_t> payload,
                const TransformWeights& enh) {
  CheckRole(enh, ModelRole::kPixelResidual, "DecodePr");
  CheckBaseCompatible(base, enh);
  RangeDecoder dec(payload);
  CdfCache cache;
  const int h = base.x_hat.dim(2) / 16;
  const int w = base.x_hat.dim(3) / 16;
  const LatentSlices y_hat = DecodeLatent(dec, enh, h, w, cache);
  const Tensor xd_hat =
      Synthesis(ConcatSlices(y_hat), enh, /*clamp_output=*/false);
  return Clamp(Add(base.x_hat, xd_hat), 0.0f, 1.0f);
}

EncodedLayer EncodeEnhancement(const Tensor& x, const BaseState& base,
                               const TransformWeights& enh) {
  switch (enh.arch().role) {
    case ModelRole::kFeatureResidual:
    case ModelRole::kFeatureFusion:
      return EncodeFr(x, base, enh);
    case ModelRole::kPixelResidual:
      return EncodePr(x, base, enh);
    case ModelRole::kBase:
      break;
  }
  Fail(ErrorCode::kConfig, "enhancement weights have role 'base'");
}

Tensor DecodeEnhancement(const BaseState& base,
                         std::span<const uint8_t> payload,
                         const TransformWeights& enh) {
  switch (enh.arch().role) {
    case ModelRole::kFeatureResidual:
    case ModelRole::kFeatureFusion:
      return DecodeFr(base, payload, enh);
    case ModelRole::kPixelResidual:
      return DecodePr(base, payload, enh);
    case ModelRole::kBase:
      break;
  }
  Fail(ErrorCode::kConfig, "enhancement weights have role 'base'");
}

EncodedImage EncodeImage(const Tensor& x, const TransformWeights& base,
                         const TransformWeights* enh) {
  CheckImage(x, "EncodeImage");
  const CodecConfig config = CodecConfig::From(base, enh);
  const int height = x.dim(2), width = x.dim(3);
  if (height % kFrameAlignment != 0 || width % kFrameAlignment != 0 ||
      height > kMaxFrameDimension || width > kMaxFrameDimension) {
    Fail(ErrorCode::kShapeMismatch,
         "image " + std::to_string(height) + "x" + std::to_string(width) +
             ": height and width must be multiples of 16 (at most 4096); "
             "pad the image first");
  }
  BaseEncoding b = EncodeBase(x, base);
  EncodedImage out;
  LayeredBitstream stream;
  stream.header.mode = config.mode;
  stream.header.height = static_cast<uint16_t>(height);
  stream.header.width = static_cast<uint16_t>(width);
  stream.header.num_base_slices = static_cast<uint8_t>(config.num_base_slices);
  stream.header.num_enh_slices = static_cast<uint8_t>(config.num_enh_slices);
  stream.header.lambda_id = config.lambda_id < 0
                                ? kUnknownLambdaId
                                : static_cast<uint8_t>(config.lambda_id);
  stream.base = std::move(b.layer.payload);
  out.base_stats = b.layer.stats;
  if (enh != nullptr) {
    EncodedLayer e = EncodeEnhancement(x, b.state, *enh);
    stream.enhancement = std::move(e.payload);
    out.enh_stats = e.stats;
  }
  out.base_payload_bytes = stream.base.size();
  out.enh_payload_bytes = stream.enhancement.size();
  out.bytes = Serialize(stream);
  out.base = std::move(b.state);
  return out;
}

DecodedImage DecodeImage(std::span<const uint8_t> bytes,
                         const TransformWeights& base,
                         const TransformWeights* enh) {
  const LayeredBitstream stream = Parse(bytes, /*base_only=*/enh == nullptr);
  const StreamHeader& h = stream.header;
  if (h.num_base_slices != base.arch().num_slices()) {
    Fail(ErrorCode::kConfig,
         "stream has N_m=" + std::to_string(h.num_base_slices) +
             ", base weights have " +
             std::to_string(base.arch().num_slices()));
  }
  DecodedImage out;
  out.header = h;
  out.base = DecodeBase(stream.base, h.height, h.width, base);
  if (enh == nullptr) return out;
  if (h.mode == StreamMode::kBaseOnly) {
    Fail(ErrorCode::kConfig,
         "stream carries no enhancement layer; decode the base layer");
  }
  if (ModeForRole(enh->arch().role) != h.mode ||
      h.num_enh_slices != enh->arch().num_slices()) {
    Fail(ErrorCode::kConfig,
         "stream (mode " + std::to_string(static_cast<int>(h.mode)) +
             ", N_a=" + std::to_string(h.num_enh_slices) +
             ") does not match enhancement weights (role " +
             RoleName(enh->arch().role) + ", N_a=" +
             std::to_string(enh->arch().num_slices()) + ")");
  }
  out.human = DecodeEnhancement(out.base, stream.enhancement, *enh);
  return out;
}

}  // namespace resiscale
