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

#include "resiscale/transform.h"

#include <charconv>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "resiscale/ops.h"
#include "resiscale/status.h"

namespace resiscale {
namespace {

constexpr int kKernel = 3;

std::string LayerName(const std::string& block, int index) {
  return block + "." + std::to_string(index);
}

std::string JoinInts(const std::vector<int>& values) {
  std::string out;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(values[i]);
  }
  return out;
}

int ParseInt(const std::string& text, const std::string& key) {
  int value = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    Fail(ErrorCode::kConfig,
         "architecture: bad integer '" + text + "' for " + key);
  }
  return value;
}

std::vector<int> ParseInts(const std::string& text, const std::string& key) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(ParseInt(item, key));
  return out;
}

std::string FormatDouble(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// Conv + optional leaky ReLU, using "<name>.weight" / "<name>.bias".
Tensor ConvLayer(const Tensor& x, const TransformWeights& w,
                 const std::string& name, int stride, int pad, bool activate) {
  Tensor y = Conv2D(x, w.Get(name + ".weight"), w.Get(name + ".bias"), stride,
                    pad);
  return activate ? LeakyRelu(y) : y;
}

Tensor DeconvLayer(const Tensor& x, const TransformWeights& w,
                   const std::string& name, bool activate) {
  Tensor y = Conv2DTranspose(x, w.Get(name + ".weight"), w.Get(name + ".bias"),
                             2, 1, 1);
  return activate ? LeakyRelu(y) : y;
}

}  // namespace

const char* RoleName(ModelRole role) {
  switch (role) {
    case ModelRole::kBase:
      return "base";
    case ModelRole::kFeatureResidual:
      return "fr";
    case ModelRole::kPixelResidual:
      return "pr";
    case ModelRole::kFeatureFusion:
      return "ff";
  }
  return "unknown";
}

ModelRole ParseRole(const std::string& name) {
  if (name == "base") return ModelRole::kBase;
  if (name == "fr") return ModelRole::kFeatureResidual;
  if (name == "pr") return ModelRole::kPixelResidual;
  if (name == "ff") return ModelRole::kFeatureFusion;
  Fail(ErrorCode::kConfig, "unknown model role '" + name + "'");
}

bool UsesFeatureFusion(ModelRole role) {
  return role == ModelRole::kFeatureResidual ||
         role == ModelRole::kFeatureFusion;
}

SlicePartition SlicePartition::Equal(int total_channels, int num_slices) {
  Check(num_slices >= 1 && total_channels >= num_slices &&
            total_channels % num_slices == 0,
        ErrorCode::kConfig,
        "channel count " + std::to_string(total_channels) +
            " is not divisible into " + std::to_string(num_slices) +
            " equal slices");
  return SlicePartition{
      std::vector<int>(num_slices, total_channels / num_slices)};
}

int SlicePartition::total() const {
  return std::accumulate(widths.begin(), widths.end(), 0);
}

int SlicePartition::offset(int k) const {
  Check(k >= 0 && k <= count(), ErrorCode::kInvalidArgument,
        "slice index out of range");
  return std::accumulate(widths.begin(), widths.begin() + k, 0);
}

void SlicePartition::Validate() const {
  Check(!widths.empty(), ErrorCode::kConfig, "slice partition is empty");
  for (int c : widths) {
    Check(c >= 1, ErrorCode::kConfig, "slice widths must be positive");
  }
}

LatentSlices SplitSlices(const Tensor& y, const SlicePartition& partition) {
  partition.Validate();
  Check(y.rank() == 4, ErrorCode::kShapeMismatch,
        "SplitSlices: latent must be [N,C,h,w]");
  if (y.dim(1) != partition.total()) {
    Fail(ErrorCode::kShapeMismatch,
         "SplitSlices: latent " + ShapeToString(y.shape()) + " has " +
             std::to_string(y.dim(1)) + " channels, partition expects " +
             std::to_string(partition.total()));
  }
  LatentSlices slices;
  for (int k = 0; k < partition.count(); ++k) {
    slices.push_back(SliceChannels(y, partition.offset(k), partition.widths[k]));
  }
  return slices;
}

Tensor ConcatSlices(const LatentSlices& slices) {
  if (slices.size() == 1) return slices.front();
  return ConcatChannels(slices);
}

Architecture Architecture::Base(int latent_channels, int num_slices) {
  Architecture a;
  a.role = ModelRole::kBase;
  a.latent = SlicePartition::Equal(latent_channels, num_slices);
  a.synthesis_in = latent_channels;
  a.Validate();
  return a;
}

Architecture Architecture::Enhancement(ModelRole role, int num_slices,
                                       const Architecture& base,
                                       int slice_width) {
  Check(role != ModelRole::kBase, ErrorCode::kConfig,
        "enhancement architecture needs an enhancement role");
  Check(num_slices >= 1 && num_slices <= base.num_slices(), ErrorCode::kConfig,
        "enhancement slice count must lie in [1, " +
            std::to_string(base.num_slices()) + "]");
  Architecture a = base;
  a.role = role;
  a.latent = SlicePartition{std::vector<int>(num_slices, slice_width)};
  a.synthesis_in =
      UsesFeatureFusion(role) ? base.latent_channels() : a.latent.total();
  a.lambda = 0.0;
  a.lambda_id = -1;
  if (UsesFeatureFusion(role)) {
    for (int k = 0; k < num_slices; ++k) {
      Check(base.latent.widths[k] == slice_width, ErrorCode::kConfig,
            "feature residual slices must match the base slice widths");
    }
  }
  a.Validate();
  return a;
}

void Architecture::Validate() const {
  latent.Validate();
  Check(in_channels >= 1 && out_channels >= 1 && hyper_channels >= 1 &&
            param_hidden >= 1 && synthesis_in >= 1,
        ErrorCode::kConfig, "architecture widths must be positive");
  Check(analysis_widths.size() == 3, ErrorCode::kConfig,
        "analysis needs exactly three hidden widths");
  for (int c : analysis_widths) {
    Check(c >= 1, ErrorCode::kConfig, "analysis widths must be positive");
  }
  if (UsesFeatureFusion(role)) {
    Check(synthesis_in >= latent.total(), ErrorCode::kConfig,
          "fusion synthesis input narrower than the residual latent");
  } else {
    Check(synthesis_in == latent.total(), ErrorCode::kConfig,
          "synthesis input must equal the latent width");
  }
}

std::string Architecture::ToText() const {
  std::ostringstream out;
  out << "role=" << RoleName(role) << "\n"
      << "in_channels=" << in_channels << "\n"
      << "analysis_widths=" << JoinInts(analysis_widths) << "\n"
      << "slices=" << JoinInts(latent.widths) << "\n"
      << "hyper_channels=" << hyper_channels << "\n"
      << "param_hidden=" << param_hidden << "\n"
      << "synthesis_in=" << synthesis_in << "\n"
      << "out_channels=" << out_channels << "\n"
      << "lambda=" << FormatDouble(lambda) << "\n"
      << "lambda_id=" << lambda_id << "\n";
  return out.str();
}

Architecture Architecture::FromText(const std::string& text) {
  Architecture a;
  std::map<std::string, std::string> kv;
  std::stringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    Check(eq != std::string::npos, ErrorCode::kConfig,
          "architecture: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto take = [&](const char* key) -> std::string {
    auto it = kv.find(key);
    Check(it != kv.end(), ErrorCode::kConfig,
          std::string("architecture: missing key ") + key);
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  a.role = ParseRole(take("role"));
  a.in_channels = ParseInt(take("in_channels"), "in_channels");
  a.analysis_widths = ParseInts(take("analysis_widths"), "analysis_widths");
  a.latent.widths = ParseInts(take("slices"), "slices");
  a.hyper_channels = ParseInt(take("hyper_channels"), "hyper_channels");
  a.param_hidden = ParseInt(take("param_hidden"), "param_hidden");
  a.synthesis_in = ParseInt(take("synthesis_in"), "synthesis_in");
  a.out_channels = ParseInt(take("out_channels"), "out_channels");
  {
    const std::string v = take("lambda");
    const char* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, a.lambda);
    Check(ec == std::errc() && ptr == end, ErrorCode::kConfig,
          "architecture: bad lambda '" + v + "'");
  }
  a.lambda_id = ParseInt(take("lambda_id"), "lambda_id");
  Check(kv.empty(), ErrorCode::kConfig,
        "architecture: unknown key '" + (kv.empty() ? "" : kv.begin()->first) +
            "'");
  a.Validate();
  return a;
}

std::vector<LayerSpec> LayerSpecs(const Architecture& arch) {
  std::vector<LayerSpec> specs;
  auto conv = [&](const std::string& name, int out, int in, int k) {
    specs.push_back({name + ".weight", {out, in, k, k}});
    specs.push_back({name + ".bias", {out}});
  };
  auto deconv = [&](const std::string& name, int in, int out, int k) {
    specs.push_back({name + ".weight", {in, out, k, k}});
    specs.push_back({name + ".bias", {out}});
  };
  const int m = arch.latent_channels();
  const std::vector<int>& hw = arch.analysis_widths;

  const std::vector<int> analysis = {arch.in_channels, hw[0], hw[1], hw[2], m};
  for (int i = 0; i < 4; ++i) {
    conv(LayerName("analysis", i), analysis[i + 1], analysis[i], kKernel);
  }
  const std::vector<int> synthesis = {arch.synthesis_in, hw[2], hw[1], hw[0],
                                      arch.out_channels};
  for (int i = 0; i < 4; ++i) {
    deconv(LayerName("synthesis", i), synthesis[i], synthesis[i + 1], kKernel);
  }
  const int mz = arch.hyper_channels;
  conv(LayerName("hyper_analysis", 0), mz, m, kKernel);
  conv(LayerName("hyper_analysis", 1), mz, mz, kKernel);
  deconv(LayerName("hyper_synthesis", 0), mz, mz, kKernel);
  deconv(LayerName("hyper_synthesis", 1), mz, 2 * m, kKernel);
  specs.push_back({"hyper_prior.mean", {mz}});
  specs.push_back({"hyper_prior.scale", {mz}});
  for (int k = 0; k < arch.num_slices(); ++k) {
    const std::string base = "param." + std::to_string(k);
    conv(base + ".0", arch.param_hidden, 2 * m + arch.latent.offset(k), 1);
    conv(base + ".1", 2 * arch.latent.widths[k], arch.param_hidden, kKernel);
  }
  return specs;
}

TransformWeights::TransformWeights(Architecture arch) : arch_(std::move(arch)) {
  arch_.Validate();
  for (const LayerSpec& spec : LayerSpecs(arch_)) {
    tensors_.emplace(spec.name, Tensor(spec.shape));
  }
}

TransformWeights TransformWeights::Initialize(const Architecture& arch,
                                              uint64_t seed) {
  TransformWeights w(arch);
  std::mt19937_64 rng(seed);
  for (const LayerSpec& spec : LayerSpecs(arch)) {
    if (spec.shape.size() != 4) continue;  // biases and prior stay zero
    const bool transposed = spec.name.rfind("synthesis", 0) == 0 ||
                            spec.name.rfind("hyper_synthesis", 0) == 0;
    const int in = transposed ? spec.shape[0] : spec.shape[1];
    const int k = spec.shape[2] * spec.shape[3];
    // A stride-2 transposed conv feeds each output from a quarter of the taps.
    const double fan_in = transposed ? in * k / 4.0 : in * k;
    std::normal_distribution<float> dist(
        0.0f, static_cast<float>(std::sqrt(2.0 / fan_in)));
    Tensor t(spec.shape);
    for (float& v : t.mutable_data()) v = dist(rng);
    w.tensors_[spec.name] = t;
  }
  return w;
}

const Tensor& TransformWeights::Get(const std::string& name) const {
  auto it = tensors_.find(name);
  Check(it != tensors_.end(), ErrorCode::kInvalidArgument,
        "no weight tensor named '" + name + "'");
  return it->second;
}

void TransformWeights::Set(const std::string& name, Tensor value) {
  auto it = tensors_.find(name);
  Check(it != tensors_.end(), ErrorCode::kInvalidArgument,
        "no weight tensor named '" + name + "'");
  if (it->second.shape() != value.shape()) {
    Fail(ErrorCode::kShapeMismatch,
         "weight '" + name + "' expects " + ShapeToString(it->second.shape()) +
             ", got " + ShapeToString(value.shape()));
  }
  it->second = std::move(value);
}

std::vector<Tensor> TransformWeights::Parameters() const {
  std::vector<Tensor> params;
  for (const LayerSpec& spec : LayerSpecs(arch_)) {
    params.push_back(tensors_.at(spec.name));
  }
  return params;
}

void TransformWeights::SetRequiresGrad(bool requires_grad) {
  for (auto& [name, t] : tensors_) t.set_requires_grad(requires_grad);
}

TransformWeights TransformWeights::Clone() const {
  TransformWeights copy(arch_);
  for (const auto& [name, t] : tensors_) copy.tensors_[name] = t.Clone();
  return copy;
}

Tensor Analysis(const Tensor& x, const TransformWeights& w) {
  Check(x.rank() == 4, ErrorCode::kShapeMismatch,
        "analysis input must be [N,C,H,W], got " + ShapeToString(x.shape()));
  if (x.dim(2) % 16 != 0 || x.dim(3) % 16 != 0 || x.dim(2) == 0 ||
      x.dim(3) == 0) {
    Fail(ErrorCode::kShapeMismatch,
         "analysis input " + ShapeToString(x.shape()) +
             ": height and width must be positive multiples of 16; pad the "
             "image first");
  }
  Tensor h = x;
  for (int i = 0; i < 4; ++i) {
    h = ConvLayer(h, w, LayerName("analysis", i), 2, 1, i < 3);
  }
  return h;
}

Tensor Synthesis(const Tensor& y, const TransformWeights& w,
                 bool clamp_output) {
  Check(y.rank() == 4 && y.dim(1) == w.arch().synthesis_in,
        ErrorCode::kShapeMismatch,
        "synthesis input " + ShapeToString(y.shape()) + " needs " +
            std::to_string(w.arch().synthesis_in) + " channels");
  Tensor h = y;
  for (int i = 0; i < 4; ++i) {
    h = DeconvLayer(h, w, LayerName("synthesis", i), i < 3);
  }
  return clamp_output ? Clamp(h, 0.0f, 1.0f) : h;
}

Tensor HyperAnalysis(const Tensor& y, const TransformWeights& w) {
  Check(y.rank() == 4 && y.dim(1) == w.arch().latent_channels(),
        ErrorCode::kShapeMismatch,
        "hyper analysis input " + ShapeToString(y.shape()) + " needs " +
            std::to_string(w.arch().latent_channels()) + " channels");
  Tensor h = ConvLayer(y, w, LayerName("hyper_analysis", 0), 2, 1, true);
  return ConvLayer(h, w, LayerName("hyper_analysis", 1), 2, 1, false);
}

Tensor HyperSynthesis(const Tensor& z, const TransformWeights& w, int h,
                      int width) {
  Check(z.rank() == 4 && z.dim(1) == w.arch().hyper_channels,
        ErrorCode::kShapeMismatch,
        "hyper synthesis input " + ShapeToString(z.shape()) + " needs " +
            std::to_string(w.arch().hyper_channels) + " channels");
  Tensor c = DeconvLayer(z, w, LayerName("hyper_synthesis", 0), true);
  c = DeconvLayer(c, w, LayerName("hyper_synthesis", 1), false);
  if (c.dim(2) == h && c.dim(3) == width) return c;
  return CropSpatial(c, h, width);
}

GaussianParams HyperPrior(const TransformWeights& w) {
  return GaussianParams{
      w.Get("hyper_prior.mean"),
      AddScalar(Softplus(w.Get("hyper_prior.scale")), kScaleMin)};
}

GaussianParams PredictSliceParams(const Tensor& context,
                                  const LatentSlices& prior, int k,
                                  const TransformWeights& w) {
  const Architecture& arch = w.arch();
  Check(k >= 0 && k < arch.num_slices(), ErrorCode::kInvalidArgument,
        "slice index " + std::to_string(k) + " out of range");
  if (static_cast<int>(prior.size()) != k) {
    Fail(ErrorCode::kInvalidArgument,
         "slice " + std::to_string(k) + " needs exactly " + std::to_string(k) +
             " previously decoded slices, got " +
             std::to_string(prior.size()));
  }
  Check(context.rank() == 4 && context.dim(1) == 2 * arch.latent_channels(),
        ErrorCode::kShapeMismatch,
        "context " + ShapeToString(context.shape()) + " needs " +
            std::to_string(2 * arch.latent_channels()) + " channels");
  std::vector<Tensor> inputs{context};
  inputs.insert(inputs.end(), prior.begin(), prior.end());
  const Tensor features = inputs.size() == 1 ? context : ConcatChannels(inputs);
  const std::string base = "param." + std::to_string(k);
  Tensor h = ConvLayer(features, w, base + ".0", 1, 0, true);
  Tensor out = ConvLayer(h, w, base + ".1", 1, 1, false);
  const int width = arch.latent.widths[k];
  GaussianParams params;
  params.mean = SliceChannels(out, 0, width);
  params.scale = AddScalar(Softplus(SliceChannels(out, width, width)),
                           kScaleMin);
  return params;
}

}  // namespace resiscale
