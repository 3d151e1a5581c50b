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

#include "resiscale/train.h"

#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

#include "resiscale/entropy.h"
#include "resiscale/ops.h"
#include "resiscale/scalable.h"
#include "resiscale/status.h"

namespace resiscale {
namespace {

void CheckBinaryMask(const Tensor& mask) {
  for (float v : mask.data()) {
    if (v != 0.0f && v != 1.0f) {
      Fail(ErrorCode::kInvalidArgument,
           "mask must be binary (0 or 1), found " + std::to_string(v));
    }
  }
}

void CheckScalar(const Tensor& t, const char* what) {
  Check(t.defined() && t.numel() == 1, ErrorCode::kShapeMismatch,
        std::string(what) + " must be a scalar tensor");
}

Tensor RdSum(const Tensor& rate_a, const Tensor& rate_b, const Tensor& mse,
             double lambda) {
  CheckScalar(rate_a, "rate");
  CheckScalar(rate_b, "rate");
  Check(lambda >= 0.0, ErrorCode::kInvalidArgument, "lambda must be >= 0");
  return Add(Add(rate_a, rate_b),
             Scale(mse, static_cast<float>(lambda) * kDistortionScale));
}

uint64_t Mix(uint64_t a, uint64_t b) {
  // splitmix64 finaliser over the pair.
  uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

struct LatentRates {
  LatentSlices y_tilde;
  Tensor bits_y;
  Tensor bits_z;
};

// Noisy hyper-latent and slices with the same parameter path the coder
// uses; the noisy slices stand in for the decoded ones.
LatentRates NoisyLatentRates(const Tensor& y, const TransformWeights& w,
                             uint64_t seed) {
  LatentRates out;
  const Tensor z_tilde = NoiseProxy(HyperAnalysis(y, w), Mix(seed, 1));
  const GaussianParams prior = HyperPrior(w);
  const int n = z_tilde.dim(0), hz = z_tilde.dim(2), wz = z_tilde.dim(3);
  out.bits_z = GaussianRateBits(z_tilde, ExpandChannels(prior.mean, n, hz, wz),
                                ExpandChannels(prior.scale, n, hz, wz));
  const Tensor ctx = HyperSynthesis(z_tilde, w, y.dim(2), y.dim(3));
  const LatentSlices slices =
      SplitSlices(NoiseProxy(y, Mix(seed, 2)), w.arch().latent);
  for (int k = 0; k < static_cast<int>(slices.size()); ++k) {
    const GaussianParams p = PredictSliceParams(ctx, out.y_tilde, k, w);
    const Tensor bits = GaussianRateBits(slices[k], p.mean, p.scale);
    out.bits_y = out.bits_y.defined() ? Add(out.bits_y, bits) : bits;
    out.y_tilde.push_back(slices[k]);
  }
  return out;
}

Tensor StackTensors(const std::vector<Tensor>& parts) {
  Shape shape = parts.front().shape();
  shape[0] = 0;
  std::vector<float> values;
  for (const Tensor& t : parts) {
    Check(t.rank() == 4 && t.dim(1) == parts.front().dim(1) &&
              t.dim(2) == parts.front().dim(2) &&
              t.dim(3) == parts.front().dim(3),
          ErrorCode::kShapeMismatch, "batch members differ in shape");
    shape[0] += t.dim(0);
    values.insert(values.end(), t.data().begin(), t.data().end());
  }
  return Tensor(shape, std::move(values));
}

std::string FormatDouble(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <typename T>
T ParseNumber(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    Fail(ErrorCode::kConfig, "config: bad value '" + value + "' for " + key);
  }
  return out;
}

std::string Trim(const std::string& s) {
  const size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Tensor LossBase(const Tensor& x, const Tensor& x_hat, const Tensor& mask,
                const Tensor& rate_y, const Tensor& rate_z, double lambda) {
  CheckBinaryMask(mask);
  return RdSum(rate_y, rate_z, MaskedMse(x, x_hat, mask), lambda);
}

Tensor LossFr(const Tensor& x, const Tensor& x_hat, const Tensor& rate_ya,
              const Tensor& rate_z, double lambda) {
  return RdSum(rate_ya, rate_z, Mse(x, x_hat), lambda);
}

Tensor LossPr(const Tensor& xd, const Tensor& xd_hat, const Tensor& rate_yd,
              const Tensor& rate_zd, double lambda) {
  return RdSum(rate_yd, rate_zd, Mse(xd, xd_hat), lambda);
}

ForwardResult TrainingForward(const TransformWeights& w, const Batch& batch,
                              double lambda, uint64_t noise_seed) {
  const Tensor& x = batch.x;
  Check(x.rank() == 4, ErrorCode::kShapeMismatch, "batch images must be 4-D");
  const float inv_pixels =
      1.0f / static_cast<float>(x.dim(0) * x.dim(2) * x.dim(3));
  ForwardResult r;
  switch (w.arch().role) {
    case ModelRole::kBase: {
      const LatentRates lr = NoisyLatentRates(Analysis(x, w), w, noise_seed);
      r.rate_y = Scale(lr.bits_y, inv_pixels);
      r.rate_z = Scale(lr.bits_z, inv_pixels);
      r.x_hat = Synthesis(ConcatSlices(lr.y_tilde), w, false);
      r.distortion = MaskedMse(x, r.x_hat, batch.mask);
      r.loss = LossBase(x, r.x_hat, batch.mask, r.rate_y, r.rate_z, lambda);
      break;
    }
    case ModelRole::kFeatureResidual:
    case ModelRole::kFeatureFusion: {
      Check(!batch.base_y_hat.empty(), ErrorCode::kInvalidArgument,
            "FR training batch lacks base latents");
      LatentSlices y = SplitSlices(Analysis(x, w), w.arch().latent);
      if (w.arch().role == ModelRole::kFeatureResidual) {
        y = FeatureSubtract(y, batch.base_y_hat);
      }
      const LatentRates lr = NoisyLatentRates(ConcatSlices(y), w, noise_seed);
      r.rate_y = Scale(lr.bits_y, inv_pixels);
      r.rate_z = Scale(lr.bits_z, inv_pixels);
      r.x_hat = Synthesis(FeatureFuse(batch.base_y_hat, lr.y_tilde), w, false);
      r.distortion = Mse(x, r.x_hat);
      r.loss = LossFr(x, r.x_hat, r.rate_y, r.rate_z, lambda);
      break;
    }
    case ModelRole::kPixelResidual: {
      Check(batch.base_x_hat.defined(), ErrorCode::kInvalidArgument,
            "PR training batch lacks base reconstructions");
      const Tensor xd = PixelResidual(x, batch.base_x_hat);
      const LatentRates lr = NoisyLatentRates(Analysis(xd, w), w, noise_seed);
      r.rate_y = Scale(lr.bits_y, inv_pixels);
      r.rate_z = Scale(lr.bits_z, inv_pixels);
      r.x_hat = Synthesis(ConcatSlices(lr.y_tilde), w, false);
      r.distortion = Mse(xd, r.x_hat);
      r.loss = LossPr(xd, r.x_hat, r.rate_y, r.rate_z, lambda);
      break;
    }
  }
  return r;
}

void AdamStep(Tensor& weights, std::span<const float> grad, AdamState& state,
              double lr, const AdamOptions& options) {
  auto w = weights.mutable_data();
  Check(grad.size() == w.size(), ErrorCode::kShapeMismatch,
        "AdamStep: gradient size differs from the weights");
  if (state.m.empty()) {
    state.m.assign(w.size(), 0.0);
    state.v.assign(w.size(), 0.0);
  }
  Check(state.m.size() == w.size(), ErrorCode::kShapeMismatch,
        "AdamStep: state size differs from the weights");
  ++state.t;
  const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < w.size(); ++i) {
    const double g = grad[i];
    state.m[i] = options.beta1 * state.m[i] + (1.0 - options.beta1) * g;
    state.v[i] = options.beta2 * state.v[i] + (1.0 - options.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    w[i] = static_cast<float>(w[i] -
                              lr * m_hat / (std::sqrt(v_hat) + options.epsilon));
  }
}

Adam::Adam(std::vector<Tensor> params, AdamOptions options)
    : params_(std::move(params)), states_(params_.size()), options_(options) {}

void Adam::Step(double lr) {
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    AdamStep(p, p.grad(), states_[i], lr, options_);
    p.ZeroGrad();
  }
}

void TrainConfig::Set(const std::string& key, const std::string& value) {
  if (key == "role") {
    role = ParseRole(value);
  } else if (key == "lambda") {
    lambda = ParseNumber<double>(key, value);
  } else if (key == "lambda_id") {
    lambda_id = ParseNumber<int>(key, value);
  } else if (key == "steps") {
    steps = ParseNumber<int>(key, value);
  } else if (key == "batch_size") {
    batch_size = ParseNumber<int>(key, value);
  } else if (key == "learning_rate") {
    learning_rate = ParseNumber<double>(key, value);
  } else if (key == "decay_at") {
    decay_at = ParseNumber<double>(key, value);
  } else if (key == "seed") {
    seed = ParseNumber<uint64_t>(key, value);
  } else if (key == "dataset") {
    dataset = value;
  } else if (key == "synthetic_count") {
    synthetic_count = ParseNumber<int>(key, value);
  } else if (key == "image_size") {
    image_size = ParseNumber<int>(key, value);
  } else if (key == "num_slices") {
    num_slices = ParseNumber<int>(key, value);
  } else if (key == "slice_width") {
    slice_width = ParseNumber<int>(key, value);
  } else if (key == "base_weights") {
    base_weights = value;
  } else if (key == "init_weights") {
    init_weights = value;
  } else if (key == "log_every") {
    log_every = ParseNumber<int>(key, value);
  } else {
    Fail(ErrorCode::kConfig, "config: unknown key '" + key + "'");
  }
}

TrainConfig TrainConfig::Parse(const std::string& text) {
  TrainConfig c;
  std::stringstream in(text);
  std::string line;
  int number = 0;
  bool lambda_seen = false, id_seen = false;
  while (std::getline(in, line)) {
    ++number;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      Fail(ErrorCode::kConfig,
           "config line " + std::to_string(number) + ": expected key=value");
    }
    const std::string key = Trim(line.substr(0, eq));
    lambda_seen |= key == "lambda";
    id_seen |= key == "lambda_id";
    c.Set(key, Trim(line.substr(eq + 1)));
  }
  // One of the two is enough; the other is derived in Resolve().
  if (lambda_seen && !id_seen) c.lambda_id = -1;
  if (id_seen && !lambda_seen) c.lambda = 0.0;
  c.Resolve();
  return c;
}

std::string TrainConfig::ToText() const {
  std::ostringstream out;
  out << "role=" << RoleName(role) << "\n"
      << "lambda=" << FormatDouble(lambda) << "\n"
      << "lambda_id=" << lambda_id << "\n"
      << "steps=" << steps << "\n"
      << "batch_size=" << batch_size << "\n"
      << "learning_rate=" << FormatDouble(learning_rate) << "\n"
      << "decay_at=" << FormatDouble(decay_at) << "\n"
      << "seed=" << seed << "\n"
      << "dataset=" << dataset << "\n"
      << "synthetic_count=" << synthetic_count << "\n"
      << "image_size=" << image_size << "\n"
      << "num_slices=" << num_slices << "\n"
      << "slice_width=" << slice_width << "\n"
      << "base_weights=" << base_weights << "\n"
      << "init_weights=" << init_weights << "\n"
      << "log_every=" << log_every << "\n";
  return out.str();
}

void TrainConfig::Resolve() {
  if (lambda <= 0.0 && lambda_id >= 0) lambda = LambdaForId(lambda_id);
  Check(std::isfinite(lambda) && lambda > 0.0, ErrorCode::kConfig,
        "lambda must be positive");
  const int id = LambdaIdFor(lambda);
  if (lambda_id < 0) {
    lambda_id = id;
  } else if (id != lambda_id) {
    Fail(ErrorCode::kConfig, "lambda " + FormatDouble(lambda) +
                                 " disagrees with lambda_id " +
                                 std::to_string(lambda_id));
  }
  Check(steps >= 0, ErrorCode::kConfig, "steps must be >= 0");
  Check(batch_size >= 1, ErrorCode::kConfig, "batch_size must be >= 1");
  Check(learning_rate > 0.0, ErrorCode::kConfig, "learning_rate must be > 0");
  Check(decay_at >= 0.0 && decay_at <= 1.0, ErrorCode::kConfig,
        "decay_at must lie in [0, 1]");
  Check(synthetic_count >= 1, ErrorCode::kConfig,
        "synthetic_count must be >= 1");
  Check(num_slices >= 1 && slice_width >= 1, ErrorCode::kConfig,
        "num_slices and slice_width must be >= 1");
  Check(image_size >= 16 && image_size % 16 == 0, ErrorCode::kConfig,
        "image_size must be a positive multiple of 16");
}

std::string TrainReport::ToCsv() const {
  std::string out = "step,loss,rate_bits,distortion\n";
  for (const TrainStepRecord& r : steps) {
    out += std::to_string(r.step) + "," + FormatDouble(r.loss) + "," +
           FormatDouble(r.rate_bits) + "," + FormatDouble(r.distortion) + "\n";
  }
  return out;
}

BaseOutputs ComputeBaseOutputs(const TransformWeights& base,
                               const Dataset& data) {
  Check(base.arch().role == ModelRole::kBase, ErrorCode::kConfig,
        "frozen model is not a base model");
  BaseOutputs out;
  for (const Sample& s : data.samples) {
    const Tensor y_hat = Dequantize(Quantize(Analysis(s.image, base)).symbols);
    out.y_hat.push_back(SplitSlices(y_hat, base.arch().latent));
    out.x_hat.push_back(Synthesis(y_hat, base));
  }
  return out;
}

Batch MakeBatch(const Dataset& data, const BaseOutputs* base,
                const std::vector<size_t>& indices) {
  Batch b;
  b.x = data.Images(indices);
  b.mask = data.Masks(indices);
  if (base != nullptr) {
    std::vector<Tensor> x_hat;
    const size_t slices = base->y_hat.at(indices.front()).size();
    std::vector<std::vector<Tensor>> per_slice(slices);
    for (size_t i : indices) {
      x_hat.push_back(base->x_hat.at(i));
      for (size_t k = 0; k < slices; ++k) {
        per_slice[k].push_back(base->y_hat.at(i)[k]);
      }
    }
    b.base_x_hat = StackTensors(x_hat);
    for (auto& parts : per_slice) b.base_y_hat.push_back(StackTensors(parts));
  }
  return b;
}

TransformWeights InitializeEnhancement(const Architecture& arch,
                                       const TransformWeights& base,
                                       uint64_t seed) {
  Check(arch.role != ModelRole::kBase, ErrorCode::kConfig,
        "InitializeEnhancement needs an enhancement role");
  TransformWeights w = TransformWeights::Initialize(arch, seed);
  if (UsesFeatureFusion(arch.role)) {
    // Leading rows (output channels) of each base tensor that fits.
    for (const LayerSpec& spec : LayerSpecs(arch)) {
      const bool analysis = spec.name.rfind("analysis.", 0) == 0;
      const bool synthesis = spec.name.rfind("synthesis.", 0) == 0;
      if (!analysis && !synthesis) continue;
      const Tensor& from = base.Get(spec.name);
      Shape trailing_from(from.shape().begin() + 1, from.shape().end());
      Shape trailing_to(spec.shape.begin() + 1, spec.shape.end());
      if (trailing_from != trailing_to || from.dim(0) < spec.shape[0]) continue;
      Tensor t(spec.shape);
      const auto src = from.data();
      std::copy(src.begin(), src.begin() + t.numel(), t.mutable_data().begin());
      w.Set(spec.name, std::move(t));
    }
  } else {
    // Small initial residual: x^m + x^d starts close to x^m.
    const std::string out = "synthesis.3.weight";
    w.Set(out, Scale(w.Get(out), kResidualOutputScale));
  }
  return w;
}

TrainResult TrainModel(const TrainConfig& config_in,
                       const TransformWeights* base, const Dataset* data,
                       const TrainProgress& progress,
                       const TransformWeights* init) {
  TrainConfig config = config_in;
  config.Resolve();
  Architecture arch;
  if (config.role == ModelRole::kBase) {
    arch = Architecture::Base(config.num_slices * config.slice_width,
                              config.num_slices);
  } else {
    Check(base != nullptr, ErrorCode::kConfig,
          std::string("training role '") + RoleName(config.role) +
              "' needs frozen base weights");
    arch = Architecture::Enhancement(config.role, config.num_slices,
                                     base->arch(), config.slice_width);
  }
  arch.lambda = config.lambda;
  arch.lambda_id = config.lambda_id;

  Dataset synthetic;
  if (data == nullptr) {
    if (config.dataset.empty()) {
      SyntheticOptions opts;
      opts.size = config.image_size;
      synthetic = GenerateDataset(config.synthetic_count, config.seed, opts);
    } else {
      synthetic = ReadDataset(config.dataset);
    }
    data = &synthetic;
  }
  Check(data->size() > 0, ErrorCode::kConfig, "training set is empty");

  BaseOutputs base_out;
  if (config.role != ModelRole::kBase) {
    base_out = ComputeBaseOutputs(*base, *data);
  }

  if (init != nullptr) {
    Architecture a = init->arch();
    a.lambda = arch.lambda;
    a.lambda_id = arch.lambda_id;
    Check(a == arch, ErrorCode::kConfig,
          "starting weights do not match the configured architecture");
  }
  TrainResult result{
      init != nullptr ? init->Clone()
      : config.role == ModelRole::kBase
          ? TransformWeights::Initialize(arch, config.seed)
          : InitializeEnhancement(arch, *base, config.seed),
      {}};
  result.weights.mutable_arch() = arch;
  result.report.seed = config.seed;
  TransformWeights& w = result.weights;
  w.SetRequiresGrad(true);
  Adam adam(w.Parameters());
  std::mt19937_64 rng(Mix(config.seed, 0xBA7C4));
  std::uniform_int_distribution<size_t> pick(0, data->size() - 1);
  const int decay_step =
      static_cast<int>(std::ceil(config.decay_at * config.steps));

  for (int step = 0; step < config.steps; ++step) {
    std::vector<size_t> indices(config.batch_size);
    for (size_t& i : indices) i = pick(rng);
    const Batch batch = MakeBatch(
        *data, config.role == ModelRole::kBase ? nullptr : &base_out, indices);
    Tape tape;
    ForwardResult f;
    {
      TapeScope scope(tape);
      f = TrainingForward(w, batch, config.lambda,
                          Mix(config.seed, static_cast<uint64_t>(step) + 1));
    }
    tape.Backward(f.loss);
    const double lr =
        config.learning_rate * (step >= decay_step ? 0.1 : 1.0);
    adam.Step(lr);

    TrainStepRecord rec;
    rec.step = step;
    rec.loss = f.loss.item();
    rec.rate_bits = (f.rate_y.item() + f.rate_z.item()) * batch.x.dim(2) *
                    batch.x.dim(3);
    rec.distortion = f.distortion.item();
    result.report.steps.push_back(rec);
    if (progress) progress(rec);
  }
  w.SetRequiresGrad(false);
  result.weights = w.Clone();
  return result;
}

}  // namespace resiscale
