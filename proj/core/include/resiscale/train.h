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

// Rate-distortion training.
//
// Units: rates enter the losses in bits per pixel of the batch, and
// distortion is lambda * 255^2 * MSE on [0,1] samples, so the lambda set
// {0.005 .. 0.05} spans a useful range of trade-offs.
//
//   base     R(y) + R(z) + lambda * 255^2 * mse(x*m, x^*m)
//   FR / FF  R(ya) + R(z) + lambda * 255^2 * mse(x, x^)
//   PR       R(yd) + R(zd) + lambda * 255^2 * mse(xd, xd^)
//
// Enhancement models train against a frozen base whose quantized latents
// and reconstructions are computed once per image.

#ifndef RESISCALE_TRAIN_H_
#define RESISCALE_TRAIN_H_

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "resiscale/dataset.h"
#include "resiscale/scalable.h"
#include "resiscale/tensor.h"
#include "resiscale/transform.h"

namespace resiscale {

inline constexpr float kDistortionScale = 255.0f * 255.0f;

// Scalar losses; rate arguments are scalar tensors in bits per pixel.
// The mask must be binary.
Tensor LossBase(const Tensor& x, const Tensor& x_hat, const Tensor& mask,
                const Tensor& rate_y, const Tensor& rate_z, double lambda);
Tensor LossFr(const Tensor& x, const Tensor& x_hat, const Tensor& rate_ya,
              const Tensor& rate_z, double lambda);
Tensor LossPr(const Tensor& xd, const Tensor& xd_hat, const Tensor& rate_yd,
              const Tensor& rate_zd, double lambda);

// Everything the training forward pass needs for one batch.
struct Batch {
  Tensor x;                 // [B,3,H,W]
  Tensor mask;              // [B,1,H,W]
  LatentSlices base_y_hat;  // frozen base slices, FR / FF only
  Tensor base_x_hat;        // frozen base reconstruction, PR only
};

struct ForwardResult {
  Tensor loss;
  Tensor rate_y;      // bpp
  Tensor rate_z;      // bpp
  Tensor distortion;  // mse (masked for the base)
  Tensor x_hat;       // reconstruction the distortion was measured on
};

// Noise-proxy forward pass for the role of `w`; records on the active tape.
ForwardResult TrainingForward(const TransformWeights& w, const Batch& batch,
                              double lambda, uint64_t noise_seed);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  int64_t t = 0;
};

// One Adam update of `weights` in place.
void AdamStep(Tensor& weights, std::span<const float> grad, AdamState& state,
              double lr, const AdamOptions& options = {});

class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamOptions options = {});
  // Applies the gradients accumulated on the parameters, then zeroes them.
  void Step(double lr);

 private:
  std::vector<Tensor> params_;
  std::vector<AdamState> states_;
  AdamOptions options_;
};

struct TrainConfig {
  ModelRole role = ModelRole::kBase;
  double lambda = 0.05;
  int lambda_id = 4;
  int steps = 20000;
  int batch_size = 8;
  double learning_rate = 1e-3;
  // Fraction of steps after which the learning rate drops by 10x.
  double decay_at = 0.8;
  uint64_t seed = 1;
  // Image/mask folder; empty means a synthetic set of synthetic_count images.
  std::string dataset;
  int synthetic_count = 256;
  int image_size = 64;
  int num_slices = 5;  // N for base, N_a for enhancement roles
  int slice_width = 8;
  std::string base_weights;  // path, used by the command line only
  std::string init_weights;  // path of a starting model; command line only
  int log_every = 0;

  // Flat key=value text; '#' starts a comment. Unknown keys throw kConfig.
  static TrainConfig Parse(const std::string& text);
  // Applies one key=value assignment.
  void Set(const std::string& key, const std::string& value);
  std::string ToText() const;
  // Fills lambda / lambda_id from each other and checks ranges.
  void Resolve();
};

struct TrainStepRecord {
  int step = 0;
  double loss = 0.0;
  double rate_bits = 0.0;  // estimated bits per image
  double distortion = 0.0;
};

struct TrainReport {
  uint64_t seed = 0;
  std::vector<TrainStepRecord> steps;
  std::string weights_path;

  // Header "step,loss,rate_bits,distortion".
  std::string ToCsv() const;
};

struct TrainResult {
  TransformWeights weights;
  TrainReport report;
};

using TrainProgress = std::function<void(const TrainStepRecord&)>;

// Output-layer scale of a fresh PR model.
inline constexpr float kResidualOutputScale = 0.1f;

// Starting point of an enhancement model. FR and FF copy the base analysis
// (its output layer cut to the first N_a slices) and synthesis, so training
// starts from a reconstruction near x^m. PR scales its output layer by
// kResidualOutputScale. Everything else is TransformWeights::Initialize.
TransformWeights InitializeEnhancement(const Architecture& arch,
                                       const TransformWeights& base,
                                       uint64_t seed);

// Trains a model of config.role. Enhancement roles need `base`, which is
// only read. `data` defaults to the synthetic set the config describes.
// `init`, when given, replaces the fresh initialisation (fine-tuning, e.g.
// from the model of a neighbouring lambda); its architecture must match
// apart from the lambda metadata, else kConfig.
TrainResult TrainModel(const TrainConfig& config,
                       const TransformWeights* base = nullptr,
                       const Dataset* data = nullptr,
                       const TrainProgress& progress = {},
                       const TransformWeights* init = nullptr);

// Frozen-base quantities for every sample: per-sample slices and x^m.
struct BaseOutputs {
  std::vector<LatentSlices> y_hat;
  std::vector<Tensor> x_hat;
};
BaseOutputs ComputeBaseOutputs(const TransformWeights& base,
                               const Dataset& data);
Batch MakeBatch(const Dataset& data, const BaseOutputs* base,
                const std::vector<size_t>& indices);

}  // namespace resiscale

#endif  // RESISCALE_TRAIN_H_
