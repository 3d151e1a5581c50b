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


#include <algorithm>
#include <cmath>
#include <random>

#include "gtest/gtest.h"
#include "resiscale/dataset.h"
#include "resiscale/entropy.h"
#include "resiscale/eval.h"
#include "resiscale/grad_check.h"
#include "resiscale/ops.h"
#include "resiscale/scalable.h"
#include "resiscale/status.h"
#include "resiscale/train.h"
#include "resiscale/weights_io.h"
#include "test_util.h"

namespace resiscale {
namespace {

using testing::RandomTensor;

Tensor S(float v) { return Tensor::Scalar(v); }

TEST(Losses, BaseMaskEdgeCases) {
  std::mt19937_64 rng(1);
  Tensor x = RandomTensor({1, 3, 4, 4}, rng, 0, 1);
  Tensor xh = RandomTensor({1, 3, 4, 4}, rng, 0, 1);
  EXPECT_FLOAT_EQ(LossBase(x, xh, Tensor({1, 1, 4, 4}, 0.0f), S(0.3f), S(0.2f), 0.05).item(),
                  0.5f);
  const float full = LossBase(x, xh, Tensor({1, 1, 4, 4}, 1.0f), S(0.3f), S(0.2f), 0.05).item();
  EXPECT_NEAR(full, 0.5 + 0.05 * 65025.0 * MseOf(x, xh), 1e-3);
  EXPECT_NEAR(LossFr(x, xh, S(0.3f), S(0.2f), 0.05).item(), full, 1e-3);
  Tensor bad({1, 1, 4, 4}, 1.0f);
  bad.mutable_data()[3] = 0.5f;
  EXPECT_THROW(LossBase(x, xh, bad, S(0), S(0), 0.05), Error);
}

// Two-by-two single-channel case worked by hand:
// x = [0, .5, 1, .25], x_hat = [.1, .5, .8, .25], squared errors sum to .05,
// mse = .0125; masked with m = [1, 0, 1, 0] keeps .01 + .04 over 4 elements.
TEST(Losses, HandComputed) {
  Tensor x({1, 1, 2, 2}, {0.0f, 0.5f, 1.0f, 0.25f});
  Tensor xh({1, 1, 2, 2}, {0.1f, 0.5f, 0.8f, 0.25f});
  const double l = 0.02;
  EXPECT_NEAR(LossFr(x, xh, S(1.5f), S(0.25f), l).item(),
              1.75 + l * 65025.0 * 0.0125, 1e-3);
  EXPECT_NEAR(LossPr(x, xh, S(1.0f), S(0.5f), l).item(),
              1.5 + l * 65025.0 * 0.0125, 1e-3);
  Tensor m({1, 1, 2, 2}, {1.0f, 0.0f, 1.0f, 0.0f});
  EXPECT_NEAR(LossBase(x, xh, m, S(1.0f), S(0.0f), l).item(),
              1.0 + l * 65025.0 * 0.0125, 1e-3);
  Tensor m2({1, 1, 2, 2}, {0.0f, 1.0f, 0.0f, 1.0f});
  EXPECT_NEAR(LossBase(x, xh, m2, S(1.0f), S(0.0f), l).item(), 1.0, 1e-5);
  // lambda = 0 and perfect reconstructions leave the rate only.
  EXPECT_FLOAT_EQ(LossFr(x, xh, S(1.5f), S(0.25f), 0.0).item(), 1.75f);
  EXPECT_FLOAT_EQ(LossFr(x, x, S(1.5f), S(0.25f), 0.05).item(), 1.75f);
  EXPECT_FLOAT_EQ(LossPr(Tensor({1, 1, 2, 2}), Tensor({1, 1, 2, 2}), S(2.0f),
                         S(0.5f), 0.05).item(),
                  2.5f);
}

TEST(Losses, BaseGradientVanishesOutsideMask) {
  std::mt19937_64 rng(2);
  Tensor x = RandomTensor({1, 3, 4, 4}, rng, 0, 1);
  Tensor xh = RandomTensor({1, 3, 4, 4}, rng, 0, 1);
  Tensor m({1, 1, 4, 4}, 0.0f);
  for (int i = 0; i < 16; i += 3) m.mutable_data()[i] = 1.0f;
  xh.set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.Backward(LossBase(x, xh, m, S(0), S(0), 0.05));
  }
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 16; ++i) {
      const float g = xh.grad()[c * 16 + i];
      if (m.data()[i] == 0.0f) {
        EXPECT_EQ(g, 0.0f);
      } else {
        EXPECT_NE(g, 0.0f);
      }
    }
  }
  xh.set_requires_grad(false);
  EXPECT_LT(GradCheck([&](const Tensor& v) { return LossBase(x, v, m, S(0), S(0), 0.05); },
                      xh, 1e-3),
            1e-2);
}

TEST(Adam, ZeroGradientLeavesWeights) {
  Tensor w({3}, {1, -2, 3});
  AdamState st;
  std::vector<float> g(3, 0.0f);
  for (int i = 0; i < 5; ++i) AdamStep(w, g, st, 1e-2);
  EXPECT_EQ(std::vector<float>(w.data().begin(), w.data().end()),
            (std::vector<float>{1, -2, 3}));
}

TEST(Adam, FirstStepIsLrTimesSign) {
  Tensor w({3}, {0, 0, 0});
  AdamState st;
  std::vector<float> g = {0.3f, -7.0f, 1e-3f};
  AdamStep(w, g, st, 0.01);
  EXPECT_NEAR(w.data()[0], -0.01, 1e-7);
  EXPECT_NEAR(w.data()[1], 0.01, 1e-7);
  EXPECT_NEAR(w.data()[2], -0.01, 1e-6);
}

TEST(Adam, ConstantGradientStepTendsToLr) {
  Tensor w({1}, {0.0f});
  AdamState st;
  std::vector<float> g = {2.5f};
  double prev = 0.0;
  for (int i = 0; i < 3000; ++i) {
    prev = w.data()[0];
    AdamStep(w, g, st, 1e-3);
  }
  EXPECT_NEAR(prev - w.data()[0], 1e-3, 1e-6);
}

TEST(TrainConfig, ParseAndDerive) {
  TrainConfig c = TrainConfig::Parse(
      "# comment\nrole = fr\nlambda_id=1\nsteps=7  # trailing\nseed=3\n");
  EXPECT_EQ(c.role, ModelRole::kFeatureResidual);
  EXPECT_DOUBLE_EQ(c.lambda, 0.01);
  EXPECT_EQ(c.steps, 7);
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(TrainConfig::Parse("lambda=0.03\n").lambda_id, 3);
  EXPECT_EQ(TrainConfig::Parse("lambda=0.04\n").lambda_id, -1);
  EXPECT_EQ(TrainConfig::Parse(c.ToText()).ToText(), c.ToText());
  for (const char* bad : {"nope=1\n", "lambda=0.05\nlambda_id=1\n", "steps\n",
                          "steps=abc\n", "image_size=40\n", "lambda=-1\n"}) {
    try {
      TrainConfig::Parse(bad);
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kConfig) << bad;
    }
  }
}

TrainConfig Small(ModelRole role, int steps) {
  TrainConfig c;
  c.role = role;
  c.steps = steps;
  c.batch_size = 2;
  c.synthetic_count = 8;
  c.image_size = 32;
  c.num_slices = role == ModelRole::kBase ? 5 : 2;
  return c;
}

TEST(TrainModel, ZeroStepsReturnsInitialization) {
  TrainConfig c = Small(ModelRole::kBase, 0);
  TrainResult r = TrainModel(c);
  Architecture a = Architecture::Base();
  a.lambda = 0.05;
  a.lambda_id = 4;
  EXPECT_EQ(SerializeWeights(r.weights),
            SerializeWeights(TransformWeights::Initialize(a, c.seed)));
  EXPECT_TRUE(r.report.steps.empty());
}

TEST(TrainModel, EnhancementNeedsBase) {
  try {
    TrainModel(Small(ModelRole::kPixelResidual, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
}

TEST(TrainModel, ReproducibleAndFreezesBase) {
  const TrainResult base = TrainModel(Small(ModelRole::kBase, 3));
  const TrainResult again = TrainModel(Small(ModelRole::kBase, 3));
  EXPECT_EQ(SerializeWeights(base.weights), SerializeWeights(again.weights));
  EXPECT_EQ(base.report.ToCsv(), again.report.ToCsv());
  const std::vector<uint8_t> before = SerializeWeights(base.weights);
  for (ModelRole role : {ModelRole::kFeatureResidual, ModelRole::kPixelResidual,
                         ModelRole::kFeatureFusion}) {
    TrainResult enh = TrainModel(Small(role, 3), &base.weights);
    EXPECT_EQ(enh.weights.arch().role, role);
    EXPECT_EQ(SerializeWeights(base.weights), before);
    for (const Tensor& t : base.weights.Parameters()) {
      EXPECT_FALSE(t.requires_grad());
      EXPECT_FALSE(t.has_grad());
    }
  }
}

TEST(TrainModel, EnhancementWarmStart) {
  const TransformWeights base =
      TransformWeights::Initialize(Architecture::Base(), 5);
  for (ModelRole role : {ModelRole::kFeatureResidual, ModelRole::kFeatureFusion}) {
    const TransformWeights w = InitializeEnhancement(
        Architecture::Enhancement(role, 2, base.arch()), base, 6);
    for (int i = 0; i < 4; ++i) {
      const std::string s = "synthesis." + std::to_string(i) + ".weight";
      EXPECT_TRUE(std::ranges::equal(w.Get(s).data(), base.Get(s).data())) << s;
    }
    // Output layer keeps the first 16 of 40 channels.
    const auto out = w.Get("analysis.3.weight").data();
    const auto full = base.Get("analysis.3.weight").data();
    ASSERT_EQ(out.size() * 40, full.size() * 16);
    EXPECT_TRUE(std::equal(out.begin(), out.end(), full.begin()));
    const auto hyper = w.Get("hyper_analysis.0.weight").data();
    EXPECT_FALSE(std::ranges::equal(
        hyper, TransformWeights(w.arch()).Get("hyper_analysis.0.weight").data()));
  }
  const Architecture pr_arch =
      Architecture::Enhancement(ModelRole::kPixelResidual, 2, base.arch());
  const TransformWeights pr = InitializeEnhancement(pr_arch, base, 6);
  const TransformWeights plain = TransformWeights::Initialize(pr_arch, 6);
  const auto a = pr.Get("synthesis.3.weight").data();
  const auto b = plain.Get("synthesis.3.weight").data();
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i], b[i] * kResidualOutputScale);
  }
  EXPECT_TRUE(std::ranges::equal(pr.Get("analysis.0.weight").data(),
                                 plain.Get("analysis.0.weight").data()));
  EXPECT_THROW(InitializeEnhancement(base.arch(), base, 1), Error);
}

TEST(TrainModel, ZeroStepEnhancementIsWarmStart) {
  const TrainResult base = TrainModel(Small(ModelRole::kBase, 1));
  TrainConfig c = Small(ModelRole::kPixelResidual, 0);
  const TrainResult r = TrainModel(c, &base.weights);
  Architecture a = Architecture::Enhancement(ModelRole::kPixelResidual, 2,
                                             base.weights.arch());
  a.lambda = c.lambda;
  a.lambda_id = c.lambda_id;
  EXPECT_EQ(SerializeWeights(r.weights),
            SerializeWeights(InitializeEnhancement(a, base.weights, c.seed)));
}

TEST(TrainModel, InitWeightsFineTune) {
  const TrainResult base = TrainModel(Small(ModelRole::kBase, 1));
  TrainConfig c = Small(ModelRole::kPixelResidual, 2);
  const TrainResult first = TrainModel(c, &base.weights);
  // Zero steps from `init`: same tensors, lambda metadata from the config.
  TrainConfig next = Small(ModelRole::kPixelResidual, 0);
  next.lambda_id = 4;
  next.lambda = 0.0;
  const TrainResult r = TrainModel(next, &base.weights, nullptr, {},
                                   &first.weights);
  EXPECT_EQ(r.weights.arch().lambda_id, 4);
  EXPECT_DOUBLE_EQ(r.weights.arch().lambda, 0.05);
  for (const auto& [name, t] : first.weights.tensors()) {
    const Tensor& u = r.weights.Get(name);
    EXPECT_TRUE(std::equal(t.data().begin(), t.data().end(),
                           u.data().begin(), u.data().end()))
        << name;
  }
  // A model of another shape is refused.
  TrainConfig fr = Small(ModelRole::kFeatureResidual, 0);
  try {
    TrainModel(fr, &base.weights, nullptr, {}, &first.weights);
    FAIL() << "expected kConfig";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
}

TEST(TrainModel, ReportCsv) {
  TrainResult r = TrainModel(Small(ModelRole::kBase, 2));
  const std::string csv = r.report.ToCsv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,loss,rate_bits,distortion");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

// Every full loss against central differences on a handful of coordinates
// of each parameter tensor.
TEST(TrainingForward, FullLossGradients) {
  const Dataset data = GenerateDataset(2, 5, {.size = 16});
  const TransformWeights base =
      TransformWeights::Initialize(Architecture::Base(), 3);
  const BaseOutputs bo = ComputeBaseOutputs(base, data);
  for (ModelRole role : {ModelRole::kBase, ModelRole::kFeatureResidual,
                         ModelRole::kPixelResidual}) {
    TransformWeights w =
        role == ModelRole::kBase
            ? base.Clone()
            : TransformWeights::Initialize(
                  Architecture::Enhancement(role, 2, base.arch()), 4);
    const Batch batch =
        MakeBatch(data, role == ModelRole::kBase ? nullptr : &bo, {0, 1});
    double worst = 0.0;
    for (const char* name : {"analysis.0.weight", "synthesis.3.bias",
                             "hyper_analysis.1.weight", "param.1.0.weight",
                             "hyper_prior.scale"}) {
      worst = std::max(worst, GradCheckParameter(
                                  [&]() { return TrainingForward(w, batch, 0.005, 7).loss; },
                                  w.Get(name), 1e-3, 6));
    }
    EXPECT_LT(worst, 1e-2) << RoleName(role);
  }
}

class TrainedBase : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    TrainConfig c;
    c.steps = 300;
    c.batch_size = 4;
    c.synthetic_count = 32;
    c.learning_rate = 2e-3;
    result_ = new TrainResult(TrainModel(c));
    c.lambda = 0.005;
    c.lambda_id = 0;
    low_ = new TrainResult(TrainModel(c));
  }
  static void TearDownTestSuite() {
    delete result_;
    delete low_;
  }
  static TrainResult* result_;  // lambda 0.05
  static TrainResult* low_;     // lambda 0.005
};
TrainResult* TrainedBase::result_ = nullptr;
TrainResult* TrainedBase::low_ = nullptr;

double Median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

TEST_F(TrainedBase, LossDecreases) {
  const auto& steps = result_->report.steps;
  const size_t tenth = steps.size() / 10;
  std::vector<double> first, last;
  for (size_t i = 0; i < tenth; ++i) {
    first.push_back(steps[i].loss);
    last.push_back(steps[steps.size() - 1 - i].loss);
  }
  EXPECT_LT(Median(last), Median(first));
}

TEST_F(TrainedBase, BeatsUntrainedOnMaskedRegion) {
  const Dataset held_out = GenerateDataset(8, 999);
  const TransformWeights fresh =
      TransformWeights::Initialize(result_->weights.arch(), 77);
  auto masked_psnr = [&](const TransformWeights& w) {
    double mse = 0.0;
    for (const Sample& s : held_out.samples) {
      Tensor xh = Synthesis(Dequantize(Quantize(Analysis(s.image, w)).symbols), w);
      mse += MaskedMseOf(s.image, xh, s.mask);
    }
    return PsnrFromMse(mse / held_out.size());
  };
  EXPECT_GT(masked_psnr(result_->weights), masked_psnr(fresh));
}

TEST_F(TrainedBase, LowerLambdaCodesFewerBits) {
  const Dataset held_out = GenerateDataset(8, 4321);
  auto bytes = [&](const TransformWeights& w) {
    size_t n = 0;
    for (const Sample& s : held_out.samples) {
      n += EncodeBase(s.image, w).layer.payload.size();
    }
    return n;
  };
  EXPECT_LT(bytes(low_->weights), bytes(result_->weights));
}

// Replacing the hyper context with zeros must cost bits.
TEST_F(TrainedBase, HyperContextReducesRate) {
  const TransformWeights& w = result_->weights;
  const Dataset held_out = GenerateDataset(8, 1234);
  double with = 0.0, without = 0.0;
  for (const Sample& s : held_out.samples) {
    const Tensor y = Dequantize(Quantize(Analysis(s.image, w)).symbols);
    const Tensor z = Dequantize(Quantize(HyperAnalysis(y, w)).symbols);
    const Tensor ctx = HyperSynthesis(z, w, y.dim(2), y.dim(3));
    const LatentSlices slices = SplitSlices(y, w.arch().latent);
    for (const Tensor* c : {&ctx, static_cast<const Tensor*>(nullptr)}) {
      const Tensor use = c ? *c : Tensor(ctx.shape());
      double bits = 0.0;
      for (int k = 0; k < w.arch().num_slices(); ++k) {
        GaussianParams p = PredictSliceParams(
            use, LatentSlices(slices.begin(), slices.begin() + k), k, w);
        bits += RateBits(Quantize(slices[k]).symbols, p).total_bits;
      }
      (c ? with : without) += bits;
    }
  }
  EXPECT_LT(with, without);
}

}  // namespace
}  // namespace resiscale
