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


#include <cmath>
#include <random>

#include "gtest/gtest.h"
#include "resiscale/entropy.h"
#include "resiscale/eval.h"
#include "resiscale/ops.h"
#include "resiscale/status.h"
#include "resiscale/transform.h"
#include "resiscale/weights_io.h"
#include "test_util.h"

namespace resiscale {
namespace {

using testing::RandomTensor;

bool AllZero(const Tensor& t) {
  for (float v : t.data()) {
    if (v != 0.0f) return false;
  }
  return true;
}

TEST(Architecture, BaseShapes) {
  const Architecture a = Architecture::Base();
  EXPECT_EQ(a.latent_channels(), 40);
  EXPECT_EQ(a.num_slices(), 5);
  const TransformWeights w = TransformWeights::Initialize(a, 1);
  Tensor x({2, 3, 64, 64}, 0.5f);
  Tensor y = Analysis(x, w);
  EXPECT_EQ(y.shape(), (Shape{2, 40, 4, 4}));
  EXPECT_EQ(Synthesis(y, w).shape(), (Shape{2, 3, 64, 64}));
  Tensor z = HyperAnalysis(y, w);
  EXPECT_EQ(z.shape(), (Shape{2, 16, 1, 1}));
  EXPECT_EQ(HyperSynthesis(z, w, 4, 4).shape(), (Shape{2, 80, 4, 4}));
}

TEST(Architecture, NonSquareAndOddLatent) {
  const TransformWeights w = TransformWeights::Initialize(Architecture::Base(), 2);
  Tensor y = Analysis(Tensor({1, 3, 48, 80}, 0.3f), w);
  EXPECT_EQ(y.shape(), (Shape{1, 40, 3, 5}));
  Tensor z = HyperAnalysis(y, w);
  EXPECT_EQ(z.shape(), (Shape{1, 16, 1, 2}));
  EXPECT_EQ(HyperSynthesis(z, w, 3, 5).shape(), (Shape{1, 80, 3, 5}));
}

TEST(Architecture, AnalysisRejectsUnalignedDims) {
  const TransformWeights w(Architecture::Base());
  try {
    Analysis(Tensor({1, 3, 40, 64}), w);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("pad"), std::string::npos);
  }
}

TEST(Architecture, ZeroPropagation) {
  const TransformWeights w(Architecture::Base());
  Tensor y = Analysis(Tensor({1, 3, 64, 64}, 0.0f), w);
  EXPECT_TRUE(AllZero(y));
  EXPECT_TRUE(AllZero(Synthesis(y, w)));
  EXPECT_TRUE(AllZero(HyperAnalysis(y, w)));

  // Zero image and a zero final analysis layer still give a zero latent.
  TransformWeights r = TransformWeights::Initialize(Architecture::Base(), 3);
  r.Set("analysis.3.weight", Tensor(r.Get("analysis.3.weight").shape()));
  r.Set("analysis.3.bias", Tensor(r.Get("analysis.3.bias").shape()));
  EXPECT_TRUE(AllZero(Analysis(Tensor({1, 3, 32, 32}), r)));
}

TEST(Architecture, EnhancementWidths) {
  const Architecture base = Architecture::Base();
  for (int na = 1; na <= 5; ++na) {
    const Architecture fr =
        Architecture::Enhancement(ModelRole::kFeatureResidual, na, base);
    EXPECT_EQ(fr.latent_channels(), 8 * na);
    EXPECT_EQ(fr.synthesis_in, 40);
    const Architecture pr =
        Architecture::Enhancement(ModelRole::kPixelResidual, na, base);
    EXPECT_EQ(pr.synthesis_in, 8 * na);
  }
  EXPECT_THROW(
      Architecture::Enhancement(ModelRole::kFeatureResidual, 6, base), Error);
  EXPECT_THROW(
      Architecture::Enhancement(ModelRole::kPixelResidual, 0, base), Error);
  EXPECT_THROW(Architecture::Enhancement(ModelRole::kFeatureResidual, 3, base, 7),
               Error);
}

TEST(Architecture, TextRoundTrip) {
  Architecture a = Architecture::Enhancement(ModelRole::kFeatureFusion, 3,
                                             Architecture::Base());
  a.lambda = 0.03;
  a.lambda_id = 3;
  EXPECT_EQ(Architecture::FromText(a.ToText()), a);
  EXPECT_THROW(Architecture::FromText(a.ToText() + "bogus=1\n"), Error);
}

TEST(Slices, SplitConcat) {
  std::mt19937_64 rng(1);
  Tensor y = RandomTensor({2, 40, 3, 3}, rng);
  LatentSlices s = SplitSlices(y, SlicePartition::Equal(40, 5));
  ASSERT_EQ(s.size(), 5u);
  for (const Tensor& t : s) EXPECT_EQ(t.shape(), (Shape{2, 8, 3, 3}));
  Tensor back = ConcatSlices(s);
  EXPECT_TRUE(std::equal(back.data().begin(), back.data().end(), y.data().begin()));

  LatentSlices one = SplitSlices(y, SlicePartition::Equal(40, 1));
  ASSERT_EQ(one.size(), 1u);
  EXPECT_TRUE(std::equal(one[0].data().begin(), one[0].data().end(),
                         y.data().begin()));

  SlicePartition uneven{{3, 10, 27}};
  Tensor back2 = ConcatSlices(SplitSlices(y, uneven));
  EXPECT_TRUE(std::equal(back2.data().begin(), back2.data().end(), y.data().begin()));
  EXPECT_EQ(uneven.offset(2), 13);

  EXPECT_THROW(SplitSlices(y, SlicePartition::Equal(32, 4)), Error);
  EXPECT_THROW(ConcatSlices({Tensor({1, 2, 3, 3}), Tensor({1, 2, 3, 4})}), Error);
}

TEST(PredictSliceParams, ZeroWeightsGiveFloorPlusSoftplusZero) {
  const TransformWeights w(Architecture::Base());
  Tensor ctx({1, 80, 4, 4});
  LatentSlices prior;
  for (int k = 0; k < 5; ++k) {
    GaussianParams p = PredictSliceParams(ctx, prior, k, w);
    EXPECT_EQ(p.mean.shape(), (Shape{1, 8, 4, 4}));
    for (float s : p.scale.data()) {
      EXPECT_GE(s, kScaleMin);
      EXPECT_NEAR(s, kScaleMin + std::log(2.0), 1e-6);
    }
    prior.push_back(Tensor({1, 8, 4, 4}));
  }
  GaussianParams hp = HyperPrior(w);
  for (float s : hp.scale.data()) EXPECT_NEAR(s, kScaleMin + std::log(2.0), 1e-6);
}

TEST(PredictSliceParams, WrongPriorCountThrows) {
  const TransformWeights w(Architecture::Base());
  EXPECT_THROW(PredictSliceParams(Tensor({1, 80, 4, 4}), {}, 2, w), Error);
}

// Perturbing slices before k changes the output for slice k; slices at or
// after k are not even inputs, so the check is that the output is unchanged
// when the perturbed later slices are swapped in as the caller's state.
TEST(PredictSliceParams, CausalityProbe) {
  std::mt19937_64 rng(5);
  const TransformWeights w = TransformWeights::Initialize(Architecture::Base(), 9);
  Tensor ctx = RandomTensor({1, 80, 4, 4}, rng);
  LatentSlices slices;
  for (int k = 0; k < 5; ++k) slices.push_back(RandomTensor({1, 8, 4, 4}, rng, -3, 3));
  auto params = [&](const LatentSlices& s, int k) {
    GaussianParams p =
        PredictSliceParams(ctx, LatentSlices(s.begin(), s.begin() + k), k, w);
    std::vector<float> v(p.mean.data().begin(), p.mean.data().end());
    v.insert(v.end(), p.scale.data().begin(), p.scale.data().end());
    return v;
  };
  for (int k = 0; k < 5; ++k) {
    const auto ref = params(slices, k);
    for (int j = 0; j < 5; ++j) {
      LatentSlices mod = slices;
      mod[j] = RandomTensor({1, 8, 4, 4}, rng, -3, 3);
      if (j < k) {
        EXPECT_NE(params(mod, k), ref) << "k=" << k << " j=" << j;
      } else {
        EXPECT_EQ(params(mod, k), ref) << "k=" << k << " j=" << j;
      }
    }
  }
}

TEST(Weights, InitializationDeterministicAndHeScaled) {
  const Architecture a = Architecture::Base();
  const TransformWeights w1 = TransformWeights::Initialize(a, 4);
  const TransformWeights w2 = TransformWeights::Initialize(a, 4);
  EXPECT_EQ(SerializeWeights(w1), SerializeWeights(w2));
  EXPECT_NE(SerializeWeights(w1),
            SerializeWeights(TransformWeights::Initialize(a, 5)));
  const Tensor& k = w1.Get("analysis.1.weight");  // fan_in 16*9
  double ss = 0.0;
  for (float v : k.data()) ss += v * v;
  EXPECT_NEAR(std::sqrt(ss / k.numel()), std::sqrt(2.0 / 144.0), 0.01);
}

TEST(Weights, SerializationRoundTrip) {
  Architecture a = Architecture::Enhancement(ModelRole::kPixelResidual, 3,
                                             Architecture::Base());
  a.lambda = 0.01;
  a.lambda_id = 1;
  const TransformWeights w = TransformWeights::Initialize(a, 6);
  const std::vector<uint8_t> bytes = SerializeWeights(w);
  ASSERT_GE(bytes.size(), 5u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "RSWT");
  const TransformWeights back = ParseWeights(bytes);
  EXPECT_EQ(back.arch(), a);
  EXPECT_EQ(SerializeWeights(back), bytes);
  EXPECT_EQ(CountParams(back), CountParams(a));
}

TEST(Weights, CorruptFilesAreRejected) {
  const TransformWeights w = TransformWeights::Initialize(Architecture::Base(), 7);
  const std::vector<uint8_t> bytes = SerializeWeights(w);
  for (size_t cut : {size_t{0}, size_t{3}, size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    try {
      ParseWeights(std::span(bytes.data(), cut));
      ADD_FAILURE() << cut;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kCorruptStream);
    }
  }
  std::vector<uint8_t> extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(ParseWeights(extra), Error);
  std::vector<uint8_t> magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(ParseWeights(magic), Error);
}

TEST(Weights, SetChecksShape) {
  TransformWeights w(Architecture::Base());
  EXPECT_THROW(w.Set("analysis.0.bias", Tensor({3})), Error);
  EXPECT_THROW(w.Get("nope"), Error);
}

}  // namespace
}  // namespace resiscale
