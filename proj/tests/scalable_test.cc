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


#include <limits>
#include <random>

#include "gtest/gtest.h"
#include "resiscale/bitstream.h"
#include "resiscale/dataset.h"
#include "resiscale/entropy.h"
#include "resiscale/ops.h"
#include "resiscale/scalable.h"
#include "resiscale/status.h"
#include "test_util.h"

namespace resiscale {
namespace {

using testing::RandomTensor;

bool Same(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

LayeredBitstream SampleStream() {
  LayeredBitstream s;
  s.header.mode = StreamMode::kPixelResidual;
  s.header.height = 64;
  s.header.width = 48;
  s.header.num_base_slices = 5;
  s.header.num_enh_slices = 3;
  s.header.lambda_id = 2;
  s.base = {1, 2, 3, 4, 5};
  s.enhancement = {9, 8, 7};
  return s;
}

TEST(Bitstream, LayoutAndRoundTrip) {
  const LayeredBitstream s = SampleStream();
  const std::vector<uint8_t> b = Serialize(s);
  ASSERT_EQ(b.size(), kStreamHeaderSize + 5 + 4 + 3 + 4);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "ICMH");
  EXPECT_EQ(b[4], 1);   // version
  EXPECT_EQ(b[5], 2);   // mode
  EXPECT_EQ(b[6], 64);  // H, little endian
  EXPECT_EQ(b[7], 0);
  EXPECT_EQ(b[8], 48);
  EXPECT_EQ(b[10], 5);
  EXPECT_EQ(b[11], 3);
  EXPECT_EQ(b[12], 2);
  EXPECT_EQ(b[13], 5);  // base length
  EXPECT_EQ(b[17], 3);  // enhancement length
  EXPECT_EQ(Parse(b), s);
  const LayeredBitstream base_only = Parse(b, true);
  EXPECT_EQ(base_only.base, s.base);
  EXPECT_TRUE(base_only.enhancement.empty());
}

TEST(Bitstream, StripEnhancementGivesValidBaseStream) {
  const LayeredBitstream s = SampleStream();
  const std::vector<uint8_t> stripped = StripEnhancement(Serialize(s));
  const LayeredBitstream p = Parse(stripped);
  EXPECT_EQ(p.header.mode, StreamMode::kBaseOnly);
  EXPECT_EQ(p.header.num_enh_slices, 0);
  EXPECT_EQ(p.base, s.base);
  EXPECT_TRUE(p.enhancement.empty());
  EXPECT_EQ(StripEnhancement(stripped), stripped);
}

TEST(Bitstream, StructuredErrors) {
  const std::vector<uint8_t> good = Serialize(SampleStream());
  auto expect_corrupt = [](std::vector<uint8_t> b, const char* what) {
    try {
      Parse(b);
      ADD_FAILURE() << what;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kCorruptStream) << what;
    }
  };
  for (size_t n = 0; n < good.size(); ++n) {
    expect_corrupt(std::vector<uint8_t>(good.begin(), good.begin() + n), "truncated");
  }
  auto with = [&](size_t i, uint8_t v) {
    std::vector<uint8_t> b = good;
    b[i] = v;
    return b;
  };
  expect_corrupt(with(0, 'X'), "magic");
  expect_corrupt(with(4, 2), "version");
  expect_corrupt(with(5, 3), "mode");
  expect_corrupt(with(6, 65), "height alignment");
  expect_corrupt(with(11, 6), "N_a > N_m");
  expect_corrupt(with(11, 0), "N_a = 0");
  expect_corrupt(with(12, 7), "lambda id");
  expect_corrupt(with(kStreamHeaderSize, 0xEE), "base crc");
  expect_corrupt(with(good.size() - 1, 0xEE), "enh crc");
  std::vector<uint8_t> longer = good;
  longer.push_back(0);
  expect_corrupt(longer, "trailing bytes");
  LayeredBitstream bad = SampleStream();
  bad.header.mode = StreamMode::kBaseOnly;
  EXPECT_THROW(Serialize(bad), Error);
}

TEST(Bitstream, FuzzedInputsFailCleanly) {
  std::mt19937_64 rng(77);
  const std::vector<uint8_t> good = Serialize(SampleStream());
  for (int t = 0; t < 20000; ++t) {
    std::vector<uint8_t> b = good;
    const int flips = 1 + static_cast<int>(rng() % 4);
    for (int f = 0; f < flips; ++f) b[rng() % b.size()] = static_cast<uint8_t>(rng());
    if (rng() % 4 == 0) b.resize(rng() % (b.size() + 8), 0xAB);
    try {
      Parse(b, rng() % 2 == 0);
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::kCorruptStream);
    }
  }
}

// Values on a 2^-10 grid within +-128 keep every difference exactly
// representable in float32, so the identity must hold bit for bit.
Tensor GridTensor(Shape shape, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(-128 * 1024, 128 * 1024);
  Tensor t(std::move(shape));
  for (float& v : t.mutable_data()) v = static_cast<float>(d(rng)) / 1024.0f;
  return t;
}

TEST(ResidualAlgebra, FeatureSubtractFuse) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int na = 1 + trial % 5;
    LatentSlices y, m;
    for (int k = 0; k < 5; ++k) {
      if (k < na) y.push_back(GridTensor({1, 8, 2, 3}, rng));
      m.push_back(Dequantize(Quantize(RandomTensor({1, 8, 2, 3}, rng, -20, 20)).symbols));
    }
    LatentSlices ya = FeatureSubtract(y, m);
    ASSERT_EQ(static_cast<int>(ya.size()), na);
    Tensor fused = FeatureFuse(m, ya);
    ASSERT_EQ(fused.dim(1), 40);
    LatentSlices back = SplitSlices(fused, SlicePartition::Equal(40, 5));
    for (int k = 0; k < 5; ++k) {
      const Tensor& want = k < na ? y[k] : m[k];
      ASSERT_TRUE(Same(back[k], want)) << "trial " << trial << " slice " << k;
    }
  }
}

// Off the grid the round trip is exact up to one rounding of y - m.
TEST(ResidualAlgebra, FeatureSubtractFuseArbitraryFloats) {
  std::mt19937_64 rng(31);
  LatentSlices y{RandomTensor({1, 8, 4, 4}, rng, -30, 30)};
  LatentSlices m{RandomTensor({1, 8, 4, 4}, rng, -30, 30)};
  const Tensor fused = FeatureFuse(m, FeatureSubtract(y, m));
  for (size_t i = 0; i < fused.numel(); ++i) {
    const float diff = y[0].data()[i] - m[0].data()[i];
    EXPECT_NEAR(fused.data()[i], y[0].data()[i],
                std::abs(diff) * std::numeric_limits<float>::epsilon());
  }
}

TEST(ResidualAlgebra, EdgeCases) {
  std::mt19937_64 rng(4);
  LatentSlices y{RandomTensor({1, 8, 2, 2}, rng)};
  LatentSlices zeros{Tensor({1, 8, 2, 2}), Tensor({1, 8, 2, 2})};
  EXPECT_TRUE(Same(FeatureSubtract(y, zeros)[0], y[0]));
  const LatentSlices self = FeatureSubtract(y, y);
  for (float v : self[0].data()) EXPECT_EQ(v, 0.0f);
  LatentSlices m{RandomTensor({1, 8, 2, 2}, rng), RandomTensor({1, 8, 2, 2}, rng)};
  EXPECT_TRUE(Same(FeatureFuse(m, {Tensor({1, 8, 2, 2})}), ConcatSlices(m)));
  LatentSlices neg{Scale(m[0], -1.0f), Scale(m[1], -1.0f)};
  const Tensor cancelled = FeatureFuse(m, neg);
  for (float v : cancelled.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(FeatureSubtract({Tensor({1, 4, 2, 2})}, m), Error);
  EXPECT_THROW(FeatureFuse(m, {Tensor({1, 8, 2, 2}), Tensor({1, 8, 2, 2}),
                               Tensor({1, 8, 2, 2})}),
               Error);
}

TEST(ResidualAlgebra, PixelResidual) {
  std::mt19937_64 rng(5);
  // Images on a 2^-16 grid: x - x_hat_m and the sum back are exact.
  auto grid_image = [&]() {
    Tensor t({1, 3, 16, 16});
    for (float& v : t.mutable_data()) v = static_cast<float>(rng() % 65537) / 65536.0f;
    return t;
  };
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = grid_image(), xm = grid_image();
    const Tensor xd = PixelResidual(x, xm);
    for (float v : xd.data()) {
      ASSERT_GE(v, -1.0f);
      ASSERT_LE(v, 1.0f);
    }
    ASSERT_TRUE(Same(Add(xm, xd), x));
  }
  const Tensor x = RandomTensor({1, 3, 16, 16}, rng, 0, 1);
  EXPECT_TRUE(Same(PixelResidual(x, Tensor(x.shape())), x));
  const Tensor zero = PixelResidual(x, x);
  for (float v : zero.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(PixelResidual(x, Tensor({1, 3, 16, 8})), Error);
}

class CodecTest : public ::testing::Test {
 protected:
  void SetUp() override {
    base_ = TransformWeights::Initialize(Architecture::Base(), 1);
    x_ = GenerateSample(3, 0).image;
  }
  TransformWeights Enh(ModelRole role, int na, uint64_t seed = 2) {
    return TransformWeights::Initialize(
        Architecture::Enhancement(role, na, base_.arch()), seed);
  }
  TransformWeights base_{Architecture::Base()};
  Tensor x_;
};

TEST_F(CodecTest, BaseParityAndDeterminism) {
  BaseEncoding e1 = EncodeBase(x_, base_);
  BaseEncoding e2 = EncodeBase(x_, base_);
  EXPECT_EQ(e1.layer.payload, e2.layer.payload);
  BaseState d = DecodeBase(e1.layer.payload, 64, 64, base_);
  ASSERT_EQ(d.y_hat.size(), 5u);
  for (int k = 0; k < 5; ++k) EXPECT_TRUE(Same(d.y_hat[k], e1.state.y_hat[k]));
  EXPECT_TRUE(Same(d.x_hat, e1.state.x_hat));
  EXPECT_TRUE(Same(d.x_hat, Synthesis(ConcatSlices(d.y_hat), base_)));
}

TEST_F(CodecTest, TruncatedBasePayloadIsAnError) {
  BaseEncoding e = EncodeBase(x_, base_);
  std::vector<uint8_t> p = e.layer.payload;
  p.resize(p.size() / 2);
  EXPECT_THROW(DecodeBase(p, 64, 64, base_), Error);
}

TEST_F(CodecTest, EnhancementParityEveryRole) {
  for (ModelRole role : {ModelRole::kFeatureResidual, ModelRole::kPixelResidual,
                         ModelRole::kFeatureFusion}) {
    for (int na : {1, 3, 5}) {
      const TransformWeights enh = Enh(role, na);
      EncodedImage enc = EncodeImage(x_, base_, &enh);
      EXPECT_EQ(EncodeImage(x_, base_, &enh).bytes, enc.bytes);
      DecodedImage full = DecodeImage(enc.bytes, base_, &enh);
      DecodedImage base_only = DecodeImage(enc.bytes, base_, nullptr);
      DecodedImage stripped = DecodeImage(StripEnhancement(enc.bytes), base_, nullptr);
      EXPECT_TRUE(Same(full.base.x_hat, enc.base.x_hat));
      EXPECT_TRUE(Same(base_only.base.x_hat, full.base.x_hat));
      EXPECT_TRUE(Same(stripped.base.x_hat, full.base.x_hat));
      EXPECT_EQ(full.header.mode, ModeForRole(role));
      EXPECT_EQ(full.header.num_enh_slices, na);
      EXPECT_EQ(full.human.shape(), x_.shape());
      for (float v : full.human.data()) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
      }
      // Library-level decode of the enhancement payload agrees.
      const LayeredBitstream parsed = Parse(enc.bytes);
      EXPECT_TRUE(Same(DecodeEnhancement(full.base, parsed.enhancement, enh),
                       full.human));
    }
  }
}

TEST_F(CodecTest, PixelResidualBypassIsExact) {
  BaseEncoding e = EncodeBase(x_, base_);
  Tensor xd = PixelResidual(x_, e.state.x_hat);
  Tensor x = Clamp(Add(e.state.x_hat, xd), 0.0f, 1.0f);
  for (size_t i = 0; i < x.numel(); ++i) {
    EXPECT_NEAR(x.data()[i], x_.data()[i], 1e-6f);
  }
}

// Zero-weight fusion model: every coded slice is 0, so fusion returns y_hat_m
// and the copied base synthesis reproduces x_hat_m.
TEST_F(CodecTest, ZeroRateEnhancementFallsBackToBase) {
  TransformWeights ff(Architecture::Enhancement(ModelRole::kFeatureFusion, 3,
                                                base_.arch()));
  for (int i = 0; i < 4; ++i) {
    for (const char* part : {".weight", ".bias"}) {
      const std::string name = "synthesis." + std::to_string(i) + part;
      ff.Set(name, base_.Get(name).Clone());
    }
  }
  EncodedImage enc = EncodeImage(x_, base_, &ff);
  DecodedImage d = DecodeImage(enc.bytes, base_, &ff);
  EXPECT_TRUE(Same(d.human, d.base.x_hat));
}

TEST_F(CodecTest, MismatchedModelsAreConfigErrors) {
  const TransformWeights pr = Enh(ModelRole::kPixelResidual, 3);
  const TransformWeights fr = Enh(ModelRole::kFeatureResidual, 3);
  const TransformWeights pr4 = Enh(ModelRole::kPixelResidual, 4);
  EncodedImage enc = EncodeImage(x_, base_, &pr);
  for (const TransformWeights* wrong : {&fr, &pr4}) {
    try {
      DecodeImage(enc.bytes, base_, wrong);
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kConfig);
    }
  }
  EXPECT_THROW(EncodeImage(x_, base_, &base_), Error);
  const TransformWeights other_base =
      TransformWeights::Initialize(Architecture::Base(40, 4), 3);
  EXPECT_THROW(DecodeImage(enc.bytes, other_base, nullptr), Error);
}

TEST_F(CodecTest, FeatureFusionBaselineSkipsSubtraction) {
  // FR and FF with identical weights differ only by the subtraction, so
  // their payloads differ on any image with a non-zero base latent.
  const TransformWeights fr = Enh(ModelRole::kFeatureResidual, 2, 5);
  TransformWeights ff(Architecture::Enhancement(ModelRole::kFeatureFusion, 2,
                                                base_.arch()));
  for (const auto& [name, t] : fr.tensors()) ff.Set(name, t.Clone());
  EXPECT_NE(EncodeImage(x_, base_, &fr).bytes, EncodeImage(x_, base_, &ff).bytes);
}

TEST_F(CodecTest, SaturationIsCounted) {
  TransformWeights loud = base_.Clone();
  Tensor b = loud.Get("analysis.3.bias").Clone();
  for (float& v : b.mutable_data()) v = 500.0f;
  loud.Set("analysis.3.bias", b);
  EncodedImage e = EncodeImage(x_, loud, nullptr);
  EXPECT_GT(e.base_stats.saturated, 0u);
  EXPECT_TRUE(e.base_stats.saturation_warning());
}

TEST(CodecConfig, LambdaIds) {
  for (int id = 0; id < 5; ++id) EXPECT_EQ(LambdaIdFor(LambdaForId(id)), id);
  EXPECT_EQ(LambdaIdFor(0.04), -1);
  EXPECT_THROW(LambdaForId(5), Error);
}

}  // namespace
}  // namespace resiscale
