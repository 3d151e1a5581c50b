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


#include <filesystem>
#include <random>

#include <unistd.h>

#include "gtest/gtest.h"
#include "resiscale/dataset.h"
#include "resiscale/file_util.h"
#include "resiscale/image_io.h"
#include "resiscale/status.h"
#include "test_util.h"

namespace resiscale {
namespace {

namespace fs = std::filesystem;

std::vector<uint8_t> Bytes(const std::string& s) {
  return std::vector<uint8_t>(s.begin(), s.end());
}

fs::path TempDir(const std::string& name) {
  fs::path p = fs::temp_directory_path() /
               ("resiscale_io_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(ImageIo, ToByteRounding) {
  EXPECT_EQ(ToByte(0.0f), 0);
  EXPECT_EQ(ToByte(1.0f), 255);
  EXPECT_EQ(ToByte(-0.3f), 0);
  EXPECT_EQ(ToByte(7.0f), 255);
  EXPECT_EQ(ToByte(0.5f), 128);
  EXPECT_EQ(ToByte(127.4f / 255.0f), 127);
}

TEST(ImageIo, PpmRoundTripIsExactOnEightBitValues) {
  std::mt19937_64 rng(1);
  Tensor img({1, 3, 5, 7});
  for (float& v : img.mutable_data()) v = static_cast<float>(rng() % 256) / 255.0f;
  const std::vector<uint8_t> bytes = EncodePpm(img);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 11), "P6\n7 5\n255\n");
  Tensor back = DecodePpm(bytes);
  ASSERT_EQ(back.shape(), img.shape());
  EXPECT_EQ(EncodePpm(back), bytes);
}

TEST(ImageIo, HeaderCommentsAndErrors) {
  Tensor a = DecodePpm(Bytes("P6 # c\n1 # w\n1\n255\nabc"));
  EXPECT_NEAR(a.at(0, 0, 0, 0), 'a' / 255.0f, 1e-7);
  EXPECT_NEAR(a.at(0, 2, 0, 0), 'c' / 255.0f, 1e-7);
  for (const char* bad : {"P6\n1 1\n255\nab", "P6\n1 1\n65535\nabcdef",
                          "P3\n1 1\n255\n1 2 3", "P6\n0 1\n255\n", "", "P6"}) {
    try {
      DecodePpm(Bytes(bad));
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kIo);
    }
  }
}

TEST(ImageIo, PgmMask) {
  Tensor m({1, 1, 2, 3}, {1, 0, 1, 0, 0, 1});
  const std::vector<uint8_t> bytes = EncodePgm(m);
  Tensor back = DecodePgm(bytes);
  EXPECT_TRUE(std::equal(m.data().begin(), m.data().end(), back.data().begin()));
  Tensor gray = DecodePgm(Bytes("P5\n2 1\n255\n\x01\xff"));
  EXPECT_EQ(gray.data()[0], 1.0f);
}

TEST(FileUtil, AtomicWriteAndMissingFile) {
  const fs::path dir = TempDir("file");
  const std::string path = (dir / "a.bin").string();
  WriteFileAtomic(path, std::string("hello"));
  EXPECT_EQ(ReadFile(path), Bytes("hello"));
  WriteFileAtomic(path, std::string("x"));
  EXPECT_EQ(ReadFile(path), Bytes("x"));
  size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir)) files += e.is_regular_file();
  EXPECT_EQ(files, 1u);
  try {
    ReadFile((dir / "missing").string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
  EXPECT_THROW(WriteFileAtomic((dir / "no" / "such" / "dir").string(), std::string("x")),
               Error);
  fs::remove_all(dir);
}

TEST(ByteReader, TruncationUsesGivenCode) {
  const std::vector<uint8_t> b = {1, 2, 3};
  ByteReader r(b, ErrorCode::kCorruptStream, "test");
  EXPECT_EQ(r.GetU16(), 0x0201);
  try {
    r.GetU16();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCorruptStream);
  }
}

TEST(Dataset, DeterministicPerIndex) {
  const Sample a = GenerateSample(5, 3), b = GenerateSample(5, 3);
  EXPECT_EQ(EncodePpm(a.image), EncodePpm(b.image));
  EXPECT_EQ(EncodePgm(a.mask), EncodePgm(b.mask));
  EXPECT_NE(EncodePpm(GenerateSample(6, 3).image), EncodePpm(a.image));
  const Dataset d = GenerateDataset(4, 5);
  EXPECT_EQ(EncodePpm(d.samples[3].image), EncodePpm(a.image));
  EXPECT_EQ(d.Images({0, 2}).shape(), (Shape{2, 3, 64, 64}));
  EXPECT_EQ(d.Masks({1}).shape(), (Shape{1, 1, 64, 64}));
}

TEST(Dataset, MasksBinaryAndAreaWithinBounds) {
  SyntheticOptions opts;
  opts.size = 32;
  opts.min_area = 0.1;
  opts.max_area = 0.4;
  for (int i = 0; i < 1000; ++i) {
    const Sample s = GenerateSample(11, i, opts);
    double area = 0.0;
    for (float v : s.mask.data()) {
      ASSERT_TRUE(v == 0.0f || v == 1.0f);
      area += v;
    }
    area /= s.mask.numel();
    ASSERT_GE(area, opts.min_area) << i;
    ASSERT_LE(area, opts.max_area) << i;
    for (float v : s.image.data()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
}

TEST(Dataset, FolderRoundTrip) {
  const fs::path dir = TempDir("data");
  const Dataset d = GenerateDataset(3, 2);
  WriteDataset(d, dir.string());
  EXPECT_TRUE(fs::exists(dir / "img_00002.ppm"));
  EXPECT_TRUE(fs::exists(dir / "mask_00002.pgm"));
  fs::remove(dir / "mask_00001.pgm");
  const Dataset back = ReadDataset(dir.string());
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(EncodePpm(back.samples[0].image), EncodePpm(d.samples[0].image));
  EXPECT_EQ(EncodePgm(back.samples[0].mask), EncodePgm(d.samples[0].mask));
  for (float v : back.samples[1].mask.data()) EXPECT_EQ(v, 1.0f);
  EXPECT_THROW(ReadDataset((dir / "nope").string()), Error);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace resiscale
