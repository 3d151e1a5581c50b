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


#include <unistd.h>

#include <filesystem>
#include <sstream>

#include "cli.h"
#include "gtest/gtest.h"
#include "resiscale/dataset.h"
#include "resiscale/eval.h"
#include "resiscale/file_util.h"
#include "resiscale/image_io.h"
#include "resiscale/scalable.h"
#include "resiscale/train.h"
#include "resiscale/weights_io.h"

namespace resiscale {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out, err;
};

std::string Text(const std::string& path) {
  const std::vector<uint8_t> b = ReadFile(path);
  return std::string(b.begin(), b.end());
}

Result Cli(std::vector<std::string> args) {
  args.insert(args.begin(), "resiscale");
  std::ostringstream out, err;
  const int code = cli::Run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(fs::temp_directory_path() /
                        ("resiscale_cli_" + std::to_string(::getpid())));
    fs::remove_all(*dir_);
    fs::create_directories(*dir_);
    ASSERT_EQ(Cli({"train-base", "--steps", "4", "--batch", "2",
                   "--synthetic-count", "4", "--out", P("base.rswt")})
                  .code,
              0);
    for (const char* mode : {"fr", "pr"}) {
      ASSERT_EQ(Cli({std::string("train-") + mode, "--steps", "2", "--batch",
                     "2", "--synthetic-count", "4", "--na", "3", "--base",
                     P("base.rswt"), "--out", P(std::string(mode) + ".rswt")})
                    .code,
                0);
    }
    ASSERT_EQ(Cli({"gen-data", "--count", "2", "--seed", "9", "--out", P("data")}).code, 0);
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete dir_;
  }
  static std::string P(const std::string& name) { return (*dir_ / name).string(); }
  static fs::path* dir_;
};
fs::path* CliTest::dir_ = nullptr;

TEST_F(CliTest, EncodeDecodeStripPipeline) {
  const std::string img = P("data/img_00000.ppm");
  Result r = Cli({"encode", "--mode", "pr", "--in", img, "--base", P("base.rswt"),
                  "--enh", P("pr.rswt"), "--out", P("a.icmh")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("# resolved config"), std::string::npos);
  ASSERT_EQ(Cli({"decode", "--layer", "base", "--in", P("a.icmh"), "--base",
                 P("base.rswt"), "--out", P("m.ppm")}).code, 0);
  ASSERT_EQ(Cli({"decode", "--layer", "human", "--in", P("a.icmh"), "--base",
                 P("base.rswt"), "--enh", P("pr.rswt"), "--out", P("h.ppm")}).code, 0);
  ASSERT_EQ(Cli({"strip-enh", P("a.icmh")}).code, 0);
  ASSERT_TRUE(fs::exists(P("a.base.icmh")));
  ASSERT_EQ(Cli({"decode", "--in", P("a.base.icmh"), "--base", P("base.rswt"),
                 "--out", P("m2.ppm")}).code, 0);
  EXPECT_EQ(ReadFile(P("m.ppm")), ReadFile(P("m2.ppm")));

  // The command line adds no numeric behaviour.
  const TransformWeights base = LoadWeights(P("base.rswt"));
  const TransformWeights pr = LoadWeights(P("pr.rswt"));
  const EncodedImage e = EncodeImage(ReadPpm(img), base, &pr);
  EXPECT_EQ(ReadFile(P("a.icmh")), e.bytes);
  const DecodedImage d = DecodeImage(e.bytes, base, &pr);
  EXPECT_EQ(ReadFile(P("h.ppm")), EncodePpm(d.human));
  EXPECT_EQ(ReadFile(P("m.ppm")), EncodePpm(d.base.x_hat));
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(Cli({}).code, 1);
  EXPECT_EQ(Cli({"bogus"}).code, 1);
  EXPECT_EQ(Cli({"encode", "--bogus-flag"}).code, 1);
  EXPECT_EQ(Cli({"params", "--unknown"}).code, 1);
  EXPECT_EQ(Cli({"--help"}).code, 0);
  EXPECT_EQ(Cli({"encode", "--in", P("missing.ppm"), "--base", P("base.rswt"),
                 "--out", P("x.icmh")}).code, 2);
  WriteFileAtomic(P("junk.icmh"), std::string("ICMHjunk"));
  EXPECT_EQ(Cli({"decode", "--in", P("junk.icmh"), "--base", P("base.rswt"),
                 "--out", P("x.ppm")}).code, 3);
  WriteFileAtomic(P("junk.rswt"), std::string("RSWT\x01"));
  EXPECT_EQ(Cli({"params", "--weights", P("junk.rswt")}).code, 3);
  WriteFileAtomic(P("bad.cfg"), std::string("steps=3\nno_such_key=1\n"));
  EXPECT_EQ(Cli({"train-base", "--config", P("bad.cfg"), "--out", P("x.rswt")}).code, 4);
  EXPECT_EQ(Cli({"train-base", "--lambda", "0.05", "--lambda-id", "1", "--out",
                 P("x.rswt")}).code, 4);
  EXPECT_EQ(Cli({"encode", "--mode", "fr", "--in", P("data/img_00000.ppm"),
                 "--base", P("base.rswt"), "--enh", P("pr.rswt"), "--out",
                 P("x.icmh")}).code, 4);
  Cli({"encode", "--in", P("data/img_00000.ppm"), "--base", P("base.rswt"),
       "--enh", P("pr.rswt"), "--out", P("b.icmh")});
  EXPECT_EQ(Cli({"decode", "--layer", "human", "--in", P("b.icmh"), "--base",
                 P("base.rswt"), "--enh", P("fr.rswt"), "--out", P("x.ppm")}).code, 4);
  EXPECT_EQ(Cli({"eval", "--synthetic", "2", "--base", P("base.rswt"),
                 "--models-dir", P(""), "--csv", P("x.csv")}).code, 4);
}

TEST_F(CliTest, MissingSweepCellIsListed) {
  Result r = Cli({"eval", "--synthetic", "2", "--base", P("base.rswt"),
                  "--models-dir", *dir_, "--modes", "pr", "--na", "3",
                  "--lambdas", "4", "--csv", P("x.csv")});
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("(mode=pr, N_a=3, lambda_id=4)"), std::string::npos) << r.err;
}

TEST_F(CliTest, ConfigFileWithOverrides) {
  WriteFileAtomic(P("t.cfg"),
                  std::string("# small\nsteps=1\nbatch_size=2\nsynthetic_count=2\n"
                              "lambda=0.01\n"));
  Result r = Cli({"train-base", "--config", P("t.cfg"), "--lambda-id", "2",
                  "--out", P("c.rswt"), "--report", P("c.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const TrainConfig resolved = TrainConfig::Parse(
      r.err.substr(r.err.find('\n') + 1, r.err.find("out=") - r.err.find('\n') - 1));
  EXPECT_EQ(resolved.lambda_id, 2);
  EXPECT_DOUBLE_EQ(resolved.lambda, 0.02);
  EXPECT_EQ(resolved.steps, 1);
  EXPECT_EQ(LoadWeights(P("c.rswt")).arch().lambda_id, 2);
  EXPECT_EQ(Text(P("c.csv")).substr(0, 31), "step,loss,rate_bits,distortion\n");
}

TEST_F(CliTest, FeatureFusionFlag) {
  ASSERT_EQ(Cli({"train-fr", "--no-subtract", "--steps", "1", "--batch", "1",
                 "--synthetic-count", "1", "--na", "2", "--base", P("base.rswt"),
                 "--out", P("ff.rswt")}).code, 0);
  EXPECT_EQ(LoadWeights(P("ff.rswt")).arch().role, ModelRole::kFeatureFusion);
}

TEST_F(CliTest, GenDataDeterministic) {
  ASSERT_EQ(Cli({"gen-data", "--count", "2", "--seed", "9", "--out", P("data2")}).code, 0);
  for (const char* f : {"img_00001.ppm", "mask_00001.pgm"}) {
    EXPECT_EQ(ReadFile(P(std::string("data/") + f)), ReadFile(P(std::string("data2/") + f)));
  }
}

TEST_F(CliTest, EvalAndBdrate) {
  Result r = Cli({"eval", "--data", P("data"), "--base", P("base.rswt"),
                  "--models", P("fr.rswt"), P("pr.rswt"), "--csv", P("rd.csv"),
                  "--svg", P("rd.svg"), "--threads", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto pts = ParseRdCsv(Text(P("rd.csv")));
  ASSERT_EQ(pts.size(), 3u);
  EXPECT_TRUE(fs::exists(P("rd.svg")));

  std::vector<RdPoint> curve;
  for (int id = 0; id < 4; ++id) {
    curve.push_back({"pr", 5, kLambdaSet[id], id, 0.1, 0.1 * (id + 1), 20, 25.0 + id});
  }
  WriteFileAtomic(P("a.csv"), RdCsv(curve));
  Result same = Cli({"bdrate", "--anchor", P("a.csv"), "--test", P("a.csv")});
  ASSERT_EQ(same.code, 0) << same.err;
  EXPECT_EQ(same.out, "0.00\n");
  for (auto& p : curve) p.bpp_enh *= 2.0;
  WriteFileAtomic(P("b.csv"), RdCsv(curve));
  EXPECT_EQ(Cli({"bdrate", "--anchor", P("a.csv"), "--test", P("b.csv")}).out,
            "100.00\n");
  EXPECT_EQ(Cli({"bdrate", "--anchor", P("a.csv"), "--test", P("b.csv"),
                 "--metric", "psnr"}).out.substr(0, 1),
            "-");
  EXPECT_EQ(Cli({"bdrate", "--anchor", P("rd.csv"), "--test", P("a.csv")}).code, 1);
}

TEST_F(CliTest, Params) {
  Result r = Cli({"params"});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "role,N_a,params");
  const std::string n = std::to_string(CountParams(LoadWeights(P("pr.rswt"))));
  EXPECT_NE(Cli({"params", "--weights", P("pr.rswt")}).out.find(n), std::string::npos);
}

}  // namespace
}  // namespace resiscale
