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

#include "cli.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "resiscale/bitstream.h"
#include "resiscale/dataset.h"
#include "resiscale/eval.h"
#include "resiscale/file_util.h"
#include "resiscale/image_io.h"
#include "resiscale/scalable.h"
#include "resiscale/status.h"
#include "resiscale/train.h"
#include "resiscale/weights_io.h"

namespace resiscale::cli {
namespace {

namespace fs = std::filesystem;

int ExitFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo:
      return kExitIo;
    case ErrorCode::kCorruptStream:
      return kExitCorrupt;
    case ErrorCode::kInvalidArgument:
      return kExitUsage;
    case ErrorCode::kShapeMismatch:
    case ErrorCode::kConfig:
      return kExitConfig;
  }
  return kExitConfig;
}

std::string Fixed(double v, int digits) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string Text(const std::vector<uint8_t>& bytes) {
  return std::string(bytes.begin(), bytes.end());
}

// Flags shared by the three training commands. Every flag maps onto a
// TrainConfig key and is applied after the optional config file.
struct TrainFlags {
  std::string config_path;
  std::string out;
  std::string report;
  std::map<std::string, std::string> overrides;
};

void AddTrainFlags(CLI::App* cmd, TrainFlags& f, bool enhancement) {
  cmd->add_option("--config", f.config_path, "key=value config file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "output weights file")->required();
  cmd->add_option("--report", f.report, "training trace CSV");
  auto key = [&](const std::string& flag, const std::string& name,
                 const std::string& help) {
    cmd->add_option_function<std::string>(
        flag, [&f, name](const std::string& v) { f.overrides[name] = v; },
        help);
  };
  key("--lambda", "lambda", "rate-distortion weight");
  key("--lambda-id", "lambda_id", "index into {0.005,0.01,0.02,0.03,0.05}");
  key("--steps", "steps", "optimizer steps");
  key("--batch", "batch_size", "batch size");
  key("--lr", "learning_rate", "initial learning rate");
  key("--seed", "seed", "random seed");
  key("--data", "dataset", "image/mask folder (default: synthetic)");
  key("--synthetic-count", "synthetic_count", "synthetic training images");
  key("--log-every", "log_every", "log every N steps (0 = off)");
  key("--init", "init_weights", "start from these weights (fine-tune)");
  if (enhancement) {
    key("--base", "base_weights", "frozen base weights");
    key("--na", "num_slices", "enhancement slices N_a");
  } else {
    key("--slices", "num_slices", "latent slices N_m");
  }
}

TrainConfig ResolveTrainConfig(const TrainFlags& f, ModelRole role) {
  std::string text;
  if (!f.config_path.empty()) text = Text(ReadFile(f.config_path));
  TrainConfig c = TrainConfig::Parse(text);
  for (const auto& [k, v] : f.overrides) c.Set(k, v);
  const bool has_lambda = f.overrides.count("lambda") > 0;
  const bool has_id = f.overrides.count("lambda_id") > 0;
  if (has_lambda && !has_id) c.lambda_id = -1;
  if (has_id && !has_lambda) c.lambda = 0.0;
  c.role = role == ModelRole::kFeatureResidual &&
                   c.role == ModelRole::kFeatureFusion
               ? ModelRole::kFeatureFusion
               : role;
  c.Resolve();
  return c;
}

int RunTrain(const TrainFlags& f, ModelRole role, std::ostream& out,
             std::ostream& err) {
  const TrainConfig c = ResolveTrainConfig(f, role);
  err << "# resolved config\n" << c.ToText() << "out=" << f.out << "\n";
  std::optional<TransformWeights> base;
  if (role != ModelRole::kBase) {
    Check(!c.base_weights.empty(), ErrorCode::kConfig,
          "enhancement training needs --base (or base_weights=)");
    base = LoadWeights(c.base_weights);
  }
  TrainProgress progress;
  if (c.log_every > 0) {
    progress = [&](const TrainStepRecord& r) {
      if (r.step % c.log_every == 0) {
        err << "step " << r.step << " loss " << r.loss << " rate_bits "
            << r.rate_bits << " distortion " << r.distortion << "\n";
      }
    };
  }
  std::optional<TransformWeights> init;
  if (!c.init_weights.empty()) init = LoadWeights(c.init_weights);
  TrainResult result = TrainModel(c, base ? &*base : nullptr, nullptr,
                                  progress, init ? &*init : nullptr);
  SaveWeights(f.out, result.weights);
  if (!f.report.empty()) WriteFileAtomic(f.report, result.report.ToCsv());
  out << "wrote " << f.out << " (" << CountParams(result.weights)
      << " parameters";
  if (!result.report.steps.empty()) {
    out << ", final loss " << result.report.steps.back().loss;
  }
  out << ")\n";
  return kExitOk;
}

std::optional<TransformWeights> LoadOptional(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return LoadWeights(path);
}

void CheckModeFlag(const std::string& mode, const TransformWeights* enh) {
  if (mode.empty()) return;
  const std::string actual = enh ? RoleName(enh->arch().role) : "base";
  if (mode != actual) {
    Fail(ErrorCode::kConfig, "--mode " + mode + " but the weights are '" +
                                 actual + "'");
  }
}

std::vector<int> ParseIntList(const std::string& s, const char* what) {
  std::vector<int> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      Fail(ErrorCode::kInvalidArgument,
           std::string("bad integer list for ") + what + ": '" + s + "'");
    }
  }
  return out;
}

std::vector<std::string> ParseNameList(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string SweepFileName(const std::string& mode, int na, int lambda_id) {
  return mode + "_na" + std::to_string(na) + "_l" + std::to_string(lambda_id) +
         ".rswt";
}

RdCurve SelectCurve(const std::vector<RdPoint>& points,
                    const std::string& mode_in, int na_in, bool total,
                    const char* which) {
  std::set<std::pair<std::string, int>> cells;
  for (const RdPoint& p : points) {
    if (p.mode != "base") cells.insert({p.mode, p.num_enh_slices});
  }
  std::string mode = mode_in;
  int na = na_in;
  if (mode.empty() || na < 0) {
    std::set<std::pair<std::string, int>> match;
    for (const auto& c : cells) {
      if ((mode.empty() || c.first == mode) && (na < 0 || c.second == na)) {
        match.insert(c);
      }
    }
    if (match.size() != 1) {
      Fail(ErrorCode::kInvalidArgument,
           std::string(which) + " CSV holds " + std::to_string(match.size()) +
               " matching (mode, N_a) series; select one with --" + which +
               "-mode / --" + which + "-na");
    }
    mode = match.begin()->first;
    na = match.begin()->second;
  }
  return CurveFor(points, mode, na, total);
}

}  // namespace

int Run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Scalable image codec for machines and humans"};
  app.name(args.empty() ? "resiscale" : fs::path(args[0]).filename().string());
  app.require_subcommand(1, 1);

  // gen-data
  int gen_count = 0;
  uint64_t gen_seed = 1;
  std::string gen_out;
  SyntheticOptions gen_opts;
  auto* gen = app.add_subcommand("gen-data", "write synthetic image/mask pairs");
  gen->add_option("--count", gen_count, "number of images")->required()
      ->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "random seed");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--size", gen_opts.size, "image size (multiple of 16)");
  gen->add_option("--min-area", gen_opts.min_area, "minimum mask area fraction");
  gen->add_option("--max-area", gen_opts.max_area, "maximum mask area fraction");

  TrainFlags tb, tf, tp;
  bool no_subtract = false;
  auto* train_base = app.add_subcommand("train-base", "train the base codec");
  AddTrainFlags(train_base, tb, false);
  auto* train_fr =
      app.add_subcommand("train-fr", "train a feature-residual enhancement");
  AddTrainFlags(train_fr, tf, true);
  train_fr->add_flag("--no-subtract", no_subtract,
                     "feature-fusion baseline: code raw slices");
  auto* train_pr =
      app.add_subcommand("train-pr", "train a pixel-residual enhancement");
  AddTrainFlags(train_pr, tp, true);

  // encode
  std::string enc_in, enc_base, enc_enh, enc_mode, enc_out;
  auto* encode = app.add_subcommand("encode", "encode a PPM image");
  encode->add_option("--in", enc_in, "input PPM")->required();
  encode->add_option("--base", enc_base, "base weights")->required();
  encode->add_option("--enh", enc_enh, "enhancement weights");
  encode->add_option("--mode", enc_mode, "expected mode")
      ->check(CLI::IsMember({"base", "fr", "pr", "ff"}));
  encode->add_option("--out", enc_out, "output stream")->required();

  // decode
  std::string dec_in, dec_base, dec_enh, dec_layer, dec_out;
  auto* decode = app.add_subcommand("decode", "decode a stream to PPM");
  decode->add_option("--in", dec_in, "input stream")->required();
  decode->add_option("--base", dec_base, "base weights")->required();
  decode->add_option("--enh", dec_enh, "enhancement weights");
  decode->add_option("--layer", dec_layer, "base | human")
      ->check(CLI::IsMember({"base", "human"}));
  decode->add_option("--out", dec_out, "output PPM")->required();

  // strip-enh
  std::string strip_in, strip_out;
  auto* strip = app.add_subcommand("strip-enh", "drop the enhancement layer");
  strip->add_option("input", strip_in, "input stream")->required();
  strip->add_option("--out", strip_out, "output (default <input>.base.icmh)");

  // eval
  std::string ev_data, ev_base, ev_models_dir, ev_modes = "fr,pr",
                                                 ev_na = "5",
                                                 ev_lambdas = "0,1,2,3,4",
                                                 ev_csv, ev_svg;
  std::vector<std::string> ev_models;
  int ev_synthetic = 0, ev_threads = 0;
  uint64_t ev_seed = 1000;
  bool ev_total = false;
  auto* eval = app.add_subcommand("eval", "RD sweep to CSV (and SVG)");
  eval->add_option("--data", ev_data, "image/mask folder");
  eval->add_option("--synthetic", ev_synthetic, "use N synthetic images");
  eval->add_option("--seed", ev_seed, "seed for --synthetic");
  eval->add_option("--base", ev_base, "base weights")->required();
  eval->add_option("--models", ev_models, "enhancement weight files");
  eval->add_option("--models-dir", ev_models_dir,
                   "folder of <mode>_na<N>_l<id>.rswt files");
  eval->add_option("--modes", ev_modes, "modes for --models-dir");
  eval->add_option("--na", ev_na, "N_a values for --models-dir");
  eval->add_option("--lambdas", ev_lambdas, "lambda ids for --models-dir");
  eval->add_option("--csv", ev_csv, "output CSV")->required();
  eval->add_option("--svg", ev_svg, "output SVG plot");
  eval->add_flag("--total-rate", ev_total, "plot total instead of enh bpp");
  eval->add_option("--threads", ev_threads,
                   "worker threads (default RESISCALE_THREADS)");

  // bdrate
  std::string bd_anchor, bd_test, bd_anchor_mode, bd_test_mode,
      bd_rate = "enh", bd_metric = "rate";
  int bd_anchor_na = -1, bd_test_na = -1;
  auto* bd = app.add_subcommand("bdrate", "Bjontegaard delta between CSVs");
  bd->add_option("--anchor", bd_anchor, "anchor CSV")->required();
  bd->add_option("--test", bd_test, "test CSV")->required();
  bd->add_option("--anchor-mode", bd_anchor_mode, "anchor series mode");
  bd->add_option("--anchor-na", bd_anchor_na, "anchor series N_a");
  bd->add_option("--test-mode", bd_test_mode, "test series mode");
  bd->add_option("--test-na", bd_test_na, "test series N_a");
  bd->add_option("--rate", bd_rate, "enh | total")
      ->check(CLI::IsMember({"enh", "total"}));
  bd->add_option("--metric", bd_metric, "rate (%) | psnr (dB)")
      ->check(CLI::IsMember({"rate", "psnr"}));

  // params
  std::vector<std::string> pa_weights;
  std::string pa_na = "3,4,5";
  auto* params = app.add_subcommand("params", "count model parameters");
  params->add_option("--weights", pa_weights, "weight files");
  params->add_option("--na", pa_na, "N_a values for the default table");

  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("resiscale");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      err << "# resolved config\ncount=" << gen_count << "\nseed=" << gen_seed
          << "\nsize=" << gen_opts.size << "\nmin_area=" << gen_opts.min_area
          << "\nmax_area=" << gen_opts.max_area << "\nout=" << gen_out << "\n";
      WriteDataset(GenerateDataset(gen_count, gen_seed, gen_opts), gen_out);
      out << "wrote " << gen_count << " image/mask pairs to " << gen_out
          << "\n";
      return kExitOk;
    }
    if (train_base->parsed()) return RunTrain(tb, ModelRole::kBase, out, err);
    if (train_fr->parsed()) {
      return RunTrain(tf,
                      no_subtract ? ModelRole::kFeatureFusion
                                  : ModelRole::kFeatureResidual,
                      out, err);
    }
    if (train_pr->parsed()) {
      return RunTrain(tp, ModelRole::kPixelResidual, out, err);
    }
    if (encode->parsed()) {
      err << "# resolved config\nin=" << enc_in << "\nbase=" << enc_base
          << "\nenh=" << enc_enh << "\nmode=" << enc_mode << "\nout="
          << enc_out << "\n";
      const TransformWeights base = LoadWeights(enc_base);
      const auto enh = LoadOptional(enc_enh);
      const TransformWeights* e = enh ? &*enh : nullptr;
      CheckModeFlag(enc_mode, e);
      const Tensor x = ReadPpm(enc_in);
      const EncodedImage r = EncodeImage(x, base, e);
      if (r.base_stats.saturation_warning() ||
          r.enh_stats.saturation_warning()) {
        err << "warning: more than 0.01% of symbols saturated ("
            << r.base_stats.saturated + r.enh_stats.saturated << ")\n";
      }
      WriteFileAtomic(enc_out, r.bytes);
      const int h = x.dim(2), w = x.dim(3);
      out << "wrote " << enc_out << ": " << r.bytes.size() << " bytes, bpp_base "
          << Fixed(Bpp(r.base_payload_bytes, h, w), 4) << ", bpp_enh "
          << Fixed(Bpp(r.enh_payload_bytes, h, w), 4) << "\n";
      return kExitOk;
    }
    if (decode->parsed()) {
      const std::string layer =
          dec_layer.empty() ? (dec_enh.empty() ? "base" : "human") : dec_layer;
      err << "# resolved config\nin=" << dec_in << "\nbase=" << dec_base
          << "\nenh=" << dec_enh << "\nlayer=" << layer << "\nout=" << dec_out
          << "\n";
      const TransformWeights base = LoadWeights(dec_base);
      std::optional<TransformWeights> enh;
      if (layer == "human") {
        Check(!dec_enh.empty(), ErrorCode::kInvalidArgument,
              "--layer human needs --enh");
        enh = LoadWeights(dec_enh);
      }
      const std::vector<uint8_t> bytes = ReadFile(dec_in);
      const DecodedImage d = DecodeImage(bytes, base, enh ? &*enh : nullptr);
      WritePpm(dec_out, layer == "human" ? d.human : d.base.x_hat);
      out << "wrote " << dec_out << " (" << layer << " layer, "
          << d.header.width << "x" << d.header.height << ")\n";
      return kExitOk;
    }
    if (strip->parsed()) {
      if (strip_out.empty()) {
        fs::path p(strip_in);
        strip_out = (p.parent_path() / (p.stem().string() + ".base.icmh"))
                        .string();
      }
      err << "# resolved config\ninput=" << strip_in << "\nout=" << strip_out
          << "\n";
      const std::vector<uint8_t> stripped =
          StripEnhancement(ReadFile(strip_in));
      WriteFileAtomic(strip_out, stripped);
      out << "wrote " << strip_out << " (" << stripped.size() << " bytes)\n";
      return kExitOk;
    }
    if (eval->parsed()) {
      Check(ev_data.empty() != (ev_synthetic == 0), ErrorCode::kInvalidArgument,
            "give exactly one of --data and --synthetic");
      const int threads = ev_threads > 0 ? ev_threads : EvalThreads();
      err << "# resolved config\ndata=" << ev_data << "\nsynthetic="
          << ev_synthetic << "\nseed=" << ev_seed << "\nbase=" << ev_base
          << "\nmodels_dir=" << ev_models_dir << "\nmodes=" << ev_modes
          << "\nna=" << ev_na << "\nlambdas=" << ev_lambdas
          << "\nthreads=" << threads << "\ncsv=" << ev_csv << "\nsvg="
          << ev_svg << "\n";
      std::vector<std::string> paths = ev_models;
      if (!ev_models_dir.empty()) {
        std::vector<std::string> missing;
        for (const std::string& mode : ParseNameList(ev_modes)) {
          for (int na : ParseIntList(ev_na, "--na")) {
            for (int id : ParseIntList(ev_lambdas, "--lambdas")) {
              const fs::path p =
                  fs::path(ev_models_dir) / SweepFileName(mode, na, id);
              if (fs::exists(p)) {
                paths.push_back(p.string());
              } else {
                missing.push_back("(mode=" + mode + ", N_a=" +
                                  std::to_string(na) + ", lambda_id=" +
                                  std::to_string(id) + ")");
              }
            }
          }
        }
        if (!missing.empty()) {
          std::string list;
          for (const std::string& m : missing) list += "\n  " + m;
          Fail(ErrorCode::kConfig, "missing models for sweep cells:" + list);
        }
      }
      const TransformWeights base = LoadWeights(ev_base);
      std::vector<TransformWeights> models;
      for (const std::string& p : paths) models.push_back(LoadWeights(p));
      std::vector<const TransformWeights*> ptrs;
      for (const TransformWeights& m : models) ptrs.push_back(&m);
      const Dataset data = ev_data.empty()
                               ? GenerateDataset(ev_synthetic, ev_seed)
                               : ReadDataset(ev_data);
      const std::vector<RdPoint> points = RdSweep(data, base, ptrs, threads);
      WriteFileAtomic(ev_csv, RdCsv(points));
      if (!ev_svg.empty()) WriteFileAtomic(ev_svg, RdSvg(points, ev_total));
      out << "wrote " << points.size() << " rows to " << ev_csv << "\n";
      return kExitOk;
    }
    if (bd->parsed()) {
      err << "# resolved config\nanchor=" << bd_anchor << "\ntest=" << bd_test
          << "\nrate=" << bd_rate << "\nmetric=" << bd_metric << "\n";
      const auto anchor_points = ParseRdCsv(Text(ReadFile(bd_anchor)));
      const auto test_points = ParseRdCsv(Text(ReadFile(bd_test)));
      const bool total = bd_rate == "total";
      const RdCurve a = SelectCurve(anchor_points, bd_anchor_mode,
                                    bd_anchor_na, total, "anchor");
      const RdCurve t =
          SelectCurve(test_points, bd_test_mode, bd_test_na, total, "test");
      const double v = bd_metric == "rate" ? BdRate(a, t) : BdPsnr(a, t);
      out << Fixed(v, 2) << "\n";
      return kExitOk;
    }
    if (params->parsed()) {
      if (!pa_weights.empty()) {
        for (const std::string& p : pa_weights) {
          out << p << " " << CountParams(LoadWeights(p)) << "\n";
        }
        return kExitOk;
      }
      const Architecture base = Architecture::Base();
      out << "role,N_a,params\nbase,0," << CountParams(base) << "\n";
      for (ModelRole role :
           {ModelRole::kFeatureResidual, ModelRole::kPixelResidual}) {
        for (int na : ParseIntList(pa_na, "--na")) {
          out << RoleName(role) << "," << na << ","
              << CountParams(Architecture::Enhancement(role, na, base))
              << "\n";
        }
      }
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return ExitFor(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace resiscale::cli
