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

#include "resiscale/dataset.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>

#include "resiscale/image_io.h"
#include "resiscale/status.h"

namespace resiscale {
namespace {

namespace fs = std::filesystem;

constexpr int kMaxAttempts = 64;

float Snap(double v) {
  return static_cast<float>(ToByte(static_cast<float>(v))) / 255.0f;
}

struct Shape2D {
  int kind;  // 0 disc, 1 rectangle, 2 triangle
  double cx, cy, a, b, angle;
  double color[3];

  bool Contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = c * dx + s * dy, v = -s * dx + c * dy;
    switch (kind) {
      case 0:
        return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
      case 1:
        return std::abs(u) <= a && std::abs(v) <= b;
      default: {
        // Isosceles triangle with apex at (0, -b) and base at v = b.
        if (v < -b || v > b) return false;
        const double half = a * (v + b) / (2.0 * b);
        return std::abs(u) <= half;
      }
    }
  }
};

Tensor Stack(const std::vector<const Tensor*>& parts) {
  Check(!parts.empty(), ErrorCode::kInvalidArgument, "empty batch");
  Shape shape = parts.front()->shape();
  const size_t each = parts.front()->numel();
  shape[0] = static_cast<int>(parts.size());
  std::vector<float> values;
  values.reserve(each * parts.size());
  for (const Tensor* t : parts) {
    Check(t->shape() == parts.front()->shape(), ErrorCode::kShapeMismatch,
          "batch members differ in shape");
    values.insert(values.end(), t->data().begin(), t->data().end());
  }
  return Tensor(shape, std::move(values));
}

}  // namespace

Tensor Dataset::Images(const std::vector<size_t>& indices) const {
  std::vector<const Tensor*> parts;
  for (size_t i : indices) parts.push_back(&samples.at(i).image);
  return Stack(parts);
}

Tensor Dataset::Masks(const std::vector<size_t>& indices) const {
  std::vector<const Tensor*> parts;
  for (size_t i : indices) parts.push_back(&samples.at(i).mask);
  return Stack(parts);
}

Sample GenerateSample(uint64_t seed, uint64_t index,
                      const SyntheticOptions& options) {
  Check(options.size >= 16 && options.size % 16 == 0, ErrorCode::kConfig,
        "synthetic image size must be a positive multiple of 16");
  Check(options.min_area >= 0.0 && options.min_area < options.max_area &&
            options.max_area <= 1.0,
        ErrorCode::kConfig, "mask area bounds must satisfy 0 <= min < max <= 1");
  Check(options.max_shapes >= 1, ErrorCode::kConfig, "max_shapes must be >= 1");
  std::seed_seq seq{seed, index, uint64_t{0x5EED}};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = options.size;

  // Background: two-colour gradient modulated by an oriented sinusoid.
  double c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = 0.15 + 0.7 * unit(rng);
    c1[c] = 0.15 + 0.7 * unit(rng);
  }
  const double freq = 2.0 + 6.0 * unit(rng);
  const double theta = std::numbers::pi * unit(rng);
  const double phase = 2.0 * std::numbers::pi * unit(rng);
  const double amp = 0.05 + 0.1 * unit(rng);

  std::vector<Shape2D> shapes;
  std::vector<uint8_t> mask(static_cast<size_t>(n) * n);
  for (int attempt = 0;; ++attempt) {
    shapes.clear();
    const int count = 1 + static_cast<int>(unit(rng) * options.max_shapes);
    for (int s = 0; s < std::min(count, options.max_shapes); ++s) {
      Shape2D sh;
      sh.kind = static_cast<int>(unit(rng) * 3) % 3;
      sh.cx = n * (0.2 + 0.6 * unit(rng));
      sh.cy = n * (0.2 + 0.6 * unit(rng));
      sh.a = n * (0.08 + 0.22 * unit(rng));
      sh.b = n * (0.08 + 0.22 * unit(rng));
      sh.angle = std::numbers::pi * unit(rng);
      for (double& v : sh.color) v = unit(rng);
      shapes.push_back(sh);
    }
    size_t area = 0;
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        bool in = false;
        for (const Shape2D& sh : shapes) in = in || sh.Contains(x + 0.5, y + 0.5);
        mask[static_cast<size_t>(y) * n + x] = in;
        area += in;
      }
    }
    const double frac = static_cast<double>(area) / (n * n);
    if (frac >= options.min_area && frac <= options.max_area) break;
    Check(attempt < kMaxAttempts, ErrorCode::kConfig,
          "could not meet the mask area bounds; widen them");
  }

  Sample out{Tensor({1, 3, n, n}), Tensor({1, 1, n, n})};
  const double ct = std::cos(theta), st = std::sin(theta);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double t = (x + y) / (2.0 * (n - 1));
      const double wave =
          amp * std::sin(2.0 * std::numbers::pi * freq *
                             (ct * x + st * y) / n + phase);
      const Shape2D* top = nullptr;
      for (const Shape2D& sh : shapes) {
        if (sh.Contains(x + 0.5, y + 0.5)) top = &sh;
      }
      for (int c = 0; c < 3; ++c) {
        double v = top ? top->color[c]
                       : (1.0 - t) * c0[c] + t * c1[c] + wave;
        out.image.at(0, c, y, x) = Snap(std::clamp(v, 0.0, 1.0));
      }
      out.mask.at(0, 0, y, x) = mask[static_cast<size_t>(y) * n + x];
    }
  }
  return out;
}

Dataset GenerateDataset(size_t count, uint64_t seed,
                        const SyntheticOptions& options) {
  Dataset d;
  d.samples.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    d.samples.push_back(GenerateSample(seed, i, options));
  }
  return d;
}

void WriteDataset(const Dataset& data, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) Fail(ErrorCode::kIo, "cannot create '" + dir + "': " + ec.message());
  char name[32];
  for (size_t i = 0; i < data.size(); ++i) {
    std::snprintf(name, sizeof(name), "img_%05zu.ppm", i);
    WritePpm((fs::path(dir) / name).string(), data.samples[i].image);
    std::snprintf(name, sizeof(name), "mask_%05zu.pgm", i);
    WritePgmMask((fs::path(dir) / name).string(), data.samples[i].mask);
  }
}

Dataset ReadDataset(const std::string& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    Fail(ErrorCode::kIo, "dataset directory '" + dir + "' does not exist");
  }
  std::vector<fs::path> images;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("img_", 0) == 0 && entry.path().extension() == ".ppm") {
      images.push_back(entry.path());
    }
  }
  std::sort(images.begin(), images.end());
  Check(!images.empty(), ErrorCode::kIo,
        "no img_*.ppm files in '" + dir + "'");
  Dataset d;
  for (const fs::path& p : images) {
    Sample s;
    s.image = ReadPpm(p.string());
    const std::string stem = p.stem().string().substr(4);
    const fs::path mask_path = p.parent_path() / ("mask_" + stem + ".pgm");
    if (fs::exists(mask_path)) {
      s.mask = ReadPgmMask(mask_path.string());
      if (s.mask.dim(2) != s.image.dim(2) || s.mask.dim(3) != s.image.dim(3)) {
        Fail(ErrorCode::kIo, "mask '" + mask_path.string() +
                                 "' does not match its image size");
      }
    } else {
      s.mask = Tensor({1, 1, s.image.dim(2), s.image.dim(3)}, 1.0f);
    }
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace resiscale
