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

#include "resiscale/image_io.h"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "resiscale/file_util.h"
#include "resiscale/status.h"

namespace resiscale {
namespace {

constexpr int kMaxDimension = 1 << 14;

struct PnmHeader {
  int width = 0;
  int height = 0;
  size_t data_offset = 0;
};

// Parses "P<kind> W H 255" with '#' comments and a single whitespace byte
// before the samples.
PnmHeader ParseHeader(std::span<const uint8_t> bytes, char kind) {
  const std::string what = std::string("P") + kind;
  Check(bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == kind,
        ErrorCode::kIo, "not a binary " + what + " file");
  size_t pos = 2;
  auto next_int = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    Check(pos < bytes.size() && std::isdigit(bytes[pos]), ErrorCode::kIo,
          what + ": malformed header");
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      Check(v <= kMaxDimension, ErrorCode::kIo, what + ": value too large");
    }
    return static_cast<int>(v);
  };
  PnmHeader h;
  h.width = next_int();
  h.height = next_int();
  const int maxval = next_int();
  Check(maxval == 255, ErrorCode::kIo, what + ": only maxval 255 supported");
  Check(h.width > 0 && h.height > 0, ErrorCode::kIo,
        what + ": empty image");
  Check(pos < bytes.size() && std::isspace(bytes[pos]), ErrorCode::kIo,
        what + ": malformed header");
  h.data_offset = pos + 1;
  return h;
}

std::vector<uint8_t> Header(char kind, int width, int height) {
  const std::string text = std::string("P") + kind + "\n" +
                           std::to_string(width) + " " +
                           std::to_string(height) + "\n255\n";
  return std::vector<uint8_t>(text.begin(), text.end());
}

}  // namespace

uint8_t ToByte(float v) {
  const float s = std::floor(v * 255.0f + 0.5f);
  return static_cast<uint8_t>(std::clamp(s, 0.0f, 255.0f));
}

std::vector<uint8_t> EncodePpm(const Tensor& image) {
  Check(image.rank() == 4 && image.dim(0) == 1 && image.dim(1) == 3,
        ErrorCode::kShapeMismatch,
        "PPM output must be [1,3,H,W], got " + ShapeToString(image.shape()));
  const int h = image.dim(2), w = image.dim(3);
  std::vector<uint8_t> out = Header('6', w, h);
  out.reserve(out.size() + static_cast<size_t>(3) * h * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) out.push_back(ToByte(image.at(0, c, y, x)));
    }
  }
  return out;
}

Tensor DecodePpm(std::span<const uint8_t> bytes) {
  const PnmHeader h = ParseHeader(bytes, '6');
  const size_t need = static_cast<size_t>(3) * h.width * h.height;
  Check(bytes.size() - h.data_offset >= need, ErrorCode::kIo,
        "P6: truncated pixel data");
  Tensor image({1, 3, h.height, h.width});
  const uint8_t* p = bytes.data() + h.data_offset;
  for (int y = 0; y < h.height; ++y) {
    for (int x = 0; x < h.width; ++x) {
      for (int c = 0; c < 3; ++c) image.at(0, c, y, x) = *p++ / 255.0f;
    }
  }
  return image;
}

std::vector<uint8_t> EncodePgm(const Tensor& mask) {
  Check(mask.rank() == 4 && mask.dim(0) == 1 && mask.dim(1) == 1,
        ErrorCode::kShapeMismatch,
        "PGM output must be [1,1,H,W], got " + ShapeToString(mask.shape()));
  std::vector<uint8_t> out = Header('5', mask.dim(3), mask.dim(2));
  for (float v : mask.data()) out.push_back(v > 0.5f ? 255 : 0);
  return out;
}

Tensor DecodePgm(std::span<const uint8_t> bytes) {
  const PnmHeader h = ParseHeader(bytes, '5');
  const size_t need = static_cast<size_t>(h.width) * h.height;
  Check(bytes.size() - h.data_offset >= need, ErrorCode::kIo,
        "P5: truncated pixel data");
  Tensor mask({1, 1, h.height, h.width});
  auto md = mask.mutable_data();
  for (size_t i = 0; i < need; ++i) {
    md[i] = bytes[h.data_offset + i] != 0 ? 1.0f : 0.0f;
  }
  return mask;
}

Tensor ReadPpm(const std::string& path) {
  try {
    return DecodePpm(ReadFile(path));
  } catch (const Error& e) {
    Fail(e.code(), "'" + path + "': " + e.what());
  }
}

void WritePpm(const std::string& path, const Tensor& image) {
  WriteFileAtomic(path, EncodePpm(image));
}

Tensor ReadPgmMask(const std::string& path) {
  try {
    return DecodePgm(ReadFile(path));
  } catch (const Error& e) {
    Fail(e.code(), "'" + path + "': " + e.what());
  }
}

void WritePgmMask(const std::string& path, const Tensor& mask) {
  WriteFileAtomic(path, EncodePgm(mask));
}

}  // namespace resiscale
