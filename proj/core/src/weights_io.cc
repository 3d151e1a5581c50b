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

#include "resiscale/weights_io.h"

#include <cmath>
#include <cstring>

#include "resiscale/file_util.h"
#include "resiscale/status.h"

namespace resiscale {
namespace {

constexpr char kMagic[4] = {'R', 'S', 'W', 'T'};
constexpr uint32_t kMaxText = 1 << 16;

}  // namespace

std::vector<uint8_t> SerializeWeights(const TransformWeights& w) {
  ByteWriter out;
  for (char c : kMagic) out.PutU8(static_cast<uint8_t>(c));
  out.PutU8(kWeightsVersion);
  const std::string text = w.arch().ToText();
  out.PutU32(static_cast<uint32_t>(text.size()));
  out.PutBytes({reinterpret_cast<const uint8_t*>(text.data()), text.size()});
  const std::vector<LayerSpec> specs = LayerSpecs(w.arch());
  out.PutU32(static_cast<uint32_t>(specs.size()));
  for (const LayerSpec& spec : specs) {
    const Tensor& t = w.Get(spec.name);
    out.PutU32(static_cast<uint32_t>(spec.name.size()));
    out.PutBytes({reinterpret_cast<const uint8_t*>(spec.name.data()),
                  spec.name.size()});
    out.PutU8(static_cast<uint8_t>(t.rank()));
    for (int d : t.shape()) out.PutU32(static_cast<uint32_t>(d));
    for (float v : t.data()) out.PutF32(v);
  }
  return out.Release();
}

TransformWeights ParseWeights(std::span<const uint8_t> bytes) {
  ByteReader in(bytes, ErrorCode::kCorruptStream, "weights file");
  auto magic = in.GetBytes(4);
  Check(std::memcmp(magic.data(), kMagic, 4) == 0, ErrorCode::kCorruptStream,
        "weights file: bad magic (expected RSWT)");
  const uint8_t version = in.GetU8();
  if (version != kWeightsVersion) {
    Fail(ErrorCode::kCorruptStream,
         "weights file: unsupported version " + std::to_string(version));
  }
  const uint32_t text_len = in.GetU32();
  Check(text_len <= kMaxText, ErrorCode::kCorruptStream,
        "weights file: oversized metadata record");
  auto text_bytes = in.GetBytes(text_len);
  Architecture arch;
  try {
    arch = Architecture::FromText(
        std::string(text_bytes.begin(), text_bytes.end()));
  } catch (const Error& e) {
    Fail(ErrorCode::kCorruptStream,
         std::string("weights file: bad metadata: ") + e.what());
  }
  TransformWeights w(arch);
  const std::vector<LayerSpec> specs = LayerSpecs(arch);
  const uint32_t count = in.GetU32();
  if (count != specs.size()) {
    Fail(ErrorCode::kCorruptStream,
         "weights file: " + std::to_string(count) + " tensors, architecture "
         "expects " + std::to_string(specs.size()));
  }
  for (const LayerSpec& spec : specs) {
    const uint32_t name_len = in.GetU32();
    Check(name_len <= 256, ErrorCode::kCorruptStream,
          "weights file: oversized tensor name");
    auto name_bytes = in.GetBytes(name_len);
    const std::string name(name_bytes.begin(), name_bytes.end());
    if (name != spec.name) {
      Fail(ErrorCode::kCorruptStream, "weights file: expected tensor '" +
                                          spec.name + "', found '" + name +
                                          "'");
    }
    const uint8_t rank = in.GetU8();
    Shape shape;
    for (int i = 0; i < rank; ++i) {
      shape.push_back(static_cast<int>(in.GetU32() & 0x7FFFFFFF));
    }
    if (shape != spec.shape) {
      Fail(ErrorCode::kCorruptStream,
           "weights file: tensor '" + name + "' has shape " +
               ShapeToString(shape) + ", expected " +
               ShapeToString(spec.shape));
    }
    Tensor t(shape);
    auto data = t.mutable_data();
    for (float& v : data) {
      v = in.GetF32();
      Check(std::isfinite(v), ErrorCode::kCorruptStream,
            "weights file: non-finite value");
    }
    w.Set(name, t);
  }
  Check(in.remaining() == 0, ErrorCode::kCorruptStream,
        "weights file: trailing bytes");
  return w;
}

void SaveWeights(const std::string& path, const TransformWeights& w) {
  WriteFileAtomic(path, SerializeWeights(w));
}

TransformWeights LoadWeights(const std::string& path) {
  const std::vector<uint8_t> bytes = ReadFile(path);
  try {
    return ParseWeights(bytes);
  } catch (const Error& e) {
    Fail(e.code(), "'" + path + "': " + e.what());
  }
}

}  // namespace resiscale
