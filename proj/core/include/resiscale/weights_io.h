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

// Weights file layout (all integers little-endian):
//
//   "RSWT" | version u8 = 1
//   metadata: u32 byte length | architecture text (key=value lines)
//   u32 tensor count
//   per tensor: u32 name length | UTF-8 name | u8 rank | rank x u32 extents
//               | numel x f32
//
// Tensors are written in LayerSpecs order.

#ifndef RESISCALE_WEIGHTS_IO_H_
#define RESISCALE_WEIGHTS_IO_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "resiscale/transform.h"

namespace resiscale {

inline constexpr uint8_t kWeightsVersion = 1;

std::vector<uint8_t> SerializeWeights(const TransformWeights& w);
// Throws Error(kCorruptStream) on any malformed or inconsistent input.
TransformWeights ParseWeights(std::span<const uint8_t> bytes);

void SaveWeights(const std::string& path, const TransformWeights& w);
TransformWeights LoadWeights(const std::string& path);

}  // namespace resiscale

#endif  // RESISCALE_WEIGHTS_IO_H_
