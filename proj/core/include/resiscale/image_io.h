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

// Binary PPM (P6) images and PGM (P5) masks, 8 bits per sample.
// Images map to [1,3,H,W] tensors in [0,1]; masks to [1,1,H,W] tensors of
// exactly 0 or 1 (any non-zero sample is foreground).

#ifndef RESISCALE_IMAGE_IO_H_
#define RESISCALE_IMAGE_IO_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "resiscale/tensor.h"

namespace resiscale {

// Nearest 8-bit level, round half up, clamped to [0, 255].
uint8_t ToByte(float v);

std::vector<uint8_t> EncodePpm(const Tensor& image);
Tensor DecodePpm(std::span<const uint8_t> bytes);
std::vector<uint8_t> EncodePgm(const Tensor& mask);
Tensor DecodePgm(std::span<const uint8_t> bytes);

Tensor ReadPpm(const std::string& path);
void WritePpm(const std::string& path, const Tensor& image);
Tensor ReadPgmMask(const std::string& path);
void WritePgmMask(const std::string& path, const Tensor& mask);

}  // namespace resiscale

#endif  // RESISCALE_IMAGE_IO_H_
