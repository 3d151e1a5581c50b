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

// Layered container. All integers little-endian:
//
//   "ICMH" | version u8 = 1 | mode u8 | H u16 | W u16 | N_m u8 | N_a u8
//   | lambda_id u8 | base_len u32 | enh_len u32
//   | base payload | CRC32(base payload)
//   | enhancement payload | CRC32(enhancement payload)
//
// base_len and enh_len count payload bytes only. A base-only stream (mode
// 0) has N_a = 0, enh_len = 0 and ends after the base CRC.

#ifndef RESISCALE_BITSTREAM_H_
#define RESISCALE_BITSTREAM_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace resiscale {

inline constexpr uint8_t kStreamVersion = 1;
inline constexpr size_t kStreamHeaderSize = 21;
// Frame limits accepted by the parser.
inline constexpr int kMaxFrameDimension = 4096;
inline constexpr int kFrameAlignment = 16;
inline constexpr uint8_t kUnknownLambdaId = 0xFF;
inline constexpr uint8_t kMaxLambdaId = 4;

enum class StreamMode : uint8_t {
  kBaseOnly = 0,
  kFeatureResidual = 1,
  kPixelResidual = 2,
};

struct StreamHeader {
  StreamMode mode = StreamMode::kBaseOnly;
  uint16_t height = 0;
  uint16_t width = 0;
  uint8_t num_base_slices = 0;
  uint8_t num_enh_slices = 0;
  uint8_t lambda_id = kUnknownLambdaId;

  // Throws Error(kCorruptStream) describing the first violated rule.
  void Validate() const;
  bool operator==(const StreamHeader&) const = default;
};

struct LayeredBitstream {
  StreamHeader header;
  std::vector<uint8_t> base;
  std::vector<uint8_t> enhancement;

  bool operator==(const LayeredBitstream&) const = default;
};

std::vector<uint8_t> Serialize(const LayeredBitstream& stream);

// Throws Error(kCorruptStream) on bad magic, version, header fields,
// lengths, or checksums. With base_only set, only the header and the base
// section are read; enhancement bytes are neither checked nor copied.
LayeredBitstream Parse(std::span<const uint8_t> bytes, bool base_only = false);

// Same stream reduced to its base layer (mode 0).
std::vector<uint8_t> StripEnhancement(std::span<const uint8_t> bytes);

}  // namespace resiscale

#endif  // RESISCALE_BITSTREAM_H_
