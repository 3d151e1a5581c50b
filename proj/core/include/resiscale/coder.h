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

// 32-bit carry-less range coder (Subbotin style) over 16-bit frequency
// tables, plus the table construction from Gaussian parameters.
//
// The encoder and decoder are incremental so that the caller can build the
// table for symbol i from symbols already decoded; RangeEncode/RangeDecode
// wrap a whole list and add a CRC32 trailer.

#ifndef RESISCALE_CODER_H_
#define RESISCALE_CODER_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "resiscale/entropy.h"

namespace resiscale {

inline constexpr int kCdfPrecisionBits = 16;
inline constexpr uint32_t kCdfTotal = 1u << kCdfPrecisionBits;

// cumulative[i] is the total count of symbols kSymbolMin .. kSymbolMin+i-1.
// Strictly increasing from 0 to kCdfTotal, so every symbol is codable.
struct CdfTable {
  std::array<uint32_t, kAlphabetSize + 1> cumulative{};

  uint32_t Frequency(int symbol) const {
    const int i = symbol - kSymbolMin;
    return cumulative[i + 1] - cumulative[i];
  }
  void Validate() const;
  bool operator==(const CdfTable&) const = default;
};

// Gaussian parameters snapped to the grid both coder sides agree on: mean in
// steps of 1/64, scale on a log2 grid of 1/32 octave above kScaleMin.
struct CodingParamKey {
  int32_t mean_q = 0;
  int32_t scale_q = 0;
  bool operator==(const CodingParamKey&) const = default;
};

inline constexpr int kMeanSteps = 64;
inline constexpr int kScaleStepsPerOctave = 32;
inline constexpr int kMaxScaleIndex = 12 * kScaleStepsPerOctave;

CodingParamKey QuantizeCodingParams(double mean, double scale);
double DequantizeMean(int32_t mean_q);
double DequantizeScale(int32_t scale_q);

// Counts proportional to Likelihood(), each at least 1, summing to
// kCdfTotal. After the likelihoods are fixed to 40-bit integers the
// construction is integer-only (largest-remainder rounding).
CdfTable BuildCdf(double mean, double scale);
CdfTable BuildCdf(const CodingParamKey& key);

// Memoizes BuildCdf(CodingParamKey). Bounded: cleared when it grows past
// `capacity` entries.
class CdfCache {
 public:
  explicit CdfCache(size_t capacity = 1 << 16) : capacity_(capacity) {}
  const CdfTable& Get(double mean, double scale);
  const CdfTable& Get(const CodingParamKey& key);
  size_t size() const { return tables_.size(); }

 private:
  struct KeyHash {
    size_t operator()(const CodingParamKey& k) const {
      return std::hash<uint64_t>()(
          (static_cast<uint64_t>(static_cast<uint32_t>(k.mean_q)) << 32) |
          static_cast<uint32_t>(k.scale_q));
    }
  };
  size_t capacity_;
  std::unordered_map<CodingParamKey, CdfTable, KeyHash> tables_;
};

class RangeEncoder {
 public:
  void Encode(int symbol, const CdfTable& table);
  // Emits the shortest tail that identifies the final interval and returns
  // the complete byte string. The encoder must not be reused afterwards.
  std::vector<uint8_t> Finish();

 private:
  void Normalize();

  uint32_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  std::vector<uint8_t> out_;
};

class RangeDecoder {
 public:
  // Up to 4 bytes past the end of `data` read as zero, matching Finish();
  // reading further throws Error(kCorruptStream).
  explicit RangeDecoder(std::span<const uint8_t> data);
  int Decode(const CdfTable& table);
  // Call after the last symbol: a complete stream is read to its end.
  // Throws Error(kCorruptStream) on unused trailing bytes.
  void CheckEnd() const;

 private:
  uint8_t NextByte();
  void Normalize();

  std::span<const uint8_t> data_;
  size_t pos_ = 0;
  size_t overrun_ = 0;
  uint32_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint32_t code_ = 0;
};

uint32_t Crc32(std::span<const uint8_t> bytes);

struct ByteStream {
  std::vector<uint8_t> bytes;
  size_t bit_length() const { return bytes.size() * 8; }
};

// Range-coded payload followed by its little-endian CRC32.
ByteStream RangeEncode(std::span<const int> symbols,
                       std::span<const CdfTable> tables);
// Throws Error(kCorruptStream) on a checksum mismatch.
std::vector<int> RangeDecode(const ByteStream& stream,
                             std::span<const CdfTable> tables, size_t count);

}  // namespace resiscale

#endif  // RESISCALE_CODER_H_
