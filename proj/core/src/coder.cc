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

#include "resiscale/coder.h"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "resiscale/status.h"

namespace resiscale {
namespace {

constexpr uint32_t kTop = 1u << 24;
constexpr uint32_t kBottom = 1u << 16;
constexpr int kFixedBits = 40;

}  // namespace

void CdfTable::Validate() const {
  Check(cumulative.front() == 0 && cumulative.back() == kCdfTotal,
        ErrorCode::kInvalidArgument, "CDF table must span [0, 2^16]");
  for (size_t i = 1; i < cumulative.size(); ++i) {
    Check(cumulative[i] > cumulative[i - 1], ErrorCode::kInvalidArgument,
          "CDF table must be strictly increasing");
  }
}

CodingParamKey QuantizeCodingParams(double mean, double scale) {
  Check(scale >= kScaleMin, ErrorCode::kInvalidArgument,
        "coding scale below the floor");
  CodingParamKey key;
  const double m = std::clamp(mean, -256.0, 256.0);
  key.mean_q = static_cast<int32_t>(std::lround(m * kMeanSteps));
  const double octaves = std::log2(scale / kScaleMin);
  key.scale_q = static_cast<int32_t>(std::clamp<long>(
      std::lround(octaves * kScaleStepsPerOctave), 0, kMaxScaleIndex));
  return key;
}

double DequantizeMean(int32_t mean_q) {
  return static_cast<double>(mean_q) / kMeanSteps;
}

double DequantizeScale(int32_t scale_q) {
  return kScaleMin *
         std::exp2(static_cast<double>(scale_q) / kScaleStepsPerOctave);
}

CdfTable BuildCdf(double mean, double scale) {
  std::array<uint64_t, kAlphabetSize> fixed{};
  for (int i = 0; i < kAlphabetSize; ++i) {
    const double p = Likelihood(kSymbolMin + i, mean, scale);
    fixed[i] = static_cast<uint64_t>(std::ldexp(p, kFixedBits));
  }

  // Integer-only from here on.
  constexpr uint64_t kBudget = kCdfTotal - kAlphabetSize;
  constexpr uint64_t kFracMask = (uint64_t{1} << kFixedBits) - 1;
  std::array<uint32_t, kAlphabetSize> counts{};
  std::array<uint64_t, kAlphabetSize> fraction{};
  uint32_t total = 0;
  for (int i = 0; i < kAlphabetSize; ++i) {
    const uint64_t scaled = fixed[i] * kBudget;
    counts[i] = 1 + static_cast<uint32_t>(scaled >> kFixedBits);
    fraction[i] = scaled & kFracMask;
    total += counts[i];
  }
  std::array<int, kAlphabetSize> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return fraction[a] > fraction[b];
  });
  for (size_t k = 0; total < kCdfTotal; k = (k + 1) % order.size()) {
    ++counts[order[k]];
    ++total;
  }
  // Over-allocation cannot happen (the floors sum to at most the budget),
  // but keep the invariant exact regardless.
  while (total > kCdfTotal) {
    const int i = static_cast<int>(
        std::max_element(counts.begin(), counts.end()) - counts.begin());
    --counts[i];
    --total;
  }

  CdfTable table;
  table.cumulative[0] = 0;
  for (int i = 0; i < kAlphabetSize; ++i) {
    table.cumulative[i + 1] = table.cumulative[i] + counts[i];
  }
  return table;
}

CdfTable BuildCdf(const CodingParamKey& key) {
  return BuildCdf(DequantizeMean(key.mean_q), DequantizeScale(key.scale_q));
}

const CdfTable& CdfCache::Get(double mean, double scale) {
  return Get(QuantizeCodingParams(mean, scale));
}

const CdfTable& CdfCache::Get(const CodingParamKey& key) {
  auto it = tables_.find(key);
  if (it != tables_.end()) return it->second;
  if (tables_.size() >= capacity_) tables_.clear();
  return tables_.emplace(key, BuildCdf(key)).first->second;
}

void RangeEncoder::Encode(int symbol, const CdfTable& table) {
  const int i = symbol - kSymbolMin;
  Check(i >= 0 && i < kAlphabetSize, ErrorCode::kInvalidArgument,
        "range coder: symbol outside alphabet");
  const uint32_t r = range_ >> kCdfPrecisionBits;
  low_ += table.cumulative[i] * r;
  range_ = (table.cumulative[i + 1] - table.cumulative[i]) * r;
  Normalize();
}

void RangeEncoder::Normalize() {
  for (;;) {
    if ((low_ ^ (low_ + range_)) >= kTop) {
      if (range_ >= kBottom) break;
      // Straddling a byte boundary with a small range: shrink the range to
      // end at the boundary so no carry can ever be needed.
      range_ = (0u - low_) & (kBottom - 1);
    }
    out_.push_back(static_cast<uint8_t>(low_ >> 24));
    low_ <<= 8;
    range_ <<= 8;
  }
}

std::vector<uint8_t> RangeEncoder::Finish() {
  // Any value in [low, low + range) identifies the final interval; the
  // decoder pads with zeros, so pick the one with the most trailing zero
  // bytes.
  const uint64_t lo = low_;
  const uint64_t hi = lo + range_;
  for (int bytes = 0; bytes <= 4; ++bytes) {
    const int drop = 32 - 8 * bytes;
    const uint64_t unit = uint64_t{1} << drop;
    const uint64_t v = (lo + unit - 1) & ~(unit - 1);
    if (v < hi && v < (uint64_t{1} << 32)) {
      for (int b = 0; b < bytes; ++b) {
        out_.push_back(static_cast<uint8_t>(v >> (24 - 8 * b)));
      }
      break;
    }
  }
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> data) : data_(data) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | NextByte();
}

uint8_t RangeDecoder::NextByte() {
  if (pos_ < data_.size()) return data_[pos_++];
  // Finish() never needs more than 4 implicit zeros; stop garbage early.
  if (++overrun_ > 4) {
    Fail(ErrorCode::kCorruptStream, "range stream ended early");
  }
  return 0;
}

void RangeDecoder::CheckEnd() const {
  if (pos_ != data_.size()) {
    Fail(ErrorCode::kCorruptStream,
         "range stream has " + std::to_string(data_.size() - pos_) +
             " unused trailing bytes");
  }
}

int RangeDecoder::Decode(const CdfTable& table) {
  const uint32_t r = range_ >> kCdfPrecisionBits;
  const uint32_t target = std::min<uint32_t>((code_ - low_) / r, kCdfTotal - 1);
  // First entry strictly greater than target, minus one.
  const auto it = std::upper_bound(table.cumulative.begin(),
                                   table.cumulative.end(), target);
  const int i = static_cast<int>(it - table.cumulative.begin()) - 1;
  low_ += table.cumulative[i] * r;
  range_ = (table.cumulative[i + 1] - table.cumulative[i]) * r;
  Normalize();
  return kSymbolMin + i;
}

void RangeDecoder::Normalize() {
  for (;;) {
    if ((low_ ^ (low_ + range_)) >= kTop) {
      if (range_ >= kBottom) break;
      range_ = (0u - low_) & (kBottom - 1);
    }
    code_ = (code_ << 8) | NextByte();
    low_ <<= 8;
    range_ <<= 8;
  }
}

uint32_t Crc32(std::span<const uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large inputs in chunks.
  size_t pos = 0;
  while (pos < bytes.size()) {
    const size_t chunk = std::min<size_t>(bytes.size() - pos, 1u << 30);
    crc = crc32(crc, bytes.data() + pos, static_cast<uInt>(chunk));
    pos += chunk;
  }
  return static_cast<uint32_t>(crc);
}

ByteStream RangeEncode(std::span<const int> symbols,
                       std::span<const CdfTable> tables) {
  Check(symbols.size() == tables.size(), ErrorCode::kInvalidArgument,
        "RangeEncode: one table per symbol required");
  RangeEncoder encoder;
  for (size_t i = 0; i < symbols.size(); ++i) {
    encoder.Encode(symbols[i], tables[i]);
  }
  ByteStream stream{encoder.Finish()};
  const uint32_t crc = Crc32(stream.bytes);
  for (int b = 0; b < 4; ++b) {
    stream.bytes.push_back(static_cast<uint8_t>(crc >> (8 * b)));
  }
  return stream;
}

std::vector<int> RangeDecode(const ByteStream& stream,
                             std::span<const CdfTable> tables, size_t count) {
  Check(tables.size() >= count, ErrorCode::kInvalidArgument,
        "RangeDecode: one table per symbol required");
  Check(stream.bytes.size() >= 4, ErrorCode::kCorruptStream,
        "range stream shorter than its checksum");
  const size_t payload = stream.bytes.size() - 4;
  const std::span<const uint8_t> body(stream.bytes.data(), payload);
  uint32_t stored = 0;
  for (int b = 0; b < 4; ++b) {
    stored |= static_cast<uint32_t>(stream.bytes[payload + b]) << (8 * b);
  }
  Check(Crc32(body) == stored, ErrorCode::kCorruptStream,
        "range stream checksum mismatch");
  RangeDecoder decoder(body);
  std::vector<int> symbols;
  symbols.reserve(count);
  for (size_t i = 0; i < count; ++i) symbols.push_back(decoder.Decode(tables[i]));
  decoder.CheckEnd();
  return symbols;
}

}  // namespace resiscale
