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

#include "resiscale/bitstream.h"

#include <cstring>
#include <string>

#include "resiscale/coder.h"
#include "resiscale/file_util.h"
#include "resiscale/status.h"

namespace resiscale {
namespace {

constexpr char kMagic[4] = {'I', 'C', 'M', 'H'};

[[noreturn]] void Corrupt(const std::string& message) {
  Fail(ErrorCode::kCorruptStream, "bitstream: " + message);
}

void PutSection(ByteWriter& out, std::span<const uint8_t> payload) {
  out.PutBytes(payload);
  out.PutU32(Crc32(payload));
}

std::vector<uint8_t> GetSection(ByteReader& in, uint32_t length,
                                const char* name) {
  auto payload = in.GetBytes(length);
  const uint32_t stored = in.GetU32();
  if (Crc32(payload) != stored) {
    Corrupt(std::string(name) + " payload checksum mismatch");
  }
  return std::vector<uint8_t>(payload.begin(), payload.end());
}

}  // namespace

void StreamHeader::Validate() const {
  if (static_cast<uint8_t>(mode) > 2) {
    Corrupt("unknown mode " + std::to_string(static_cast<int>(mode)));
  }
  if (height == 0 || width == 0 || height > kMaxFrameDimension ||
      width > kMaxFrameDimension || height % kFrameAlignment != 0 ||
      width % kFrameAlignment != 0) {
    Corrupt("frame " + std::to_string(height) + "x" + std::to_string(width) +
            " is not a positive multiple of 16 up to 4096");
  }
  if (num_base_slices == 0) Corrupt("N_m must be at least 1");
  if (mode == StreamMode::kBaseOnly) {
    if (num_enh_slices != 0) Corrupt("base-only stream with N_a != 0");
  } else if (num_enh_slices < 1 || num_enh_slices > num_base_slices) {
    Corrupt("N_a " + std::to_string(num_enh_slices) + " outside [1, N_m=" +
            std::to_string(num_base_slices) + "]");
  }
  if (lambda_id > kMaxLambdaId && lambda_id != kUnknownLambdaId) {
    Corrupt("unknown lambda id " + std::to_string(lambda_id));
  }
}

std::vector<uint8_t> Serialize(const LayeredBitstream& stream) {
  const StreamHeader& h = stream.header;
  h.Validate();
  Check(h.mode != StreamMode::kBaseOnly || stream.enhancement.empty(),
        ErrorCode::kInvalidArgument,
        "base-only stream cannot carry an enhancement payload");
  ByteWriter out;
  for (char c : kMagic) out.PutU8(static_cast<uint8_t>(c));
  out.PutU8(kStreamVersion);
  out.PutU8(static_cast<uint8_t>(h.mode));
  out.PutU16(h.height);
  out.PutU16(h.width);
  out.PutU8(h.num_base_slices);
  out.PutU8(h.num_enh_slices);
  out.PutU8(h.lambda_id);
  out.PutU32(static_cast<uint32_t>(stream.base.size()));
  out.PutU32(static_cast<uint32_t>(stream.enhancement.size()));
  PutSection(out, stream.base);
  if (h.mode != StreamMode::kBaseOnly) PutSection(out, stream.enhancement);
  return out.Release();
}

LayeredBitstream Parse(std::span<const uint8_t> bytes, bool base_only) {
  ByteReader in(bytes, ErrorCode::kCorruptStream, "bitstream");
  auto magic = in.GetBytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) Corrupt("bad magic");
  const uint8_t version = in.GetU8();
  if (version != kStreamVersion) {
    Corrupt("unsupported version " + std::to_string(version));
  }
  LayeredBitstream s;
  const uint8_t mode = in.GetU8();
  if (mode > 2) Corrupt("unknown mode " + std::to_string(mode));
  s.header.mode = static_cast<StreamMode>(mode);
  s.header.height = in.GetU16();
  s.header.width = in.GetU16();
  s.header.num_base_slices = in.GetU8();
  s.header.num_enh_slices = in.GetU8();
  s.header.lambda_id = in.GetU8();
  s.header.Validate();
  const uint32_t base_len = in.GetU32();
  const uint32_t enh_len = in.GetU32();
  const bool has_enh = s.header.mode != StreamMode::kBaseOnly;
  if (!has_enh && enh_len != 0) Corrupt("base-only stream with enh_len != 0");
  const uint64_t expected = kStreamHeaderSize + uint64_t{base_len} + 4 +
                            (has_enh ? uint64_t{enh_len} + 4 : 0);
  if (!base_only && expected != bytes.size()) {
    Corrupt("length fields imply " + std::to_string(expected) +
            " bytes, stream has " + std::to_string(bytes.size()));
  }
  s.base = GetSection(in, base_len, "base");
  if (has_enh && !base_only) {
    s.enhancement = GetSection(in, enh_len, "enhancement");
  }
  return s;
}

std::vector<uint8_t> StripEnhancement(std::span<const uint8_t> bytes) {
  LayeredBitstream s = Parse(bytes, /*base_only=*/true);
  s.header.mode = StreamMode::kBaseOnly;
  s.header.num_enh_slices = 0;
  s.enhancement.clear();
  return Serialize(s);
}

}  // namespace resiscale
