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

// Whole-file I/O and little-endian byte packing.

#ifndef RESISCALE_FILE_UTIL_H_
#define RESISCALE_FILE_UTIL_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "resiscale/status.h"

namespace resiscale {

// Throws Error(kIo) on failure.
std::vector<uint8_t> ReadFile(const std::string& path);

// Writes to a temporary file next to `path` and renames it into place, so
// readers never observe a partial file.
void WriteFileAtomic(const std::string& path, std::span<const uint8_t> bytes);
void WriteFileAtomic(const std::string& path, const std::string& text);

class ByteWriter {
 public:
  void PutU8(uint8_t v) { bytes_.push_back(v); }
  void PutU16(uint16_t v);
  void PutU32(uint32_t v);
  void PutF32(float v);
  void PutBytes(std::span<const uint8_t> v);

  std::vector<uint8_t>& bytes() { return bytes_; }
  std::vector<uint8_t> Release() { return std::move(bytes_); }

 private:
  std::vector<uint8_t> bytes_;
};

// Bounds-checked reader; running past the end throws Error(code) naming
// `what`.
class ByteReader {
 public:
  ByteReader(std::span<const uint8_t> bytes, ErrorCode code,
             std::string what)
      : bytes_(bytes), code_(code), what_(std::move(what)) {}

  uint8_t GetU8();
  uint16_t GetU16();
  uint32_t GetU32();
  float GetF32();
  std::span<const uint8_t> GetBytes(size_t n);

  size_t position() const { return pos_; }
  size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void Need(size_t n);

  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
  ErrorCode code_;
  std::string what_;
};

}  // namespace resiscale

#endif  // RESISCALE_FILE_UTIL_H_
