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

// Procedural toy images: coloured shapes on textured backgrounds with exact
// object masks. Samples are snapped to the 8-bit grid so that writing them
// as PPM/PGM and reading them back is lossless.

#ifndef RESISCALE_DATASET_H_
#define RESISCALE_DATASET_H_

#include <cstdint>
#include <string>
#include <vector>

#include "resiscale/tensor.h"

namespace resiscale {

struct Sample {
  Tensor image;  // [1,3,H,W] in [0,1]
  Tensor mask;   // [1,1,H,W], values 0 or 1
};

struct Dataset {
  std::vector<Sample> samples;

  size_t size() const { return samples.size(); }
  // Stacks the listed samples into [B,3,H,W] and [B,1,H,W].
  Tensor Images(const std::vector<size_t>& indices) const;
  Tensor Masks(const std::vector<size_t>& indices) const;
};

struct SyntheticOptions {
  int size = 64;
  // Foreground area fraction bounds; generation redraws shapes until the
  // union mask falls inside.
  double min_area = 0.05;
  double max_area = 0.60;
  int max_shapes = 3;
};

// Sample i depends only on (seed, i).
Sample GenerateSample(uint64_t seed, uint64_t index,
                      const SyntheticOptions& options = {});
Dataset GenerateDataset(size_t count, uint64_t seed,
                        const SyntheticOptions& options = {});

// Writes img_NNNNN.ppm / mask_NNNNN.pgm pairs.
void WriteDataset(const Dataset& data, const std::string& dir);
// Reads every img_*.ppm in name order with its mask_*.pgm; a missing mask
// becomes an all-ones mask.
Dataset ReadDataset(const std::string& dir);

}  // namespace resiscale

#endif  // RESISCALE_DATASET_H_
