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

#ifndef RESISCALE_GRAD_CHECK_H_
#define RESISCALE_GRAD_CHECK_H_

#include <cstddef>
#include <functional>

#include "resiscale/tensor.h"

namespace resiscale {

// Compares tape gradients against central differences. Returns
// max_i |analytic_i - numeric_i| / max(1, |numeric_i|) over the checked
// coordinates. Throws if the function produces a non-finite value.
double GradCheck(const std::function<Tensor(const Tensor&)>& fn,
                 const Tensor& point, double eps);

// Same, for a scalar loss that closes over `parameter` (for example a layer
// weight inside a full model). The parameter is perturbed in place and
// restored. When max_coords is non-zero only that many evenly spaced
// coordinates are checked.
//
// LeakyRelu gating is recorded at the unperturbed point and replayed for the
// perturbed evaluations, so the difference quotient stays on the linear piece
// that contains the point.
double GradCheckParameter(const std::function<Tensor()>& loss_fn,
                          Tensor parameter, double eps,
                          size_t max_coords = 0);

struct GradCheckReport {
  double max_error = 0.0;       // gating frozen (what GradCheckParameter returns)
  double max_error_free = 0.0;  // plain central differences
  size_t straddled = 0;         // coordinates whose +-eps crossed a gate
  size_t checked = 0;
};

GradCheckReport GradCheckParameterReport(
    const std::function<Tensor()>& loss_fn, Tensor parameter, double eps,
    size_t max_coords = 0);

}  // namespace resiscale

#endif  // RESISCALE_GRAD_CHECK_H_
