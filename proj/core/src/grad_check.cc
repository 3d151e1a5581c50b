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

#include "resiscale/grad_check.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "resiscale/ops.h"
#include "resiscale/status.h"

namespace resiscale {
namespace {

double Evaluate(const std::function<Tensor()>& loss_fn) {
  const Tensor loss = loss_fn();
  const double value = loss.item();
  Check(std::isfinite(value), ErrorCode::kInvalidArgument,
        "grad check: function produced a non-finite value");
  return value;
}

}  // namespace

GradCheckReport GradCheckParameterReport(
    const std::function<Tensor()>& loss_fn, Tensor parameter, double eps,
    size_t max_coords) {
  Check(eps > 0.0, ErrorCode::kInvalidArgument, "grad check: eps must be > 0");
  const bool had_requires_grad = parameter.requires_grad();
  parameter.set_requires_grad(true);
  parameter.ZeroGrad();

  std::vector<float> analytic;
  GatePattern gates;
  {
    Tape tape;
    TapeScope scope(tape);
    GateScope record(&gates);
    const Tensor loss = loss_fn();
    Check(std::isfinite(loss.item()), ErrorCode::kInvalidArgument,
          "grad check: function produced a non-finite value");
    if (loss.requires_grad()) {
      tape.Backward(loss);
      auto g = parameter.grad();
      analytic.assign(g.begin(), g.end());
    }
  }
  parameter.ZeroGrad();
  parameter.set_requires_grad(had_requires_grad);

  // Frozen evaluation; also reports whether the live gating differs.
  auto frozen = [&](bool* crossed) {
    GatePattern live;
    {
      GateScope scope(&live);
      loss_fn();
    }
    *crossed = *crossed || live.bits != gates.bits;
    gates.cursor = 0;
    gates.replay = true;
    double v;
    {
      GateScope scope(&gates);
      v = Evaluate(loss_fn);
    }
    Check(gates.cursor == gates.bits.size(), ErrorCode::kInvalidArgument,
          "grad check: activation count changed under perturbation");
    gates.replay = false;
    return v;
  };

  const size_t n = parameter.numel();
  const size_t count = max_coords == 0 ? n : std::min(n, max_coords);
  GradCheckReport report;
  auto values = parameter.mutable_data();
  for (size_t k = 0; k < count; ++k) {
    const size_t i = count == n ? k : (k * n) / count;
    const float original = values[i];
    const float up = static_cast<float>(original + eps);
    const float down = static_cast<float>(original - eps);
    bool crossed = false;
    values[i] = up;
    const double plus_free = Evaluate(loss_fn);
    const double plus = frozen(&crossed);
    values[i] = down;
    const double minus_free = Evaluate(loss_fn);
    const double minus = frozen(&crossed);
    values[i] = original;
    // Use the perturbation actually representable in float.
    const double step = static_cast<double>(up) - static_cast<double>(down);
    const double a = analytic.empty() ? 0.0 : analytic[i];
    auto rel = [a](double numeric) {
      return std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
    };
    report.max_error = std::max(report.max_error, rel((plus - minus) / step));
    report.max_error_free =
        std::max(report.max_error_free, rel((plus_free - minus_free) / step));
    report.straddled += crossed;
    ++report.checked;
  }
  return report;
}

double GradCheckParameter(const std::function<Tensor()>& loss_fn,
                          Tensor parameter, double eps, size_t max_coords) {
  return GradCheckParameterReport(loss_fn, parameter, eps, max_coords)
      .max_error;
}

double GradCheck(const std::function<Tensor(const Tensor&)>& fn,
                 const Tensor& point, double eps) {
  Tensor x = point.Clone();
  return GradCheckParameter([&]() { return fn(x); }, x, eps);
}

}  // namespace resiscale
