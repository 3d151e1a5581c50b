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

// Quality and rate metrics, Bjontegaard deltas, parameter counts and RD
// sweeps with CSV / SVG output.

#ifndef RESISCALE_EVAL_H_
#define RESISCALE_EVAL_H_

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "resiscale/dataset.h"
#include "resiscale/tensor.h"
#include "resiscale/transform.h"

namespace resiscale {

// Reported for identical images.
inline constexpr double kPsnrIdentical =
    std::numeric_limits<double>::infinity();

double MseOf(const Tensor& a, const Tensor& b);
// Mean over all elements of ((a - b) * m)^2, or over the masked elements
// when normalize_by_mask_area is set. m is [N,1,H,W] or shaped like a.
double MaskedMseOf(const Tensor& a, const Tensor& b, const Tensor& m,
                   bool normalize_by_mask_area = false);
// 10 log10(1 / mse) for samples in [0,1]; kPsnrIdentical when mse == 0.
double PsnrFromMse(double mse);
double Psnr(const Tensor& a, const Tensor& b);
double Bpp(size_t payload_bytes, int height, int width);

// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes
// with the usual three-point end conditions).
class Pchip {
 public:
  // xs strictly increasing, at least 2 points.
  Pchip(std::vector<double> xs, std::vector<double> ys);
  double operator()(double x) const;
  // Exact integral of the interpolant over [a, b] inside the knot range.
  double Integral(double a, double b) const;
  double x_min() const { return xs_.front(); }
  double x_max() const { return xs_.back(); }

 private:
  size_t Segment(double x) const;
  double SegmentAntiderivative(size_t k, double s) const;

  std::vector<double> xs_, ys_, slopes_;
};

struct RatePsnr {
  double rate = 0.0;
  double psnr = 0.0;
};
// Rate and quality both strictly increasing once sorted by rate.
using RdCurve = std::vector<RatePsnr>;

// Sorts by rate and checks the curve: at least 2 points, positive finite
// rates, finite quality, both strictly increasing. Throws kInvalidArgument.
RdCurve NormalizeCurve(RdCurve curve);

// Average rate difference in percent at equal quality (log-rate integrated
// over the common quality interval). Positive means `test` needs more bits.
double BdRate(const RdCurve& anchor, const RdCurve& test);
// Average quality difference in dB at equal log-rate.
double BdPsnr(const RdCurve& anchor, const RdCurve& test);

size_t CountParams(const std::vector<Tensor>& tensors);
size_t CountParams(const TransformWeights& w);
size_t CountParams(const Architecture& arch);

struct RdPoint {
  std::string mode;  // base | fr | pr | ff
  int num_enh_slices = 0;
  double lambda = 0.0;
  int lambda_id = -1;
  double bpp_base = 0.0;
  double bpp_enh = 0.0;
  double psnr_machine_masked = 0.0;
  double psnr_human = 0.0;

  double bpp_total() const { return bpp_base + bpp_enh; }
};

// Header: mode,N_a,lambda,bpp_base,bpp_enh,bpp_total,psnr_machine_masked,
// psnr_human. Numbers use the shortest round-trip representation.
std::string RdCsv(const std::vector<RdPoint>& points);
std::vector<RdPoint> ParseRdCsv(const std::string& text);

// Points of one (mode, N_a) cell as a curve over bpp_enh (or bpp_total).
RdCurve CurveFor(const std::vector<RdPoint>& points, const std::string& mode,
                 int num_enh_slices, bool total_rate = false);

// Quality over rate, one polyline per (mode, N_a) series.
std::string RdSvg(const std::vector<RdPoint>& points, bool total_rate = false);

// RESISCALE_THREADS when set to a positive integer, else the hardware
// concurrency (at least 1).
int EvalThreads();

// One base row plus one row per enhancement model. Each image is encoded
// to a full container and decoded again; per-image work runs on `threads`
// workers (0 = EvalThreads()) and is merged in image order.
std::vector<RdPoint> RdSweep(const Dataset& data, const TransformWeights& base,
                             const std::vector<const TransformWeights*>& models,
                             int threads = 0);

}  // namespace resiscale

#endif  // RESISCALE_EVAL_H_
