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

#include "resiscale/eval.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <map>
#include <sstream>
#include <thread>

#include "resiscale/scalable.h"
#include "resiscale/status.h"

namespace resiscale {
namespace {

std::string FormatDouble(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double ParseDouble(const std::string& s, int line) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    Fail(ErrorCode::kIo, "CSV line " + std::to_string(line) +
                             ": bad number '" + s + "'");
  }
  return v;
}

int ParseInt(const std::string& s, int line) {
  int v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    Fail(ErrorCode::kIo, "CSV line " + std::to_string(line) +
                             ": bad integer '" + s + "'");
  }
  return v;
}

constexpr const char* kCsvHeader =
    "mode,N_a,lambda,bpp_base,bpp_enh,bpp_total,psnr_machine_masked,"
    "psnr_human";

std::string ModeName(const TransformWeights& w) {
  return RoleName(w.arch().role);
}

}  // namespace

double MseOf(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    Fail(ErrorCode::kShapeMismatch, "mse: " + ShapeToString(a.shape()) +
                                        " vs " + ShapeToString(b.shape()));
  }
  Check(a.numel() > 0, ErrorCode::kInvalidArgument, "mse of empty tensors");
  auto ad = a.data();
  auto bd = b.data();
  double sum = 0.0;
  for (size_t i = 0; i < ad.size(); ++i) {
    const double d = static_cast<double>(ad[i]) - bd[i];
    sum += d * d;
  }
  return sum / static_cast<double>(ad.size());
}

double MaskedMseOf(const Tensor& a, const Tensor& b, const Tensor& m,
                   bool normalize_by_mask_area) {
  if (a.shape() != b.shape() || a.rank() != 4) {
    Fail(ErrorCode::kShapeMismatch, "masked mse: " + ShapeToString(a.shape()) +
                                        " vs " + ShapeToString(b.shape()));
  }
  const bool broadcast = m.shape() == Shape{a.dim(0), 1, a.dim(2), a.dim(3)};
  if (!broadcast && m.shape() != a.shape()) {
    Fail(ErrorCode::kShapeMismatch,
         "masked mse: mask " + ShapeToString(m.shape()) + " vs image " +
             ShapeToString(a.shape()));
  }
  const size_t plane = static_cast<size_t>(a.dim(2)) * a.dim(3);
  const int channels = a.dim(1);
  auto ad = a.data();
  auto bd = b.data();
  auto md = m.data();
  double sum = 0.0, area = 0.0;
  for (size_t i = 0; i < ad.size(); ++i) {
    const size_t mi =
        broadcast ? (i / (plane * channels)) * plane + i % plane : i;
    const double d = (static_cast<double>(ad[i]) - bd[i]) * md[mi];
    sum += d * d;
    area += md[mi] != 0.0f;
  }
  if (!normalize_by_mask_area) return sum / static_cast<double>(ad.size());
  return area > 0.0 ? sum / area : 0.0;
}

double PsnrFromMse(double mse) {
  Check(mse >= 0.0 && !std::isnan(mse), ErrorCode::kInvalidArgument,
        "psnr: mse must be non-negative");
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(1.0 / mse);
}

double Psnr(const Tensor& a, const Tensor& b) {
  return PsnrFromMse(MseOf(a, b));
}

double Bpp(size_t payload_bytes, int height, int width) {
  Check(height > 0 && width > 0, ErrorCode::kInvalidArgument,
        "bpp: frame must be non-empty");
  return 8.0 * static_cast<double>(payload_bytes) /
         (static_cast<double>(height) * width);
}

Pchip::Pchip(std::vector<double> xs, std::vector<double> ys)
    : xs_(std::move(xs)), ys_(std::move(ys)) {
  const size_t n = xs_.size();
  Check(n >= 2 && ys_.size() == n, ErrorCode::kInvalidArgument,
        "pchip: need at least two (x, y) pairs");
  for (size_t i = 1; i < n; ++i) {
    Check(xs_[i] > xs_[i - 1], ErrorCode::kInvalidArgument,
          "pchip: x must be strictly increasing");
  }
  std::vector<double> h(n - 1), delta(n - 1);
  for (size_t i = 0; i + 1 < n; ++i) {
    h[i] = xs_[i + 1] - xs_[i];
    delta[i] = (ys_[i + 1] - ys_[i]) / h[i];
  }
  slopes_.assign(n, 0.0);
  if (n == 2) {
    slopes_[0] = slopes_[1] = delta[0];
    return;
  }
  for (size_t k = 1; k + 1 < n; ++k) {
    if (delta[k - 1] * delta[k] <= 0.0) continue;
    const double w1 = 2.0 * h[k] + h[k - 1];
    const double w2 = h[k] + 2.0 * h[k - 1];
    slopes_[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
  }
  auto end_slope = [](double h0, double h1, double d0, double d1) {
    double d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (std::signbit(d) != std::signbit(d0) || d0 == 0.0) {
      d = 0.0;
    } else if (std::signbit(d0) != std::signbit(d1) &&
               std::abs(d) > 3.0 * std::abs(d0)) {
      d = 3.0 * d0;
    }
    return d;
  };
  slopes_[0] = end_slope(h[0], h[1], delta[0], delta[1]);
  slopes_[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
}

size_t Pchip::Segment(double x) const {
  auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
  size_t k = it == xs_.begin() ? 0 : static_cast<size_t>(it - xs_.begin()) - 1;
  return std::min(k, xs_.size() - 2);
}

double Pchip::operator()(double x) const {
  const size_t k = Segment(x);
  const double h = xs_[k + 1] - xs_[k];
  const double delta = (ys_[k + 1] - ys_[k]) / h;
  const double s = x - xs_[k];
  const double c2 = (3.0 * delta - 2.0 * slopes_[k] - slopes_[k + 1]) / h;
  const double c3 = (slopes_[k] + slopes_[k + 1] - 2.0 * delta) / (h * h);
  return ys_[k] + s * (slopes_[k] + s * (c2 + s * c3));
}

double Pchip::SegmentAntiderivative(size_t k, double s) const {
  const double h = xs_[k + 1] - xs_[k];
  const double delta = (ys_[k + 1] - ys_[k]) / h;
  const double c2 = (3.0 * delta - 2.0 * slopes_[k] - slopes_[k + 1]) / h;
  const double c3 = (slopes_[k] + slopes_[k + 1] - 2.0 * delta) / (h * h);
  return s * (ys_[k] + s * (slopes_[k] / 2.0 + s * (c2 / 3.0 + s * c3 / 4.0)));
}

double Pchip::Integral(double a, double b) const {
  Check(a >= x_min() && b <= x_max() && a <= b, ErrorCode::kInvalidArgument,
        "pchip: integration bounds outside the knot range");
  double total = 0.0;
  for (size_t k = Segment(a); k + 1 < xs_.size() && xs_[k] < b; ++k) {
    const double lo = std::max(a, xs_[k]) - xs_[k];
    const double hi = std::min(b, xs_[k + 1]) - xs_[k];
    if (hi > lo) {
      total += SegmentAntiderivative(k, hi) - SegmentAntiderivative(k, lo);
    }
  }
  return total;
}

RdCurve NormalizeCurve(RdCurve curve) {
  Check(curve.size() >= 2, ErrorCode::kInvalidArgument,
        "RD curve needs at least two points");
  std::sort(curve.begin(), curve.end(),
            [](const RatePsnr& a, const RatePsnr& b) { return a.rate < b.rate; });
  for (size_t i = 0; i < curve.size(); ++i) {
    Check(std::isfinite(curve[i].rate) && curve[i].rate > 0.0 &&
              std::isfinite(curve[i].psnr),
          ErrorCode::kInvalidArgument,
          "RD curve points need positive finite rate and finite quality");
    if (i > 0 && (curve[i].rate <= curve[i - 1].rate ||
                  curve[i].psnr <= curve[i - 1].psnr)) {
      Fail(ErrorCode::kInvalidArgument,
           "RD curve is not monotone: rate and quality must both increase");
    }
  }
  return curve;
}

double BdRate(const RdCurve& anchor_in, const RdCurve& test_in) {
  const RdCurve anchor = NormalizeCurve(anchor_in);
  const RdCurve test = NormalizeCurve(test_in);
  auto fit = [](const RdCurve& c) {
    std::vector<double> q, r;
    for (const RatePsnr& p : c) {
      q.push_back(p.psnr);
      r.push_back(std::log(p.rate));
    }
    return Pchip(q, r);
  };
  const Pchip a = fit(anchor), t = fit(test);
  const double lo = std::max(a.x_min(), t.x_min());
  const double hi = std::min(a.x_max(), t.x_max());
  Check(lo < hi, ErrorCode::kInvalidArgument,
        "BD-rate: the curves share no quality interval");
  const double avg = (t.Integral(lo, hi) - a.Integral(lo, hi)) / (hi - lo);
  return 100.0 * (std::exp(avg) - 1.0);
}

double BdPsnr(const RdCurve& anchor_in, const RdCurve& test_in) {
  const RdCurve anchor = NormalizeCurve(anchor_in);
  const RdCurve test = NormalizeCurve(test_in);
  auto fit = [](const RdCurve& c) {
    std::vector<double> r, q;
    for (const RatePsnr& p : c) {
      r.push_back(std::log(p.rate));
      q.push_back(p.psnr);
    }
    return Pchip(r, q);
  };
  const Pchip a = fit(anchor), t = fit(test);
  const double lo = std::max(a.x_min(), t.x_min());
  const double hi = std::min(a.x_max(), t.x_max());
  Check(lo < hi, ErrorCode::kInvalidArgument,
        "BD-PSNR: the curves share no rate interval");
  return (t.Integral(lo, hi) - a.Integral(lo, hi)) / (hi - lo);
}

size_t CountParams(const std::vector<Tensor>& tensors) {
  size_t n = 0;
  for (const Tensor& t : tensors) n += t.numel();
  return n;
}

size_t CountParams(const TransformWeights& w) {
  size_t n = 0;
  for (const auto& [name, t] : w.tensors()) n += t.numel();
  return n;
}

size_t CountParams(const Architecture& arch) {
  size_t n = 0;
  for (const LayerSpec& s : LayerSpecs(arch)) n += ShapeNumel(s.shape);
  return n;
}

std::string RdCsv(const std::vector<RdPoint>& points) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const RdPoint& p : points) {
    out += p.mode + "," + std::to_string(p.num_enh_slices) + "," +
           FormatDouble(p.lambda) + "," + FormatDouble(p.bpp_base) + "," +
           FormatDouble(p.bpp_enh) + "," + FormatDouble(p.bpp_total()) + "," +
           FormatDouble(p.psnr_machine_masked) + "," +
           FormatDouble(p.psnr_human) + "\n";
  }
  return out;
}

std::vector<RdPoint> ParseRdCsv(const std::string& text) {
  std::stringstream in(text);
  std::string line;
  Check(static_cast<bool>(std::getline(in, line)), ErrorCode::kIo,
        "CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  Check(line == kCsvHeader, ErrorCode::kIo,
        "CSV header does not match the RD schema");
  std::vector<RdPoint> points;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 8) {
      Fail(ErrorCode::kIo,
           "CSV line " + std::to_string(number) + ": expected 8 fields");
    }
    RdPoint p;
    p.mode = f[0];
    p.num_enh_slices = ParseInt(f[1], number);
    p.lambda = ParseDouble(f[2], number);
    p.lambda_id = LambdaIdFor(p.lambda);
    p.bpp_base = ParseDouble(f[3], number);
    p.bpp_enh = ParseDouble(f[4], number);
    ParseDouble(f[5], number);  // bpp_total is derived
    p.psnr_machine_masked = ParseDouble(f[6], number);
    p.psnr_human = ParseDouble(f[7], number);
    points.push_back(p);
  }
  return points;
}

RdCurve CurveFor(const std::vector<RdPoint>& points, const std::string& mode,
                 int num_enh_slices, bool total_rate) {
  RdCurve c;
  for (const RdPoint& p : points) {
    if (p.mode == mode && p.num_enh_slices == num_enh_slices) {
      c.push_back({total_rate ? p.bpp_total() : p.bpp_enh, p.psnr_human});
    }
  }
  std::sort(c.begin(), c.end(),
            [](const RatePsnr& a, const RatePsnr& b) { return a.rate < b.rate; });
  return c;
}

std::string RdSvg(const std::vector<RdPoint>& points, bool total_rate) {
  constexpr double kW = 640, kH = 480, kLeft = 70, kRight = 20, kTop = 20,
                   kBottom = 50;
  std::map<std::string, RdCurve> series;
  for (const RdPoint& p : points) {
    if (p.mode == "base" || !std::isfinite(p.psnr_human)) continue;
    series[p.mode + " N_a=" + std::to_string(p.num_enh_slices)].push_back(
        {total_rate ? p.bpp_total() : p.bpp_enh, p.psnr_human});
  }
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (auto& [name, c] : series) {
    std::sort(c.begin(), c.end(), [](const RatePsnr& a, const RatePsnr& b) {
      return a.rate < b.rate;
    });
    for (const RatePsnr& p : c) {
      x0 = std::min(x0, p.rate);
      x1 = std::max(x1, p.rate);
      y0 = std::min(y0, p.psnr);
      y1 = std::max(y1, p.psnr);
    }
  }
  if (series.empty()) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  auto px = [&](double x) {
    return kLeft + (x - x0) / (x1 - x0) * (kW - kLeft - kRight);
  };
  auto py = [&](double y) {
    return kH - kBottom - (y - y0) / (y1 - y0) * (kH - kTop - kBottom);
  };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\""
    << kW << "\" height=\"" << kH << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\""
    << kW - kRight << "\" y2=\"" << kH - kBottom << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
    << "\" y2=\"" << kH - kBottom << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    s << "<text x=\"" << px(xv) << "\" y=\"" << kH - kBottom + 18
      << "\" font-size=\"11\" text-anchor=\"middle\">" << FormatDouble(
             std::round(xv * 1000) / 1000)
      << "</text>\n";
    s << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(yv) + 4
      << "\" font-size=\"11\" text-anchor=\"end\">"
      << FormatDouble(std::round(yv * 100) / 100) << "</text>\n";
  }
  s << "<text x=\"" << (kW + kLeft) / 2 << "\" y=\"" << kH - 10
    << "\" font-size=\"13\" text-anchor=\"middle\">"
    << (total_rate ? "total bpp" : "enhancement bpp") << "</text>\n"
    << "<text x=\"16\" y=\"" << kH / 2
    << "\" font-size=\"13\" transform=\"rotate(-90 16 " << kH / 2
    << ")\" text-anchor=\"middle\">PSNR (dB)</text>\n";
  int idx = 0;
  for (const auto& [name, c] : series) {
    const char* color = kColors[idx % 8];
    s << "<polyline fill=\"none\" stroke=\"" << color
      << "\" stroke-width=\"2\" points=\"";
    for (const RatePsnr& p : c) s << px(p.rate) << "," << py(p.psnr) << " ";
    s << "\"/>\n";
    s << "<text x=\"" << kLeft + 10 << "\" y=\"" << kTop + 14 * (idx + 1)
      << "\" font-size=\"12\" fill=\"" << color << "\">" << name
      << "</text>\n";
    ++idx;
  }
  s << "</svg>\n";
  return s.str();
}

int EvalThreads() {
  if (const char* env = std::getenv("RESISCALE_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<RdPoint> RdSweep(const Dataset& data, const TransformWeights& base,
                             const std::vector<const TransformWeights*>& models,
                             int threads) {
  Check(data.size() > 0, ErrorCode::kConfig, "evaluation set is empty");
  if (threads <= 0) threads = EvalThreads();
  threads = std::min<int>(threads, static_cast<int>(data.size()));

  struct ImageResult {
    size_t base_bytes = 0, enh_bytes = 0;
    double mse_machine_masked = 0.0, mse_base = 0.0, mse_human = 0.0;
    double pixels = 0.0;
  };
  // Column 0 is the base-only stream, column j + 1 model j.
  const size_t columns = models.size() + 1;
  std::vector<ImageResult> results(data.size() * columns);

  auto work = [&](size_t i) {
    const Sample& s = data.samples[i];
    for (size_t j = 0; j < columns; ++j) {
      const TransformWeights* enh = j == 0 ? nullptr : models[j - 1];
      const EncodedImage e = EncodeImage(s.image, base, enh);
      const DecodedImage d = DecodeImage(e.bytes, base, enh);
      ImageResult& r = results[i * columns + j];
      r.base_bytes = e.base_payload_bytes;
      r.enh_bytes = e.enh_payload_bytes;
      r.pixels = static_cast<double>(s.image.dim(2)) * s.image.dim(3);
      r.mse_machine_masked = MaskedMseOf(s.image, d.base.x_hat, s.mask);
      r.mse_base = MseOf(s.image, d.base.x_hat);
      r.mse_human = enh ? MseOf(s.image, d.human) : r.mse_base;
    }
  };
  if (threads == 1) {
    for (size_t i = 0; i < data.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t]() {
        try {
          for (size_t i = t; i < data.size(); i += threads) work(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (std::thread& th : pool) th.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::vector<RdPoint> points;
  for (size_t j = 0; j < columns; ++j) {
    double bytes_b = 0, bytes_e = 0, pixels = 0, mm = 0, mh = 0;
    for (size_t i = 0; i < data.size(); ++i) {
      const ImageResult& r = results[i * columns + j];
      bytes_b += r.base_bytes;
      bytes_e += r.enh_bytes;
      pixels += r.pixels;
      mm += r.mse_machine_masked;
      mh += r.mse_human;
    }
    const double n = static_cast<double>(data.size());
    RdPoint p;
    const TransformWeights* enh = j == 0 ? nullptr : models[j - 1];
    const TransformWeights& w = enh ? *enh : base;
    p.mode = j == 0 ? "base" : ModeName(w);
    p.num_enh_slices = enh ? enh->arch().num_slices() : 0;
    p.lambda = w.arch().lambda;
    p.lambda_id = w.arch().lambda_id;
    p.bpp_base = 8.0 * bytes_b / pixels;
    p.bpp_enh = 8.0 * bytes_e / pixels;
    p.psnr_machine_masked = PsnrFromMse(mm / n);
    p.psnr_human = PsnrFromMse(mh / n);
    points.push_back(p);
  }
  return points;
}

}  // namespace resiscale
