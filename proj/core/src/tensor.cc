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

#include "resiscale/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "resiscale/status.h"

namespace resiscale {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return "invalid argument";
    case ErrorCode::kShapeMismatch:
      return "shape mismatch";
    case ErrorCode::kCorruptStream:
      return "corrupt stream";
    case ErrorCode::kIo:
      return "I/O error";
    case ErrorCode::kConfig:
      return "configuration error";
  }
  return "unknown error";
}

size_t ShapeNumel(const Shape& shape) {
  size_t n = 1;
  for (int extent : shape) {
    if (extent < 0) {
      Fail(ErrorCode::kShapeMismatch,
           "negative extent in shape " + ShapeToString(shape));
    }
    n *= static_cast<size_t>(extent);
  }
  return n;
}

std::string ShapeToString(const Shape& shape) {
  std::ostringstream out;
  out << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) out << "x";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

Tensor::Tensor(Shape shape, float fill) : storage_(std::make_shared<Storage>()) {
  const size_t n = ShapeNumel(shape);
  storage_->shape = std::move(shape);
  storage_->data.assign(n, fill);
}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : storage_(std::make_shared<Storage>()) {
  const size_t n = ShapeNumel(shape);
  if (n != values.size()) {
    Fail(ErrorCode::kShapeMismatch,
         "tensor of shape " + ShapeToString(shape) + " needs " +
             std::to_string(n) + " values, got " +
             std::to_string(values.size()));
  }
  storage_->shape = std::move(shape);
  storage_->data = std::move(values);
}

Tensor Tensor::Scalar(float value) { return Tensor(Shape{}, value); }

const Shape& Tensor::shape() const {
  static const Shape kEmpty;
  return storage_ ? storage_->shape : kEmpty;
}

int Tensor::dim(int axis) const {
  const Shape& s = shape();
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    Fail(ErrorCode::kShapeMismatch, "axis " + std::to_string(axis) +
                                        " out of range for shape " +
                                        ShapeToString(s));
  }
  return s[axis];
}

size_t Tensor::numel() const { return storage_ ? storage_->data.size() : 0; }

std::span<const float> Tensor::data() const {
  if (!storage_) return {};
  return storage_->data;
}

std::span<float> Tensor::mutable_data() {
  if (!storage_) return {};
  return storage_->data;
}

float Tensor::item() const {
  if (numel() != 1) {
    Fail(ErrorCode::kShapeMismatch,
         "item() on tensor of shape " + ShapeToString(shape()));
  }
  return storage_->data[0];
}

float Tensor::at(int n, int c, int h, int w) const {
  const Shape& s = storage_->shape;
  return storage_->data[((static_cast<size_t>(n) * s[1] + c) * s[2] + h) * s[3] +
                        w];
}

float& Tensor::at(int n, int c, int h, int w) {
  const Shape& s = storage_->shape;
  return storage_->data[((static_cast<size_t>(n) * s[1] + c) * s[2] + h) * s[3] +
                        w];
}

bool Tensor::requires_grad() const {
  return storage_ && storage_->requires_grad;
}

void Tensor::set_requires_grad(bool requires_grad) {
  Check(defined(), ErrorCode::kInvalidArgument,
        "set_requires_grad on an undefined tensor");
  storage_->requires_grad = requires_grad;
}

bool Tensor::has_grad() const { return storage_ && !storage_->grad.empty(); }

std::span<const float> Tensor::grad() const {
  if (!storage_) return {};
  return storage_->grad;
}

std::span<float> Tensor::mutable_grad() const {
  Check(defined(), ErrorCode::kInvalidArgument,
        "mutable_grad on an undefined tensor");
  if (storage_->grad.size() != storage_->data.size()) {
    storage_->grad.assign(storage_->data.size(), 0.0f);
  }
  return storage_->grad;
}

void Tensor::ZeroGrad() const {
  if (storage_ && !storage_->grad.empty()) {
    std::fill(storage_->grad.begin(), storage_->grad.end(), 0.0f);
  }
}

Tensor Tensor::Clone() const {
  if (!storage_) return Tensor();
  return Tensor(storage_->shape, storage_->data);
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

Tape* ActiveTape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = previous_; }

void Tape::Record(const Tensor& output, BackwardFn backward) {
  entries_.push_back(Entry{output, std::move(backward)});
}

void Tape::Backward(const Tensor& loss) {
  Check(loss.defined() && loss.numel() == 1, ErrorCode::kShapeMismatch,
        "backward needs a scalar loss, got shape " +
            ShapeToString(loss.shape()));
  Check(loss.requires_grad(), ErrorCode::kInvalidArgument,
        "loss does not depend on any parameter that requires grad");
  const bool on_tape =
      std::any_of(entries_.begin(), entries_.end(),
                  [&](const Entry& e) { return e.output.SameStorage(loss); });
  Check(on_tape, ErrorCode::kInvalidArgument,
        "loss is detached: it was not produced by an operation on this tape");

  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0f;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output.has_grad()) continue;  // no path to the loss
    it->backward();
  }
  for (const Entry& e : entries_) {
    for (float g : e.output.grad()) {
      if (!std::isfinite(g)) {
        Fail(ErrorCode::kInvalidArgument,
             "non-finite gradient encountered during backward");
      }
    }
  }
  Clear();
}

void Tape::Clear() { entries_.clear(); }

void Backward(Tape& tape, const Tensor& loss) { tape.Backward(loss); }

}  // namespace resiscale
