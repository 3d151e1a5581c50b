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

// Dense float tensors and a reverse-mode tape.
//
// A Tensor is a shared handle: copies alias the same storage, which is what
// lets the tape refer back to intermediate values and accumulate gradients
// into parameters. Use Clone() for an independent copy.

#ifndef RESISCALE_TENSOR_H_
#define RESISCALE_TENSOR_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace resiscale {

using Shape = std::vector<int>;

size_t ShapeNumel(const Shape& shape);
std::string ShapeToString(const Shape& shape);

class Tensor {
 public:
  // An empty tensor (shape [], no storage). defined() is false.
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor Scalar(float value);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int dim(int axis) const;
  size_t numel() const;

  std::span<const float> data() const;
  std::span<float> mutable_data();
  float item() const;

  // NCHW element access; only valid for rank-4 tensors.
  float at(int n, int c, int h, int w) const;
  float& at(int n, int c, int h, int w);

  bool requires_grad() const;
  void set_requires_grad(bool requires_grad);

  bool has_grad() const;
  std::span<const float> grad() const;
  // Allocates a zero gradient on first use. Const because handles share
  // storage and gradient accumulation is the one permitted mutation.
  std::span<float> mutable_grad() const;
  void ZeroGrad() const;

  // Deep copy without gradient or tape history.
  Tensor Clone() const;

  bool SameStorage(const Tensor& other) const {
    return storage_ == other.storage_;
  }

 private:
  struct Storage {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> storage_;
};

// Records differentiable operations in execution order so that Backward can
// walk them in reverse. Single-threaded; independent tapes may run on
// different threads.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void Record(const Tensor& output, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and runs all recorded backward closures in
  // reverse order, accumulating into every requires_grad tensor. The tape
  // is cleared afterwards.
  void Backward(const Tensor& loss);

  void Clear();
  size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
};

// Makes `tape` the active tape on the current thread for the scope's
// lifetime. Operations record only while a tape is active.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* ActiveTape();

// Same as tape.Backward(loss).
void Backward(Tape& tape, const Tensor& loss);

}  // namespace resiscale

#endif  // RESISCALE_TENSOR_H_
