/*
 * Copyright 2026 The zistorm Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef ZISTORM_AUTOGRAD_HPP_
#define ZISTORM_AUTOGRAD_HPP_

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "zistorm/tensor.hpp"

// Tape-based reverse-mode differentiation over dense tensors.
//
// A Tape owns every intermediate value recorded while a computation runs.
// Var is a lightweight handle into the tape; it is only valid while the
// tape that created it is alive. Tapes are single-use and not thread-safe,
// but independent tapes may be used concurrently.
namespace zistorm::ad {

class Tape;

class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t numel() const { return value().numel(); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  // Receives the gradient flowing into the node and the node's own value.
  using Backward =
      std::function<void(Tape&, const Tensor& grad_out, const Tensor& out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  // Records an op output. The node requires grad iff any input does; the
  // backward closure is dropped otherwise.
  Var record(Tensor value, std::span<const Var> inputs, Backward backward);

  const Tensor& value(Var v) const { return nodes_[v.id_].value; }
  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }

  void accumulate(Var target, const Tensor& grad);
  // Direct access to a node's gradient buffer (allocated on demand). Only
  // call for nodes that require grad.
  Tensor& grad_buffer(Var target);

  // Reverse pass from a one-element root.
  void backward(Var root, double seed = 1.0);
  // Gradient of the last backward() root with respect to v; zeros when v
  // was not reached.
  Tensor grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
};

Shape broadcast_shapes(const Shape& a, const Shape& b);
// Sums a broadcast gradient back down to `target` shape.
Tensor reduce_to_shape(const Tensor& grad, const Shape& target);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double s);
Var operator+(double s, Var a);
Var operator-(Var a, double s);
Var operator-(double s, Var a);
Var operator*(Var a, double s);
Var operator*(double s, Var a);
Var operator/(Var a, double s);
Var operator/(double s, Var a);

Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var square(Var a);
Var abs(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var softplus(Var a);
Var lgamma(Var a);

// Batched matrix product over the last two axes. Leading axes must match,
// or one operand must be a plain matrix that is broadcast over the other.
Var matmul(Var a, Var b);
// x (..., in) times weight (in, out) plus bias (out).
Var linear(Var x, Var weight, Var bias);

Var reshape(Var a, Shape shape);
Var permute(Var a, std::vector<std::size_t> perm);
Var sum(Var a, const std::vector<std::size_t>& axes, bool keepdim = false);
Var mean(Var a, const std::vector<std::size_t>& axes, bool keepdim = false);
Var sum(Var a);
Var mean(Var a);
Var softmax_last(Var a);
// Normalizes over the last axis without affine parameters.
Var layer_norm_last(Var a, double eps = 1e-5);
// Removes `axis`, keeping slice `index`.
Var select(Var a, std::size_t axis, std::size_t index);
// Stacks equally shaped tensors along a new axis.
Var stack(std::span<const Var> parts, std::size_t axis);
// Same value, no gradient path.
Var detach(Var a);

}  // namespace zistorm::ad

#endif  // ZISTORM_AUTOGRAD_HPP_
