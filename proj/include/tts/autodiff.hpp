// Copyright 2026 The transfer-tts Authors
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

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// Every network in this project is expressed as a graph of `Var` values. A
// graph is built eagerly during the forward pass and discarded after
// `backward`. Values are row-per-frame matrices: [frames x channels].

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tts::ad {

using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;
// Flat (column-major) source indices; -1 selects an implicit zero.
using IndexMat = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

struct Node {
  Mat value;
  Mat grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Propagates `grad` of this node into its inputs.
  std::function<void(Node&)> backward;

  void accumulate(const Mat& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Mat& value() const { return node_->value; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  double scalar() const { return node_->value(0, 0); }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// A trainable tensor together with its accumulated gradient.
struct Parameter {
  Mat value;
  Mat grad;

  void zero_grad() { grad = Mat::Zero(value.rows(), value.cols()); }
};

Var constant(Mat value);
/// Leaf bound to `p`; backward accumulates into `p.grad`.
Var leaf(Parameter& p);

/// Runs reverse accumulation from a 1x1 `loss`.
void backward(const Var& loss);

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// Adds a 1 x cols row to every row of `a`.
Var add_row(const Var& a, const Var& row);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

Var exp(const Var& a);
Var log(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
Var square(const Var& a);
Var abs(const Var& a);
/// Clamp with zero gradient outside [lo, hi].
Var clamp(const Var& a, double lo, double hi);
/// log(max(a, floor)); zero gradient where floored.
Var log_floor(const Var& a, double floor);
/// sqrt(re^2 + im^2), elementwise.
Var magnitude(const Var& re, const Var& im);

Var sum(const Var& a);
Var mean(const Var& a);
/// Column means: [T x C] -> [1 x C].
Var mean_rows(const Var& a);

Var slice_cols(const Var& a, Index start, Index count);
Var slice_rows(const Var& a, Index start, Index count);
Var concat_cols(const Var& a, const Var& b);
Var permute_cols(const Var& a, std::span<const Index> perm);
Var gather_rows(const Var& a, std::span<const Index> rows);
/// out(i, j) = flat(a)[idx(i, j)], or 0 where idx(i, j) < 0.
Var gather(const Var& a, const IndexMat& idx);

enum class Padding { kZero, kCircular };

/// Unfolds [T x C] into [T x (kernel * C)] for a stride-1, "same" padded
/// 1-D convolution. Column block k holds the frame at offset k - kernel/2.
Var im2col(const Var& a, Index kernel, Index dilation, Padding padding);

}  // namespace tts::ad
