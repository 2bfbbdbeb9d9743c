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

#include "tts/autodiff.hpp"

#include <stdexcept>
#include <unordered_set>

namespace tts::ad {

void Node::accumulate(const Mat& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

namespace {

std::shared_ptr<Node> make_node(Mat value, std::vector<std::shared_ptr<Node>> inputs,
                                std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& in : inputs) {
    if (in->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) {
    n->inputs = std::move(inputs);
    n->backward = std::move(bw);
  }
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

// Applies an elementwise unary op whose derivative is computed from (x, y).
template <typename F, typename D>
Var unary(const Var& a, F f, D dfdx) {
  Mat y = a.value().unaryExpr(f);
  return Var(make_node(std::move(y), {a.node()}, [dfdx](Node& n) {
    const Mat& x = n.inputs[0]->value;
    Mat g(x.rows(), x.cols());
    for (Index i = 0; i < x.size(); ++i) {
      g.data()[i] = n.grad.data()[i] * dfdx(x.data()[i], n.value.data()[i]);
    }
    n.inputs[0]->accumulate(g);
  }));
}

}  // namespace

Var constant(Mat value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var leaf(Parameter& p) {
  auto n = std::make_shared<Node>();
  n->value = p.value;
  n->requires_grad = true;
  Parameter* target = &p;
  n->backward = [target](Node& self) {
    if (target->grad.size() == 0) {
      target->grad = self.grad;
    } else {
      target->grad += self.grad;
    }
  };
  return Var(std::move(n));
}

void backward(const Var& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar");
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad = Mat::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->grad.size() == 0 || !n->backward) continue;
    n->backward(*n);
  }
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimension mismatch (" +
                                std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + ")");
  }
  Mat y = a.value() * b.value();
  return Var(make_node(std::move(y), {a.node(), b.node()}, [](Node& n) {
    auto& x = n.inputs[0];
    auto& w = n.inputs[1];
    if (x->requires_grad) x->accumulate(n.grad * w->value.transpose());
    if (w->requires_grad) w->accumulate(x->value.transpose() * n.grad);
  }));
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Mat y = a.value() + b.value();
  return Var(make_node(std::move(y), {a.node(), b.node()}, [](Node& n) {
    for (auto& in : n.inputs) {
      if (in->requires_grad) in->accumulate(n.grad);
    }
  }));
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Mat y = a.value() - b.value();
  return Var(make_node(std::move(y), {a.node(), b.node()}, [](Node& n) {
    if (n.inputs[0]->requires_grad) n.inputs[0]->accumulate(n.grad);
    if (n.inputs[1]->requires_grad) n.inputs[1]->accumulate(-n.grad);
  }));
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Mat y = a.value().cwiseProduct(b.value());
  return Var(make_node(std::move(y), {a.node(), b.node()}, [](Node& n) {
    auto& x = n.inputs[0];
    auto& z = n.inputs[1];
    if (x->requires_grad) x->accumulate(n.grad.cwiseProduct(z->value));
    if (z->requires_grad) z->accumulate(n.grad.cwiseProduct(x->value));
  }));
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("add_row: expected 1x" + std::to_string(a.cols()) + " row");
  }
  Mat y = a.value().rowwise() + row.value().row(0);
  return Var(make_node(std::move(y), {a.node(), row.node()}, [](Node& n) {
    if (n.inputs[0]->requires_grad) n.inputs[0]->accumulate(n.grad);
    if (n.inputs[1]->requires_grad) n.inputs[1]->accumulate(n.grad.colwise().sum());
  }));
}

Var scale(const Var& a, double s) {
  Mat y = a.value() * s;
  return Var(make_node(std::move(y), {a.node()},
                       [s](Node& n) { n.inputs[0]->accumulate(n.grad * s); }));
}

Var add_scalar(const Var& a, double s) {
  Mat y = a.value().array() + s;
  return Var(make_node(std::move(y), {a.node()},
                       [](Node& n) { n.inputs[0]->accumulate(n.grad); }));
}

Var exp(const Var& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var square(const Var& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(const Var& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var log_floor(const Var& a, double floor) {
  return unary(
      a, [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

Var magnitude(const Var& re, const Var& im) {
  check_same_shape(re, im, "magnitude");
  Mat y = (re.value().array().square() + im.value().array().square()).sqrt().matrix();
  return Var(make_node(std::move(y), {re.node(), im.node()}, [](Node& n) {
    // d|x|/dre = re/|x|; undefined at 0, taken as 0.
    Mat inv = n.value.unaryExpr([](double m) { return m > 0.0 ? 1.0 / m : 0.0; });
    Mat g = n.grad.cwiseProduct(inv);
    if (n.inputs[0]->requires_grad) n.inputs[0]->accumulate(g.cwiseProduct(n.inputs[0]->value));
    if (n.inputs[1]->requires_grad) n.inputs[1]->accumulate(g.cwiseProduct(n.inputs[1]->value));
  }));
}

Var sum(const Var& a) {
  Mat y(1, 1);
  y(0, 0) = a.value().sum();
  return Var(make_node(std::move(y), {a.node()}, [](Node& n) {
    const auto& x = n.inputs[0]->value;
    n.inputs[0]->accumulate(Mat::Constant(x.rows(), x.cols(), n.grad(0, 0)));
  }));
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw std::invalid_argument("mean: empty input");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mean_rows(const Var& a) {
  if (a.rows() == 0) throw std::invalid_argument("mean_rows: empty input");
  Mat y = a.value().colwise().mean();
  return Var(make_node(std::move(y), {a.node()}, [](Node& n) {
    const Index t = n.inputs[0]->value.rows();
    Mat g = n.grad.replicate(t, 1) / static_cast<double>(t);
    n.inputs[0]->accumulate(g);
  }));
}

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw std::out_of_range("slice_cols: range out of bounds");
  }
  Mat y = a.value().middleCols(start, count);
  return Var(make_node(std::move(y), {a.node()}, [start, count](Node& n) {
    const auto& x = n.inputs[0]->value;
    Mat g = Mat::Zero(x.rows(), x.cols());
    g.middleCols(start, count) = n.grad;
    n.inputs[0]->accumulate(g);
  }));
}

Var slice_rows(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw std::out_of_range("slice_rows: range out of bounds");
  }
  Mat y = a.value().middleRows(start, count);
  return Var(make_node(std::move(y), {a.node()}, [start, count](Node& n) {
    const auto& x = n.inputs[0]->value;
    Mat g = Mat::Zero(x.rows(), x.cols());
    g.middleRows(start, count) = n.grad;
    n.inputs[0]->accumulate(g);
  }));
}

Var concat_cols(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("concat_cols: row mismatch");
  Mat y(a.rows(), a.cols() + b.cols());
  y << a.value(), b.value();
  const Index ca = a.cols();
  return Var(make_node(std::move(y), {a.node(), b.node()}, [ca](Node& n) {
    if (n.inputs[0]->requires_grad) n.inputs[0]->accumulate(n.grad.leftCols(ca));
    if (n.inputs[1]->requires_grad) {
      n.inputs[1]->accumulate(n.grad.rightCols(n.grad.cols() - ca));
    }
  }));
}

Var permute_cols(const Var& a, std::span<const Index> perm) {
  if (static_cast<Index>(perm.size()) != a.cols()) {
    throw std::invalid_argument("permute_cols: permutation size mismatch");
  }
  std::vector<Index> p(perm.begin(), perm.end());
  Mat y(a.rows(), a.cols());
  for (Index j = 0; j < a.cols(); ++j) y.col(j) = a.value().col(p[j]);
  return Var(make_node(std::move(y), {a.node()}, [p](Node& n) {
    Mat g(n.grad.rows(), n.grad.cols());
    for (std::size_t j = 0; j < p.size(); ++j) g.col(p[j]) = n.grad.col(j);
    n.inputs[0]->accumulate(g);
  }));
}

Var gather_rows(const Var& a, std::span<const Index> rows) {
  std::vector<Index> r(rows.begin(), rows.end());
  Mat y(static_cast<Index>(r.size()), a.cols());
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (r[i] < 0 || r[i] >= a.rows()) throw std::out_of_range("gather_rows: row out of range");
    y.row(static_cast<Index>(i)) = a.value().row(r[i]);
  }
  return Var(make_node(std::move(y), {a.node()}, [r](Node& n) {
    const auto& x = n.inputs[0]->value;
    Mat g = Mat::Zero(x.rows(), x.cols());
    for (std::size_t i = 0; i < r.size(); ++i) g.row(r[i]) += n.grad.row(static_cast<Index>(i));
    n.inputs[0]->accumulate(g);
  }));
}

Var gather(const Var& a, const IndexMat& idx) {
  const Index size = a.value().size();
  Mat y(idx.rows(), idx.cols());
  const double* src = a.value().data();
  for (Index i = 0; i < idx.size(); ++i) {
    const auto k = idx.data()[i];
    if (k >= size) throw std::out_of_range("gather: index out of range");
    y.data()[i] = k < 0 ? 0.0 : src[k];
  }
  return Var(make_node(std::move(y), {a.node()}, [idx](Node& n) {
    const auto& x = n.inputs[0]->value;
    Mat g = Mat::Zero(x.rows(), x.cols());
    for (Index i = 0; i < idx.size(); ++i) {
      const auto k = idx.data()[i];
      if (k >= 0) g.data()[k] += n.grad.data()[i];
    }
    n.inputs[0]->accumulate(g);
  }));
}

namespace {

// Source row for output row t, tap k; -1 when it falls into zero padding.
Index tap_row(Index t, Index k, Index kernel, Index dilation, Index frames, Padding padding) {
  Index src = t + (k - kernel / 2) * dilation;
  if (src >= 0 && src < frames) return src;
  if (padding == Padding::kZero) return -1;
  src %= frames;
  if (src < 0) src += frames;
  return src;
}

}  // namespace

Var im2col(const Var& a, Index kernel, Index dilation, Padding padding) {
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("im2col: kernel must be odd");
  const Index frames = a.rows();
  const Index ch = a.cols();
  Mat y = Mat::Zero(frames, kernel * ch);
  for (Index k = 0; k < kernel; ++k) {
    for (Index t = 0; t < frames; ++t) {
      const Index src = tap_row(t, k, kernel, dilation, frames, padding);
      if (src >= 0) y.block(t, k * ch, 1, ch) = a.value().row(src);
    }
  }
  return Var(make_node(std::move(y), {a.node()}, [kernel, dilation, padding](Node& n) {
    const auto& x = n.inputs[0]->value;
    const Index frames = x.rows();
    const Index ch = x.cols();
    Mat g = Mat::Zero(frames, ch);
    for (Index k = 0; k < kernel; ++k) {
      for (Index t = 0; t < frames; ++t) {
        const Index src = tap_row(t, k, kernel, dilation, frames, padding);
        if (src >= 0) g.row(src) += n.grad.block(t, k * ch, 1, ch);
      }
    }
    n.inputs[0]->accumulate(g);
  }));
}

}  // namespace tts::ad
