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

#include "zistorm/autograd.hpp"

#include <algorithm>
#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace zistorm::ad {
namespace {

// Strides of `in` aligned to the rank of `out`; zero on broadcast axes.
Shape aligned_strides(const Shape& in, const Shape& out) {
  Shape strides(out.size(), 0);
  const Shape in_strides = row_major_strides(in);
  const std::size_t shift = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] != 1) strides[shift + i] = in_strides[i];
  }
  return strides;
}

// Calls f(out_offset, a_offset, b_offset) for every element of `out`.
template <class F>
void for_each_broadcast(const Shape& out, const Shape& sa, const Shape& sb,
                        F&& f) {
  const std::size_t n = shape_numel(out);
  const std::size_t r = out.size();
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t o = 0; o < n; ++o) {
    f(o, ia, ib);
    for (std::size_t ax = r; ax-- > 0;) {
      if (++idx[ax] < out[ax]) {
        ia += sa[ax];
        ib += sb[ax];
        break;
      }
      ia -= sa[ax] * (out[ax] - 1);
      ib -= sb[ax] * (out[ax] - 1);
      idx[ax] = 0;
    }
  }
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::logic_error("operation on an unbound Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape() || !a.valid()) {
    throw std::logic_error("operands recorded on different tapes");
  }
  return *a.tape();
}

template <class F, class GA, class GB>
Var binary_op(Var a, Var b, F f, GA ga, GB gb) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool same = av.shape() == bv.shape();
  const Shape out_shape = same ? av.shape() : broadcast_shapes(av.shape(), bv.shape());
  Tensor out(out_shape);
  Shape sa;
  Shape sb;
  if (same) {
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = f(av[i], bv[i]);
  } else {
    sa = aligned_strides(av.shape(), out_shape);
    sb = aligned_strides(bv.shape(), out_shape);
    for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t ia,
                                              std::size_t ib) {
      out[o] = f(av[ia], bv[ib]);
    });
  }
  const Var inputs[] = {a, b};
  return tape.record(
      std::move(out), inputs,
      [a, b, same, sa, sb, ga, gb](Tape& t, const Tensor& g, const Tensor& out) {
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        Tensor* da = t.requires_grad(a) ? &t.grad_buffer(a) : nullptr;
        Tensor* db = t.requires_grad(b) ? &t.grad_buffer(b) : nullptr;
        if (same) {
          for (std::size_t i = 0; i < g.numel(); ++i) {
            if (da) (*da)[i] += ga(g[i], av[i], bv[i], out[i]);
            if (db) (*db)[i] += gb(g[i], av[i], bv[i], out[i]);
          }
          return;
        }
        for_each_broadcast(out.shape(), sa, sb, [&](std::size_t o, std::size_t ia,
                                                    std::size_t ib) {
          if (da) (*da)[ia] += ga(g[o], av[ia], bv[ib], out[o]);
          if (db) (*db)[ib] += gb(g[o], av[ia], bv[ib], out[o]);
        });
      });
}

// d(x, y) is the local derivative given input x and output y.
template <class F, class D>
Var unary_op(Var a, F f, D d) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = f(av[i]);
  const Var inputs[] = {a};
  return tape.record(std::move(out), inputs,
                     [a, d](Tape& t, const Tensor& g, const Tensor& out) {
                       const Tensor& av = t.value(a);
                       Tensor& da = t.grad_buffer(a);
                       for (std::size_t i = 0; i < g.numel(); ++i) {
                         da[i] += g[i] * d(av[i], out[i]);
                       }
                     });
}

Var scalar_like(Var a, double s) { return tape_of(a).constant(Tensor::scalar(s)); }

// C[M,N] += A[M,K] * B[K,N]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// A[M,K] += G[M,N] * B[K,N]^T
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* g,
             const double* b, double* a) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      a[i * k + p] += acc;
    }
  }
}

// B[K,N] += A[M,K]^T * G[M,N]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* g, double* b) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
    }
  }
}

}  // namespace

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("value() on an unbound Var");
  return tape_->value(*this);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  return push(std::move(node));
}

Var Tape::variable(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = true;
  return push(std::move(node));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward) {
  Node node;
  node.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw std::logic_error("input from a foreign tape");
    node.requires_grad = node.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  return push(std::move(node));
}

Tensor& Tape::grad_buffer(Var target) {
  Node& node = nodes_[target.id_];
  if (!node.has_grad) {
    node.grad = Tensor(node.value.shape(), 0.0);
    node.has_grad = true;
  }
  return node.grad;
}

void Tape::accumulate(Var target, const Tensor& grad) {
  if (!requires_grad(target)) return;
  Tensor& buf = grad_buffer(target);
  if (buf.shape() != grad.shape()) {
    throw std::logic_error("gradient shape " + shape_str(grad.shape()) +
                           " does not match value shape " +
                           shape_str(buf.shape()));
  }
  for (std::size_t i = 0; i < buf.numel(); ++i) buf[i] += grad[i];
}

void Tape::backward(Var root, double seed) {
  if (root.tape_ != this) throw std::logic_error("root from a foreign tape");
  if (nodes_[root.id_].value.numel() != 1) {
    throw std::invalid_argument("non-scalar loss of shape " +
                                shape_str(nodes_[root.id_].value.shape()));
  }
  for (auto& node : nodes_) {
    node.has_grad = false;
    node.grad = Tensor();
  }
  Node& r = nodes_[root.id_];
  if (!r.requires_grad) return;
  r.grad = Tensor(r.value.shape(), seed);
  r.has_grad = true;
  for (int i = root.id_; i >= 0; --i) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.backward) continue;
    node.backward(*this, node.grad, node.value);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& node = nodes_[v.id_];
  if (!node.has_grad) return Tensor(node.value.shape(), 0.0);
  return node.grad;
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw std::invalid_argument("cannot broadcast " + shape_str(a) + " with " +
                                  shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

Tensor reduce_to_shape(const Tensor& grad, const Shape& target) {
  if (grad.shape() == target) return grad;
  const Shape strides = aligned_strides(target, grad.shape());
  Tensor out(target);
  for_each_broadcast(grad.shape(), strides, strides,
                     [&](std::size_t o, std::size_t it, std::size_t) {
                       out[it] += grad[o];
                     });
  return out;
}

Var operator+(Var a, Var b) {
  return binary_op(
      a, b, [](double x, double y) { return x + y; },
      [](double g, double, double, double) { return g; },
      [](double g, double, double, double) { return g; });
}

Var operator-(Var a, Var b) {
  return binary_op(
      a, b, [](double x, double y) { return x - y; },
      [](double g, double, double, double) { return g; },
      [](double g, double, double, double) { return -g; });
}

Var operator*(Var a, Var b) {
  return binary_op(
      a, b, [](double x, double y) { return x * y; },
      [](double g, double, double y, double) { return g * y; },
      [](double g, double x, double, double) { return g * x; });
}

Var operator/(Var a, Var b) {
  return binary_op(
      a, b, [](double x, double y) { return x / y; },
      [](double g, double, double y, double) { return g / y; },
      [](double g, double, double y, double out) { return -g * out / y; });
}

Var operator-(Var a) {
  return unary_op(
      a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var operator+(Var a, double s) { return a + scalar_like(a, s); }
Var operator+(double s, Var a) { return scalar_like(a, s) + a; }
Var operator-(Var a, double s) { return a - scalar_like(a, s); }
Var operator-(double s, Var a) { return scalar_like(a, s) - a; }
Var operator*(Var a, double s) { return a * scalar_like(a, s); }
Var operator*(double s, Var a) { return scalar_like(a, s) * a; }
Var operator/(Var a, double s) { return a / scalar_like(a, s); }
Var operator/(double s, Var a) { return scalar_like(a, s) / a; }

Var exp(Var a) {
  return unary_op(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Var log(Var a) {
  return unary_op(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var sqrt(Var a) {
  return unary_op(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Var square(Var a) {
  return unary_op(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Var abs(Var a) {
  return unary_op(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var sigmoid(Var a) {
  return unary_op(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary_op(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var softplus(Var a) {
  return unary_op(
      a,
      [](double x) {
        return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
      },
      [](double x, double) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

Var lgamma(Var a) {
  return unary_op(
      a, [](double x) { return std::lgamma(x); },
      [](double x, double) { return boost::math::digamma(x); });
}

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2) {
    throw std::invalid_argument("matmul needs rank >= 2 operands");
  }
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as[as.size() - 1];
  const std::size_t n = bs[bs.size() - 1];
  if (bs[bs.size() - 2] != k) {
    throw std::invalid_argument("matmul inner dimension mismatch: " +
                                shape_str(as) + " x " + shape_str(bs));
  }
  const Shape lead_a(as.begin(), as.end() - 2);
  const Shape lead_b(bs.begin(), bs.end() - 2);
  Shape out_shape;
  std::size_t batch = 1;
  // 0: b is a matrix; 1: a is a matrix; 2: matching leading axes.
  int mode = 0;
  if (bs.size() == 2) {
    out_shape = lead_a;
    batch = shape_numel(lead_a);
  } else if (as.size() == 2) {
    mode = 1;
    out_shape = lead_b;
    batch = shape_numel(lead_b);
  } else {
    if (lead_a != lead_b) {
      throw std::invalid_argument("matmul batch mismatch: " + shape_str(as) +
                                  " x " + shape_str(bs));
    }
    mode = 2;
    out_shape = lead_a;
    batch = shape_numel(lead_a);
  }
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor out(out_shape);
  const double* ad = a.value().data().data();
  const double* bd = b.value().data().data();
  double* od = out.data().data();
  if (mode == 0) {
    gemm_nn(batch * m, k, n, ad, bd, od);
  } else {
    for (std::size_t q = 0; q < batch; ++q) {
      const double* aq = mode == 1 ? ad : ad + q * m * k;
      gemm_nn(m, k, n, aq, bd + q * k * n, od + q * m * n);
    }
  }
  const Var inputs[] = {a, b};
  return tape.record(
      std::move(out), inputs,
      [a, b, m, k, n, batch, mode](Tape& t, const Tensor& g, const Tensor&) {
        const double* ad = t.value(a).data().data();
        const double* bd = t.value(b).data().data();
        const double* gd = g.data().data();
        double* da = t.requires_grad(a) ? t.grad_buffer(a).data().data() : nullptr;
        double* db = t.requires_grad(b) ? t.grad_buffer(b).data().data() : nullptr;
        if (mode == 0) {
          if (da) gemm_nt(batch * m, k, n, gd, bd, da);
          if (db) gemm_tn(batch * m, k, n, ad, gd, db);
          return;
        }
        for (std::size_t q = 0; q < batch; ++q) {
          const double* aq = mode == 1 ? ad : ad + q * m * k;
          const double* gq = gd + q * m * n;
          if (da) gemm_nt(m, k, n, gq, bd + q * k * n, mode == 1 ? da : da + q * m * k);
          if (db) gemm_tn(m, k, n, aq, gq, db + q * k * n);
        }
      });
}

Var linear(Var x, Var weight, Var bias) { return matmul(x, weight) + bias; }

Var reshape(Var a, Shape shape) {
  Tape& tape = tape_of(a);
  Tensor out = a.value().reshaped(std::move(shape));
  const Var inputs[] = {a};
  return tape.record(std::move(out), inputs,
                     [a](Tape& t, const Tensor& g, const Tensor&) {
                       Tensor& da = t.grad_buffer(a);
                       for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i];
                     });
}

Var permute(Var a, std::vector<std::size_t> perm) {
  Tape& tape = tape_of(a);
  Tensor out = zistorm::permute(a.value(), perm);
  std::vector<std::size_t> inverse(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inverse[perm[i]] = i;
  const Var inputs[] = {a};
  return tape.record(std::move(out), inputs,
                     [a, inverse](Tape& t, const Tensor& g, const Tensor&) {
                       t.accumulate(a, zistorm::permute(g, inverse));
                     });
}

Var sum(Var a, const std::vector<std::size_t>& axes, bool keepdim) {
  Tape& tape = tape_of(a);
  const Shape& in = a.shape();
  Shape kept = in;
  for (auto ax : axes) {
    if (ax >= in.size()) throw std::invalid_argument("sum axis out of range");
    kept[ax] = 1;
  }
  const Shape strides = aligned_strides(kept, in);
  Tensor out(kept);
  const Tensor& av = a.value();
  for_each_broadcast(in, strides, strides,
                     [&](std::size_t i, std::size_t o, std::size_t) {
                       out[o] += av[i];
                     });
  if (!keepdim) {
    Shape squeezed;
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (std::find(axes.begin(), axes.end(), i) == axes.end()) {
        squeezed.push_back(in[i]);
      }
    }
    out = out.reshaped(squeezed);
  }
  const Var inputs[] = {a};
  return tape.record(std::move(out), inputs,
                     [a, strides](Tape& t, const Tensor& g, const Tensor&) {
                       Tensor& da = t.grad_buffer(a);
                       for_each_broadcast(da.shape(), strides, strides,
                                          [&](std::size_t i, std::size_t o,
                                              std::size_t) { da[i] += g[o]; });
                     });
}

Var mean(Var a, const std::vector<std::size_t>& axes, bool keepdim) {
  std::size_t count = 1;
  for (auto ax : axes) count *= a.shape().at(ax);
  return sum(a, axes, keepdim) * (1.0 / static_cast<double>(count));
}

Var sum(Var a) {
  std::vector<std::size_t> axes(a.shape().size());
  std::iota(axes.begin(), axes.end(), 0);
  return sum(a, axes, false);
}

Var mean(Var a) {
  std::vector<std::size_t> axes(a.shape().size());
  std::iota(axes.begin(), axes.end(), 0);
  return mean(a, axes, false);
}

Var softmax_last(Var a) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t width = av.shape().back();
  const std::size_t rows = av.numel() / width;
  Tensor out(av.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data().data() + r * width;
    double* y = out.data().data() + r * width;
    const double mx = *std::max_element(x, x + width);
    double total = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      y[j] = std::exp(x[j] - mx);
      total += y[j];
    }
    for (std::size_t j = 0; j < width; ++j) y[j] /= total;
  }
  const Var inputs[] = {a};
  return tape.record(
      std::move(out), inputs,
      [a, width, rows](Tape& t, const Tensor& g, const Tensor& out) {
        Tensor& da = t.grad_buffer(a);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* y = out.data().data() + r * width;
          const double* gy = g.data().data() + r * width;
          double dot = 0.0;
          for (std::size_t j = 0; j < width; ++j) dot += gy[j] * y[j];
          for (std::size_t j = 0; j < width; ++j) {
            da[r * width + j] += y[j] * (gy[j] - dot);
          }
        }
      });
}

Var layer_norm_last(Var a, double eps) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t width = av.shape().back();
  const std::size_t rows = av.numel() / width;
  Tensor out(av.shape());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data().data() + r * width;
    double* y = out.data().data() + r * width;
    double mu = 0.0;
    for (std::size_t j = 0; j < width; ++j) mu += x[j];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t j = 0; j < width; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(width);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < width; ++j) y[j] = (x[j] - mu) * rstd[r];
  }
  const Var inputs[] = {a};
  return tape.record(
      std::move(out), inputs,
      [a, width, rows, rstd](Tape& t, const Tensor& g, const Tensor& out) {
        Tensor& da = t.grad_buffer(a);
        const double inv_w = 1.0 / static_cast<double>(width);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* y = out.data().data() + r * width;
          const double* gy = g.data().data() + r * width;
          double mean_g = 0.0;
          double mean_gy = 0.0;
          for (std::size_t j = 0; j < width; ++j) {
            mean_g += gy[j];
            mean_gy += gy[j] * y[j];
          }
          mean_g *= inv_w;
          mean_gy *= inv_w;
          for (std::size_t j = 0; j < width; ++j) {
            da[r * width + j] += rstd[r] * (gy[j] - mean_g - y[j] * mean_gy);
          }
        }
      });
}

Var select(Var a, std::size_t axis, std::size_t index) {
  Tape& tape = tape_of(a);
  const Shape& in = a.shape();
  if (axis >= in.size() || index >= in[axis]) {
    throw std::out_of_range("select index out of range");
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= in[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < in.size(); ++i) inner *= in[i];
  const std::size_t dim = in[axis];
  Shape out_shape = in;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out(out_shape);
  const Tensor& av = a.value();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(av.data().data() + (o * dim + index) * inner, inner,
                out.data().data() + o * inner);
  }
  const Var inputs[] = {a};
  return tape.record(std::move(out), inputs,
                     [a, outer, inner, dim, index](Tape& t, const Tensor& g,
                                                   const Tensor&) {
                       Tensor& da = t.grad_buffer(a);
                       for (std::size_t o = 0; o < outer; ++o) {
                         double* dst = da.data().data() + (o * dim + index) * inner;
                         const double* src = g.data().data() + o * inner;
                         for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                       }
                     });
}

Var stack(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("stack of zero tensors");
  Tape& tape = tape_of(parts[0]);
  const Shape& part_shape = parts[0].shape();
  if (axis > part_shape.size()) throw std::invalid_argument("stack axis out of range");
  for (const Var& p : parts) {
    if (p.tape() != &tape || p.shape() != part_shape) {
      throw std::invalid_argument("stack operands must share tape and shape");
    }
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= part_shape[i];
  std::size_t inner = 1;
  for (std::size_t i = axis; i < part_shape.size(); ++i) inner *= part_shape[i];
  const std::size_t count = parts.size();
  Shape out_shape = part_shape;
  out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), count);
  Tensor out(out_shape);
  for (std::size_t c = 0; c < count; ++c) {
    const Tensor& pv = parts[c].value();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.data().data() + o * inner, inner,
                  out.data().data() + (o * count + c) * inner);
    }
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return tape.record(std::move(out), parts,
                     [saved, outer, inner, count](Tape& t, const Tensor& g,
                                                  const Tensor&) {
                       for (std::size_t c = 0; c < count; ++c) {
                         if (!t.requires_grad(saved[c])) continue;
                         Tensor& dp = t.grad_buffer(saved[c]);
                         for (std::size_t o = 0; o < outer; ++o) {
                           const double* src = g.data().data() + (o * count + c) * inner;
                           double* dst = dp.data().data() + o * inner;
                           for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

Var detach(Var a) { return tape_of(a).constant(a.value()); }

}  // namespace zistorm::ad
