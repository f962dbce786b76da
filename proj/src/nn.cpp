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

#include "zistorm/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <utility>

#include "zistorm/checksum.hpp"

namespace zistorm::nn {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs assume a little-endian host");

constexpr char kMagic[4] = {'Z', 'S', 'C', 'K'};

template <class T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("truncated checkpoint blob");
  return value;
}

}  // namespace

std::size_t ParameterSet::add(std::string name, Tensor value) {
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.numel();
  return n;
}

std::vector<ad::Var> ParameterSet::bind(ad::Tape& tape, bool trainable) const {
  std::vector<ad::Var> vars;
  vars.reserve(values_.size());
  for (const auto& v : values_) {
    vars.push_back(trainable ? tape.variable(v) : tape.constant(v));
  }
  return vars;
}

std::uint32_t ParameterSet::hash() const {
  Crc32 crc;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    crc.update(names_[i]);
    for (auto d : values_[i].shape()) {
      const auto d64 = static_cast<std::uint64_t>(d);
      crc.update(&d64, sizeof(d64));
    }
    crc.update(values_[i].data().data(), values_[i].numel() * sizeof(double));
  }
  return crc.value();
}

void ParameterSet::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out.write(kMagic, 4);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(values_.size()));
  for (std::size_t i = 0; i < values_.size(); ++i) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(names_[i].size()));
    out.write(names_[i].data(), static_cast<std::streamsize>(names_[i].size()));
    write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(values_[i].rank()));
    for (auto d : values_[i].shape()) {
      write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    }
    out.write(reinterpret_cast<const char*>(values_[i].data().data()),
              static_cast<std::streamsize>(values_[i].numel() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

void ParameterSet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing file: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("header magic mismatch in " + path.string());
  }
  const auto count = read_pod<std::uint32_t>(in);
  if (count != values_.size()) {
    throw std::runtime_error("checkpoint parameter count mismatch");
  }
  for (std::size_t i = 0; i < count; ++i) {
    const auto len = read_pod<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (name != names_[i]) {
      throw std::runtime_error("checkpoint parameter name mismatch: " + name);
    }
    const auto rank = read_pod<std::uint8_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = read_pod<std::uint32_t>(in);
    if (shape != values_[i].shape()) {
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    }
    in.read(reinterpret_cast<char*>(values_[i].data().data()),
            static_cast<std::streamsize>(values_[i].numel() * sizeof(double)));
    if (!in) throw std::runtime_error("truncated checkpoint blob");
  }
}

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor w({fan_in, fan_out});
  for (auto& v : w.storage()) v = dist(rng);
  return w;
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
}

void Adam::restore(State state) {
  if (state.m.size() != state.v.size()) {
    throw std::invalid_argument("optimizer state has mismatched moment counts");
  }
  t_ = state.steps;
  m_ = std::move(state.m);
  v_ = std::move(state.v);
}

void Adam::step(ParameterSet& params, const std::vector<Tensor>& grads) {
  if (grads.size() != params.size()) {
    throw std::invalid_argument("gradient count does not match parameters");
  }
  if (m_.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.emplace_back(params[i].shape());
      v_.emplace_back(params[i].shape());
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    const Tensor& g = grads[i];
    if (g.shape() != p.shape()) {
      throw std::invalid_argument("gradient shape mismatch for " + params.name(i));
    }
    for (std::size_t j = 0; j < p.numel(); ++j) {
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
      const double mhat = m_[i][j] / c1;
      const double vhat = v_[i][j] / c2;
      p[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

DenseRef add_dense(ParameterSet& params, const std::string& name,
                   std::size_t in, std::size_t out, Rng& rng) {
  DenseRef ref;
  ref.weight = params.add(name + ".weight", xavier_uniform(in, out, rng));
  ref.bias = params.add(name + ".bias", Tensor({out}, 0.0));
  return ref;
}

AttentionBlockRef add_attention_block(ParameterSet& params,
                                      const std::string& name,
                                      std::size_t model_dim, std::size_t heads,
                                      std::size_t ffn_dim, Rng& rng) {
  if (heads == 0 || model_dim % heads != 0) {
    throw std::invalid_argument("model_dim " + std::to_string(model_dim) +
                                " is not divisible by heads " +
                                std::to_string(heads));
  }
  AttentionBlockRef b;
  b.model_dim = model_dim;
  b.heads = heads;
  b.query = add_dense(params, name + ".q", model_dim, model_dim, rng);
  b.key = add_dense(params, name + ".k", model_dim, model_dim, rng);
  b.value = add_dense(params, name + ".v", model_dim, model_dim, rng);
  b.proj = add_dense(params, name + ".o", model_dim, model_dim, rng);
  b.ffn_in = add_dense(params, name + ".ffn1", model_dim, ffn_dim, rng);
  b.ffn_out = add_dense(params, name + ".ffn2", ffn_dim, model_dim, rng);
  b.ln1_gain = params.add(name + ".ln1.gain", Tensor({model_dim}, 1.0));
  b.ln1_bias = params.add(name + ".ln1.bias", Tensor({model_dim}, 0.0));
  b.ln2_gain = params.add(name + ".ln2.gain", Tensor({model_dim}, 1.0));
  b.ln2_bias = params.add(name + ".ln2.bias", Tensor({model_dim}, 0.0));
  return b;
}

namespace {

// (..., L, D) -> (..., heads, L, D / heads)
ad::Var split_heads(ad::Var x, std::size_t heads) {
  Shape shape = x.shape();
  const std::size_t d = shape.back();
  shape.back() = heads;
  shape.push_back(d / heads);
  const std::size_t r = shape.size();
  std::vector<std::size_t> perm(r);
  for (std::size_t i = 0; i + 3 < r; ++i) perm[i] = i;
  perm[r - 3] = r - 2;
  perm[r - 2] = r - 3;
  perm[r - 1] = r - 1;
  return ad::permute(ad::reshape(x, shape), perm);
}

// Inverse of split_heads.
ad::Var merge_heads(ad::Var x) {
  const std::size_t r = x.shape().size();
  std::vector<std::size_t> perm(r);
  for (std::size_t i = 0; i + 3 < r; ++i) perm[i] = i;
  perm[r - 3] = r - 2;
  perm[r - 2] = r - 3;
  perm[r - 1] = r - 1;
  ad::Var y = ad::permute(x, perm);
  Shape shape = y.shape();
  const std::size_t d = shape[r - 2] * shape[r - 1];
  shape.pop_back();
  shape.back() = d;
  return ad::reshape(y, shape);
}

ad::Var swap_last_two(ad::Var x) {
  const std::size_t r = x.shape().size();
  std::vector<std::size_t> perm(r);
  for (std::size_t i = 0; i < r; ++i) perm[i] = i;
  std::swap(perm[r - 1], perm[r - 2]);
  return ad::permute(x, perm);
}

}  // namespace

ad::Var attention_probabilities(const std::vector<ad::Var>& p,
                                const AttentionBlockRef& block, ad::Var x) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(block.model_dim / block.heads));
  ad::Var q = split_heads(apply_dense(p, block.query, x), block.heads);
  ad::Var k = split_heads(apply_dense(p, block.key, x), block.heads);
  return ad::softmax_last(ad::matmul(q, swap_last_two(k)) * scale);
}

ad::Var apply_attention_block(const std::vector<ad::Var>& p,
                              const AttentionBlockRef& block, ad::Var x) {
  if (x.shape().empty() || x.shape().back() != block.model_dim) {
    throw std::invalid_argument("attention block expects last dim " +
                                std::to_string(block.model_dim) + ", got " +
                                shape_str(x.shape()));
  }
  ad::Var probs = attention_probabilities(p, block, x);
  ad::Var v = split_heads(apply_dense(p, block.value, x), block.heads);
  ad::Var attended = apply_dense(p, block.proj, merge_heads(ad::matmul(probs, v)));
  ad::Var residual =
      ad::layer_norm_last(attended + x) * p[block.ln1_gain] + p[block.ln1_bias];
  ad::Var ffn = apply_dense(
      p, block.ffn_out, ad::relu(apply_dense(p, block.ffn_in, residual)));
  return ad::layer_norm_last(residual + ffn) * p[block.ln2_gain] + p[block.ln2_bias];
}

}  // namespace zistorm::nn
