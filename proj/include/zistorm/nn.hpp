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

#ifndef ZISTORM_NN_HPP_
#define ZISTORM_NN_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "zistorm/autograd.hpp"
#include "zistorm/tensor.hpp"

namespace zistorm::nn {

using Rng = std::mt19937_64;

// Named, ordered collection of trainable tensors.
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor value);
  std::size_t size() const { return values_.size(); }
  std::size_t scalar_count() const;

  Tensor& operator[](std::size_t i) { return values_[i]; }
  const Tensor& operator[](std::size_t i) const { return values_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  std::vector<Tensor>& values() { return values_; }
  const std::vector<Tensor>& values() const { return values_; }

  // Registers every parameter on the tape, as variables or constants.
  std::vector<ad::Var> bind(ad::Tape& tape, bool trainable) const;

  // CRC-32 over names, shapes and raw float64 bytes.
  std::uint32_t hash() const;

  // Binary blob: magic "ZSCK", u32 count, then per entry name, rank, dims
  // and little-endian float64 payload.
  void save(const std::filesystem::path& path) const;
  // Loads into an identically structured set; throws on any mismatch.
  void load(const std::filesystem::path& path);

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

// Adam with bias correction.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  void step(ParameterSet& params, const std::vector<Tensor>& grads);
  double lr() const { return lr_; }
  std::size_t steps() const { return t_; }

  // Moment estimates and step count, for checkpointing.
  struct State {
    std::size_t steps = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
  };
  State state() const { return {t_, m_, v_}; }
  void restore(State state);

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

// Indices of a dense layer inside a ParameterSet.
struct DenseRef {
  std::size_t weight = 0;
  std::size_t bias = 0;
};

DenseRef add_dense(ParameterSet& params, const std::string& name,
                   std::size_t in, std::size_t out, Rng& rng);

inline ad::Var apply_dense(const std::vector<ad::Var>& p, const DenseRef& d,
                           ad::Var x) {
  return ad::linear(x, p[d.weight], p[d.bias]);
}

// Transformer-style block: multi-head self-attention over axis -2 of a
// (..., L, D) input, residual + layer norm, position-wise FFN, residual +
// layer norm.
struct AttentionBlockRef {
  std::size_t model_dim = 0;
  std::size_t heads = 0;
  DenseRef query;
  DenseRef key;
  DenseRef value;
  DenseRef proj;
  DenseRef ffn_in;
  DenseRef ffn_out;
  std::size_t ln1_gain = 0;
  std::size_t ln1_bias = 0;
  std::size_t ln2_gain = 0;
  std::size_t ln2_bias = 0;
};

AttentionBlockRef add_attention_block(ParameterSet& params,
                                      const std::string& name,
                                      std::size_t model_dim, std::size_t heads,
                                      std::size_t ffn_dim, Rng& rng);

// Softmax attention probabilities, shaped (..., heads, L, L).
ad::Var attention_probabilities(const std::vector<ad::Var>& p,
                                const AttentionBlockRef& block, ad::Var x);

ad::Var apply_attention_block(const std::vector<ad::Var>& p,
                              const AttentionBlockRef& block, ad::Var x);

}  // namespace zistorm::nn

#endif  // ZISTORM_NN_HPP_
