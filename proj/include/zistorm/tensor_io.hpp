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

#ifndef ZISTORM_TENSOR_IO_HPP_
#define ZISTORM_TENSOR_IO_HPP_

#include <cstdint>
#include <filesystem>

#include "zistorm/tensor.hpp"

// ZIST container: "ZIST" magic, u16 version, u8 rank, u32 dims, u8 dtype
// code, then a little-endian row-major payload.
namespace zistorm::io {

inline constexpr std::uint16_t kZistVersion = 1;

enum class DType : std::uint8_t { kFloat32 = 0, kInt32 = 1 };

// Values are narrowed to float32; round trip is exact for values that are
// already float32-representable.
void write_zist(const std::filesystem::path& path, const Tensor& tensor);
void write_zist(const std::filesystem::path& path, const IntTensor& tensor);

Tensor read_zist_float(const std::filesystem::path& path);
IntTensor read_zist_int(const std::filesystem::path& path);

// Rounds every element to the nearest float32.
Tensor round_to_float32(Tensor t);

}  // namespace zistorm::io

#endif  // ZISTORM_TENSOR_IO_HPP_
