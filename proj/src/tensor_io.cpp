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

#include "zistorm/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <vector>

namespace zistorm::io {
namespace {

static_assert(std::endian::native == std::endian::little,
              "ZIST payloads are written in host order on little-endian hosts");

constexpr char kMagic[4] = {'Z', 'I', 'S', 'T'};

struct Header {
  Shape dims;
  DType dtype = DType::kFloat32;
};

template <class T>
void put(std::vector<char>& buf, T value) {
  const auto* p = reinterpret_cast<const char*>(&value);
  buf.insert(buf.end(), p, p + sizeof(T));
}

std::vector<char> encode_header(const Shape& dims, DType dtype) {
  std::vector<char> buf(kMagic, kMagic + 4);
  put<std::uint16_t>(buf, kZistVersion);
  put<std::uint8_t>(buf, static_cast<std::uint8_t>(dims.size()));
  for (auto d : dims) put<std::uint32_t>(buf, static_cast<std::uint32_t>(d));
  put<std::uint8_t>(buf, static_cast<std::uint8_t>(dtype));
  return buf;
}

void write_file(const std::filesystem::path& path, const std::vector<char>& header,
                const void* payload, std::size_t bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(static_cast<const char*>(payload), static_cast<std::streamsize>(bytes));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// Parses the header and returns the payload bytes.
std::vector<char> read_file(const std::filesystem::path& path, Header& header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing file: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto take = [&](void* dst, std::size_t n) {
    if (pos + n > bytes.size()) {
      throw std::runtime_error("truncated header in " + path.string());
    }
    std::memcpy(dst, bytes.data() + pos, n);
    pos += n;
  };
  char magic[4];
  take(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("header magic mismatch in " + path.string());
  }
  std::uint16_t version = 0;
  take(&version, 2);
  if (version != kZistVersion) {
    throw std::runtime_error("unsupported ZIST version " + std::to_string(version));
  }
  std::uint8_t rank = 0;
  take(&rank, 1);
  header.dims.resize(rank);
  for (auto& d : header.dims) {
    std::uint32_t v = 0;
    take(&v, 4);
    d = v;
  }
  std::uint8_t code = 0;
  take(&code, 1);
  if (code > 1) throw std::runtime_error("unknown dtype code " + std::to_string(code));
  header.dtype = static_cast<DType>(code);
  const std::size_t expected = shape_numel(header.dims) * 4;
  if (bytes.size() - pos != expected) {
    throw std::runtime_error("payload size mismatch in " + path.string() +
                             ": expected " + std::to_string(expected) +
                             " bytes, found " + std::to_string(bytes.size() - pos));
  }
  return std::vector<char>(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
}

}  // namespace

void write_zist(const std::filesystem::path& path, const Tensor& tensor) {
  std::vector<float> payload(tensor.numel());
  for (std::size_t i = 0; i < payload.size(); ++i) {
    payload[i] = static_cast<float>(tensor[i]);
  }
  write_file(path, encode_header(tensor.shape(), DType::kFloat32), payload.data(),
             payload.size() * sizeof(float));
}

void write_zist(const std::filesystem::path& path, const IntTensor& tensor) {
  if (tensor.data.size() != shape_numel(tensor.shape)) {
    throw std::invalid_argument("int tensor data does not match its shape");
  }
  write_file(path, encode_header(tensor.shape, DType::kInt32), tensor.data.data(),
             tensor.data.size() * sizeof(std::int32_t));
}

Tensor read_zist_float(const std::filesystem::path& path) {
  Header header;
  const auto payload = read_file(path, header);
  if (header.dtype != DType::kFloat32) {
    throw std::runtime_error("expected float32 payload in " + path.string());
  }
  Tensor out(header.dims);
  for (std::size_t i = 0; i < out.numel(); ++i) {
    float v;
    std::memcpy(&v, payload.data() + i * 4, 4);
    out[i] = static_cast<double>(v);
  }
  return out;
}

IntTensor read_zist_int(const std::filesystem::path& path) {
  Header header;
  const auto payload = read_file(path, header);
  if (header.dtype != DType::kInt32) {
    throw std::runtime_error("expected int32 payload in " + path.string());
  }
  IntTensor out;
  out.shape = header.dims;
  out.data.resize(shape_numel(header.dims));
  std::memcpy(out.data.data(), payload.data(), payload.size());
  return out;
}

Tensor round_to_float32(Tensor t) {
  for (auto& v : t.storage()) v = static_cast<double>(static_cast<float>(v));
  return t;
}

}  // namespace zistorm::io
