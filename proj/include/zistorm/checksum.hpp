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

#ifndef ZISTORM_CHECKSUM_HPP_
#define ZISTORM_CHECKSUM_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

namespace zistorm {

// Incremental CRC-32 (zlib polynomial).
class Crc32 {
 public:
  void update(const void* data, std::size_t size);
  void update(std::span<const std::byte> bytes) { update(bytes.data(), bytes.size()); }
  void update(const std::string& s) { update(s.data(), s.size()); }
  std::uint32_t value() const { return crc_; }

 private:
  std::uint32_t crc_ = 0;
};

std::uint32_t crc32_of_file(const std::filesystem::path& path);
std::string hex32(std::uint32_t value);

}  // namespace zistorm

#endif  // ZISTORM_CHECKSUM_HPP_
