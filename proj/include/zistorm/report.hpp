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

#ifndef ZISTORM_REPORT_HPP_
#define ZISTORM_REPORT_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "zistorm/tensor.hpp"

// CSV tables and the SVG charts drawn from them. Every chart takes a parsed
// CSV so a plot can always be regenerated from its data file alone.
namespace zistorm::report {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;
  const std::string& text(std::size_t row, const std::string& name) const;
};

void write_csv(const CsvTable& table, const std::filesystem::path& path);
CsvTable read_csv(const std::filesystem::path& path);

// Shortest text that parses back to the same double.
std::string format_number(double v);

// Projection of the rows of X (M, D) onto its two leading principal axes.
// Each axis is signed so its largest-magnitude loading is positive. Returns
// (M, 2).
Tensor pca_2d(const Tensor& X);

// Columns: mode, loss, attack, rec_maj, rec_min, rec_d, map_maj, map_min, map_d.
std::string recall_svg(const CsvTable& table);
// Columns: step, epoch, class, magnitude.
std::string gradient_svg(const CsvTable& table);
// Columns: segment, node, class, pc1, pc2, alpha.
std::string embedding_svg(const CsvTable& table);
// Columns: segment, node, weight.
std::string attention_svg(const CsvTable& table);

void write_text(const std::string& text, const std::filesystem::path& path);

}  // namespace zistorm::report

#endif  // ZISTORM_REPORT_HPP_
