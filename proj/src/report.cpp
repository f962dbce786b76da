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

#include "zistorm/report.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace zistorm::report {

namespace {

std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

// Fixed two-decimal coordinates keep the SVG text stable.
std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

class Svg {
 public:
  Svg(double w, double h) : w_(w), h_(h) {}

  void rect(double x, double y, double w, double h, const std::string& fill,
            double opacity = 1.0) {
    body_ << "<rect x=\"" << px(x) << "\" y=\"" << px(y) << "\" width=\"" << px(w)
          << "\" height=\"" << px(h) << "\" fill=\"" << fill << "\"";
    if (opacity < 1.0) body_ << " fill-opacity=\"" << px(opacity) << "\"";
    body_ << "/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill) {
    body_ << "<circle cx=\"" << px(x) << "\" cy=\"" << px(y) << "\" r=\"" << px(r)
          << "\" fill=\"" << fill << "\" fill-opacity=\"0.70\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2) {
    body_ << "<line x1=\"" << px(x1) << "\" y1=\"" << px(y1) << "\" x2=\"" << px(x2)
          << "\" y2=\"" << px(y2) << "\" stroke=\"#333\" stroke-width=\"1\"/>\n";
  }
  void text(double x, double y, const std::string& s, const std::string& anchor = "start",
            int size = 11, double rotate = 0.0) {
    body_ << "<text x=\"" << px(x) << "\" y=\"" << px(y) << "\" font-size=\"" << size
          << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\"";
    if (rotate != 0.0) {
      body_ << " transform=\"rotate(" << px(rotate) << " " << px(x) << " " << px(y) << ")\"";
    }
    body_ << ">" << escape(s) << "</text>\n";
  }
  std::string str() const {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(w_) << "\" height=\""
        << px(h_) << "\" viewBox=\"0 0 " << px(w_) << " " << px(h_) << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body_.str() << "</svg>\n";
    return out.str();
  }

 private:
  double w_;
  double h_;
  std::ostringstream body_;
};

const char* kMinorityColor = "#d95f02";
const char* kMajorityColor = "#1b9e77";

// Light yellow to dark blue.
std::string ramp(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(255.0 + t * (8.0 - 255.0)));
  const int g = static_cast<int>(std::lround(247.0 + t * (48.0 - 247.0)));
  const int b = static_cast<int>(std::lround(188.0 + t * (107.0 - 188.0)));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

void axes(Svg& svg, double left, double top, double width, double height) {
  svg.line(left, top + height, left + width, top + height);
  svg.line(left, top, left, top + height);
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw std::runtime_error("csv: missing column " + name);
  return static_cast<std::size_t>(it - header.begin());
}

double CsvTable::number(std::size_t row, const std::string& name) const {
  const std::string& s = rows.at(row).at(column(name));
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::runtime_error("csv: column " + name + " holds non-numeric value \"" + s + "\"");
  }
  return v;
}

const std::string& CsvTable::text(std::size_t row, const std::string& name) const {
  return rows.at(row).at(column(name));
}

void write_csv(const CsvTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  auto emit = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << quote(fields[i]);
    out << "\n";
  };
  emit(table.header);
  for (const auto& r : table.rows) {
    if (r.size() != table.header.size()) throw std::invalid_argument("csv: ragged row");
    emit(r);
  }
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty csv");
  t.header = split_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (fields.size() != t.header.size()) {
      throw std::runtime_error(path.string() + ": row width differs from header");
    }
    t.rows.push_back(std::move(fields));
  }
  return t;
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Tensor pca_2d(const Tensor& X) {
  if (X.rank() != 2) throw std::invalid_argument("pca_2d expects a matrix");
  const auto m = static_cast<Eigen::Index>(X.dim(0));
  const auto d = static_cast<Eigen::Index>(X.dim(1));
  Eigen::MatrixXd A(m, d);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) A(i, j) = X[static_cast<std::size_t>(i * d + j)];
  }
  const Eigen::RowVectorXd mean = A.colwise().mean();
  A.rowwise() -= mean;
  const Eigen::MatrixXd cov = (A.transpose() * A) / std::max<double>(1.0, double(m - 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  Tensor out({X.dim(0), 2});
  for (int a = 0; a < 2; ++a) {
    if (a >= d) break;
    Eigen::VectorXd axis = eig.eigenvectors().col(d - 1 - a);
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis(arg) < 0) axis = -axis;
    const Eigen::VectorXd proj = A * axis;
    for (Eigen::Index i = 0; i < m; ++i) out[static_cast<std::size_t>(i * 2 + a)] = proj(i);
  }
  return out;
}

std::string recall_svg(const CsvTable& t) {
  const std::size_t n = t.rows.size();
  const double left = 60, top = 40, bar = 14, gap = 18;
  const double width = std::max(300.0, n * (2 * bar + gap) + gap);
  const double height = 240;
  Svg svg(left + width + 20, top + height + 130);
  svg.text(left, 20, "Recall by class (x100)", "start", 14);
  axes(svg, left, top, width, height);
  for (int tick = 0; tick <= 4; ++tick) {
    const double y = top + height - tick * height / 4;
    svg.line(left - 4, y, left, y);
    svg.text(left - 6, y + 4, std::to_string(tick * 25), "end");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double x = left + gap + i * (2 * bar + gap);
    const double maj = std::clamp(t.number(i, "rec_maj"), 0.0, 1.0);
    const double mn = std::clamp(t.number(i, "rec_min"), 0.0, 1.0);
    svg.rect(x, top + height - maj * height, bar, maj * height, kMajorityColor);
    svg.rect(x + bar, top + height - mn * height, bar, mn * height, kMinorityColor);
    svg.text(x + bar, top + height + 12,
             t.text(i, "mode") + "/" + t.text(i, "loss") + "/" + t.text(i, "attack"), "end", 10,
             -60.0);
  }
  svg.rect(left + width - 120, top + 4, 10, 10, kMajorityColor);
  svg.text(left + width - 106, top + 13, "Rec-maj");
  svg.rect(left + width - 120, top + 20, 10, 10, kMinorityColor);
  svg.text(left + width - 106, top + 29, "Rec-min");
  return svg.str();
}

std::string gradient_svg(const CsvTable& t) {
  constexpr std::size_t kBins = 30;
  double hi = 0.0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) hi = std::max(hi, t.number(i, "magnitude"));
  if (!(hi > 0.0)) hi = 1.0;
  std::map<std::string, std::vector<double>> hist;
  std::map<std::string, double> totals;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const std::string& cls = t.text(i, "class");
    auto& h = hist[cls];
    h.resize(kBins, 0.0);
    const auto bin = std::min<std::size_t>(
        kBins - 1, static_cast<std::size_t>(t.number(i, "magnitude") / hi * kBins));
    h[bin] += 1.0;
    totals[cls] += 1.0;
  }
  double peak = 0.0;
  for (auto& [cls, h] : hist) {
    for (double& v : h) {
      v /= totals[cls];
      peak = std::max(peak, v);
    }
  }
  if (!(peak > 0.0)) peak = 1.0;
  const double left = 60, top = 40, width = 480, height = 240;
  Svg svg(left + width + 30, top + height + 50);
  svg.text(left, 20, "Top-k gradient magnitudes during training", "start", 14);
  axes(svg, left, top, width, height);
  const double bw = width / kBins;
  for (const auto& [cls, h] : hist) {
    const char* color = cls == "minority" ? kMinorityColor : kMajorityColor;
    for (std::size_t b = 0; b < kBins; ++b) {
      const double bh = h[b] / peak * height;
      svg.rect(left + b * bw, top + height - bh, bw, bh, color, 0.55);
    }
  }
  svg.text(left, top + height + 16, "0");
  svg.text(left + width, top + height + 16, format_number(hi), "end");
  svg.text(left + width / 2, top + height + 34, "gradient magnitude", "middle");
  svg.text(left - 10, top + height / 2, "share of class", "middle", 11, -90.0);
  svg.rect(left + width - 110, top + 4, 10, 10, kMajorityColor, 0.55);
  svg.text(left + width - 96, top + 13, "majority");
  svg.rect(left + width - 110, top + 20, 10, 10, kMinorityColor, 0.55);
  svg.text(left + width - 96, top + 29, "minority");
  return svg.str();
}

std::string embedding_svg(const CsvTable& t) {
  const std::size_t n = t.rows.size();
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0, amax = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = t.number(i, "pc1");
    const double y = t.number(i, "pc2");
    if (i == 0) {
      x0 = x1 = x;
      y0 = y1 = y;
    }
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
    amax = std::max(amax, t.number(i, "alpha"));
  }
  if (!(x1 > x0)) x1 = x0 + 1.0;
  if (!(y1 > y0)) y1 = y0 + 1.0;
  if (!(amax > 0.0)) amax = 1.0;
  const double left = 40, top = 40, size = 400;
  Svg svg(left + size + 40, top + size + 40);
  svg.text(left, 20, "Embedding projection (size = predicted dispersion)", "start", 14);
  axes(svg, left, top, size, size);
  // Majority first so minority points stay visible on top.
  for (int pass = 0; pass < 2; ++pass) {
    const std::string want = pass == 0 ? "majority" : "minority";
    for (std::size_t i = 0; i < n; ++i) {
      if (t.text(i, "class") != want) continue;
      const double x = left + (t.number(i, "pc1") - x0) / (x1 - x0) * size;
      const double y = top + size - (t.number(i, "pc2") - y0) / (y1 - y0) * size;
      const double r = 2.0 + 6.0 * t.number(i, "alpha") / amax;
      svg.circle(x, y, r, pass == 0 ? kMajorityColor : kMinorityColor);
    }
  }
  svg.text(left + size / 2, top + size + 20, "PC1", "middle");
  svg.text(left - 10, top + size / 2, "PC2", "middle", 11, -90.0);
  return svg.str();
}

std::string attention_svg(const CsvTable& t) {
  std::size_t segments = 0;
  std::size_t nodes = 0;
  double lo = 0, hi = 0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    segments = std::max(segments, static_cast<std::size_t>(t.number(i, "segment")) + 1);
    nodes = std::max(nodes, static_cast<std::size_t>(t.number(i, "node")) + 1);
    const double w = t.number(i, "weight");
    lo = i == 0 ? w : std::min(lo, w);
    hi = i == 0 ? w : std::max(hi, w);
  }
  const double cell = std::clamp(480.0 / std::max<std::size_t>(1, std::max(segments, nodes)),
                                 6.0, 28.0);
  const double left = 70, top = 40;
  Svg svg(left + nodes * cell + 90, top + segments * cell + 50);
  svg.text(left, 20, "Gradient attention by segment and node", "start", 14);
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto s = static_cast<std::size_t>(t.number(i, "segment"));
    const auto nd = static_cast<std::size_t>(t.number(i, "node"));
    svg.rect(left + nd * cell, top + s * cell, cell, cell, ramp((t.number(i, "weight") - lo) / span));
  }
  svg.text(left + nodes * cell / 2, top + segments * cell + 20, "node", "middle");
  svg.text(left - 12, top + segments * cell / 2, "segment", "middle", 11, -90.0);
  const double lx = left + nodes * cell + 20;
  for (int k = 0; k < 10; ++k) svg.rect(lx, top + k * 12, 14, 12, ramp(1.0 - k / 9.0));
  svg.text(lx + 18, top + 10, format_number(hi));
  svg.text(lx + 18, top + 120, format_number(lo));
  return svg.str();
}

void write_text(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace zistorm::report
