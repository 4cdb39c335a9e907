/*
 * Copyright 2026 The Prunex Authors.
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

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "csv.h"
#include "prunex/harness.h"

namespace prunex {
namespace internal {

std::string FormatNumber(double value) { return fmt::format("{}", value); }

void WriteTextFile(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
  }
  std::filesystem::rename(tmp, path);
}

void WriteCsv(const std::filesystem::path& path, std::string_view provenance,
              const std::vector<std::string>& header,
              const std::vector<std::vector<std::string>>& rows) {
  std::string text;
  std::istringstream lines{std::string(provenance)};
  for (std::string line; std::getline(lines, line);) text += "# " + line + "\n";
  text += fmt::format("{}\n", fmt::join(header, ","));
  for (const auto& row : rows) text += fmt::format("{}\n", fmt::join(row, ","));
  WriteTextFile(path, text);
}

}  // namespace internal

namespace {

struct Series {
  std::string name;
  std::vector<std::pair<std::string, std::string>> points;  // CSV text of x, y
};

std::string Escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

// Line plot where every marker carries the exact CSV text of its point in
// data-x / data-y attributes.
std::string LinePlot(std::string_view title, std::string_view x_label, std::string_view y_label,
                     const std::vector<Series>& series) {
  constexpr double kW = 640, kH = 420, kLeft = 70, kRight = 150, kTop = 40, kBottom = 60;
  double x_min = INFINITY, x_max = -INFINITY, y_min = INFINITY, y_max = -INFINITY;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      x_min = std::min(x_min, std::stod(x));
      x_max = std::max(x_max, std::stod(x));
      y_min = std::min(y_min, std::stod(y));
      y_max = std::max(y_max, std::stod(y));
    }
  }
  if (!std::isfinite(x_min)) x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  if (x_max == x_min) x_max = x_min + 1;
  if (y_max == y_min) y_max = y_min + 1;
  const double pad = 0.05 * (y_max - y_min);
  y_min -= pad;
  y_max += pad;
  auto px = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * (kW - kLeft - kRight); };
  auto py = [&](double y) { return kH - kBottom - (y - y_min) / (y_max - y_min) * (kH - kTop - kBottom); };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\" font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"24\" font-size=\"15\">{3}</text>\n",
      kW, kH, kLeft, Escape(title));
  const double x0 = px(x_min), x1 = px(x_max), y0 = py(y_min), y1 = py(y_max);
  svg += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", x0, y0, x1, y0);
  svg += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", x0, y0, x0, y1);
  for (int t = 0; t <= 4; ++t) {
    const double xv = x_min + (x_max - x_min) * t / 4.0;
    const double yv = y_min + (y_max - y_min) * t / 4.0;
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:.3g}</text>\n",
                       px(xv), y0 + 18, xv);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.3g}</text>\n",
                       x0 - 6, py(yv) + 4, yv);
  }
  svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n",
                     (x0 + x1) / 2, kH - 15, Escape(x_label));
  svg += fmt::format(
      "<text transform=\"translate(18,{:.1f}) rotate(-90)\" text-anchor=\"middle\">{}</text>\n",
      (y0 + y1) / 2, Escape(y_label));

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = kColors[i % std::size(kColors)];
    std::string points;
    for (const auto& [x, y] : s.points) {
      points += fmt::format("{:.2f},{:.2f} ", px(std::stod(x)), py(std::stod(y)));
    }
    svg += fmt::format("<g class=\"series\" data-series=\"{}\">\n", Escape(s.name));
    svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n",
                       color, points);
    for (const auto& [x, y] : s.points) {
      svg += fmt::format(
          "<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\" data-x=\"{}\" data-y=\"{}\"/>\n",
          px(std::stod(x)), py(std::stod(y)), color, x, y);
    }
    svg += "</g>\n";
    const double ly = kTop + 18.0 * static_cast<double>(i);
    svg += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
                       kW - kRight + 15, ly, color);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{}</text>\n", kW - kRight + 32, ly + 10,
                       Escape(s.name));
  }
  svg += "</svg>\n";
  return svg;
}

std::size_t Column(const std::vector<std::string>& header, std::string_view name,
                   const std::filesystem::path& file) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw std::runtime_error(file.string() + ": missing column '" + std::string(name) + "'");
  }
  return static_cast<std::size_t>(it - header.begin());
}

// Groups rows by `group` column, keeping first-seen order.
std::vector<Series> GroupSeries(const std::vector<std::vector<std::string>>& rows,
                                const std::filesystem::path& file, std::string_view group,
                                std::string_view x, std::string_view y) {
  const auto& header = rows.at(0);
  const std::size_t g = Column(header, group, file), xi = Column(header, x, file),
                    yi = Column(header, y, file);
  std::vector<Series> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    auto it = std::find_if(out.begin(), out.end(), [&](const Series& s) { return s.name == row[g]; });
    if (it == out.end()) {
      out.push_back({row[g], {}});
      it = out.end() - 1;
    }
    it->points.emplace_back(row[xi], row[yi]);
  }
  return out;
}

nlohmann::json SeriesJson(const std::vector<Series>& series, std::string_view x_name,
                          std::string_view y_name) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& s : series) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& [x, y] : s.points) {
      pts.push_back({{std::string(x_name), std::stod(x)}, {std::string(y_name), std::stod(y)}});
    }
    j[s.name] = pts;
  }
  return j;
}

}  // namespace

std::vector<std::vector<std::string>> ReadCsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact("missing " + path.string() + " (run `prunex evaluate` first)");
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (!rows.empty() && cells.size() != rows[0].size()) {
      throw std::runtime_error(path.string() + ": ragged row '" + line + "'");
    }
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw std::runtime_error(path.string() + ": no header row");
  return rows;
}

void WriteReport(const std::filesystem::path& results_dir) {
  using internal::WriteTextFile;
  const auto accuracy_csv = results_dir / "accuracy.csv";
  const auto gini_csv = results_dir / "gini.csv";
  const auto road_csv = results_dir / "road.csv";
  const auto aopc_csv = results_dir / "aopc.csv";
  const auto accuracy = ReadCsv(accuracy_csv);
  const auto gini = ReadCsv(gini_csv);
  const auto road = ReadCsv(road_csv);
  const auto aopc = ReadCsv(aopc_csv);

  // Single-series accuracy plot: group on a constant column.
  std::vector<Series> acc_series = {{"accuracy", {}}};
  {
    const std::size_t x = Column(accuracy[0], "sparsity_level", accuracy_csv);
    const std::size_t y = Column(accuracy[0], "accuracy", accuracy_csv);
    for (std::size_t r = 1; r < accuracy.size(); ++r) {
      acc_series[0].points.emplace_back(accuracy[r][x], accuracy[r][y]);
    }
  }
  WriteTextFile(results_dir / "accuracy.svg",
                LinePlot("Test accuracy vs. sparsity", "sparsity", "accuracy", acc_series));
  const auto gini_series = GroupSeries(gini, gini_csv, "method", "sparsity_level", "gini_mean");
  WriteTextFile(results_dir / "gini.svg",
                LinePlot("Saliency Gini index vs. sparsity", "sparsity", "mean Gini", gini_series));
  const auto aopc_series = GroupSeries(aopc, aopc_csv, "method", "sparsity_level", "aopc");
  WriteTextFile(results_dir / "aopc.svg",
                LinePlot("ROAD MoRF AOPC vs. sparsity", "sparsity", "AOPC", aopc_series));

  // One ROAD plot per method, one series per sparsity level.
  const std::size_t method_col = Column(road[0], "method", road_csv);
  std::vector<std::string> methods;
  for (std::size_t r = 1; r < road.size(); ++r) {
    if (std::find(methods.begin(), methods.end(), road[r][method_col]) == methods.end()) {
      methods.push_back(road[r][method_col]);
    }
  }
  nlohmann::json road_json = nlohmann::json::object();
  for (const auto& method : methods) {
    std::vector<std::vector<std::string>> subset = {road[0]};
    for (std::size_t r = 1; r < road.size(); ++r) {
      if (road[r][method_col] == method) subset.push_back(road[r]);
    }
    auto series = GroupSeries(subset, road_csv, "sparsity_level", "fraction", "accuracy");
    for (auto& s : series) s.name = "sparsity " + s.name;
    WriteTextFile(results_dir / ("road_" + method + ".svg"),
                  LinePlot("ROAD MoRF curves (" + method + ")", "fraction removed", "accuracy",
                           series));
    road_json[method] = SeriesJson(series, "fraction", "accuracy");
  }

  nlohmann::json summary;
  {
    nlohmann::json rows = nlohmann::json::array();
    const auto& h = accuracy[0];
    for (std::size_t r = 1; r < accuracy.size(); ++r) {
      nlohmann::json row;
      for (std::size_t c = 0; c < h.size(); ++c) row[h[c]] = std::stod(accuracy[r][c]);
      rows.push_back(row);
    }
    summary["accuracy"] = rows;
  }
  {
    nlohmann::json by_method = nlohmann::json::object();
    const auto& h = gini[0];
    const std::size_t m = Column(h, "method", gini_csv);
    for (std::size_t r = 1; r < gini.size(); ++r) {
      nlohmann::json row;
      for (std::size_t c = 0; c < h.size(); ++c) {
        if (c != m) row[h[c]] = std::stod(gini[r][c]);
      }
      by_method[gini[r][m]].push_back(row);
    }
    summary["gini"] = by_method;
  }
  summary["aopc"] = SeriesJson(aopc_series, "sparsity_level", "aopc");
  summary["road"] = road_json;
  // Provenance lines are copied verbatim from the accuracy table.
  std::ifstream in(accuracy_csv);
  nlohmann::json provenance = nlohmann::json::array();
  for (std::string line; std::getline(in, line) && !line.empty() && line[0] == '#';) {
    provenance.push_back(line.substr(std::min<std::size_t>(2, line.size())));
  }
  summary["config"] = provenance;
  WriteTextFile(results_dir / "summary.json", summary.dump(2) + "\n");
}

}  // namespace prunex
