// Copyright (c) 2026 The irlm authors
// SPDX-License-Identifier: Apache-2.0

#include "irlm/harness.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace irlm {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace

void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("write_ablation_csv: cannot open '" + path +
                             "'");
  }
  out << "variant,seed,mlm_loss,mlm_acc,probe_acc\n";
  char buf[64];
  for (const auto& r : rows) {
    out << r.variant << "," << r.seed << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", r.mlm_loss);
    out << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", r.mlm_acc);
    out << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", r.probe_acc);
    out << buf << "\n";
  }
}

CurveExportResult curve_export(
    const std::vector<std::pair<std::string, std::string>>& runs,
    const std::vector<std::uint64_t>& step_grid,
    const std::vector<std::string>& metrics, const std::string& out_path) {
  if (runs.empty()) {
    throw std::invalid_argument("curve_export: no runs");
  }
  if (metrics.empty()) {
    throw std::invalid_argument("curve_export: no metrics selected");
  }

  // Per run: step -> (metric -> verbatim cell).
  struct RunData {
    std::string name;
    std::vector<std::uint64_t> steps;  // in file order
    std::map<std::uint64_t, std::map<std::string, std::string>> cells;
  };
  std::vector<RunData> data;
  for (const auto& [name, path] : runs) {
    std::ifstream in(path);
    if (!in) {
      throw std::runtime_error("curve_export: cannot open '" + path + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
      throw std::runtime_error("curve_export: '" + path + "' is empty");
    }
    const std::vector<std::string> header = split_csv_line(line);
    if (header.empty() || header[0] != "step") {
      throw std::runtime_error("curve_export: '" + path +
                               "' has no step column");
    }
    std::map<std::string, std::size_t> col_index;
    for (std::size_t i = 0; i < header.size(); ++i) col_index[header[i]] = i;
    for (const auto& m : metrics) {
      if (!col_index.count(m)) {
        throw std::runtime_error("curve_export: '" + path +
                                 "' has no column '" + m + "'");
      }
    }
    RunData rd;
    rd.name = name;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const std::vector<std::string> cells = split_csv_line(line);
      if (cells.size() != header.size()) {
        throw std::runtime_error("curve_export: ragged row in '" + path +
                                 "'");
      }
      const std::uint64_t step = std::stoull(cells[0]);
      rd.steps.push_back(step);
      for (const auto& m : metrics) {
        rd.cells[step][m] = cells[col_index[m]];
      }
    }
    data.push_back(std::move(rd));
  }

  // Step intersection across runs (and the requested grid, when given).
  std::set<std::uint64_t> common(data[0].steps.begin(), data[0].steps.end());
  bool grids_match = true;
  for (std::size_t r = 1; r < data.size(); ++r) {
    std::set<std::uint64_t> s(data[r].steps.begin(), data[r].steps.end());
    if (s != common) grids_match = false;
    std::set<std::uint64_t> inter;
    std::set_intersection(common.begin(), common.end(), s.begin(), s.end(),
                          std::inserter(inter, inter.begin()));
    common = std::move(inter);
  }
  if (!step_grid.empty()) {
    std::set<std::uint64_t> requested(step_grid.begin(), step_grid.end());
    std::set<std::uint64_t> inter;
    std::set_intersection(common.begin(), common.end(), requested.begin(),
                          requested.end(), std::inserter(inter, inter.begin()));
    if (inter.size() != requested.size()) grids_match = false;
    common = std::move(inter);
  }

  CurveExportResult result;
  result.out_path = out_path;
  if (!grids_match) {
    result.warning =
        "curve_export: step grids differ across inputs; aligned by "
        "intersection (" +
        std::to_string(common.size()) + " steps)";
    std::cerr << result.warning << "\n";
  }
  result.empty_intersection = common.empty();

  std::ofstream out(out_path);
  if (!out) {
    throw std::runtime_error("curve_export: cannot open '" + out_path + "'");
  }
  out << "run,step,metric,value\n";
  for (const auto& rd : data) {
    for (std::uint64_t step : common) {
      for (const auto& m : metrics) {
        out << rd.name << "," << step << "," << m << ","
            << rd.cells.at(step).at(m) << "\n";
        ++result.rows;
      }
    }
  }
  return result;
}

}  // namespace irlm
