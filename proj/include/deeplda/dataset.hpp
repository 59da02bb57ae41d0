#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "deeplda/errors.hpp"
#include "deeplda/matrix.hpp"

namespace deeplda {

struct Dataset {
  std::vector<Vec> points;
  std::vector<int> labels;
  int num_classes = 0;

  size_t size() const { return points.size(); }
  int dim() const { return points.empty() ? 0 : static_cast<int>(points[0].size()); }
};

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// CSV layout: header "x1,...,xd,y", one row per sample, labels as 0-based ints.
inline void write_dataset_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  const int d = ds.dim();
  for (int j = 0; j < d; ++j) out << "x" << (j + 1) << ",";
  out << "y\n";
  for (size_t i = 0; i < ds.size(); ++i) {
    for (int j = 0; j < d; ++j) out << format_double(ds.points[i][j]) << ",";
    out << ds.labels[i] << "\n";
  }
}

inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset file: " + path);
  int d = 0;
  {
    std::stringstream header(line);
    std::string col;
    while (std::getline(header, col, ',')) ++d;
    --d;  // last column is the label
  }
  if (d < 1) throw std::runtime_error("dataset header needs at least one feature column");
  Dataset ds;
  int max_label = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    Vec x(d);
    for (int j = 0; j < d; ++j) {
      if (!std::getline(row, cell, ',')) throw std::runtime_error("short row in " + path);
      x[j] = std::stod(cell);
    }
    if (!std::getline(row, cell, ',')) throw std::runtime_error("missing label in " + path);
    const int y = std::stoi(cell);
    if (y < 0) throw InvalidLabel("negative label in " + path);
    if (y > max_label) max_label = y;
    ds.points.push_back(std::move(x));
    ds.labels.push_back(y);
  }
  ds.num_classes = max_label + 1;
  return ds;
}

}  // namespace deeplda
