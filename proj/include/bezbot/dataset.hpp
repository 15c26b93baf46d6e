#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bezbot/dynamics.hpp"
#include "bezbot/errors.hpp"

namespace bezbot {

namespace csv {

// %.17g keeps doubles bit-exact across write/read.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(line);
  while (std::getline(in, item, ',')) out.push_back(item);
  return out;
}

}  // namespace csv

// Transition dataset file: header row, then one row per sample laid out as
// x0 columns, u columns, x1 columns.
inline void write_dataset(const Dataset& ds, const std::string& path, const std::string& prefix,
                          int state_dim, int input_dim) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (int i = 0; i < state_dim; ++i) out << prefix << "0_" << i << ",";
  for (int i = 0; i < input_dim; ++i) out << "u_" << i << ",";
  for (int i = 0; i < state_dim; ++i) out << prefix << "1_" << i << (i + 1 < state_dim ? "," : "");
  out << "\n";
  for (const auto& s : ds.samples) {
    for (int i = 0; i < state_dim; ++i) out << csv::fmt(s.x0[i]) << ",";
    for (int i = 0; i < input_dim; ++i) out << csv::fmt(s.u[i]) << ",";
    for (int i = 0; i < state_dim; ++i)
      out << csv::fmt(s.x1[i]) << (i + 1 < state_dim ? "," : "");
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

inline Dataset read_dataset(const std::string& path, int state_dim, int input_dim) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty dataset file: " + path);
  const std::size_t expect = 2 * static_cast<std::size_t>(state_dim) + input_dim;
  if (csv::split_line(line).size() != expect)
    throw IoError("dataset " + path + " has wrong column count for state_dim " +
                  std::to_string(state_dim));
  Dataset ds;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = csv::split_line(line);
    if (cells.size() != expect) throw IoError("ragged row in dataset: " + path);
    TransitionSample s;
    s.x0.resize(state_dim);
    s.u.resize(input_dim);
    s.x1.resize(state_dim);
    std::size_t k = 0;
    for (int i = 0; i < state_dim; ++i) s.x0[i] = std::stod(cells[k++]);
    for (int i = 0; i < input_dim; ++i) s.u[i] = std::stod(cells[k++]);
    for (int i = 0; i < state_dim; ++i) s.x1[i] = std::stod(cells[k++]);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace bezbot
