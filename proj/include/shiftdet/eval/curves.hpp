// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shiftdet/core/errors.hpp"
#include "shiftdet/training/trainer.hpp"

namespace shiftdet {

// Named series sharing one iteration axis. Missing values are nullopt.
struct CurveTable {
  std::vector<int> iteration;
  std::map<std::string, std::vector<std::optional<double>>> series;
};

inline void write_metrics_line(std::ostream& out, const IterationMetrics& m) { out << metrics_to_json(m).dump() << '\n'; }

inline std::vector<IterationMetrics> read_metrics_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<IterationMetrics> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(metrics_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed metrics record (" + e.what() + ")");
    }
  }
  return out;
}

// Per-iteration losses and FP ratio. Iterations are reported 1-based, as
// the number of completed steps.
inline CurveTable loss_curves(const std::vector<IterationMetrics>& log) {
  CurveTable t;
  auto& sup = t.series["sup"];
  auto& unsup = t.series["unsup"];
  auto& dis = t.series["dis"];
  auto& total = t.series["total"];
  auto& pseudo = t.series["pseudo_count"];
  auto& fp = t.series["fp_ratio"];
  for (const auto& m : log) {
    t.iteration.push_back(m.iteration + 1);
    sup.push_back(m.sup.total());
    unsup.push_back(m.unsup);
    dis.push_back(m.dis);
    total.push_back(m.total);
    pseudo.push_back(static_cast<double>(m.pseudo_count));
    fp.push_back(m.fp ? std::optional<double>(m.fp->ratio()) : std::nullopt);
  }
  return t;
}

// Rows where a periodic evaluation was logged.
inline CurveTable eval_curves(const std::vector<IterationMetrics>& log) {
  CurveTable t;
  auto& teacher = t.series["teacher_map"];
  auto& student = t.series["student_map"];
  for (const auto& m : log) {
    if (!m.teacher_map && !m.student_map) continue;
    t.iteration.push_back(m.iteration + 1);
    teacher.push_back(m.teacher_map);
    student.push_back(m.student_map);
  }
  return t;
}

// One column per run of a per-iteration quantity, e.g. the teacher mAP of
// each sweep point. Rows are the union of iterations where any run has a
// value.
inline CurveTable merge_runs(const std::map<std::string, const std::vector<IterationMetrics>*>& runs,
                             const std::function<std::optional<double>(const IterationMetrics&)>& value) {
  std::map<int, std::map<std::string, double>> rows;
  for (const auto& [name, log] : runs)
    for (const auto& m : *log)
      if (const auto v = value(m)) rows[m.iteration + 1][name] = *v;
  CurveTable t;
  for (const auto& [name, log] : runs) t.series[name];
  for (const auto& [it, vals] : rows) {
    t.iteration.push_back(it);
    for (auto& [name, col] : t.series) {
      auto f = vals.find(name);
      col.push_back(f == vals.end() ? std::nullopt : std::optional<double>(f->second));
    }
  }
  return t;
}

inline std::optional<double> reported_map(const IterationMetrics& m) {
  return m.teacher_map ? m.teacher_map : m.student_map;
}

inline std::optional<double> fp_ratio_of(const IterationMetrics& m) {
  return m.fp ? std::optional<double>(m.fp->ratio()) : std::nullopt;
}

// Mean of a series over iterations in [from, to).
inline std::optional<double> window_mean(const CurveTable& t, const std::string& name, int from, int to) {
  const auto& col = t.series.at(name);
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < t.iteration.size(); ++i)
    if (t.iteration[i] >= from && t.iteration[i] < to && col[i]) sum += *col[i], ++n;
  if (n == 0) return std::nullopt;
  return sum / n;
}

inline std::string curves_to_csv(const CurveTable& t) {
  std::ostringstream os;
  os.precision(17);
  os << "iteration";
  for (const auto& [name, col] : t.series) os << ',' << name;
  os << '\n';
  for (std::size_t i = 0; i < t.iteration.size(); ++i) {
    os << t.iteration[i];
    for (const auto& [name, col] : t.series) {
      os << ',';
      if (col[i]) os << *col[i];
    }
    os << '\n';
  }
  return os.str();
}

inline CurveTable curves_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  CurveTable t;
  if (!std::getline(in, line)) throw DataError("empty curve file");
  std::vector<std::string> names;
  {
    std::istringstream hs(line);
    std::string cell;
    std::getline(hs, cell, ',');
    if (cell != "iteration") throw DataError("curve file must start with an iteration column");
    while (std::getline(hs, cell, ',')) names.push_back(cell), t.series[cell];
  }
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    if (cells.size() != names.size() + 1) throw DataError("curve row " + std::to_string(row) + " has the wrong width");
    try {
      t.iteration.push_back(std::stoi(cells[0]));
      for (std::size_t i = 0; i < names.size(); ++i)
        t.series[names[i]].push_back(cells[i + 1].empty() ? std::nullopt : std::optional<double>(std::stod(cells[i + 1])));
    } catch (const std::logic_error&) {
      throw DataError("curve row " + std::to_string(row) + " is not numeric");
    }
  }
  return t;
}

}  // namespace shiftdet
