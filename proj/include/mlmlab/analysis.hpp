#pragma once
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlmlab/checkpoint.hpp"  // format_double
#include "mlmlab/flops.hpp"
#include "mlmlab/metrics.hpp"
#include "mlmlab/objective.hpp"
#include "mlmlab/svg.hpp"

namespace mlmlab {

struct ExperimentResult {
  ObjectiveSpec objective;
  int num_classes = 0;
  double total_flops = 0.0;                      // 0 when unknown
  std::map<std::string, MeanStd> task_scores;    // task name -> score over seeds
};

enum class ComplexityAxis { kN, kLogClasses };

inline std::string axis_name(ComplexityAxis a) {
  return a == ComplexityAxis::kN ? "n" : "log10(num_classes)";
}

struct CorrelationReport {
  std::string family;  // "first" | "last"
  std::string task;
  std::string axis;
  double r = 0.0;
  int point_count = 0;
  bool degenerate = false;  // constant inputs
};

// Pearson r between a complexity axis and a task score across the family's
// 29-way baseline, its n-Chars sweep, and MLM. The raw-n axis has no value
// for MLM, so that variant drops the MLM point (axis tag says which).
inline CorrelationReport complexity_correlation(const std::vector<ExperimentResult>& results,
                                                const std::string& family,
                                                const std::string& task, ComplexityAxis axis) {
  if (family != "first" && family != "last")
    throw std::invalid_argument("complexity_correlation: family must be first|last");
  std::vector<std::pair<double, double>> points;  // (axis value, score)
  for (const auto& r : results) {
    auto it = r.task_scores.find(task);
    if (it == r.task_scores.end()) continue;
    bool is_mlm = r.objective.kind == ObjectiveKind::kMlm;
    if (!is_mlm && r.objective.direction_name() != family) continue;
    double x;
    if (axis == ComplexityAxis::kN) {
      if (is_mlm) continue;
      x = static_cast<double>(r.objective.n_for_report());
    } else {
      if (r.num_classes < 1)
        throw std::invalid_argument("complexity_correlation: missing num_classes");
      x = std::log10(static_cast<double>(r.num_classes));
    }
    points.emplace_back(x, it->second.mean);
  }
  if (points.size() < 3)
    throw std::invalid_argument("complexity_correlation: fewer than 3 points for task " + task);
  std::vector<double> xs, ys;
  for (auto [x, y] : points) {
    xs.push_back(x);
    ys.push_back(y);
  }
  CorrelationReport rep;
  rep.family = family;
  rep.task = task;
  rep.axis = axis_name(axis);
  rep.point_count = static_cast<int>(points.size());
  bool xs_const = std::all_of(xs.begin(), xs.end(), [&](double v) { return v == xs[0]; });
  bool ys_const = std::all_of(ys.begin(), ys.end(), [&](double v) { return v == ys[0]; });
  if (xs_const || ys_const) {
    rep.degenerate = true;
    rep.r = 0.0;
  } else {
    rep.r = pearson_r(xs, ys);
  }
  return rep;
}

struct CostBenefitCell {
  double score = 0.0;
  double relative_diff = 0.0;  // percent vs MLM, one-decimal rounded
};

struct CostBenefitRow {
  ObjectiveSpec objective;
  int num_classes = 0;
  double total_flops = 0.0;
  double flops_relative_diff = 0.0;
  std::map<std::string, CostBenefitCell> tasks;
};

// Per-objective scores with parenthetical percentage differences vs MLM.
inline std::vector<CostBenefitRow> cost_benefit_table(
    const std::vector<ExperimentResult>& results) {
  const ExperimentResult* mlm = nullptr;
  for (const auto& r : results)
    if (r.objective.kind == ObjectiveKind::kMlm) mlm = &r;
  if (!mlm) throw std::invalid_argument("cost_benefit_table: missing MLM baseline row");
  std::vector<CostBenefitRow> rows;
  for (const auto& r : results) {
    CostBenefitRow row;
    row.objective = r.objective;
    row.num_classes = r.num_classes;
    row.total_flops = r.total_flops;
    if (r.total_flops > 0 && mlm->total_flops > 0)
      row.flops_relative_diff = round1(relative_difference(r.total_flops, mlm->total_flops));
    for (const auto& [task, score] : r.task_scores) {
      auto base = mlm->task_scores.find(task);
      if (base == mlm->task_scores.end()) continue;  // no baseline for this task
      CostBenefitCell cell;
      cell.score = score.mean;
      cell.relative_diff = round1(relative_difference(score.mean, base->second.mean));
      row.tasks[task] = cell;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---- figure data (class-count sweep) --------------------------------------

inline void write_class_sweep_csv(const std::vector<ClassCountRow>& sweep,
                                  const std::filesystem::path& path) {
  auto sorted = sweep;
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.direction != b.direction) return a.direction < b.direction;
    return a.n < b.n;
  });
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "direction,n,num_classes\n";
  for (const auto& r : sorted) f << r.direction << "," << r.n << "," << r.num_classes << "\n";
}

inline std::string render_class_sweep_svg(const std::vector<ClassCountRow>& sweep) {
  if (sweep.empty()) throw std::invalid_argument("render_class_sweep_svg: empty sweep");
  SvgLineChart chart("Prediction classes per objective", "n (characters)", "classes");
  for (const std::string& dir : {std::string("first"), std::string("last")}) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : sweep)
      if (r.direction == dir && r.n >= 1)
        pts.emplace_back(static_cast<double>(r.n), static_cast<double>(r.num_classes));
    if (!pts.empty()) chart.add_series(dir + " n chars", std::move(pts));
    for (const auto& r : sweep)
      if (r.direction == dir && r.n == 0)
        chart.add_hline(dir + " char (29)", static_cast<double>(r.num_classes));
  }
  for (const auto& r : sweep)
    if (r.direction == "mlm") chart.add_hline("mlm (|V|)", static_cast<double>(r.num_classes));
  return chart.render();
}

// ---- results CSV ingest / emission -----------------------------------------

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

inline constexpr const char* kMetricsCsvHeader =
    "objective,direction,n,num_classes,task,metric,mean,std,seed_count";
inline constexpr const char* kFlopsCsvHeader =
    "objective,direction,n,num_classes,total_flops,relative_reduction_pct";

// Merges every metrics/FLOPs CSV found under `dir` (recognized by header)
// into per-objective experiment results. Metric selection: each task
// contributes its headline metric row ("accuracy" for classification,
// "span_f1_with_miss" for span) unless metric_filter names another one.
inline std::vector<ExperimentResult> load_results_dir(const std::filesystem::path& dir,
                                                      const std::string& metric_filter = "") {
  std::map<std::string, ExperimentResult> by_objective;
  auto touch = [&](const std::string& obj, int num_classes) -> ExperimentResult& {
    auto& r = by_objective[obj];
    r.objective = ObjectiveSpec::parse(obj);
    if (num_classes > 0) r.num_classes = num_classes;
    return r;
  };
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    std::ifstream f(file, std::ios::binary);
    std::string header;
    if (!std::getline(f, header)) continue;
    if (!header.empty() && header.back() == '\r') header.pop_back();
    std::string line;
    if (header == kMetricsCsvHeader) {
      while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto c = split_csv_line(line);
        if (c.size() != 9) throw std::runtime_error(file.string() + ": malformed metrics row");
        bool headline = c[5] == "accuracy" || c[5] == "span_f1_with_miss";
        if (!metric_filter.empty() ? c[5] != metric_filter : !headline) continue;
        auto& r = touch(c[0], std::stoi(c[3]));
        r.task_scores[c[4]] = {std::stod(c[6]), std::stod(c[7])};
      }
    } else if (header == kFlopsCsvHeader) {
      while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto c = split_csv_line(line);
        if (c.size() != 6) throw std::runtime_error(file.string() + ": malformed flops row");
        touch(c[0], std::stoi(c[3])).total_flops = std::stod(c[4]);
      }
    }
  }
  std::vector<ExperimentResult> out;
  for (auto& [obj, r] : by_objective) out.push_back(std::move(r));
  return out;
}

}  // namespace mlmlab
