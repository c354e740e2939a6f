#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "artree/compact.hpp"
#include "artree/dataset.hpp"
#include "artree/forest.hpp"

namespace artree {

// 2*P*R/(P+R); 0 when P+R == 0.
double f1_score(double precision, double recall);

struct Metrics {
  std::vector<std::vector<std::uint64_t>> confusion;  // [true][predicted]
  double accuracy = 0.0;
  std::vector<double> precision, recall, f1;  // per class
  std::vector<std::uint64_t> support;         // true count per class
  double macro_f1 = 0.0;     // unweighted mean over all classes
  double weighted_f1 = 0.0;  // support-weighted mean
  double micro_f1 = 0.0;     // pooled; equals accuracy for single-label outputs
};

Metrics metrics_from_confusion(std::vector<std::vector<std::uint64_t>> confusion);

// Pooled over (window, output) pairs: BC contributes one pair per window,
// MC/MMC one per channel. Parallel over rows with per-thread confusion
// matrices merged at the end.
Metrics evaluate(const CompactForest& forest, const FeatureTable& table,
                 unsigned threads);
Metrics evaluate(const ForestModel& forest, const FeatureTable& table,
                 unsigned threads);

struct PruneCurveRow {
  double alpha = 0.0;
  std::uint64_t node_count = 0;
  std::uint64_t size_bytes = 0;  // exact serialized size
  double accuracy = 0.0;
  double f1 = 0.0;  // weighted F1
};

// One row per critical alpha (merged over every tree), optionally subsampled
// to at most max_points rows keeping both endpoints. Node counts are
// non-increasing along the curve.
std::vector<PruneCurveRow> prune_curve(const ForestModel& forest,
                                       const FeatureTable& eval_set,
                                       const std::vector<double>* alpha_grid,
                                       unsigned threads, std::size_t max_points = 0);

struct BenchResult {
  double windows_per_s = 0.0;
  double mean_us = 0.0;
  double p99_us = 0.0;
  double mean_nodes_visited = 0.0;  // per tree
  std::uint64_t inferences = 0;
};

// Wall-clock microbenchmark with one warm-up pass over the table.
BenchResult bench_inference(const CompactForest& forest, const FeatureTable& table,
                            int repetitions);

// Stable CSV emission (schema documented in the README).
void write_metrics_csv(const Metrics& metrics, std::ostream& out);
void write_prune_curve_csv(const std::vector<PruneCurveRow>& rows, std::ostream& out);

}  // namespace artree
