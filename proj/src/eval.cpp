#include "artree/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "artree/parallel.hpp"

namespace artree {

double f1_score(double precision, double recall) {
  const double denom = precision + recall;
  if (denom == 0.0) return 0.0;
  return 2.0 * precision * recall / denom;
}

Metrics metrics_from_confusion(std::vector<std::vector<std::uint64_t>> confusion) {
  Metrics m;
  const std::size_t n_classes = confusion.size();
  m.confusion = std::move(confusion);
  m.precision.assign(n_classes, 0.0);
  m.recall.assign(n_classes, 0.0);
  m.f1.assign(n_classes, 0.0);
  m.support.assign(n_classes, 0);

  std::uint64_t total = 0, diagonal = 0;
  std::vector<std::uint64_t> predicted(n_classes, 0);
  for (std::size_t t = 0; t < n_classes; ++t) {
    for (std::size_t p = 0; p < n_classes; ++p) {
      const std::uint64_t count = m.confusion[t][p];
      total += count;
      m.support[t] += count;
      predicted[p] += count;
      if (t == p) diagonal += count;
    }
  }
  m.accuracy = total > 0 ? static_cast<double>(diagonal) / static_cast<double>(total) : 0.0;
  m.micro_f1 = m.accuracy;

  double f1_sum = 0.0, weighted_sum = 0.0, support_sum = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const auto tp = static_cast<double>(m.confusion[c][c]);
    m.precision[c] = predicted[c] > 0 ? tp / static_cast<double>(predicted[c]) : 0.0;
    m.recall[c] = m.support[c] > 0 ? tp / static_cast<double>(m.support[c]) : 0.0;
    m.f1[c] = f1_score(m.precision[c], m.recall[c]);
    f1_sum += m.f1[c];
    weighted_sum += static_cast<double>(m.support[c]) * m.f1[c];
    support_sum += static_cast<double>(m.support[c]);
  }
  m.macro_f1 = n_classes > 0 ? f1_sum / static_cast<double>(n_classes) : 0.0;
  m.weighted_f1 = support_sum > 0.0 ? weighted_sum / support_sum : 0.0;
  return m;
}

namespace {

void check_arity(int n_features, int n_outputs, LabelScheme scheme,
                 const FeatureTable& table) {
  if (table.scheme != scheme) {
    throw std::invalid_argument("evaluate: feature table scheme does not match the model");
  }
  if (table.n_features() != n_features || table.n_outputs() != n_outputs) {
    throw std::invalid_argument("evaluate: feature table arity does not match the model");
  }
}

template <typename PredictRow>
Metrics evaluate_rows(const FeatureTable& table, int n_classes, int n_outputs,
                      unsigned threads, const PredictRow& predict_row) {
  const std::size_t rows = table.rows.size();
  const unsigned workers = resolve_threads(threads);
  std::vector<std::vector<std::vector<std::uint64_t>>> partial(
      workers, std::vector<std::vector<std::uint64_t>>(
                   n_classes, std::vector<std::uint64_t>(n_classes, 0)));

  // Mirrors the partitioning inside parallel_chunks, so begin/chunk indexes
  // a worker-private confusion matrix.
  const std::size_t chunk = workers > 0 ? (rows + workers - 1) / workers : rows;
  parallel_chunks(rows, threads, [&](std::size_t begin, std::size_t end) {
    auto& confusion = partial[chunk > 0 ? begin / chunk : 0];
    std::vector<int> predictions(n_outputs);
    for (std::size_t i = begin; i < end; ++i) {
      const FeatureRow& row = table.rows[i];
      predict_row(row, predictions);
      for (int o = 0; o < n_outputs; ++o) {
        ++confusion[row.labels[o]][predictions[o]];
      }
    }
  });

  std::vector<std::vector<std::uint64_t>> confusion(
      n_classes, std::vector<std::uint64_t>(n_classes, 0));
  for (const auto& part : partial) {
    for (int t = 0; t < n_classes; ++t) {
      for (int p = 0; p < n_classes; ++p) confusion[t][p] += part[t][p];
    }
  }
  return metrics_from_confusion(std::move(confusion));
}

}  // namespace

Metrics evaluate(const CompactForest& forest, const FeatureTable& table,
                 unsigned threads) {
  check_arity(forest.n_features, forest.n_outputs, forest.scheme, table);
  return evaluate_rows(table, forest.n_classes, forest.n_outputs, threads,
                       [&](const FeatureRow& row, std::vector<int>& out) {
                         for (int o = 0; o < forest.n_outputs; ++o) {
                           out[o] = predict_compact(forest, row.features.values, o);
                         }
                       });
}

Metrics evaluate(const ForestModel& forest, const FeatureTable& table,
                 unsigned threads) {
  check_arity(forest.n_features, forest.n_outputs, forest.scheme, table);
  return evaluate_rows(table, forest.n_classes, forest.n_outputs, threads,
                       [&](const FeatureRow& row, std::vector<int>& out) {
                         const auto p = predict_forest(forest, row.features.values);
                         std::copy(p.begin(), p.end(), out.begin());
                       });
}

std::vector<PruneCurveRow> prune_curve(const ForestModel& forest,
                                       const FeatureTable& eval_set,
                                       const std::vector<double>* alpha_grid,
                                       unsigned threads, std::size_t max_points) {
  std::vector<double> alphas;
  if (alpha_grid != nullptr) {
    alphas = *alpha_grid;
    std::sort(alphas.begin(), alphas.end());
    alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());
  } else {
    alphas = merged_critical_alphas(forest);
  }
  if (alphas.empty()) alphas.push_back(0.0);
  if (max_points > 1 && alphas.size() > max_points) {
    std::vector<double> kept;
    kept.reserve(max_points);
    for (std::size_t j = 0; j < max_points; ++j) {
      const std::size_t idx = j * (alphas.size() - 1) / (max_points - 1);
      kept.push_back(alphas[idx]);
    }
    kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
    alphas = std::move(kept);
  }

  // Cache every tree's pruning schedule once.
  std::vector<const Tree*> trees;
  for (const auto& out : forest.outputs) {
    for (const auto& tree : out) trees.push_back(&tree);
  }
  std::vector<CcpSequence> seqs(trees.size());
  parallel_chunks(trees.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) seqs[i] = cost_complexity_sequence(*trees[i]);
  });

  std::vector<PruneCurveRow> rows;
  rows.reserve(alphas.size());
  for (const double alpha : alphas) {
    ForestModel pruned = forest;
    std::size_t flat = 0;
    for (auto& out : pruned.outputs) {
      for (auto& tree : out) {
        tree = prune_at_alpha(tree, seqs[flat], alpha);
        ++flat;
      }
    }
    const CompactForest packed = pack_forest(pruned);
    const Metrics metrics = evaluate(packed, eval_set, threads);
    rows.push_back({alpha, packed.total_nodes(), packed_size_bytes(packed),
                    metrics.accuracy, metrics.weighted_f1});
  }
  return rows;
}

BenchResult bench_inference(const CompactForest& forest, const FeatureTable& table,
                            int repetitions) {
  if (table.rows.empty()) {
    throw std::invalid_argument("bench_inference: need at least one feature vector");
  }
  if (repetitions < 1) repetitions = 1;
  const auto trees_per_inference =
      static_cast<double>(forest.total_trees());

  // Warm-up pass.
  std::uint64_t sink = 0;
  for (const auto& row : table.rows) {
    for (int o = 0; o < forest.n_outputs; ++o) {
      sink += static_cast<std::uint64_t>(predict_compact(forest, row.features.values, o));
    }
  }

  using clock = std::chrono::steady_clock;
  std::vector<double> latencies_us;
  latencies_us.reserve(table.rows.size() * static_cast<std::size_t>(repetitions));
  std::uint64_t visited = 0;
  const auto t_begin = clock::now();
  for (int rep = 0; rep < repetitions; ++rep) {
    for (const auto& row : table.rows) {
      const auto t0 = clock::now();
      for (int o = 0; o < forest.n_outputs; ++o) {
        sink += static_cast<std::uint64_t>(
            predict_compact(forest, row.features.values, o, &visited));
      }
      const auto t1 = clock::now();
      latencies_us.push_back(
          std::chrono::duration<double, std::micro>(t1 - t0).count());
    }
  }
  const auto t_end = clock::now();
  (void)sink;

  BenchResult result;
  result.inferences = latencies_us.size();
  double sum = 0.0;
  for (const double v : latencies_us) sum += v;
  result.mean_us = sum / static_cast<double>(latencies_us.size());
  std::sort(latencies_us.begin(), latencies_us.end());
  const auto p99_idx = static_cast<std::size_t>(
      std::min<double>(static_cast<double>(latencies_us.size()) - 1.0,
                       std::ceil(0.99 * static_cast<double>(latencies_us.size())) - 1.0));
  result.p99_us = latencies_us[p99_idx];
  const double total_s =
      std::chrono::duration<double>(t_end - t_begin).count();
  result.windows_per_s =
      total_s > 0.0 ? static_cast<double>(result.inferences) / total_s : 0.0;
  // Each inference walks every tree of every output once.
  result.mean_nodes_visited =
      static_cast<double>(visited) /
      (static_cast<double>(result.inferences) * trees_per_inference);
  return result;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

void write_metrics_csv(const Metrics& metrics, std::ostream& out) {
  out << "metric,value\n";
  out << "accuracy," << fmt(metrics.accuracy) << "\n";
  out << "macro_f1," << fmt(metrics.macro_f1) << "\n";
  out << "weighted_f1," << fmt(metrics.weighted_f1) << "\n";
  out << "micro_f1," << fmt(metrics.micro_f1) << "\n";
  out << "class,precision,recall,f1,support\n";
  for (std::size_t c = 0; c < metrics.f1.size(); ++c) {
    out << c << ',' << fmt(metrics.precision[c]) << ',' << fmt(metrics.recall[c])
        << ',' << fmt(metrics.f1[c]) << ',' << metrics.support[c] << "\n";
  }
  out << "confusion";
  for (std::size_t c = 0; c < metrics.confusion.size(); ++c) out << ",pred" << c;
  out << "\n";
  for (std::size_t t = 0; t < metrics.confusion.size(); ++t) {
    out << "true" << t;
    for (const auto count : metrics.confusion[t]) out << ',' << count;
    out << "\n";
  }
}

void write_prune_curve_csv(const std::vector<PruneCurveRow>& rows, std::ostream& out) {
  out << "alpha,nodes,bytes,accuracy,f1\n";
  for (const auto& row : rows) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", row.alpha);
    out << buf << ',' << row.node_count << ',' << row.size_bytes << ','
        << fmt(row.accuracy) << ',' << fmt(row.f1) << "\n";
  }
}

}  // namespace artree
