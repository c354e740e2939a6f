#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "artree/eval.hpp"
#include "artree/rng.hpp"

using namespace artree;

namespace {

FeatureTable blob_table(int rows_per_class, double noise, std::uint64_t seed) {
  FeatureTable table;
  table.scheme = LabelScheme::BC;
  table.n_channels = 1;
  Rng rng(seed);
  for (int i = 0; i < rows_per_class; ++i) {
    for (int cls = 0; cls < 2; ++cls) {
      FeatureRow row;
      row.patient = "p" + std::to_string(i % 3);
      row.start_s = i;
      const double base = cls == 0 ? 0.0 : 100.0;
      for (int f = 0; f < 5; ++f) row.features.values.push_back(base + rng.uniform(0, 10));
      row.labels = {rng.next_double() < noise ? 1 - cls : cls};
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

}  // namespace

TEST_CASE("f1_score basics and Eq.-style evaluation") {
  CHECK(f1_score(0.5, 0.5) == doctest::Approx(0.5));
  CHECK(f1_score(1.0, 0.0) == 0.0);
  CHECK(f1_score(0.0, 0.0) == 0.0);
  CHECK(f1_score(0.853, 0.829) == doctest::Approx(0.84083).epsilon(1e-5));
}

TEST_CASE("metrics from a hand-built 3-class confusion matrix") {
  const std::vector<std::vector<std::uint64_t>> confusion = {
      {5, 0, 0}, {1, 3, 0}, {0, 1, 2}};
  const Metrics m = metrics_from_confusion(confusion);

  CHECK(m.accuracy == doctest::Approx(10.0 / 12.0));
  CHECK(m.micro_f1 == doctest::Approx(m.accuracy));

  // Independent spreadsheet-style recomputation from first principles.
  double weighted = 0.0, macro = 0.0, support_total = 0.0;
  for (int c = 0; c < 3; ++c) {
    double support = 0.0, predicted = 0.0;
    for (int k = 0; k < 3; ++k) {
      support += static_cast<double>(confusion[c][k]);
      predicted += static_cast<double>(confusion[k][c]);
    }
    const double tp = static_cast<double>(confusion[c][c]);
    const double precision = predicted > 0 ? tp / predicted : 0.0;
    const double recall = support > 0 ? tp / support : 0.0;
    const double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    CHECK(m.precision[c] == doctest::Approx(precision));
    CHECK(m.recall[c] == doctest::Approx(recall));
    CHECK(m.f1[c] == doctest::Approx(f1));
    weighted += support * f1;
    macro += f1;
    support_total += support;
  }
  CHECK(m.weighted_f1 == doctest::Approx(weighted / support_total));
  CHECK(m.macro_f1 == doctest::Approx(macro / 3.0));
  // Frozen values for the record.
  CHECK(m.weighted_f1 == doctest::Approx(0.8287878787878787).epsilon(1e-12));
  CHECK(m.macro_f1 == doctest::Approx(0.8196969696969697).epsilon(1e-12));
}

TEST_CASE("degenerate all-background predictor on a 10% artifact set") {
  const std::vector<std::vector<std::uint64_t>> confusion = {{90, 0}, {10, 0}};
  const Metrics m = metrics_from_confusion(confusion);
  CHECK(m.accuracy == doctest::Approx(0.9));
  CHECK(m.f1[1] == 0.0);
  CHECK(m.recall[1] == 0.0);
}

TEST_CASE("weighted F1 equals macro F1 for balanced supports") {
  const std::vector<std::vector<std::uint64_t>> confusion = {
      {8, 1, 1}, {2, 7, 1}, {3, 0, 7}};
  const Metrics m = metrics_from_confusion(confusion);
  CHECK(m.weighted_f1 == doctest::Approx(m.macro_f1).epsilon(1e-12));
}

TEST_CASE("accuracy equals the confusion trace ratio exactly") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(5));
    std::vector<std::vector<std::uint64_t>> confusion(n, std::vector<std::uint64_t>(n));
    std::uint64_t total = 0, trace = 0;
    for (int t = 0; t < n; ++t) {
      for (int p = 0; p < n; ++p) {
        confusion[t][p] = rng.below(50);
        total += confusion[t][p];
        if (t == p) trace += confusion[t][p];
      }
    }
    if (total == 0) continue;
    const Metrics m = metrics_from_confusion(confusion);
    CHECK(m.accuracy == static_cast<double>(trace) / static_cast<double>(total));
    std::uint64_t sum = 0;
    for (const auto s : m.support) sum += s;
    CHECK(sum == total);
  }
}

TEST_CASE("evaluate: perfect predictions and arity checks") {
  const FeatureTable table = blob_table(40, 0.0, 4);
  const ForestModel forest = grow_forest(table, 8, {}, 11, 2);
  const CompactForest packed = pack_forest(forest);

  const Metrics pointer_metrics = evaluate(forest, table, 2);
  const Metrics compact_metrics = evaluate(packed, table, 2);
  CHECK(pointer_metrics.accuracy == 1.0);
  CHECK(pointer_metrics.weighted_f1 == 1.0);
  CHECK(compact_metrics.accuracy == 1.0);
  CHECK(compact_metrics.confusion == pointer_metrics.confusion);

  FeatureTable wrong = table;
  wrong.scheme = LabelScheme::MC;
  for (auto& row : wrong.rows) row.labels = {0};
  CHECK_THROWS_AS(evaluate(packed, wrong, 1), std::invalid_argument);
}

TEST_CASE("multi-output evaluation pools (window, channel) pairs") {
  FeatureTable table;
  table.scheme = LabelScheme::MMC;
  table.n_channels = 2;
  Rng rng(14);
  for (int i = 0; i < 150; ++i) {
    FeatureRow row;
    row.patient = "p";
    row.start_s = i;
    const int cls = static_cast<int>(rng.below(3));
    for (int f = 0; f < 10; ++f) row.features.values.push_back(cls * 40.0 + rng.uniform(0, 8));
    row.labels = {cls, cls == 2 ? 5 : 0};
    table.rows.push_back(std::move(row));
  }
  const ForestModel forest = grow_forest(table, 8, {}, 30, 2);
  const Metrics m = evaluate(pack_forest(forest), table, 2);
  std::uint64_t total = 0;
  for (const auto& row : m.confusion) {
    for (const auto count : row) total += count;
  }
  CHECK(total == table.rows.size() * 2);  // one pair per (window, channel)
  CHECK(m.confusion.size() == 13);
  CHECK(m.accuracy == 1.0);  // memorized training set
}

TEST_CASE("evaluate is independent of the thread count") {
  const FeatureTable table = blob_table(100, 0.3, 6);
  const ForestModel forest = grow_forest(table, 8, {}, 3, 2);
  const CompactForest packed = pack_forest(forest);
  const Metrics m1 = evaluate(packed, table, 1);
  const Metrics m8 = evaluate(packed, table, 8);
  CHECK(m1.confusion == m8.confusion);
  CHECK(m1.accuracy == m8.accuracy);
}

TEST_CASE("prune_curve shape and endpoints") {
  const FeatureTable table = blob_table(80, 0.25, 12);
  const ForestModel forest = grow_forest(table, 8, {}, 21, 2);

  const auto curve = prune_curve(forest, table, nullptr, 2);
  REQUIRE(curve.size() >= 2);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    CHECK(curve[i].alpha > curve[i - 1].alpha);
    CHECK(curve[i].node_count <= curve[i - 1].node_count);
  }

  // Endpoints agree with direct evaluation of the zero-collapsed and
  // root-only forests.
  const Metrics at_zero = evaluate(prune_forest_at_alpha(forest, 0.0), table, 2);
  CHECK(curve.front().accuracy == doctest::Approx(at_zero.accuracy));
  const Metrics at_max =
      evaluate(prune_forest_at_alpha(forest, curve.back().alpha), table, 2);
  CHECK(curve.back().accuracy == doctest::Approx(at_max.accuracy));
  CHECK(curve.back().node_count == 8);  // every tree a root leaf

  // Single-alpha grid.
  const std::vector<double> zero_grid = {0.0};
  const auto single = prune_curve(forest, table, &zero_grid, 2);
  REQUIRE(single.size() == 1);
  CHECK(single[0].accuracy == doctest::Approx(at_zero.accuracy));

  // Subsampling keeps endpoints.
  const auto sub = prune_curve(forest, table, nullptr, 2, 5);
  CHECK(sub.size() <= 5);
  CHECK(sub.front().alpha == curve.front().alpha);
  CHECK(sub.back().alpha == curve.back().alpha);
}

TEST_CASE("accuracy at minimal size does not beat the full forest on separable data") {
  const FeatureTable table = blob_table(60, 0.0, 44);
  const ForestModel forest = grow_forest(table, 8, {}, 5, 2);
  const auto curve = prune_curve(forest, table, nullptr, 2);
  CHECK(curve.back().accuracy <= curve.front().accuracy);
}

TEST_CASE("bench_inference on a single-leaf forest visits exactly one node") {
  FeatureTable table = blob_table(5, 0.0, 1);
  ForestModel forest;
  forest.scheme = LabelScheme::BC;
  forest.n_classes = 2;
  forest.n_outputs = 1;
  forest.n_features = 5;
  Tree leaf;
  leaf.n_classes = 2;
  leaf.nodes.emplace_back();
  leaf.nodes[0].n_samples = 1;
  leaf.nodes[0].class_counts = {1, 0};
  forest.outputs = {{leaf}};
  const CompactForest packed = pack_forest(forest);

  const BenchResult result = bench_inference(packed, table, 3);
  CHECK(result.mean_nodes_visited == 1.0);
  CHECK(result.inferences == 30);  // 5 rows x 2 classes x 3 reps
  CHECK(result.windows_per_s > 0.0);

  const BenchResult again = bench_inference(packed, table, 3);
  CHECK(again.mean_nodes_visited == result.mean_nodes_visited);
}

TEST_CASE("bench_inference on depth-capped forests stays within 21 nodes per tree") {
  const FeatureTable table = blob_table(50, 0.3, 9);
  GrowParams params;
  params.max_depth = 20;
  const ForestModel forest = grow_forest(table, 8, params, 2, 2);
  const BenchResult result = bench_inference(pack_forest(forest), table, 2);
  CHECK(result.mean_nodes_visited <= 21.0);
  CHECK_THROWS_AS(bench_inference(pack_forest(forest), FeatureTable{}, 1),
                  std::invalid_argument);
}

TEST_CASE("metrics and curve CSV emission is stable") {
  const std::vector<std::vector<std::uint64_t>> confusion = {{3, 1}, {0, 4}};
  std::ostringstream metrics_out;
  write_metrics_csv(metrics_from_confusion(confusion), metrics_out);
  const std::string text = metrics_out.str();
  CHECK(text.find("metric,value\naccuracy,0.875000\n") != std::string::npos);
  CHECK(text.find("class,precision,recall,f1,support\n") != std::string::npos);
  CHECK(text.find("true0,3,1\n") != std::string::npos);

  std::ostringstream curve_out;
  write_prune_curve_csv({{0.0, 100, 918, 0.95, 0.9}}, curve_out);
  CHECK(curve_out.str() == "alpha,nodes,bytes,accuracy,f1\n0,100,918,0.950000,0.900000\n");
}
