#include "artree/forest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "artree/compact.hpp"
#include "artree/parallel.hpp"
#include "artree/rng.hpp"

namespace artree {

namespace {

double gini(const std::vector<std::uint32_t>& counts, std::uint32_t n) {
  double sum = 0.0;
  for (const auto c : counts) {
    const double p = static_cast<double>(c) / n;
    sum += p * p;
  }
  return 1.0 - sum;
}

class Grower {
 public:
  Grower(const SampleView& samples, int n_classes, const GrowParams& params,
         std::uint64_t seed)
      : samples_(samples), n_classes_(n_classes), params_(params), rng_(seed) {
    const int d = samples.n_features;
    k_ = params.k_features > 0
             ? std::min(params.k_features, d)
             : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));
    feature_pool_.resize(d);
    for (int f = 0; f < d; ++f) feature_pool_[f] = f;
    indices_.resize(samples.n_samples());
    for (std::size_t i = 0; i < indices_.size(); ++i) indices_[i] = static_cast<std::uint32_t>(i);
  }

  Tree grow() {
    Tree tree;
    tree.n_classes = n_classes_;
    tree.nodes.reserve(64);
    build(tree, 0, indices_.size(), 0);
    return tree;
  }

 private:
  std::int32_t build(Tree& tree, std::size_t begin, std::size_t end, int depth) {
    const auto n = static_cast<std::uint32_t>(end - begin);
    const auto index = static_cast<std::int32_t>(tree.nodes.size());
    {
      TreeNode node;
      node.n_samples = n;
      node.class_counts.assign(n_classes_, 0);
      for (std::size_t i = begin; i < end; ++i) {
        ++node.class_counts[samples_.y[indices_[i]]];
      }
      tree.nodes.push_back(std::move(node));
    }
    const auto& counts = tree.nodes[index].class_counts;
    const std::uint32_t top = *std::max_element(counts.begin(), counts.end());
    const bool pure = top == n;
    const auto msl = static_cast<std::uint32_t>(params_.min_samples_leaf);
    if (pure || depth >= params_.max_depth || n < 2 * msl) return index;

    // Draw k distinct candidate features via partial Fisher-Yates; the pool
    // stays a permutation between nodes, so no reset is needed.
    const int d = samples_.n_features;
    for (int j = 0; j < k_; ++j) {
      const auto pick = j + static_cast<int>(rng_.below(static_cast<std::uint64_t>(d - j)));
      std::swap(feature_pool_[j], feature_pool_[pick]);
    }

    double best_impurity = std::numeric_limits<double>::infinity();
    int best_feature = -1;
    float best_threshold = 0.0f;
    std::vector<std::uint32_t> left_counts(n_classes_);

    for (int j = 0; j < k_; ++j) {
      const int f = feature_pool_[j];
      double lo = samples_.at(indices_[begin], f);
      double hi = lo;
      for (std::size_t i = begin + 1; i < end; ++i) {
        const double v = samples_.at(indices_[i], f);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (!(hi > lo)) continue;  // zero-width range

      const auto threshold = static_cast<float>(rng_.uniform(lo, hi));
      const auto widened = static_cast<double>(threshold);
      std::fill(left_counts.begin(), left_counts.end(), 0);
      std::uint32_t n_left = 0;
      for (std::size_t i = begin; i < end; ++i) {
        const std::uint32_t row = indices_[i];
        if (samples_.at(row, f) <= widened) {
          ++left_counts[samples_.y[row]];
          ++n_left;
        }
      }
      const std::uint32_t n_right = n - n_left;
      // Float rounding can push the threshold outside (lo, hi); the side
      // checks also reject such draws.
      if (n_left < msl || n_right < msl) continue;

      std::vector<std::uint32_t> right_counts(n_classes_);
      for (int c = 0; c < n_classes_; ++c) right_counts[c] = counts[c] - left_counts[c];
      const double impurity =
          (n_left * gini(left_counts, n_left) + n_right * gini(right_counts, n_right)) / n;
      if (impurity < best_impurity) {
        best_impurity = impurity;
        best_feature = f;
        best_threshold = threshold;
      }
    }
    if (best_feature < 0) return index;

    const auto widened = static_cast<double>(best_threshold);
    const auto mid = std::stable_partition(
        indices_.begin() + begin, indices_.begin() + end,
        [&](std::uint32_t row) { return samples_.at(row, best_feature) <= widened; });
    const auto split = static_cast<std::size_t>(mid - indices_.begin());

    tree.nodes[index].feature = static_cast<std::uint16_t>(best_feature);
    tree.nodes[index].threshold = best_threshold;
    const std::int32_t left = build(tree, begin, split, depth + 1);
    const std::int32_t right = build(tree, split, end, depth + 1);
    tree.nodes[index].left = left;
    tree.nodes[index].right = right;
    return index;
  }

  const SampleView& samples_;
  int n_classes_;
  GrowParams params_;
  Rng rng_;
  int k_ = 1;
  std::vector<int> feature_pool_;
  std::vector<std::uint32_t> indices_;
};

int majority_class(const TreeNode& node) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(node.class_counts.size()); ++c) {
    if (node.class_counts[c] > node.class_counts[best]) best = c;
  }
  return best;
}

}  // namespace

Tree grow_tree(const SampleView& samples, int n_classes, const GrowParams& params,
               std::uint64_t seed) {
  if (samples.n_samples() == 0) {
    throw std::invalid_argument("grow_tree: empty sample set");
  }
  if (samples.n_features <= 0) {
    throw std::invalid_argument("grow_tree: need at least one feature");
  }
  for (const int label : samples.y) {
    if (label < 0 || label >= n_classes) {
      throw std::invalid_argument("grow_tree: label out of range");
    }
  }
  Grower grower(samples, n_classes, params, seed);
  return grower.grow();
}

int predict_tree(const Tree& tree, std::span<const double> features) {
  std::size_t i = 0;
  while (!tree.nodes[i].is_leaf()) {
    const TreeNode& node = tree.nodes[i];
    if (features[node.feature] > static_cast<double>(node.threshold)) {
      i = static_cast<std::size_t>(node.right);
    } else {
      i = static_cast<std::size_t>(node.left);
    }
  }
  return majority_class(tree.nodes[i]);
}

std::size_t ForestModel::total_trees() const {
  std::size_t total = 0;
  for (const auto& trees : outputs) total += trees.size();
  return total;
}

std::size_t ForestModel::total_nodes() const {
  std::size_t total = 0;
  for (const auto& trees : outputs) {
    for (const auto& tree : trees) total += tree.node_count();
  }
  return total;
}

ForestModel grow_forest(const FeatureTable& table, int n_trees,
                        const GrowParams& params, std::uint64_t seed,
                        unsigned threads, int lane_width) {
  if (lane_width < 1) throw std::invalid_argument("grow_forest: lane width must be positive");
  if (n_trees <= 0 || n_trees % lane_width != 0) {
    throw std::invalid_argument("grow_forest: tree count must be a positive multiple of " +
                                std::to_string(lane_width));
  }
  if (table.rows.empty()) throw std::invalid_argument("grow_forest: empty feature table");

  ForestModel forest;
  forest.scheme = table.scheme;
  forest.n_classes = table.n_classes();
  forest.n_outputs = table.n_outputs();
  forest.n_features = table.n_features();
  forest.lane_width = lane_width;
  forest.params = params;
  forest.seed = seed;

  const std::size_t rows = table.rows.size();
  std::vector<double> x(rows * forest.n_features);
  std::vector<std::vector<int>> y(forest.n_outputs, std::vector<int>(rows));
  for (std::size_t i = 0; i < rows; ++i) {
    const auto& row = table.rows[i];
    if (static_cast<int>(row.features.values.size()) != forest.n_features ||
        static_cast<int>(row.labels.size()) != forest.n_outputs) {
      throw std::invalid_argument("grow_forest: row arity does not match the table scheme");
    }
    std::copy(row.features.values.begin(), row.features.values.end(),
              x.begin() + i * forest.n_features);
    for (int o = 0; o < forest.n_outputs; ++o) y[o][i] = row.labels[o];
  }

  forest.outputs.assign(forest.n_outputs, std::vector<Tree>(n_trees));
  const std::size_t jobs = static_cast<std::size_t>(forest.n_outputs) * n_trees;
  parallel_chunks(jobs, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      const auto o = static_cast<int>(j / n_trees);
      const auto i = static_cast<int>(j % n_trees);
      const SampleView view{x, y[o], forest.n_features};
      forest.outputs[o][i] =
          grow_tree(view, forest.n_classes, params, seed + j);
    }
  });
  return forest;
}

std::vector<int> predict_forest(const ForestModel& forest,
                                std::span<const double> features) {
  if (static_cast<int>(features.size()) != forest.n_features) {
    throw std::invalid_argument("predict_forest: feature length mismatch");
  }
  std::vector<int> result(forest.n_outputs);
  std::vector<std::uint32_t> votes(forest.n_classes);
  for (int o = 0; o < forest.n_outputs; ++o) {
    std::fill(votes.begin(), votes.end(), 0);
    for (const auto& tree : forest.outputs[o]) {
      ++votes[predict_tree(tree, features)];
    }
    int best = 0;
    for (int c = 1; c < forest.n_classes; ++c) {
      if (votes[c] > votes[best]) best = c;
    }
    result[o] = best;
  }
  return result;
}

void refit_statistics(ForestModel& forest, const FeatureTable& table) {
  if (table.n_features() != forest.n_features ||
      table.n_outputs() != forest.n_outputs || table.scheme != forest.scheme) {
    throw std::invalid_argument("refit_statistics: table arity does not match the model");
  }
  if (table.rows.empty()) {
    throw std::invalid_argument("refit_statistics: empty feature table");
  }
  std::vector<Tree*> trees;
  std::vector<int> outputs;
  for (int o = 0; o < forest.n_outputs; ++o) {
    for (auto& tree : forest.outputs[o]) {
      trees.push_back(&tree);
      outputs.push_back(o);
    }
  }
  parallel_chunks(trees.size(), 0, [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      Tree& tree = *trees[j];
      const int output = outputs[j];
      for (auto& node : tree.nodes) {
        node.n_samples = 0;
        node.class_counts.assign(forest.n_classes, 0);
      }
      for (const auto& row : table.rows) {
        const int label = row.labels[output];
        std::size_t i = 0;
        while (true) {
          TreeNode& node = tree.nodes[i];
          ++node.n_samples;
          ++node.class_counts[label];
          if (node.is_leaf()) break;
          i = row.features.values[node.feature] <= static_cast<double>(node.threshold)
                  ? static_cast<std::size_t>(node.left)
                  : static_cast<std::size_t>(node.right);
        }
      }
    }
  });
}

namespace {

// Weakest-link gain as an exact rational: g = num / (den * N).
struct Gain {
  std::int64_t num = 0;
  std::int64_t den = 1;
};

bool gain_less(const Gain& a, const Gain& b) {
  return static_cast<__int128>(a.num) * b.den < static_cast<__int128>(b.num) * a.den;
}

bool gain_equal(const Gain& a, const Gain& b) {
  return static_cast<__int128>(a.num) * b.den == static_cast<__int128>(b.num) * a.den;
}

}  // namespace

CcpSequence cost_complexity_sequence(const Tree& tree) {
  const std::size_t n = tree.node_count();
  CcpSequence seq;
  seq.collapse_alpha.assign(n, CcpSequence::kNever);

  const auto root_samples = static_cast<double>(tree.nodes[0].n_samples);
  std::vector<std::int64_t> miss(n);
  std::vector<std::int64_t> sub_miss(n);
  std::vector<std::int64_t> sub_leaves(n);
  std::vector<std::int32_t> parent(n, -1);
  std::vector<char> alive(n, 1);
  std::vector<char> leaf_now(n, 0);

  for (std::size_t i = 0; i < n; ++i) {
    const TreeNode& node = tree.nodes[i];
    std::uint32_t top = 0;
    for (const auto c : node.class_counts) top = std::max(top, c);
    miss[i] = static_cast<std::int64_t>(node.n_samples) - top;
    leaf_now[i] = node.is_leaf() ? 1 : 0;
    if (!node.is_leaf()) {
      parent[node.left] = static_cast<std::int32_t>(i);
      parent[node.right] = static_cast<std::int32_t>(i);
    }
  }
  // Preorder layout puts children after parents, so a reverse sweep is a
  // valid postorder aggregation.
  for (std::size_t r = n; r-- > 0;) {
    if (tree.nodes[r].is_leaf()) {
      sub_miss[r] = miss[r];
      sub_leaves[r] = 1;
    } else {
      sub_miss[r] = sub_miss[tree.nodes[r].left] + sub_miss[tree.nodes[r].right];
      sub_leaves[r] = sub_leaves[tree.nodes[r].left] + sub_leaves[tree.nodes[r].right];
    }
  }

  std::uint32_t alive_count = static_cast<std::uint32_t>(n);
  auto record = [&](double alpha) {
    const auto leaves = static_cast<std::uint32_t>(sub_leaves[0]);
    if (!seq.steps.empty() && seq.steps.back().alpha == alpha) {
      seq.steps.back().leaf_count = leaves;
      seq.steps.back().node_count = alive_count;
    } else {
      seq.steps.push_back({alpha, leaves, alive_count});
    }
  };

  if (leaf_now[0]) {
    seq.steps.push_back({0.0, 1, 1});
    return seq;
  }

  std::vector<std::size_t> min_set;
  while (!leaf_now[0]) {
    Gain min_gain;
    bool have_min = false;
    min_set.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (!alive[i] || leaf_now[i]) continue;
      const Gain g{miss[i] - sub_miss[i], sub_leaves[i] - 1};
      if (!have_min || gain_less(g, min_gain)) {
        min_gain = g;
        have_min = true;
        min_set.clear();
        min_set.push_back(i);
      } else if (gain_equal(g, min_gain)) {
        min_set.push_back(i);
      }
    }
    const double alpha =
        static_cast<double>(min_gain.num) / (static_cast<double>(min_gain.den) * root_samples);
    if (seq.steps.empty() && alpha > 0.0) record(0.0);

    for (const std::size_t t : min_set) {
      if (!alive[t] || leaf_now[t]) continue;  // subsumed by an ancestor this round
      // Collapse the subtree rooted at t into a leaf.
      const std::int64_t delta_leaves = sub_leaves[t] - 1;
      const std::int64_t delta_miss = miss[t] - sub_miss[t];
      // Mark descendants dead (preorder: contiguous walk via explicit stack).
      std::vector<std::size_t> stack = {static_cast<std::size_t>(tree.nodes[t].left),
                                        static_cast<std::size_t>(tree.nodes[t].right)};
      std::uint32_t removed = 0;
      while (!stack.empty()) {
        const std::size_t u = stack.back();
        stack.pop_back();
        alive[u] = 0;
        ++removed;
        if (!tree.nodes[u].is_leaf() && !leaf_now[u]) {
          seq.collapse_alpha[u] = alpha;
          stack.push_back(static_cast<std::size_t>(tree.nodes[u].left));
          stack.push_back(static_cast<std::size_t>(tree.nodes[u].right));
        }
      }
      alive_count -= removed;
      leaf_now[t] = 1;
      seq.collapse_alpha[t] = alpha;
      sub_leaves[t] = 1;
      sub_miss[t] = miss[t];
      for (std::int32_t a = parent[t]; a >= 0; a = parent[a]) {
        sub_leaves[a] -= delta_leaves;
        sub_miss[a] += delta_miss;
      }
    }
    record(alpha);
  }
  return seq;
}

namespace {

std::int32_t copy_pruned(const Tree& src, const CcpSequence& seq, double alpha,
                         std::size_t from, Tree& dst) {
  const auto index = static_cast<std::int32_t>(dst.nodes.size());
  const TreeNode& node = src.nodes[from];
  TreeNode copy;
  copy.n_samples = node.n_samples;
  copy.class_counts = node.class_counts;
  dst.nodes.push_back(std::move(copy));
  const bool keep_internal = !node.is_leaf() && seq.collapse_alpha[from] > alpha;
  if (keep_internal) {
    dst.nodes[index].feature = node.feature;
    dst.nodes[index].threshold = node.threshold;
    const std::int32_t left =
        copy_pruned(src, seq, alpha, static_cast<std::size_t>(node.left), dst);
    const std::int32_t right =
        copy_pruned(src, seq, alpha, static_cast<std::size_t>(node.right), dst);
    dst.nodes[index].left = left;
    dst.nodes[index].right = right;
  }
  return index;
}

}  // namespace

Tree prune_at_alpha(const Tree& tree, const CcpSequence& seq, double alpha) {
  if (alpha < 0.0) throw std::invalid_argument("prune_at_alpha: alpha must be >= 0");
  Tree pruned;
  pruned.n_classes = tree.n_classes;
  copy_pruned(tree, seq, alpha, 0, pruned);
  return pruned;
}

Tree prune_at_alpha(const Tree& tree, double alpha) {
  return prune_at_alpha(tree, cost_complexity_sequence(tree), alpha);
}

ForestModel prune_forest_at_alpha(const ForestModel& forest, double alpha) {
  ForestModel pruned = forest;
  for (auto& trees : pruned.outputs) {
    for (auto& tree : trees) tree = prune_at_alpha(tree, alpha);
  }
  return pruned;
}

std::vector<double> merged_critical_alphas(const ForestModel& forest) {
  std::vector<double> alphas = {0.0};
  for (const auto& trees : forest.outputs) {
    for (const auto& tree : trees) {
      const auto seq = cost_complexity_sequence(tree);
      for (const auto& step : seq.steps) alphas.push_back(step.alpha);
    }
  }
  std::sort(alphas.begin(), alphas.end());
  alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());
  return alphas;
}

BudgetResult prune_to_budget(const ForestModel& forest, std::uint64_t budget_bytes) {
  const std::uint64_t floor_bytes = kNodeBytes * forest.total_trees();
  if (forest.total_trees() == 0) throw std::invalid_argument("prune_to_budget: empty forest");
  if (budget_bytes < floor_bytes) {
    throw std::invalid_argument(
        "prune_to_budget: budget " + std::to_string(budget_bytes) +
        " B is below the minimum of " + std::to_string(floor_bytes) +
        " B (9 bytes per root leaf)");
  }
  if (kNodeBytes * forest.total_nodes() <= budget_bytes) {
    return {forest, 0.0};
  }

  // Cache per-tree schedules; each records node counts after every step, so
  // sizes at any alpha come from binary searches instead of re-pruning.
  std::vector<const Tree*> trees;
  for (const auto& out : forest.outputs) {
    for (const auto& tree : out) trees.push_back(&tree);
  }
  std::vector<CcpSequence> seqs(trees.size());
  parallel_chunks(trees.size(), 0, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) seqs[i] = cost_complexity_sequence(*trees[i]);
  });

  std::vector<double> alphas = {0.0};
  for (const auto& seq : seqs) {
    for (const auto& step : seq.steps) alphas.push_back(step.alpha);
  }
  std::sort(alphas.begin(), alphas.end());
  alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());

  auto nodes_at = [&](double alpha) {
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < trees.size(); ++i) {
      const auto& steps = seqs[i].steps;
      // Last step with step.alpha <= alpha; steps[0].alpha == 0 <= alpha.
      auto it = std::upper_bound(steps.begin(), steps.end(), alpha,
                                 [](double a, const CcpStep& s) { return a < s.alpha; });
      total += (it - 1)->node_count;
    }
    return total;
  };

  // Smallest critical alpha whose packed payload fits.
  std::size_t lo = 0, hi = alphas.size() - 1;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (kNodeBytes * nodes_at(alphas[mid]) <= budget_bytes) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  const double alpha = alphas[lo];

  BudgetResult result;
  result.alpha = alpha;
  result.forest = forest;
  std::size_t flat = 0;
  for (auto& out : result.forest.outputs) {
    for (auto& tree : out) {
      tree = prune_at_alpha(tree, seqs[flat], alpha);
      ++flat;
    }
  }
  return result;
}

std::string forest_debug_json(const ForestModel& forest) {
  std::string out;
  out += "{\"scheme\":\"";
  out += to_string(forest.scheme);
  out += "\",\"n_classes\":" + std::to_string(forest.n_classes);
  out += ",\"n_outputs\":" + std::to_string(forest.n_outputs);
  out += ",\"n_features\":" + std::to_string(forest.n_features);
  out += ",\"lane_width\":" + std::to_string(forest.lane_width);
  out += ",\"seed\":" + std::to_string(forest.seed);
  out += ",\"outputs\":[";
  for (std::size_t o = 0; o < forest.outputs.size(); ++o) {
    if (o) out += ',';
    out += '[';
    for (std::size_t t = 0; t < forest.outputs[o].size(); ++t) {
      if (t) out += ',';
      out += "{\"nodes\":[";
      const auto& nodes = forest.outputs[o][t].nodes;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (i) out += ',';
        char buf[96];
        std::snprintf(buf, sizeof(buf), "[%d,%d,%u,%.9g,%u]", nodes[i].left,
                      nodes[i].right, nodes[i].feature,
                      static_cast<double>(nodes[i].threshold), nodes[i].n_samples);
        out += buf;
      }
      out += "]}";
    }
    out += ']';
  }
  out += "]}";
  return out;
}

}  // namespace artree
